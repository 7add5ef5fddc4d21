#include "noisesteer/numerics/dense_net.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "noisesteer/errors.hpp"
#include "noisesteer/numerics/archive.hpp"
#include "noisesteer/numerics/kernels.hpp"

namespace noisesteer {

namespace {

constexpr std::string_view kFormat = "noisesteer-densenet";
constexpr int kVersion = 1;

void apply_activation(Activation a, std::span<double> v) {
  switch (a) {
    case Activation::identity:
      return;
    case Activation::relu:
      for (auto& x : v) x = x > 0.0 ? x : 0.0;
      return;
    case Activation::tanh:
      for (auto& x : v) x = std::tanh(x);
      return;
  }
}

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::identity:
      return "identity";
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
  }
  return "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw FormatError("unknown activation '" + std::string(name) + "'");
}

DenseNet::DenseNet(std::vector<std::size_t> sizes, std::vector<Activation> activations) {
  if (sizes.size() < 2) throw ConfigError("DenseNet needs at least an input and an output size");
  if (activations.size() != sizes.size() - 1) throw ConfigError("DenseNet needs one activation per layer");
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    if (sizes[l] == 0 || sizes[l + 1] == 0) throw ConfigError("DenseNet layer sizes must be positive");
    layers_.push_back({sizes[l], sizes[l + 1], activations[l], offset});
    offset += sizes[l] * sizes[l + 1] + sizes[l + 1];
  }
  params_.assign(offset, 0.0);
}

DenseNet DenseNet::make(std::vector<std::size_t> sizes, Activation hidden, Activation output, Rng& rng) {
  std::vector<Activation> acts(sizes.size() - 1, hidden);
  acts.back() = output;
  DenseNet net(std::move(sizes), std::move(acts));
  for (const auto& layer : net.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
    const std::size_t n = layer.in * layer.out + layer.out;
    for (std::size_t i = 0; i < n; ++i) net.params_[layer.offset + i] = rng.uniform(-bound, bound);
  }
  return net;
}

std::vector<std::size_t> DenseNet::layer_sizes() const {
  std::vector<std::size_t> s;
  if (layers_.empty()) return s;
  s.push_back(layers_.front().in);
  for (const auto& l : layers_) s.push_back(l.out);
  return s;
}

std::span<double> DenseNet::weights(std::size_t layer) {
  const auto& l = layers_.at(layer);
  return std::span<double>(params_).subspan(l.offset, l.in * l.out);
}

std::span<double> DenseNet::biases(std::size_t layer) {
  const auto& l = layers_.at(layer);
  return std::span<double>(params_).subspan(l.offset + l.in * l.out, l.out);
}

std::vector<double> DenseNet::forward(std::span<const double> x) const {
  if (x.size() != input_size()) {
    throw ShapeError("DenseNet input has " + std::to_string(x.size()) + " values, expected " +
                     std::to_string(input_size()));
  }
  const auto& k = kernels::active();
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (const auto& l : layers_) {
    next.resize(l.out);
    k.gemv(params_.data() + l.offset, l.out, l.in, cur.data(), params_.data() + l.offset + l.in * l.out,
           next.data());
    apply_activation(l.act, next);
    cur.swap(next);
  }
  return cur;
}

std::vector<double> DenseNet::forward(std::span<const double> x, Tape& tape) const {
  if (x.size() != input_size()) {
    throw ShapeError("DenseNet input has " + std::to_string(x.size()) + " values, expected " +
                     std::to_string(input_size()));
  }
  const auto& k = kernels::active();
  tape.values.resize(layers_.size() + 1);
  tape.values[0].assign(x.begin(), x.end());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    auto& out = tape.values[i + 1];
    out.resize(l.out);
    k.gemv(params_.data() + l.offset, l.out, l.in, tape.values[i].data(),
           params_.data() + l.offset + l.in * l.out, out.data());
    apply_activation(l.act, out);
  }
  return tape.values.back();
}

void DenseNet::backward(const Tape& tape, std::span<const double> dout, std::span<double> grad,
                        std::span<double> dinput) const {
  if (tape.values.size() != layers_.size() + 1) throw ShapeError("tape does not belong to this network");
  if (dout.size() != output_size()) throw ShapeError("backward: output gradient has wrong length");
  if (!grad.empty() && grad.size() != params_.size()) throw ShapeError("backward: gradient buffer has wrong length");
  if (!dinput.empty() && dinput.size() != input_size()) throw ShapeError("backward: input gradient has wrong length");

  const auto& k = kernels::active();
  std::vector<double> delta(dout.begin(), dout.end());
  std::vector<double> prev;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const auto& l = layers_[i];
    const auto& y = tape.values[i + 1];
    switch (l.act) {
      case Activation::identity:
        break;
      case Activation::relu:
        for (std::size_t j = 0; j < l.out; ++j) {
          if (y[j] <= 0.0) delta[j] = 0.0;
        }
        break;
      case Activation::tanh:
        for (std::size_t j = 0; j < l.out; ++j) delta[j] *= 1.0 - y[j] * y[j];
        break;
    }
    if (!grad.empty()) {
      k.ger(grad.data() + l.offset, l.out, l.in, delta.data(), tape.values[i].data());
      double* gb = grad.data() + l.offset + l.in * l.out;
      for (std::size_t j = 0; j < l.out; ++j) gb[j] += delta[j];
    }
    if (i == 0 && dinput.empty()) break;
    prev.assign(l.in, 0.0);
    k.gemv_t(params_.data() + l.offset, l.out, l.in, delta.data(), prev.data());
    delta.swap(prev);
  }
  if (!dinput.empty()) std::copy(delta.begin(), delta.end(), dinput.begin());
}

std::uint64_t fnv1a(std::span<const double> values, std::uint64_t h) {
  for (double v : values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof v);
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::uint64_t DenseNet::checksum() const {
  std::vector<double> shape;
  for (const auto& l : layers_) {
    shape.push_back(static_cast<double>(l.in));
    shape.push_back(static_cast<double>(l.out));
    shape.push_back(static_cast<double>(static_cast<int>(l.act)));
  }
  return fnv1a(params_, fnv1a(shape));
}

void DenseNet::save(std::ostream& os) const {
  ArchiveWriter w(os);
  w.tag(kFormat, kVersion);
  std::vector<double> sizes;
  for (auto s : layer_sizes()) sizes.push_back(static_cast<double>(s));
  w.put("sizes", sizes);
  std::string acts;
  for (const auto& l : layers_) {
    if (!acts.empty()) acts += ' ';
    acts += activation_name(l.act);
  }
  w.put("activations", std::string_view(acts));
  w.put("params", std::span<const double>(params_));
}

DenseNet DenseNet::load(std::istream& is) {
  ArchiveReader r(is);
  r.expect_tag(kFormat, kVersion);
  std::vector<std::size_t> sizes;
  for (double s : r.get_vector("sizes")) sizes.push_back(static_cast<std::size_t>(s));
  std::vector<Activation> acts;
  {
    std::string names = r.get_string("activations");
    std::size_t pos = 0;
    while (pos < names.size()) {
      auto sp = names.find(' ', pos);
      if (sp == std::string::npos) sp = names.size();
      acts.push_back(parse_activation(std::string_view(names).substr(pos, sp - pos)));
      pos = sp + 1;
    }
  }
  DenseNet net(sizes, acts);
  auto params = r.get_vector("params");
  if (params.size() != net.num_params()) throw FormatError("parameter count does not match layer sizes");
  net.params_ = std::move(params);
  return net;
}

bool DenseNet::operator==(const DenseNet& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].in != other.layers_[i].in || layers_[i].out != other.layers_[i].out ||
        layers_[i].act != other.layers_[i].act) {
      return false;
    }
  }
  return std::memcmp(params_.data(), other.params_.data(), params_.size() * sizeof(double)) == 0;
}

ValueAndGrad value_and_grad(const DenseNet& net, std::span<const double> x, const OutputLoss& loss) {
  DenseNet::Tape tape;
  const auto out = net.forward(x, tape);
  std::vector<double> dout(out.size(), 0.0);
  const double value = loss(out, dout);
  if (!std::isfinite(value)) {
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      if (!all_finite(tape.values[l + 1])) throw NumericError("non-finite activation", l);
    }
    throw NumericError("non-finite loss", net.num_layers());
  }
  ValueAndGrad r;
  r.value = value;
  r.grad.assign(net.num_params(), 0.0);
  net.backward(tape, dout, r.grad);
  return r;
}

}  // namespace noisesteer
