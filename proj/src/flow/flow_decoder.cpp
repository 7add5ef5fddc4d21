#include "noisesteer/flow/flow_decoder.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "noisesteer/errors.hpp"
#include "noisesteer/numerics/archive.hpp"

namespace noisesteer {

namespace {

constexpr std::string_view kFormat = "noisesteer-flow-decoder";

void check_finite(std::span<const double> v, std::size_t step) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError("non-finite decoder iterate", step);
  }
}

}  // namespace

FlowDecoder::FlowDecoder(DenseNet velocity_net, std::size_t steps, ChunkShape shape, std::size_t state_dim,
                         Normalizer state_norm, Normalizer action_norm)
    : velocity_(std::move(velocity_net)),
      steps_(steps),
      shape_(shape),
      state_dim_(state_dim),
      state_norm_(std::move(state_norm)),
      action_norm_(std::move(action_norm)) {
  if (steps_ == 0) throw ConfigError("decoder needs at least one integration step");
  if (shape_.size() == 0) throw ConfigError("empty chunk shape");
  if (velocity_.input_size() != shape_.size() + 1 + state_dim_) {
    throw ShapeError("velocity net input must be chunk + 1 + state_dim");
  }
  if (velocity_.output_size() != shape_.size()) throw ShapeError("velocity net output must equal chunk size");
  if (state_norm_.size() != state_dim_) throw ShapeError("state normalizer has wrong dimension");
  if (action_norm_.size() != shape_.size()) throw ShapeError("action normalizer has wrong dimension");
}

FlowDecoder FlowDecoder::make(ChunkShape shape, std::size_t state_dim, std::size_t steps,
                              const std::vector<std::size_t>& hidden, Normalizer state_norm, Normalizer action_norm,
                              Rng& rng) {
  std::vector<std::size_t> sizes{shape.size() + 1 + state_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(shape.size());
  return FlowDecoder(DenseNet::make(sizes, Activation::tanh, Activation::identity, rng), steps, shape, state_dim,
                     std::move(state_norm), std::move(action_norm));
}

std::vector<double> FlowDecoder::make_input(std::span<const double> z, double t,
                                            std::span<const double> state_n) const {
  if (z.size() != noise_dim()) throw ShapeError("noise has wrong dimension");
  if (state_n.size() != state_dim_) throw ShapeError("state has wrong dimension");
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("flow time must lie in [0, 1]");
  std::vector<double> in;
  in.reserve(velocity_.input_size());
  in.insert(in.end(), z.begin(), z.end());
  in.push_back(t);
  in.insert(in.end(), state_n.begin(), state_n.end());
  return in;
}

std::vector<double> FlowDecoder::velocity(std::span<const double> z, double t, std::span<const double> state) const {
  if (state.size() != state_dim_) throw ShapeError("state has wrong dimension");
  return velocity_normalized(z, t, normalize_state(state));
}

std::vector<double> FlowDecoder::velocity_normalized(std::span<const double> z, double t,
                                                     std::span<const double> state_n) const {
  return velocity_.forward(make_input(z, t, state_n));
}

std::vector<double> FlowDecoder::velocity_taped(std::span<const double> z, double t, std::span<const double> state_n,
                                                DenseNet::Tape& tape) const {
  return velocity_.forward(make_input(z, t, state_n), tape);
}

std::vector<double> FlowDecoder::velocity_vjp(const DenseNet::Tape& tape, std::span<const double> w) const {
  std::vector<double> din(velocity_.input_size());
  velocity_.backward(tape, w, {}, din);
  din.resize(noise_dim());
  return din;
}

void FlowDecoder::integrate(std::span<double> u, std::span<const double> state_n, std::size_t from_step,
                            std::vector<std::vector<double>>* trace) const {
  const double h = dt();
  for (std::size_t k = from_step + 1; k <= steps_; ++k) {
    const auto v = velocity_normalized(u, grid_time(k - 1), state_n);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += h * v[i];
    check_finite(u, k);
    if (trace) trace->emplace_back(u.begin(), u.end());
  }
}

std::vector<double> FlowDecoder::decode(std::span<const double> state, std::span<const double> z0) const {
  if (z0.size() != noise_dim()) throw ShapeError("noise has wrong dimension");
  check_finite(z0, 0);
  const auto sn = normalize_state(state);
  std::vector<double> u(z0.begin(), z0.end());
  integrate(u, sn, 0, nullptr);
  return u;
}

std::vector<std::vector<double>> FlowDecoder::decode_trace(std::span<const double> state,
                                                           std::span<const double> z0) const {
  if (z0.size() != noise_dim()) throw ShapeError("noise has wrong dimension");
  check_finite(z0, 0);
  const auto sn = normalize_state(state);
  std::vector<std::vector<double>> trace;
  trace.reserve(steps_ + 1);
  trace.emplace_back(z0.begin(), z0.end());
  std::vector<double> u(z0.begin(), z0.end());
  integrate(u, sn, 0, &trace);
  return trace;
}

std::vector<double> FlowDecoder::decode_from(std::span<const double> state, std::span<const double> u_k,
                                             std::size_t k) const {
  if (k > steps_) throw DomainError("decode_from: step index beyond K");
  if (u_k.size() != noise_dim()) throw ShapeError("iterate has wrong dimension");
  const auto sn = normalize_state(state);
  std::vector<double> u(u_k.begin(), u_k.end());
  integrate(u, sn, k, nullptr);
  return u;
}

FlowDecoder::DecodeVjp FlowDecoder::decode_vjp(
    std::span<const double> state, std::span<const double> z0,
    const std::function<void(std::span<const double>, std::span<double>)>& loss_grad) const {
  if (z0.size() != noise_dim()) throw ShapeError("noise has wrong dimension");
  const auto sn = normalize_state(state);
  const double h = dt();
  std::vector<DenseNet::Tape> tapes(steps_);
  std::vector<double> u(z0.begin(), z0.end());
  for (std::size_t k = 1; k <= steps_; ++k) {
    const auto v = velocity_taped(u, grid_time(k - 1), sn, tapes[k - 1]);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += h * v[i];
    check_finite(u, k);
  }
  DecodeVjp out;
  out.action = u;
  std::vector<double> g(u.size(), 0.0);
  loss_grad(out.action, g);
  // u_k = u_{k-1} + h v(u_{k-1})  =>  g_{k-1} = g_k + h J_v^T g_k
  for (std::size_t k = steps_; k >= 1; --k) {
    const auto jt = velocity_vjp(tapes[k - 1], g);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += h * jt[i];
  }
  out.grad_noise = std::move(g);
  return out;
}

std::uint64_t FlowDecoder::checksum() const {
  std::vector<double> meta{static_cast<double>(steps_), static_cast<double>(shape_.horizon),
                           static_cast<double>(shape_.action_dim), static_cast<double>(state_dim_)};
  std::uint64_t h = fnv1a(meta, velocity_.checksum());
  h = fnv1a(state_norm_.mean, h);
  h = fnv1a(state_norm_.scale, h);
  h = fnv1a(action_norm_.mean, h);
  return fnv1a(action_norm_.scale, h);
}

void FlowDecoder::save(std::ostream& os) const {
  ArchiveWriter w(os);
  w.tag(kFormat, 1);
  w.put_u64("steps", steps_);
  w.put_u64("horizon", shape_.horizon);
  w.put_u64("action_dim", shape_.action_dim);
  w.put_u64("state_dim", state_dim_);
  state_norm_.save(w, "state");
  action_norm_.save(w, "action");
  velocity_.save(os);
}

FlowDecoder FlowDecoder::load(std::istream& is) {
  ArchiveReader r(is);
  r.expect_tag(kFormat, 1);
  const auto steps = r.get_u64("steps");
  ChunkShape shape{r.get_u64("horizon"), r.get_u64("action_dim")};
  const auto state_dim = r.get_u64("state_dim");
  auto sn = Normalizer::load(r, "state");
  auto an = Normalizer::load(r, "action");
  auto net = DenseNet::load(is);
  return FlowDecoder(std::move(net), steps, shape, state_dim, std::move(sn), std::move(an));
}

void FlowDecoder::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  save(os);
}

FlowDecoder FlowDecoder::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path);
  return load(is);
}

}  // namespace noisesteer
