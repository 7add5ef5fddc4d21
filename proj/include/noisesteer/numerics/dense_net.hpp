#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "noisesteer/numerics/rng.hpp"

namespace noisesteer {

enum class Activation { identity, relu, tanh };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

/// Multilayer perceptron with all parameters in one contiguous buffer.
///
/// Layer l maps R^{in_l} -> R^{out_l} as act_l(W_l x + b_l); W_l is stored
/// row-major immediately followed by b_l. Gradients share that layout, so an
/// optimizer can treat parameters and gradients as flat vectors.
class DenseNet {
 public:
  struct Layer {
    std::size_t in = 0;
    std::size_t out = 0;
    Activation act = Activation::identity;
    std::size_t offset = 0;  // start of W in params(); b follows at offset + in*out
  };

  /// Activations recorded by a forward pass; needed for backward().
  struct Tape {
    std::vector<std::vector<double>> values;  // values[0] = input, values[l+1] = output of layer l
  };

  DenseNet() = default;
  /// Zero-initialized network. `activations.size()` must be `sizes.size() - 1`.
  DenseNet(std::vector<std::size_t> sizes, std::vector<Activation> activations);

  /// Fan-in scaled uniform init, U(-1/sqrt(in), 1/sqrt(in)) for weights and biases.
  static DenseNet make(std::vector<std::size_t> sizes, Activation hidden, Activation output, Rng& rng);

  std::size_t input_size() const { return layers_.empty() ? 0 : layers_.front().in; }
  std::size_t output_size() const { return layers_.empty() ? 0 : layers_.back().out; }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t num_params() const { return params_.size(); }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<std::size_t> layer_sizes() const;

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::span<double> weights(std::size_t layer);
  std::span<double> biases(std::size_t layer);

  std::vector<double> forward(std::span<const double> x) const;
  std::vector<double> forward(std::span<const double> x, Tape& tape) const;

  /// Reverse pass for dL/d(output) = `dout`. Parameter gradients are ADDED to
  /// `grad` (skipped if empty); dL/d(input) is WRITTEN to `dinput` (skipped if empty).
  void backward(const Tape& tape, std::span<const double> dout, std::span<double> grad,
                std::span<double> dinput = {}) const;

  /// Stable 64-bit fingerprint of architecture and parameter bits.
  std::uint64_t checksum() const;

  void save(std::ostream& os) const;
  static DenseNet load(std::istream& is);

  bool operator==(const DenseNet& other) const;

 private:
  std::vector<Layer> layers_;
  std::vector<double> params_;
};

struct ValueAndGrad {
  double value = 0.0;
  std::vector<double> grad;  // same layout as DenseNet::params()
};

/// Scalar loss of the network output; writes dL/d(output) into its second argument.
using OutputLoss = std::function<double(std::span<const double> output, std::span<double> doutput)>;

/// Evaluates loss(net(x)) and its gradient w.r.t. every parameter. A non-finite
/// loss raises NumericError whose index is the first layer with a non-finite
/// activation (or num_layers() when the loss itself produced it).
ValueAndGrad value_and_grad(const DenseNet& net, std::span<const double> x, const OutputLoss& loss);

/// FNV-1a over raw bytes; used for parameter freeze checks.
std::uint64_t fnv1a(std::span<const double> values, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace noisesteer
