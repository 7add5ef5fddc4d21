#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "noisesteer/flow/demo_set.hpp"
#include "noisesteer/flow/normalizer.hpp"
#include "noisesteer/numerics/dense_net.hpp"

namespace noisesteer {

/// Conditional flow decoder: a velocity network v(z, t, s) integrated with K
/// explicit Euler steps from noise z_0 (t = 0) to an action chunk (t = 1).
///
/// The decoder works in normalized action units: noise, intermediate states
/// and the decoded chunk all live in the space defined by action_normalizer().
/// States passed to the public API are raw environment states; they are
/// normalized internally before entering the network, whose input is the
/// concatenation (z, t, s_normalized).
class FlowDecoder {
 public:
  FlowDecoder() = default;
  FlowDecoder(DenseNet velocity_net, std::size_t steps, ChunkShape shape, std::size_t state_dim,
              Normalizer state_norm, Normalizer action_norm);

  /// Velocity net of sizes chunk+1+state_dim -> hidden... -> chunk with tanh hidden units.
  static FlowDecoder make(ChunkShape shape, std::size_t state_dim, std::size_t steps,
                          const std::vector<std::size_t>& hidden, Normalizer state_norm, Normalizer action_norm,
                          Rng& rng);

  std::size_t steps() const { return steps_; }
  /// 1/K; derived, never stored.
  double dt() const { return 1.0 / static_cast<double>(steps_); }
  /// t_k = k/K for k = 0..K.
  double grid_time(std::size_t k) const { return static_cast<double>(k) / static_cast<double>(steps_); }
  const ChunkShape& shape() const { return shape_; }
  std::size_t noise_dim() const { return shape_.size(); }
  std::size_t state_dim() const { return state_dim_; }

  const DenseNet& velocity_net() const { return velocity_; }
  DenseNet& mutable_velocity_net() { return velocity_; }
  const Normalizer& state_normalizer() const { return state_norm_; }
  const Normalizer& action_normalizer() const { return action_norm_; }

  std::vector<double> normalize_state(std::span<const double> s) const { return state_norm_.apply(s); }
  std::vector<double> normalize_action(std::span<const double> a) const { return action_norm_.apply(a); }
  std::vector<double> denormalize_action(std::span<const double> a) const { return action_norm_.invert(a); }

  /// v(z, t, s). Throws DomainError for t outside [0, 1].
  std::vector<double> velocity(std::span<const double> z, double t, std::span<const double> state) const;
  /// Same as velocity() with an already-normalized state.
  std::vector<double> velocity_normalized(std::span<const double> z, double t,
                                          std::span<const double> state_n) const;
  /// Velocity with a recorded tape, for vector-Jacobian products.
  std::vector<double> velocity_taped(std::span<const double> z, double t, std::span<const double> state_n,
                                     DenseNet::Tape& tape) const;
  /// (dv/dz)^T w using a tape from velocity_taped().
  std::vector<double> velocity_vjp(const DenseNet::Tape& tape, std::span<const double> w) const;

  /// u_K from u_0 = z0 via u_k = u_{k-1} + dt v(u_{k-1}, t_{k-1}, s).
  std::vector<double> decode(std::span<const double> state, std::span<const double> z0) const;
  /// All K+1 iterates u_0..u_K.
  std::vector<std::vector<double>> decode_trace(std::span<const double> state, std::span<const double> z0) const;
  /// Continue a trajectory from iterate u_k (k steps already taken) to u_K.
  std::vector<double> decode_from(std::span<const double> state, std::span<const double> u_k, std::size_t k) const;

  struct DecodeVjp {
    std::vector<double> action;
    std::vector<double> grad_noise;
  };
  /// Decodes z0, asks `loss_grad` for dL/da at the decoded chunk, and
  /// back-propagates it to dL/dz0 through all K frozen steps.
  DecodeVjp decode_vjp(std::span<const double> state, std::span<const double> z0,
                       const std::function<void(std::span<const double> a, std::span<double> dl_da)>& loss_grad) const;

  std::uint64_t checksum() const;

  void save(std::ostream& os) const;
  static FlowDecoder load(std::istream& is);
  void save(const std::string& path) const;
  static FlowDecoder load(const std::string& path);

 private:
  void integrate(std::span<double> u, std::span<const double> state_n, std::size_t from_step,
                 std::vector<std::vector<double>>* trace) const;
  std::vector<double> make_input(std::span<const double> z, double t, std::span<const double> state_n) const;

  DenseNet velocity_;
  std::size_t steps_ = 10;
  ChunkShape shape_;
  std::size_t state_dim_ = 0;
  Normalizer state_norm_;
  Normalizer action_norm_;
};

}  // namespace noisesteer
