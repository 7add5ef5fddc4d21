#pragma once
// Gaussian noise actor with tanh squashing: u = m + sigma * eps,
// z = c * tanh(u / c), so every emitted noise satisfies |z_i| < c.
//
// log psi(z | s) = sum_i [ -eps_i^2 / 2 - log sigma_i - log(2 pi) / 2
//                          - log(1 - tanh^2(u_i / c)) ]

#include <cstddef>
#include <span>
#include <vector>

#include "noisesteer/flow/normalizer.hpp"
#include "noisesteer/numerics/dense_net.hpp"
#include "noisesteer/numerics/rng.hpp"

namespace noisesteer {

class ArchiveWriter;
class ArchiveReader;

struct ActorConfig {
  std::vector<std::size_t> hidden{64, 64};
  double squash = 3.0;
  double log_std_min = -20.0;
  double log_std_max = 2.0;
  /// Initial value of the log-std head (its output-layer bias).
  double init_log_std = 0.0;
};

/// log(1 - tanh(x)^2), stable for large |x|.
double log1m_tanh_sq(double x);

class NoiseActor {
 public:
  NoiseActor() = default;
  /// Hidden layers are fan-in initialized; the output layer starts at zero
  /// except for the log-std bias, so the initial mean noise is 0 and the
  /// initial std is exp(init_log_std).
  NoiseActor(std::size_t state_dim, std::size_t noise_dim, const ActorConfig& cfg, Normalizer state_norm, Rng& rng);

  struct Sample {
    std::vector<double> z;
    double log_prob = 0.0;
    std::vector<double> u;
    std::vector<double> eps;
    std::vector<double> mean;
    std::vector<double> log_std;  // clamped
  };

  /// Reparameterized sample for a given standard-normal `eps`.
  Sample sample_with(std::span<const double> state, std::span<const double> eps) const;
  Sample sample(std::span<const double> state, Rng& rng) const;
  /// Sample from an already computed head().
  Sample from_head(std::span<const double> head, std::span<const double> eps) const;
  /// Squashed mean c * tanh(m / c); the deterministic policy.
  std::vector<double> mean_noise(std::span<const double> state) const;

  std::size_t state_dim() const { return state_dim_; }
  std::size_t noise_dim() const { return noise_dim_; }
  double squash() const { return cfg_.squash; }
  const ActorConfig& config() const { return cfg_; }
  const DenseNet& net() const { return net_; }
  DenseNet& mutable_net() { return net_; }
  const Normalizer& state_normalizer() const { return state_norm_; }

  /// Raw network head and tape for a state: [mean | raw log_std].
  std::vector<double> head(std::span<const double> state, DenseNet::Tape* tape = nullptr) const;

  void save(ArchiveWriter& w) const;
  void load(ArchiveReader& r);
  bool operator==(const NoiseActor& o) const;

 private:
  std::size_t state_dim_ = 0;
  std::size_t noise_dim_ = 0;
  ActorConfig cfg_;
  Normalizer state_norm_;
  DenseNet net_;
};

}  // namespace noisesteer
