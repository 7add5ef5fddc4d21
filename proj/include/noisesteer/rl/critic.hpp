#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "noisesteer/flow/normalizer.hpp"
#include "noisesteer/numerics/dense_net.hpp"

namespace noisesteer {

class ArchiveWriter;
class ArchiveReader;

/// Twin noise-space critics Q_1, Q_2 over (normalized state, noise) with
/// Polyak-averaged target copies.
class TwinCritic {
 public:
  TwinCritic() = default;
  TwinCritic(std::size_t state_dim, std::size_t noise_dim, const std::vector<std::size_t>& hidden,
             Normalizer state_norm, Rng& rng, Activation hidden_act = Activation::relu);

  std::vector<double> input(std::span<const double> state, std::span<const double> z) const;

  double q(std::size_t which, std::span<const double> state, std::span<const double> z) const;
  double target_q(std::size_t which, std::span<const double> state, std::span<const double> z) const;
  /// min(Q_1, Q_2) and min over the targets.
  double min_q(std::span<const double> state, std::span<const double> z) const;
  double min_target_q(std::span<const double> state, std::span<const double> z) const;

  /// target <- tau * online + (1 - tau) * target
  void polyak(double tau);

  DenseNet& net(std::size_t which) { return online_[which]; }
  const DenseNet& net(std::size_t which) const { return online_[which]; }
  const DenseNet& target(std::size_t which) const { return target_[which]; }
  DenseNet& mutable_target(std::size_t which) { return target_[which]; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t noise_dim() const { return noise_dim_; }

  std::uint64_t checksum() const;
  std::uint64_t target_checksum() const;

  void save(ArchiveWriter& w) const;
  void load(ArchiveReader& r);

  /// Critics built with the sized constructor since process start.
  static std::uint64_t constructed();

 private:
  std::size_t state_dim_ = 0;
  std::size_t noise_dim_ = 0;
  std::vector<std::size_t> hidden_;
  Activation act_ = Activation::relu;
  Normalizer state_norm_;
  DenseNet online_[2];
  DenseNet target_[2];
};

}  // namespace noisesteer
