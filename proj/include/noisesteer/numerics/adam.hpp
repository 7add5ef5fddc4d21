#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace noisesteer {

class ArchiveWriter;
class ArchiveReader;

/// Adaptive-moment optimizer state for one flat parameter vector.
struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step_count = 0;

  Adam() = default;
  explicit Adam(double learning_rate) : lr(learning_rate) {}

  /// One bias-corrected update of `params` (descent on `grads`). Moment arrays
  /// are sized lazily on first use. NaN/inf in `grads` raises NumericError
  /// with the offending element index before anything is modified.
  void step(std::span<double> params, std::span<const double> grads);

  void save(ArchiveWriter& w) const;
  void load(ArchiveReader& r);
};

}  // namespace noisesteer
