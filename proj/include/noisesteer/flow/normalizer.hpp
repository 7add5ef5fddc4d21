#pragma once

#include <span>
#include <vector>

namespace noisesteer {

class ArchiveWriter;
class ArchiveReader;

/// Per-coordinate affine standardization, x_n = (x - mean) / scale.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Normalizer identity(std::size_t n);
  /// Fits mean and standard deviation over `rows`; scales are floored at
  /// `min_scale` so constant coordinates stay finite.
  static Normalizer fit(const std::vector<std::vector<double>>& rows, double min_scale = 1e-2);

  /// Statistics pooled over coordinates i, i + group, i + 2*group, ...; used
  /// for action chunks so every step of one action dimension shares a scale.
  static Normalizer fit_grouped(const std::vector<std::vector<double>>& rows, std::size_t group,
                                double min_scale = 1e-2);

  std::size_t size() const { return mean.size(); }
  std::vector<double> apply(std::span<const double> x) const;
  std::vector<double> invert(std::span<const double> x) const;

  void save(ArchiveWriter& w, const char* prefix) const;
  static Normalizer load(ArchiveReader& r, const char* prefix);
  bool operator==(const Normalizer&) const = default;
};

}  // namespace noisesteer
