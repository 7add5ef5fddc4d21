#include "noisesteer/flow/normalizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "noisesteer/errors.hpp"
#include "noisesteer/numerics/archive.hpp"

namespace noisesteer {

Normalizer Normalizer::identity(std::size_t n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)}; }

Normalizer Normalizer::fit(const std::vector<std::vector<double>>& rows, double min_scale) {
  if (rows.empty()) throw ConfigError("cannot fit a normalizer on zero rows");
  const std::size_t n = rows.front().size();
  Normalizer out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (const auto& r : rows) {
    if (r.size() != n) throw ShapeError("normalizer rows have inconsistent length");
    for (std::size_t i = 0; i < n; ++i) out.mean[i] += r[i];
  }
  for (auto& m : out.mean) m /= static_cast<double>(rows.size());
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < n; ++i) out.scale[i] += (r[i] - out.mean[i]) * (r[i] - out.mean[i]);
  }
  for (auto& s : out.scale) s = std::max(std::sqrt(s / static_cast<double>(rows.size())), min_scale);
  return out;
}

Normalizer Normalizer::fit_grouped(const std::vector<std::vector<double>>& rows, std::size_t group, double min_scale) {
  if (rows.empty()) throw ConfigError("cannot fit a normalizer on zero rows");
  const std::size_t n = rows.front().size();
  if (group == 0 || n % group != 0) throw ShapeError("row length is not a multiple of the group size");
  std::vector<double> mean(group, 0.0), var(group, 0.0);
  double count = 0.0;
  for (const auto& r : rows) {
    if (r.size() != n) throw ShapeError("normalizer rows have inconsistent length");
    for (std::size_t i = 0; i < n; ++i) mean[i % group] += r[i];
  }
  count = static_cast<double>(rows.size() * (n / group));
  for (auto& m : mean) m /= count;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < n; ++i) var[i % group] += (r[i] - mean[i % group]) * (r[i] - mean[i % group]);
  }
  Normalizer out{std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    out.mean[i] = mean[i % group];
    out.scale[i] = std::max(std::sqrt(var[i % group] / count), min_scale);
  }
  return out;
}

std::vector<double> Normalizer::apply(std::span<const double> x) const {
  if (x.size() != mean.size()) throw ShapeError("normalizer input has wrong length");
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean[i]) / scale[i];
  return y;
}

std::vector<double> Normalizer::invert(std::span<const double> x) const {
  if (x.size() != mean.size()) throw ShapeError("normalizer input has wrong length");
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * scale[i] + mean[i];
  return y;
}

void Normalizer::save(ArchiveWriter& w, const char* prefix) const {
  w.put(std::string(prefix) + "_mean", std::span<const double>(mean));
  w.put(std::string(prefix) + "_scale", std::span<const double>(scale));
}

Normalizer Normalizer::load(ArchiveReader& r, const char* prefix) {
  Normalizer n;
  n.mean = r.get_vector(std::string(prefix) + "_mean");
  n.scale = r.get_vector(std::string(prefix) + "_scale");
  if (n.mean.size() != n.scale.size()) throw FormatError("normalizer mean/scale length mismatch");
  return n;
}

}  // namespace noisesteer
