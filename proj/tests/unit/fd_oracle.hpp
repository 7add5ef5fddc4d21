#pragma once
// Test-only oracles: central finite differences and an independent dense
// forward pass written without the library's kernels.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "noisesteer/numerics/dense_net.hpp"

namespace testing_oracle {

inline constexpr double kFdStep = 1e-5;

/// Central differences of f at x, perturbing each coordinate in place.
inline std::vector<double> central_difference(const std::function<double()>& f, std::span<double> x,
                                              double h = kFdStep) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double fp = f();
    x[i] = saved - h;
    const double fm = f();
    x[i] = saved;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||, floor)
inline double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-8) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

/// Plain triple-loop forward pass reading weights straight from the flat
/// parameter layout.
inline std::vector<double> reference_forward(const noisesteer::DenseNet& net, std::span<const double> x) {
  std::vector<double> cur(x.begin(), x.end());
  const auto p = net.params();
  for (const auto& l : net.layers()) {
    std::vector<double> next(l.out);
    for (std::size_t r = 0; r < l.out; ++r) {
      double s = p[l.offset + l.in * l.out + r];
      for (std::size_t c = 0; c < l.in; ++c) s += p[l.offset + r * l.in + c] * cur[c];
      switch (l.act) {
        case noisesteer::Activation::identity:
          break;
        case noisesteer::Activation::relu:
          s = std::max(s, 0.0);
          break;
        case noisesteer::Activation::tanh:
          s = std::tanh(s);
          break;
      }
      next[r] = s;
    }
    cur = std::move(next);
  }
  return cur;
}

}  // namespace testing_oracle
