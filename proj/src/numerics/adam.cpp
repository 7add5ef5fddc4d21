#include "noisesteer/numerics/adam.hpp"

#include <cmath>

#include "noisesteer/errors.hpp"
#include "noisesteer/numerics/archive.hpp"

namespace noisesteer {

void Adam::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size()) throw ShapeError("Adam: parameter/gradient length mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) throw NumericError("non-finite gradient", i);
  }
  if (m.empty()) {
    m.assign(params.size(), 0.0);
    v.assign(params.size(), 0.0);
  } else if (m.size() != params.size()) {
    throw ShapeError("Adam: state was created for a different parameter count");
  }
  ++step_count;
  const double t = static_cast<double>(step_count);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

void Adam::save(ArchiveWriter& w) const {
  w.tag("adam", 1);
  w.put("lr", lr);
  w.put("beta1", beta1);
  w.put("beta2", beta2);
  w.put("eps", eps);
  w.put_u64("step", step_count);
  w.put("m", std::span<const double>(m));
  w.put("v", std::span<const double>(v));
}

void Adam::load(ArchiveReader& r) {
  r.expect_tag("adam", 1);
  lr = r.get_double("lr");
  beta1 = r.get_double("beta1");
  beta2 = r.get_double("beta2");
  eps = r.get_double("eps");
  step_count = r.get_u64("step");
  m = r.get_vector("m");
  v = r.get_vector("v");
}

}  // namespace noisesteer
