#include "noisesteer/inversion/inversion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "noisesteer/errors.hpp"

namespace noisesteer {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double norm_diff(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

void check_finite(std::span<const double> v, std::size_t where) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError("non-finite inversion iterate", where);
  }
}

StepInversion invert_step_normalized(const FlowDecoder& dec, std::span<const double> y, double t_step,
                                     std::span<const double> state_n, const InversionConfig& cfg) {
  StepInversion out;
  out.x.assign(y.begin(), y.end());
  const double h = dec.dt();
  const bool certified = cfg.certified_rho && *cfg.certified_rho < 1.0;
  std::vector<double> next(y.size());
  std::size_t rising = 0;
  double prev_residual = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < cfg.iterations; ++m) {
    const auto v = dec.velocity_normalized(out.x, t_step, state_n);
    for (std::size_t i = 0; i < y.size(); ++i) next[i] = y[i] - h * v[i];
    check_finite(next, m);
    const double r = norm_diff(next, out.x);
    out.x.swap(next);
    ++out.iterations_run;
    if (cfg.record_residuals) out.residuals.push_back(r);
    rising = r > prev_residual ? rising + 1 : 0;
    if (rising >= 3 && !certified) out.contraction_warning = true;
    prev_residual = r;
    if (cfg.early_exit && r < cfg.residual_tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace

void InversionConfig::validate() const {
  if (iterations < 1) throw ConfigError("inversion needs at least one fixed-point iteration");
  if (!(residual_tol > 0.0)) throw ConfigError("residual tolerance must be positive");
}

double mse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("mse: length mismatch");
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

StepInversion invert_step(const FlowDecoder& dec, std::span<const double> y, double t_step,
                          std::span<const double> state, const InversionConfig& cfg) {
  cfg.validate();
  if (y.size() != dec.noise_dim()) throw ShapeError("step output has wrong dimension");
  bool on_grid = false;
  for (std::size_t k = 0; k < dec.steps(); ++k) on_grid = on_grid || std::abs(dec.grid_time(k) - t_step) < 1e-12;
  if (!on_grid) throw DomainError("t_step is not a forward grid time");
  return invert_step_normalized(dec, y, t_step, dec.normalize_state(state), cfg);
}

InversionResult invert_action(const FlowDecoder& dec, std::span<const double> state, std::span<const double> action,
                              const InversionConfig& cfg) {
  cfg.validate();
  if (action.size() != dec.noise_dim()) throw ShapeError("action chunk has wrong dimension");
  const auto start = Clock::now();
  const auto sn = dec.normalize_state(state);
  InversionResult out;
  out.noise.assign(action.begin(), action.end());
  auto& rep = out.report;
  rep.converged = true;
  for (std::size_t j = 1; j <= dec.steps(); ++j) {
    const std::size_t k = dec.steps() - j + 1;  // forward step being undone
    auto step = invert_step_normalized(dec, out.noise, dec.grid_time(k - 1), sn, cfg);
    out.noise = std::move(step.x);
    rep.total_iterations += step.iterations_run;
    rep.converged = rep.converged && step.converged;
    if (step.contraction_warning && !rep.contraction_warning) {
      rep.contraction_warning = true;
      rep.warnings.push_back("contraction-violation: residual grew for 3 consecutive iterations at step " +
                             std::to_string(k));
    }
    for (std::size_t m = 1; m < step.residuals.size(); ++m) {
      if (step.residuals[m - 1] > 1e-13) rep.rho_hat = std::max(rep.rho_hat, step.residuals[m] / step.residuals[m - 1]);
    }
    if (cfg.record_residuals) rep.residuals.push_back(std::move(step.residuals));
  }
  rep.wall_time_s = seconds_since(start);
  rep.reconstruction_loss = mse(dec.decode(state, out.noise), action);
  return out;
}

std::vector<double> reverse_time_invert(const FlowDecoder& dec, std::span<const double> state,
                                        std::span<const double> action) {
  if (action.size() != dec.noise_dim()) throw ShapeError("action chunk has wrong dimension");
  const auto sn = dec.normalize_state(state);
  const double h = dec.dt();
  std::vector<double> y(action.begin(), action.end());
  for (std::size_t j = 1; j <= dec.steps(); ++j) {
    // tau_{j-1} = (j-1) dt, evaluated at flow time 1 - tau_{j-1} = t_{K-j+1}
    const auto v = dec.velocity_normalized(y, dec.grid_time(dec.steps() - j + 1), sn);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] -= h * v[i];
    check_finite(y, j);
  }
  return y;
}

NoiseLoss direct_supervision_loss(const FlowDecoder& dec, std::span<const double> state, std::span<const double> mu,
                                  std::span<const double> action) {
  if (action.size() != dec.noise_dim()) throw ShapeError("action chunk has wrong dimension");
  NoiseLoss out;
  auto r = dec.decode_vjp(state, mu, [&](std::span<const double> a, std::span<double> g) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - action[i];
      out.value += d * d;
      g[i] = 2.0 * d;
    }
  });
  if (!std::isfinite(out.value)) throw NumericError("non-finite direct supervision loss", dec.steps());
  out.grad = std::move(r.grad_noise);
  return out;
}

OptimizationInversionResult optimization_based_invert(const FlowDecoder& dec, std::span<const double> state,
                                                      std::span<const double> action,
                                                      const OptimizationInversionConfig& cfg) {
  if (action.size() != dec.noise_dim()) throw ShapeError("action chunk has wrong dimension");
  const auto start = Clock::now();
  OptimizationInversionResult out;
  std::vector<double> z(action.begin(), action.end());
  std::vector<double> best = z;
  double best_loss = std::numeric_limits<double>::infinity();
  double prev = std::numeric_limits<double>::infinity();
  std::size_t rising = 0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    auto l = direct_supervision_loss(dec, state, z, action);
    out.report.loss_curve.push_back(l.value);
    ++out.report.steps_run;
    if (l.value < best_loss) {
      best_loss = l.value;
      best = z;
    }
    rising = l.value > prev ? rising + 1 : 0;
    prev = l.value;
    if (rising >= cfg.divergence_window) {
      out.report.diverged = true;
      break;
    }
    for (std::size_t i = 0; i < z.size(); ++i) z[i] -= cfg.lr * l.grad[i];
    check_finite(z, step);
    if (cfg.wall_budget_s > 0.0 && seconds_since(start) >= cfg.wall_budget_s) break;
  }
  if (!out.report.diverged) {
    // the final update has not been scored yet
    const double last = mse(dec.decode(state, z), action) * static_cast<double>(z.size());
    if (last < best_loss) {
      best_loss = last;
      best = z;
    }
  }
  out.report.wall_time_s = seconds_since(start);
  out.noise = std::move(best);
  out.report.reconstruction_loss = mse(dec.decode(state, out.noise), action);
  return out;
}

ContractionCertificate estimate_contraction(const FlowDecoder& dec, const std::vector<std::vector<double>>& states,
                                            const ContractionConfig& cfg) {
  ContractionCertificate cert;
  cert.per_time.assign(dec.steps(), 0.0);
  Rng rng(cfg.seed);
  const std::size_t d = dec.noise_dim();
  std::size_t pairs = 0;
  for (const auto& s : states) {
    const auto sn = dec.normalize_state(s);
    for (std::size_t k = 0; k < dec.steps(); ++k) {
      const double t = dec.grid_time(k);
      for (std::size_t p = 0; p < cfg.pairs_per_point; ++p) {
        std::vector<double> z(d), z2(d);
        for (auto& x : z) x = cfg.noise_scale * rng.normal();
        if (p % 2 == 0) {
          // local pair: finite-difference probe of the Jacobian norm along a random direction
          auto u = rng.normal_vector(d);
          double n = 0.0;
          for (double x : u) n += x * x;
          n = std::sqrt(n);
          for (std::size_t i = 0; i < d; ++i) z2[i] = z[i] + cfg.local_offset * u[i] / n;
        } else {
          for (auto& x : z2) x = cfg.noise_scale * rng.normal();
        }
        const double dz = norm_diff(z, z2);
        if (dz == 0.0) continue;
        const double dv = norm_diff(dec.velocity_normalized(z, t, sn), dec.velocity_normalized(z2, t, sn));
        const double ratio = dv / dz;
        cert.per_time[k] = std::max(cert.per_time[k], ratio);
        ++pairs;
      }
    }
  }
  if (pairs == 0) cert.warnings.push_back("degenerate sample: no point pairs, Lipschitz estimate is 0");
  for (double l : cert.per_time) cert.lipschitz = std::max(cert.lipschitz, l);
  cert.rho = dec.dt() * cert.lipschitz;
  cert.valid = cert.rho < 1.0;
  return cert;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

InversionSummary summarize(const std::vector<InversionReport>& reports) {
  InversionSummary s;
  s.count = reports.size();
  if (reports.empty()) return s;
  std::vector<double> losses;
  for (const auto& r : reports) {
    losses.push_back(r.reconstruction_loss);
    s.mean_loss += r.reconstruction_loss;
    s.mean_time_s += r.wall_time_s;
  }
  s.mean_loss /= static_cast<double>(reports.size());
  s.mean_time_s /= static_cast<double>(reports.size());
  s.median_loss = percentile(losses, 50.0);
  s.p90_loss = percentile(losses, 90.0);
  return s;
}

}  // namespace noisesteer
