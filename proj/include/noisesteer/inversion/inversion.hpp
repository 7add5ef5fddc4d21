#pragma once
// Action-to-noise inversion of a frozen flow decoder.
//
// The decoder's k-th Euler step is y = x + dt v(x, t_{k-1}, s). Given y, its
// preimage x is the fixed point of g_y(x) = y - dt v(x, t_{k-1}, s), which is
// a contraction whenever dt * Lip(v) < 1. invert_action() undoes the K steps
// last-to-first with Picard iteration started at x^(0) = y.
//
// All chunks and noises here are in the decoder's normalized action units.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "noisesteer/flow/flow_decoder.hpp"

namespace noisesteer {

struct InversionConfig {
  std::size_t iterations = 16;  // M, Picard iterations per Euler step
  double residual_tol = 1e-10;  // early exit once ||x^(m+1) - x^(m)|| < tol
  bool early_exit = true;
  bool record_residuals = true;
  /// Certified dt*L for this decoder, if known. Growth warnings are raised
  /// only when this is absent or >= 1.
  std::optional<double> certified_rho;

  void validate() const;
};

struct StepInversion {
  std::vector<double> x;
  std::vector<double> residuals;  // residual_m = ||x^(m+1) - x^(m)||
  std::size_t iterations_run = 0;
  bool converged = false;         // stopped on residual_tol
  bool contraction_warning = false;
};

struct InversionReport {
  double reconstruction_loss = 0.0;  // MSE(decode(s, z_hat), a_h)
  std::vector<std::vector<double>> residuals;  // one sequence per undone step, in inversion order
  double wall_time_s = 0.0;
  double rho_hat = 0.0;  // largest observed residual ratio, an empirical dt*L
  bool converged = false;
  bool contraction_warning = false;
  std::size_t total_iterations = 0;
  std::vector<std::string> warnings;
};

struct InversionResult {
  std::vector<double> noise;
  InversionReport report;
};

/// Inverts one Euler step taken at grid time `t_step` (must be one of
/// t_0..t_{K-1}). `state` is a raw environment state.
StepInversion invert_step(const FlowDecoder& dec, std::span<const double> y, double t_step,
                          std::span<const double> state, const InversionConfig& cfg);

/// Recovers z_hat with decode(s, z_hat) ~= a_h by undoing forward steps
/// k = K..1 in turn, each at its own forward grid time t_{k-1}.
InversionResult invert_action(const FlowDecoder& dec, std::span<const double> state,
                              std::span<const double> action, const InversionConfig& cfg = {});

/// K Euler steps of the reverse-time ODE dy/dtau = -v(y, 1 - tau, s) from
/// y_0 = a. Approximate: it is not the exact inverse of the discrete decoder.
std::vector<double> reverse_time_invert(const FlowDecoder& dec, std::span<const double> state,
                                        std::span<const double> action);

struct OptimizationInversionConfig {
  std::size_t steps = 50;
  double lr = 0.05;
  /// Stop early once this much wall time has been spent (<= 0 disables).
  double wall_budget_s = 0.0;
  std::size_t divergence_window = 10;
};

struct OptimizationInversionReport {
  double reconstruction_loss = 0.0;  // MSE of the returned (best) iterate
  double wall_time_s = 0.0;
  std::size_t steps_run = 0;
  bool diverged = false;
  std::vector<double> loss_curve;  // ||decode(s, z) - a_h||^2 per step
};

struct OptimizationInversionResult {
  std::vector<double> noise;
  OptimizationInversionReport report;
};

/// Gradient descent on ||decode(s, z) - a_h||^2 from z = a_h. Returns the best
/// iterate seen; flags divergence after `divergence_window` consecutive increases.
OptimizationInversionResult optimization_based_invert(const FlowDecoder& dec, std::span<const double> state,
                                                      std::span<const double> action,
                                                      const OptimizationInversionConfig& cfg = {});

struct NoiseLoss {
  double value = 0.0;
  std::vector<double> grad;  // w.r.t. the noise
};

/// ||decode(s, mu) - a_h||^2 and its gradient w.r.t. mu through all K frozen
/// steps. Decoder parameters are not touched.
NoiseLoss direct_supervision_loss(const FlowDecoder& dec, std::span<const double> state, std::span<const double> mu,
                                  std::span<const double> action);

struct ContractionConfig {
  std::size_t pairs_per_point = 8;  // random pairs per (state, grid time)
  double noise_scale = 1.0;        // z ~ N(0, noise_scale^2 I)
  double local_offset = 1e-3;      // second point of a local pair is z + offset * unit
  std::uint64_t seed = 17;
};

struct ContractionCertificate {
  double lipschitz = 0.0;            // L_hat, a sampled lower bound of Lip_z(v)
  double rho = 0.0;                  // dt * L_hat
  bool valid = true;                 // rho < 1
  std::vector<double> per_time;      // L_hat restricted to each grid time t_0..t_{K-1}
  std::vector<std::string> warnings;
};

/// Largest ||v(z) - v(z')|| / ||z - z'|| over sampled pairs at every forward
/// grid time and every given state.
ContractionCertificate estimate_contraction(const FlowDecoder& dec, const std::vector<std::vector<double>>& states,
                                            const ContractionConfig& cfg = {});

struct InversionSummary {
  std::size_t count = 0;
  double mean_loss = 0.0;
  double median_loss = 0.0;
  double p90_loss = 0.0;
  double mean_time_s = 0.0;
};

/// Linear-interpolated percentile (q in [0, 100]) of `values`.
double percentile(std::vector<double> values, double q);
InversionSummary summarize(const std::vector<InversionReport>& reports);

double mse(std::span<const double> a, std::span<const double> b);

}  // namespace noisesteer
