#include "noisesteer/envs/corrector.hpp"

#include <cmath>

namespace noisesteer {

void OracleCorrector::begin_episode(const SimEnv& env) {
  best_distance_ = env.target_distance();
  stalled_ = 0;
}

CorrectorDecision OracleCorrector::decide(const SimEnv& env, std::span<const double> proposed) {
  CorrectorDecision d;
  auto expert = env.expert_chunk();
  const auto p = env.predict(proposed);
  const auto e = env.predict(expert);

  // progress is measured on what the policy would achieve
  if (p.final_distance < best_distance_ - cfg_.progress_eps) {
    best_distance_ = p.final_distance;
    stalled_ = 0;
  } else if (!p.success) {
    ++stalled_;
  }

  const double dev = std::hypot(p.end_ee[0] - e.end_ee[0], p.end_ee[1] - e.end_ee[1]);
  if (e.success && !p.success) {
    d.reason = "would-miss";
  } else if (dev > cfg_.deviation_threshold) {
    d.reason = "deviation";
  } else if (stalled_ >= cfg_.no_progress_window) {
    d.reason = "no-progress";
  } else {
    return d;
  }
  d.takeover = true;
  d.chunk = std::move(expert);
  stalled_ = 0;
  return d;
}

CorrectorDecision AlwaysCorrector::decide(const SimEnv& env, std::span<const double>) {
  return {true, env.expert_chunk(), "always"};
}

}  // namespace noisesteer
