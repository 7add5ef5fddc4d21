#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "noisesteer/envs/sim_env.hpp"

namespace noisesteer {

struct CorrectorDecision {
  bool takeover = false;
  std::vector<double> chunk;  // corrective chunk when takeover
  std::string reason;
};

/// Decides, once per decision step, whether to replace the policy's proposed chunk.
class Corrector {
 public:
  virtual ~Corrector() = default;
  virtual void begin_episode(const SimEnv& env) { (void)env; }
  virtual CorrectorDecision decide(const SimEnv& env, std::span<const double> proposed) = 0;
};

struct OracleCorrectorConfig {
  /// Takeover when the proposal's predicted end-effector endpoint is further
  /// than this from the expert's.
  double deviation_threshold = 0.1;
  /// Takeover after this many consecutive decisions without `progress_eps`
  /// reduction of the distance to the current true target.
  std::size_t no_progress_window = 2;
  double progress_eps = 0.01;
};

/// Scripted stand-in for the human operator. It sees the true target and
/// corrects with the expert chunk. Takeover is re-evaluated every decision,
/// so control returns to the policy once its proposal is back within the
/// threshold.
class OracleCorrector : public Corrector {
 public:
  explicit OracleCorrector(OracleCorrectorConfig cfg = {}) : cfg_(cfg) {}
  void begin_episode(const SimEnv& env) override;
  CorrectorDecision decide(const SimEnv& env, std::span<const double> proposed) override;
  const OracleCorrectorConfig& config() const { return cfg_; }

 private:
  OracleCorrectorConfig cfg_;
  double best_distance_ = 0.0;
  std::size_t stalled_ = 0;
};

class NeverCorrector : public Corrector {
 public:
  CorrectorDecision decide(const SimEnv&, std::span<const double>) override { return {}; }
};

/// Takes over every decision with the expert chunk.
class AlwaysCorrector : public Corrector {
 public:
  CorrectorDecision decide(const SimEnv& env, std::span<const double> proposed) override;
};

}  // namespace noisesteer
