#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "noisesteer/envs/sim_env.hpp"

namespace noisesteer {

/// Maps the current env to a raw action chunk. Learned policies only read env.state().
using ChunkPolicy = std::function<std::vector<double>(const SimEnv& env)>;

struct EvalProtocol {
  std::size_t trials_per_position = 2;
  std::uint64_t seed = 1000;
};

struct TrialRecord {
  std::size_t position = 0;
  std::size_t trial = 0;
  bool ood = false;
  bool success = false;
  std::size_t decisions = 0;
  std::size_t steps = 0;
};

struct SuccessReport {
  double id = 0.0;   // success rates in [0, 1]
  double ood = 0.0;
  double overall = 0.0;
  std::size_t id_trials = 0;
  std::size_t ood_trials = 0;
  std::vector<TrialRecord> trials;

  /// One JSON object per trial.
  void write_jsonl(std::ostream& os) const;
};

/// Overall = (n_id * id + n_ood * ood) / (n_id + n_ood).
double overall_rate(double id, std::size_t n_id, double ood, std::size_t n_ood);

/// Every init position x `trials_per_position` episodes; deterministic in the seed.
SuccessReport evaluate(const ChunkPolicy& policy, const EnvParams& params, const EvalProtocol& protocol = {});

/// Per-trial episode seed used by evaluate().
std::uint64_t trial_seed(std::uint64_t protocol_seed, std::size_t position, std::size_t trial);

/// The scripted expert as a policy.
ChunkPolicy expert_policy();

}  // namespace noisesteer
