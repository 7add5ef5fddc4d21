#pragma once
// Adaptation runs: UniSteer and the two baselines, with per-round evaluation,
// invariant checks and optional checkpoints.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "noisesteer/envs/evaluate.hpp"
#include "noisesteer/envs/sim_env.hpp"
#include "noisesteer/flow/demo_set.hpp"
#include "noisesteer/flow/flow_decoder.hpp"
#include "noisesteer/harness/config.hpp"
#include "noisesteer/harness/ledger.hpp"

namespace noisesteer {

/// Demonstrations and the pretrained decoder every method starts from.
struct PolicySetup {
  DemoSet demos;
  FlowDecoder decoder;
  std::vector<double> pretrain_curve;
};

/// Generates the demos and pretrains the decoder; a single Rng(seed) stream
/// drives both, so the result is a function of the config.
PolicySetup prepare_policy(const ExperimentConfig& cfg);

/// Writes decoder.nsd, demos.jsonl and pretrain_curve.jsonl into `dir`.
void save_policy(const PolicySetup& setup, const std::string& dir);
/// Reads a directory written by save_policy.
PolicySetup load_policy(const std::string& dir);

/// The pretrained decoder evaluated at zero noise.
SuccessReport evaluate_base_policy(const ExperimentConfig& cfg, const FlowDecoder& decoder);

struct RunOptions {
  /// Directory for checkpoint files when cfg.checkpoint_every > 0.
  std::string checkpoint_dir;
  /// Checkpoint file to continue from; empty starts a fresh run.
  std::string resume_from;
  /// Return after this many completed rounds (simulates an interruption).
  std::optional<std::size_t> stop_after_round;
  /// Called with every record as it is appended.
  std::function<void(const RunLedger::Record&)> on_record;
};

/// Oracle corrector in the loop, inverted corrections, the configured schedule.
RunLedger run_unisteer(const ExperimentConfig& cfg, const PolicySetup& setup, const RunOptions& opts = {});
/// Noise-space RL only: only_rl schedule, the corrector never takes over.
RunLedger run_dsrl_baseline(const ExperimentConfig& cfg, const PolicySetup& setup, const RunOptions& opts = {});
/// Every decision is human; (s, a_h) pairs are aggregated with the demos and a
/// copy of the decoder is finetuned by flow matching. Evaluated at zero noise.
RunLedger run_dagger_baseline(const ExperimentConfig& cfg, const PolicySetup& setup, const RunOptions& opts = {});

RunLedger run_unisteer(const ExperimentConfig& cfg);
RunLedger run_dsrl_baseline(const ExperimentConfig& cfg);
RunLedger run_dagger_baseline(const ExperimentConfig& cfg);

/// Dispatch on cfg.method (unisteer, dsrl or dagger).
RunLedger run_adaptation(const ExperimentConfig& cfg, const PolicySetup& setup, const RunOptions& opts = {});

/// Restores the policy stored in a run checkpoint and evaluates it.
SuccessReport evaluate_checkpoint(const ExperimentConfig& cfg, const PolicySetup& setup, const std::string& path);

/// Path of the checkpoint written after `round`.
std::string checkpoint_path(const std::string& dir, Method method, std::size_t round);

/// 64-bit FNV-1a of the serialized config; checkpoints refuse other configs.
std::uint64_t config_hash(const ExperimentConfig& cfg);

}  // namespace noisesteer
