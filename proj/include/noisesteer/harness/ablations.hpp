#pragma once
// Analysis suites on the toy tasks: correction corpus, fixed-point iteration
// sweep, supervision-strategy comparison, schedule ablation and the
// method comparison across seeds.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "noisesteer/envs/evaluate.hpp"
#include "noisesteer/harness/config.hpp"
#include "noisesteer/harness/ledger.hpp"
#include "noisesteer/harness/runs.hpp"
#include "noisesteer/inversion/inversion.hpp"

namespace noisesteer {

struct CorrectionSample {
  std::vector<double> state;
  std::vector<double> action;  // normalized decoder units
  std::size_t trajectory = 0;
};

struct CorrectionCorpus {
  std::vector<CorrectionSample> samples;
  std::size_t trajectories = 0;
};

/// Rolls out the pretrained decoder with prior noise z ~ N(0, I) and the
/// oracle corrector in the loop, recording every corrective chunk. Stops at
/// `max_samples` samples or `max_trajectories` episodes, whichever comes first.
CorrectionCorpus collect_correction_corpus(const ExperimentConfig& cfg, const FlowDecoder& decoder,
                                           std::size_t max_samples, std::size_t max_trajectories);

/// JSONL, one sample per line: {"trajectory", "state", "action"} with the
/// action in raw env units (converted with the decoder's action normalizer).
void save_corpus(const CorrectionCorpus& corpus, const FlowDecoder& decoder, const std::string& path);
CorrectionCorpus load_corpus(const std::string& path, const FlowDecoder& decoder);

/// Fixed-point inversion of every sample with `cfg`; order follows the corpus
/// whatever the worker count.
std::vector<InversionReport> invert_corpus(const FlowDecoder& decoder, const CorrectionCorpus& corpus,
                                           const InversionConfig& cfg, std::size_t workers = 1);
/// One line per report.
nlohmann::ordered_json to_json(const InversionReport& r);

struct SweepRow {
  std::size_t iterations = 0;
  InversionSummary summary;  // mean_time_s is wall time of the whole pass / count
};

struct IterationSweep {
  std::size_t samples = 0;
  std::vector<SweepRow> rows;
};

/// Fixed-point inversion of every corpus sample at each M with early exit off.
IterationSweep run_iteration_sweep(const ExperimentConfig& cfg, const FlowDecoder& decoder,
                                   const CorrectionCorpus& corpus, const std::vector<std::size_t>& iterations);
/// Pretrains, collects a corpus of cfg.corpus_size samples and sweeps cfg.sweep_iterations.
IterationSweep run_iteration_sweep(const ExperimentConfig& cfg);

struct SupervisionRow {
  std::string method;  // fixed_point, optimization, direct
  bool has_targets = true;
  double inversion_time_s = 0.0;  // whole corpus
  double inversion_time_per_sample_s = 0.0;
  double train_time_s = 0.0;
  double action_loss = 0.0;         // MSE(decode(s, z_hat), a_h); targets only
  double policy_action_loss = 0.0;  // MSE(decode(s, actor mean), a_h) after training
  double total_time_s = 0.0;
  std::size_t diverged = 0;  // optimization arm only
  SuccessReport eval;
};

struct SupervisionTable {
  std::size_t samples = 0;
  std::size_t trajectories = 0;
  double budget_per_sample_s = 0.0;  // wall budget given to the optimization arm
  std::vector<SupervisionRow> rows;

  const SupervisionRow& row(const std::string& method) const;
};

/// Collects cfg.supervision_corpus correction trajectories, then trains a
/// fresh actor from each strategy for cfg.supervision_steps steps. With
/// opt_budget_s = 0 the optimization arm's per-sample wall budget is matched
/// to the fixed-point arm's measured per-sample time.
SupervisionTable run_supervision_ablation(const ExperimentConfig& cfg, const PolicySetup& setup);
SupervisionTable run_supervision_ablation(const ExperimentConfig& cfg);

struct RunOutcome {
  std::string arm;  // schedule or method name
  std::uint64_t seed = 0;
  RunLedger ledger;
  double final_id = 0.0;
  double final_ood = 0.0;
  double final_overall = 0.0;
};

struct ArmTable {
  std::vector<std::string> arms;
  std::vector<std::uint64_t> seeds;
  std::vector<RunOutcome> runs;  // seed-major

  const RunOutcome& at(const std::string& arm, std::uint64_t seed) const;
  double mean_overall(const std::string& arm) const;
  double mean_ood(const std::string& arm) const;
};

/// The four schedules on shared seeds; every variant of a seed starts from the
/// same pretrained decoder. Seeds run on up to `workers` threads.
ArmTable run_schedule_ablation(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                               std::size_t workers = 1);

/// UniSteer, DSRL and DAgger on shared seeds.
ArmTable compare_methods(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                         std::size_t workers = 1);

nlohmann::ordered_json to_json(const InversionSummary& s);
nlohmann::ordered_json to_json(const IterationSweep& s);
nlohmann::ordered_json to_json(const SupervisionTable& t);
nlohmann::ordered_json to_json(const ArmTable& t);

std::string format_table(const IterationSweep& s);
std::string format_table(const SupervisionTable& t);
std::string format_table(const ArmTable& t);

}  // namespace noisesteer
