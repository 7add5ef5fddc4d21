#pragma once
// Experiment configuration: one flat key = value file holding every tunable
// the harness consumes. Builders turn it into the module-level configs.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "noisesteer/envs/corrector.hpp"
#include "noisesteer/envs/evaluate.hpp"
#include "noisesteer/envs/sim_env.hpp"
#include "noisesteer/flow/pretrain.hpp"
#include "noisesteer/inversion/inversion.hpp"
#include "noisesteer/rl/rollout.hpp"
#include "noisesteer/rl/trainer.hpp"

namespace noisesteer {

enum class Method { unisteer, dsrl, dagger, opt_invert, direct_sup };
const char* method_name(Method m);
Method parse_method(const std::string& s);

struct DaggerConfig {
  std::size_t steps_per_round = 200;
  std::size_t batch_size = 64;
  double lr = 3e-3;
};

struct AblationConfig {
  std::size_t corpus_size = 200;
  std::vector<std::size_t> sweep_iterations{4, 8, 16, 32};
  std::size_t supervision_corpus = 16;  // correction trajectories
  std::size_t supervision_steps = 300;
  OptimizationInversionConfig opt;
};

struct ExperimentConfig {
  // run
  std::string task = "reach";
  std::uint64_t seed = 1;
  std::string method = "unisteer";
  std::string schedule = "sft_then_rl";
  bool interleave = false;
  std::size_t rounds = 10;
  std::size_t episodes_per_round = 10;
  std::size_t n_sft = 100;
  std::size_t n_rl = 100;
  std::size_t checkpoint_every = 0;

  // demonstrations and decoder pretraining
  std::size_t demos = 30;
  double demo_aim_fraction = 0.7;  // aim spread radius / tolerance
  std::size_t denoise_steps = 10;
  std::vector<std::size_t> flow_hidden{64, 64};
  std::size_t flow_steps = 4000;
  std::size_t flow_batch = 64;
  double flow_lr = 1e-3;

  // environment; unset optionals take the task default
  std::size_t env_horizon = 8;
  std::optional<std::size_t> env_max_decisions;
  std::optional<double> env_tolerance;
  std::optional<double> env_bias_x;
  std::optional<double> env_bias_y;
  std::optional<double> env_gain;
  double env_max_step = 0.08;
  double env_actuation_noise = 0.002;
  double env_init_jitter = 0.03;
  bool env_miscalibrated = true;

  // noise actor, critics, temperature
  double actor_lr = 1e-5;
  double critic_lr = 3e-4;
  double temperature_lr = 3e-3;
  double sft_lr = 6e-4;
  double gamma = 0.99;
  double tau = 0.005;
  double init_alpha = 1.0;
  double target_entropy = 0.0;
  std::size_t batch_size = 64;
  std::size_t replay_capacity = 33333;
  std::vector<std::size_t> actor_hidden{64, 64};
  std::vector<std::size_t> critic_hidden{64, 64};
  double squash = 3.0;
  double log_std_min = -20.0;
  double log_std_max = 2.0;
  bool match_target_entropy = true;

  // inversion
  std::size_t inversion_iterations = 16;
  double inversion_tol = 1e-10;
  bool inversion_early_exit = true;

  // oracle corrector
  double corrector_deviation = 0.1;
  std::size_t corrector_window = 2;
  double corrector_progress_eps = 0.01;

  // evaluation
  std::size_t eval_trials_per_position = 2;
  std::uint64_t eval_seed = 1000;

  // DAgger baseline
  std::size_t dagger_steps = 200;
  std::size_t dagger_batch = 64;
  double dagger_lr = 3e-3;

  // analysis suites
  std::size_t corpus_size = 200;
  std::vector<std::size_t> sweep_iterations{4, 8, 16, 32};
  std::size_t supervision_corpus = 16;
  std::size_t supervision_steps = 300;
  std::size_t opt_steps = 50;
  double opt_lr = 0.05;
  double opt_budget_s = 0.0;  // per-sample wall budget; 0 matches the fixed-point arm
  std::size_t opt_divergence_window = 10;

  /// Throws ConfigError on out-of-range or unknown enumerated values.
  void validate() const;

  /// Every key in file order.
  static std::vector<std::string> keys();
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  /// `key = value` lines; '#' starts a comment. Unknown keys throw.
  static ExperimentConfig parse(std::istream& is);
  static ExperimentConfig load(const std::string& path);
  void write(std::ostream& os) const;
  void save(const std::string& path) const;
  bool operator==(const ExperimentConfig&) const = default;

  // Builders.
  Task task_id() const;
  Method method_id() const;
  EnvParams env_params() const;
  TrainerConfig trainer_config() const;
  FlowTrainConfig flow_config() const;
  InversionConfig inversion_config() const;
  ScheduleSpec schedule_spec() const;
  RoundConfig round_config() const;
  OracleCorrectorConfig corrector_config() const;
  EvalProtocol eval_protocol() const;
  DaggerConfig dagger_config() const;
  AblationConfig ablation_config() const;
};

/// Text dump of every builder's output; two configs that build identical
/// module configs have equal fingerprints.
std::string derived_fingerprint(const ExperimentConfig& cfg);

/// Startup audit: perturbs each key in turn and checks the derived
/// fingerprint changes, i.e. no key is dead. Returns the offending keys.
using Fingerprint = std::function<std::string(const ExperimentConfig&)>;
std::vector<std::string> audit_config(const ExperimentConfig& cfg, const Fingerprint& fingerprint = derived_fingerprint);

}  // namespace noisesteer
