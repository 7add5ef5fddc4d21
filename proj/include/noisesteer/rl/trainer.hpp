#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "noisesteer/numerics/adam.hpp"
#include "noisesteer/rl/actor.hpp"
#include "noisesteer/rl/buffers.hpp"
#include "noisesteer/rl/critic.hpp"

namespace noisesteer {

struct TrainerConfig {
  ActorConfig actor;
  std::vector<std::size_t> critic_hidden{64, 64};
  Activation critic_activation = Activation::relu;
  double actor_lr = 1e-4;
  double critic_lr = 3e-4;
  double temperature_lr = 3e-4;
  double sft_lr = 6e-5;
  double gamma = 0.99;
  double tau = 0.005;
  double init_alpha = 1.0;
  double target_entropy = 0.0;
  std::size_t batch_size = 256;
  std::size_t replay_capacity = 33333;
  /// Start the actor's log-std where the Gaussian entropy equals
  /// target_entropy (overrides actor.init_log_std).
  bool match_target_entropy = true;

  /// log-std whose diagonal Gaussian over `noise_dim` coordinates has entropy `target_entropy`.
  static double entropy_matched_log_std(double target_entropy, std::size_t noise_dim);
};

struct UpdateResult {
  bool performed = false;  // false: nothing to learn from (empty buffer or batch)
  double loss = 0.0;
  std::size_t unreachable = 0;
};

/// Noise actor, twin critic, temperature and both buffers, with one optimizer
/// per parameter group. The frozen decoder is not owned here.
class NoiseTrainer {
 public:
  NoiseTrainer(std::size_t state_dim, std::size_t noise_dim, const TrainerConfig& cfg, const Normalizer& state_norm,
               std::uint64_t seed);

  const TrainerConfig& config() const { return cfg_; }
  NoiseActor& actor() { return actor_; }
  const NoiseActor& actor() const { return actor_; }
  TwinCritic& critic() { return critic_; }
  const TwinCritic& critic() const { return critic_; }
  ReplayBuffer& rl_buffer() { return rl_; }
  const ReplayBuffer& rl_buffer() const { return rl_; }
  DemoBuffer& demo_buffer() { return demo_; }
  const DemoBuffer& demo_buffer() const { return demo_; }
  /// Stream for rollout-time noise sampling.
  Rng& rollout_rng() { return rollout_rng_; }

  double log_alpha() const { return log_alpha_; }
  double alpha() const;
  void set_log_alpha(double v) { log_alpha_ = v; }

  /// One TD step on both critics using `batch`.
  UpdateResult update_critic(std::span<const Transition* const> batch);
  /// One reparameterized policy step on the actor using `states`; the
  /// per-sample log-probabilities are returned through `log_probs` if given.
  UpdateResult update_actor_rl(const std::vector<std::vector<double>>& states, std::vector<double>* log_probs = nullptr);
  UpdateResult update_actor_sft(std::span<const DemoPair* const> batch);
  UpdateResult update_temperature(std::span<const double> log_probs);

  /// Sampled-batch variants used by schedules.
  UpdateResult sft_step();
  struct RlStepResult {
    UpdateResult critic, actor, temperature;
  };
  /// Critic, actor and temperature updates on one replay batch, then Polyak.
  RlStepResult rl_step();

  std::uint64_t critic_updates() const { return critic_updates_; }

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  std::vector<const Transition*> sample_replay();

  TrainerConfig cfg_;
  NoiseActor actor_;
  TwinCritic critic_;
  double log_alpha_ = 0.0;
  Adam actor_opt_, sft_opt_, critic_opt_[2], temp_opt_;
  ReplayBuffer rl_;
  DemoBuffer demo_;
  Rng update_rng_;
  Rng rollout_rng_;
  std::uint64_t critic_updates_ = 0;
};

enum class ScheduleVariant { sft_then_rl, rl_then_sft, only_sft, only_rl };
const char* schedule_name(ScheduleVariant v);
ScheduleVariant parse_schedule(const std::string& s);

struct ScheduleSpec {
  ScheduleVariant variant = ScheduleVariant::sft_then_rl;
  std::size_t n_sft = 100;
  std::size_t n_rl = 100;
  /// Alternate single SFT and RL steps instead of running ordered blocks.
  bool interleave = false;

  bool runs_sft() const { return variant != ScheduleVariant::only_rl; }
  bool runs_rl() const { return variant != ScheduleVariant::only_sft; }
};

struct UpdateSummary {
  std::size_t sft_steps = 0;
  std::size_t rl_steps = 0;
  double sft_loss = 0.0;     // mean over performed steps
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  std::size_t unreachable = 0;
  std::vector<std::string> order;  // "sft"/"rl" block labels in execution order
};

/// Runs one round's update blocks in the order the schedule prescribes.
UpdateSummary run_updates(NoiseTrainer& trainer, const ScheduleSpec& spec);

}  // namespace noisesteer
