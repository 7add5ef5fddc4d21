#pragma once
// Decision-level rollout driver shared by the scripted corrector loop and the
// interactive session: propose() samples a noise and decodes a chunk, then
// exactly one of commit_policy() / commit_correction() executes a chunk and
// routes the transition.
//
// Routing: an autonomous decision stores (s, z, r, s', done) in the RL buffer.
// A corrected decision inverts a_h to z_hat and stores (s, z_hat, r, s', done)
// in the RL buffer and (s, z_hat) in the demo buffer.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "noisesteer/envs/corrector.hpp"
#include "noisesteer/envs/sim_env.hpp"
#include "noisesteer/flow/flow_decoder.hpp"
#include "noisesteer/inversion/inversion.hpp"
#include "noisesteer/rl/trainer.hpp"

namespace noisesteer {

struct Proposal {
  std::uint64_t seq = 0;     // decision counter across the session
  std::vector<double> state;
  std::vector<double> noise;
  std::vector<double> chunk;  // raw env units
};

struct CommitResult {
  bool takeover = false;
  double reward = 0.0;
  bool done = false;
  bool truncated = false;
  std::vector<double> stored_noise;
  double reconstruction_loss = 0.0;  // corrections only
  bool unreachable = false;          // inverted target outside the squash bound
  bool contraction_warning = false;
};

struct EpisodeTally {
  std::size_t decisions = 0;
  std::size_t takeovers = 0;
  bool success = false;
};

class RolloutSession {
 public:
  /// `stochastic` samples from the actor; otherwise the squashed mean is used.
  RolloutSession(const FlowDecoder& decoder, NoiseTrainer& trainer, SimEnv& env, InversionConfig inversion,
                 bool stochastic = true);

  const std::vector<double>& begin_episode(std::size_t position, std::uint64_t episode_seed);
  /// Proposal for the current decision; repeated calls return the same proposal.
  const Proposal& propose();
  CommitResult commit_policy();
  /// `chunk` is in raw env units.
  CommitResult commit_correction(std::span<const double> chunk);

  bool episode_finished() const { return env_.finished(); }
  const EpisodeTally& tally() const { return tally_; }
  std::uint64_t seq() const { return seq_; }
  bool has_pending() const { return pending_.has_value(); }
  const SimEnv& env() const { return env_; }
  const FlowDecoder& decoder() const { return decoder_; }

 private:
  CommitResult execute(std::span<const double> chunk, std::vector<double> noise, bool takeover);

  const FlowDecoder& decoder_;
  NoiseTrainer& trainer_;
  SimEnv& env_;
  InversionConfig inversion_;
  bool stochastic_;
  std::optional<Proposal> pending_;
  std::uint64_t seq_ = 0;
  EpisodeTally tally_;
  bool active_ = false;
};

struct RoundConfig {
  std::size_t episodes = 10;
  std::uint64_t seed = 0;
  InversionConfig inversion;
};

struct RoundStats {
  std::size_t round = 0;
  std::size_t episodes = 0;
  std::size_t successes = 0;
  double success_rate = 0.0;  // rollout success (with corrections)
  std::size_t model_only = 0;
  std::size_t mixed = 0;
  std::size_t human_only = 0;
  std::size_t decisions = 0;
  std::size_t takeovers = 0;
  std::size_t env_steps = 0;
  std::size_t unreachable = 0;
  double mean_inversion_loss = 0.0;
  std::size_t rl_buffer = 0;
  std::size_t demo_buffer = 0;
  UpdateSummary updates;
  bool aborted = false;
  std::string error;
};

/// Training-episode init position and seed for episode `e` of round `round`.
std::size_t round_position(std::size_t round, std::size_t episode, std::size_t episodes, std::size_t positions);
std::uint64_t round_episode_seed(std::uint64_t seed, std::size_t round, std::size_t episode);

/// Collects `episodes` rollouts with the corrector in the loop, then runs the
/// schedule's update blocks. An exception during rollouts aborts the round
/// (no updates); entries committed before the fault stay in the buffers.
RoundStats run_round(NoiseTrainer& trainer, const FlowDecoder& decoder, SimEnv& env, Corrector& corrector,
                     const ScheduleSpec& schedule, const RoundConfig& cfg, std::size_t round);

}  // namespace noisesteer
