#pragma once
// Planar manipulation analogs with sparse terminal reward.
//
// Workspace is [-1, 1]^2. One low-level action is (dx, dy, trigger); the
// displacement is clipped to `max_step` in norm. A chunk of `horizon` actions
// is executed open-loop per decision.
//
//   reach   grasp (trigger > 0) within `tolerance` of the object
//   place   grasp the object, carry it, release (trigger <= 0) at the goal
//   insert  start holding a peg, push (trigger > 0) within `tolerance` of the hole
//
// Deployment shift: object and goal are observed with a systematic perception
// error. The true position is observed + bias + gain * observed, a fixed
// miscalibration the demonstrator never saw (demos are collected with
// `miscalibrated = false`).

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "noisesteer/flow/demo_set.hpp"
#include "noisesteer/numerics/rng.hpp"

namespace noisesteer {

enum class Task { reach, place, insert };
const char* task_name(Task t);
Task parse_task(const std::string& s);

using Vec2 = std::array<double, 2>;

/// State layout: ee(2), object(2), goal(2), grip, holding. Object and goal are
/// observed (possibly miscalibrated) positions.
inline constexpr std::size_t kStateDim = 8;
inline constexpr std::size_t kActionDim = 3;

struct InitPosition {
  Vec2 target;  // object (reach, place) or hole (insert), nominal observed position
  Vec2 goal;    // placement goal; unused by reach and insert
  bool ood = false;
};

struct EnvParams {
  Task task = Task::reach;
  std::size_t horizon = 8;         // H, actions per chunk
  std::size_t max_decisions = 8;   // chunks per episode before truncation
  double max_step = 0.08;
  double tolerance = 0.05;
  double actuation_noise = 0.002;  // stddev added to every executed displacement
  double init_jitter = 0.03;       // half-width of uniform jitter on positions
  Vec2 ee_start{0.0, -0.7};
  bool miscalibrated = true;
  Vec2 bias{0.0, 0.0};
  double gain = 0.0;
  std::vector<InitPosition> inits;

  ChunkShape chunk_shape() const { return {horizon, kActionDim}; }
  std::size_t id_count() const;
  std::size_t ood_count() const;
  /// True position for an observed one under this env's miscalibration.
  Vec2 true_position(Vec2 observed) const;
  void validate() const;

  /// Task defaults with ten init positions, eight in-distribution.
  static EnvParams defaults(Task task);
};

struct StepResult {
  double reward = 0.0;
  bool done = false;  // success; truncation is not terminal
};

struct ChunkOutcome {
  double reward = 0.0;
  bool done = false;
  bool truncated = false;       // decision budget exhausted without success
  std::size_t steps = 0;        // low-level steps executed
};

class SimEnv {
 public:
  explicit SimEnv(EnvParams params);

  /// Starts an episode at init position `index` with jitter and actuation
  /// noise drawn from streams derived from `episode_seed`.
  const std::vector<double>& reset(std::size_t index, std::uint64_t episode_seed);

  StepResult step(std::span<const double> action);
  /// Executes up to `horizon` actions, stopping early on success.
  ChunkOutcome execute_chunk(std::span<const double> chunk);

  const std::vector<double>& state() const { return state_; }
  const EnvParams& params() const { return params_; }
  std::size_t init_index() const { return init_index_; }
  bool is_ood() const { return params_.inits[init_index_].ood; }
  bool success() const { return success_; }
  bool truncated() const { return !success_ && decisions_ >= params_.max_decisions; }
  bool finished() const { return success_ || truncated(); }
  std::size_t decisions() const { return decisions_; }
  std::size_t steps_taken() const { return steps_; }

  /// Ground-truth positions (used by the scripted expert and corrector).
  Vec2 ee() const { return ee_; }
  Vec2 true_object() const { return obj_; }
  Vec2 true_goal() const { return goal_; }
  bool holding() const { return holding_; }
  /// Distance from the end effector to the current true target.
  double target_distance() const;

  /// The scripted expert's next action from the current true state.
  std::vector<double> expert_action(const Vec2& aim_offset = {0.0, 0.0}) const;
  /// Expert chunk from the current state, planned on noise-free kinematics.
  std::vector<double> expert_chunk(const Vec2& aim_offset = {0.0, 0.0}) const;

  struct Prediction {
    Vec2 end_ee;
    bool success = false;
    double final_distance = 0.0;  // to the current true target after the chunk
  };
  /// Noise-free rollout of `chunk` from the current state; the env is not modified.
  Prediction predict(std::span<const double> chunk) const;

  /// Checksum of the full internal state, for determinism tests.
  std::uint64_t fingerprint() const;

 private:
  void apply(std::span<const double> action, bool noisy, StepResult& out);
  Vec2 current_target() const;
  void refresh_state();

  EnvParams params_;
  std::size_t init_index_ = 0;
  Rng noise_{0};
  Vec2 ee_{};
  Vec2 obj_{};       // true
  Vec2 goal_{};      // true
  Vec2 obj_bias_{};  // observed = true - bias
  Vec2 goal_bias_{};
  bool grip_ = false;
  bool holding_ = false;
  bool success_ = false;
  std::size_t decisions_ = 0;
  std::size_t steps_ = 0;
  std::vector<double> state_;
};

/// Scripted demonstrations on the nominal (calibrated) env from ID inits only.
/// Each demo aims at a point drawn uniformly in a disc of radius
/// `aim_radius` around the true target, which stays inside the tolerance.
DemoSet generate_demos(const EnvParams& params, std::size_t n, double aim_radius, Rng& rng);

}  // namespace noisesteer
