#include "noisesteer/envs/sim_env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "noisesteer/errors.hpp"
#include "noisesteer/numerics/dense_net.hpp"

namespace noisesteer {

namespace {

double dist(Vec2 a, Vec2 b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

Vec2 jitter(Vec2 p, double w, Rng& rng) {
  if (w <= 0.0) return p;
  return {p[0] + rng.uniform(-w, w), p[1] + rng.uniform(-w, w)};
}

}  // namespace

const char* task_name(Task t) {
  switch (t) {
    case Task::reach:
      return "reach";
    case Task::place:
      return "place";
    case Task::insert:
      return "insert";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  if (s == "reach") return Task::reach;
  if (s == "place") return Task::place;
  if (s == "insert") return Task::insert;
  throw ConfigError("unknown task: " + s);
}

std::size_t EnvParams::id_count() const {
  return static_cast<std::size_t>(std::count_if(inits.begin(), inits.end(), [](const auto& p) { return !p.ood; }));
}

std::size_t EnvParams::ood_count() const { return inits.size() - id_count(); }

Vec2 EnvParams::true_position(Vec2 observed) const {
  if (!miscalibrated) return observed;
  return {observed[0] + bias[0] + gain * observed[0], observed[1] + bias[1] + gain * observed[1]};
}

void EnvParams::validate() const {
  if (horizon < 1) throw ConfigError("horizon must be positive");
  if (max_decisions < 1) throw ConfigError("max_decisions must be positive");
  if (!(max_step > 0.0) || !(tolerance > 0.0)) throw ConfigError("max_step and tolerance must be positive");
  if (actuation_noise < 0.0 || init_jitter < 0.0) throw ConfigError("noise levels must be non-negative");
  if (inits.empty()) throw ConfigError("no init positions");
  if (id_count() == 0) throw ConfigError("need at least one in-distribution init position");
}

EnvParams EnvParams::defaults(Task task) {
  EnvParams p;
  p.task = task;
  for (double y : {0.05, 0.35}) {
    for (double x : {-0.45, -0.15, 0.15, 0.45}) p.inits.push_back({{x, y}, {-0.6 * x, 0.75}, false});
  }
  p.inits.push_back({{-0.8, 0.7}, {0.5, 0.85}, true});
  p.inits.push_back({{0.8, 0.7}, {-0.5, 0.85}, true});
  switch (task) {
    case Task::reach:
      p.tolerance = 0.05;
      p.bias = {0.03, 0.03};
      p.gain = 0.06;
      break;
    case Task::place:
      p.tolerance = 0.05;
      p.bias = {0.03, 0.03};
      p.gain = 0.06;
      p.max_decisions = 12;  // two legs
      break;
    case Task::insert:
      p.tolerance = 0.025;
      p.bias = {0.02, 0.01};
      p.gain = 0.04;
      break;
  }
  return p;
}

SimEnv::SimEnv(EnvParams params) : params_(std::move(params)) {
  params_.validate();
  reset(0, 0);
}

const std::vector<double>& SimEnv::reset(std::size_t index, std::uint64_t episode_seed) {
  if (index >= params_.inits.size()) throw DomainError("init index out of range");
  init_index_ = index;
  const Rng base(episode_seed);
  Rng jit = base.derive(1);
  noise_ = base.derive(2);
  const auto& init = params_.inits[index];
  const double w = params_.init_jitter;
  ee_ = jitter(params_.ee_start, w, jit);
  const Vec2 obs_target = jitter(init.target, w, jit);
  const Vec2 obs_goal = jitter(init.goal, w, jit);
  const Vec2 true_target = params_.true_position(obs_target);
  const Vec2 true_goal = params_.true_position(obs_goal);
  grip_ = false;
  holding_ = false;
  success_ = false;
  decisions_ = 0;
  steps_ = 0;
  switch (params_.task) {
    case Task::reach:
    case Task::place:
      obj_ = true_target;
      goal_ = true_goal;
      obj_bias_ = {true_target[0] - obs_target[0], true_target[1] - obs_target[1]};
      goal_bias_ = {true_goal[0] - obs_goal[0], true_goal[1] - obs_goal[1]};
      break;
    case Task::insert:
      holding_ = true;
      grip_ = true;
      obj_ = ee_;
      goal_ = true_target;
      obj_bias_ = {0.0, 0.0};
      goal_bias_ = {true_target[0] - obs_target[0], true_target[1] - obs_target[1]};
      break;
  }
  refresh_state();
  return state_;
}

void SimEnv::refresh_state() {
  const Vec2 obs_obj = holding_ ? ee_ : Vec2{obj_[0] - obj_bias_[0], obj_[1] - obj_bias_[1]};
  Vec2 obs_goal{goal_[0] - goal_bias_[0], goal_[1] - goal_bias_[1]};
  if (params_.task == Task::reach) obs_goal = {0.0, 0.0};
  state_ = {ee_[0], ee_[1], obs_obj[0], obs_obj[1], obs_goal[0], obs_goal[1], grip_ ? 1.0 : 0.0, holding_ ? 1.0 : 0.0};
}

Vec2 SimEnv::current_target() const {
  switch (params_.task) {
    case Task::reach:
      return obj_;
    case Task::place:
      return holding_ ? goal_ : obj_;
    case Task::insert:
      return goal_;
  }
  return obj_;
}

double SimEnv::target_distance() const { return dist(ee_, current_target()); }

void SimEnv::apply(std::span<const double> a, bool noisy, StepResult& out) {
  double dx = a[0], dy = a[1];
  if (!std::isfinite(dx) || !std::isfinite(dy) || !std::isfinite(a[2])) throw NumericError("non-finite action", steps_);
  const double n = std::hypot(dx, dy);
  if (n > params_.max_step) {
    dx *= params_.max_step / n;
    dy *= params_.max_step / n;
  }
  if (noisy && params_.actuation_noise > 0.0) {
    dx += noise_.normal(0.0, params_.actuation_noise);
    dy += noise_.normal(0.0, params_.actuation_noise);
  }
  ee_ = {std::clamp(ee_[0] + dx, -1.0, 1.0), std::clamp(ee_[1] + dy, -1.0, 1.0)};
  const bool trigger = a[2] > 0.0;
  grip_ = trigger;
  const double tol = params_.tolerance;
  switch (params_.task) {
    case Task::reach:
      if (trigger && dist(ee_, obj_) <= tol) success_ = true;
      break;
    case Task::place:
      if (holding_) {
        obj_ = ee_;
        if (!trigger) {
          holding_ = false;
          if (dist(ee_, goal_) <= tol) success_ = true;
        }
      } else if (trigger && dist(ee_, obj_) <= tol) {
        holding_ = true;
        obj_ = ee_;
      }
      break;
    case Task::insert:
      obj_ = ee_;
      if (trigger && dist(ee_, goal_) <= tol) success_ = true;
      break;
  }
  ++steps_;
  out.done = success_;
  out.reward = success_ ? 1.0 : 0.0;
}

StepResult SimEnv::step(std::span<const double> action) {
  if (action.size() != kActionDim) throw ShapeError("action must have 3 entries");
  if (success_) throw DomainError("step after episode success");
  StepResult r;
  apply(action, true, r);
  refresh_state();
  return r;
}

ChunkOutcome SimEnv::execute_chunk(std::span<const double> chunk) {
  if (chunk.size() != params_.chunk_shape().size()) throw ShapeError("chunk has wrong size");
  if (finished()) throw DomainError("execute_chunk on a finished episode");
  ++decisions_;
  ChunkOutcome out;
  for (std::size_t i = 0; i < params_.horizon; ++i) {
    StepResult r;
    apply(chunk.subspan(i * kActionDim, kActionDim), true, r);
    ++out.steps;
    if (r.done) {
      out.reward = r.reward;
      out.done = true;
      break;
    }
  }
  refresh_state();
  out.truncated = truncated();
  return out;
}

std::vector<double> SimEnv::expert_action(const Vec2& aim) const {
  const Vec2 target = current_target();
  const double dx = target[0] + aim[0] - ee_[0], dy = target[1] + aim[1] - ee_[1];
  const double n = std::hypot(dx, dy);
  const bool arrive = n <= params_.max_step;
  const double s = arrive ? 1.0 : params_.max_step / n;
  // trigger: grasp/push on arrival; while carrying, keep closed until arrival
  double trigger = arrive ? 1.0 : -1.0;
  if (params_.task == Task::place && holding_) trigger = arrive ? -1.0 : 1.0;
  if (params_.task == Task::insert && !arrive) trigger = -1.0;
  return {dx * s, dy * s, trigger};
}

std::vector<double> SimEnv::expert_chunk(const Vec2& aim) const {
  SimEnv sim = *this;
  std::vector<double> chunk;
  chunk.reserve(params_.chunk_shape().size());
  std::vector<double> last{0.0, 0.0, -1.0};
  for (std::size_t i = 0; i < params_.horizon; ++i) {
    if (sim.success_) {
      chunk.insert(chunk.end(), {0.0, 0.0, last[2]});
      continue;
    }
    last = sim.expert_action(aim);
    StepResult r;
    sim.apply(last, false, r);
    chunk.insert(chunk.end(), last.begin(), last.end());
  }
  return chunk;
}

SimEnv::Prediction SimEnv::predict(std::span<const double> chunk) const {
  if (chunk.size() != params_.chunk_shape().size()) throw ShapeError("chunk has wrong size");
  SimEnv sim = *this;
  for (std::size_t i = 0; i < params_.horizon && !sim.success_; ++i) {
    StepResult r;
    sim.apply(chunk.subspan(i * kActionDim, kActionDim), false, r);
  }
  Prediction p;
  p.end_ee = sim.ee_;
  p.success = sim.success_;
  p.final_distance = dist(sim.ee_, sim.current_target());
  return p;
}

std::uint64_t SimEnv::fingerprint() const {
  const std::vector<double> v{ee_[0],
                              ee_[1],
                              obj_[0],
                              obj_[1],
                              goal_[0],
                              goal_[1],
                              grip_ ? 1.0 : 0.0,
                              holding_ ? 1.0 : 0.0,
                              success_ ? 1.0 : 0.0,
                              static_cast<double>(decisions_),
                              static_cast<double>(steps_)};
  return fnv1a(v);
}

DemoSet generate_demos(const EnvParams& params, std::size_t n, double aim_radius, Rng& rng) {
  EnvParams nominal = params;
  nominal.miscalibrated = false;
  if (aim_radius >= nominal.tolerance) throw ConfigError("aim_radius must be below the success tolerance");
  std::vector<std::size_t> id;
  for (std::size_t i = 0; i < nominal.inits.size(); ++i) {
    if (!nominal.inits[i].ood) id.push_back(i);
  }
  SimEnv env(nominal);
  DemoSet demos;
  demos.shape = nominal.chunk_shape();
  demos.state_dim = kStateDim;
  for (std::size_t d = 0; d < n; ++d) {
    const std::size_t index = id[d % id.size()];
    const std::uint64_t seed = rng.next_u64();
    const double r = aim_radius * std::sqrt(rng.uniform());
    const double th = 2.0 * std::numbers::pi * rng.uniform();
    const Vec2 aim{r * std::cos(th), r * std::sin(th)};
    env.reset(index, seed);
    while (!env.finished()) {
      auto chunk = env.expert_chunk(aim);
      demos.add({env.state(), chunk});
      env.execute_chunk(chunk);
    }
    if (!env.success()) throw ConfigError("scripted demonstration failed; check env parameters");
  }
  return demos;
}

}  // namespace noisesteer
