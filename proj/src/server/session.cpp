#include "noisesteer/server/session.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "noisesteer/errors.hpp"

namespace noisesteer::server {

namespace {

Message vec2(const Vec2& v) { return Message::array({v[0], v[1]}); }

}  // namespace

Session::Session(const FlowDecoder& decoder, NoiseTrainer& trainer, SimEnv& env, SessionConfig cfg)
    : decoder_(decoder),
      trainer_(trainer),
      env_(env),
      cfg_(cfg),
      rollout_(decoder, trainer, env, cfg.round.inversion, true) {
  if (cfg_.round.episodes == 0) throw ConfigError("a session needs at least one episode per round");
  if (cfg_.rounds == 0) {
    complete_ = true;
    return;
  }
  begin_episode();
}

std::uint64_t Session::seq() const { return rollout_.seq(); }

std::size_t Session::env_steps() const { return complete_ ? steps_done_ : steps_done_ + env_.steps_taken(); }

Message Session::reject(const std::string& code, const std::string& message, std::optional<std::uint64_t> seq) {
  Message m{{"v", kSchemaVersion}, {"type", "reject"}, {"code", code}, {"message", message}};
  if (seq) m["current_seq"] = *seq;
  return m;
}

void Session::begin_episode() {
  current_.round = round_;
  const auto pos = round_position(round_, episode_, cfg_.round.episodes, env_.params().inits.size());
  rollout_.begin_episode(pos, round_episode_seed(cfg_.round.seed, round_, episode_));
  rollout_.propose();
}

void Session::finish_round() {
  auto& st = current_;
  st.success_rate = st.episodes ? static_cast<double>(st.successes) / static_cast<double>(st.episodes) : 0.0;
  st.mean_inversion_loss = inversions_ ? inv_loss_sum_ / static_cast<double>(inversions_) : 0.0;
  st.updates = run_updates(trainer_, cfg_.schedule);
  st.rl_buffer = trainer_.rl_buffer().size();
  st.demo_buffer = trainer_.demo_buffer().size();
  finished_.push_back(st);
  current_ = {};
  inv_loss_sum_ = 0.0;
  inversions_ = 0;
  ++round_;
  episode_ = 0;
  if (round_ >= cfg_.rounds) {
    complete_ = true;
    takeover_ = false;
    return;
  }
  begin_episode();
}

void Session::after_commit(const CommitResult& r) {
  if (r.takeover) {
    inv_loss_sum_ += r.reconstruction_loss;
    ++inversions_;
    current_.unreachable += r.unreachable;
    last_loss_ = r.reconstruction_loss;
  }
  if (!rollout_.episode_finished()) {
    rollout_.propose();
    return;
  }
  const auto& t = rollout_.tally();
  ++current_.episodes;
  current_.successes += t.success;
  current_.decisions += t.decisions;
  current_.takeovers += t.takeovers;
  current_.env_steps += env_.steps_taken();
  steps_done_ += env_.steps_taken();
  if (t.takeovers == 0) {
    ++current_.model_only;
  } else if (t.takeovers == t.decisions) {
    ++current_.human_only;
  } else {
    ++current_.mixed;
  }
  if (++episode_ >= cfg_.round.episodes) {
    finish_round();
  } else {
    begin_episode();
  }
}

Message Session::overlay(const std::vector<double>& chunk) const {
  const auto& p = env_.params();
  Message way = Message::array();
  Vec2 at = env_.ee();
  way.push_back(vec2(at));
  for (std::size_t k = 0; 3 * k + 2 < chunk.size(); ++k) {
    double dx = chunk[3 * k], dy = chunk[3 * k + 1];
    const double n = std::hypot(dx, dy);
    if (n > p.max_step) {
      dx *= p.max_step / n;
      dy *= p.max_step / n;
    }
    at = {std::clamp(at[0] + dx, -1.0, 1.0), std::clamp(at[1] + dy, -1.0, 1.0)};
    way.push_back(vec2(at));
  }
  const auto& s = env_.state();
  return Message{{"ee", vec2(env_.ee())},
                 {"object", vec2(env_.true_object())},
                 {"goal", vec2(env_.true_goal())},
                 {"object_observed", Message::array({s[2], s[3]})},
                 {"goal_observed", Message::array({s[4], s[5]})},
                 {"holding", env_.holding()},
                 {"tolerance", p.tolerance},
                 {"waypoints", way}};
}

Message Session::frame() const {
  Message f{{"v", kSchemaVersion}, {"type", "frame"}, {"session", cfg_.id}, {"seq", seq()}, {"complete", complete_}, {"takeover", takeover_}};
  const auto& p = env_.params();
  f["task"] = task_name(p.task);
  f["shape"] = {{"horizon", p.horizon}, {"action_dim", kActionDim}};
  f["max_step"] = p.max_step;
  if (!complete_) {
    const auto& prop = const_cast<RolloutSession&>(rollout_).propose();  // cached; no new draw
    f["state"] = prop.state;
    f["proposal"] = prop.chunk;
    f["overlay"] = overlay(prop.chunk);
  }
  Message stats{{"round", round_},
                {"episode", episode_},
                {"rounds_total", cfg_.rounds},
                {"episodes_per_round", cfg_.round.episodes},
                {"episode_decisions", rollout_.tally().decisions},
                {"episode_takeovers", rollout_.tally().takeovers},
                {"round_successes", current_.successes},
                {"rounds_completed", finished_.size()},
                {"rl_buffer", trainer_.rl_buffer().size()},
                {"demo_buffer", trainer_.demo_buffer().size()},
                {"env_steps", env_steps()}};
  stats["last_reconstruction_loss"] = last_loss_ ? Message(*last_loss_) : Message(nullptr);
  f["stats"] = stats;
  return f;
}

Message Session::handle(const Message& msg) {
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
    return reject("malformed", "expected an object with a string \"type\"", seq());
  }
  if (!msg.contains("v") || !msg["v"].is_number_integer() || msg["v"].get<int>() != kSchemaVersion) {
    return reject("unsupported_version", "schema version must be " + std::to_string(kSchemaVersion), seq());
  }
  const auto type = msg["type"].get<std::string>();
  const auto status = [&] {
    return Message{{"v", kSchemaVersion}, {"type", "status"}, {"takeover", takeover_}, {"seq", seq()}};
  };
  if (type == "takeover_off") {
    takeover_ = false;
    return status();
  }
  if (type != "takeover_on" && type != "step" && type != "correction") {
    return reject("unknown_type", "unknown message type '" + type + "'", seq());
  }
  if (complete_) return reject("session_complete", "the run has finished", seq());
  if (type == "takeover_on") {
    takeover_ = true;
    return status();
  }
  if (type == "step") {
    if (takeover_) return reject("takeover_active", "takeover is on: submit a correction or turn takeover off", seq());
    const auto s = seq();
    log_.push_back({round_, episode_, s, false, {}});
    const auto r = rollout_.commit_policy();
    after_commit(r);
    return Message{{"v", kSchemaVersion}, {"type", "stepped"}, {"seq", s},
                   {"reward", r.reward}, {"done", r.done}, {"next_seq", seq()}};
  }
  // correction
  if (!takeover_) return reject("takeover_inactive", "turn takeover on before correcting", seq());
  if (!msg.contains("seq") || !msg["seq"].is_number_unsigned() || !msg.contains("chunk") || !msg["chunk"].is_array()) {
    return reject("malformed", "correction needs an unsigned \"seq\" and a \"chunk\" array", seq());
  }
  const auto s = msg["seq"].get<std::uint64_t>();
  if (s != seq()) return reject("stale_seq", "frame " + std::to_string(s) + " is not the current decision", seq());
  std::vector<double> chunk;
  for (const auto& x : msg["chunk"]) {
    if (!x.is_number()) return reject("malformed", "chunk entries must be numbers", seq());
    chunk.push_back(x.get<double>());
  }
  if (chunk.size() != decoder_.noise_dim()) {
    return reject("bad_shape", "chunk must have " + std::to_string(decoder_.noise_dim()) + " values", seq());
  }
  if (!std::all_of(chunk.begin(), chunk.end(), [](double v) { return std::isfinite(v); })) {
    return reject("bad_shape", "chunk values must be finite", seq());
  }
  log_.push_back({round_, episode_, s, true, chunk});
  const auto r = rollout_.commit_correction(chunk);
  after_commit(r);
  return Message{{"v", kSchemaVersion},
                 {"type", "ack"},
                 {"seq", s},
                 {"reconstruction_loss", r.reconstruction_loss},
                 {"noise", r.stored_noise},
                 {"unreachable", r.unreachable},
                 {"contraction_warning", r.contraction_warning},
                 {"next_seq", seq()}};
}

void write_log(const std::vector<DecisionRecord>& log, std::ostream& os) {
  for (const auto& r : log) {
    Message m{{"round", r.round}, {"episode", r.episode}, {"seq", r.seq}, {"takeover", r.takeover}};
    if (r.takeover) m["chunk"] = r.chunk;
    os << m.dump() << '\n';
  }
}

std::vector<DecisionRecord> read_log(std::istream& is) {
  std::vector<DecisionRecord> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(is, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto m = Message::parse(line);
      DecisionRecord r;
      r.round = m.at("round").get<std::size_t>();
      r.episode = m.at("episode").get<std::size_t>();
      r.seq = m.at("seq").get<std::uint64_t>();
      r.takeover = m.at("takeover").get<bool>();
      if (r.takeover) r.chunk = m.at("chunk").get<std::vector<double>>();
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw FormatError("session log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

CorrectorDecision ReplayCorrector::decide(const SimEnv& env, std::span<const double> proposed) {
  (void)env;
  (void)proposed;
  if (next_ >= log_.size()) throw DomainError("replay log exhausted");
  const auto& r = log_[next_++];
  CorrectorDecision d;
  d.takeover = r.takeover;
  d.chunk = r.chunk;
  d.reason = "replay";
  return d;
}

}  // namespace noisesteer::server
