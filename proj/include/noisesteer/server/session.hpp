#pragma once
// Turn-based operator session over a live adaptation run. The run pauses at
// every decision until the controller either lets the policy act ("step") or,
// with takeover on, submits a corrective chunk for the current frame.
//
// Episodes, seeds, noise sampling and update blocks follow run_round exactly,
// so a recorded session replayed through ReplayCorrector + run_round rebuilds
// the same buffers and parameters.
//
// Messages are JSON objects with a schema version "v" and a "type":
//   client: takeover_on, takeover_off, step, correction{seq, chunk}
//   server: frame, status, stepped, ack, reject{code, current_seq}

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "noisesteer/envs/corrector.hpp"
#include "noisesteer/envs/sim_env.hpp"
#include "noisesteer/flow/flow_decoder.hpp"
#include "noisesteer/rl/rollout.hpp"
#include "noisesteer/rl/trainer.hpp"

namespace noisesteer::server {

inline constexpr int kSchemaVersion = 1;
using Message = nlohmann::ordered_json;

struct SessionConfig {
  RoundConfig round;
  ScheduleSpec schedule;
  std::size_t rounds = 1;  // the session completes after this many rounds
  std::string id = "session";
};

/// One executed decision, in order.
struct DecisionRecord {
  std::size_t round = 0;
  std::size_t episode = 0;
  std::uint64_t seq = 0;
  bool takeover = false;
  std::vector<double> chunk;  // the human chunk (raw units) when takeover
};

/// JSONL session logs, one decision per line.
void write_log(const std::vector<DecisionRecord>& log, std::ostream& os);
std::vector<DecisionRecord> read_log(std::istream& is);

class Session {
 public:
  /// The first episode starts immediately; the decoder must outlive the session.
  Session(const FlowDecoder& decoder, NoiseTrainer& trainer, SimEnv& env, SessionConfig cfg);

  /// Frame for the pending decision (or a final frame once complete).
  Message frame() const;
  /// Handles one control message and returns the reply. Never throws on bad
  /// input; malformed messages get a reject.
  Message handle(const Message& msg);

  std::uint64_t seq() const;
  bool takeover() const { return takeover_; }
  bool complete() const { return complete_; }
  const std::string& id() const { return cfg_.id; }
  std::size_t round() const { return round_; }
  std::size_t episode() const { return episode_; }
  const std::vector<DecisionRecord>& log() const { return log_; }
  const std::vector<RoundStats>& finished_rounds() const { return finished_; }
  /// Environment low-level steps so far; unchanged while awaiting a correction.
  std::size_t env_steps() const;

  static Message reject(const std::string& code, const std::string& message, std::optional<std::uint64_t> seq = {});

 private:
  void after_commit(const CommitResult& r);
  void begin_episode();
  void finish_round();
  Message overlay(const std::vector<double>& chunk) const;

  const FlowDecoder& decoder_;
  NoiseTrainer& trainer_;
  SimEnv& env_;
  SessionConfig cfg_;
  RolloutSession rollout_;
  bool takeover_ = false;
  bool complete_ = false;
  std::size_t round_ = 0;
  std::size_t episode_ = 0;
  std::size_t steps_done_ = 0;  // low-level steps of finished episodes
  RoundStats current_;
  double inv_loss_sum_ = 0.0;
  std::size_t inversions_ = 0;
  std::optional<double> last_loss_;
  std::vector<DecisionRecord> log_;
  std::vector<RoundStats> finished_;
};

/// Plays back a session log as a scripted corrector.
class ReplayCorrector : public Corrector {
 public:
  explicit ReplayCorrector(std::vector<DecisionRecord> log) : log_(std::move(log)) {}
  CorrectorDecision decide(const SimEnv& env, std::span<const double> proposed) override;
  std::size_t remaining() const { return log_.size() - next_; }

 private:
  std::vector<DecisionRecord> log_;
  std::size_t next_ = 0;
};

}  // namespace noisesteer::server
