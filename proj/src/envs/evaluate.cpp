#include "noisesteer/envs/evaluate.hpp"

#include "json.hpp"
#include <ostream>

#include "noisesteer/errors.hpp"

namespace noisesteer {

double overall_rate(double id, std::size_t n_id, double ood, std::size_t n_ood) {
  const std::size_t n = n_id + n_ood;
  if (n == 0) return 0.0;
  return (static_cast<double>(n_id) * id + static_cast<double>(n_ood) * ood) / static_cast<double>(n);
}

std::uint64_t trial_seed(std::uint64_t protocol_seed, std::size_t position, std::size_t trial) {
  return Rng(protocol_seed).derive(position * 1009 + trial).next_u64();
}

SuccessReport evaluate(const ChunkPolicy& policy, const EnvParams& params, const EvalProtocol& protocol) {
  if (protocol.trials_per_position == 0) throw ConfigError("trials_per_position must be positive");
  SimEnv env(params);
  SuccessReport rep;
  std::size_t id_ok = 0, ood_ok = 0;
  for (std::size_t pos = 0; pos < params.inits.size(); ++pos) {
    for (std::size_t t = 0; t < protocol.trials_per_position; ++t) {
      env.reset(pos, trial_seed(protocol.seed, pos, t));
      while (!env.finished()) env.execute_chunk(policy(env));
      TrialRecord r{pos, t, env.is_ood(), env.success(), env.decisions(), env.steps_taken()};
      if (r.ood) {
        ++rep.ood_trials;
        ood_ok += r.success;
      } else {
        ++rep.id_trials;
        id_ok += r.success;
      }
      rep.trials.push_back(r);
    }
  }
  rep.id = rep.id_trials ? static_cast<double>(id_ok) / static_cast<double>(rep.id_trials) : 0.0;
  rep.ood = rep.ood_trials ? static_cast<double>(ood_ok) / static_cast<double>(rep.ood_trials) : 0.0;
  rep.overall = overall_rate(rep.id, rep.id_trials, rep.ood, rep.ood_trials);
  return rep;
}

void SuccessReport::write_jsonl(std::ostream& os) const {
  for (const auto& t : trials) {
    nlohmann::json j{{"position", t.position}, {"trial", t.trial},         {"split", t.ood ? "ood" : "id"},
                     {"success", t.success},   {"decisions", t.decisions}, {"steps", t.steps}};
    os << j.dump() << '\n';
  }
}

ChunkPolicy expert_policy() {
  return [](const SimEnv& env) { return env.expert_chunk(); };
}

}  // namespace noisesteer
