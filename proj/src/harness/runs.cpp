#include "noisesteer/harness/runs.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "noisesteer/envs/corrector.hpp"
#include "noisesteer/envs/evaluate.hpp"
#include "noisesteer/errors.hpp"
#include "noisesteer/flow/pretrain.hpp"
#include "noisesteer/numerics/archive.hpp"
#include "noisesteer/rl/rollout.hpp"
#include "noisesteer/rl/trainer.hpp"

namespace noisesteer {

namespace {

using Record = RunLedger::Record;

constexpr std::string_view kCheckpointFormat = "noisesteer-run";

Record eval_record(const SuccessReport& r) {
  return Record{{"id", r.id}, {"ood", r.ood}, {"overall", r.overall}, {"id_trials", r.id_trials},
                {"ood_trials", r.ood_trials}};
}

Record composition(std::size_t model_only, std::size_t mixed, std::size_t human_only) {
  return Record{{"model_only", model_only}, {"mixed", mixed}, {"human_only", human_only}};
}

class Runner {
 public:
  virtual ~Runner() = default;
  virtual SuccessReport evaluate_policy() = 0;
  /// Performs round `round` (0-based); the body must carry "episodes",
  /// "decisions", "takeovers", "env_steps_round", "aborted".
  virtual Record run_round_body(std::size_t round) = 0;
  virtual void save(std::ostream& os) const = 0;
  virtual void load(std::istream& is) = 0;
};

class NoiseRunner final : public Runner {
 public:
  NoiseRunner(const ExperimentConfig& cfg, const PolicySetup& setup, ScheduleSpec schedule,
              std::unique_ptr<Corrector> corrector)
      : params_(cfg.env_params()),
        protocol_(cfg.eval_protocol()),
        decoder_(setup.decoder),
        trainer_(setup.decoder.state_dim(), setup.decoder.noise_dim(), cfg.trainer_config(),
                 setup.decoder.state_normalizer(), cfg.seed),
        env_(params_),
        corrector_(std::move(corrector)),
        schedule_(schedule),
        round_cfg_(cfg.round_config()) {}

  SuccessReport evaluate_policy() override {
    const ChunkPolicy pol = [this](const SimEnv& e) {
      return decoder_.denormalize_action(decoder_.decode(e.state(), trainer_.actor().mean_noise(e.state())));
    };
    return evaluate(pol, params_, protocol_);
  }

  Record run_round_body(std::size_t round) override {
    const auto dec_sum = decoder_.checksum();
    const auto rl_added = trainer_.rl_buffer().total_added();
    const auto demo_size = trainer_.demo_buffer().size();
    const auto demo_reads = trainer_.demo_buffer().reads();
    const auto critic_sum = trainer_.critic().checksum();
    const auto target_sum = trainer_.critic().target_checksum();
    const auto critic_updates = trainer_.critic_updates();

    const auto st = run_round(trainer_, decoder_, env_, *corrector_, schedule_, round_cfg_, round);

    const bool decoder_frozen = decoder_.checksum() == dec_sum;
    const bool rl_routing = trainer_.rl_buffer().total_added() - rl_added == st.decisions;
    const bool demo_routing = trainer_.demo_buffer().size() - demo_size == st.takeovers;
    bool exclusive = true;
    if (!schedule_.runs_rl()) {
      exclusive = exclusive && trainer_.critic().checksum() == critic_sum &&
                  trainer_.critic().target_checksum() == target_sum && trainer_.critic_updates() == critic_updates;
    }
    if (!schedule_.runs_sft()) exclusive = exclusive && trainer_.demo_buffer().reads() == demo_reads;

    Record u{{"sft_steps", st.updates.sft_steps}, {"rl_steps", st.updates.rl_steps},
             {"sft_loss", st.updates.sft_loss},   {"critic_loss", st.updates.critic_loss},
             {"actor_loss", st.updates.actor_loss}, {"order", st.updates.order}};
    Record b{{"episodes", st.episodes},
             {"successes", st.successes},
             {"rollout_success", st.success_rate},
             {"composition", composition(st.model_only, st.mixed, st.human_only)},
             {"decisions", st.decisions},
             {"takeovers", st.takeovers},
             {"env_steps_round", st.env_steps},
             {"unreachable", st.unreachable},
             {"mean_inversion_loss", st.mean_inversion_loss},
             {"buffers", Record{{"rl", st.rl_buffer}, {"demo", st.demo_buffer}}},
             {"updates", u},
             {"alpha", trainer_.alpha()},
             {"invariants",
              Record{{"decoder_frozen", decoder_frozen},
                     {"rl_routing", rl_routing},
                     {"demo_routing", demo_routing},
                     {"schedule_exclusive", exclusive}}},
             {"invariants_ok", decoder_frozen && rl_routing && demo_routing && exclusive},
             {"aborted", st.aborted}};
    if (st.aborted) b["error"] = st.error;
    return b;
  }

  void save(std::ostream& os) const override { trainer_.save(os); }
  void load(std::istream& is) override { trainer_.load(is); }

 private:
  EnvParams params_;
  EvalProtocol protocol_;
  const FlowDecoder& decoder_;
  NoiseTrainer trainer_;
  SimEnv env_;
  std::unique_ptr<Corrector> corrector_;
  ScheduleSpec schedule_;
  RoundConfig round_cfg_;
};

class DaggerRunner final : public Runner {
 public:
  DaggerRunner(const ExperimentConfig& cfg, const PolicySetup& setup)
      : params_(cfg.env_params()),
        protocol_(cfg.eval_protocol()),
        dagger_(cfg.dagger_config()),
        episodes_(cfg.episodes_per_round),
        seed_(cfg.seed),
        base_(setup.decoder),
        base_sum_(setup.decoder.checksum()),
        policy_(setup.decoder),
        opt_(dagger_.lr),
        rng_(Rng(cfg.seed).derive(0xda66e7)),
        env_(params_) {
    for (const auto& d : setup.demos.items) aggregate_.push_back({d.state, policy_.normalize_action(d.chunk)});
  }

  std::vector<double> act(const SimEnv& e) const {
    const std::vector<double> zero(policy_.noise_dim(), 0.0);
    return policy_.denormalize_action(policy_.decode(e.state(), zero));
  }

  SuccessReport evaluate_policy() override {
    return evaluate([this](const SimEnv& e) { return act(e); }, params_, protocol_);
  }

  Record run_round_body(std::size_t round) override {
    const std::size_t agg_before = aggregate_.size();
    std::size_t episodes = 0, successes = 0, decisions = 0, takeovers = 0, steps = 0;
    std::size_t model_only = 0, mixed = 0, human_only = 0;
    bool aborted = false;
    std::string error;
    try {
      for (std::size_t e = 0; e < episodes_; ++e) {
        env_.reset(round_position(round, e, episodes_, params_.inits.size()), round_episode_seed(seed_, round, e));
        corrector_.begin_episode(env_);
        const std::size_t steps_before = env_.steps_taken();
        std::size_t dec = 0, tk = 0;
        while (!env_.finished()) {
          const auto proposal = act(env_);
          const auto d = corrector_.decide(env_, proposal);
          if (d.takeover) {
            aggregate_.push_back({env_.state(), policy_.normalize_action(d.chunk)});
            ++tk;
          }
          env_.execute_chunk(d.takeover ? std::span<const double>(d.chunk) : std::span<const double>(proposal));
          ++dec;
        }
        ++episodes;
        successes += env_.success();
        decisions += dec;
        takeovers += tk;
        steps += env_.steps_taken() - steps_before;
        if (tk == 0) {
          ++model_only;
        } else if (tk == dec) {
          ++human_only;
        } else {
          ++mixed;
        }
      }
    } catch (const std::exception& ex) {
      aborted = true;
      error = ex.what();
    }
    double loss = 0.0;
    if (!aborted) {
      for (std::size_t i = 0; i < dagger_.steps_per_round; ++i) {
        loss += flow_matching_step(policy_, aggregate_, dagger_.batch_size, opt_, rng_);
      }
      if (dagger_.steps_per_round) loss /= static_cast<double>(dagger_.steps_per_round);
    }
    const bool base_frozen = base_.checksum() == base_sum_;
    const bool routing = aggregate_.size() - agg_before == takeovers;
    Record b{{"episodes", episodes},
             {"successes", successes},
             {"rollout_success", episodes ? static_cast<double>(successes) / static_cast<double>(episodes) : 0.0},
             {"composition", composition(model_only, mixed, human_only)},
             {"decisions", decisions},
             {"takeovers", takeovers},
             {"env_steps_round", steps},
             {"aggregate", aggregate_.size()},
             {"finetune_loss", loss},
             {"invariants", Record{{"base_decoder_frozen", base_frozen}, {"aggregate_routing", routing}}},
             {"invariants_ok", base_frozen && routing},
             {"aborted", aborted}};
    if (aborted) b["error"] = error;
    return b;
  }

  void save(std::ostream& os) const override {
    policy_.save(os);
    ArchiveWriter w(os);
    w.tag("dagger-state", 1);
    opt_.save(w);
    w.put("rng", rng_.save_state());
    w.put_u64("aggregate", aggregate_.size());
    for (const auto& d : aggregate_) {
      w.put("s", d.state);
      w.put("a", d.chunk);
    }
  }

  void load(std::istream& is) override {
    policy_ = FlowDecoder::load(is);
    ArchiveReader r(is);
    r.expect_tag("dagger-state", 1);
    opt_.load(r);
    rng_.load_state(r.get_string("rng"));
    const auto n = r.get_u64("aggregate");
    aggregate_.clear();
    for (std::uint64_t i = 0; i < n; ++i) {
      Demo d;
      d.state = r.get_vector("s");
      d.chunk = r.get_vector("a");
      aggregate_.push_back(std::move(d));
    }
  }

 private:
  EnvParams params_;
  EvalProtocol protocol_;
  DaggerConfig dagger_;
  std::size_t episodes_;
  std::uint64_t seed_;
  const FlowDecoder& base_;
  std::uint64_t base_sum_;
  FlowDecoder policy_;
  Adam opt_;
  Rng rng_;
  SimEnv env_;
  AlwaysCorrector corrector_;
  std::vector<Demo> aggregate_;  // normalized chunks
};

struct Totals {
  std::uint64_t env_steps = 0;
  std::uint64_t decisions = 0;
  std::uint64_t human = 0;
};

void write_checkpoint(const std::string& path, const ExperimentConfig& cfg, Method m, std::size_t round,
                      const Totals& totals, const RunLedger& ledger, const Runner& runner) {
  namespace fs = std::filesystem;
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw ConfigError("cannot write " + tmp);
    ArchiveWriter w(os);
    w.tag(kCheckpointFormat, 1);
    w.put("method", method_name(m));
    w.put_u64("config_hash", config_hash(cfg));
    w.put_u64("round", round);
    w.put_u64("env_steps", totals.env_steps);
    w.put_u64("decisions", totals.decisions);
    w.put_u64("human", totals.human);
    w.put_u64("records", ledger.size());
    for (const auto& r : ledger.records()) w.put("record", r.dump());
    runner.save(os);
    if (!os) throw ConfigError("write failed: " + tmp);
  }
  fs::rename(tmp, path);
}

/// Reads the checkpoint header and restores the runner; returns the round.
std::size_t read_checkpoint(std::istream& is, const ExperimentConfig& cfg, Method m, Totals& totals, RunLedger& ledger,
                            Runner& runner) {
  ArchiveReader r(is);
  r.expect_tag(kCheckpointFormat, 1);
  if (r.get_string("method") != method_name(m)) throw ConfigError("checkpoint belongs to a different method");
  if (r.get_u64("config_hash") != config_hash(cfg)) throw ConfigError("checkpoint was written with another config");
  const auto round = r.get_u64("round");
  totals.env_steps = r.get_u64("env_steps");
  totals.decisions = r.get_u64("decisions");
  totals.human = r.get_u64("human");
  const auto n = r.get_u64("records");
  for (std::uint64_t i = 0; i < n; ++i) ledger.append(Record::parse(r.get_string("record")));
  runner.load(is);
  return round;
}

std::unique_ptr<Runner> make_runner(const ExperimentConfig& cfg, const PolicySetup& setup, Method m) {
  switch (m) {
    case Method::unisteer:
      return std::make_unique<NoiseRunner>(cfg, setup, cfg.schedule_spec(),
                                           std::make_unique<OracleCorrector>(cfg.corrector_config()));
    case Method::dsrl: {
      auto spec = cfg.schedule_spec();
      spec.variant = ScheduleVariant::only_rl;
      return std::make_unique<NoiseRunner>(cfg, setup, spec, std::make_unique<NeverCorrector>());
    }
    case Method::dagger:
      return std::make_unique<DaggerRunner>(cfg, setup);
    default:
      throw ConfigError(std::string("method '") + method_name(m) + "' is an ablation arm, not an adaptation run");
  }
}

RunLedger drive(const ExperimentConfig& cfg, Method m, Runner& runner, const RunOptions& opts) {
  cfg.validate();
  RunLedger ledger;
  Totals totals;
  std::size_t start = 0;
  const auto emit = [&](Record rec) {
    ledger.append(rec);
    if (opts.on_record) opts.on_record(rec);
  };

  if (!opts.resume_from.empty()) {
    std::ifstream is(opts.resume_from);
    if (!is) throw ConfigError("cannot read checkpoint " + opts.resume_from);
    start = read_checkpoint(is, cfg, m, totals, ledger, runner);
  } else {
    Record init{{"kind", "initial"}, {"method", method_name(m)}, {"round", 0},
                {"env_steps", 0},    {"decisions_total", 0},     {"human_decisions_total", 0}};
    init["eval"] = eval_record(runner.evaluate_policy());
    emit(std::move(init));
  }

  for (std::size_t round = start; round < cfg.rounds; ++round) {
    const auto t0 = std::chrono::steady_clock::now();
    auto body = runner.run_round_body(round);
    totals.env_steps += body["env_steps_round"].get<std::uint64_t>();
    totals.decisions += body["decisions"].get<std::uint64_t>();
    totals.human += body["takeovers"].get<std::uint64_t>();
    Record rec{{"kind", "round"},
               {"round", round + 1},
               {"env_steps", totals.env_steps},
               {"decisions_total", totals.decisions},
               {"human_decisions_total", totals.human}};
    rec.update(body);
    rec["eval"] = eval_record(runner.evaluate_policy());
    rec["wall_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool aborted = rec["aborted"].get<bool>();
    emit(std::move(rec));
    if (aborted) break;
    if (cfg.checkpoint_every && (round + 1) % cfg.checkpoint_every == 0) {
      if (opts.checkpoint_dir.empty()) throw ConfigError("checkpoint_every needs a checkpoint directory");
      const auto path = checkpoint_path(opts.checkpoint_dir, m, round + 1);
      emit(Record{{"kind", "checkpoint"}, {"round", round + 1}, {"path", path}});
      write_checkpoint(path, cfg, m, round + 1, totals, ledger, runner);
    }
    if (opts.stop_after_round && round + 1 >= *opts.stop_after_round) break;
  }
  return ledger;
}

}  // namespace

PolicySetup prepare_policy(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto params = cfg.env_params();
  Rng rng(cfg.seed);
  PolicySetup s;
  s.demos = generate_demos(params, cfg.demos, cfg.demo_aim_fraction * params.tolerance, rng);
  s.decoder = make_decoder_for(s.demos, cfg.denoise_steps, cfg.flow_hidden, rng);
  s.pretrain_curve = pretrain_flow(s.decoder, s.demos, cfg.flow_config(), rng);
  return s;
}

RunLedger run_unisteer(const ExperimentConfig& cfg, const PolicySetup& setup, const RunOptions& opts) {
  return drive(cfg, Method::unisteer, *make_runner(cfg, setup, Method::unisteer), opts);
}

RunLedger run_dsrl_baseline(const ExperimentConfig& cfg, const PolicySetup& setup, const RunOptions& opts) {
  return drive(cfg, Method::dsrl, *make_runner(cfg, setup, Method::dsrl), opts);
}

RunLedger run_dagger_baseline(const ExperimentConfig& cfg, const PolicySetup& setup, const RunOptions& opts) {
  return drive(cfg, Method::dagger, *make_runner(cfg, setup, Method::dagger), opts);
}

RunLedger run_unisteer(const ExperimentConfig& cfg) { return run_unisteer(cfg, prepare_policy(cfg)); }
RunLedger run_dsrl_baseline(const ExperimentConfig& cfg) { return run_dsrl_baseline(cfg, prepare_policy(cfg)); }
RunLedger run_dagger_baseline(const ExperimentConfig& cfg) { return run_dagger_baseline(cfg, prepare_policy(cfg)); }

RunLedger run_adaptation(const ExperimentConfig& cfg, const PolicySetup& setup, const RunOptions& opts) {
  const auto m = cfg.method_id();
  return drive(cfg, m, *make_runner(cfg, setup, m), opts);
}

SuccessReport evaluate_checkpoint(const ExperimentConfig& cfg, const PolicySetup& setup, const std::string& path) {
  const auto m = cfg.method_id();
  auto runner = make_runner(cfg, setup, m);
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read checkpoint " + path);
  Totals totals;
  RunLedger ledger;
  read_checkpoint(is, cfg, m, totals, ledger, *runner);
  return runner->evaluate_policy();
}

SuccessReport evaluate_base_policy(const ExperimentConfig& cfg, const FlowDecoder& decoder) {
  const std::vector<double> zero(decoder.noise_dim(), 0.0);
  const ChunkPolicy pol = [&](const SimEnv& e) { return decoder.denormalize_action(decoder.decode(e.state(), zero)); };
  return evaluate(pol, cfg.env_params(), cfg.eval_protocol());
}

void save_policy(const PolicySetup& setup, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  setup.decoder.save((fs::path(dir) / "decoder.nsd").string());
  setup.demos.save((fs::path(dir) / "demos.jsonl").string());
  std::ofstream os(fs::path(dir) / "pretrain_curve.jsonl");
  if (!os) throw ConfigError("cannot write " + (fs::path(dir) / "pretrain_curve.jsonl").string());
  for (std::size_t i = 0; i < setup.pretrain_curve.size(); ++i) {
    os << Record{{"step", i + 1}, {"loss", setup.pretrain_curve[i]}}.dump() << '\n';
  }
}

PolicySetup load_policy(const std::string& dir) {
  namespace fs = std::filesystem;
  PolicySetup s;
  s.decoder = FlowDecoder::load((fs::path(dir) / "decoder.nsd").string());
  s.demos = DemoSet::load((fs::path(dir) / "demos.jsonl").string());
  std::ifstream is(fs::path(dir) / "pretrain_curve.jsonl");
  for (std::string line; std::getline(is, line);) {
    if (!line.empty()) s.pretrain_curve.push_back(Record::parse(line).at("loss").get<double>());
  }
  return s;
}

std::string checkpoint_path(const std::string& dir, Method method, std::size_t round) {
  return (std::filesystem::path(dir) / (std::string(method_name(method)) + "_round_" + std::to_string(round) + ".ckpt"))
      .string();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  std::ostringstream os;
  cfg.write(os);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace noisesteer
