// noisesteer: command-line driver for pretraining, adaptation runs, the
// analysis suites, batch inversion, evaluation and the operator server.

#include <pthread.h>

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "noisesteer/errors.hpp"
#include "noisesteer/harness/ablations.hpp"
#include "noisesteer/harness/config.hpp"
#include "noisesteer/harness/ledger.hpp"
#include "noisesteer/harness/plots.hpp"
#include "noisesteer/harness/runs.hpp"
#include "noisesteer/server/session.hpp"
#include "noisesteer/server/ws_server.hpp"

namespace fs = std::filesystem;
using namespace noisesteer;
using Json = nlohmann::ordered_json;

namespace {

struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;
  std::string out = "out";
  bool quiet = false;
};

void add_config_options(CLI::App* sub, ConfigArgs& a) {
  sub->add_option("--config", a.file, "config file of key = value lines");
  sub->add_option("--set", a.sets, "override one key, key=value (repeatable)");
  sub->add_option("-o,--out", a.out, "output directory")->capture_default_str();
  sub->add_flag("-q,--quiet", a.quiet, "no per-record output on stdout");
  for (const auto& key : ExperimentConfig::keys()) {
    sub->add_option("--" + key, a.flags[key], "config key " + key)->group("Config keys");
  }
}

ExperimentConfig resolve(const CLI::App* sub, const ConfigArgs& a) {
  auto cfg = a.file.empty() ? ExperimentConfig{} : ExperimentConfig::load(a.file);
  for (const auto& key : ExperimentConfig::keys()) {
    if (sub->count("--" + key)) cfg.set(key, a.flags.at(key));
  }
  for (const auto& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  const auto dead = audit_config(cfg);
  if (!dead.empty()) {
    std::string list;
    for (const auto& k : dead) list += (list.empty() ? "" : ", ") + k;
    throw ConfigError("config audit: keys with no effect: " + list);
  }
  fs::create_directories(a.out);
  cfg.save((fs::path(a.out) / "config.txt").string());
  return cfg;
}

PolicySetup policy_for(const ExperimentConfig& cfg, const std::string& dir) {
  if (!dir.empty()) return load_policy(dir);
  return prepare_policy(cfg);
}

void write_json(const Json& j, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

std::vector<std::uint64_t> seed_list(const std::vector<std::uint64_t>& seeds, std::size_t n) {
  if (!seeds.empty()) return seeds;
  std::vector<std::uint64_t> out;
  for (std::uint64_t s = 1; s <= n; ++s) out.push_back(s);
  return out;
}

Json report_json(const SuccessReport& r) {
  return {{"id", r.id}, {"ood", r.ood}, {"overall", r.overall}, {"id_trials", r.id_trials}, {"ood_trials", r.ood_trials}};
}

// SIGINT/SIGTERM stop the server from a dedicated thread (sigwait), never
// from inside a handler.
class SignalStopper {
 public:
  explicit SignalStopper(server::InteractServer& srv) {
    sigemptyset(&set_);
    sigaddset(&set_, SIGINT);
    sigaddset(&set_, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set_, nullptr);
    thread_ = std::thread([this, &srv] {
      int sig = 0;
      sigwait(&set_, &sig);
      if (!done_) srv.stop();
    });
  }
  ~SignalStopper() {
    done_ = true;
    pthread_kill(thread_.native_handle(), SIGTERM);
    thread_.join();
  }

 private:
  sigset_t set_{};
  std::atomic<bool> done_{false};
  std::thread thread_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"noisesteer: noise-space adaptation of a pretrained flow policy on toy tasks"};
  app.require_subcommand(1);

  ConfigArgs pre_a, adapt_a, sup_a, it_a, sch_a, cmp_a, inv_a, eval_a, srv_a;
  std::string policy_dir, corpus_file, resume, checkpoint, bind = "127.0.0.1:8765";
  std::optional<std::size_t> stop_after;
  std::vector<std::uint64_t> seeds;
  std::size_t n_seeds = 5, workers = 1;

  auto* pre = app.add_subcommand("pretrain", "generate demos and pretrain the flow decoder");
  add_config_options(pre, pre_a);

  auto* adapt = app.add_subcommand("adapt", "run unisteer, dsrl or dagger (cfg method) and log per-round metrics");
  add_config_options(adapt, adapt_a);
  adapt->add_option("--policy", policy_dir, "pretrained policy directory (default: pretrain from the config)");
  adapt->add_option("--resume", resume, "checkpoint file to continue from");
  adapt->add_option("--stop-after", stop_after, "stop after this many completed rounds");

  auto* sup = app.add_subcommand("ablate-supervision", "fixed-point vs optimization inversion vs direct supervision");
  add_config_options(sup, sup_a);
  sup->add_option("--policy", policy_dir, "pretrained policy directory");

  auto* it = app.add_subcommand("ablate-iterations", "fixed-point iteration sweep over sweep_iterations");
  add_config_options(it, it_a);
  it->add_option("--policy", policy_dir, "pretrained policy directory");
  it->add_option("--corpus", corpus_file, "correction corpus file (default: collect corpus_size samples)");

  auto* sch = app.add_subcommand("ablate-schedule", "the four update schedules on shared seeds");
  add_config_options(sch, sch_a);
  auto* cmp = app.add_subcommand("compare", "unisteer, dsrl and dagger on shared seeds");
  add_config_options(cmp, cmp_a);
  for (auto* sub : {sch, cmp}) {
    sub->add_option("--seeds", seeds, "explicit seeds")->delimiter(',');
    sub->add_option("--num-seeds", n_seeds, "seeds 1..n when --seeds is absent")->capture_default_str();
    sub->add_option("--workers", workers, "parallel seeds")->capture_default_str();
  }

  auto* inv = app.add_subcommand("invert-batch", "invert every sample of a correction corpus");
  add_config_options(inv, inv_a);
  inv->add_option("--policy", policy_dir, "pretrained policy directory");
  inv->add_option("--corpus", corpus_file, "corpus file (default: collect corpus_size samples and save it)");
  inv->add_option("--workers", workers, "parallel inversion workers")->capture_default_str();

  auto* ev = app.add_subcommand("eval", "evaluate the base policy or a run checkpoint");
  add_config_options(ev, eval_a);
  ev->add_option("--policy", policy_dir, "pretrained policy directory");
  ev->add_option("--checkpoint", checkpoint, "run checkpoint to evaluate (cfg must match the run)");

  auto* srv = app.add_subcommand("serve", "operator session over WebSocket");
  add_config_options(srv, srv_a);
  srv->add_option("--policy", policy_dir, "pretrained policy directory");
  srv->add_option("--bind", bind, "host:port to listen on")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed()) {
      const auto cfg = resolve(pre, pre_a);
      const auto setup = prepare_policy(cfg);
      const auto dir = (fs::path(pre_a.out) / "policy").string();
      save_policy(setup, dir);
      const auto base = evaluate_base_policy(cfg, setup.decoder);
      Json j{{"policy", dir},
             {"demos", setup.demos.items.size()},
             {"final_loss", setup.pretrain_curve.empty() ? 0.0 : setup.pretrain_curve.back()},
             {"base_eval", report_json(base)}};
      std::cout << j.dump() << '\n';
      return 0;
    }

    if (adapt->parsed()) {
      const auto cfg = resolve(adapt, adapt_a);
      const auto setup = policy_for(cfg, policy_dir);
      RunOptions opts;
      opts.checkpoint_dir = (fs::path(adapt_a.out) / "checkpoints").string();
      opts.resume_from = resume;
      opts.stop_after_round = stop_after;
      if (!adapt_a.quiet) opts.on_record = [](const RunLedger::Record& r) { std::cout << r.dump() << std::endl; };
      const auto ledger = run_adaptation(cfg, setup, opts);
      const auto stem = cfg.method + "_seed" + std::to_string(cfg.seed);
      ledger.save((fs::path(adapt_a.out) / ("metrics_" + stem + ".jsonl")).string());
      const std::vector<LabeledLedger> runs{{stem, ledger}};
      emit_plots(runs, adapt_a.out);
      return 0;
    }

    if (sup->parsed()) {
      const auto cfg = resolve(sup, sup_a);
      const auto t = run_supervision_ablation(cfg, policy_for(cfg, policy_dir));
      write_json(to_json(t), fs::path(sup_a.out) / "supervision.json");
      std::cout << format_table(t);
      return 0;
    }

    if (it->parsed()) {
      const auto cfg = resolve(it, it_a);
      const auto setup = policy_for(cfg, policy_dir);
      const auto corpus = corpus_file.empty()
                              ? collect_correction_corpus(cfg, setup.decoder, cfg.corpus_size, 100 * cfg.corpus_size)
                              : load_corpus(corpus_file, setup.decoder);
      const auto s = run_iteration_sweep(cfg, setup.decoder, corpus, cfg.sweep_iterations);
      write_json(to_json(s), fs::path(it_a.out) / "iterations.json");
      std::cout << format_table(s);
      return 0;
    }

    if (sch->parsed() || cmp->parsed()) {
      const bool schedule = sch->parsed();
      const auto cfg = schedule ? resolve(sch, sch_a) : resolve(cmp, cmp_a);
      const auto& out = schedule ? sch_a.out : cmp_a.out;
      const auto ids = seed_list(seeds, n_seeds);
      const auto t = schedule ? run_schedule_ablation(cfg, ids, workers) : compare_methods(cfg, ids, workers);
      write_json(to_json(t), fs::path(out) / (schedule ? "schedules.json" : "methods.json"));
      std::cout << format_table(t);
      return 0;
    }

    if (inv->parsed()) {
      const auto cfg = resolve(inv, inv_a);
      const auto setup = policy_for(cfg, policy_dir);
      CorrectionCorpus corpus;
      if (corpus_file.empty()) {
        corpus = collect_correction_corpus(cfg, setup.decoder, cfg.corpus_size, 100 * cfg.corpus_size);
        save_corpus(corpus, setup.decoder, (fs::path(inv_a.out) / "corpus.jsonl").string());
      } else {
        corpus = load_corpus(corpus_file, setup.decoder);
      }
      const auto reports = invert_corpus(setup.decoder, corpus, cfg.inversion_config(), workers);
      std::ofstream os(fs::path(inv_a.out) / "inversion.jsonl");
      if (!os) throw ConfigError("cannot write inversion report");
      for (std::size_t i = 0; i < reports.size(); ++i) {
        Json line{{"kind", "sample"}, {"index", i}, {"trajectory", corpus.samples[i].trajectory}};
        line.update(to_json(reports[i]));
        os << line.dump() << '\n';
      }
      Json agg{{"kind", "aggregate"}, {"iterations", cfg.inversion_iterations}};
      agg.update(to_json(summarize(reports)));
      os << agg.dump() << '\n';
      std::cout << agg.dump() << '\n';
      return 0;
    }

    if (ev->parsed()) {
      const auto cfg = resolve(ev, eval_a);
      const auto setup = policy_for(cfg, policy_dir);
      const auto r = checkpoint.empty() ? evaluate_base_policy(cfg, setup.decoder)
                                        : evaluate_checkpoint(cfg, setup, checkpoint);
      std::ofstream os(fs::path(eval_a.out) / "eval_trials.jsonl");
      r.write_jsonl(os);
      Json j = report_json(r);
      j["source"] = checkpoint.empty() ? "base" : checkpoint;
      std::cout << j.dump() << '\n';
      return 0;
    }

    if (srv->parsed()) {
      const auto cfg = resolve(srv, srv_a);
      const auto setup = policy_for(cfg, policy_dir);
      NoiseTrainer trainer(setup.decoder.state_dim(), setup.decoder.noise_dim(), cfg.trainer_config(),
                           setup.decoder.state_normalizer(), cfg.seed);
      SimEnv env(cfg.env_params());
      server::SessionConfig sc{cfg.round_config(), cfg.schedule_spec(), cfg.rounds,
                               cfg.task + "-seed" + std::to_string(cfg.seed)};
      server::Session session(setup.decoder, trainer, env, sc);
      server::InteractServer server(session, bind);
      std::cout << Json{{"listening", bind}, {"port", server.port()}, {"session", session.id()}}.dump() << std::endl;
      {
        SignalStopper stopper(server);
        server.run(true);
      }
      std::ofstream log(fs::path(srv_a.out) / "session_log.jsonl");
      server::write_log(session.log(), log);
      std::ofstream rounds(fs::path(srv_a.out) / "session_rounds.jsonl");
      for (const auto& st : session.finished_rounds()) {
        rounds << Json{{"round", st.round + 1},
                       {"episodes", st.episodes},
                       {"successes", st.successes},
                       {"decisions", st.decisions},
                       {"takeovers", st.takeovers},
                       {"env_steps", st.env_steps},
                       {"composition", {{"model_only", st.model_only}, {"mixed", st.mixed}, {"human_only", st.human_only}}},
                       {"mean_inversion_loss", st.mean_inversion_loss},
                       {"buffers", {{"rl", st.rl_buffer}, {"demo", st.demo_buffer}}}}
                      .dump()
               << '\n';
      }
      std::cout << Json{{"complete", session.complete()}, {"decisions", session.log().size()}}.dump() << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
