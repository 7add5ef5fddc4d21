#include "noisesteer/harness/ablations.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "noisesteer/envs/corrector.hpp"
#include "noisesteer/errors.hpp"
#include "noisesteer/rl/losses.hpp"
#include "noisesteer/rl/rollout.hpp"
#include "noisesteer/rl/trainer.hpp"

namespace noisesteer {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

/// Runs fn(0..n-1) on up to `workers` threads; rethrows the first failure.
template <class Fn>
void run_jobs(std::size_t n, std::size_t workers, Fn fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

SuccessReport evaluate_actor(const ExperimentConfig& cfg, const FlowDecoder& dec, const NoiseActor& actor) {
  const ChunkPolicy pol = [&](const SimEnv& e) {
    return dec.denormalize_action(dec.decode(e.state(), actor.mean_noise(e.state())));
  };
  return evaluate(pol, cfg.env_params(), cfg.eval_protocol());
}

double policy_action_loss(const FlowDecoder& dec, const NoiseActor& actor, const CorrectionCorpus& corpus) {
  double total = 0.0;
  for (const auto& s : corpus.samples) total += mse(dec.decode(s.state, actor.mean_noise(s.state)), s.action);
  return corpus.samples.empty() ? 0.0 : total / static_cast<double>(corpus.samples.size());
}

RunOutcome outcome(std::string arm, std::uint64_t seed, RunLedger ledger) {
  RunOutcome o;
  o.arm = std::move(arm);
  o.seed = seed;
  const auto& ev = ledger.final_eval();
  o.final_id = ev["id"].get<double>();
  o.final_ood = ev["ood"].get<double>();
  o.final_overall = ev["overall"].get<double>();
  o.ledger = std::move(ledger);
  return o;
}

ArmTable run_arms(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds, std::size_t workers,
                  const std::vector<std::string>& arms,
                  RunLedger (*run_arm)(const ExperimentConfig&, const PolicySetup&, const std::string&)) {
  ArmTable t;
  t.arms = arms;
  t.seeds = seeds;
  t.runs.resize(seeds.size() * arms.size());
  run_jobs(seeds.size(), workers, [&](std::size_t i) {
    ExperimentConfig c = cfg;
    c.seed = seeds[i];
    const auto setup = prepare_policy(c);
    for (std::size_t a = 0; a < arms.size(); ++a) {
      t.runs[i * arms.size() + a] = outcome(arms[a], seeds[i], run_arm(c, setup, arms[a]));
    }
  });
  return t;
}

}  // namespace

CorrectionCorpus collect_correction_corpus(const ExperimentConfig& cfg, const FlowDecoder& decoder,
                                           std::size_t max_samples, std::size_t max_trajectories) {
  CorrectionCorpus corpus;
  const auto params = cfg.env_params();
  SimEnv env(params);
  OracleCorrector corrector(cfg.corrector_config());
  const Rng base = Rng(cfg.seed).derive(0xc0de);
  Rng noise_rng = base.derive(1);
  for (std::size_t e = 0; e < max_trajectories && corpus.samples.size() < max_samples; ++e) {
    env.reset(e % params.inits.size(), base.derive(1000 + e).next_u64());
    corrector.begin_episode(env);
    bool any = false;
    while (!env.finished() && corpus.samples.size() < max_samples) {
      const auto proposal = decoder.denormalize_action(decoder.decode(env.state(), noise_rng.normal_vector(decoder.noise_dim())));
      const auto d = corrector.decide(env, proposal);
      if (d.takeover) {
        corpus.samples.push_back({env.state(), decoder.normalize_action(d.chunk), corpus.trajectories});
        any = true;
      }
      env.execute_chunk(d.takeover ? std::span<const double>(d.chunk) : std::span<const double>(proposal));
    }
    corpus.trajectories += any;
  }
  return corpus;
}

IterationSweep run_iteration_sweep(const ExperimentConfig& cfg, const FlowDecoder& decoder,
                                   const CorrectionCorpus& corpus, const std::vector<std::size_t>& iterations) {
  if (corpus.samples.empty()) throw ConfigError("iteration sweep needs a non-empty corpus");
  IterationSweep out;
  out.samples = corpus.samples.size();
  auto ic = cfg.inversion_config();
  ic.early_exit = false;
  // warm caches so the first M is not charged for them
  for (std::size_t i = 0; i < std::min<std::size_t>(8, corpus.samples.size()); ++i) {
    invert_action(decoder, corpus.samples[i].state, corpus.samples[i].action, ic);
  }
  for (std::size_t m : iterations) {
    ic.iterations = m;
    std::vector<InversionReport> reports;
    reports.reserve(corpus.samples.size());
    const auto t0 = Clock::now();
    for (const auto& s : corpus.samples) reports.push_back(invert_action(decoder, s.state, s.action, ic).report);
    const double wall = seconds_since(t0);
    SweepRow row{m, summarize(reports)};
    row.summary.mean_time_s = wall / static_cast<double>(reports.size());
    out.rows.push_back(row);
  }
  return out;
}

IterationSweep run_iteration_sweep(const ExperimentConfig& cfg) {
  const auto setup = prepare_policy(cfg);
  const auto corpus = collect_correction_corpus(cfg, setup.decoder, cfg.corpus_size, 100 * cfg.corpus_size);
  return run_iteration_sweep(cfg, setup.decoder, corpus, cfg.sweep_iterations);
}

const SupervisionRow& SupervisionTable::row(const std::string& method) const {
  for (const auto& r : rows) {
    if (r.method == method) return r;
  }
  throw DomainError("no supervision row '" + method + "'");
}

SupervisionTable run_supervision_ablation(const ExperimentConfig& cfg, const PolicySetup& setup) {
  const auto& dec = setup.decoder;
  const auto ab = cfg.ablation_config();
  const auto corpus = collect_correction_corpus(cfg, dec, SIZE_MAX, ab.supervision_corpus * 100);
  // keep only the first supervision_corpus trajectories that contain corrections
  CorrectionCorpus used;
  for (const auto& s : corpus.samples) {
    if (s.trajectory < ab.supervision_corpus) used.samples.push_back(s);
  }
  used.trajectories = std::min(corpus.trajectories, ab.supervision_corpus);
  if (used.samples.empty()) throw DomainError("the corrector never intervened; no supervision corpus");
  const double n = static_cast<double>(used.samples.size());

  SupervisionTable table;
  table.samples = used.samples.size();
  table.trajectories = used.trajectories;

  const auto fresh_trainer = [&] {
    return NoiseTrainer(dec.state_dim(), dec.noise_dim(), cfg.trainer_config(), dec.state_normalizer(), cfg.seed);
  };
  const auto train_on_targets = [&](SupervisionRow& row, const std::vector<std::vector<double>>& targets) {
    auto tr = fresh_trainer();
    for (std::size_t i = 0; i < used.samples.size(); ++i) tr.demo_buffer().add({used.samples[i].state, targets[i]});
    const auto t0 = Clock::now();
    for (std::size_t k = 0; k < ab.supervision_steps; ++k) tr.sft_step();
    row.train_time_s = seconds_since(t0);
    row.policy_action_loss = policy_action_loss(dec, tr.actor(), used);
    row.total_time_s = row.inversion_time_s + row.train_time_s;
    row.eval = evaluate_actor(cfg, dec, tr.actor());
  };

  // fixed point
  SupervisionRow fp;
  fp.method = "fixed_point";
  {
    const auto ic = cfg.inversion_config();
    std::vector<std::vector<double>> targets;
    double loss = 0.0;
    const auto t0 = Clock::now();
    for (const auto& s : used.samples) {
      auto r = invert_action(dec, s.state, s.action, ic);
      loss += r.report.reconstruction_loss;
      targets.push_back(std::move(r.noise));
    }
    fp.inversion_time_s = seconds_since(t0);
    fp.inversion_time_per_sample_s = fp.inversion_time_s / n;
    fp.action_loss = loss / n;
    train_on_targets(fp, targets);
  }

  // optimization-based, per-sample wall budget matched unless given
  SupervisionRow opt;
  opt.method = "optimization";
  {
    auto oc = ab.opt;
    if (oc.wall_budget_s <= 0.0) oc.wall_budget_s = fp.inversion_time_per_sample_s;
    table.budget_per_sample_s = oc.wall_budget_s;
    std::vector<std::vector<double>> targets;
    double loss = 0.0;
    const auto t0 = Clock::now();
    for (const auto& s : used.samples) {
      auto r = optimization_based_invert(dec, s.state, s.action, oc);
      loss += r.report.reconstruction_loss;
      opt.diverged += r.report.diverged;
      targets.push_back(std::move(r.noise));
    }
    opt.inversion_time_s = seconds_since(t0);
    opt.inversion_time_per_sample_s = opt.inversion_time_s / n;
    opt.action_loss = loss / n;
    train_on_targets(opt, targets);
  }

  // direct action supervision through the frozen decoder
  SupervisionRow direct;
  direct.method = "direct";
  direct.has_targets = false;
  direct.action_loss = std::nan("");
  {
    auto tr = fresh_trainer();
    auto& actor = tr.actor();
    Adam adam(cfg.sft_lr);
    Rng rng = Rng(cfg.seed).derive(0xd1ec7);
    std::vector<Demo> pairs;
    for (const auto& s : used.samples) pairs.push_back({s.state, s.action});
    std::vector<const Demo*> batch(cfg.batch_size);
    const auto t0 = Clock::now();
    for (std::size_t k = 0; k < ab.supervision_steps; ++k) {
      for (auto& p : batch) p = &pairs[rng.index(pairs.size())];
      const auto l = actor_direct_loss(actor, dec, batch);
      adam.step(actor.mutable_net().params(), l.grad);
    }
    direct.train_time_s = seconds_since(t0);
    direct.policy_action_loss = policy_action_loss(dec, actor, used);
    direct.total_time_s = direct.train_time_s;
    direct.eval = evaluate_actor(cfg, dec, actor);
  }

  table.rows = {fp, opt, direct};
  return table;
}

SupervisionTable run_supervision_ablation(const ExperimentConfig& cfg) {
  return run_supervision_ablation(cfg, prepare_policy(cfg));
}

const RunOutcome& ArmTable::at(const std::string& arm, std::uint64_t seed) const {
  for (const auto& r : runs) {
    if (r.arm == arm && r.seed == seed) return r;
  }
  throw DomainError("no run for " + arm + " seed " + std::to_string(seed));
}

double ArmTable::mean_overall(const std::string& arm) const {
  double s = 0.0;
  for (auto seed : seeds) s += at(arm, seed).final_overall;
  return seeds.empty() ? 0.0 : s / static_cast<double>(seeds.size());
}

double ArmTable::mean_ood(const std::string& arm) const {
  double s = 0.0;
  for (auto seed : seeds) s += at(arm, seed).final_ood;
  return seeds.empty() ? 0.0 : s / static_cast<double>(seeds.size());
}

ArmTable run_schedule_ablation(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                               std::size_t workers) {
  std::vector<std::string> arms;
  for (auto v : {ScheduleVariant::sft_then_rl, ScheduleVariant::rl_then_sft, ScheduleVariant::only_sft,
                 ScheduleVariant::only_rl}) {
    arms.emplace_back(schedule_name(v));
  }
  return run_arms(cfg, seeds, workers, arms, [](const ExperimentConfig& c, const PolicySetup& s, const std::string& arm) {
    ExperimentConfig v = c;
    v.schedule = arm;
    return run_unisteer(v, s);
  });
}

ArmTable compare_methods(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds, std::size_t workers) {
  const std::vector<std::string> arms{method_name(Method::unisteer), method_name(Method::dsrl),
                                      method_name(Method::dagger)};
  return run_arms(cfg, seeds, workers, arms, [](const ExperimentConfig& c, const PolicySetup& s, const std::string& arm) {
    ExperimentConfig v = c;
    v.method = arm;
    return run_adaptation(v, s);
  });
}

void save_corpus(const CorrectionCorpus& corpus, const FlowDecoder& decoder, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  for (const auto& c : corpus.samples) {
    os << nlohmann::ordered_json{{"trajectory", c.trajectory},
                                 {"state", c.state},
                                 {"action", decoder.denormalize_action(c.action)}}
              .dump()
       << '\n';
  }
  if (!os) throw ConfigError("write failed: " + path);
}

CorrectionCorpus load_corpus(const std::string& path, const FlowDecoder& decoder) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path);
  CorrectionCorpus corpus;
  std::size_t line_no = 0;
  std::vector<std::size_t> seen;
  for (std::string line; std::getline(is, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      CorrectionSample c;
      c.trajectory = j.value("trajectory", std::size_t{0});
      c.state = j.at("state").get<std::vector<double>>();
      const auto raw = j.at("action").get<std::vector<double>>();
      if (c.state.size() != decoder.state_dim() || raw.size() != decoder.noise_dim()) {
        throw ShapeError("sample does not match the decoder's shapes");
      }
      c.action = decoder.normalize_action(raw);
      if (std::find(seen.begin(), seen.end(), c.trajectory) == seen.end()) seen.push_back(c.trajectory);
      corpus.samples.push_back(std::move(c));
    } catch (const std::exception& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  corpus.trajectories = seen.size();
  return corpus;
}

std::vector<InversionReport> invert_corpus(const FlowDecoder& decoder, const CorrectionCorpus& corpus,
                                           const InversionConfig& cfg, std::size_t workers) {
  std::vector<InversionReport> out(corpus.samples.size());
  run_jobs(out.size(), workers, [&](std::size_t i) {
    const auto& c = corpus.samples[i];
    out[i] = invert_action(decoder, c.state, c.action, cfg).report;
  });
  return out;
}

nlohmann::ordered_json to_json(const InversionReport& r) {
  nlohmann::ordered_json j{{"reconstruction_loss", r.reconstruction_loss},
                           {"iterations", r.total_iterations},
                           {"converged", r.converged},
                           {"rho_hat", r.rho_hat},
                           {"contraction_warning", r.contraction_warning},
                           {"time_s", r.wall_time_s}};
  if (!r.warnings.empty()) j["warnings"] = r.warnings;
  return j;
}

nlohmann::ordered_json to_json(const InversionSummary& s) {
  return {{"count", s.count},
          {"mean_loss", s.mean_loss},
          {"median_loss", s.median_loss},
          {"p90_loss", s.p90_loss},
          {"time_per_sample_s", s.mean_time_s}};
}

nlohmann::ordered_json to_json(const IterationSweep& s) {
  nlohmann::ordered_json j{{"samples", s.samples}, {"rows", nlohmann::ordered_json::array()}};
  for (const auto& r : s.rows) {
    j["rows"].push_back({{"iterations", r.iterations},
                         {"time_per_sample_s", r.summary.mean_time_s},
                         {"mean_loss", r.summary.mean_loss},
                         {"median_loss", r.summary.median_loss},
                         {"p90_loss", r.summary.p90_loss}});
  }
  return j;
}

nlohmann::ordered_json to_json(const SupervisionTable& t) {
  nlohmann::ordered_json j{{"samples", t.samples},
                           {"trajectories", t.trajectories},
                           {"budget_per_sample_s", t.budget_per_sample_s},
                           {"rows", nlohmann::ordered_json::array()}};
  for (const auto& r : t.rows) {
    nlohmann::ordered_json row{{"method", r.method}};
    if (r.has_targets) {
      row["inversion_time_s"] = r.inversion_time_s;
      row["inversion_time_per_sample_s"] = r.inversion_time_per_sample_s;
      row["action_loss"] = r.action_loss;
    } else {
      row["inversion_time_s"] = nullptr;
      row["inversion_time_per_sample_s"] = nullptr;
      row["action_loss"] = nullptr;
    }
    row["train_time_s"] = r.train_time_s;
    row["policy_action_loss"] = r.policy_action_loss;
    row["total_time_s"] = r.total_time_s;
    row["diverged"] = r.diverged;
    row["success"] = {{"id", r.eval.id}, {"ood", r.eval.ood}, {"overall", r.eval.overall}};
    j["rows"].push_back(row);
  }
  return j;
}

nlohmann::ordered_json to_json(const ArmTable& t) {
  nlohmann::ordered_json j{{"arms", t.arms}, {"seeds", t.seeds}, {"runs", nlohmann::ordered_json::array()},
                           {"mean_overall", nlohmann::ordered_json::object()}};
  for (const auto& r : t.runs) {
    j["runs"].push_back({{"arm", r.arm},
                         {"seed", r.seed},
                         {"id", r.final_id},
                         {"ood", r.final_ood},
                         {"overall", r.final_overall}});
  }
  for (const auto& a : t.arms) j["mean_overall"][a] = t.mean_overall(a);
  return j;
}

std::string format_table(const IterationSweep& s) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%4s  %16s  %12s  %12s  %12s\n", "M", "time/sample (s)", "mean loss", "median loss",
                "p90 loss");
  os << buf;
  for (const auto& r : s.rows) {
    std::snprintf(buf, sizeof buf, "%4zu  %16.3e  %12.3e  %12.3e  %12.3e\n", r.iterations, r.summary.mean_time_s,
                  r.summary.mean_loss, r.summary.median_loss, r.summary.p90_loss);
    os << buf;
  }
  return os.str();
}

std::string format_table(const SupervisionTable& t) {
  std::ostringstream os;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%zu samples from %zu trajectories; optimization budget %.3e s/sample\n", t.samples,
                t.trajectories, t.budget_per_sample_s);
  os << buf;
  std::snprintf(buf, sizeof buf, "%-13s %11s %11s %11s %11s %11s %8s\n", "method", "inv (s)", "train (s)", "act loss",
                "policy loss", "total (s)", "SR");
  os << buf;
  for (const auto& r : t.rows) {
    char inv[32] = "N/A", loss[32] = "N/A";
    if (r.has_targets) {
      std::snprintf(inv, sizeof inv, "%.4f", r.inversion_time_s);
      std::snprintf(loss, sizeof loss, "%.3e", r.action_loss);
    }
    const std::size_t trials = r.eval.id_trials + r.eval.ood_trials;
    const auto wins = static_cast<std::size_t>(std::lround(r.eval.overall * static_cast<double>(trials)));
    char sr[32];
    std::snprintf(sr, sizeof sr, "%zu/%zu", wins, trials);
    std::snprintf(buf, sizeof buf, "%-13s %11s %11.4f %11s %11.3e %11.4f %8s\n", r.method.c_str(), inv,
                  r.train_time_s, loss, r.policy_action_loss, r.total_time_s, sr);
    os << buf;
  }
  return os.str();
}

std::string format_table(const ArmTable& t) {
  std::ostringstream os;
  char buf[160];
  os << "arm          ";
  for (auto s : t.seeds) {
    std::snprintf(buf, sizeof buf, "  seed%-4llu", static_cast<unsigned long long>(s));
    os << buf;
  }
  os << "    mean\n";
  for (const auto& a : t.arms) {
    std::snprintf(buf, sizeof buf, "%-13s", a.c_str());
    os << buf;
    for (auto s : t.seeds) {
      std::snprintf(buf, sizeof buf, "  %8.2f", t.at(a, s).final_overall);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "  %6.3f\n", t.mean_overall(a));
    os << buf;
  }
  return os.str();
}

}  // namespace noisesteer
