// Acceptance suite: one PASS/FAIL line per criterion A1..A9, then a summary.
// Exit status is non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"
#include "fd_oracle.hpp"
#include "flow_fixtures.hpp"
#include "noisesteer/flow/pretrain.hpp"
#include "noisesteer/harness/ablations.hpp"
#include "noisesteer/harness/config.hpp"
#include "noisesteer/harness/runs.hpp"
#include "noisesteer/inversion/inversion.hpp"
#include "noisesteer/rl/losses.hpp"
#include "rl_fixtures.hpp"

using namespace noisesteer;
using testing_oracle::central_difference;
using testing_oracle::relative_error;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------- A1

constexpr int kInstances = 20;
constexpr double kGradTol = 1e-4;

// Worst relative error over the instances of one loss.
struct GradStat {
  std::string name;
  double worst = 0.0;
  int instances = 0;
  void add(double e) {
    worst = std::max(worst, e);
    ++instances;
  }
};

Verdict a1_gradients() {
  const std::size_t sd = 5, nd = 6;
  std::vector<GradStat> stats;

  GradStat fm{"flow_matching"};
  {
    Rng rng(101);
    for (int k = 0; k < kInstances; ++k) {
      auto dec = fixtures::random_decoder({3, 2}, sd, 10, rng, {12, 12});
      std::vector<FlowMatchingSample> batch(4);
      for (auto& b : batch) b = {rng.normal_vector(sd), rng.normal_vector(nd), rng.normal_vector(nd), rng.uniform()};
      const auto r = flow_matching_loss(dec, batch);
      const auto fd = central_difference([&] { return flow_matching_loss(dec, batch).value; },
                                         dec.mutable_velocity_net().params());
      fm.add(relative_error(r.grad, fd));
    }
  }
  stats.push_back(fm);

  GradStat td{"td"};
  {
    Rng rng(102);
    for (int k = 0; k < kInstances; ++k) {
      auto critic = fixtures::random_critic(sd, nd, rng);
      auto actor = fixtures::random_actor(sd, nd, rng);
      const auto batch = fixtures::random_transitions(6, sd, nd, rng);
      const auto ptrs = fixtures::pointers(batch);
      std::vector<std::vector<double>> eps;
      for (std::size_t i = 0; i < batch.size(); ++i) eps.push_back(rng.normal_vector(nd));
      const auto y = td_targets(critic, actor, ptrs, 0.2, 0.99, eps);
      const auto l = critic_loss(critic, ptrs, y);
      double worst = 0.0;
      for (int i = 0; i < 2; ++i) {
        auto params = critic.net(i).params();
        const auto fd = central_difference([&] { return critic_loss(critic, ptrs, y).value; }, params);
        worst = std::max(worst, relative_error(l.grad[i], fd));
      }
      td.add(worst);
    }
  }
  stats.push_back(td);

  GradStat rl{"actor_rl"};
  {
    Rng rng(103);
    for (int k = 0; k < kInstances; ++k) {
      auto critic = fixtures::random_critic(sd, nd, rng);
      auto actor = fixtures::random_actor(sd, nd, rng);
      std::vector<std::vector<double>> states, eps;
      for (int i = 0; i < 5; ++i) {
        states.push_back(rng.normal_vector(sd));
        eps.push_back(rng.normal_vector(nd));
      }
      const double alpha = 0.1 + rng.uniform();
      const auto l = actor_rl_loss(actor, critic, states, eps, alpha);
      const auto fd = central_difference([&] { return actor_rl_loss(actor, critic, states, eps, alpha).value; },
                                         actor.mutable_net().params());
      rl.add(relative_error(l.grad, fd));
    }
  }
  stats.push_back(rl);

  GradStat sft{"actor_sft"};
  {
    Rng rng(104);
    for (int k = 0; k < kInstances; ++k) {
      auto actor = fixtures::random_actor(sd, nd, rng);
      std::vector<DemoPair> demos;
      for (int i = 0; i < 6; ++i) demos.push_back({rng.normal_vector(sd), rng.normal_vector(nd)});
      const auto ptrs = fixtures::pointers(demos);
      const auto l = actor_sft_loss(actor, ptrs);
      const auto fd =
          central_difference([&] { return actor_sft_loss(actor, ptrs).value; }, actor.mutable_net().params());
      sft.add(relative_error(l.grad, fd));
    }
  }
  stats.push_back(sft);

  GradStat direct{"direct_supervision"};
  {
    Rng rng(105);
    for (int k = 0; k < kInstances; ++k) {
      auto actor = fixtures::random_actor(sd, nd, rng);
      const auto dec = fixtures::random_decoder({3, 2}, sd, 10, rng, {8});
      std::vector<Demo> demos;
      for (int i = 0; i < 3; ++i) demos.push_back({rng.normal_vector(sd), rng.normal_vector(nd)});
      const auto ptrs = fixtures::pointers(demos);
      const auto l = actor_direct_loss(actor, dec, ptrs);
      const auto fd =
          central_difference([&] { return actor_direct_loss(actor, dec, ptrs).value; }, actor.mutable_net().params());
      direct.add(relative_error(l.grad, fd));
    }
  }
  stats.push_back(direct);

  GradStat temp{"temperature"};
  {
    Rng rng(106);
    for (int k = 0; k < kInstances; ++k) {
      std::vector<double> lps(8);
      for (auto& x : lps) x = rng.normal(0.0, 3.0);
      const double target = rng.normal();
      std::vector<double> la{rng.normal()};
      const auto l = temperature_loss(la[0], lps, target);
      const auto fd = central_difference([&] { return temperature_loss(la[0], lps, target).value; }, la);
      const std::vector<double> g{l.grad};
      temp.add(relative_error(g, fd));
    }
  }
  stats.push_back(temp);

  Verdict v{true, ""};
  for (const auto& s : stats) {
    v.pass = v.pass && s.instances == kInstances && s.worst <= kGradTol;
    v.detail += fmt("%s %.1e; ", s.name.c_str(), s.worst);
  }
  v.detail = "worst rel. err (tol 1e-4, 20 instances each): " + v.detail;
  return v;
}

// ---------------------------------------------------------------- A2

Verdict a2_analytic_inversion() {
  constexpr std::size_t K = 10;
  const double dt = 1.0 / K;
  const std::vector<double> state{0.0};
  bool pass = true;
  std::string detail;
  for (double ratio : {0.05, 0.3, 0.9}) {
    const double lambda = ratio / dt;
    const auto dec = fixtures::scalar_linear_field(lambda, K);
    // one step: y = (1 + dt lambda) x, preimage x* = y / (1 + dt lambda)
    const double y = 0.8;
    const double xstar = y / (1.0 + ratio);
    std::vector<double> errs;
    for (std::size_t m = 0; m <= 12; ++m) {
      InversionConfig c;
      c.iterations = m == 0 ? 1 : m;
      c.early_exit = false;
      c.record_residuals = false;
      const double x = m == 0 ? y : invert_step(dec, std::vector<double>{y}, 0.0, state, c).x[0];
      errs.push_back(std::abs(x - xstar));
    }
    double worst_dev = 0.0;
    std::size_t used = 0;
    for (std::size_t m = 0; m + 1 < errs.size(); ++m) {
      if (errs[m + 1] < 1e-12) break;  // below this the ratio is rounding noise
      worst_dev = std::max(worst_dev, std::abs(errs[m + 1] / errs[m] - ratio));
      ++used;
    }
    // whole decoder at M = 256 against (1 + dt lambda)^-K
    const double z = 0.7;
    const auto a = dec.decode(state, std::vector<double>{z});
    InversionConfig c;
    c.iterations = 256;
    c.early_exit = false;
    c.record_residuals = false;
    const auto inv = invert_action(dec, state, a, c);
    const double closed = a[0] / std::pow(1.0 + ratio, static_cast<double>(K));
    const double exact_err = std::abs(inv.noise[0] - closed);
    const bool ok = used >= 3 && worst_dev <= 0.01 && exact_err <= 1e-10;
    pass = pass && ok;
    detail += fmt("dtL=%.2f ratio dev %.1e over %zu iters, M=256 err %.1e; ", ratio, worst_dev, used, exact_err);
  }
  return {pass, detail};
}

// ---------------------------------------------------------------- A3

Verdict a3_round_trip(const PolicySetup& reach) {
  const auto& dec = reach.decoder;
  std::vector<std::vector<double>> states;
  for (std::size_t i = 0; i < reach.demos.items.size(); i += 4) states.push_back(reach.demos.items[i].state);
  const auto cert = estimate_contraction(dec, states);
  InversionConfig c;
  c.iterations = 32;
  c.certified_rho = cert.rho;
  Rng rng(303);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto& s = states[static_cast<std::size_t>(i) % states.size()];
    const auto a = dec.decode(s, rng.normal_vector(dec.noise_dim()));
    const auto inv = invert_action(dec, s, a, c);
    worst = std::max(worst, mse(dec.decode(s, inv.noise), a));
  }
  return {cert.rho < 1.0 && worst <= 1e-6,
          fmt("rho_hat %.3f (< 1), worst MSE over 100 actions at M=32: %.2e (tol 1e-6)", cert.rho, worst)};
}

// ---------------------------------------------------------------- A4

Verdict a4_iteration_sweep(const ExperimentConfig& cfg, const PolicySetup& setup) {
  const auto corpus = collect_correction_corpus(cfg, setup.decoder, 200, 20000);
  const auto sweep = run_iteration_sweep(cfg, setup.decoder, corpus, {4, 8, 16, 32});
  bool pass = corpus.samples.size() == 200;
  std::string detail = fmt("%zu samples; ", corpus.samples.size());
  for (std::size_t i = 0; i < sweep.rows.size(); ++i) {
    const auto& r = sweep.rows[i];
    detail += fmt("M=%zu median %.2e t %.2e; ", r.iterations, r.summary.median_loss, r.summary.mean_time_s);
    if (i > 0) {
      pass = pass && r.summary.median_loss <= sweep.rows[i - 1].summary.median_loss;
      pass = pass && r.summary.mean_time_s > sweep.rows[i - 1].summary.mean_time_s;
    }
  }
  const double m4 = sweep.rows[0].summary.median_loss, m16 = sweep.rows[2].summary.median_loss;
  pass = pass && m16 <= 0.2 * m4;
  detail += fmt("median16/median4 %.1e (<= 0.2)", m4 > 0 ? m16 / m4 : 0.0);
  return {pass, detail};
}

// ---------------------------------------------------------------- A5

Verdict a5_supervision(const ExperimentConfig& cfg, const PolicySetup& setup) {
  const auto t = run_supervision_ablation(cfg, setup);
  const auto& fp = t.row("fixed_point");
  const auto& opt = t.row("optimization");
  const auto& dir = t.row("direct");
  const bool loss_ok = fp.action_loss < opt.action_loss;
  const bool time_ok = fp.inversion_time_per_sample_s < opt.inversion_time_per_sample_s;
  const double ratio = dir.policy_action_loss / fp.policy_action_loss;
  const bool comparable = ratio >= 0.5 && ratio <= 2.0;
  const bool slower = dir.train_time_s >= 2.0 * fp.total_time_s;
  return {loss_ok && time_ok && comparable && slower,
          fmt("act. loss fp %.1e < opt %.1e; inv/sample fp %.1e s < opt %.1e s; direct/fp policy loss %.2f "
              "(in [0.5, 2]); direct train %.2f s >= 2 x fp total %.2f s",
              fp.action_loss, opt.action_loss, fp.inversion_time_per_sample_s, opt.inversion_time_per_sample_s,
              ratio, dir.train_time_s, fp.total_time_s)};
}

// ---------------------------------------------------------------- A6 / A7 / A9

// One trial out of the 20 evaluation trials of a seed.
constexpr double kTie = 1.0 / 20.0;

Verdict a6_schedules(const ArmTable& t) {
  const double full = t.mean_overall("sft_then_rl");
  const double only_rl = t.mean_overall("only_rl");
  bool pass = true;
  std::string detail = "mean final Overall: ";
  for (const auto& arm : t.arms) {
    const double m = t.mean_overall(arm);
    detail += fmt("%s %.3f; ", arm.c_str(), m);
    if (arm != "sft_then_rl") pass = pass && full >= m - kTie;
    if (arm != "only_rl") pass = pass && only_rl <= m + kTie;
  }
  detail += "ties within 0.05";
  return {pass, detail};
}

Verdict a7_baselines(const ArmTable& t) {
  const double u = t.mean_overall("unisteer"), d = t.mean_overall("dsrl"), g = t.mean_overall("dagger");
  const double uo = t.mean_ood("unisteer"), dso = t.mean_ood("dsrl");
  return {u >= d && u >= g && uo > dso,
          fmt("mean final Overall unisteer %.3f, dsrl %.3f, dagger %.3f; OOD unisteer %.3f > dsrl %.3f", u, d, g, uo,
              dso)};
}

Verdict a9_efficiency(const ArmTable& t) {
  bool per_round = true;
  std::size_t rounds = 0, uni_max = 0, dagger_min = SIZE_MAX;
  for (auto seed : t.seeds) {
    const auto u = t.at("unisteer", seed).ledger.of_kind("round");
    const auto g = t.at("dagger", seed).ledger.of_kind("round");
    if (u.size() != g.size() || u.empty()) per_round = false;
    for (std::size_t i = 0; i < std::min(u.size(), g.size()); ++i) {
      const auto hu = u[i]["composition"]["human_only"].get<std::size_t>();
      const auto hg = g[i]["composition"]["human_only"].get<std::size_t>();
      uni_max = std::max(uni_max, hu);
      dagger_min = std::min(dagger_min, hg);
      per_round = per_round && hu < hg;
      ++rounds;
    }
  }
  const double u = t.mean_overall("unisteer"), d = t.mean_overall("dsrl");
  return {per_round && u > d,
          fmt("human-only trajectories per round: unisteer max %zu < dagger min %zu over %zu seed-rounds; unisteer "
              "final %.3f > dsrl final %.3f",
              uni_max, dagger_min, rounds, u, d)};
}

// ---------------------------------------------------------------- A8

Verdict a8_invariants(const std::vector<const ArmTable*>& tables, const ExperimentConfig& reach_cfg,
                      const PolicySetup& reach) {
  std::size_t checked = 0, bad = 0;
  std::set<std::string> failing;
  for (const auto* t : tables) {
    for (const auto& r : t->runs) {
      for (const auto& rec : r.ledger.of_kind("round")) {
        ++checked;
        if (!rec.value("invariants_ok", false)) {
          ++bad;
          failing.insert(r.arm);
        }
      }
    }
  }
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / ("noisesteer_acceptance_" + std::to_string(::getpid()));
  std::size_t resumed_ok = 0;
  std::string resume_detail;
  for (const auto* method : {"unisteer", "dsrl", "dagger"}) {
    auto c = reach_cfg;
    c.method = method;
    c.checkpoint_every = 1;
    fs::remove_all(dir);
    RunOptions whole;
    whole.checkpoint_dir = (dir / "whole").string();
    const auto full = run_adaptation(c, reach, whole);
    RunOptions head;
    head.checkpoint_dir = (dir / "split").string();
    head.stop_after_round = 4;
    run_adaptation(c, reach, head);
    RunOptions tail;
    tail.checkpoint_dir = head.checkpoint_dir;
    tail.resume_from = checkpoint_path(head.checkpoint_dir, c.method_id(), 4);
    const auto resumed = run_adaptation(c, reach, tail);
    const bool eq = resumed.equivalent(full) && resumed.size() == full.size();
    resumed_ok += eq;
    resume_detail += fmt("%s %s; ", method, eq ? "equal" : "DIFFERENT");
  }
  fs::remove_all(dir);
  std::string fail_list;
  for (const auto& f : failing) fail_list += f + " ";
  return {bad == 0 && checked > 0 && resumed_ok == 3,
          fmt("invariants hold on %zu/%zu round records%s%s; resume after round 4: ", checked - bad, checked,
              fail_list.empty() ? "" : ", failing arms: ", fail_list.c_str()) +
              resume_detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::vector<std::string> only;
  std::size_t workers = 1;
  app.add_option("--only", only, "subset of criteria, e.g. A4,A5")->delimiter(',');
  app.add_option("--workers", workers, "parallel seeds for A6/A7 (1 = single core)");
  CLI11_PARSE(app, argc, argv);
  const auto wanted = [&](const std::string& id) {
    return only.empty() || std::find(only.begin(), only.end(), id) != only.end();
  };

  using Clock = std::chrono::steady_clock;
  const auto t_start = Clock::now();
  int failures = 0;
  const auto report = [&](const std::string& id, const std::function<Verdict()>& fn) {
    if (!wanted(id)) return;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    failures += !v.pass;
    std::cout << id << ' ' << (v.pass ? "PASS" : "FAIL") << " [" << fmt("%.1f s", secs) << "] " << v.detail
              << std::endl;
  };

  ExperimentConfig reach_cfg;
  reach_cfg.task = "reach";
  ExperimentConfig insert_cfg;
  insert_cfg.task = "insert";
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  std::optional<PolicySetup> reach;
  const auto reach_setup = [&]() -> const PolicySetup& {
    if (!reach) reach = prepare_policy(reach_cfg);
    return *reach;
  };
  std::optional<ArmTable> schedules, methods;
  const auto schedule_table = [&]() -> const ArmTable& {
    if (!schedules) schedules = run_schedule_ablation(insert_cfg, seeds, workers);
    return *schedules;
  };
  const auto method_table = [&]() -> const ArmTable& {
    if (!methods) methods = compare_methods(reach_cfg, seeds, workers);
    return *methods;
  };

  report("A1", a1_gradients);
  report("A2", a2_analytic_inversion);
  report("A3", [&] { return a3_round_trip(reach_setup()); });
  report("A4", [&] { return a4_iteration_sweep(reach_cfg, reach_setup()); });
  report("A5", [&] { return a5_supervision(reach_cfg, reach_setup()); });
  report("A6", [&] { return a6_schedules(schedule_table()); });
  report("A7", [&] { return a7_baselines(method_table()); });
  report("A8", [&] {
    std::vector<const ArmTable*> tables;
    if (wanted("A6") || schedules) tables.push_back(&schedule_table());
    tables.push_back(&method_table());
    return a8_invariants(tables, reach_cfg, reach_setup());
  });
  report("A9", [&] { return a9_efficiency(method_table()); });

  if (methods) {
    // end-to-end gains of the A7 unisteer runs (informational)
    double init = 0.0, fin = 0.0, init_ood = 0.0, fin_ood = 0.0;
    for (auto seed : methods->seeds) {
      const auto& l = methods->at("unisteer", seed).ledger;
      init += l.initial()["eval"]["overall"].get<double>() / 5.0;
      init_ood += l.initial()["eval"]["ood"].get<double>() / 5.0;
      fin += l.final_eval()["overall"].get<double>() / 5.0;
      fin_ood += l.final_eval()["ood"].get<double>() / 5.0;
    }
    std::cout << fmt("info: reach unisteer mean Overall %.3f -> %.3f, OOD %.3f -> %.3f", init, fin, init_ood, fin_ood)
              << std::endl;
  }
  const double total = std::chrono::duration<double>(Clock::now() - t_start).count();
  std::cout << (failures ? "FAIL" : "PASS") << fmt(": %d criteria failed, %.1f s total", failures, total) << std::endl;
  return failures ? 1 : 0;
}
