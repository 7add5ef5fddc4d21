#include "noisesteer/rl/trainer.hpp"

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>

#include "noisesteer/errors.hpp"
#include "noisesteer/numerics/archive.hpp"
#include "noisesteer/rl/losses.hpp"

namespace noisesteer {

NoiseTrainer::NoiseTrainer(std::size_t state_dim, std::size_t noise_dim, const TrainerConfig& cfg,
                           const Normalizer& state_norm, std::uint64_t seed)
    : cfg_(cfg),
      log_alpha_(std::log(cfg.init_alpha)),
      actor_opt_(cfg.actor_lr),
      sft_opt_(cfg.sft_lr),
      critic_opt_{Adam(cfg.critic_lr), Adam(cfg.critic_lr)},
      temp_opt_(cfg.temperature_lr),
      rl_(cfg.replay_capacity),
      update_rng_(Rng(seed).derive(2)),
      rollout_rng_(Rng(seed).derive(3)) {
  if (!(cfg.init_alpha > 0.0)) throw ConfigError("initial temperature must be positive");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
  Rng init = Rng(seed).derive(1);
  ActorConfig ac = cfg.actor;
  if (cfg.match_target_entropy) ac.init_log_std = TrainerConfig::entropy_matched_log_std(cfg.target_entropy, noise_dim);
  actor_ = NoiseActor(state_dim, noise_dim, ac, state_norm, init);
  critic_ = TwinCritic(state_dim, noise_dim, cfg.critic_hidden, state_norm, init, cfg.critic_activation);
}

double TrainerConfig::entropy_matched_log_std(double target_entropy, std::size_t noise_dim) {
  return target_entropy / static_cast<double>(noise_dim) - 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
}

double NoiseTrainer::alpha() const { return std::exp(log_alpha_); }

UpdateResult NoiseTrainer::update_critic(std::span<const Transition* const> batch) {
  if (batch.empty()) return {};
  std::vector<std::vector<double>> eps(batch.size());
  for (auto& e : eps) e = update_rng_.normal_vector(actor_.noise_dim());
  const auto y = td_targets(critic_, actor_, batch, alpha(), cfg_.gamma, eps);
  auto l = critic_loss(critic_, batch, y);
  for (int i = 0; i < 2; ++i) critic_opt_[i].step(critic_.net(i).params(), l.grad[i]);
  ++critic_updates_;
  return {true, l.value, 0};
}

UpdateResult NoiseTrainer::update_actor_rl(const std::vector<std::vector<double>>& states,
                                           std::vector<double>* log_probs) {
  if (states.empty()) return {};
  std::vector<std::vector<double>> eps(states.size());
  for (auto& e : eps) e = update_rng_.normal_vector(actor_.noise_dim());
  auto l = actor_rl_loss(actor_, critic_, states, eps, alpha());
  actor_opt_.step(actor_.mutable_net().params(), l.grad);
  if (log_probs) *log_probs = std::move(l.log_probs);
  return {true, l.value, 0};
}

UpdateResult NoiseTrainer::update_actor_sft(std::span<const DemoPair* const> batch) {
  if (batch.empty()) return {};
  auto l = actor_sft_loss(actor_, batch);
  sft_opt_.step(actor_.mutable_net().params(), l.grad);
  return {true, l.value, l.unreachable};
}

UpdateResult NoiseTrainer::update_temperature(std::span<const double> log_probs) {
  if (log_probs.empty()) return {};
  const auto l = temperature_loss(log_alpha_, log_probs, cfg_.target_entropy);
  temp_opt_.step(std::span<double>(&log_alpha_, 1), std::span<const double>(&l.grad, 1));
  return {true, l.value, 0};
}

std::vector<const Transition*> NoiseTrainer::sample_replay() {
  std::vector<const Transition*> batch;
  for (auto i : rl_.sample_indices(cfg_.batch_size, update_rng_)) batch.push_back(&rl_.at(i));
  return batch;
}

UpdateResult NoiseTrainer::sft_step() {
  std::vector<const DemoPair*> batch;
  for (auto i : demo_.sample_indices(cfg_.batch_size, update_rng_)) batch.push_back(&demo_.at(i));
  return update_actor_sft(batch);
}

NoiseTrainer::RlStepResult NoiseTrainer::rl_step() {
  RlStepResult r;
  const auto batch = sample_replay();
  if (batch.empty()) return r;
  r.critic = update_critic(batch);
  std::vector<std::vector<double>> states;
  states.reserve(batch.size());
  for (const auto* t : batch) states.push_back(t->state);
  std::vector<double> log_probs;
  r.actor = update_actor_rl(states, &log_probs);
  r.temperature = update_temperature(log_probs);
  critic_.polyak(cfg_.tau);
  return r;
}

void NoiseTrainer::save(std::ostream& os) const {
  ArchiveWriter w(os);
  w.tag("noise-trainer", 1);
  actor_.save(w);
  critic_.save(w);
  w.put("log_alpha", log_alpha_);
  actor_opt_.save(w);
  sft_opt_.save(w);
  critic_opt_[0].save(w);
  critic_opt_[1].save(w);
  temp_opt_.save(w);
  rl_.save(w);
  demo_.save(w);
  w.put("update_rng", update_rng_.save_state());
  w.put("rollout_rng", rollout_rng_.save_state());
  w.put_u64("critic_updates", critic_updates_);
}

void NoiseTrainer::load(std::istream& is) {
  ArchiveReader r(is);
  r.expect_tag("noise-trainer", 1);
  actor_.load(r);
  critic_.load(r);
  log_alpha_ = r.get_double("log_alpha");
  actor_opt_.load(r);
  sft_opt_.load(r);
  critic_opt_[0].load(r);
  critic_opt_[1].load(r);
  temp_opt_.load(r);
  rl_.load(r);
  demo_.load(r);
  update_rng_.load_state(r.get_string("update_rng"));
  rollout_rng_.load_state(r.get_string("rollout_rng"));
  critic_updates_ = r.get_u64("critic_updates");
}

const char* schedule_name(ScheduleVariant v) {
  switch (v) {
    case ScheduleVariant::sft_then_rl:
      return "sft_then_rl";
    case ScheduleVariant::rl_then_sft:
      return "rl_then_sft";
    case ScheduleVariant::only_sft:
      return "only_sft";
    case ScheduleVariant::only_rl:
      return "only_rl";
  }
  return "?";
}

ScheduleVariant parse_schedule(const std::string& s) {
  for (auto v : {ScheduleVariant::sft_then_rl, ScheduleVariant::rl_then_sft, ScheduleVariant::only_sft,
                 ScheduleVariant::only_rl}) {
    if (s == schedule_name(v)) return v;
  }
  throw ConfigError("unknown schedule: " + s);
}

namespace {

struct Accumulator {
  UpdateSummary& s;
  double sft = 0.0, critic = 0.0, actor = 0.0;

  void sft_once(NoiseTrainer& t) {
    const auto r = t.sft_step();
    if (!r.performed) return;
    ++s.sft_steps;
    sft += r.loss;
    s.unreachable += r.unreachable;
  }
  void rl_once(NoiseTrainer& t) {
    const auto r = t.rl_step();
    if (!r.critic.performed) return;
    ++s.rl_steps;
    critic += r.critic.loss;
    actor += r.actor.loss;
  }
  void finish() {
    if (s.sft_steps) s.sft_loss = sft / static_cast<double>(s.sft_steps);
    if (s.rl_steps) {
      s.critic_loss = critic / static_cast<double>(s.rl_steps);
      s.actor_loss = actor / static_cast<double>(s.rl_steps);
    }
  }
};

}  // namespace

UpdateSummary run_updates(NoiseTrainer& trainer, const ScheduleSpec& spec) {
  UpdateSummary s;
  Accumulator acc{s};
  const bool sft_first = spec.variant != ScheduleVariant::rl_then_sft;
  const std::size_t n_sft = spec.runs_sft() ? spec.n_sft : 0;
  const std::size_t n_rl = spec.runs_rl() ? spec.n_rl : 0;
  if (spec.interleave) {
    s.order.push_back("interleaved");
    for (std::size_t i = 0; i < std::max(n_sft, n_rl); ++i) {
      if (sft_first && i < n_sft) acc.sft_once(trainer);
      if (i < n_rl) acc.rl_once(trainer);
      if (!sft_first && i < n_sft) acc.sft_once(trainer);
    }
  } else {
    auto sft_block = [&] {
      if (!n_sft) return;
      s.order.push_back("sft");
      for (std::size_t i = 0; i < n_sft; ++i) acc.sft_once(trainer);
    };
    auto rl_block = [&] {
      if (!n_rl) return;
      s.order.push_back("rl");
      for (std::size_t i = 0; i < n_rl; ++i) acc.rl_once(trainer);
    };
    if (sft_first) {
      sft_block();
      rl_block();
    } else {
      rl_block();
      sft_block();
    }
  }
  acc.finish();
  return s;
}

}  // namespace noisesteer
