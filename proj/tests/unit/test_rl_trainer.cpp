#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "flow_fixtures.hpp"
#include "noisesteer/envs/corrector.hpp"
#include "noisesteer/errors.hpp"
#include "noisesteer/inversion/inversion.hpp"
#include "noisesteer/numerics/archive.hpp"
#include "noisesteer/rl/losses.hpp"
#include "noisesteer/rl/rollout.hpp"
#include "rl_fixtures.hpp"

using namespace noisesteer;

namespace {

TrainerConfig small_config() {
  TrainerConfig cfg;
  cfg.actor.hidden = {16, 16};
  cfg.critic_hidden = {32, 32};
  cfg.batch_size = 16;
  return cfg;
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// Env-shaped decoder with identity normalizers and small weights, so the
// decoded chunks are moderate and inversion contracts.
struct RolloutRig {
  EnvParams params;
  FlowDecoder decoder;
  NoiseTrainer trainer;
  SimEnv env;

  explicit RolloutRig(std::uint64_t seed, Task task = Task::reach)
      : params(EnvParams::defaults(task)),
        decoder(make_decoder(params, seed)),
        trainer(kStateDim, decoder.noise_dim(), small_config(), decoder.state_normalizer(), seed),
        env(params) {}

  static FlowDecoder make_decoder(const EnvParams& p, std::uint64_t seed) {
    Rng rng(seed);
    auto dec = fixtures::random_decoder(p.chunk_shape(), kStateDim, 10, rng, {16});
    for (auto& w : dec.mutable_velocity_net().params()) w *= 0.3;
    return dec;
  }
};

class ThrowingCorrector : public Corrector {
 public:
  explicit ThrowingCorrector(std::size_t after) : after_(after) {}
  CorrectorDecision decide(const SimEnv&, std::span<const double>) override {
    if (calls_++ == after_) throw std::runtime_error("simulated env fault");
    return {};
  }

 private:
  std::size_t after_;
  std::size_t calls_ = 0;
};

}  // namespace

TEST_CASE("sample_noise: zero net gives zero deterministic noise") {
  Rng rng(1);
  NoiseActor actor(4, 6, ActorConfig{}, Normalizer::identity(4), rng);
  const std::vector<double> s{0.3, -1.0, 2.0, 0.5};
  for (double z : actor.mean_noise(s)) CHECK(z == 0.0);
  const auto smp = actor.sample(s, rng);
  CHECK(std::isfinite(smp.log_prob));
  for (double z : smp.z) CHECK(std::abs(z) < actor.squash());
}

TEST_CASE("sample_noise: log_std at the clamp floor is nearly deterministic") {
  Rng rng(2);
  auto actor = fixtures::random_actor(4, 6, rng);
  auto& net = actor.mutable_net();
  auto b = net.biases(net.num_layers() - 1);
  auto w = net.weights(net.num_layers() - 1);
  const std::size_t in = net.layers().back().in;
  for (std::size_t i = 6; i < 12; ++i) {
    b[i] = -30.0;  // clamped to -20
    for (std::size_t j = 0; j < in; ++j) w[i * in + j] = 0.0;
  }
  const auto s = rng.normal_vector(4);
  const auto m = actor.mean_noise(s);
  std::size_t close = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto smp = actor.sample(s, rng);
    CHECK(smp.log_std[0] == -20.0);
    close += std::sqrt(sq_dist(smp.z, m)) < 1e-6;
  }
  CHECK(close >= 999);
}

TEST_CASE("sample_noise: Monte-Carlo mean matches the squashed-Gaussian expectation") {
  Rng rng(3);
  auto actor = fixtures::random_actor(3, 4, rng, 0.5);
  const auto s = rng.normal_vector(3);
  const auto h = actor.head(s);
  const double c = actor.squash();
  const std::size_t n = 10000;
  std::vector<double> sum(4, 0.0), sum2(4, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const auto z = actor.sample(s, rng).z;
    for (std::size_t i = 0; i < 4; ++i) {
      sum[i] += z[i];
      sum2[i] += z[i] * z[i];
    }
  }
  for (std::size_t i = 0; i < 4; ++i) {
    const double m = h[i];
    const double sigma = std::exp(std::clamp(h[4 + i], -20.0, 2.0));
    // E[c tanh((m + sigma e) / c)] by trapezoid quadrature over the normal density
    double ez = 0.0;
    const int grid = 4000;
    const double lo = -10.0, step = 20.0 / grid;
    for (int g = 0; g <= grid; ++g) {
      const double e = lo + g * step;
      const double wgt = (g == 0 || g == grid) ? 0.5 : 1.0;
      ez += wgt * step * std::exp(-0.5 * e * e) / std::sqrt(2.0 * 3.141592653589793) * c * std::tanh((m + sigma * e) / c);
    }
    const double mean = sum[i] / n;
    const double sd = std::sqrt(sum2[i] / n - mean * mean);
    CHECK(std::abs(mean - ez) <= 3.0 * sd / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("update_critic: gamma = 0 regresses Q onto the reward") {
  auto cfg = small_config();
  cfg.gamma = 0.0;
  cfg.critic_lr = 1e-3;
  NoiseTrainer tr(3, 4, cfg, Normalizer::identity(3), 5);
  Rng rng(5);
  const auto batch = fixtures::random_transitions(16, 3, 4, rng, 0.0);
  const auto ptrs = fixtures::pointers(batch);
  for (int k = 0; k < 3000; ++k) tr.update_critic(ptrs);
  for (std::size_t q = 0; q < 2; ++q) {
    double mse = 0.0;
    for (const auto& t : batch) {
      const double d = tr.critic().q(q, t.state, t.noise) - t.reward;
      mse += d * d / static_cast<double>(batch.size());
    }
    CHECK(mse < 1e-4);
  }
}

TEST_CASE("td_targets: terminal transitions drop the bootstrap term; others match a manual target") {
  Rng rng(6);
  const auto actor = fixtures::random_actor(3, 4, rng);
  const auto critic = fixtures::random_critic(3, 4, rng);
  auto batch = fixtures::random_transitions(8, 3, 4, rng, 0.0);
  for (std::size_t i = 0; i < batch.size(); i += 2) batch[i].done = true;
  std::vector<std::vector<double>> eps;
  for (std::size_t i = 0; i < batch.size(); ++i) eps.push_back(rng.normal_vector(4));
  const double alpha = 0.7, gamma = 0.9;
  const auto y = td_targets(critic, actor, fixtures::pointers(batch), alpha, gamma, eps);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].done) {
      CHECK(y[i] == batch[i].reward);
      continue;
    }
    const auto nxt = actor.sample_with(batch[i].next_state, eps[i]);
    const double q0 = critic.target_q(0, batch[i].next_state, nxt.z);
    const double q1 = critic.target_q(1, batch[i].next_state, nxt.z);
    const double manual = batch[i].reward + gamma * (std::min(q0, q1) - alpha * nxt.log_prob);
    CHECK(y[i] == doctest::Approx(manual).epsilon(1e-12));
  }
}

TEST_CASE("update_critic and update_actor_rl return a no-op signal on empty input") {
  NoiseTrainer tr(3, 4, small_config(), Normalizer::identity(3), 7);
  const auto before = tr.critic().checksum();
  CHECK_FALSE(tr.update_critic({}).performed);
  CHECK_FALSE(tr.update_actor_rl({}).performed);
  CHECK_FALSE(tr.update_actor_sft({}).performed);
  CHECK(tr.update_actor_sft({}).loss == 0.0);
  CHECK_FALSE(tr.update_temperature({}).performed);
  CHECK_FALSE(tr.sft_step().performed);
  CHECK_FALSE(tr.rl_step().critic.performed);
  CHECK(tr.critic().checksum() == before);
  CHECK(tr.critic_updates() == 0);
}

TEST_CASE("update_actor_rl touches only the actor") {
  NoiseTrainer tr(3, 4, small_config(), Normalizer::identity(3), 8);
  Rng rng(8);
  const auto crit = tr.critic().checksum();
  const auto targ = tr.critic().target_checksum();
  const auto actor_before = tr.actor().net().checksum();
  std::vector<std::vector<double>> states{rng.normal_vector(3), rng.normal_vector(3)};
  std::vector<double> lp;
  CHECK(tr.update_actor_rl(states, &lp).performed);
  CHECK(lp.size() == 2);
  CHECK(tr.critic().checksum() == crit);
  CHECK(tr.critic().target_checksum() == targ);
  CHECK(tr.actor().net().checksum() != actor_before);
}

TEST_CASE("actor RL: quadratic critic pulls the mean toward its maximizer") {
  Rng rng(9);
  NoiseActor actor(3, 4, ActorConfig{{16, 16}}, Normalizer::identity(3), rng);
  const std::vector<double> z_star{1.5, -2.0, 0.5, 1.0};
  const NoiseValueFn quad = [&](std::span<const double>, std::span<const double> z, std::span<double> dz) {
    double q = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      q -= (z[i] - z_star[i]) * (z[i] - z_star[i]);
      dz[i] = -2.0 * (z[i] - z_star[i]);
    }
    return q;
  };
  const auto s = rng.normal_vector(3);
  Adam opt(3e-4);
  double prev = sq_dist(actor.mean_noise(s), z_star);
  const double start = prev;
  for (int k = 1; k <= 500; ++k) {
    const std::vector<std::vector<double>> states{s};
    const std::vector<std::vector<double>> eps{rng.normal_vector(4)};
    const auto l = actor_rl_loss(actor, quad, states, eps, 0.0);
    opt.step(actor.mutable_net().params(), l.grad);
    if (k % 100 == 0) {
      const double d = sq_dist(actor.mean_noise(s), z_star);
      CHECK(d < prev);
      prev = d;
    }
  }
  CHECK(prev < 0.5 * start);
}

TEST_CASE("actor RL: constant critic leaves only the entropy gradient") {
  Rng rng(10);
  const auto actor = fixtures::random_actor(3, 4, rng);
  auto critic = fixtures::random_critic(3, 4, rng);
  for (std::size_t q = 0; q < 2; ++q) {
    auto& net = critic.net(q);
    for (auto& w : net.weights(net.num_layers() - 1)) w = 0.0;
    net.biases(net.num_layers() - 1)[0] = 0.25 * static_cast<double>(q + 1);
  }
  const NoiseValueFn zero = [](std::span<const double>, std::span<const double>, std::span<double> dz) {
    std::fill(dz.begin(), dz.end(), 0.0);
    return 0.0;
  };
  std::vector<std::vector<double>> states, eps;
  for (int b = 0; b < 5; ++b) {
    states.push_back(rng.normal_vector(3));
    eps.push_back(rng.normal_vector(4));
  }
  const double alpha = 0.4;
  const auto with_critic = actor_rl_loss(actor, critic, states, eps, alpha);
  const auto entropy_only = actor_rl_loss(actor, zero, states, eps, alpha);
  REQUIRE(with_critic.grad.size() == entropy_only.grad.size());
  for (std::size_t i = 0; i < with_critic.grad.size(); ++i) {
    CHECK(with_critic.grad[i] == doctest::Approx(entropy_only.grad[i]).epsilon(1e-12));
  }
  CHECK(with_critic.value == doctest::Approx(entropy_only.value - 0.25));
}

TEST_CASE("actor SFT: a single pair is fitted; out-of-bound targets keep a loss floor") {
  auto cfg = small_config();
  cfg.sft_lr = 3e-3;
  Rng rng(11);
  const auto s = rng.normal_vector(3);
  SUBCASE("reachable") {
    NoiseTrainer tr(3, 4, cfg, Normalizer::identity(3), 11);
    const DemoPair pair{s, {1.2, -0.7, 2.2, 0.1}};
    const std::vector<const DemoPair*> batch{&pair};
    UpdateResult r;
    for (int k = 0; k < 4000; ++k) r = tr.update_actor_sft(batch);
    CHECK(r.unreachable == 0);
    CHECK(sq_dist(tr.actor().mean_noise(s), pair.noise) / 4.0 < 1e-5);
  }
  SUBCASE("unreachable") {
    NoiseTrainer tr(3, 4, cfg, Normalizer::identity(3), 11);
    const DemoPair pair{s, {4.0, 0.0, 0.0, 0.0}};
    const std::vector<const DemoPair*> batch{&pair};
    UpdateResult r;
    for (int k = 0; k < 2000; ++k) r = tr.update_actor_sft(batch);
    CHECK(r.unreachable == 1);
    // |c tanh(.)| < 3 so the first coordinate misses by more than 1
    CHECK(r.loss > 1.0 / 4.0);
  }
}

TEST_CASE("temperature: zero gradient at target, dual ascent below target") {
  NoiseTrainer tr(3, 4, small_config(), Normalizer::identity(3), 12);
  const double target = tr.config().target_entropy;
  const std::vector<double> at_target{-target, -target};
  const auto l0 = temperature_loss(0.3, at_target, target);
  CHECK(l0.grad == 0.0);
  CHECK(l0.value == 0.0);

  // entropy below target: -log_prob < target, i.e. log_prob + target > 0
  const std::vector<double> low{1.5, 2.5};
  const double a0 = tr.alpha();
  tr.update_temperature(low);
  CHECK(tr.alpha() > a0);

  const auto l1 = temperature_loss(-0.2, low, 0.5);
  CHECK(l1.grad == doctest::Approx(-((1.5 + 0.5) + (2.5 + 0.5)) / 2.0));
  CHECK(l1.value == doctest::Approx(0.2 * ((1.5 + 0.5) + (2.5 + 0.5)) / 2.0));
}

TEST_CASE("polyak: targets follow the tau-interpolation trajectory") {
  Rng rng(13);
  auto critic = fixtures::random_critic(3, 4, rng);
  const double tau = 0.005;
  std::vector<double> expect[2];
  for (std::size_t q = 0; q < 2; ++q) {
    const auto t = critic.target(q).params();
    expect[q].assign(t.begin(), t.end());
  }
  for (int k = 0; k < 7; ++k) {
    for (std::size_t q = 0; q < 2; ++q) {
      for (auto& p : critic.net(q).params()) p += 0.01 * rng.normal();
      const auto on = critic.net(q).params();
      for (std::size_t i = 0; i < on.size(); ++i) expect[q][i] = tau * on[i] + (1.0 - tau) * expect[q][i];
    }
    critic.polyak(tau);
  }
  auto reference = critic;
  for (std::size_t q = 0; q < 2; ++q) {
    auto dst = reference.mutable_target(q).params();
    std::copy(expect[q].begin(), expect[q].end(), dst.begin());
  }
  CHECK(critic.target_checksum() == reference.target_checksum());

  // fixed online net: target_k - online = (1 - tau)^k (target_0 - online)
  auto fixed = fixtures::random_critic(3, 4, rng);
  const auto on = std::vector<double>(fixed.net(0).params().begin(), fixed.net(0).params().end());
  const auto t0 = std::vector<double>(fixed.target(0).params().begin(), fixed.target(0).params().end());
  for (int k = 0; k < 100; ++k) fixed.polyak(tau);
  const auto t100 = fixed.target(0).params();
  for (std::size_t i = 0; i < on.size(); ++i) {
    CHECK(t100[i] - on[i] == doctest::Approx(std::pow(1.0 - tau, 100) * (t0[i] - on[i])).epsilon(1e-9));
  }
}

TEST_CASE("replay buffer: FIFO eviction, uniform indices, archive round trip") {
  ReplayBuffer buf(3);
  for (int i = 0; i < 5; ++i) buf.add({{double(i)}, {0.0}, 0.0, {0.0}, false});
  CHECK(buf.size() == 3);
  CHECK(buf.total_added() == 5);
  CHECK(buf.at(0).state[0] == 2.0);
  CHECK(buf.at(1).state[0] == 3.0);
  CHECK(buf.at(2).state[0] == 4.0);
  CHECK_THROWS(buf.at(3));
  buf.add({{5.0}, {0.0}, 0.0, {0.0}, false});
  CHECK(buf.at(0).state[0] == 3.0);
  CHECK(buf.at(2).state[0] == 5.0);

  ReplayBuffer big(100);
  for (int i = 0; i < 10; ++i) big.add({{double(i)}, {0.0}, 0.0, {0.0}, false});
  Rng rng(14);
  std::vector<int> counts(10, 0);
  const auto idx = big.sample_indices(20000, rng);
  for (auto i : idx) ++counts.at(i);
  // chi-square with 9 dof; 27.9 is the 0.999 quantile
  double chi = 0.0;
  for (int c : counts) chi += (c - 2000.0) * (c - 2000.0) / 2000.0;
  CHECK(chi < 27.9);
  CHECK(ReplayBuffer(4).sample_indices(3, rng).empty());

  std::stringstream ss;
  {
    ArchiveWriter w(ss);
    buf.save(w);
  }
  ReplayBuffer back(1);
  ArchiveReader r(ss);
  back.load(r);
  CHECK(back.checksum() == buf.checksum());
  CHECK(back.at(0) == buf.at(0));
  CHECK(back.total_added() == buf.total_added());
}

TEST_CASE("demo buffer: reads are counted, archive round trip") {
  DemoBuffer buf;
  Rng rng(15);
  CHECK(buf.sample_indices(4, rng).empty());
  buf.add({{1.0}, {0.5}});
  buf.add({{2.0}, {-0.5}});
  const auto r0 = buf.reads();
  buf.sample_indices(4, rng);
  CHECK(buf.reads() > r0);
  std::stringstream ss;
  {
    ArchiveWriter w(ss);
    buf.save(w);
  }
  DemoBuffer back;
  ArchiveReader r(ss);
  back.load(r);
  CHECK(back.checksum() == buf.checksum());
  CHECK(back.at(1) == buf.at(1));
}

TEST_CASE("TD loss halves within 200 critic steps on a fixed rollout batch") {
  // Run with the temperature near zero: at alpha = 1 the alpha * log_prob(z')
  // term has variance ~ noise_dim / 2 and floors the loss near its start.
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RolloutRig rig(seed);
    OracleCorrector corr;
    ScheduleSpec none;
    none.n_sft = none.n_rl = 0;
    RoundConfig rc;
    rc.episodes = 12;
    rc.seed = seed;
    run_round(rig.trainer, rig.decoder, rig.env, corr, none, rc, 0);
    const auto& buf = rig.trainer.rl_buffer();
    REQUIRE(buf.size() >= 16);
    std::vector<const Transition*> batch;
    for (std::size_t i = 0; i < buf.size(); ++i) batch.push_back(&buf.at(i));
    rig.trainer.set_log_alpha(-50.0);
    const double first = rig.trainer.update_critic(batch).loss;
    double last = first;
    for (int k = 1; k < 200; ++k) last = rig.trainer.update_critic(batch).loss;
    CAPTURE(seed);
    CHECK(last <= 0.5 * first);
  }
}

TEST_CASE("argmax steering: SFT on one inverted correction beats prior samples") {
  RolloutRig rig(16);
  Rng rng(16);
  rig.env.reset(3, 16);
  const auto s = rig.env.state();
  const auto a_h = rig.decoder.normalize_action(rig.env.expert_chunk());
  const auto inv = invert_action(rig.decoder, s, a_h, {});
  REQUIRE(inv.report.reconstruction_loss < 1e-10);
  for (double z : inv.noise) REQUIRE(std::abs(z) < 3.0);
  const DemoPair pair{s, inv.noise};
  const std::vector<const DemoPair*> batch{&pair};
  auto cfg = small_config();
  cfg.sft_lr = 3e-3;
  NoiseTrainer tr(kStateDim, rig.decoder.noise_dim(), cfg, rig.decoder.state_normalizer(), 16);
  for (int k = 0; k < 4000; ++k) tr.update_actor_sft(batch);
  const double steered = sq_dist(rig.decoder.decode(s, tr.actor().mean_noise(s)), a_h);
  std::size_t wins = 0;
  const std::size_t n = 200;
  for (std::size_t k = 0; k < n; ++k) {
    const auto z = rng.normal_vector(rig.decoder.noise_dim());
    wins += steered < sq_dist(rig.decoder.decode(s, z), a_h);
  }
  CHECK(wins >= static_cast<std::size_t>(0.95 * n));
}

TEST_CASE("rollout session: proposals are idempotent and commits are guarded") {
  RolloutRig rig(17);
  RolloutSession session(rig.decoder, rig.trainer, rig.env, {});
  CHECK_THROWS_AS(session.propose(), DomainError);
  session.begin_episode(0, 3);
  CHECK_THROWS_AS(session.commit_policy(), DomainError);
  const auto p1 = session.propose();
  const auto& p2 = session.propose();
  CHECK(p1.seq == p2.seq);
  CHECK(p1.noise == p2.noise);
  CHECK(p1.chunk == p2.chunk);
  CHECK(p1.state == rig.env.state());
  const std::vector<double> short_chunk(3, 0.0);
  CHECK_THROWS_AS(session.commit_correction(short_chunk), ShapeError);

  // correcting with the proposal itself recovers its noise
  const auto res = session.commit_correction(p1.chunk);
  CHECK(res.takeover);
  CHECK(res.reconstruction_loss <= 1e-3);
  CHECK(std::sqrt(sq_dist(res.stored_noise, p1.noise)) < 1e-6);
  CHECK(rig.trainer.demo_buffer().size() == 1);
  CHECK(rig.trainer.rl_buffer().size() == 1);
  CHECK(rig.trainer.rl_buffer().at(0).noise == rig.trainer.demo_buffer().at(0).noise);
  CHECK(session.seq() == p1.seq + 1);
  CHECK_FALSE(session.has_pending());
}

TEST_CASE("run_round: never-takeover with only_rl is the pure noise-space RL path") {
  RolloutRig rig(18);
  NeverCorrector never;
  ScheduleSpec spec;
  spec.variant = ScheduleVariant::only_rl;
  spec.n_rl = 5;
  RoundConfig rc;
  rc.episodes = 4;
  rc.seed = 18;
  const auto dec_sum = rig.decoder.checksum();
  const auto st = run_round(rig.trainer, rig.decoder, rig.env, never, spec, rc, 0);
  CHECK_FALSE(st.aborted);
  CHECK(st.takeovers == 0);
  CHECK(st.model_only == 4);
  CHECK(st.mixed + st.human_only == 0);
  CHECK(rig.trainer.demo_buffer().size() == 0);
  CHECK(rig.trainer.demo_buffer().reads() == 0);
  CHECK(rig.trainer.rl_buffer().size() == st.decisions);
  CHECK(st.updates.rl_steps == 5);
  CHECK(st.updates.sft_steps == 0);
  CHECK(rig.decoder.checksum() == dec_sum);
}

TEST_CASE("run_round: always-takeover with only_sft stores inversion outputs in both buffers") {
  RolloutRig rig(19);
  AlwaysCorrector always;
  ScheduleSpec spec;
  spec.variant = ScheduleVariant::only_sft;
  spec.n_sft = 5;
  RoundConfig rc;
  rc.episodes = 3;
  rc.seed = 19;
  const auto critic_sum = rig.trainer.critic().checksum();
  const auto target_sum = rig.trainer.critic().target_checksum();
  const auto dec_sum = rig.decoder.checksum();
  const auto st = run_round(rig.trainer, rig.decoder, rig.env, always, spec, rc, 0);
  CHECK_FALSE(st.aborted);
  CHECK(st.human_only == 3);
  CHECK(st.takeovers == st.decisions);
  const auto& rl = rig.trainer.rl_buffer();
  const auto& demo = rig.trainer.demo_buffer();
  REQUIRE(rl.size() == demo.size());
  CHECK(rl.size() == st.decisions);
  // replay each episode on a fresh env to recompute the inverted targets
  SimEnv replay(rig.params);
  std::size_t k = 0;
  for (std::size_t e = 0; e < rc.episodes; ++e) {
    replay.reset(round_position(0, e, rc.episodes, rig.params.inits.size()), round_episode_seed(rc.seed, 0, e));
    while (!replay.finished()) {
      const auto chunk = replay.expert_chunk();
      const auto inv = invert_action(rig.decoder, replay.state(), rig.decoder.normalize_action(chunk), rc.inversion);
      CHECK(demo.at(k).state == replay.state());
      CHECK(demo.at(k).noise == inv.noise);
      CHECK(rl.at(k).noise == inv.noise);
      CHECK(rl.at(k).state == demo.at(k).state);
      replay.execute_chunk(chunk);
      ++k;
    }
  }
  CHECK(k == rl.size());
  CHECK(rig.trainer.critic().checksum() == critic_sum);
  CHECK(rig.trainer.critic().target_checksum() == target_sum);
  CHECK(rig.trainer.critic_updates() == 0);
  CHECK(st.updates.sft_steps == 5);
  CHECK(rig.decoder.checksum() == dec_sum);
}

TEST_CASE("run_round: oracle routing pairs every demo entry with an RL entry") {
  RolloutRig rig(20);
  OracleCorrector corr;
  ScheduleSpec spec;
  spec.n_sft = spec.n_rl = 2;
  RoundConfig rc;
  rc.episodes = 5;
  rc.seed = 20;
  const auto st = run_round(rig.trainer, rig.decoder, rig.env, corr, spec, rc, 0);
  const auto& rl = rig.trainer.rl_buffer();
  const auto& demo = rig.trainer.demo_buffer();
  CHECK(rl.size() == st.decisions);
  CHECK(demo.size() == st.takeovers);
  CHECK(st.model_only + st.mixed + st.human_only == st.episodes);
  std::size_t matched = 0;
  for (std::size_t i = 0, j = 0; i < rl.size() && j < demo.size(); ++i) {
    if (rl.at(i).state == demo.at(j).state && rl.at(i).noise == demo.at(j).noise) {
      ++matched;
      ++j;
    }
  }
  CHECK(matched == demo.size());
  CHECK(st.updates.order == std::vector<std::string>{"sft", "rl"});
}

TEST_CASE("run_round: an env fault aborts the round and keeps committed entries") {
  RolloutRig rig(21);
  ThrowingCorrector faulty(3);
  ScheduleSpec spec;
  RoundConfig rc;
  rc.episodes = 4;
  const auto st = run_round(rig.trainer, rig.decoder, rig.env, faulty, spec, rc, 0);
  CHECK(st.aborted);
  CHECK(st.error == "simulated env fault");
  CHECK(st.updates.rl_steps == 0);
  CHECK(st.updates.sft_steps == 0);
  CHECK(st.updates.order.empty());
  CHECK(rig.trainer.rl_buffer().size() == 3);
  CHECK(rig.trainer.critic_updates() == 0);
}

TEST_CASE("run_updates: block order per schedule variant") {
  const auto run = [](ScheduleVariant v, bool interleave) {
    RolloutRig rig(22);
    AlwaysCorrector always;
    ScheduleSpec none;
    none.n_sft = none.n_rl = 0;
    RoundConfig rc;
    rc.episodes = 2;
    run_round(rig.trainer, rig.decoder, rig.env, always, none, rc, 0);
    ScheduleSpec spec{v, 3, 4, interleave};
    const auto reads = rig.trainer.demo_buffer().reads();
    const auto s = run_updates(rig.trainer, spec);
    if (!spec.runs_sft()) CHECK(rig.trainer.demo_buffer().reads() == reads);
    return s;
  };
  using V = ScheduleVariant;
  auto s = run(V::sft_then_rl, false);
  CHECK(s.order == std::vector<std::string>{"sft", "rl"});
  CHECK(s.sft_steps == 3);
  CHECK(s.rl_steps == 4);
  s = run(V::rl_then_sft, false);
  CHECK(s.order == std::vector<std::string>{"rl", "sft"});
  s = run(V::only_sft, false);
  CHECK(s.order == std::vector<std::string>{"sft"});
  CHECK(s.rl_steps == 0);
  s = run(V::only_rl, false);
  CHECK(s.order == std::vector<std::string>{"rl"});
  CHECK(s.sft_steps == 0);
  s = run(V::sft_then_rl, true);
  CHECK(s.order == std::vector<std::string>{"interleaved"});
  CHECK(s.sft_steps == 3);
  CHECK(s.rl_steps == 4);

  for (auto v : {V::sft_then_rl, V::rl_then_sft, V::only_sft, V::only_rl}) CHECK(parse_schedule(schedule_name(v)) == v);
  CHECK_THROWS_AS(parse_schedule("rl_first"), ConfigError);
}

TEST_CASE("trainer checkpoint resumes bit-identically") {
  RolloutRig a(23);
  OracleCorrector corr;
  ScheduleSpec spec;
  spec.n_sft = spec.n_rl = 3;
  RoundConfig rc;
  rc.episodes = 3;
  rc.seed = 23;
  run_round(a.trainer, a.decoder, a.env, corr, spec, rc, 0);
  std::stringstream ss;
  a.trainer.save(ss);
  RolloutRig b(99);
  b.trainer.load(ss);
  CHECK(b.trainer.actor() == a.trainer.actor());
  CHECK(b.trainer.critic().checksum() == a.trainer.critic().checksum());
  OracleCorrector corr_b;
  const auto sa = run_round(a.trainer, a.decoder, a.env, corr, spec, rc, 1);
  const auto sb = run_round(b.trainer, a.decoder, b.env, corr_b, spec, rc, 1);
  CHECK(sa.decisions == sb.decisions);
  CHECK(sa.updates.critic_loss == sb.updates.critic_loss);
  CHECK(b.trainer.actor() == a.trainer.actor());
  CHECK(b.trainer.critic().checksum() == a.trainer.critic().checksum());
  CHECK(b.trainer.rl_buffer().checksum() == a.trainer.rl_buffer().checksum());
  CHECK(b.trainer.demo_buffer().checksum() == a.trainer.demo_buffer().checksum());
  CHECK(b.trainer.alpha() == a.trainer.alpha());
}

TEST_CASE("entropy-matched initial log-std gives the target Gaussian entropy") {
  for (double target : {0.0, -5.0, 3.0}) {
    const std::size_t d = 24;
    const double ls = TrainerConfig::entropy_matched_log_std(target, d);
    const double entropy = d * (0.5 * std::log(2.0 * 3.141592653589793 * 2.718281828459045) + ls);
    CHECK(entropy == doctest::Approx(target).epsilon(1e-12));
  }
}
