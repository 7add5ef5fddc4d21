#include "noisesteer/rl/rollout.hpp"

#include <algorithm>
#include <cmath>

#include "noisesteer/errors.hpp"

namespace noisesteer {

RolloutSession::RolloutSession(const FlowDecoder& decoder, NoiseTrainer& trainer, SimEnv& env,
                               InversionConfig inversion, bool stochastic)
    : decoder_(decoder), trainer_(trainer), env_(env), inversion_(inversion), stochastic_(stochastic) {
  if (decoder.noise_dim() != trainer.actor().noise_dim()) throw ShapeError("actor and decoder noise dims differ");
  if (decoder.shape() != env.params().chunk_shape()) throw ShapeError("decoder chunk shape does not match env");
}

const std::vector<double>& RolloutSession::begin_episode(std::size_t position, std::uint64_t episode_seed) {
  env_.reset(position, episode_seed);
  pending_.reset();
  tally_ = {};
  active_ = true;
  return env_.state();
}

const Proposal& RolloutSession::propose() {
  if (!active_ || env_.finished()) throw DomainError("no decision pending: episode finished");
  if (pending_) return *pending_;
  Proposal p;
  p.seq = seq_;
  p.state = env_.state();
  p.noise = stochastic_ ? trainer_.actor().sample(p.state, trainer_.rollout_rng()).z : trainer_.actor().mean_noise(p.state);
  p.chunk = decoder_.denormalize_action(decoder_.decode(p.state, p.noise));
  pending_ = std::move(p);
  return *pending_;
}

CommitResult RolloutSession::commit_policy() {
  if (!pending_) throw DomainError("commit without a proposal");
  const auto chunk = pending_->chunk;
  return execute(chunk, pending_->noise, false);
}

CommitResult RolloutSession::commit_correction(std::span<const double> chunk) {
  if (!pending_) throw DomainError("commit without a proposal");
  if (chunk.size() != decoder_.noise_dim()) throw ShapeError("correction chunk has wrong size");
  const auto target = decoder_.normalize_action(chunk);
  auto inv = invert_action(decoder_, pending_->state, target, inversion_);
  auto res = execute(chunk, inv.noise, true);
  res.reconstruction_loss = inv.report.reconstruction_loss;
  res.contraction_warning = inv.report.contraction_warning;
  return res;
}

CommitResult RolloutSession::execute(std::span<const double> chunk, std::vector<double> noise, bool takeover) {
  const auto state = pending_->state;
  const auto out = env_.execute_chunk(chunk);
  CommitResult r;
  r.takeover = takeover;
  r.reward = out.reward;
  r.done = out.done;
  r.truncated = out.truncated;
  r.stored_noise = noise;
  if (takeover) {
    const double c = trainer_.actor().squash();
    r.unreachable = std::any_of(noise.begin(), noise.end(), [c](double z) { return std::abs(z) >= c; });
    trainer_.demo_buffer().add({state, noise});
  }
  trainer_.rl_buffer().add({state, std::move(noise), out.reward, env_.state(), out.done});
  ++tally_.decisions;
  tally_.takeovers += takeover;
  tally_.success = env_.success();
  pending_.reset();
  ++seq_;
  return r;
}

std::size_t round_position(std::size_t round, std::size_t episode, std::size_t episodes, std::size_t positions) {
  return (round * episodes + episode) % positions;
}

std::uint64_t round_episode_seed(std::uint64_t seed, std::size_t round, std::size_t episode) {
  return Rng(seed).derive(0x5eed0000ULL + round * 4096 + episode).next_u64();
}

RoundStats run_round(NoiseTrainer& trainer, const FlowDecoder& decoder, SimEnv& env, Corrector& corrector,
                     const ScheduleSpec& schedule, const RoundConfig& cfg, std::size_t round) {
  RoundStats st;
  st.round = round;
  RolloutSession session(decoder, trainer, env, cfg.inversion, true);
  double inv_loss = 0.0;
  std::size_t inversions = 0;
  try {
    for (std::size_t e = 0; e < cfg.episodes; ++e) {
      const auto pos = round_position(round, e, cfg.episodes, env.params().inits.size());
      session.begin_episode(pos, round_episode_seed(cfg.seed, round, e));
      corrector.begin_episode(env);
      const std::size_t steps_before = env.steps_taken();
      while (!session.episode_finished()) {
        const auto& p = session.propose();
        auto d = corrector.decide(env, p.chunk);
        if (d.takeover) {
          const auto r = session.commit_correction(d.chunk);
          inv_loss += r.reconstruction_loss;
          ++inversions;
          st.unreachable += r.unreachable;
        } else {
          session.commit_policy();
        }
      }
      const auto& t = session.tally();
      ++st.episodes;
      st.successes += t.success;
      st.decisions += t.decisions;
      st.takeovers += t.takeovers;
      st.env_steps += env.steps_taken() - steps_before;
      if (t.takeovers == 0) {
        ++st.model_only;
      } else if (t.takeovers == t.decisions) {
        ++st.human_only;
      } else {
        ++st.mixed;
      }
    }
  } catch (const std::exception& ex) {
    st.aborted = true;
    st.error = ex.what();
  }
  st.success_rate = st.episodes ? static_cast<double>(st.successes) / static_cast<double>(st.episodes) : 0.0;
  st.mean_inversion_loss = inversions ? inv_loss / static_cast<double>(inversions) : 0.0;
  if (!st.aborted) st.updates = run_updates(trainer, schedule);
  st.rl_buffer = trainer.rl_buffer().size();
  st.demo_buffer = trainer.demo_buffer().size();
  return st;
}

}  // namespace noisesteer
