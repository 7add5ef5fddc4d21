#include "noisesteer/rl/losses.hpp"

#include <algorithm>
#include <cmath>

#include "noisesteer/errors.hpp"
#include "noisesteer/inversion/inversion.hpp"

namespace noisesteer {

std::vector<double> td_targets(const TwinCritic& critic, const NoiseActor& actor,
                               std::span<const Transition* const> batch, double alpha, double gamma,
                               const std::vector<std::vector<double>>& next_eps) {
  if (next_eps.size() != batch.size()) throw ShapeError("one eps vector per transition");
  std::vector<double> y(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& t = *batch[b];
    y[b] = t.reward;
    if (t.done) continue;
    const auto next = actor.sample_with(t.next_state, next_eps[b]);
    y[b] += gamma * (critic.min_target_q(t.next_state, next.z) - alpha * next.log_prob);
  }
  return y;
}

CriticLoss critic_loss(const TwinCritic& critic, std::span<const Transition* const> batch, std::span<const double> y) {
  if (y.size() != batch.size()) throw ShapeError("one target per transition");
  CriticLoss out;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (int i = 0; i < 2; ++i) out.grad[i].assign(critic.net(i).num_params(), 0.0);
  DenseNet::Tape tape;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto x = critic.input(batch[b]->state, batch[b]->noise);
    for (int i = 0; i < 2; ++i) {
      const double d = critic.net(i).forward(x, tape)[0] - y[b];
      out.value += d * d * inv;
      const double dq = 2.0 * d * inv;
      critic.net(i).backward(tape, std::span<const double>(&dq, 1), out.grad[i]);
    }
  }
  if (!std::isfinite(out.value)) throw NumericError("non-finite critic loss", 0);
  return out;
}

ActorLoss actor_rl_loss(const NoiseActor& actor, const NoiseValueFn& q, const std::vector<std::vector<double>>& states,
                        const std::vector<std::vector<double>>& eps, double alpha) {
  if (eps.size() != states.size()) throw ShapeError("one eps vector per state");
  ActorLoss out;
  out.grad.assign(actor.net().num_params(), 0.0);
  const std::size_t d = actor.noise_dim();
  const double c = actor.squash();
  const double inv = 1.0 / static_cast<double>(states.size());
  const auto& cfg = actor.config();
  DenseNet::Tape atape;
  std::vector<double> dhead(2 * d), gz(d);
  for (std::size_t b = 0; b < states.size(); ++b) {
    const auto h = actor.head(states[b], &atape);
    const auto s = actor.from_head(h, eps[b]);
    const double qv = q(states[b], s.z, gz);
    out.value += (alpha * s.log_prob - qv) * inv;
    out.log_probs.push_back(s.log_prob);
    for (std::size_t i = 0; i < d; ++i) {
      const double th = std::tanh(s.u[i] / c);
      const double du = alpha * 2.0 * th / c - gz[i] * (1.0 - th * th);
      dhead[i] = du * inv;
      const double raw = h[d + i];
      const bool inside = raw >= cfg.log_std_min && raw <= cfg.log_std_max;
      dhead[d + i] = inside ? (du * std::exp(s.log_std[i]) * eps[b][i] - alpha) * inv : 0.0;
    }
    actor.net().backward(atape, dhead, out.grad);
  }
  if (!std::isfinite(out.value)) throw NumericError("non-finite actor loss", 0);
  return out;
}

ActorLoss actor_rl_loss(const NoiseActor& actor, const TwinCritic& critic, const std::vector<std::vector<double>>& states,
                        const std::vector<std::vector<double>>& eps, double alpha) {
  DenseNet::Tape tape;
  std::vector<double> dx(critic.state_dim() + critic.noise_dim());
  const NoiseValueFn min_q = [&](std::span<const double> state, std::span<const double> z, std::span<double> dz) {
    const auto x = critic.input(state, z);
    const double q0 = critic.net(0).forward(x)[0];
    const double q1 = critic.net(1).forward(x)[0];
    const std::size_t which = q0 <= q1 ? 0 : 1;
    critic.net(which).forward(x, tape);
    const double one = 1.0;
    critic.net(which).backward(tape, std::span<const double>(&one, 1), {}, dx);
    std::copy(dx.begin() + static_cast<std::ptrdiff_t>(critic.state_dim()), dx.end(), dz.begin());
    return std::min(q0, q1);
  };
  return actor_rl_loss(actor, min_q, states, eps, alpha);
}

ActorLoss actor_sft_loss(const NoiseActor& actor, std::span<const DemoPair* const> batch) {
  ActorLoss out;
  out.grad.assign(actor.net().num_params(), 0.0);
  const std::size_t d = actor.noise_dim();
  const double c = actor.squash();
  const double inv = 1.0 / static_cast<double>(batch.size() * d);
  DenseNet::Tape tape;
  std::vector<double> dhead(2 * d, 0.0);
  for (const auto* p : batch) {
    if (p->noise.size() != d) throw ShapeError("demo noise has wrong dimension");
    const auto h = actor.head(p->state, &tape);
    bool unreachable = false;
    for (std::size_t i = 0; i < d; ++i) {
      const double th = std::tanh(h[i] / c);
      const double diff = c * th - p->noise[i];
      out.value += diff * diff * inv;
      dhead[i] = 2.0 * diff * (1.0 - th * th) * inv;
      unreachable = unreachable || std::abs(p->noise[i]) >= c;
    }
    out.unreachable += unreachable;
    actor.net().backward(tape, dhead, out.grad);
  }
  if (!std::isfinite(out.value)) throw NumericError("non-finite demo loss", 0);
  return out;
}

ActorLoss actor_direct_loss(const NoiseActor& actor, const FlowDecoder& decoder, std::span<const Demo* const> batch) {
  ActorLoss out;
  out.grad.assign(actor.net().num_params(), 0.0);
  const std::size_t d = actor.noise_dim();
  if (decoder.noise_dim() != d) throw ShapeError("actor and decoder noise dims differ");
  const double c = actor.squash();
  const double inv = 1.0 / static_cast<double>(batch.size() * d);
  DenseNet::Tape tape;
  std::vector<double> z(d), dhead(2 * d, 0.0);
  for (const auto* p : batch) {
    if (p->chunk.size() != d) throw ShapeError("target chunk has wrong dimension");
    const auto h = actor.head(p->state, &tape);
    for (std::size_t i = 0; i < d; ++i) z[i] = c * std::tanh(h[i] / c);
    const auto l = direct_supervision_loss(decoder, p->state, z, p->chunk);
    out.value += l.value * inv;
    for (std::size_t i = 0; i < d; ++i) {
      const double th = z[i] / c;
      dhead[i] = l.grad[i] * (1.0 - th * th) * inv;
    }
    actor.net().backward(tape, dhead, out.grad);
  }
  if (!std::isfinite(out.value)) throw NumericError("non-finite direct supervision loss", 0);
  return out;
}

TemperatureLoss temperature_loss(double log_alpha, std::span<const double> log_probs, double target_entropy) {
  TemperatureLoss out;
  if (log_probs.empty()) return out;
  double m = 0.0;
  for (double lp : log_probs) m += lp + target_entropy;
  m /= static_cast<double>(log_probs.size());
  out.value = -log_alpha * m;
  out.grad = -m;
  return out;
}

}  // namespace noisesteer
