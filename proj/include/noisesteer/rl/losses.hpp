#pragma once
// Loss values and parameter gradients for the noise-space learner. Every
// function is deterministic given its inputs (noise draws are passed in), so
// each gradient can be checked against finite differences.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "noisesteer/flow/demo_set.hpp"
#include "noisesteer/flow/flow_decoder.hpp"
#include "noisesteer/rl/actor.hpp"
#include "noisesteer/rl/buffers.hpp"
#include "noisesteer/rl/critic.hpp"

namespace noisesteer {

/// y = r + gamma (1 - done) (min_j Qbar_j(s', z') - alpha log psi(z' | s')),
/// z' reparameterized from the actor at s' with `next_eps[b]`.
std::vector<double> td_targets(const TwinCritic& critic, const NoiseActor& actor,
                               std::span<const Transition* const> batch, double alpha, double gamma,
                               const std::vector<std::vector<double>>& next_eps);

struct CriticLoss {
  double value = 0.0;  // mean_b [(Q_1 - y)^2 + (Q_2 - y)^2]
  std::vector<double> grad[2];
};
CriticLoss critic_loss(const TwinCritic& critic, std::span<const Transition* const> batch, std::span<const double> y);

struct ActorLoss {
  double value = 0.0;
  std::vector<double> grad;
  std::vector<double> log_probs;  // per sample (RL loss only)
  std::size_t unreachable = 0;    // targets outside the squash bound (SFT loss only)
};

/// Q(s, z); writes dQ/dz into the last argument.
using NoiseValueFn = std::function<double(std::span<const double>, std::span<const double>, std::span<double>)>;

/// mean_b [alpha log psi(z_b | s_b) - Q(s_b, z_b)] with z_b = f(s_b, eps_b).
ActorLoss actor_rl_loss(const NoiseActor& actor, const NoiseValueFn& q, const std::vector<std::vector<double>>& states,
                        const std::vector<std::vector<double>>& eps, double alpha);
/// Same with Q = min_j Q_j of the online twin critics.
ActorLoss actor_rl_loss(const NoiseActor& actor, const TwinCritic& critic, const std::vector<std::vector<double>>& states,
                        const std::vector<std::vector<double>>& eps, double alpha);

/// Mean squared error between the squashed actor mean and the inverted noise targets.
ActorLoss actor_sft_loss(const NoiseActor& actor, std::span<const DemoPair* const> batch);

/// Mean squared error between decode(s, c tanh(m / c)) and the target chunk,
/// back-propagated through the frozen decoder into the actor. Demo chunks are
/// in normalized decoder units.
ActorLoss actor_direct_loss(const NoiseActor& actor, const FlowDecoder& decoder, std::span<const Demo* const> batch);

struct TemperatureLoss {
  double value = 0.0;  // -log_alpha * mean(log_prob + target_entropy)
  double grad = 0.0;
};
TemperatureLoss temperature_loss(double log_alpha, std::span<const double> log_probs, double target_entropy);

}  // namespace noisesteer
