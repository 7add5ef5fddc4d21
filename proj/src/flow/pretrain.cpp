#include "noisesteer/flow/pretrain.hpp"

#include "noisesteer/errors.hpp"
#include "noisesteer/numerics/adam.hpp"

namespace noisesteer {

ValueAndGrad flow_matching_loss(const FlowDecoder& dec, std::span<const FlowMatchingSample> batch) {
  if (batch.empty()) throw ConfigError("flow matching loss needs a non-empty batch");
  const auto& net = dec.velocity_net();
  const std::size_t d = dec.noise_dim();
  const double inv = 1.0 / static_cast<double>(batch.size() * d);
  ValueAndGrad out;
  out.grad.assign(net.num_params(), 0.0);
  DenseNet::Tape tape;
  std::vector<double> zt(d), dv(d);
  for (const auto& s : batch) {
    for (std::size_t i = 0; i < d; ++i) zt[i] = (1.0 - s.t) * s.noise[i] + s.t * s.action[i];
    const auto v = dec.velocity_taped(zt, s.t, dec.normalize_state(s.state), tape);
    for (std::size_t i = 0; i < d; ++i) {
      const double r = v[i] - (s.action[i] - s.noise[i]);
      out.value += r * r * inv;
      dv[i] = 2.0 * r * inv;
    }
    net.backward(tape, dv, out.grad);
  }
  return out;
}

FlowDecoder make_decoder_for(const DemoSet& demos, std::size_t steps, const std::vector<std::size_t>& hidden,
                             Rng& rng) {
  if (demos.empty()) throw ConfigError("cannot build a decoder from an empty demo set");
  demos.validate();
  std::vector<std::vector<double>> states, chunks;
  for (const auto& d : demos.items) {
    states.push_back(d.state);
    chunks.push_back(d.chunk);
  }
  return FlowDecoder::make(demos.shape, demos.state_dim, steps, hidden, Normalizer::fit(states),
                           Normalizer::fit_grouped(chunks, demos.shape.action_dim), rng);
}

std::vector<double> pretrain_flow(FlowDecoder& dec, const DemoSet& demos, const FlowTrainConfig& cfg, Rng& rng) {
  if (demos.empty()) throw ConfigError("pretraining needs at least one demonstration");
  demos.validate();
  if (demos.shape != dec.shape() || demos.state_dim != dec.state_dim()) {
    throw ShapeError("demo set does not match decoder dimensions");
  }
  std::vector<Demo> normalized;
  normalized.reserve(demos.size());
  for (const auto& d : demos.items) normalized.push_back({d.state, dec.normalize_action(d.chunk)});

  Adam opt(cfg.lr);
  std::vector<double> curve;
  curve.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    curve.push_back(flow_matching_step(dec, normalized, cfg.batch_size, opt, rng));
  }
  return curve;
}

double flow_matching_step(FlowDecoder& dec, std::span<const Demo> items, std::size_t batch_size, Adam& opt, Rng& rng) {
  if (items.empty()) throw ConfigError("flow matching needs at least one pair");
  if (batch_size == 0) throw ConfigError("flow matching batch size must be positive");
  std::vector<FlowMatchingSample> batch(batch_size);
  for (auto& s : batch) {
    const std::size_t i = rng.index(items.size());
    s.state = items[i].state;
    s.action = items[i].chunk;
    s.noise = rng.normal_vector(dec.noise_dim());
    s.t = rng.uniform();
  }
  auto r = flow_matching_loss(dec, batch);
  opt.step(dec.mutable_velocity_net().params(), r.grad);
  return r.value;
}

double reconstruction_mse(const FlowDecoder& dec, const DemoSet& demos, std::size_t draws, Rng& rng) {
  if (demos.empty() || draws == 0) return 0.0;
  double total = 0.0;
  for (const auto& d : demos.items) {
    const auto target = dec.normalize_action(d.chunk);
    for (std::size_t k = 0; k < draws; ++k) {
      const auto a = dec.decode(d.state, rng.normal_vector(dec.noise_dim()));
      double se = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - target[i]) * (a[i] - target[i]);
      total += se / static_cast<double>(a.size());
    }
  }
  return total / static_cast<double>(demos.size() * draws);
}

}  // namespace noisesteer
