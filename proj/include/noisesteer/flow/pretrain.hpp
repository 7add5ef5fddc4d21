#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "noisesteer/flow/demo_set.hpp"
#include "noisesteer/flow/flow_decoder.hpp"
#include "noisesteer/numerics/adam.hpp"
#include "noisesteer/numerics/dense_net.hpp"
#include "noisesteer/numerics/rng.hpp"

namespace noisesteer {

struct FlowTrainConfig {
  std::size_t steps = 4000;
  std::size_t batch_size = 64;
  double lr = 1e-3;
};

/// One conditional flow-matching sample: the path point is
/// z_t = (1 - t) z0 + t a and the regression target is a - z0.
struct FlowMatchingSample {
  std::vector<double> state;   // raw state
  std::vector<double> action;  // normalized chunk
  std::vector<double> noise;
  double t = 0.0;
};

/// Mean over samples of the per-coordinate mean squared velocity error, with
/// its gradient w.r.t. the velocity network parameters.
ValueAndGrad flow_matching_loss(const FlowDecoder& dec, std::span<const FlowMatchingSample> batch);

/// Fits a per-coordinate state normalizer and a per-action-dimension chunk
/// normalizer to the demos and builds an untrained decoder.
FlowDecoder make_decoder_for(const DemoSet& demos, std::size_t steps, const std::vector<std::size_t>& hidden,
                             Rng& rng);

/// One Adam step of flow matching on a batch drawn uniformly from `items`
/// (chunks already normalized). Returns the batch loss.
double flow_matching_step(FlowDecoder& dec, std::span<const Demo> items, std::size_t batch_size, Adam& opt, Rng& rng);

/// Trains the velocity network by flow matching on `demos` (t ~ U[0,1],
/// z0 ~ N(0, I)). Returns the per-step loss curve. Throws ConfigError on an
/// empty demo set. Zero steps leave the decoder untouched.
std::vector<double> pretrain_flow(FlowDecoder& dec, const DemoSet& demos, const FlowTrainConfig& cfg, Rng& rng);

/// Mean squared error of decode(s, z) against each demo chunk (normalized
/// units), averaged over demos and `draws` fresh noise samples per demo.
double reconstruction_mse(const FlowDecoder& dec, const DemoSet& demos, std::size_t draws, Rng& rng);

}  // namespace noisesteer
