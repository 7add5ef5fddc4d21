#include "noisesteer/rl/actor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "noisesteer/errors.hpp"
#include "noisesteer/numerics/archive.hpp"

namespace noisesteer {

double log1m_tanh_sq(double x) {
  // 1 - tanh^2 x = 4 e^{-2x} / (1 + e^{-2x})^2
  const double ax = std::abs(x);
  return 2.0 * (std::numbers::ln2 - ax - std::log1p(std::exp(-2.0 * ax)));
}

NoiseActor::NoiseActor(std::size_t state_dim, std::size_t noise_dim, const ActorConfig& cfg, Normalizer state_norm,
                       Rng& rng)
    : state_dim_(state_dim), noise_dim_(noise_dim), cfg_(cfg), state_norm_(std::move(state_norm)) {
  if (!(cfg.squash > 0.0)) throw ConfigError("squash bound must be positive");
  if (!(cfg.log_std_min < cfg.log_std_max)) throw ConfigError("log_std bounds out of order");
  if (state_norm_.size() != state_dim) throw ShapeError("state normalizer size mismatch");
  std::vector<std::size_t> sizes{state_dim};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(2 * noise_dim);
  net_ = DenseNet::make(sizes, Activation::relu, Activation::identity, rng);
  const auto last = net_.num_layers() - 1;
  std::fill(net_.weights(last).begin(), net_.weights(last).end(), 0.0);
  auto b = net_.biases(last);
  std::fill(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(noise_dim), 0.0);
  std::fill(b.begin() + static_cast<std::ptrdiff_t>(noise_dim), b.end(), cfg.init_log_std);
}

std::vector<double> NoiseActor::head(std::span<const double> state, DenseNet::Tape* tape) const {
  if (state.size() != state_dim_) throw ShapeError("actor state has wrong dimension");
  const auto sn = state_norm_.apply(state);
  return tape ? net_.forward(sn, *tape) : net_.forward(sn);
}

NoiseActor::Sample NoiseActor::sample_with(std::span<const double> state, std::span<const double> eps) const {
  return from_head(head(state), eps);
}

NoiseActor::Sample NoiseActor::from_head(std::span<const double> h, std::span<const double> eps) const {
  if (eps.size() != noise_dim_) throw ShapeError("eps has wrong dimension");
  if (h.size() != 2 * noise_dim_) throw ShapeError("actor head has wrong dimension");
  const double c = cfg_.squash;
  Sample s;
  s.mean.assign(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(noise_dim_));
  s.eps.assign(eps.begin(), eps.end());
  s.u.resize(noise_dim_);
  s.z.resize(noise_dim_);
  s.log_std.resize(noise_dim_);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  for (std::size_t i = 0; i < noise_dim_; ++i) {
    const double ls = std::clamp(h[noise_dim_ + i], cfg_.log_std_min, cfg_.log_std_max);
    s.log_std[i] = ls;
    s.u[i] = s.mean[i] + std::exp(ls) * eps[i];
    s.z[i] = c * std::tanh(s.u[i] / c);
    s.log_prob += -0.5 * eps[i] * eps[i] - ls - half_log_2pi - log1m_tanh_sq(s.u[i] / c);
  }
  return s;
}

NoiseActor::Sample NoiseActor::sample(std::span<const double> state, Rng& rng) const {
  const auto eps = rng.normal_vector(noise_dim_);
  return sample_with(state, eps);
}

std::vector<double> NoiseActor::mean_noise(std::span<const double> state) const {
  const auto h = head(state);
  std::vector<double> z(noise_dim_);
  for (std::size_t i = 0; i < noise_dim_; ++i) z[i] = cfg_.squash * std::tanh(h[i] / cfg_.squash);
  return z;
}

void NoiseActor::save(ArchiveWriter& w) const {
  w.tag("noise-actor", 1);
  w.put_u64("state_dim", state_dim_);
  w.put_u64("noise_dim", noise_dim_);
  std::vector<std::uint64_t> hidden(cfg_.hidden.begin(), cfg_.hidden.end());
  w.put_u64s("hidden", hidden);
  w.put("squash", cfg_.squash);
  w.put("log_std_min", cfg_.log_std_min);
  w.put("log_std_max", cfg_.log_std_max);
  state_norm_.save(w, "state");
  w.put("params", net_.params());
}

void NoiseActor::load(ArchiveReader& r) {
  r.expect_tag("noise-actor", 1);
  state_dim_ = r.get_u64("state_dim");
  noise_dim_ = r.get_u64("noise_dim");
  const auto hidden = r.get_u64s("hidden");
  cfg_.hidden.assign(hidden.begin(), hidden.end());
  cfg_.squash = r.get_double("squash");
  cfg_.log_std_min = r.get_double("log_std_min");
  cfg_.log_std_max = r.get_double("log_std_max");
  state_norm_ = Normalizer::load(r, "state");
  std::vector<std::size_t> sizes{state_dim_};
  sizes.insert(sizes.end(), cfg_.hidden.begin(), cfg_.hidden.end());
  sizes.push_back(2 * noise_dim_);
  std::vector<Activation> acts(sizes.size() - 1, Activation::relu);
  acts.back() = Activation::identity;
  net_ = DenseNet(sizes, acts);
  const auto p = r.get_vector("params");
  if (p.size() != net_.num_params()) throw FormatError("actor parameter count mismatch");
  std::copy(p.begin(), p.end(), net_.params().begin());
}

bool NoiseActor::operator==(const NoiseActor& o) const {
  return state_dim_ == o.state_dim_ && noise_dim_ == o.noise_dim_ && cfg_.squash == o.cfg_.squash &&
         cfg_.hidden == o.cfg_.hidden && state_norm_ == o.state_norm_ && net_ == o.net_;
}

}  // namespace noisesteer
