#include "noisesteer/rl/critic.hpp"

#include <algorithm>
#include <atomic>

#include "noisesteer/errors.hpp"
#include "noisesteer/numerics/archive.hpp"

namespace noisesteer {

namespace {

std::vector<std::size_t> critic_sizes(std::size_t in, const std::vector<std::size_t>& hidden) {
  std::vector<std::size_t> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  return sizes;
}

}  // namespace

namespace {
std::atomic<std::uint64_t> g_constructed{0};
}  // namespace

std::uint64_t TwinCritic::constructed() { return g_constructed.load(); }

TwinCritic::TwinCritic(std::size_t state_dim, std::size_t noise_dim, const std::vector<std::size_t>& hidden,
                       Normalizer state_norm, Rng& rng, Activation hidden_act)
    : state_dim_(state_dim), noise_dim_(noise_dim), hidden_(hidden), act_(hidden_act), state_norm_(std::move(state_norm)) {
  ++g_constructed;
  if (state_norm_.size() != state_dim) throw ShapeError("state normalizer size mismatch");
  for (int i = 0; i < 2; ++i) {
    online_[i] = DenseNet::make(critic_sizes(state_dim + noise_dim, hidden), act_, Activation::identity, rng);
    target_[i] = online_[i];
  }
}

std::vector<double> TwinCritic::input(std::span<const double> state, std::span<const double> z) const {
  if (state.size() != state_dim_ || z.size() != noise_dim_) throw ShapeError("critic input has wrong dimension");
  auto x = state_norm_.apply(state);
  x.insert(x.end(), z.begin(), z.end());
  return x;
}

double TwinCritic::q(std::size_t which, std::span<const double> state, std::span<const double> z) const {
  return online_[which].forward(input(state, z))[0];
}

double TwinCritic::target_q(std::size_t which, std::span<const double> state, std::span<const double> z) const {
  return target_[which].forward(input(state, z))[0];
}

double TwinCritic::min_q(std::span<const double> state, std::span<const double> z) const {
  const auto x = input(state, z);
  return std::min(online_[0].forward(x)[0], online_[1].forward(x)[0]);
}

double TwinCritic::min_target_q(std::span<const double> state, std::span<const double> z) const {
  const auto x = input(state, z);
  return std::min(target_[0].forward(x)[0], target_[1].forward(x)[0]);
}

void TwinCritic::polyak(double tau) {
  for (int i = 0; i < 2; ++i) {
    auto src = online_[i].params();
    auto dst = target_[i].params();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = tau * src[k] + (1.0 - tau) * dst[k];
  }
}

std::uint64_t TwinCritic::checksum() const { return online_[1].checksum() ^ (online_[0].checksum() * 31); }

std::uint64_t TwinCritic::target_checksum() const { return target_[1].checksum() ^ (target_[0].checksum() * 31); }

void TwinCritic::save(ArchiveWriter& w) const {
  w.tag("twin-critic", 1);
  w.put_u64("state_dim", state_dim_);
  w.put_u64("noise_dim", noise_dim_);
  std::vector<std::uint64_t> hidden(hidden_.begin(), hidden_.end());
  w.put_u64s("hidden", hidden);
  w.put("activation", activation_name(act_));
  state_norm_.save(w, "state");
  w.put("q0", online_[0].params());
  w.put("q1", online_[1].params());
  w.put("t0", target_[0].params());
  w.put("t1", target_[1].params());
}

void TwinCritic::load(ArchiveReader& r) {
  r.expect_tag("twin-critic", 1);
  state_dim_ = r.get_u64("state_dim");
  noise_dim_ = r.get_u64("noise_dim");
  const auto hidden = r.get_u64s("hidden");
  hidden_.assign(hidden.begin(), hidden.end());
  act_ = parse_activation(r.get_string("activation"));
  state_norm_ = Normalizer::load(r, "state");
  const auto sizes = critic_sizes(state_dim_ + noise_dim_, hidden_);
  std::vector<Activation> acts(sizes.size() - 1, act_);
  acts.back() = Activation::identity;
  for (const char* key : {"q0", "q1", "t0", "t1"}) {
    DenseNet net(sizes, acts);
    const auto p = r.get_vector(key);
    if (p.size() != net.num_params()) throw FormatError("critic parameter count mismatch");
    std::copy(p.begin(), p.end(), net.params().begin());
    const std::string k = key;
    (k[0] == 'q' ? online_ : target_)[k[1] - '0'] = std::move(net);
  }
}

}  // namespace noisesteer
