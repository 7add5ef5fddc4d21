#include <cmath>
#include <sstream>

#include "doctest.h"
#include "fd_oracle.hpp"
#include "flow_fixtures.hpp"
#include "noisesteer/errors.hpp"
#include "noisesteer/flow/pretrain.hpp"

using namespace noisesteer;

namespace {

// Euler loop written against the reference forward pass only.
std::vector<double> oracle_euler(const FlowDecoder& dec, std::span<const double> state_n, std::vector<double> u) {
  const std::size_t K = dec.steps();
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> in(u);
    in.push_back(static_cast<double>(k) / static_cast<double>(K));
    in.insert(in.end(), state_n.begin(), state_n.end());
    const auto v = testing_oracle::reference_forward(dec.velocity_net(), in);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += (1.0 / static_cast<double>(K)) * v[i];
  }
  return u;
}

double l2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("grid: K*dt is one and the grid ends at t = 1") {
  for (std::size_t K : {1u, 3u, 10u, 16u}) {
    auto dec = fixtures::linear_decoder({2, 2}, 1, K);
    CHECK(dec.grid_time(0) == 0.0);
    CHECK(dec.grid_time(K) == 1.0);
    CHECK(static_cast<double>(K) * dec.dt() == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("velocity: zero, constant and random fields") {
  const std::vector<double> s{0.3, -0.2};
  Rng rng(1);
  auto zero = fixtures::linear_decoder({2, 2}, 2, 10);
  for (double v : zero.velocity(rng.normal_vector(4), 0.5, s)) CHECK(v == 0.0);

  const std::vector<double> c{0.5, -1.0, 2.0, 0.25};
  auto cst = fixtures::constant_field({2, 2}, 2, 10, c);
  CHECK(cst.velocity(rng.normal_vector(4), 0.1, s) == c);
  CHECK(cst.velocity(rng.normal_vector(4), 0.9, s) == c);

  auto dec = fixtures::random_decoder({2, 2}, 2, 10, rng);
  auto z = rng.normal_vector(4);
  std::vector<double> in(z);
  in.push_back(0.4);
  in.insert(in.end(), s.begin(), s.end());
  const auto ref = testing_oracle::reference_forward(dec.velocity_net(), in);
  const auto v = dec.velocity(z, 0.4, s);
  for (std::size_t i = 0; i < 4; ++i) CHECK(v[i] == doctest::Approx(ref[i]).epsilon(1e-12));

  CHECK_THROWS_AS(dec.velocity(z, 1.5, s), DomainError);
  CHECK_THROWS_AS(dec.velocity(z, -0.01, s), DomainError);
}

TEST_CASE("decode: identity transport and telescoping constant field") {
  const std::vector<double> s{0.0};
  Rng rng(2);
  auto zero = fixtures::linear_decoder({3, 2}, 1, 10);
  auto z0 = rng.normal_vector(6);
  CHECK(zero.decode(s, z0) == z0);

  const std::vector<double> c{1.0, -0.5, 0.0, 3.0, 0.1, -2.0};
  auto cst = fixtures::constant_field({3, 2}, 1, 10, c);
  const auto a = cst.decode(s, z0);
  for (std::size_t i = 0; i < 6; ++i) CHECK(a[i] == doctest::Approx(z0[i] + c[i]).epsilon(1e-13));
}

TEST_CASE("decode matches an independently coded Euler loop") {
  Rng rng(3);
  auto dec = fixtures::random_decoder({4, 2}, 3, 10, rng);
  for (int trial = 0; trial < 10; ++trial) {
    auto s = rng.normal_vector(3);
    auto z0 = rng.normal_vector(8);
    const auto a = dec.decode(s, z0);
    const auto ref = oracle_euler(dec, dec.normalize_state(s), z0);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - ref[i]) < 1e-12);
  }
}

TEST_CASE("decode is deterministic and trajectory-consistent") {
  Rng rng(4);
  auto dec = fixtures::random_decoder({4, 2}, 3, 10, rng);
  auto s = rng.normal_vector(3);
  auto z0 = rng.normal_vector(8);
  const auto a = dec.decode(s, z0);
  CHECK(dec.decode(s, z0) == a);
  const auto trace = dec.decode_trace(s, z0);
  REQUIRE(trace.size() == dec.steps() + 1);
  CHECK(trace.front() == z0);
  CHECK(trace.back() == a);
  for (std::size_t k = 0; k <= dec.steps(); ++k) CHECK(dec.decode_from(s, trace[k], k) == a);
}

TEST_CASE("decode reports the failing step for non-finite iterates") {
  auto dec = fixtures::constant_field({1, 1}, 1, 4, {1e308});
  const std::vector<double> s{0.0};
  const std::vector<double> z0{1e308};
  try {
    dec.decode(s, z0);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.where() >= 1);
    CHECK(e.where() <= 4);
  }
  CHECK_THROWS_AS(dec.decode(s, std::vector<double>{1.0, 2.0}), ShapeError);
}

TEST_CASE("decode_vjp agrees with finite differences") {
  Rng rng(5);
  auto dec = fixtures::random_decoder({3, 2}, 2, 10, rng);
  auto s = rng.normal_vector(2);
  auto z0 = rng.normal_vector(6);
  auto target = rng.normal_vector(6);
  auto lossg = [&](std::span<const double> a, std::span<double> g) {
    for (std::size_t i = 0; i < a.size(); ++i) g[i] = 2.0 * (a[i] - target[i]);
  };
  const auto r = dec.decode_vjp(s, z0, lossg);
  auto fd = testing_oracle::central_difference(
      [&] {
        auto a = dec.decode(s, z0);
        double l = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) l += (a[i] - target[i]) * (a[i] - target[i]);
        return l;
      },
      z0);
  CHECK(testing_oracle::relative_error(r.grad_noise, fd) <= 1e-6);
}

TEST_CASE("flow matching loss gradient agrees with finite differences") {
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    auto dec = fixtures::random_decoder({2, 2}, 2, 10, rng, {8, 8});
    std::vector<FlowMatchingSample> batch(3);
    for (auto& b : batch) b = {rng.normal_vector(2), rng.normal_vector(4), rng.normal_vector(4), rng.uniform()};
    auto r = flow_matching_loss(dec, batch);
    auto fd = testing_oracle::central_difference([&] { return flow_matching_loss(dec, batch).value; },
                                                 dec.mutable_velocity_net().params());
    CHECK(testing_oracle::relative_error(r.grad, fd) <= 1e-4);
  }
}

TEST_CASE("pretrain: empty demos and zero steps") {
  Rng rng(7);
  auto dec = fixtures::random_decoder({2, 2}, 2, 10, rng);
  DemoSet empty{{2, 2}, 2, {}};
  CHECK_THROWS_AS(pretrain_flow(dec, empty, {}, rng), ConfigError);

  DemoSet one{{2, 2}, 2, {{{0.1, 0.2}, {1.0, 0.0, -1.0, 0.5}}}};
  const auto before = dec.checksum();
  FlowTrainConfig cfg;
  cfg.steps = 0;
  CHECK(pretrain_flow(dec, one, cfg, rng).empty());
  CHECK(dec.checksum() == before);
}

TEST_CASE("pretrain: overfitting one demo pair decodes fresh noise onto it") {
  Rng rng(8);
  auto dec = fixtures::random_decoder({2, 2}, 2, 10, rng, {32, 32});
  DemoSet one{{2, 2}, 2, {{{0.1, 0.2}, {0.8, -0.3, -0.6, 0.4}}}};
  FlowTrainConfig cfg;
  cfg.steps = 3000;
  cfg.batch_size = 32;
  cfg.lr = 3e-3;
  const auto curve = pretrain_flow(dec, one, cfg, rng);
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    head += curve[i];
    tail += curve[curve.size() - 1 - i];
  }
  CHECK(tail < head);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = dec.decode(one.items[0].state, rng.normal_vector(4));
    CHECK(l2(a, one.items[0].chunk) < 0.05);
  }
}

TEST_CASE("decoder checkpoint round trip is bit-exact") {
  Rng rng(9);
  auto dec = FlowDecoder::make({3, 2}, 4, 7, {8}, Normalizer{{1, 2, 3, 4}, {0.5, 0.25, 2, 1}},
                               Normalizer::identity(6), rng);
  std::stringstream ss;
  dec.save(ss);
  auto back = FlowDecoder::load(ss);
  CHECK(back.checksum() == dec.checksum());
  auto s = rng.normal_vector(4);
  auto z = rng.normal_vector(6);
  CHECK(back.decode(s, z) == dec.decode(s, z));
}

TEST_CASE("demo set jsonl round trip and shape validation") {
  DemoSet set{{2, 1}, 3, {}};
  set.add({{1.0 / 3.0, 2.0, -1e-7}, {0.1, 0.2}});
  set.add({{0.0, 0.5, 1.0}, {-0.3, 1e10}});
  std::stringstream ss;
  set.write_jsonl(ss);
  auto back = DemoSet::read_jsonl(ss);
  REQUIRE(back.size() == 2);
  CHECK(back.items[0].state == set.items[0].state);
  CHECK(back.items[1].chunk == set.items[1].chunk);
  CHECK_THROWS_AS(set.add({{1.0}, {0.0, 0.0}}), ShapeError);
}
