#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mfa/mfe_solver.hpp"
#include "oracles.hpp"

using namespace mfa;
using oracle::enumerate_gamma;

namespace {

ModelParams toy_params(double beta = 0.8) {
  const StateGrid g(1.0, 5);
  return ModelParams{beta, 2, 1.0, g, BidGrid(10.0, 5), QueueDist(g, {0.5, 0.5, 0, 0, 0}),
                     QueueDist(g, {0.4, 0.3, 0.2, 0.1, 0}), HoldingCost{}};
}

MfeOptions tight_options() {
  MfeOptions o;
  o.epsilon = 1e-9;
  o.max_outer = 500;
  o.value.tol = 1e-12;
  o.value.mode = ResidualMode::kAbsolute;
  return o;
}

}  // namespace

TEST_CASE("induced_bid_cdf: zero policy puts all mass at 0") {
  const StateGrid g(1.0, 6);
  const BidGrid bg(0.5, 7);
  const QueueDist pi(g, {0.1, 0.2, 0.3, 0.2, 0.1, 0.1});
  const auto gamma = induced_bid_cdf(pi, BidPolicy{g, std::vector<double>(6, 0.0)}, bg);
  for (std::size_t k = 0; k < bg.count(); ++k) CHECK(gamma[k] == doctest::Approx(1.0));
}

TEST_CASE("induced_bid_cdf: point mass gives a step at its bid") {
  const StateGrid g(1.0, 6);
  const BidGrid bg(1.0, 8);
  const BidPolicy theta{g, {0.0, 0.7, 1.5, 2.5, 3.0, 6.2}};
  const auto gamma = induced_bid_cdf(QueueDist::point_mass(g, 3), theta, bg);
  for (std::size_t k = 0; k < bg.count(); ++k) CHECK(gamma[k] == (bg.point(k) >= 2.5 ? 1.0 : 0.0));
}

TEST_CASE("induced_bid_cdf matches set enumeration") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const StateGrid g(1.0, 10);
  const BidGrid bg(0.25, 41);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> w(10), bids(10);
    for (double& x : w) x = u(gen);
    double b = 0.0;
    for (double& x : bids) {
      b += (u(gen) < 0.2 ? 0.0 : u(gen) * 1.5);
      x = t % 3 == 0 ? std::round(b * 4.0) / 4.0 : b;
    }
    const auto pi = QueueDist::normalized(g, w);
    const BidPolicy theta{g, bids};
    const auto gamma = induced_bid_cdf(pi, theta, bg);
    const auto oracle = enumerate_gamma(pi, theta, bg);
    for (std::size_t k = 0; k < bg.count(); ++k) CHECK(gamma[k] == doctest::Approx(oracle[k]).epsilon(1e-12));
    for (std::size_t k = 1; k < bg.count(); ++k) CHECK(gamma[k] >= gamma[k - 1]);
    CHECK(gamma[bg.count() - 1] == 1.0);
  }
}

TEST_CASE("induced_bid_cdf rejects invalid bids") {
  const StateGrid g(1.0, 3);
  const BidGrid bg(1.0, 3);
  const QueueDist pi(g, {0.2, 0.3, 0.5});
  CHECK_THROWS_AS(induced_bid_cdf(pi, BidPolicy{g, {0.0, -1.0, 2.0}}, bg), std::invalid_argument);
  CHECK_THROWS_AS(induced_bid_cdf(pi, BidPolicy{g, {0.0, NAN, 2.0}}, bg), std::invalid_argument);
  CHECK_THROWS_AS(induced_bid_cdf(pi, BidPolicy{StateGrid(1.0, 4), {0, 1, 2, 3}}, bg), std::invalid_argument);
}

TEST_CASE("mfe_step with a vanishing discount bids (almost) nothing") {
  const auto P = toy_params(1e-9);
  for (double slope : {0.001, 0.05, 1.0}) {
    const BidCdf rho0 = linear_ramp_cdf(P.bid_grid, slope);
    const auto step = mfe_step(rho0, P.regen, P, MfeOptions{});
    const auto C = P.cost_on_grid();
    for (std::size_t m = 0; m < C.size(); ++m) CHECK(step.value.values[m] == doctest::Approx(C[m]).epsilon(1e-6));
    for (double b : step.policy.bids) CHECK(b < 1e-6);
    CHECK(step.policy.bids[0] == 0.0);
    for (std::size_t k = 1; k < P.bid_grid.count(); ++k) CHECK(step.rho_next[k] == 1.0);
    for (std::size_t m = 0; m < 5; ++m) CHECK(step.pi[m] == doctest::Approx(P.regen[m]).epsilon(1e-6));
  }
}

TEST_CASE("toy model: solve_mfe reaches a fixed point of mfe_step") {
  const auto P = toy_params();
  for (auto sched : {StationarySchedule::kSingleStep, StationarySchedule::kConverge}) {
    auto o = tight_options();
    o.schedule = sched;
    const auto sol = solve_mfe(P, o);
    REQUIRE(sol.converged);
    CHECK(sol.residual < 1e-9);
    CHECK(sol.residual_history.size() == sol.iterations);
    CHECK(sol.residual_history.back() == sol.residual);
    for (std::size_t m = 1; m < 5; ++m) CHECK(sol.policy.bids[m] > sol.policy.bids[m - 1]);

    const auto again = mfe_step(sol.rho, sol.pi, P, o);
    CHECK(sup_distance(again.rho_next, sol.rho) < 1e-8);
    const auto cc = check_consistency(sol.rho, P, o);
    CHECK(cc.defect < 1e-8);
  }
}

TEST_CASE("toy model: the solution is a local minimum of the consistency defect") {
  const auto P = toy_params();
  const auto o = tight_options();
  const auto sol = solve_mfe(P, o);
  REQUIRE(sol.converged);
  const double d0 = check_consistency(sol.rho, P, o).defect;
  CHECK(d0 < 1e-8);
  const auto base = sol.rho.values();
  for (std::size_t k = 0; k + 1 < base.size(); ++k) {
    for (double delta : {-0.05, -0.01, 0.01, 0.05}) {
      std::vector<double> v(base.begin(), base.end());
      v[k] = std::clamp(v[k] + delta, k == 0 ? 0.0 : v[k - 1], v[k + 1]);
      if (v[k] == base[k]) continue;
      const double d = check_consistency(BidCdf(P.bid_grid, v), P, o).defect;
      CHECK(d > d0);
    }
  }
}

TEST_CASE("damping keeps the same fixed point") {
  const auto P = toy_params();
  auto o = tight_options();
  const auto plain = solve_mfe(P, o);
  o.damping = 0.5;
  const auto damped = solve_mfe(P, o);
  REQUIRE(damped.converged);
  CHECK(sup_distance(plain.rho, damped.rho) < 1e-6);
}

TEST_CASE("solve_mfe options validation and non-convergence") {
  const auto P = toy_params();
  MfeOptions o;
  o.epsilon = 0.0;
  CHECK_THROWS_AS(solve_mfe(P, o), std::invalid_argument);
  o = MfeOptions{};
  o.damping = 1.0;
  CHECK_THROWS_AS(solve_mfe(P, o), std::invalid_argument);
  o = MfeOptions{};
  o.max_outer = 0;
  CHECK_THROWS_AS(solve_mfe(P, o), std::invalid_argument);

  o = tight_options();
  o.max_outer = 2;
  const auto sol = solve_mfe(P, o);
  CHECK_FALSE(sol.converged);
  CHECK(sol.iterations == 2);
  CHECK(sol.residual == std::min(sol.residual_history[0], sol.residual_history[1]));
}

TEST_CASE("reference settings converge and the policy ranks queues") {
  struct Case { double beta; int M; };
  std::vector<QueueDist> pis;
  for (Case c : {Case{0.9, 10}, Case{0.95, 10}, Case{0.9, 15}}) {
    const auto P = reference_params(c.beta, c.M);
    const auto sol = solve_mfe(P);
    REQUIRE(sol.converged);
    CHECK(sol.iterations < 50);
    CHECK(sol.residual < 0.008);
    for (std::size_t m = 1; m < sol.policy.bids.size(); ++m) REQUIRE(sol.policy.bids[m] > sol.policy.bids[m - 1]);
    const auto cc = check_consistency(sol.rho, P);
    CHECK(cc.defect < 0.008 * 2);

    std::mt19937_64 gen(static_cast<std::uint64_t>(c.M * 100 + c.beta * 10));
    std::uniform_int_distribution<std::size_t> pick(0, sol.policy.bids.size() - 1);
    for (int t = 0; t < 1000; ++t) {
      std::vector<std::size_t> qs(static_cast<std::size_t>(c.M));
      for (auto& q : qs) q = pick(gen);
      const auto by_queue = std::max_element(qs.begin(), qs.end());
      const auto by_bid = std::max_element(qs.begin(), qs.end(), [&](std::size_t a, std::size_t b) {
        return sol.policy.bids[a] < sol.policy.bids[b];
      });
      CHECK(*by_queue == *by_bid);
    }
    pis.push_back(sol.pi);
  }
  const double step = pis[0].grid().step();
  for (int i = 1; i <= 9; ++i) {
    const double p = 0.1 * i;
    CHECK(quantile_of(pis[1], p) >= quantile_of(pis[0], p) - step);
  }
}
