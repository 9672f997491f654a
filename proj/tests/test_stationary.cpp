#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "mfa/stationary.hpp"
#include "oracles.hpp"

using namespace mfa;
using oracle::direct_stationary;
using oracle::kernel_matrix;

namespace {

QueueDist random_pmf(std::mt19937_64& gen, const StateGrid& g, std::size_t support) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w(g.count(), 0.0);
  for (std::size_t m = 0; m < std::min(support, g.count()); ++m) w[m] = u(gen) + 0.01;
  return QueueDist::normalized(g, w);
}

ModelParams small_params(const StateGrid& g, QueueDist arrival, QueueDist regen, double s, double beta) {
  return ModelParams{beta, 2, s, g, BidGrid(1.0, 3), std::move(arrival), std::move(regen), HoldingCost{}};
}

TransitionSpec random_spec(std::mt19937_64& gen, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const StateGrid g(0.5, n);
  const std::size_t reach = 1 + static_cast<std::size_t>(u(gen) * 4);
  ModelParams P = small_params(g, random_pmf(gen, g, reach), random_pmf(gen, g, 1 + n / 3),
                               0.5 * static_cast<double>(1 + static_cast<std::size_t>(u(gen) * 4)), 0.5);
  std::vector<double> p(n);
  for (double& x : p) x = u(gen);
  return TransitionSpec::with_win_prob(P, p, 0.3 + 0.65 * u(gen));
}

}  // namespace

TEST_CASE("transition_apply with beta = 0 returns Psi") {
  std::mt19937_64 gen(1);
  const StateGrid g(1.0, 6);
  const auto P = small_params(g, random_pmf(gen, g, 3), random_pmf(gen, g, 4), 1.0, 0.5);
  const auto spec = TransitionSpec::with_win_prob(P, std::vector<double>(6, 0.4), 0.0);
  const auto out = transition_apply(random_pmf(gen, g, 6), spec);
  for (std::size_t m = 0; m < 6; ++m) CHECK(out[m] == doctest::Approx(P.regen[m]).epsilon(1e-15));
}

TEST_CASE("frozen chain leaves pi unchanged") {
  std::mt19937_64 gen(2);
  const StateGrid g(1.0, 6);
  const auto P = small_params(g, QueueDist::point_mass(g, 0), random_pmf(gen, g, 4), 1.0, 0.5);
  const auto spec = TransitionSpec::with_win_prob(P, std::vector<double>(6, 0.0), 1.0);
  const auto pi = random_pmf(gen, g, 6);
  const auto out = transition_apply(pi, spec);
  for (std::size_t m = 0; m < 6; ++m) CHECK(out[m] == doctest::Approx(pi[m]).epsilon(1e-15));
}

TEST_CASE("3-state toy chain matches the hand-multiplied matrix") {
  // States {0,1,2}, s = 1, A in {0,1} w.p. {0.5,0.5}, Psi = point mass at 0,
  // p = (0.2, 0.6, 0.9), beta = 0.8.
  const StateGrid g(1.0, 3);
  const auto P = small_params(g, QueueDist(g, {0.5, 0.5, 0.0}), QueueDist::point_mass(g, 0), 1.0, 0.5);
  const auto spec = TransitionSpec::with_win_prob(P, {0.2, 0.6, 0.9}, 0.8);
  // Row q=0: served/unserved both from 0 -> {0:.5, 1:.5}; x0.8, +0.2 at 0.
  // Row q=1: win (0.6) from 0 -> {0:.5,1:.5}; lose from 1 -> {1:.5,2:.5}.
  //   = 0.8*[.3, .3+.2, .2] + [.2,0,0] = [.44, .40, .16]
  // Row q=2: win (0.9) from 1 -> {1:.5,2:.5}; lose from 2 -> {2:1}.
  //   = 0.8*[0, .45, .55] + [.2,0,0] = [.2, .36, .44]
  const double hand[3][3] = {{0.6, 0.4, 0.0}, {0.44, 0.40, 0.16}, {0.2, 0.36, 0.44}};
  const QueueDist pi(g, {0.5, 0.3, 0.2});
  const auto out = transition_apply(pi, spec);
  for (int j = 0; j < 3; ++j) {
    double expect = 0.0;
    for (int i = 0; i < 3; ++i) expect += pi[static_cast<std::size_t>(i)] * hand[i][j];
    CHECK(std::abs(out[static_cast<std::size_t>(j)] - expect) <= 1e-15);
  }
  const Eigen::MatrixXd K = kernel_matrix(spec);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) CHECK(K(i, j) == doctest::Approx(hand[i][j]).epsilon(1e-14));
  }
}

TEST_CASE("transition_apply agrees with the explicit matrix on random specs") {
  std::mt19937_64 gen(3);
  for (int t = 0; t < 30; ++t) {
    const auto spec = random_spec(gen, 3 + static_cast<std::size_t>(t % 8));
    const Eigen::MatrixXd K = kernel_matrix(spec);
    const auto pi = random_pmf(gen, spec.grid(), spec.grid().count());
    Eigen::RowVectorXd v(static_cast<Eigen::Index>(pi.size()));
    for (std::size_t m = 0; m < pi.size(); ++m) v(static_cast<Eigen::Index>(m)) = pi[m];
    const Eigen::RowVectorXd w = v * K;
    const auto out = transition_apply(pi, spec);
    double mass = 0.0;
    for (std::size_t m = 0; m < pi.size(); ++m) {
      CHECK(std::abs(out[m] - w(static_cast<Eigen::Index>(m))) <= 1e-14);
      CHECK(out[m] >= 0.0);
      mass += out[m];
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("stationary_power matches a direct linear solve to 1e-10") {
  std::mt19937_64 gen(4);
  for (int t = 0; t < 40; ++t) {
    const auto spec = random_spec(gen, 2 + static_cast<std::size_t>(t % 9));
    const auto res = stationary_power(spec, 1e-15);
    const Eigen::VectorXd direct = direct_stationary(kernel_matrix(spec));
    for (std::size_t m = 0; m < res.pi.size(); ++m) {
      CHECK(std::abs(res.pi[m] - direct(static_cast<Eigen::Index>(m))) <= 1e-10);
    }
  }
}

TEST_CASE("stationary_power basics") {
  std::mt19937_64 gen(5);
  const StateGrid g(1.0, 8);
  const auto P = small_params(g, random_pmf(gen, g, 3), random_pmf(gen, g, 4), 2.0, 0.5);
  const auto zero = stationary_power(TransitionSpec::with_win_prob(P, std::vector<double>(8, 0.3), 0.0));
  for (std::size_t m = 0; m < 8; ++m) CHECK(zero.pi[m] == doctest::Approx(P.regen[m]));

  for (double beta : {0.5, 0.9, 0.99}) {
    const auto spec = TransitionSpec::with_win_prob(P, std::vector<double>(8, 0.3), beta);
    const auto res = stationary_power(spec);
    CHECK(res.residual < 1e-12);
    const auto again = transition_apply(res.pi, spec);
    CHECK(tv_distance(again, res.pi) < 1e-12);
    for (std::size_t m = 0; m < 8; ++m) CHECK(res.pi[m] >= (1.0 - beta) * P.regen[m] - 1e-15);
  }
  CHECK_THROWS_AS(stationary_power(TransitionSpec::with_win_prob(P, std::vector<double>(8, 0.3), 0.999), 1e-15, 3),
                  ConvergenceError);
}

TEST_CASE("more service gives shorter stationary queues") {
  std::mt19937_64 gen(6);
  const StateGrid g(0.5, 40);
  const auto P = small_params(g, random_pmf(gen, g, 4), random_pmf(gen, g, 6), 1.0, 0.5);
  const auto none = stationary_power(TransitionSpec::with_win_prob(P, std::vector<double>(40, 0.0), 0.9));
  const auto full = stationary_power(TransitionSpec::with_win_prob(P, std::vector<double>(40, 1.0), 0.9));
  CHECK(mean_of(none.pi) >= mean_of(full.pi));
}

TEST_CASE("series with k_max = 0 is Psi") {
  std::mt19937_64 gen(7);
  const StateGrid g(1.0, 6);
  const auto P = small_params(g, random_pmf(gen, g, 3), random_pmf(gen, g, 4), 1.0, 0.5);
  const auto r = stationary_series(TransitionSpec::with_win_prob(P, std::vector<double>(6, 0.5), 0.7), 0);
  for (std::size_t m = 0; m < 6; ++m) CHECK(r.pi[m] == doctest::Approx(P.regen[m]));
  CHECK(r.truncation_bound == doctest::Approx(0.7));
  const auto r0 = stationary_series(TransitionSpec::with_win_prob(P, std::vector<double>(6, 0.5), 0.0), 5);
  for (std::size_t m = 0; m < 6; ++m) CHECK(r0.pi[m] == doctest::Approx(P.regen[m]));
}

TEST_CASE("series without service is a geometric mixture of shifted Psi") {
  // Phi = point mass at delta = 1 step, Psi uniform on {0,1}; Upsilon^(k) is
  // Psi shifted by k and saturated at the last point 4.
  const StateGrid g(1.0, 5);
  const auto P = small_params(g, QueueDist::point_mass(g, 1), QueueDist(g, {0.5, 0.5, 0, 0, 0}), 1.0, 0.5);
  const double beta = 0.6;
  const std::size_t K = 60;
  const auto r = stationary_series(TransitionSpec::with_win_prob(P, std::vector<double>(5, 0.0), beta), K);
  std::vector<double> hand(5, 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k <= K; ++k) {
    const double w = (1.0 - beta) * std::pow(beta, static_cast<double>(k));
    hand[std::min<std::size_t>(k, 4)] += 0.5 * w;
    hand[std::min<std::size_t>(k + 1, 4)] += 0.5 * w;
    total += w;
  }
  for (std::size_t m = 0; m < 5; ++m) CHECK(r.pi[m] == doctest::Approx(hand[m] / total).epsilon(1e-12));
}

TEST_CASE("series oracle agrees with power iteration on random small specs") {
  std::mt19937_64 gen(8);
  for (int t = 0; t < 25; ++t) {
    const auto spec = random_spec(gen, 5 + static_cast<std::size_t>(t * 7 % 190));
    const std::size_t k_max = series_terms_for(spec.beta);
    const auto series = stationary_series(spec, k_max);
    const auto power = stationary_power(spec);
    CHECK(series.truncation_bound < 1e-8);
    CHECK(tv_distance(series.pi, power.pi) < 1e-4 + series.truncation_bound);
  }
}

TEST_CASE("series_terms_for") {
  CHECK(series_terms_for(0.5, 1e-3) == 9);
  CHECK(std::pow(0.9, static_cast<double>(series_terms_for(0.9) + 1)) < 1e-8);
  CHECK(std::pow(0.9, static_cast<double>(series_terms_for(0.9))) >= 1e-8);
}

TEST_CASE("from_policy evaluates the win probability at the policy bid") {
  const auto P = reference_params(0.9, 3);
  const BidCdf rho = linear_ramp_cdf(P.bid_grid, 0.01);
  const BidPolicy theta{P.state_grid, std::vector<double>(P.state_grid.count(), 30.0)};
  const auto spec = TransitionSpec::from_policy(rho, theta, P);
  CHECK(spec.win_prob[17] == doctest::Approx(0.09));
  CHECK(spec.service_steps == 500);
  CHECK(spec.beta == 0.9);
}
