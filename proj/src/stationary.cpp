#include "mfa/stationary.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "mfa/errors.hpp"

namespace mfa {

TransitionSpec TransitionSpec::from_policy(const BidCdf& rho, const BidPolicy& theta,
                                           const ModelParams& params) {
  if (theta.bids.size() != params.state_grid.count()) {
    throw std::invalid_argument("policy size does not match the state grid");
  }
  std::vector<double> p(theta.bids.size());
  for (std::size_t m = 0; m < p.size(); ++m) p[m] = mfa::win_prob(rho, theta.bids[m], params.M);
  return TransitionSpec{params.beta, params.service_steps(), params.arrival, params.regen,
                        std::move(p)};
}

TransitionSpec TransitionSpec::with_win_prob(const ModelParams& params, std::vector<double> p,
                                             double beta) {
  if (p.size() != params.state_grid.count()) {
    throw std::invalid_argument("win probability vector does not match the state grid");
  }
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must lie in [0,1]");
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("win probability outside [0,1]");
  }
  return TransitionSpec{beta, params.service_steps(), params.arrival, params.regen, std::move(p)};
}

namespace {

void check_spec(const TransitionSpec& spec) {
  if (spec.win_prob.size() != spec.arrival.size() || !(spec.regen.grid() == spec.arrival.grid())) {
    throw std::invalid_argument("transition kernel inputs disagree with the grid");
  }
}

}  // namespace

QueueDist transition_apply(const QueueDist& pi, const TransitionSpec& spec) {
  check_spec(spec);
  if (!(pi.grid() == spec.grid())) throw std::invalid_argument("distribution on a different grid");
  const std::size_t n = pi.size();
  const std::size_t last = n - 1;

  // Pre-arrival mass: winners move to (q-s)^+, losers stay at q.
  std::vector<double> pre(n, 0.0);
  for (std::size_t m = 0; m < n; ++m) {
    const double mass = pi[m];
    if (mass == 0.0) continue;
    const double p = spec.win_prob[m];
    const std::size_t served = m > spec.service_steps ? m - spec.service_steps : 0;
    pre[served] += mass * p;
    pre[m] += mass * (1.0 - p);
  }

  std::vector<double> out(n);
  for (std::size_t m = 0; m < n; ++m) out[m] = (1.0 - spec.beta) * spec.regen[m];
  for (std::size_t j = 0; j < spec.arrival.size(); ++j) {
    const double a = spec.arrival[j];
    if (a == 0.0) continue;
    const double w = spec.beta * a;
    for (std::size_t m = 0; m < n; ++m) {
      if (pre[m] != 0.0) out[std::min(m + j, last)] += w * pre[m];
    }
  }
  return QueueDist::normalized(pi.grid(), std::move(out));
}

StationaryResult stationary_power(const TransitionSpec& spec, double tol, std::size_t max_iter) {
  if (!(tol > 0.0)) throw std::invalid_argument("stationary tolerance must be positive");
  QueueDist pi = spec.regen;
  double r = 0.0;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    QueueDist next = transition_apply(pi, spec);
    r = tv_distance(next, pi);
    pi = std::move(next);
    if (r < tol) return StationaryResult{std::move(pi), it, r};
  }
  throw ConvergenceError("stationary power iteration did not converge", max_iter, r);
}

SeriesResult stationary_series(const TransitionSpec& spec, std::size_t k_max) {
  check_spec(spec);
  const std::size_t n = spec.arrival.size();
  const std::size_t last = n - 1;
  const std::size_t s = spec.service_steps;

  // upsilon holds the k-step law started from Psi with regeneration removed.
  std::vector<double> upsilon(spec.regen.weights().begin(), spec.regen.weights().end());
  std::vector<double> acc(n, 0.0);
  std::vector<double> next(n);
  double coeff = 1.0 - spec.beta;
  for (std::size_t k = 0; k <= k_max; ++k) {
    for (std::size_t m = 0; m < n; ++m) acc[m] += coeff * upsilon[m];
    if (k == k_max) break;
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t from = 0; from < n; ++from) {
      const double mass = upsilon[from];
      if (mass == 0.0) continue;
      const double p = spec.win_prob[from];
      const std::size_t won = from > s ? from - s : 0;
      for (std::size_t j = 0; j < n; ++j) {
        const double a = spec.arrival[j];
        if (a == 0.0) continue;
        next[std::min(won + j, last)] += mass * p * a;
        next[std::min(from + j, last)] += mass * (1.0 - p) * a;
      }
    }
    upsilon.swap(next);
    coeff *= spec.beta;
  }
  const double tail = std::pow(spec.beta, static_cast<double>(k_max + 1));
  return SeriesResult{QueueDist::normalized(spec.grid(), std::move(acc)), tail};
}

std::size_t series_terms_for(double beta, double tail) {
  if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("beta must lie in [0,1)");
  if (beta == 0.0) return 0;
  const double k = std::log(tail) / std::log(beta) - 1.0;
  return static_cast<std::size_t>(std::max(0.0, std::ceil(k)));
}

}  // namespace mfa
