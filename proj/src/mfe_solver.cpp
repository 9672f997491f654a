#include "mfa/mfe_solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

namespace mfa {

BidCdf induced_bid_cdf(const QueueDist& pi, const BidPolicy& theta, const BidGrid& bid_grid) {
  if (!(pi.grid() == theta.grid)) throw std::invalid_argument("policy and distribution grids differ");
  const auto& bids = theta.bids;
  for (std::size_t m = 0; m < bids.size(); ++m) {
    if (!(bids[m] >= 0.0) || !std::isfinite(bids[m])) {
      throw std::invalid_argument("policy bid at state index " + std::to_string(m) +
                                  " is negative or not finite");
    }
  }
  // States ordered by bid; for a nondecreasing policy this is the identity, so
  // {q : theta(q) <= x} is a prefix of the state grid.
  std::vector<std::size_t> order(bids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return bids[a] < bids[b]; });
  std::vector<double> sorted_bids(bids.size());
  std::vector<double> prefix(bids.size() + 1, 0.0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    sorted_bids[i] = bids[order[i]];
    prefix[i + 1] = prefix[i] + pi[order[i]];
  }

  std::vector<double> gamma(bid_grid.count());
  for (std::size_t k = 0; k < gamma.size(); ++k) {
    const auto it = std::upper_bound(sorted_bids.begin(), sorted_bids.end(), bid_grid.point(k));
    gamma[k] = std::min(prefix[static_cast<std::size_t>(it - sorted_bids.begin())], 1.0);
  }
  gamma.back() = 1.0;
  return BidCdf(bid_grid, std::move(gamma));
}

namespace {

BidCdf damp(const BidCdf& gamma, const BidCdf& rho, double lambda) {
  if (lambda == 0.0) return gamma;
  std::vector<double> v(gamma.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = (1.0 - lambda) * gamma[k] + lambda * rho[k];
  v.back() = 1.0;
  return BidCdf(gamma.grid(), std::move(v));
}

void check_options(const MfeOptions& o) {
  if (!(o.epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (!(o.damping >= 0.0 && o.damping < 1.0)) throw std::invalid_argument("damping must lie in [0,1)");
  if (o.max_outer == 0) throw std::invalid_argument("max_outer must be at least 1");
}

}  // namespace

MfeStepResult mfe_step(const BidCdf& rho, const QueueDist& pi_prev, const ModelParams& params,
                       const MfeOptions& options) {
  ValueSolveOptions vopt = options.value;
  vopt.workers = options.workers;
  ValueSolveResult vs = solve_value(rho, params, vopt);
  BidPolicy theta = optimal_bid(vs.value, params);
  const TransitionSpec spec = TransitionSpec::from_policy(rho, theta, params);
  QueueDist pi = options.schedule == StationarySchedule::kSingleStep
                     ? transition_apply(pi_prev, spec)
                     : stationary_power(spec, options.stationary_tol, options.stationary_max_iter).pi;
  BidCdf next = damp(induced_bid_cdf(pi, theta, params.bid_grid), rho, options.damping);
  const double residual = sup_distance(next, rho);
  return MfeStepResult{std::move(next), std::move(pi), std::move(theta), std::move(vs.value),
                       vs.iterations, residual};
}

MfeSolution solve_mfe(const ModelParams& params, const MfeOptions& options) {
  params.validate();
  check_options(options);
  BidCdf rho = linear_ramp_cdf(params.bid_grid, options.rho0_slope);
  QueueDist pi = params.regen;

  std::vector<double> history;
  std::vector<std::size_t> vits;
  std::optional<MfeSolution> best;
  for (std::size_t n = 1; n <= options.max_outer; ++n) {
    MfeStepResult step = mfe_step(rho, pi, params, options);
    history.push_back(step.residual);
    vits.push_back(step.value_iterations);
    const bool done = step.residual < options.epsilon;
    if (done || !best || step.residual < best->residual) {
      best = MfeSolution{step.rho_next, step.policy, step.value, step.pi, step.residual, n,
                         {}, {}, done};
    }
    if (done) break;
    rho = std::move(step.rho_next);
    pi = std::move(step.pi);
  }
  best->residual_history = history;
  best->value_iterations = vits;
  best->iterations = history.size();
  return std::move(*best);
}

ConsistencyCheck check_consistency(const BidCdf& rho, const ModelParams& params,
                                   const MfeOptions& options) {
  ValueSolveOptions vopt = options.value;
  vopt.workers = options.workers;
  ValueSolveResult vs = solve_value(rho, params, vopt);
  BidPolicy theta = optimal_bid(vs.value, params);
  const TransitionSpec spec = TransitionSpec::from_policy(rho, theta, params);
  QueueDist pi = stationary_power(spec, options.stationary_tol, options.stationary_max_iter).pi;
  BidCdf induced = induced_bid_cdf(pi, theta, params.bid_grid);
  const double defect = sup_distance(induced, rho);
  return ConsistencyCheck{std::move(induced), std::move(theta), std::move(vs.value), std::move(pi),
                          defect};
}

}  // namespace mfa
