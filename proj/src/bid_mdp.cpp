#include "mfa/bid_mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "mfa/parallel.hpp"

namespace mfa {

double HoldingCost::operator()(double q) const {
  if (q <= 0.0) return 0.0;
  return coefficient * std::pow(q, exponent);
}

void ModelParams::validate() const {
  if (!(beta > 0.0 && beta < 1.0)) {
    throw std::invalid_argument("beta must lie in (0,1), got " + std::to_string(beta));
  }
  if (M < 1) throw std::invalid_argument("M must be >= 1, got " + std::to_string(M));
  if (!(service_amount > 0.0) || !std::isfinite(service_amount)) {
    throw std::invalid_argument("service_amount must be positive");
  }
  if (service_amount < 0.5 * state_grid.step()) {
    throw std::invalid_argument("service_amount is below half a state-grid step");
  }
  if (!(arrival.grid() == state_grid)) throw std::invalid_argument("arrival pmf is not on the state grid");
  if (!(regen.grid() == state_grid)) throw std::invalid_argument("regen pmf is not on the state grid");
  if (!(cost.coefficient > 0.0)) throw std::invalid_argument("cost coefficient must be positive");
  if (!(cost.exponent > 1.0)) {
    throw std::invalid_argument("cost exponent must exceed 1 for strict convexity");
  }
}

std::size_t ModelParams::service_steps() const {
  return static_cast<std::size_t>(std::llround(service_amount / state_grid.step()));
}

std::vector<double> ModelParams::cost_on_grid() const {
  std::vector<double> c(state_grid.count());
  for (std::size_t m = 0; m < c.size(); ++m) c[m] = cost(state_grid.point(m));
  return c;
}

ModelParams reference_params(double beta, int M) {
  const StateGrid sg(0.01, 2001);
  const BidGrid bg(0.15, 3001);
  auto arrival = discretize_uniform(0.0, 1.0, sg);
  auto regen = arrival;
  return ModelParams{beta, M, 5.0, sg, bg, std::move(arrival), std::move(regen), HoldingCost{}};
}

double BidPolicy::at(double q) const {
  if (!(q > 0.0)) return bids.front();
  const double pos = q / grid.step();
  if (pos >= static_cast<double>(grid.last_index())) return bids.back();
  const auto m = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(m);
  return bids[m] + frac * (bids[m + 1] - bids[m]);
}

BidPolicy BidPolicy::scaled(double factor) const {
  BidPolicy out = *this;
  for (double& b : out.bids) b *= factor;
  return out;
}

BidPolicy BidPolicy::constant(const StateGrid& grid, double bid) {
  return BidPolicy{grid, std::vector<double>(grid.count(), bid)};
}

double w_norm(std::span<const double> f, const ModelParams& params) {
  double n = 0.0;
  for (std::size_t m = 0; m < f.size(); ++m) {
    const double w = std::max(params.cost(params.state_grid.point(m)), 1.0);
    n = std::max(n, std::abs(f[m]) / w);
  }
  return n;
}

double w_distance(std::span<const double> a, std::span<const double> b, const ModelParams& params) {
  if (a.size() != b.size()) throw std::invalid_argument("w_distance: size mismatch");
  double n = 0.0;
  for (std::size_t m = 0; m < a.size(); ++m) {
    const double w = std::max(params.cost(params.state_grid.point(m)), 1.0);
    n = std::max(n, std::abs(a[m] - b[m]) / w);
  }
  return n;
}

namespace {

struct Support {
  std::vector<std::size_t> offset;
  std::vector<double> weight;
};

Support arrival_support(const QueueDist& arrival) {
  Support s;
  for (std::size_t j = 0; j < arrival.size(); ++j) {
    if (arrival[j] > 0.0) {
      s.offset.push_back(j);
      s.weight.push_back(arrival[j]);
    }
  }
  return s;
}

void expected_range(std::span<const double> f, const Support& sup, ValueBoundary boundary,
                    std::size_t begin, std::size_t end, std::vector<double>& out) {
  const std::size_t last = f.size() - 1;
  // Secant over the arrival reach (at least one step) beyond which f is continued.
  const std::size_t base = std::clamp<std::size_t>(sup.offset.empty() ? 1 : sup.offset.back(), 1, last);
  const double slope =
      boundary == ValueBoundary::kExtrapolate ? (f[last] - f[last - base]) / static_cast<double>(base) : 0.0;
  for (std::size_t m = begin; m < end; ++m) {
    double acc = 0.0;
    for (std::size_t k = 0; k < sup.offset.size(); ++k) {
      const std::size_t i = m + sup.offset[k];
      acc += sup.weight[k] * (i <= last ? f[i] : f[last] + static_cast<double>(i - last) * slope);
    }
    out[m] = acc;
  }
}

inline std::size_t served_index(std::size_t m, std::size_t s) { return m > s ? m - s : 0; }

}  // namespace

std::vector<double> expected_after_arrival(std::span<const double> f, const ModelParams& params) {
  if (f.size() != params.state_grid.count()) {
    throw std::invalid_argument("function size does not match the state grid");
  }
  std::vector<double> out(f.size());
  expected_range(f, arrival_support(params.arrival), params.value_boundary, 0, f.size(), out);
  return out;
}

double delta_f(std::span<const double> f, const ModelParams& params, std::size_t m) {
  if (m >= params.state_grid.count()) throw std::out_of_range("delta_f: index outside grid");
  const Support sup = arrival_support(params.arrival);
  std::vector<double> tmp(f.size());
  const std::size_t lo = served_index(m, params.service_steps());
  expected_range(f, sup, params.value_boundary, m, m + 1, tmp);
  expected_range(f, sup, params.value_boundary, lo, lo + 1, tmp);
  return tmp[m] - tmp[lo];
}

ValueFunction bellman_apply(const ValueFunction& f, const WinProbTable& table,
                            const ModelParams& params, unsigned workers) {
  const std::size_t n = params.state_grid.count();
  if (f.values.size() != n) throw std::invalid_argument("value function size mismatch");
  const Support sup = arrival_support(params.arrival);
  std::vector<double> ef(n);
  parallel_for(n, workers, [&](std::size_t b, std::size_t e) { expected_range(f.values, sup, params.value_boundary, b, e, ef); });

  const std::size_t s = params.service_steps();
  const double beta = params.beta;
  ValueFunction out{params.state_grid, std::vector<double>(n)};
  parallel_for(n, workers, [&](std::size_t b, std::size_t e) {
    for (std::size_t m = b; m < e; ++m) {
      const double delta = ef[m] - ef[served_index(m, s)];
      const double bid = beta * std::max(delta, 0.0);
      out.values[m] = params.cost(params.state_grid.point(m)) + beta * ef[m] - table.integral(bid);
    }
  });
  return out;
}

ValueFunction bellman_apply(const ValueFunction& f, const BidCdf& rho, const ModelParams& params,
                            RiemannRule rule) {
  return bellman_apply(f, WinProbTable(rho, params.M, rule), params);
}

ValueFunction bellman_apply_explicit(const ValueFunction& f, const BidCdf& rho,
                                     const ModelParams& params, RiemannRule rule) {
  const std::size_t n = params.state_grid.count();
  const WinProbTable table(rho, params.M, rule);
  const std::vector<double> ef = expected_after_arrival(f.values, params);
  const std::size_t s = params.service_steps();
  const BidGrid& bg = rho.grid();

  std::vector<double> payment(bg.count());
  for (std::size_t k = 0; k < bg.count(); ++k) {
    payment[k] = bg.point(k) * table.win_prob_at(k) - table.integral(bg.point(k));
  }
  ValueFunction out{params.state_grid, std::vector<double>(n)};
  for (std::size_t m = 0; m < n; ++m) {
    const double gain = params.beta * (ef[m] - ef[served_index(m, s)]);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < bg.count(); ++k) {
      best = std::min(best, payment[k] - table.win_prob_at(k) * gain);
    }
    out.values[m] = params.cost(params.state_grid.point(m)) + params.beta * ef[m] + best;
  }
  return out;
}

ValueSolveResult solve_value(const BidCdf& rho, const ModelParams& params,
                             const ValueSolveOptions& options) {
  if (!(options.tol > 0.0)) throw std::invalid_argument("value iteration tolerance must be positive");
  const WinProbTable table(rho, params.M, options.rule);
  std::vector<double> history;
  ValueFunction f{params.state_grid, params.cost_on_grid()};
  for (std::size_t it = 1; it <= options.max_iter; ++it) {
    ValueFunction g = bellman_apply(f, table, params, options.workers);
    const double r = w_distance(g.values, f.values, params);
    history.push_back(r);
    const double bound =
        options.mode == ResidualMode::kRelative ? options.tol * w_norm(g.values, params) : options.tol;
    if (r < bound) return ValueSolveResult{std::move(f), it, r, std::move(history)};
    f = std::move(g);
  }
  throw ConvergenceError("value iteration did not converge", options.max_iter,
                         history.empty() ? 0.0 : history.back());
}

BidPolicy optimal_bid(const ValueFunction& V, const ModelParams& params) {
  const std::size_t n = params.state_grid.count();
  if (V.values.size() != n) throw std::invalid_argument("value function size mismatch");
  const std::vector<double> ev = expected_after_arrival(V.values, params);
  const std::size_t s = params.service_steps();
  BidPolicy theta{params.state_grid, std::vector<double>(n)};
  for (std::size_t m = 0; m < n; ++m) {
    theta.bids[m] = params.beta * std::max(ev[m] - ev[served_index(m, s)], 0.0);
  }
  return theta;
}

}  // namespace mfa
