#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mfa/auction.hpp"
#include "mfa/distribution.hpp"
#include "mfa/errors.hpp"
#include "mfa/grid.hpp"

namespace mfa {

/// C(q) = coefficient * q^exponent.
struct HoldingCost {
  double coefficient = 1.0;
  double exponent = 2.0;

  double operator()(double q) const;
  friend bool operator==(const HoldingCost&, const HoldingCost&) = default;
};

/// How value-function expectations treat q + A beyond the last grid point.
enum class ValueBoundary {
  /// f(q) = f(q_max) for q > q_max.
  kSaturate,
  /// f continued linearly along the secant over the arrival reach.
  kExtrapolate,
};

struct ModelParams {
  double beta;            // continuation probability per slot
  int M;                  // agents per cell
  double service_amount;  // workload removed from a winner
  StateGrid state_grid;
  BidGrid bid_grid;
  QueueDist arrival;
  QueueDist regen;
  HoldingCost cost;
  ValueBoundary value_boundary = ValueBoundary::kExtrapolate;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  /// Service amount in state-grid steps.
  std::size_t service_steps() const;
  std::vector<double> cost_on_grid() const;
};

/// beta, M and the reference discretization: state step 0.01 x 2001, bid step
/// 0.15 x 3001, U[0,1] arrivals and regeneration, C(q) = q^2, s = 5.
ModelParams reference_params(double beta, int M);

struct ValueFunction {
  StateGrid grid;
  std::vector<double> values;
};

/// Bid as a function of queue length; linear interpolation between grid
/// points, clamped to the grid.
struct BidPolicy {
  StateGrid grid;
  std::vector<double> bids;

  double at(double q) const;
  /// Pointwise scaled copy, used for challenger policies.
  BidPolicy scaled(double factor) const;
  static BidPolicy constant(const StateGrid& grid, double bid);
};

/// sup_q |f(q)| / max{C(q), 1}.
double w_norm(std::span<const double> f, const ModelParams& params);
double w_distance(std::span<const double> a, std::span<const double> b, const ModelParams& params);

/// E_A f(q_m + A) for every grid index m; points past the grid follow
/// params.value_boundary.
std::vector<double> expected_after_arrival(std::span<const double> f, const ModelParams& params);

/// E_A[f(q + A)] - E_A[f((q - s)^+ + A)] at grid index m.
double delta_f(std::span<const double> f, const ModelParams& params, std::size_t m);

/// (T f)(q) = C(q) + beta E f(q+A) - integral_0^{beta (Delta f)^+} p.
ValueFunction bellman_apply(const ValueFunction& f, const WinProbTable& table,
                            const ModelParams& params, unsigned workers = 1);
ValueFunction bellman_apply(const ValueFunction& f, const BidCdf& rho, const ModelParams& params,
                            RiemannRule rule = RiemannRule::kStepWeighted);

/// The same operator with the infimum over grid bids taken explicitly:
/// C + beta E f(q+A) + min_x [r(x) - p(x) beta Delta f(q)].
ValueFunction bellman_apply_explicit(const ValueFunction& f, const BidCdf& rho,
                                     const ModelParams& params,
                                     RiemannRule rule = RiemannRule::kStepWeighted);

/// Stopping rule for value iteration.
enum class ResidualMode {
  kAbsolute,  // ||T f - f||_w < tol
  kRelative,  // ||T f - f||_w < tol * ||T f||_w
};

struct ValueSolveOptions {
  double tol = 1e-4;
  ResidualMode mode = ResidualMode::kRelative;
  std::size_t max_iter = 10000;
  RiemannRule rule = RiemannRule::kStepWeighted;
  unsigned workers = 1;
};

struct ValueSolveResult {
  ValueFunction value;
  std::size_t iterations = 0;  // Bellman applications performed
  double residual = 0.0;       // ||T V - V||_w of the returned V (absolute)
  std::vector<double> residual_history;
};

/// Value iteration from f0 = C until the residual ||T f - f||_w meets the
/// stopping rule. Throws ConvergenceError after max_iter applications.
ValueSolveResult solve_value(const BidCdf& rho, const ModelParams& params,
                             const ValueSolveOptions& options = {});

/// theta(q) = beta * (Delta V(q))^+.
BidPolicy optimal_bid(const ValueFunction& V, const ModelParams& params);

}  // namespace mfa
