#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "mfa/bid_mdp.hpp"
#include "mfa/distribution.hpp"
#include "mfa/stationary.hpp"

namespace mfa {

/// gamma(x) = pi({q : theta(q) <= x}). Mass whose bid lies beyond the bid
/// grid is placed on the last grid point. Throws on negative or non-finite bids.
BidCdf induced_bid_cdf(const QueueDist& pi, const BidPolicy& theta, const BidGrid& bid_grid);

/// How the queue distribution is advanced in each outer iteration.
enum class StationarySchedule {
  /// One kernel application from the previous iterate's distribution.
  kSingleStep,
  /// Power iteration to convergence under the current policy.
  kConverge,
};

struct MfeOptions {
  double epsilon = 0.008;
  std::size_t max_outer = 100;
  double damping = 0.0;  // rho_{n+1} = (1-damping) gamma + damping rho_n
  StationarySchedule schedule = StationarySchedule::kSingleStep;
  ValueSolveOptions value;
  double stationary_tol = 1e-12;
  std::size_t stationary_max_iter = 100000;
  double rho0_slope = 0.001;  // rho_0(x) = min{slope x, 1}
  unsigned workers = 1;
};

struct MfeStepResult {
  BidCdf rho_next;
  QueueDist pi;
  BidPolicy policy;
  ValueFunction value;
  std::size_t value_iterations;
  double residual;  // sup |rho_next - rho_n|
};

/// One outer iteration: value function, optimal bid, queue law, induced bid CDF.
MfeStepResult mfe_step(const BidCdf& rho, const QueueDist& pi_prev, const ModelParams& params,
                       const MfeOptions& options);

struct MfeSolution {
  BidCdf rho;
  BidPolicy policy;
  ValueFunction value;
  QueueDist pi;
  double residual;
  std::size_t iterations;
  std::vector<double> residual_history;
  std::vector<std::size_t> value_iterations;
  bool converged;
};

/// Iterates mfe_step from rho_0 and Pi_0 = Psi until the sup-norm residual
/// drops below epsilon. On failure returns the lowest-residual iterate with
/// converged == false.
MfeSolution solve_mfe(const ModelParams& params, const MfeOptions& options = {});

/// Best response and exact stationary law for a given rho, then the induced
/// bid CDF; the residual sup|F(rho) - rho| is the equilibrium defect of rho.
struct ConsistencyCheck {
  BidCdf induced;
  BidPolicy policy;
  ValueFunction value;
  QueueDist pi;
  double defect;
};
ConsistencyCheck check_consistency(const BidCdf& rho, const ModelParams& params,
                                   const MfeOptions& options = {});

}  // namespace mfa
