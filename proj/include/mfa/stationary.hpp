#pragma once

#include <cstddef>
#include <vector>

#include "mfa/bid_mdp.hpp"
#include "mfa/distribution.hpp"

namespace mfa {

/// Queue-length kernel under a fixed bid distribution and policy:
///   P(q, .) = beta [p(q) law((q-s)^+ + A) + (1-p(q)) law(q + A)] + (1-beta) Psi.
struct TransitionSpec {
  double beta;
  std::size_t service_steps;
  QueueDist arrival;
  QueueDist regen;
  std::vector<double> win_prob;  // p(q) per state-grid point

  /// p(q) = p_rho(theta(q)).
  static TransitionSpec from_policy(const BidCdf& rho, const BidPolicy& theta,
                                    const ModelParams& params);
  /// Explicit per-state win probabilities (beta may be any value in [0,1]).
  static TransitionSpec with_win_prob(const ModelParams& params, std::vector<double> p,
                                      double beta);

  const StateGrid& grid() const noexcept { return arrival.grid(); }
};

/// One application of the kernel to pi.
QueueDist transition_apply(const QueueDist& pi, const TransitionSpec& spec);

struct StationaryResult {
  QueueDist pi;
  std::size_t iterations = 0;
  double residual = 0.0;  // TV distance between the last two iterates
};

/// Power iteration from Psi until the TV step is below tol. Throws
/// ConvergenceError after max_iter steps.
StationaryResult stationary_power(const TransitionSpec& spec, double tol = 1e-12,
                                  std::size_t max_iter = 100000);

struct SeriesResult {
  QueueDist pi;               // truncated series rescaled to unit mass
  double truncation_bound;    // beta^(k_max+1), the dropped mass
};

/// sum_{k=0}^{k_max} (1-beta) beta^k E_Psi[Upsilon^(k)], where Upsilon^(k) is
/// the k-step law of the chain with regeneration switched off.
SeriesResult stationary_series(const TransitionSpec& spec, std::size_t k_max);

/// Smallest k_max with beta^(k_max+1) < tail.
std::size_t series_terms_for(double beta, double tail = 1e-8);

}  // namespace mfa
