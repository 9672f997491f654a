#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mfa/distribution.hpp"
#include "mfa/rng.hpp"

namespace mfa {

/// How the integral of the win probability is discretized.
enum class RiemannRule {
  /// Left-endpoint sum with the grid step as weight (the continuous integral).
  kStepWeighted,
  /// Plain sum of p over grid bids <= b, no step factor.
  kUnweighted,
};

/// P(max of M-1 i.i.d. opponent bids <= x) = rho(x)^(M-1).
double win_prob(const BidCdf& rho, double x, int M);

/// Integral of p_rho over [0, b] under the given rule.
double payment_integral(const BidCdf& rho, double b, int M,
                        RiemannRule rule = RiemannRule::kStepWeighted);

/// r_rho(x) = x * p_rho(x) - integral_0^x p_rho(u) du.
double expected_payment(const BidCdf& rho, double x, int M,
                        RiemannRule rule = RiemannRule::kStepWeighted);

/// Win probabilities on the bid grid with their running integral, so the
/// Bellman sweep evaluates the payment integral in O(1) per state.
class WinProbTable {
 public:
  WinProbTable(const BidCdf& rho, int M, RiemannRule rule = RiemannRule::kStepWeighted);

  double integral(double b) const;
  double win_prob_at(std::size_t m) const { return p_[m]; }
  std::span<const double> win_probs() const noexcept { return p_; }
  const BidGrid& grid() const noexcept { return grid_; }
  RiemannRule rule() const noexcept { return rule_; }

 private:
  BidGrid grid_;
  RiemannRule rule_;
  std::vector<double> p_;
  // prefix_[m] = integral over [0, x_m] (weighted) or sum_{j<m} p_j (unweighted).
  std::vector<double> prefix_;
};

struct AuctionOutcome {
  std::size_t winner_index = 0;
  double payment = 0.0;
};

/// Second-price resolution: highest bid wins (uniform tie-break), pays the
/// second-highest bid, or 0 when alone.
AuctionOutcome resolve_auction(std::span<const double> bids, RandomStream& rng);

}  // namespace mfa
