#include "mfa/auction.hpp"

#include <cmath>
#include <stdexcept>

namespace mfa {

namespace {

double power_int(double base, int exponent) {
  double r = 1.0;
  for (int i = 0; i < exponent; ++i) r *= base;
  return r;
}

void check_m(int M) {
  if (M < 1) throw std::invalid_argument("auction needs M >= 1");
}

}  // namespace

double win_prob(const BidCdf& rho, double x, int M) {
  check_m(M);
  if (x < 0.0) throw std::domain_error("bid must be nonnegative");
  return power_int(rho.at(x), M - 1);
}

WinProbTable::WinProbTable(const BidCdf& rho, int M, RiemannRule rule)
    : grid_(rho.grid()), rule_(rule), p_(rho.size()), prefix_(rho.size()) {
  check_m(M);
  for (std::size_t m = 0; m < rho.size(); ++m) p_[m] = power_int(rho[m], M - 1);
  double acc = 0.0;
  for (std::size_t m = 0; m < p_.size(); ++m) {
    prefix_[m] = acc;
    acc += (rule_ == RiemannRule::kStepWeighted) ? p_[m] * grid_.step() : p_[m];
  }
}

double WinProbTable::integral(double b) const {
  if (!(b > 0.0)) return 0.0;
  const double step = grid_.step();
  const std::size_t last = grid_.last_index();
  const double pos = b / step;
  if (rule_ == RiemannRule::kUnweighted) {
    // Grid bids x_m <= b; beyond the grid there are no further terms.
    if (pos >= static_cast<double>(last)) return prefix_[last] + p_[last];
    const auto k = static_cast<std::size_t>(std::floor(pos));
    return prefix_[k] + p_[k];
  }
  if (pos >= static_cast<double>(last)) {
    // rho == 1 past the grid, so the integrand continues at p_last.
    return prefix_[last] + p_[last] * (b - grid_.max());
  }
  const auto k = static_cast<std::size_t>(pos);
  return prefix_[k] + p_[k] * (b - grid_.point(k));
}

double payment_integral(const BidCdf& rho, double b, int M, RiemannRule rule) {
  check_m(M);
  if (b < 0.0) throw std::domain_error("integral upper limit must be nonnegative");
  return WinProbTable(rho, M, rule).integral(b);
}

double expected_payment(const BidCdf& rho, double x, int M, RiemannRule rule) {
  return x * win_prob(rho, x, M) - payment_integral(rho, x, M, rule);
}

AuctionOutcome resolve_auction(std::span<const double> bids, RandomStream& rng) {
  if (bids.empty()) throw std::invalid_argument("auction with no bids");
  double best = bids[0];
  double second = 0.0;
  std::size_t ties = 1;
  for (std::size_t i = 1; i < bids.size(); ++i) {
    const double b = bids[i];
    if (b > best) {
      second = best;
      best = b;
      ties = 1;
    } else if (b == best) {
      second = best;
      ++ties;
    } else if (b > second) {
      second = b;
    }
  }
  AuctionOutcome out;
  out.payment = bids.size() > 1 ? second : 0.0;
  std::size_t pick = ties > 1 ? rng.below(ties) : 0;
  for (std::size_t i = 0; i < bids.size(); ++i) {
    if (bids[i] == best) {
      if (pick == 0) {
        out.winner_index = i;
        break;
      }
      --pick;
    }
  }
  return out;
}

}  // namespace mfa
