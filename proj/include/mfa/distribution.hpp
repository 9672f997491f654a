#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mfa/grid.hpp"

namespace mfa {

inline constexpr double kMassTolerance = 1e-9;

/// Probability mass over the points of a uniform grid.
template <class Grid>
class Pmf {
 public:
  /// Validates nonnegativity and unit mass (within kMassTolerance).
  Pmf(Grid grid, std::vector<double> weights);

  static Pmf point_mass(Grid grid, std::size_t index);

  /// Rescales weights to sum to exactly one; used after long operator chains.
  static Pmf normalized(Grid grid, std::vector<double> weights);

  const Grid& grid() const noexcept { return grid_; }
  std::span<const double> weights() const noexcept { return weights_; }
  double operator[](std::size_t m) const { return weights_[m]; }
  std::size_t size() const noexcept { return weights_.size(); }

  friend bool operator==(const Pmf&, const Pmf&) = default;

 private:
  Grid grid_;
  std::vector<double> weights_;
};

using QueueDist = Pmf<StateGrid>;

/// Cumulative bid distribution sampled on the bid grid.
///
/// Between grid points the CDF is the linear interpolant; beyond the last
/// point it is 1.
class BidCdf {
 public:
  BidCdf(BidGrid grid, std::vector<double> values);

  const BidGrid& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t m) const { return values_[m]; }
  std::size_t size() const noexcept { return values_.size(); }

  /// rho(x) with linear interpolation; throws for x < 0.
  double at(double x) const;

  friend bool operator==(const BidCdf&, const BidCdf&) = default;

 private:
  BidGrid grid_;
  std::vector<double> values_;
};

/// min{slope * x, 1} on the grid, with the last point forced to 1 so any mass
/// beyond the grid sits on the last bid.
BidCdf linear_ramp_cdf(const BidGrid& grid, double slope);

/// Sup-norm distance between two CDFs on the same grid.
double sup_distance(const BidCdf& a, const BidCdf& b);

/// Total-variation distance (half the L1 norm).
template <class Grid>
double tv_distance(const Pmf<Grid>& a, const Pmf<Grid>& b);

/// Mass of [lo, hi] assigned to cells [q_m - step/2, q_m + step/2) clipped at 0.
template <class Grid>
Pmf<Grid> discretize_uniform(double lo, double hi, const Grid& grid);

template <class Grid>
std::vector<double> cdf_of(const Pmf<Grid>& pmf);

/// Differences of the CDF: the bid distribution as a grid PMF.
Pmf<BidGrid> pmf_of(const BidCdf& cdf);

template <class Grid>
double mean_of(const Pmf<Grid>& pmf);

/// sum_m (1 - rho(x_m)) * step.
double mean_of(const BidCdf& cdf);

/// Smallest grid point whose CDF reaches p (p in (0,1]).
template <class Grid>
double quantile_of(const Pmf<Grid>& pmf, double p);

// ---------------------------------------------------------------------------
// Distribution specs (arrival / regeneration inputs)
// ---------------------------------------------------------------------------

struct UniformSpec {
  double lo = 0.0;
  double hi = 1.0;
  friend bool operator==(const UniformSpec&, const UniformSpec&) = default;
};

struct PointMassSpec {
  double at = 0.0;
  friend bool operator==(const PointMassSpec&, const PointMassSpec&) = default;
};

/// Arbitrary weights on explicit support points (snapped to the grid).
struct TabulatedSpec {
  std::vector<double> points;
  std::vector<double> weights;
  friend bool operator==(const TabulatedSpec&, const TabulatedSpec&) = default;
};

using DistSpec = std::variant<UniformSpec, PointMassSpec, TabulatedSpec>;

Pmf<StateGrid> discretize(const DistSpec& spec, const StateGrid& grid);

/// Inverse-transform sample of the continuous law described by spec, given a
/// uniform variate u in [0,1).
double sample(const DistSpec& spec, double u);

std::string describe(const DistSpec& spec);

}  // namespace mfa
