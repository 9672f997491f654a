#include "mfa/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mfa {

namespace {

double kahan_sum(std::span<const double> xs) {
  double sum = 0.0;
  double c = 0.0;
  for (double x : xs) {
    const double y = x - c;
    const double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
  return sum;
}

}  // namespace

template <class Grid>
Pmf<Grid>::Pmf(Grid grid, std::vector<double> weights)
    : grid_(grid), weights_(std::move(weights)) {
  if (weights_.size() != grid_.count()) {
    throw std::invalid_argument("pmf has " + std::to_string(weights_.size()) +
                                " weights for a grid of " + std::to_string(grid_.count()));
  }
  for (std::size_t m = 0; m < weights_.size(); ++m) {
    if (!(weights_[m] >= 0.0) || !std::isfinite(weights_[m])) {
      throw std::invalid_argument("pmf weight " + std::to_string(m) + " is negative or not finite");
    }
  }
  const double total = kahan_sum(weights_);
  if (std::abs(total - 1.0) > kMassTolerance) {
    std::ostringstream os;
    os.precision(17);
    os << "pmf weights sum to " << total << ", expected 1";
    throw std::invalid_argument(os.str());
  }
}

template <class Grid>
Pmf<Grid> Pmf<Grid>::point_mass(Grid grid, std::size_t index) {
  if (index >= grid.count()) throw std::out_of_range("point mass index outside grid");
  std::vector<double> w(grid.count(), 0.0);
  w[index] = 1.0;
  return Pmf(grid, std::move(w));
}

template <class Grid>
Pmf<Grid> Pmf<Grid>::normalized(Grid grid, std::vector<double> weights) {
  for (double& w : weights) {
    if (w < 0.0) w = 0.0;
  }
  const double total = kahan_sum(weights);
  if (!(total > 0.0)) throw std::invalid_argument("cannot normalize a zero-mass vector");
  if (std::abs(total - 1.0) > 1e-12) {
    for (double& w : weights) w /= total;
  }
  return Pmf(grid, std::move(weights));
}

template class Pmf<StateGrid>;
template class Pmf<BidGrid>;

BidCdf::BidCdf(BidGrid grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.count()) {
    throw std::invalid_argument("bid cdf has " + std::to_string(values_.size()) +
                                " values for a grid of " + std::to_string(grid_.count()));
  }
  double prev = 0.0;
  for (std::size_t m = 0; m < values_.size(); ++m) {
    const double v = values_[m];
    if (!(v >= 0.0 && v <= 1.0 + kMassTolerance)) {
      throw std::invalid_argument("bid cdf value " + std::to_string(m) + " outside [0,1]");
    }
    if (v < prev) {
      throw std::invalid_argument("bid cdf decreases at index " + std::to_string(m));
    }
    prev = v;
  }
  if (std::abs(values_.back() - 1.0) > kMassTolerance) {
    throw std::invalid_argument("bid cdf must end at 1");
  }
  for (double& v : values_) v = std::min(v, 1.0);
  values_.back() = 1.0;
}

double BidCdf::at(double x) const {
  if (x < 0.0 || std::isnan(x)) throw std::domain_error("bid must be nonnegative");
  const double pos = x / grid_.step();
  if (pos >= static_cast<double>(grid_.last_index())) return 1.0;
  const auto m = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(m);
  const double v = values_[m] + frac * (values_[m + 1] - values_[m]);
  return std::clamp(v, 0.0, 1.0);
}

BidCdf linear_ramp_cdf(const BidGrid& grid, double slope) {
  if (!(slope > 0.0)) throw std::invalid_argument("ramp slope must be positive");
  std::vector<double> v(grid.count());
  for (std::size_t m = 0; m < v.size(); ++m) v[m] = std::min(slope * grid.point(m), 1.0);
  v.back() = 1.0;
  return BidCdf(grid, std::move(v));
}

double sup_distance(const BidCdf& a, const BidCdf& b) {
  if (!(a.grid() == b.grid())) throw std::invalid_argument("cdfs on different grids");
  double d = 0.0;
  for (std::size_t m = 0; m < a.size(); ++m) d = std::max(d, std::abs(a[m] - b[m]));
  return d;
}

template <class Grid>
double tv_distance(const Pmf<Grid>& a, const Pmf<Grid>& b) {
  if (!(a.grid() == b.grid())) throw std::invalid_argument("pmfs on different grids");
  double d = 0.0;
  for (std::size_t m = 0; m < a.size(); ++m) d += std::abs(a[m] - b[m]);
  return 0.5 * d;
}

template double tv_distance(const Pmf<StateGrid>&, const Pmf<StateGrid>&);
template double tv_distance(const Pmf<BidGrid>&, const Pmf<BidGrid>&);

template <class Grid>
Pmf<Grid> discretize_uniform(double lo, double hi, const Grid& grid) {
  if (!(hi > lo)) throw std::invalid_argument("uniform interval needs hi > lo");
  if (lo < 0.0 || hi > grid.max() + 1e-12 * grid.max()) {
    throw std::invalid_argument("uniform interval lies outside the grid");
  }
  const double half = 0.5 * grid.step();
  const double width = hi - lo;
  std::vector<double> w(grid.count(), 0.0);
  for (std::size_t m = 0; m < grid.count(); ++m) {
    const double cell_lo = std::max(grid.point(m) - half, 0.0);
    const double cell_hi = grid.point(m) + half;
    const double overlap = std::min(cell_hi, hi) - std::max(cell_lo, lo);
    if (overlap > 0.0) w[m] = overlap / width;
  }
  return Pmf<Grid>::normalized(grid, std::move(w));
}

template Pmf<StateGrid> discretize_uniform(double, double, const StateGrid&);
template Pmf<BidGrid> discretize_uniform(double, double, const BidGrid&);

template <class Grid>
std::vector<double> cdf_of(const Pmf<Grid>& pmf) {
  std::vector<double> out(pmf.size());
  std::partial_sum(pmf.weights().begin(), pmf.weights().end(), out.begin());
  return out;
}

template std::vector<double> cdf_of(const Pmf<StateGrid>&);
template std::vector<double> cdf_of(const Pmf<BidGrid>&);

Pmf<BidGrid> pmf_of(const BidCdf& cdf) {
  std::vector<double> w(cdf.size());
  double prev = 0.0;
  for (std::size_t m = 0; m < cdf.size(); ++m) {
    w[m] = cdf[m] - prev;
    prev = cdf[m];
  }
  return Pmf<BidGrid>::normalized(cdf.grid(), std::move(w));
}

template <class Grid>
double mean_of(const Pmf<Grid>& pmf) {
  double s = 0.0;
  for (std::size_t m = 0; m < pmf.size(); ++m) s += pmf[m] * pmf.grid().point(m);
  return s;
}

template double mean_of(const Pmf<StateGrid>&);
template double mean_of(const Pmf<BidGrid>&);

double mean_of(const BidCdf& cdf) {
  double s = 0.0;
  for (std::size_t m = 0; m < cdf.size(); ++m) s += (1.0 - cdf[m]);
  return s * cdf.grid().step();
}

template <class Grid>
double quantile_of(const Pmf<Grid>& pmf, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("quantile level must be in (0,1]");
  double acc = 0.0;
  for (std::size_t m = 0; m < pmf.size(); ++m) {
    acc += pmf[m];
    if (acc >= p - 1e-12) return pmf.grid().point(m);
  }
  return pmf.grid().max();
}

template double quantile_of(const Pmf<StateGrid>&, double);
template double quantile_of(const Pmf<BidGrid>&, double);

namespace {

void check_tabulated(const TabulatedSpec& t) {
  if (t.points.empty() || t.points.size() != t.weights.size()) {
    throw std::invalid_argument("tabulated distribution needs matching, nonempty points and weights");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < t.points.size(); ++i) {
    if (!(t.points[i] >= 0.0)) throw std::invalid_argument("tabulated support must be nonnegative");
    if (!(t.weights[i] >= 0.0)) throw std::invalid_argument("tabulated weights must be nonnegative");
    total += t.weights[i];
  }
  if (!(total > 0.0)) throw std::invalid_argument("tabulated weights sum to zero");
}

}  // namespace

Pmf<StateGrid> discretize(const DistSpec& spec, const StateGrid& grid) {
  return std::visit(
      [&](const auto& s) -> Pmf<StateGrid> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, UniformSpec>) {
          return discretize_uniform(s.lo, s.hi, grid);
        } else if constexpr (std::is_same_v<T, PointMassSpec>) {
          if (s.at < 0.0) throw std::invalid_argument("point mass location must be nonnegative");
          return Pmf<StateGrid>::point_mass(grid, grid.nearest_index(s.at));
        } else {
          check_tabulated(s);
          std::vector<double> w(grid.count(), 0.0);
          for (std::size_t i = 0; i < s.points.size(); ++i) {
            w[grid.nearest_index(s.points[i])] += s.weights[i];
          }
          return Pmf<StateGrid>::normalized(grid, std::move(w));
        }
      },
      spec);
}

double sample(const DistSpec& spec, double u) {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, UniformSpec>) {
          return s.lo + u * (s.hi - s.lo);
        } else if constexpr (std::is_same_v<T, PointMassSpec>) {
          return s.at;
        } else {
          const double total = std::accumulate(s.weights.begin(), s.weights.end(), 0.0);
          double acc = 0.0;
          const double target = u * total;
          for (std::size_t i = 0; i < s.points.size(); ++i) {
            acc += s.weights[i];
            if (target < acc) return s.points[i];
          }
          return s.points.back();
        }
      },
      spec);
}

std::string describe(const DistSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, UniformSpec>) {
          os << "uniform[" << s.lo << "," << s.hi << "]";
        } else if constexpr (std::is_same_v<T, PointMassSpec>) {
          os << "point(" << s.at << ")";
        } else {
          os << "tabulated(" << s.points.size() << " points)";
        }
      },
      spec);
  return os.str();
}

}  // namespace mfa
