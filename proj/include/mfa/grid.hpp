#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace mfa {

/// Uniform grid {0, step, 2*step, ..., (count-1)*step}.
///
/// The tag keeps queue-state and bid grids from being mixed up at compile
/// time; both share the same arithmetic.
template <class Tag>
class UniformGrid {
 public:
  UniformGrid(double step, std::size_t count) : step_(step), count_(count) {
    if (!(step > 0.0) || !std::isfinite(step)) {
      throw std::invalid_argument("grid step must be positive and finite, got " +
                                  std::to_string(step));
    }
    if (count < 2) {
      throw std::invalid_argument("grid needs at least 2 points, got " +
                                  std::to_string(count));
    }
  }

  double step() const noexcept { return step_; }
  std::size_t count() const noexcept { return count_; }
  std::size_t last_index() const noexcept { return count_ - 1; }
  double point(std::size_t m) const noexcept { return static_cast<double>(m) * step_; }
  double max() const noexcept { return point(count_ - 1); }

  /// Nearest grid index to x, saturating at both ends.
  std::size_t nearest_index(double x) const noexcept {
    if (!(x > 0.0)) return 0;
    const double r = std::round(x / step_);
    if (r >= static_cast<double>(count_ - 1)) return count_ - 1;
    return static_cast<std::size_t>(r);
  }

  friend bool operator==(const UniformGrid& a, const UniformGrid& b) {
    return a.step_ == b.step_ && a.count_ == b.count_;
  }

 private:
  double step_;
  std::size_t count_;
};

struct StateTag {};
struct BidTag {};

/// Queue-length grid (workload units).
using StateGrid = UniformGrid<StateTag>;
/// Bid grid (currency units).
using BidGrid = UniformGrid<BidTag>;

}  // namespace mfa
