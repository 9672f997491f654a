#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "mfa/bid_mdp.hpp"
#include "mfa/distribution.hpp"
#include "mfa/mfe_solver.hpp"

namespace mfa {

/// Finite system: N cells, N*M agents re-permuted across cells every slot.
struct SimConfig {
  std::size_t N = 1;
  ModelParams params;
  DistSpec arrival = UniformSpec{0.0, 1.0};  // continuous law of A
  DistSpec regen = UniformSpec{0.0, 1.0};    // continuous law of R
  std::size_t horizon = 1000;
  std::uint64_t seed = 1;
  double burn_in_fraction = 0.2;
  unsigned workers = 1;
  bool record_trace = false;
  /// false switches off service and payments, leaving independent queues.
  bool interaction = true;
  /// Policy played by agent 0 instead of the common policy.
  std::optional<BidPolicy> deviant = std::nullopt;
  /// Law of the initial queues (i.i.d.); Psi-distributed when absent.
  std::optional<QueueDist> initial = std::nullopt;
};

/// One row of the optional full trace.
struct TraceRecord {
  std::uint32_t slot;
  std::uint32_t agent;
  std::uint32_t cell;
  double bid;
  bool won;
  double payment;
  double queue_before;
  double queue_after;
};

struct SimTrace {
  std::size_t agents = 0;
  std::size_t slots = 0;
  std::size_t burn_in = 0;  // slots excluded from the empirical distributions
  std::size_t auctions = 0;
  std::size_t lqf_violations = 0;
  double total_payments = 0.0;
  std::vector<std::uint64_t> bid_counts;    // per bid-grid point: bids b with x_{k-1} < b <= x_k
  std::vector<std::uint64_t> queue_counts;  // per state-grid cell (nearest point)
  std::vector<double> agent_cost;           // undiscounted total per agent
  std::vector<std::uint64_t> agent_regenerations;
  double cycle_cost_sum = 0.0;     // cost of completed regeneration cycles
  std::uint64_t cycles = 0;
  std::vector<double> final_queues;
  std::vector<TraceRecord> records;  // only with record_trace
};

/// Simulates config.horizon slots with every agent on `policy` (agent 0 on
/// config.deviant when set). Deterministic in (config, policy) for any
/// worker count.
SimTrace run_simulation(const SimConfig& config, const BidPolicy& policy);

/// Fraction of auctions whose winner did not hold a longest queue in its
/// cell (ties are not violations).
double lqf_violation_rate(const SimTrace& trace);

/// Empirical CDF of post-burn-in bids at the bid-grid points.
std::vector<double> empirical_bid_cdf(const SimTrace& trace);
/// Empirical CDF of post-burn-in queue lengths at the state-grid points.
std::vector<double> empirical_queue_cdf(const SimTrace& trace);

/// sup_k |F(x_k) - rho(x_k)| over the bid grid.
double ks_distance(std::span<const double> empirical, const BidCdf& rho);

/// Writes the trace as CSV: slot,agent,cell,bid,won,payment,queue_before,queue_after.
void write_trace(const std::filesystem::path& path, const SimTrace& trace);

/// Inverse-CDF draw from the piecewise-linear bid distribution.
double sample_bid(const BidCdf& rho, double u);

struct Estimate {
  double mean = 0.0;
  double half_width = 0.0;  // 95% normal-approximation half-width
};

struct ValueEstimate {
  Estimate regenerative;  // undiscounted cost until regeneration
  Estimate discounted;    // beta-discounted cost without regeneration
};

/// Monte Carlo cost of one agent starting at q0 against M-1 opponents
/// bidding i.i.d. from population_rho every slot.
ValueEstimate estimate_value(const SimConfig& config, const BidPolicy& policy,
                             const BidCdf& population_rho, double q0, std::size_t replications);

struct ChallengerResult {
  double value;        // mean cost of agent 0 under the challenger
  Estimate advantage;  // value(MFE policy) - value(challenger), paired
};

struct EpsNashResult {
  Estimate mfe_value;
  std::vector<ChallengerResult> challengers;
  double gap;              // max advantage over challengers
  double gap_half_width;   // half-width of the maximizing challenger
};

/// Agent 0 deviates in a finite system where all others play the MFE policy
/// and start i.i.d. from Pi. Common random numbers across policies.
EpsNashResult eps_nash_gap(const SimConfig& config, const MfeSolution& mfe,
                           const std::vector<BidPolicy>& challengers, double q0,
                           std::size_t replications);

/// Challenger set: theta scaled by 0.5 and 2, constant bids at the rho
/// quartiles, and always bidding the top of the bid grid.
std::vector<BidPolicy> default_challengers(const MfeSolution& mfe);

struct ChaosResult {
  double max_abs_correlation;
  double noise_band;           // Bonferroni 99% band for max |r| under independence
  double null_max_abs_correlation;  // same pairs, replications offset by one
  std::vector<double> correlations;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
};

/// Max |Pearson correlation| of queue lengths of sampled agent pairs at
/// `horizon`, across replications started i.i.d. from Pi.
ChaosResult chaos_correlation(const SimConfig& config, const MfeSolution& mfe,
                              std::size_t pair_count, std::size_t horizon,
                              std::size_t replications);

}  // namespace mfa
