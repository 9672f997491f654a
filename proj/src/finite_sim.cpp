#include "mfa/finite_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "mfa/auction.hpp"
#include "mfa/csv.hpp"
#include "mfa/parallel.hpp"
#include "mfa/rng.hpp"

namespace mfa {

double sample_bid(const BidCdf& rho, double u) {
  const auto v = rho.values();
  if (u <= v[0]) return 0.0;
  const auto it = std::lower_bound(v.begin(), v.end(), u);
  const auto k = static_cast<std::size_t>(it - v.begin());
  if (k >= v.size()) return rho.grid().max();
  const double lo = v[k - 1];
  const double hi = v[k];
  const double frac = hi > lo ? (u - lo) / (hi - lo) : 1.0;
  return rho.grid().point(k - 1) + frac * rho.grid().step();
}

namespace {

Estimate summarize(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  if (xs.empty()) return {};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, 1.959963984540054 * std::sqrt(ss / (n - 1.0) / n)};
}

double sample_initial(const QueueDist& law, double u_pick, double u_jitter) {
  double acc = 0.0;
  std::size_t m = law.size() - 1;
  for (std::size_t k = 0; k < law.size(); ++k) {
    acc += law[k];
    if (u_pick < acc) {
      m = k;
      break;
    }
  }
  const double step = law.grid().step();
  const double lo = std::max(law.grid().point(m) - 0.5 * step, 0.0);
  const double hi = std::min(law.grid().point(m) + 0.5 * step, law.grid().max());
  return lo + u_jitter * (hi - lo);
}

/// Mutable state of the N-cell system and the per-slot scratch arrays.
class FiniteSystem {
 public:
  FiniteSystem(const SimConfig& config, const BidPolicy& common, StreamFactory streams)
      : cfg_(config),
        common_(common),
        streams_(streams),
        M_(static_cast<std::size_t>(config.params.M)),
        n_(config.N * M_),
        q_(n_, 0.0),
        perm_(n_),
        bid_(n_),
        payment_(n_),
        before_(n_),
        cell_(n_),
        won_(n_),
        regenerated_(n_),
        violation_(config.N) {
    if (config.N < 1) throw std::invalid_argument("simulation needs N >= 1");
    if (config.params.M < 1) throw std::invalid_argument("simulation needs M >= 1");
    if (!(config.params.beta >= 0.0 && config.params.beta <= 1.0)) {
      throw std::invalid_argument("beta must lie in [0,1]");
    }
    if (common.bids.size() != config.params.state_grid.count()) {
      throw std::invalid_argument("policy is not defined on the state grid");
    }
    if (config.deviant && config.deviant->bids.size() != common.bids.size()) {
      throw std::invalid_argument("deviant policy is not defined on the state grid");
    }
  }

  std::size_t agents() const { return n_; }
  double queue(std::size_t i) const { return q_[i]; }
  void set_queue(std::size_t i, double q) { q_[i] = clip(q); }

  void init_queues() {
    for (std::size_t i = 0; i < n_; ++i) {
      RandomStream rs = streams_.stream(StreamPurpose::kInitialState, static_cast<std::uint32_t>(i), 0);
      const double u1 = rs.uniform();
      const double u2 = rs.uniform();
      q_[i] = clip(cfg_.initial ? sample_initial(*cfg_.initial, u1, u2) : sample(cfg_.regen, u1));
    }
  }

  void step(std::uint32_t slot) {
    std::iota(perm_.begin(), perm_.end(), std::uint32_t{0});
    RandomStream prs = streams_.stream(StreamPurpose::kPermutation, 0, slot);
    for (std::size_t i = n_ - 1; i > 0; --i) std::swap(perm_[i], perm_[prs.below(i + 1)]);

    parallel_for(cfg_.N, cfg_.workers, [&](std::size_t b, std::size_t e) {
      std::vector<double> bids(M_);
      for (std::size_t c = b; c < e; ++c) run_cell(c, slot, bids);
    });
    const double s = cfg_.params.service_amount;
    const double keep = cfg_.params.beta;
    parallel_for(n_, cfg_.workers, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        const auto id = static_cast<std::uint32_t>(i);
        RandomStream ars = streams_.stream(StreamPurpose::kArrival, id, slot);
        RandomStream rrs = streams_.stream(StreamPurpose::kRegeneration, id, slot);
        const double a = sample(cfg_.arrival, ars.uniform());
        const double u_regen = rrs.uniform();
        const double r = sample(cfg_.regen, rrs.uniform());
        const double q = q_[i];
        before_[i] = q;
        regenerated_[i] = u_regen < 1.0 - keep;
        const double served = won_[i] ? std::min(s, q) : 0.0;
        q_[i] = clip(regenerated_[i] ? r : q - served + a);
      }
    });
  }

  const std::vector<double>& bids() const { return bid_; }
  const std::vector<double>& payments() const { return payment_; }
  const std::vector<double>& before() const { return before_; }
  const std::vector<std::uint32_t>& cells() const { return cell_; }
  const std::vector<char>& won() const { return won_; }
  const std::vector<char>& regenerated() const { return regenerated_; }
  const std::vector<char>& violations() const { return violation_; }

  /// Holding plus bidding cost incurred by agent i in the last slot.
  double slot_cost(std::size_t i) const {
    return cfg_.params.cost(before_[i]) + (won_[i] ? payment_[i] : 0.0);
  }

 private:
  double clip(double q) const { return std::clamp(q, 0.0, cfg_.params.state_grid.max()); }

  const BidPolicy& policy_of(std::size_t agent) const {
    return (agent == 0 && cfg_.deviant) ? *cfg_.deviant : common_;
  }

  void run_cell(std::size_t c, std::uint32_t slot, std::vector<double>& bids) {
    const std::uint32_t* members = perm_.data() + c * M_;
    for (std::size_t k = 0; k < M_; ++k) {
      const std::uint32_t a = members[k];
      bids[k] = policy_of(a).at(q_[a]);
      bid_[a] = bids[k];
      cell_[a] = static_cast<std::uint32_t>(c);
      won_[a] = 0;
      payment_[a] = 0.0;
    }
    violation_[c] = 0;
    if (!cfg_.interaction) return;
    RandomStream tie = streams_.stream(StreamPurpose::kTieBreak, static_cast<std::uint32_t>(c), slot);
    const AuctionOutcome out = resolve_auction(bids, tie);
    const std::uint32_t w = members[out.winner_index];
    won_[w] = 1;
    payment_[w] = out.payment;
    double longest = 0.0;
    for (std::size_t k = 0; k < M_; ++k) longest = std::max(longest, q_[members[k]]);
    violation_[c] = q_[w] < longest ? 1 : 0;
  }

  const SimConfig& cfg_;
  const BidPolicy& common_;
  StreamFactory streams_;
  std::size_t M_;
  std::size_t n_;
  std::vector<double> q_;
  std::vector<std::uint32_t> perm_;
  std::vector<double> bid_;
  std::vector<double> payment_;
  std::vector<double> before_;
  std::vector<std::uint32_t> cell_;
  std::vector<char> won_;
  std::vector<char> regenerated_;
  std::vector<char> violation_;
};

std::size_t bid_bin(const BidGrid& grid, double b) {
  if (!(b > 0.0)) return 0;
  auto k = static_cast<std::size_t>(std::ceil(b / grid.step()));
  if (k > 0 && grid.point(k - 1) >= b) --k;
  return std::min(k, grid.last_index());
}

std::vector<double> counts_to_cdf(const std::vector<std::uint64_t>& counts) {
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}));
  std::vector<double> cdf(counts.size(), 0.0);
  if (total == 0.0) return cdf;
  std::uint64_t acc = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    acc += counts[k];
    cdf[k] = static_cast<double>(acc) / total;
  }
  return cdf;
}

}  // namespace

SimTrace run_simulation(const SimConfig& config, const BidPolicy& policy) {
  if (!(config.burn_in_fraction >= 0.0 && config.burn_in_fraction < 1.0)) {
    throw std::invalid_argument("burn_in_fraction must lie in [0,1)");
  }
  FiniteSystem sys(config, policy, StreamFactory(config.seed));
  sys.init_queues();

  SimTrace t;
  t.agents = sys.agents();
  t.slots = config.horizon;
  t.burn_in = static_cast<std::size_t>(std::floor(config.burn_in_fraction * static_cast<double>(config.horizon)));
  t.bid_counts.assign(config.params.bid_grid.count(), 0);
  t.queue_counts.assign(config.params.state_grid.count(), 0);
  t.agent_cost.assign(t.agents, 0.0);
  t.agent_regenerations.assign(t.agents, 0);
  std::vector<double> cycle(t.agents, 0.0);
  std::vector<char> cycle_from_regen(t.agents, 0);

  for (std::size_t slot = 0; slot < config.horizon; ++slot) {
    sys.step(static_cast<std::uint32_t>(slot));
    if (config.interaction) {
      t.auctions += config.N;
      for (char v : sys.violations()) t.lqf_violations += static_cast<std::size_t>(v);
    }
    const bool counted = slot >= t.burn_in;
    for (std::size_t i = 0; i < t.agents; ++i) {
      const double c = sys.slot_cost(i);
      t.agent_cost[i] += c;
      cycle[i] += c;
      if (sys.won()[i]) t.total_payments += sys.payments()[i];
      if (counted) {
        ++t.bid_counts[bid_bin(config.params.bid_grid, sys.bids()[i])];
        ++t.queue_counts[config.params.state_grid.nearest_index(sys.before()[i])];
      }
      if (config.record_trace) {
        t.records.push_back(TraceRecord{static_cast<std::uint32_t>(slot), static_cast<std::uint32_t>(i),
                                        sys.cells()[i], sys.bids()[i], sys.won()[i] != 0,
                                        sys.won()[i] ? sys.payments()[i] : 0.0, sys.before()[i],
                                        sys.queue(i)});
      }
      if (sys.regenerated()[i]) {
        ++t.agent_regenerations[i];
        if (cycle_from_regen[i]) {
          t.cycle_cost_sum += cycle[i];
          ++t.cycles;
        }
        cycle[i] = 0.0;
        cycle_from_regen[i] = 1;
      }
    }
  }
  t.final_queues.resize(t.agents);
  for (std::size_t i = 0; i < t.agents; ++i) t.final_queues[i] = sys.queue(i);
  return t;
}

double lqf_violation_rate(const SimTrace& trace) {
  if (trace.auctions == 0) return 0.0;
  return static_cast<double>(trace.lqf_violations) / static_cast<double>(trace.auctions);
}

std::vector<double> empirical_bid_cdf(const SimTrace& trace) { return counts_to_cdf(trace.bid_counts); }

std::vector<double> empirical_queue_cdf(const SimTrace& trace) { return counts_to_cdf(trace.queue_counts); }

double ks_distance(std::span<const double> empirical, const BidCdf& rho) {
  if (empirical.size() != rho.size()) throw std::invalid_argument("ks_distance: size mismatch");
  double d = 0.0;
  for (std::size_t k = 0; k < rho.size(); ++k) d = std::max(d, std::abs(empirical[k] - rho[k]));
  return d;
}

void write_trace(const std::filesystem::path& path, const SimTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "slot,agent,cell,bid,won,payment,queue_before,queue_after\n";
  for (const TraceRecord& r : trace.records) {
    out << r.slot << ',' << r.agent << ',' << r.cell << ',' << format_double(r.bid) << ','
        << (r.won ? 1 : 0) << ',' << format_double(r.payment) << ',' << format_double(r.queue_before)
        << ',' << format_double(r.queue_after) << '\n';
  }
}

ValueEstimate estimate_value(const SimConfig& config, const BidPolicy& policy,
                             const BidCdf& population_rho, double q0, std::size_t replications) {
  if (replications < 1) throw std::invalid_argument("estimate_value needs at least one replication");
  const ModelParams& p = config.params;
  const double qmax = p.state_grid.max();
  const auto M = static_cast<std::size_t>(p.M);
  const double beta = p.beta;
  // beta^T < 1e-6 for the discounted sum; regenerative runs are capped far beyond.
  const std::size_t discounted_slots =
      beta > 0.0 ? static_cast<std::size_t>(std::ceil(std::log(1e-6) / std::log(beta))) + 1 : 1;
  const std::size_t regen_cap = std::max<std::size_t>(100 * discounted_slots, 1000);

  std::vector<double> regen_costs(replications);
  std::vector<double> disc_costs(replications);
  std::vector<double> bids(M);
  for (std::size_t r = 0; r < replications; ++r) {
    const StreamFactory streams(config.seed, r);
    // One slot of the single-agent chain; returns the slot cost.
    auto play = [&](double& q, std::uint32_t t) {
      RandomStream opp = streams.stream(StreamPurpose::kOpponentBids, 0, t);
      RandomStream tie = streams.stream(StreamPurpose::kTieBreak, 0, t);
      RandomStream arr = streams.stream(StreamPurpose::kArrival, 0, t);
      bids[0] = policy.at(q);
      for (std::size_t k = 1; k < M; ++k) bids[k] = sample_bid(population_rho, opp.uniform());
      const AuctionOutcome out = resolve_auction(bids, tie);
      const bool won = out.winner_index == 0;
      const double cost = p.cost(q) + (won ? out.payment : 0.0);
      const double served = won ? std::min(p.service_amount, q) : 0.0;
      q = std::clamp(q - served + sample(config.arrival, arr.uniform()), 0.0, qmax);
      return cost;
    };

    double q = std::clamp(q0, 0.0, qmax);
    double total = 0.0;
    for (std::size_t t = 0; t < regen_cap; ++t) {
      total += play(q, static_cast<std::uint32_t>(t));
      RandomStream reg = streams.stream(StreamPurpose::kRegeneration, 0, static_cast<std::uint32_t>(t));
      if (reg.uniform() < 1.0 - beta) break;
    }
    regen_costs[r] = total;

    q = std::clamp(q0, 0.0, qmax);
    double disc = 0.0;
    double weight = 1.0;
    for (std::size_t t = 0; t < discounted_slots; ++t) {
      disc += weight * play(q, static_cast<std::uint32_t>(t));
      weight *= beta;
    }
    disc_costs[r] = disc;
  }
  return ValueEstimate{summarize(regen_costs), summarize(disc_costs)};
}

namespace {

/// Cost to agent 0 until its first regeneration in one replication.
double agent0_cycle_cost(const SimConfig& config, const BidPolicy& common, std::uint64_t replication,
                         double q0, std::size_t cap) {
  FiniteSystem sys(config, common, StreamFactory(config.seed, replication));
  sys.init_queues();
  sys.set_queue(0, q0);
  double total = 0.0;
  for (std::size_t t = 0; t < cap; ++t) {
    sys.step(static_cast<std::uint32_t>(t));
    total += sys.slot_cost(0);
    if (sys.regenerated()[0]) break;
  }
  return total;
}

}  // namespace

std::vector<BidPolicy> default_challengers(const MfeSolution& mfe) {
  std::vector<BidPolicy> out;
  out.push_back(mfe.policy.scaled(0.5));
  out.push_back(mfe.policy.scaled(2.0));
  const Pmf<BidGrid> bid_pmf = pmf_of(mfe.rho);
  for (double level : {0.25, 0.5, 0.75}) {
    out.push_back(BidPolicy::constant(mfe.policy.grid, quantile_of(bid_pmf, level)));
  }
  out.push_back(BidPolicy::constant(mfe.policy.grid, mfe.rho.grid().max()));
  return out;
}

EpsNashResult eps_nash_gap(const SimConfig& config, const MfeSolution& mfe,
                           const std::vector<BidPolicy>& challengers, double q0,
                           std::size_t replications) {
  if (replications < 2) throw std::invalid_argument("eps_nash_gap needs at least two replications");
  const double beta = config.params.beta;
  const std::size_t cap =
      beta > 0.0 ? 100 * (static_cast<std::size_t>(std::ceil(std::log(1e-6) / std::log(beta))) + 1) : 1;

  SimConfig base = config;
  base.initial = mfe.pi;
  base.deviant.reset();
  base.record_trace = false;

  std::vector<double> v_mfe(replications);
  for (std::size_t r = 0; r < replications; ++r) v_mfe[r] = agent0_cycle_cost(base, mfe.policy, r, q0, cap);

  EpsNashResult res;
  res.mfe_value = summarize(v_mfe);
  res.gap = -std::numeric_limits<double>::infinity();
  res.gap_half_width = 0.0;
  for (const BidPolicy& ch : challengers) {
    SimConfig dev = base;
    dev.deviant = ch;
    std::vector<double> v(replications);
    std::vector<double> diff(replications);
    for (std::size_t r = 0; r < replications; ++r) {
      v[r] = agent0_cycle_cost(dev, mfe.policy, r, q0, cap);
      diff[r] = v_mfe[r] - v[r];
    }
    ChallengerResult cr{summarize(v).mean, summarize(diff)};
    if (cr.advantage.mean > res.gap) {
      res.gap = cr.advantage.mean;
      res.gap_half_width = cr.advantage.half_width;
    }
    res.challengers.push_back(cr);
  }
  return res;
}

namespace {

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

/// Standard normal upper quantile by bisection on erfc.
double normal_upper_quantile(double tail) {
  double lo = 0.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (0.5 * std::erfc(mid / std::sqrt(2.0)) > tail) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

ChaosResult chaos_correlation(const SimConfig& config, const MfeSolution& mfe, std::size_t pair_count,
                              std::size_t horizon, std::size_t replications) {
  if (replications < 4) throw std::invalid_argument("chaos_correlation needs at least 4 replications");
  SimConfig cfg = config;
  cfg.initial = mfe.pi;
  cfg.deviant.reset();
  const std::size_t agents = cfg.N * static_cast<std::size_t>(cfg.params.M);
  if (agents < 2) throw std::invalid_argument("chaos_correlation needs at least two agents");

  ChaosResult res;
  // Disjoint pairs from a seeded shuffle of the agents.
  std::vector<std::uint32_t> ids(agents);
  std::iota(ids.begin(), ids.end(), std::uint32_t{0});
  RandomStream pick = StreamFactory(config.seed).stream(StreamPurpose::kPairSelection, 0, 0);
  for (std::size_t i = agents - 1; i > 0; --i) std::swap(ids[i], ids[pick.below(i + 1)]);
  const std::size_t pairs = std::min(pair_count, agents / 2);
  if (pairs == 0) throw std::invalid_argument("chaos_correlation needs at least one pair");
  for (std::size_t k = 0; k < pairs; ++k) res.pairs.emplace_back(ids[2 * k], ids[2 * k + 1]);

  std::vector<std::vector<double>> xs(pairs, std::vector<double>(replications));
  std::vector<std::vector<double>> ys(pairs, std::vector<double>(replications));
  for (std::size_t r = 0; r < replications; ++r) {
    FiniteSystem sys(cfg, mfe.policy, StreamFactory(config.seed, r));
    sys.init_queues();
    for (std::size_t t = 0; t < horizon; ++t) sys.step(static_cast<std::uint32_t>(t));
    for (std::size_t k = 0; k < pairs; ++k) {
      xs[k][r] = sys.queue(res.pairs[k].first);
      ys[k][r] = sys.queue(res.pairs[k].second);
    }
  }
  res.max_abs_correlation = 0.0;
  res.null_max_abs_correlation = 0.0;
  for (std::size_t k = 0; k < pairs; ++k) {
    const double c = pearson(xs[k], ys[k]);
    res.correlations.push_back(c);
    res.max_abs_correlation = std::max(res.max_abs_correlation, std::abs(c));
    std::vector<double> shifted(replications);
    for (std::size_t r = 0; r < replications; ++r) shifted[r] = ys[k][(r + 1) % replications];
    res.null_max_abs_correlation = std::max(res.null_max_abs_correlation, std::abs(pearson(xs[k], shifted)));
  }
  const double z = normal_upper_quantile(0.005 / static_cast<double>(pairs));
  res.noise_band = std::tanh(z / std::sqrt(static_cast<double>(replications) - 3.0));
  return res;
}

}  // namespace mfa
