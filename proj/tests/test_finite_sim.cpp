#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include "mfa/finite_sim.hpp"
#include "mfa/rng.hpp"

using namespace mfa;

namespace {

const MfeSolution& reference_mfe() {
  static const MfeSolution sol = solve_mfe(reference_params(0.9, 10));
  return sol;
}

SimConfig make_config(std::size_t N, const ModelParams& params, std::size_t horizon, std::uint64_t seed) {
  SimConfig c{.N = N, .params = params};
  c.horizon = horizon;
  c.seed = seed;
  return c;
}

BidPolicy linear_policy(const StateGrid& g, double slope, double offset) {
  std::vector<double> b(g.count());
  for (std::size_t m = 0; m < b.size(); ++m) b[m] = offset + slope * g.point(m);
  return BidPolicy{g, b};
}

/// Replays every record from the documented stream layout.
void replay_check(const SimConfig& cfg, const BidPolicy& policy, const SimTrace& t) {
  const std::size_t n = t.agents;
  const auto M = static_cast<std::size_t>(cfg.params.M);
  REQUIRE(t.records.size() == n * cfg.horizon);
  const StreamFactory streams(cfg.seed);
  const double qmax = cfg.params.state_grid.max();
  const double s = cfg.params.service_amount;
  for (std::size_t slot = 0; slot < cfg.horizon; ++slot) {
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    RandomStream prs = streams.stream(StreamPurpose::kPermutation, 0, static_cast<std::uint32_t>(slot));
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[prs.below(i + 1)]);
    const TraceRecord* row = t.records.data() + slot * n;
    for (std::size_t pos = 0; pos < n; ++pos) REQUIRE(row[perm[pos]].cell == pos / M);

    std::map<std::uint32_t, std::vector<const TraceRecord*>> cells;
    for (std::size_t i = 0; i < n; ++i) {
      const TraceRecord& r = row[i];
      REQUIRE(r.slot == slot);
      REQUIRE(r.agent == i);
      const BidPolicy& own = (i == 0 && cfg.deviant) ? *cfg.deviant : policy;
      REQUIRE(r.bid == own.at(r.queue_before));
      if (slot > 0) REQUIRE(r.queue_before == t.records[(slot - 1) * n + i].queue_after);

      RandomStream ars = streams.stream(StreamPurpose::kArrival, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(slot));
      RandomStream rrs = streams.stream(StreamPurpose::kRegeneration, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(slot));
      const double a = sample(cfg.arrival, ars.uniform());
      const bool regen = rrs.uniform() < 1.0 - cfg.params.beta;
      const double R = sample(cfg.regen, rrs.uniform());
      const double next = regen ? R : r.queue_before - (r.won ? std::min(s, r.queue_before) : 0.0) + a;
      REQUIRE(r.queue_after == std::clamp(next, 0.0, qmax));
      cells[r.cell].push_back(&r);
    }
    REQUIRE(cells.size() == cfg.N);
    for (const auto& [c, members] : cells) {
      REQUIRE(members.size() == M);
      if (!cfg.interaction) continue;
      std::vector<double> bids;
      int winners = 0;
      const TraceRecord* w = nullptr;
      for (const auto* r : members) {
        bids.push_back(r->bid);
        if (r->won) { ++winners; w = r; }
      }
      REQUIRE(winners == 1);
      std::sort(bids.rbegin(), bids.rend());
      REQUIRE(w->bid == bids[0]);
      REQUIRE(w->payment == (M > 1 ? bids[1] : 0.0));
    }
  }
}

}  // namespace

TEST_CASE("sample_bid inverts the piecewise-linear CDF") {
  const BidGrid bg(1.0, 5);
  const BidCdf rho(bg, {0.2, 0.4, 0.4, 0.9, 1.0});
  CHECK(sample_bid(rho, 0.1) == 0.0);
  CHECK(sample_bid(rho, 0.3) == doctest::Approx(0.5));
  CHECK(sample_bid(rho, 0.65) == doctest::Approx(2.5));
  CHECK(sample_bid(rho, 0.95) == doctest::Approx(3.5));
  for (double u = 0.0; u < 1.0; u += 0.013) {
    const double b = sample_bid(rho, u);
    if (b > 0.0) CHECK(rho.at(b) == doctest::Approx(u).epsilon(1e-12));
  }
}

TEST_CASE("independent replay reproduces a small trace bit for bit") {
  const StateGrid g(0.05, 101);
  ModelParams P{0.8, 3, 1.0, g, BidGrid(0.5, 61), discretize(UniformSpec{0, 1}, g),
                discretize(UniformSpec{0, 2}, g), HoldingCost{}};
  auto cfg = make_config(4, P, 60, 42);
  cfg.regen = UniformSpec{0.0, 2.0};
  cfg.record_trace = true;
  const auto policy = linear_policy(g, 3.0, 0.0);
  const auto t = run_simulation(cfg, policy);
  replay_check(cfg, policy, t);

  cfg.deviant = BidPolicy::constant(g, 1.25);
  const auto td = run_simulation(cfg, policy);
  replay_check(cfg, policy, td);

  cfg.deviant.reset();
  cfg.interaction = false;
  const auto ti = run_simulation(cfg, policy);
  replay_check(cfg, policy, ti);
  CHECK(ti.auctions == 0);
  CHECK(ti.total_payments == 0.0);
  for (const auto& r : ti.records) CHECK_FALSE(r.won);
}

TEST_CASE("aggregates are consistent with the trace") {
  const auto P = reference_params(0.9, 4);
  auto cfg = make_config(6, P, 300, 7);
  cfg.record_trace = true;
  const auto policy = linear_policy(P.state_grid, 10.0, 0.0);
  const auto t = run_simulation(cfg, policy);
  CHECK(t.auctions == cfg.N * cfg.horizon);
  CHECK(t.burn_in == 60);
  double paid = 0.0;
  std::size_t wins = 0;
  std::vector<double> cost(t.agents, 0.0);
  for (const auto& r : t.records) {
    paid += r.payment;
    wins += r.won ? 1 : 0;
    cost[r.agent] += P.cost(r.queue_before) + r.payment;
  }
  CHECK(wins == t.auctions);
  CHECK(t.total_payments == doctest::Approx(paid).epsilon(1e-12));
  for (std::size_t i = 0; i < t.agents; ++i) CHECK(t.agent_cost[i] == doctest::Approx(cost[i]).epsilon(1e-12));
  const auto samples = (cfg.horizon - t.burn_in) * t.agents;
  CHECK(std::accumulate(t.bid_counts.begin(), t.bid_counts.end(), std::uint64_t{0}) == samples);
  CHECK(std::accumulate(t.queue_counts.begin(), t.queue_counts.end(), std::uint64_t{0}) == samples);
  for (std::size_t i = 0; i < t.agents; ++i) CHECK(t.final_queues[i] == t.records[(cfg.horizon - 1) * t.agents + i].queue_after);

  const auto path = std::filesystem::temp_directory_path() / "mfa_trace_test.csv";
  write_trace(path, t);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "slot,agent,cell,bid,won,payment,queue_before,queue_after");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == t.records.size());
  std::filesystem::remove(path);
}

TEST_CASE("results do not depend on the worker count") {
  const auto P = reference_params(0.9, 5);
  auto cfg = make_config(20, P, 200, 99);
  cfg.record_trace = true;
  const auto policy = linear_policy(P.state_grid, 7.0, 0.5);
  const auto a = run_simulation(cfg, policy);
  cfg.workers = 3;
  const auto b = run_simulation(cfg, policy);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    const auto& x = a.records[k];
    const auto& y = b.records[k];
    REQUIRE((x.cell == y.cell && x.bid == y.bid && x.won == y.won && x.payment == y.payment &&
             x.queue_before == y.queue_before && x.queue_after == y.queue_after));
  }
  CHECK(a.bid_counts == b.bid_counts);
  CHECK(a.agent_cost == b.agent_cost);
  cfg.seed = 100;
  const auto c = run_simulation(cfg, policy);
  CHECK(c.final_queues != a.final_queues);
}

TEST_CASE("single-agent cells pay nothing") {
  const auto P = reference_params(0.9, 1);
  auto cfg = make_config(8, P, 400, 3);
  const auto t = run_simulation(cfg, linear_policy(P.state_grid, 5.0, 1.0));
  CHECK(t.total_payments == 0.0);
  CHECK(t.lqf_violations == 0);
  CHECK(t.auctions == 8 * 400);
}

TEST_CASE("with a vanishing discount the queue law is Psi") {
  const auto P = reference_params(1e-9, 3);
  auto cfg = make_config(50, P, 200, 5);
  cfg.burn_in_fraction = 0.0;
  const auto t = run_simulation(cfg, linear_policy(P.state_grid, 2.0, 0.0));
  const auto emp = empirical_queue_cdf(t);
  const auto psi = cdf_of(P.regen);
  double ks = 0.0;
  for (std::size_t m = 0; m < emp.size(); ++m) ks = std::max(ks, std::abs(emp[m] - psi[m]));
  const double n = static_cast<double>(cfg.N * 3 * cfg.horizon);
  CHECK(ks < 1.63 / std::sqrt(n));
}

TEST_CASE("LQF violations are counted exactly") {
  const StateGrid g(0.05, 401);
  ModelParams P{0.9, 2, 1.0, g, BidGrid(0.5, 61), discretize(UniformSpec{0, 1}, g),
                discretize(UniformSpec{0, 1}, g), HoldingCost{}};
  auto cfg = make_config(1, P, 3000, 17);
  cfg.record_trace = true;
  cfg.deviant = BidPolicy::constant(g, 0.0);
  const auto t = run_simulation(cfg, linear_policy(g, 1.0, 1.0));
  std::size_t longer = 0;
  for (std::size_t slot = 0; slot < cfg.horizon; ++slot) {
    const auto& r0 = t.records[slot * 2];
    const auto& r1 = t.records[slot * 2 + 1];
    CHECK_FALSE(r0.won);
    if (r0.queue_before > r1.queue_before) ++longer;
  }
  CHECK(longer > 0);
  CHECK(t.lqf_violations == longer);
  CHECK(lqf_violation_rate(t) == doctest::Approx(static_cast<double>(longer) / 3000.0));

  cfg.deviant.reset();
  const auto inc = run_simulation(cfg, linear_policy(g, 1.0, 1.0));
  CHECK(inc.lqf_violations == 0);
  const auto dec = run_simulation(cfg, linear_policy(g, -0.05, 1.0));
  CHECK(lqf_violation_rate(dec) > 0.3);
}

TEST_CASE("MFE policy in the finite system") {
  const auto& mfe = reference_mfe();
  auto cfg = make_config(10, reference_params(0.9, 10),
                         1500, 11);
  cfg.initial = mfe.pi;
  const auto t = run_simulation(cfg, mfe.policy);
  CHECK(t.lqf_violations == 0);
  CHECK(ks_distance(empirical_bid_cdf(t), mfe.rho) < 0.03);
  CHECK(t.cycles > 0);
}

TEST_CASE("value estimators agree with each other and with the solver") {
  const auto& mfe = reference_mfe();
  const auto P = reference_params(0.9, 10);
  auto cfg = make_config(1, P, 1, 21);
  const auto est = estimate_value(cfg, mfe.policy, mfe.rho, 0.0, 400);
  const double v0 = mfe.value.values[0];
  CHECK(std::abs(est.discounted.mean - v0) <= est.discounted.half_width + 0.01 * v0);
  CHECK(std::abs(est.regenerative.mean - est.discounted.mean) <=
        1.5 * (est.regenerative.half_width + est.discounted.half_width));

  auto zero = P;
  zero.cost = HoldingCost{0.0, 2.0};
  zero.M = 1;
  auto zcfg = make_config(1, zero, 1, 21);
  const auto z = estimate_value(zcfg, mfe.policy, mfe.rho, 3.0, 20);
  CHECK(z.regenerative.mean == 0.0);
  CHECK(z.discounted.mean == 0.0);
  CHECK(z.discounted.half_width == 0.0);
}

TEST_CASE("eps-Nash gap: the MFE policy as challenger has zero advantage") {
  const auto& mfe = reference_mfe();
  auto cfg = make_config(5, reference_params(0.9, 10), 1, 31);
  const auto r = eps_nash_gap(cfg, mfe, {mfe.policy, mfe.policy.scaled(0.5)}, 0.0, 60);
  REQUIRE(r.challengers.size() == 2);
  CHECK(r.challengers[0].advantage.mean == 0.0);
  CHECK(r.challengers[0].value == doctest::Approx(r.mfe_value.mean));
  CHECK(r.gap == std::max(r.challengers[0].advantage.mean, r.challengers[1].advantage.mean));
  CHECK(default_challengers(mfe).size() == 6);
}

TEST_CASE("propagation of chaos diagnostics") {
  const auto& mfe = reference_mfe();
  const auto P = reference_params(0.9, 10);
  auto cfg = make_config(30, P, 1, 41);
  const auto big = chaos_correlation(cfg, mfe, 10, 30, 400);
  CHECK(big.correlations.size() == 10);
  CHECK(big.max_abs_correlation < big.noise_band);
  CHECK(big.null_max_abs_correlation < big.noise_band);
  CHECK(big.noise_band == doctest::Approx(std::tanh(3.2905 / std::sqrt(397.0))).epsilon(1e-3));

  auto two = P;
  two.M = 2;
  auto small = make_config(1, two, 1, 41);
  const auto coupled = chaos_correlation(small, mfe, 1, 30, 400);
  CHECK(coupled.correlations[0] < 0.0);
  CHECK(coupled.max_abs_correlation > coupled.noise_band);
  small.interaction = false;
  const auto indep = chaos_correlation(small, mfe, 1, 30, 400);
  CHECK(indep.max_abs_correlation < indep.noise_band);
}
