#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "mfa/cli.hpp"
#include "mfa/csv.hpp"
#include "mfa/errors.hpp"

namespace mfa::cli {

namespace fs = std::filesystem;

namespace {

std::vector<double> grid_points(const auto& grid) {
  std::vector<double> x(grid.count());
  for (std::size_t k = 0; k < x.size(); ++k) x[k] = grid.point(k);
  return x;
}

std::vector<double> iota_from(std::size_t first, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(first + i);
  return v;
}

/// name,value rows; values formatted exactly.
class Metrics {
 public:
  void add(const std::string& name, double value) { rows_.emplace_back(name, format_double(value)); }
  void add(const std::string& name, std::size_t value) { rows_.emplace_back(name, std::to_string(value)); }
  void write(const fs::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "metric,value\n";
    for (const auto& [k, v] : rows_) out << k << ',' << v << '\n';
  }

 private:
  std::vector<std::pair<std::string, std::string>> rows_;
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

MfeSolution policy_source(const RunConfig& config, const std::string& source, unsigned workers) {
  const ModelParams params = model_params(config);
  if (source == "mfe") {
    MfeSolution sol = solve_mfe(params, mfe_options(config, workers));
    if (!sol.converged) {
      throw ConvergenceError("MFE iteration did not reach epsilon", sol.iterations, sol.residual);
    }
    return sol;
  }
  return load_solution(source, params);
}

}  // namespace

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256 unavailable");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char two[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(two, sizeof two, "%02x", md[i]);
    hex += two;
  }
  return hex;
}

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& config,
                    const std::vector<std::string>& artifacts) {
  const std::string echo = echo_config(config);
  {
    std::ofstream out(dir / "config_effective.json", std::ios::binary);
    out << echo;
  }
  std::vector<std::string> names = artifacts;
  names.push_back("config_effective.json");
  std::sort(names.begin(), names.end());
  std::ofstream out(dir / "manifest.txt", std::ios::binary);
  out << "command " << command << '\n';
  out << "seed " << config.simulation.seed << '\n';
  out << "config config_effective.json\n";
  for (const auto& n : names) out << "sha256 " << sha256_file(dir / n) << ' ' << n << '\n';
}

std::vector<std::string> write_solution(const fs::path& dir, const MfeSolution& sol) {
  const std::vector<double> x = grid_points(sol.rho.grid());
  const std::vector<double> q = grid_points(sol.pi.grid());
  write_two_column_csv(dir / "rho.csv", "x", "rho", x, sol.rho.values());
  write_two_column_csv(dir / "pi.csv", "q", "pi", q, sol.pi.weights());
  write_two_column_csv(dir / "pi_cdf.csv", "q", "cdf", q, cdf_of(sol.pi));
  write_two_column_csv(dir / "theta.csv", "q", "theta", q, sol.policy.bids);
  write_two_column_csv(dir / "value.csv", "q", "value", q, sol.value.values);
  const std::size_t n = sol.residual_history.size();
  std::vector<double> vits(sol.value_iterations.begin(), sol.value_iterations.end());
  write_columns_csv(dir / "residuals.csv", {"iteration", "residual", "value_iterations"},
                    {iota_from(1, n), sol.residual_history, vits});
  Metrics m;
  m.add("converged", static_cast<std::size_t>(sol.converged ? 1 : 0));
  m.add("iterations", sol.iterations);
  m.add("residual", sol.residual);
  m.add("mean_queue", mean_of(sol.pi));
  m.add("mean_bid", mean_of(sol.rho));
  m.add("value_at_zero", sol.value.values.front());
  m.write(dir / "solve_summary.csv");
  return {"rho.csv", "pi.csv", "pi_cdf.csv", "theta.csv", "value.csv", "residuals.csv", "solve_summary.csv"};
}

MfeSolution load_solution(const fs::path& dir, const ModelParams& params) {
  for (const char* f : {"rho.csv", "theta.csv", "pi.csv", "value.csv"}) {
    if (!fs::exists(dir / f)) throw std::runtime_error("policy artifact missing: " + (dir / f).string());
  }
  const TwoColumn rho = read_two_column_csv(dir / "rho.csv");
  const TwoColumn theta = read_two_column_csv(dir / "theta.csv");
  const TwoColumn pi = read_two_column_csv(dir / "pi.csv");
  const TwoColumn value = read_two_column_csv(dir / "value.csv");
  const std::size_t S = params.state_grid.count();
  if (rho.y.size() != params.bid_grid.count() || theta.y.size() != S || pi.y.size() != S ||
      value.y.size() != S) {
    throw std::runtime_error("artifacts in " + dir.string() + " do not match the configured grids");
  }
  for (std::size_t k = 0; k < rho.x.size(); ++k) {
    if (std::abs(rho.x[k] - params.bid_grid.point(k)) > 1e-9 * (1.0 + rho.x[k])) {
      throw std::runtime_error("rho.csv bid grid differs from the configured grid");
    }
  }
  for (std::size_t k = 0; k < S; ++k) {
    if (std::abs(theta.x[k] - params.state_grid.point(k)) > 1e-9 * (1.0 + theta.x[k])) {
      throw std::runtime_error("theta.csv state grid differs from the configured grid");
    }
  }
  std::vector<double> history;
  std::vector<std::size_t> vits;
  if (fs::exists(dir / "residuals.csv")) {
    std::ifstream in(dir / "residuals.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::string a, b, c;
      std::getline(ls, a, ',');
      std::getline(ls, b, ',');
      std::getline(ls, c, ',');
      if (b.empty()) continue;
      history.push_back(std::stod(b));
      vits.push_back(c.empty() ? 0 : static_cast<std::size_t>(std::stoull(c)));
    }
  }
  const double residual = history.empty() ? 0.0 : history.back();
  return MfeSolution{BidCdf(params.bid_grid, rho.y),
                     BidPolicy{params.state_grid, theta.y},
                     ValueFunction{params.state_grid, value.y},
                     QueueDist(params.state_grid, pi.y),
                     residual,
                     history.size(),
                     history,
                     vits,
                     true};
}

int cmd_solve(const RunConfig& config, unsigned workers) {
  const ModelParams params = model_params(config);
  const MfeSolution sol = solve_mfe(params, mfe_options(config, workers));
  ensure_dir(config.output_dir);
  const auto files = write_solution(config.output_dir, sol);
  write_manifest(config.output_dir, "solve", config, files);
  std::cout << "solve: " << (sol.converged ? "converged" : "NOT converged") << " after " << sol.iterations
            << " iterations, residual " << format_double(sol.residual) << '\n';
  return sol.converged ? kExitOk : kExitNotConverged;
}

namespace {

void add_eps_nash(const RunConfig& config, const SimConfig& sc, const MfeSolution& mfe, Metrics& m,
                  const fs::path& dir, std::vector<std::string>& files) {
  const auto challengers = make_challengers(config, mfe);
  const EpsNashResult r =
      eps_nash_gap(sc, mfe, challengers, config.simulation.q0, config.simulation.replications);
  m.add("eps_nash_mfe_value", r.mfe_value.mean);
  m.add("eps_nash_mfe_value_half_width", r.mfe_value.half_width);
  m.add("eps_nash_gap", r.gap);
  m.add("eps_nash_gap_half_width", r.gap_half_width);
  std::ofstream out(dir / "challengers.csv", std::ios::binary);
  out << "challenger,value,advantage,advantage_half_width\n";
  for (std::size_t i = 0; i < r.challengers.size(); ++i) {
    out << config.simulation.challengers[i] << ',' << format_double(r.challengers[i].value)
        << ',' << format_double(r.challengers[i].advantage.mean) << ','
        << format_double(r.challengers[i].advantage.half_width) << '\n';
  }
  files.push_back("challengers.csv");
}

}  // namespace

int cmd_simulate(const RunConfig& config, const std::string& source, unsigned workers) {
  const MfeSolution mfe = policy_source(config, source, workers);
  const SimConfig sc = sim_config(config, workers);
  const SimTrace t = run_simulation(sc, mfe.policy);
  const fs::path dir = config.output_dir;
  ensure_dir(dir);
  std::vector<std::string> files;

  const std::vector<double> bid_cdf = empirical_bid_cdf(t);
  const std::vector<double> queue_cdf = empirical_queue_cdf(t);
  write_columns_csv(dir / "bid_cdf.csv", {"x", "empirical", "rho"},
                    {grid_points(sc.params.bid_grid), bid_cdf, mfe.rho.values()});
  write_columns_csv(dir / "queue_cdf.csv", {"q", "empirical", "pi_cdf"},
                    {grid_points(sc.params.state_grid), queue_cdf, cdf_of(mfe.pi)});
  files.insert(files.end(), {"bid_cdf.csv", "queue_cdf.csv"});
  if (sc.record_trace) {
    write_trace(dir / "trace.csv", t);
    files.push_back("trace.csv");
  }

  Metrics m;
  m.add("N", sc.N);
  m.add("M", static_cast<std::size_t>(sc.params.M));
  m.add("agents", t.agents);
  m.add("slots", t.slots);
  m.add("burn_in_slots", t.burn_in);
  m.add("auctions", t.auctions);
  m.add("lqf_violations", t.lqf_violations);
  m.add("lqf_violation_rate", lqf_violation_rate(t));
  m.add("ks_distance", ks_distance(bid_cdf, mfe.rho));
  m.add("total_payments", t.total_payments);
  double cost = 0.0;
  for (double c : t.agent_cost) cost += c;
  m.add("mean_cost_per_agent_slot", cost / static_cast<double>(t.agents * t.slots));
  m.add("regeneration_cycles", static_cast<std::size_t>(t.cycles));
  m.add("mean_cycle_cost", t.cycles ? t.cycle_cost_sum / static_cast<double>(t.cycles) : 0.0);

  const SimulationSection& s = config.simulation;
  if (s.value_estimate) {
    const ValueEstimate v = estimate_value(sc, mfe.policy, mfe.rho, s.q0, s.replications);
    m.add("value_regenerative", v.regenerative.mean);
    m.add("value_regenerative_half_width", v.regenerative.half_width);
    m.add("value_discounted", v.discounted.mean);
    m.add("value_discounted_half_width", v.discounted.half_width);
    m.add("value_solver", mfe.value.values[sc.params.state_grid.nearest_index(s.q0)]);
  }
  if (s.eps_nash) add_eps_nash(config, sc, mfe, m, dir, files);
  if (s.chaos) {
    const ChaosResult c = chaos_correlation(sc, mfe, s.chaos_pairs, s.chaos_horizon, s.replications);
    m.add("chaos_max_abs_correlation", c.max_abs_correlation);
    m.add("chaos_noise_band", c.noise_band);
    m.add("chaos_null_max_abs_correlation", c.null_max_abs_correlation);
  }
  m.write(dir / "metrics.csv");
  files.push_back("metrics.csv");
  write_manifest(dir, "simulate " + source, config, files);
  std::cout << "simulate: " << t.agents << " agents, " << t.slots << " slots, ks "
            << format_double(ks_distance(bid_cdf, mfe.rho)) << '\n';
  return kExitOk;
}

int cmd_best_response(const RunConfig& config, const std::string& source, unsigned workers) {
  const MfeSolution mfe = policy_source(config, source, workers);
  const SimConfig sc = sim_config(config, workers);
  const fs::path dir = config.output_dir;
  ensure_dir(dir);
  std::vector<std::string> files;
  Metrics m;
  m.add("N", sc.N);
  add_eps_nash(config, sc, mfe, m, dir, files);
  m.write(dir / "best_response.csv");
  files.push_back("best_response.csv");
  write_manifest(dir, "best-response " + source, config, files);
  std::cout << "best-response: written to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_export(const RunConfig& config, const fs::path& solve_dir) {
  const ModelParams params = model_params(config);
  const MfeSolution sol = load_solution(solve_dir, params);
  const fs::path dir = config.output_dir;
  ensure_dir(dir);

  std::vector<double> levels, queue_q, bid_q;
  const Pmf<BidGrid> bid_pmf = pmf_of(sol.rho);
  for (int d = 1; d <= 9; ++d) {
    levels.push_back(d / 10.0);
    queue_q.push_back(quantile_of(sol.pi, d / 10.0));
    bid_q.push_back(quantile_of(bid_pmf, d / 10.0));
  }
  write_columns_csv(dir / "deciles.csv", {"level", "queue", "bid"}, {levels, queue_q, bid_q});
  write_two_column_csv(dir / "bid_pmf.csv", "x", "pmf", grid_points(params.bid_grid), bid_pmf.weights());

  std::vector<double> increments(sol.policy.bids.size() - 1);
  for (std::size_t m = 0; m + 1 < sol.policy.bids.size(); ++m) {
    increments[m] = sol.policy.bids[m + 1] - sol.policy.bids[m];
  }
  std::vector<double> q = grid_points(params.state_grid);
  q.pop_back();
  write_two_column_csv(dir / "theta_increments.csv", "q", "increment", q, increments);

  Metrics m;
  m.add("mean_queue", mean_of(sol.pi));
  m.add("mean_bid", mean_of(sol.rho));
  m.add("value_at_zero", sol.value.values.front());
  m.add("outer_iterations", sol.iterations);
  m.add("final_residual", sol.residual);
  m.write(dir / "export_summary.csv");
  write_manifest(dir, "export " + solve_dir.string(), config,
                 {"deciles.csv", "bid_pmf.csv", "theta_increments.csv", "export_summary.csv"});
  std::cout << "export: written to " << dir.string() << '\n';
  return kExitOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Mean-field auction scheduling: equilibrium solver and finite-N simulator"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  unsigned workers = 1;
  app.add_option("-c,--config", config_path, "JSON run configuration (defaults when omitted)");
  app.add_option("--set", sets, "override, e.g. --set model.beta=0.95 (repeatable)");
  app.add_option("--seed", seed, "simulation seed (overrides the config)");
  app.add_option("--out", out, "output directory (overrides the config)");
  app.add_option("--workers", workers, "worker threads; never changes results")->check(CLI::Range(1u, 1024u));

  auto* solve = app.add_subcommand("solve", "solve for the mean field equilibrium");
  std::string policy = "mfe";
  auto* simulate = app.add_subcommand("simulate", "simulate the finite-N system");
  simulate->add_option("--policy", policy, "\"mfe\" or a solve output directory");
  auto* best = app.add_subcommand("best-response", "estimate the eps-Nash gap");
  best->add_option("--policy", policy, "\"mfe\" or a solve output directory");
  auto* exp = app.add_subcommand("export", "derived tables from a solve output directory");
  std::string from;
  exp->add_option("--from", from, "solve output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    std::vector<std::string> overrides = sets;
    if (seed) overrides.push_back("simulation.seed=" + std::to_string(*seed));
    if (out) overrides.push_back("output_dir=" + nlohmann::json(*out).dump());
    const RunConfig config =
        config_path.empty() ? parse_config_text("{}", overrides) : parse_config(config_path, overrides);
    if (*solve) return cmd_solve(config, workers);
    if (*simulate) return cmd_simulate(config, policy, workers);
    if (*best) return cmd_best_response(config, policy, workers);
    return cmd_export(config, from);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ConvergenceError& e) {
    std::cerr << "not converged: " << e.what() << '\n';
    return kExitNotConverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace mfa::cli
