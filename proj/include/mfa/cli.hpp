#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfa/auction.hpp"
#include "mfa/bid_mdp.hpp"
#include "mfa/distribution.hpp"
#include "mfa/finite_sim.hpp"
#include "mfa/mfe_solver.hpp"

namespace mfa::cli {

/// Schema or constraint violation; key_path names the offending entry,
/// e.g. "model.beta".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key_path, const std::string& message)
      : std::runtime_error(key_path.empty() ? message : key_path + ": " + message),
        key_path_(std::move(key_path)) {}
  const std::string& key_path() const { return key_path_; }

 private:
  std::string key_path_;
};

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitNotConverged = 3,
  kExitRuntime = 4,
};

struct ModelSection {
  double beta = 0.9;
  int M = 10;
  std::size_t N = 50;
  double service_amount = 5.0;
  double cost_coefficient = 1.0;
  double cost_exponent = 2.0;
  double state_step = 0.01;
  std::size_t state_count = 2001;
  double bid_step = 0.15;
  std::size_t bid_count = 3001;
  DistSpec arrival = UniformSpec{0.0, 1.0};
  DistSpec regen = UniformSpec{0.0, 1.0};
  ValueBoundary value_boundary = ValueBoundary::kExtrapolate;
  friend bool operator==(const ModelSection&, const ModelSection&) = default;
};

struct SolverSection {
  double epsilon = 0.008;
  std::size_t max_outer = 100;
  double damping = 0.0;
  StationarySchedule schedule = StationarySchedule::kSingleStep;
  RiemannRule riemann = RiemannRule::kStepWeighted;
  double value_tol = 1e-4;
  ResidualMode value_residual = ResidualMode::kRelative;
  std::size_t value_max_iter = 10000;
  double stationary_tol = 1e-12;
  std::size_t stationary_max_iter = 100000;
  double rho0_slope = 0.001;
  friend bool operator==(const SolverSection&, const SolverSection&) = default;
};

struct SimulationSection {
  std::size_t horizon = 2000;
  double burn_in_fraction = 0.2;
  std::size_t replications = 200;
  std::uint64_t seed = 1;
  bool record_trace = false;
  bool value_estimate = false;
  bool eps_nash = false;
  bool chaos = false;
  double q0 = 0.0;
  std::size_t chaos_pairs = 10;
  std::size_t chaos_horizon = 30;
  /// Names: half, double, q25, q50, q75, max, mfe, or const:<bid>.
  std::vector<std::string> challengers = {"half", "double", "q25", "q50", "q75", "max"};
  friend bool operator==(const SimulationSection&, const SimulationSection&) = default;
};

struct RunConfig {
  ModelSection model;
  SolverSection solver;
  SimulationSection simulation;
  std::filesystem::path output_dir = "out";
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Parses JSON text. Missing keys take defaults; unknown keys are rejected.
/// Each override is "section.key=value" with value in JSON syntax (bare
/// words are read as strings) and takes precedence over the text.
RunConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides = {});
RunConfig parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Canonical JSON echo with every default spelled out.
std::string echo_config(const RunConfig& config);

ModelParams model_params(const RunConfig& config);
MfeOptions mfe_options(const RunConfig& config, unsigned workers);
SimConfig sim_config(const RunConfig& config, unsigned workers);
std::vector<BidPolicy> make_challengers(const RunConfig& config, const MfeSolution& mfe);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Writes config_effective.json and manifest.txt into dir. The manifest
/// lists the command, the seed and the hash of each artifact.
void write_manifest(const std::filesystem::path& dir, const std::string& command, const RunConfig& config,
                    const std::vector<std::string>& artifacts);

/// Writes every solution table into dir and returns the file names.
std::vector<std::string> write_solution(const std::filesystem::path& dir, const MfeSolution& sol);
/// Reads a directory written by write_solution.
MfeSolution load_solution(const std::filesystem::path& dir, const ModelParams& params);

int cmd_solve(const RunConfig& config, unsigned workers);
/// policy_source is "mfe" (solve in-process) or a solve output directory.
int cmd_simulate(const RunConfig& config, const std::string& policy_source, unsigned workers);
int cmd_best_response(const RunConfig& config, const std::string& policy_source, unsigned workers);
/// Derived tables (deciles, bid pmf, summary) from a solve output directory.
int cmd_export(const RunConfig& config, const std::filesystem::path& solve_dir);

/// Full command line entry; returns the process exit code.
int run(int argc, char** argv);

}  // namespace mfa::cli
