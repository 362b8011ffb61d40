#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "riskssp/gridworld.hpp"
#include "riskssp/montecarlo.hpp"
#include "riskssp/risk.hpp"
#include "riskssp/solver.hpp"

namespace riskssp {

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitInput = 1,          ///< unreadable or malformed input, bad config
  kExitDivergence = 2,     ///< some solve returned DivergenceDetected
  kExitValidation = 3,     ///< model fails validate_mdp
  kExitCertification = 4,  ///< properness cannot be certified
  kExitNotConverged = 5,   ///< some solve hit max_iter
};

struct ExperimentConfig {
  int rows = 4;
  int cols = 5;
  std::vector<RiskSpec> risks;
  double slip = 0.1;
  std::uint64_t seed = 42;
  std::size_t runs = 100;
  std::filesystem::path out_dir = "results";
  SolveOptions solver;
  std::optional<std::size_t> obstacles;  ///< default floor(0.25 * M * N)
  std::optional<std::size_t> uncertain;  ///< default by grid size
  double obstacle_cost = 5.0;
  double step_cost = 1.0;
  CostMode cost_mode = CostMode::Fuel;
  double perturb_prob = 0.2;
  std::size_t horizon = 0;  ///< 0: 10 * (M + N)
  bool fixed_perturbation = false;
  bool stop_on_collision = true;
  std::size_t threads = 1;
};

/// Throws std::invalid_argument describing the first problem found.
void validate_experiment_config(const ExperimentConfig& config);

/// Parses "4x5" into (rows, cols).
std::pair<int, int> parse_grid_size(const std::string& text);

/**
 * Reads a JSON config whose keys mirror the `run` flags: grid ("4x5"), risks
 * (["cvar:0.3", ...]), slip, seed, runs, out, tol, max_iter, gauss_seidel,
 * obstacles, uncertain, obstacle_cost, step_cost, cost_mode, perturb_prob,
 * horizon, fixed_perturbation, stop_on_collision, threads. Unknown keys and
 * type errors throw std::invalid_argument with a "$.key" location.
 */
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc,
                                             ExperimentConfig base = {});

struct ExperimentRow {
  RiskSpec risk;
  SolveReport solve;
  std::optional<RobustnessReport> robustness;  ///< only for converged solves
};

struct ExperimentResult {
  int exit_code = kExitOk;
  std::string message;
  GridWorldSpec grid;
  std::vector<ExperimentRow> rows;
};

/**
 * Generates the grid world, certifies it, then for every risk spec runs value
 * iteration and the robustness evaluation of the resulting policy. Writes
 * results.csv, grid.json and one report per risk (e.g. 4x5_cvar_0.3.json)
 * into out_dir and prints a fixed-width summary to `out`. Errors go to `err`
 * and are reflected in the exit code.
 *
 * All risk specs share one Monte Carlo master seed, derive_seed(seed, 1), so
 * their policies face the same perturbed maps. Output files depend only on
 * the config, except for the wall-time fields.
 */
ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream& out,
                                std::ostream& err);

/// Loads an MDP document, solves it and writes the report JSON to out_path.
int solve_file(const std::filesystem::path& mdp_path, const RiskSpec& risk,
               const std::filesystem::path& out_path, const SolveOptions& opts,
               bool policy_iteration_method, std::ostream& out, std::ostream& err);

/// Report keyed by state name; the policy omits the goal.
nlohmann::ordered_json solve_report_to_json(const Mdp& mdp, const RiskSpec& risk,
                                            const SolveReport& report);
nlohmann::ordered_json certificate_to_json(const Mdp& mdp, const PropernessCertificate& cert);
nlohmann::ordered_json risk_to_json(const RiskSpec& risk);

/// Shortest decimal text that round-trips; "nan"/"inf" for non-finite values.
std::string format_number(double x);

inline constexpr const char* kCsvHeader =
    "grid,risk,eps,J_start,solve_time_s,n_uncertain_obstacles,failure_rate,status";

/// File name stem of a risk spec, e.g. "cvar_0.3".
std::string risk_file_stem(const RiskSpec& risk);

/// Cap from RISKSSP_THREADS applied to `requested` (0 means hardware threads).
std::size_t effective_threads(std::size_t requested);

}  // namespace riskssp
