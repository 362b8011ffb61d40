// riskssp: risk-averse stochastic shortest path experiments from the command line.

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "riskssp/experiment.hpp"
#include "riskssp/gridworld.hpp"
#include "riskssp/mdp_json.hpp"
#include "riskssp/solver.hpp"

using namespace riskssp;

namespace {

struct RunFlags {
  std::string config;
  std::string grid;
  std::vector<std::string> risks;
  double slip = 0.1;
  std::uint64_t seed = 42;
  std::size_t runs = 100;
  std::string out;
  double tol = 1e-9;
  std::size_t max_iter = 100000;
  bool gauss_seidel = false;
  std::size_t obstacles = 0;
  std::size_t uncertain = 0;
  double obstacle_cost = 5.0;
  double step_cost = 1.0;
  std::string cost_mode;
  double perturb_prob = 0.2;
  std::size_t horizon = 0;
  bool fixed_perturbation = false;
  bool continue_on_collision = false;
  std::size_t threads = 1;
};

int cmd_run(const RunFlags& f, const CLI::App& sub) {
  auto given = [&](const char* name) { return sub.count(name) > 0; };
  ExperimentConfig c;
  try {
    if (!f.config.empty()) {
      std::ifstream in(f.config);
      if (!in) throw std::invalid_argument(f.config + ": cannot open file");
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(in);
      } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(f.config + ": parse error at byte " + std::to_string(e.byte));
      }
      c = experiment_config_from_json(doc);
    }
    if (given("--grid")) std::tie(c.rows, c.cols) = parse_grid_size(f.grid);
    if (given("--risk")) {
      c.risks.clear();
      for (const auto& r : f.risks) c.risks.push_back(parse_risk_spec(r));
    }
    if (given("--slip")) c.slip = f.slip;
    if (given("--seed")) c.seed = f.seed;
    if (given("--runs")) c.runs = f.runs;
    if (given("--out")) c.out_dir = f.out;
    if (given("--tol")) c.solver.tol = f.tol;
    if (given("--max-iter")) c.solver.max_iter = f.max_iter;
    if (given("--gauss-seidel")) c.solver.gauss_seidel = f.gauss_seidel;
    if (given("--obstacles")) c.obstacles = f.obstacles;
    if (given("--uncertain")) c.uncertain = f.uncertain;
    if (given("--obstacle-cost")) c.obstacle_cost = f.obstacle_cost;
    if (given("--step-cost")) c.step_cost = f.step_cost;
    if (given("--cost-mode")) c.cost_mode = parse_cost_mode(f.cost_mode);
    if (given("--perturb-prob")) c.perturb_prob = f.perturb_prob;
    if (given("--horizon")) c.horizon = f.horizon;
    if (given("--fixed-perturbation")) c.fixed_perturbation = f.fixed_perturbation;
    if (given("--continue-on-collision")) c.stop_on_collision = !f.continue_on_collision;
    if (given("--threads")) c.threads = f.threads;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return run_experiment(c, std::cout, std::cerr).exit_code;
}

std::optional<Mdp> load_or_report(const std::string& path, int& code) {
  try {
    return load_mdp(path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    code = kExitInput;
    return std::nullopt;
  }
}

int cmd_certify(const std::string& path, const std::string& grid, std::uint64_t seed,
                double slip) {
  int code = kExitOk;
  std::optional<Mdp> mdp;
  if (!path.empty()) {
    mdp = load_or_report(path, code);
    if (!mdp) return code;
  } else {
    try {
      const auto [rows, cols] = parse_grid_size(grid.empty() ? "4x5" : grid);
      GridGenOptions gen;
      gen.slip = slip;
      mdp.emplace(build_gridworld_unchecked(generate_gridworld(rows, cols, seed, gen)));
    } catch (const ModelError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitCertification;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitInput;
    }
  }
  const auto report = validate_mdp(*mdp);
  if (!report.ok()) {
    std::cerr << "error: invalid MDP: " << report.summary() << '\n';
    return kExitValidation;
  }
  try {
    const auto cert = certify(*mdp);
    nlohmann::ordered_json j;
    j["states"] = mdp->num_states();
    j["actions"] = mdp->num_actions();
    j["certificate"] = certificate_to_json(*mdp, cert);
    std::cout << j.dump(2) << '\n';
  } catch (const CertificationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCertification;
  }
  return kExitOk;
}

int cmd_bruteforce(const std::string& path, const std::string& risk_text, std::size_t horizon,
                   bool greedy) {
  int code = kExitOk;
  RiskSpec risk;
  try {
    risk = parse_risk_spec(risk_text);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  auto mdp = load_or_report(path, code);
  if (!mdp) return code;
  const auto report = validate_mdp(*mdp);
  if (!report.ok()) {
    std::cerr << "error: invalid MDP: " << report.summary() << '\n';
    return kExitValidation;
  }
  try {
    Policy mu = almost_sure_reach(*mdp).policy;
    if (greedy) mu = value_iteration(*mdp, risk).policy;
    const auto tree = nested_risk_bruteforce(*mdp, risk, mu, horizon);
    ValueFunction dp(mdp->num_states(), 0.0);
    for (std::size_t k = 0; k < horizon; ++k) dp = policy_backup(*mdp, risk, mu, dp);
    double worst = 0.0;
    std::cout << "state  action  tree  dp  |diff|\n";
    for (StateId s = 0; s < mdp->num_states(); ++s) {
      const double diff = std::abs(tree[s] - dp[s]);
      worst = std::max(worst, diff);
      std::cout << mdp->state_name(s) << "  "
                << (s == mdp->goal() ? std::string("-") : mdp->action_name(mu[s])) << "  "
                << format_number(tree[s]) << "  " << format_number(dp[s]) << "  "
                << format_number(diff) << '\n';
    }
    std::cout << "max |tree - dp| = " << format_number(worst) << '\n';
  } catch (const CertificationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCertification;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Risk-averse stochastic shortest path solver"};
  app.require_subcommand(1);

  RunFlags rf;
  auto* run = app.add_subcommand("run", "grid-world experiment: build, certify, solve, evaluate");
  run->add_option("--config", rf.config, "JSON config; flags override its keys");
  run->add_option("--grid", rf.grid, "grid size MxN, e.g. 4x5");
  run->add_option("--risk", rf.risks, "risk spec kind[:eps]; repeatable")->take_all();
  run->add_option("--slip", rf.slip, "perpendicular slip probability");
  run->add_option("--seed", rf.seed, "master seed");
  run->add_option("--runs", rf.runs, "Monte Carlo episodes per risk spec");
  run->add_option("--out", rf.out, "output directory");
  run->add_option("--tol", rf.tol, "Bellman residual tolerance");
  run->add_option("--max-iter", rf.max_iter, "value iteration cap");
  run->add_flag("--gauss-seidel", rf.gauss_seidel, "in-place value iteration sweeps");
  run->add_option("--obstacles", rf.obstacles, "obstacle count");
  run->add_option("--uncertain", rf.uncertain, "uncertain obstacle count");
  run->add_option("--obstacle-cost", rf.obstacle_cost, "cost of leaving an obstacle cell");
  run->add_option("--step-cost", rf.step_cost, "cost of leaving a free cell");
  run->add_option("--cost-mode", rf.cost_mode, "fuel or min_time");
  run->add_option("--perturb-prob", rf.perturb_prob, "obstacle perturbation probability");
  run->add_option("--horizon", rf.horizon, "episode step limit (0: 10(M+N))");
  run->add_flag("--fixed-perturbation", rf.fixed_perturbation, "one perturbed map per batch");
  run->add_flag("--continue-on-collision", rf.continue_on_collision,
                "count collisions without ending the episode");
  run->add_option("--threads", rf.threads, "worker threads (0: all; capped by RISKSSP_THREADS)");

  std::string solve_path, solve_risk = "expectation", solve_out = "report.json", method = "vi";
  SolveOptions solve_opts;
  auto* solve = app.add_subcommand("solve", "solve an MDP JSON file");
  solve->add_option("mdp", solve_path, "MDP JSON file")->required();
  solve->add_option("--risk", solve_risk, "risk spec kind[:eps]");
  solve->add_option("--out", solve_out, "report path");
  solve->add_option("--tol", solve_opts.tol, "Bellman residual tolerance");
  solve->add_option("--max-iter", solve_opts.max_iter, "iteration cap");
  solve->add_flag("--gauss-seidel", solve_opts.gauss_seidel, "in-place value iteration sweeps");
  solve->add_option("--method", method, "vi or pi")->check(CLI::IsMember({"vi", "pi"}));

  std::string cert_path, cert_grid;
  std::uint64_t cert_seed = 42;
  double cert_slip = 0.1;
  auto* cert = app.add_subcommand("certify", "validate a model and print its properness certificate");
  cert->add_option("mdp", cert_path, "MDP JSON file (omit to use a generated grid)");
  cert->add_option("--grid", cert_grid, "grid size MxN");
  cert->add_option("--seed", cert_seed, "grid layout seed");
  cert->add_option("--slip", cert_slip, "perpendicular slip probability");

  std::string bf_path, bf_risk = "expectation";
  std::size_t bf_horizon = 3;
  bool bf_greedy = false;
  auto* bf = app.add_subcommand("bruteforce",
                                "compare tree-enumerated nested risk with repeated policy backups");
  bf->add_option("mdp", bf_path, "MDP JSON file (at most 8 states)")->required();
  bf->add_option("--risk", bf_risk, "risk spec kind[:eps]");
  bf->add_option("--horizon", bf_horizon, "number of stages (at most 8)");
  bf->add_flag("--greedy", bf_greedy, "use the value-iteration policy instead of the attractor policy");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  if (*run) return cmd_run(rf, *run);
  if (*solve) {
    RiskSpec risk;
    try {
      risk = parse_risk_spec(solve_risk);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitInput;
    }
    return solve_file(solve_path, risk, solve_out, solve_opts, method == "pi", std::cout,
                      std::cerr);
  }
  if (*cert) return cmd_certify(cert_path, cert_grid, cert_seed, cert_slip);
  if (*bf) return cmd_bruteforce(bf_path, bf_risk, bf_horizon, bf_greedy);
  return kExitInput;
}
