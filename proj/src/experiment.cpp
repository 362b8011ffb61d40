#include "riskssp/experiment.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include "riskssp/mdp_json.hpp"

namespace riskssp {

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

std::string risk_file_stem(const RiskSpec& risk) {
  if (risk.kind == RiskKind::Expectation) return "expectation";
  return to_string(risk.kind) + "_" + format_number(risk.epsilon);
}

std::size_t effective_threads(std::size_t requested) {
  std::size_t n = requested;
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("RISKSSP_THREADS")) {
    std::size_t cap = 0;
    const std::string_view text(env);
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), cap);
    if (ec == std::errc() && ptr == text.data() + text.size() && cap > 0) n = std::min(n, cap);
  }
  return std::max<std::size_t>(n, 1);
}

std::pair<int, int> parse_grid_size(const std::string& text) {
  const auto x = text.find('x');
  int rows = 0;
  int cols = 0;
  bool ok = x != std::string::npos;
  if (ok) {
    auto r = std::from_chars(text.data(), text.data() + x, rows);
    auto c = std::from_chars(text.data() + x + 1, text.data() + text.size(), cols);
    ok = r.ec == std::errc() && r.ptr == text.data() + x && c.ec == std::errc() &&
         c.ptr == text.data() + text.size();
  }
  if (!ok || rows < 1 || cols < 1) {
    throw std::invalid_argument("grid size \"" + text + "\" is not of the form MxN");
  }
  return {rows, cols};
}

void validate_experiment_config(const ExperimentConfig& config) {
  if (config.risks.empty()) throw std::invalid_argument("at least one risk spec is required");
  for (const auto& r : config.risks) validate_risk_spec(r);
  if (config.rows < 1 || config.cols < 1 || config.rows * config.cols < 2) {
    throw std::invalid_argument("grid must have positive dimensions and at least 2 cells");
  }
  if (!(config.slip >= 0.0 && config.slip < 0.5)) throw std::invalid_argument("slip must be in [0, 0.5)");
  if (config.runs < 1) throw std::invalid_argument("runs must be positive");
  if (!(config.perturb_prob >= 0.0 && config.perturb_prob <= 1.0)) {
    throw std::invalid_argument("perturb_prob must be in [0, 1]");
  }
  if (!(config.solver.tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (config.solver.max_iter < 1) throw std::invalid_argument("max_iter must be positive");
  if (!(config.obstacle_cost >= 0.0) || !(config.step_cost >= 0.0)) {
    throw std::invalid_argument("costs must be non-negative");
  }
}

namespace {

template <typename T>
T get_field(const nlohmann::json& doc, const std::string& key) {
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw std::invalid_argument("$." + key + ": wrong type");
  }
}

}  // namespace

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc, ExperimentConfig base) {
  if (!doc.is_object()) throw std::invalid_argument("$: expected an object");
  ExperimentConfig c = std::move(base);
  for (const auto& [key, value] : doc.items()) {
    if (key == "grid") {
      std::tie(c.rows, c.cols) = parse_grid_size(get_field<std::string>(doc, key));
    } else if (key == "risks") {
      if (!value.is_array()) throw std::invalid_argument("$.risks: expected an array");
      c.risks.clear();
      for (std::size_t i = 0; i < value.size(); ++i) {
        if (!value[i].is_string()) {
          throw std::invalid_argument("$.risks[" + std::to_string(i) + "]: expected a string");
        }
        try {
          c.risks.push_back(parse_risk_spec(value[i].get<std::string>()));
        } catch (const std::invalid_argument& e) {
          throw std::invalid_argument("$.risks[" + std::to_string(i) + "]: " + e.what());
        }
      }
    } else if (key == "slip") {
      c.slip = get_field<double>(doc, key);
    } else if (key == "seed") {
      c.seed = get_field<std::uint64_t>(doc, key);
    } else if (key == "runs") {
      c.runs = get_field<std::size_t>(doc, key);
    } else if (key == "out") {
      c.out_dir = get_field<std::string>(doc, key);
    } else if (key == "tol") {
      c.solver.tol = get_field<double>(doc, key);
    } else if (key == "max_iter") {
      c.solver.max_iter = get_field<std::size_t>(doc, key);
    } else if (key == "gauss_seidel") {
      c.solver.gauss_seidel = get_field<bool>(doc, key);
    } else if (key == "obstacles") {
      c.obstacles = get_field<std::size_t>(doc, key);
    } else if (key == "uncertain") {
      c.uncertain = get_field<std::size_t>(doc, key);
    } else if (key == "obstacle_cost") {
      c.obstacle_cost = get_field<double>(doc, key);
    } else if (key == "step_cost") {
      c.step_cost = get_field<double>(doc, key);
    } else if (key == "cost_mode") {
      c.cost_mode = parse_cost_mode(get_field<std::string>(doc, key));
    } else if (key == "perturb_prob") {
      c.perturb_prob = get_field<double>(doc, key);
    } else if (key == "horizon") {
      c.horizon = get_field<std::size_t>(doc, key);
    } else if (key == "fixed_perturbation") {
      c.fixed_perturbation = get_field<bool>(doc, key);
    } else if (key == "stop_on_collision") {
      c.stop_on_collision = get_field<bool>(doc, key);
    } else if (key == "threads") {
      c.threads = get_field<std::size_t>(doc, key);
    } else {
      throw std::invalid_argument("$." + key + ": unknown key");
    }
  }
  return c;
}

nlohmann::ordered_json risk_to_json(const RiskSpec& risk) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(risk.kind);
  j["epsilon"] = risk.kind == RiskKind::Expectation ? 1.0 : risk.epsilon;
  j["label"] = risk_label(risk);
  return j;
}

nlohmann::ordered_json certificate_to_json(const Mdp& mdp, const PropernessCertificate& cert) {
  nlohmann::ordered_json j;
  j["tau"] = cert.tau;
  j["p"] = cert.p;
  j["c_bar"] = cert.c_bar;
  j["upper_bound"] = cert.upper_bound;
  j["scope"] = to_string(cert.scope);
  if (cert.scope == CertificateScope::ReferencePolicy) {
    nlohmann::ordered_json pol;
    for (StateId s = 0; s < mdp.num_states(); ++s) {
      if (s == mdp.goal()) continue;
      pol[mdp.state_name(s)] = mdp.action_name(cert.reference_policy[s]);
    }
    j["reference_policy"] = pol;
  }
  return j;
}

nlohmann::ordered_json solve_report_to_json(const Mdp& mdp, const RiskSpec& risk,
                                            const SolveReport& report) {
  nlohmann::ordered_json j;
  j["risk"] = risk_to_json(risk);
  j["status"] = to_string(report.status);
  j["iterations"] = report.iterations;
  j["residual"] = report.residual;
  j["initial_state"] = mdp.state_name(mdp.initial());
  j["J_start"] = report.J.empty() ? 0.0 : report.J[mdp.initial()];
  nlohmann::ordered_json values;
  nlohmann::ordered_json policy;
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    values[mdp.state_name(s)] = report.J[s];
    if (s != mdp.goal()) policy[mdp.state_name(s)] = mdp.action_name(report.policy[s]);
  }
  j["values"] = values;
  j["policy"] = policy;
  j["certificate"] = certificate_to_json(mdp, report.certificate);
  j["wall_time"] = report.wall_time;
  return j;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error(path.string() + ": cannot open for writing");
  f << text;
  if (!f) throw std::runtime_error(path.string() + ": write failed");
}

int status_exit_code(const std::vector<SolveStatus>& statuses) {
  bool diverged = false;
  bool stalled = false;
  for (auto s : statuses) {
    diverged |= s == SolveStatus::DivergenceDetected;
    stalled |= s == SolveStatus::MaxIterations;
  }
  if (diverged) return kExitDivergence;
  if (stalled) return kExitNotConverged;
  return kExitOk;
}

std::string csv_row(const GridWorldSpec& grid, const ExperimentRow& row, const Mdp& mdp) {
  std::ostringstream os;
  os << grid_label(grid) << ',' << to_string(row.risk.kind) << ','
     << format_number(row.risk.kind == RiskKind::Expectation ? 1.0 : row.risk.epsilon) << ','
     << format_number(row.solve.J[mdp.initial()]) << ',' << format_number(row.solve.wall_time)
     << ',' << grid.uncertain_obstacles.size() << ','
     << (row.robustness ? format_number(row.robustness->failure_rate) : std::string()) << ','
     << to_string(row.solve.status);
  return os.str();
}

void print_table(std::ostream& out, const GridWorldSpec& grid, const Mdp& mdp,
                 const std::vector<ExperimentRow>& rows) {
  const std::string tag = "(" + grid_label(grid) + ")_";
  std::size_t w = 0;
  for (const auto& r : rows) w = std::max(w, tag.size() + risk_label(r.risk).size());
  w = std::max<std::size_t>(w, 10) + 2;
  out << std::left << std::setw(static_cast<int>(w)) << "instance" << std::right
      << std::setw(12) << "J*(s0)" << std::setw(11) << "time[s]" << std::setw(7) << "#U.O."
      << std::setw(8) << "F.R." << "  status\n";
  for (const auto& r : rows) {
    std::ostringstream fr;
    if (r.robustness) {
      fr << std::fixed << std::setprecision(1) << 100.0 * r.robustness->failure_rate << '%';
    } else {
      fr << '-';
    }
    out << std::left << std::setw(static_cast<int>(w)) << tag + risk_label(r.risk) << std::right
        << std::fixed << std::setprecision(4) << std::setw(12) << r.solve.J[mdp.initial()]
        << std::setw(11) << r.solve.wall_time << std::setw(7) << grid.uncertain_obstacles.size()
        << std::setw(8) << fr.str() << "  " << to_string(r.solve.status) << '\n';
  }
  out << std::defaultfloat;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream& out,
                                std::ostream& err) {
  ExperimentResult result;
  auto fail = [&](int code, const std::string& message) {
    result.exit_code = code;
    result.message = message;
    err << "error: " << message << '\n';
    return result;
  };

  try {
    validate_experiment_config(config);
  } catch (const std::invalid_argument& e) {
    return fail(kExitInput, e.what());
  }

  GridGenOptions gen;
  gen.obstacle_count = config.obstacles;
  gen.uncertain_count = config.uncertain;
  gen.slip = config.slip;
  gen.obstacle_cost = config.obstacle_cost;
  gen.step_cost = config.step_cost;
  gen.cost_mode = config.cost_mode;
  std::optional<Mdp> mdp;
  try {
    result.grid = generate_gridworld(config.rows, config.cols, config.seed, gen);
    mdp.emplace(build_gridworld(result.grid));
  } catch (const ModelError& e) {
    return fail(kExitCertification, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(kExitInput, e.what());
  }

  const auto validation = validate_mdp(*mdp);
  if (!validation.ok()) return fail(kExitValidation, "invalid MDP: " + validation.summary());
  try {
    certify(*mdp);
  } catch (const CertificationError& e) {
    return fail(kExitCertification, e.what());
  }

  const std::size_t threads = effective_threads(config.threads);
  const std::size_t n = config.risks.size();
  const std::size_t solve_threads = std::min(threads, n);
  const std::size_t mc_threads = std::max<std::size_t>(1, threads / solve_threads);
  const std::uint64_t mc_seed = derive_seed(config.seed, 1);

  result.rows.resize(n);
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](std::size_t i) {
    try {
      ExperimentRow& row = result.rows[i];
      row.risk = config.risks[i];
      row.solve = value_iteration(*mdp, row.risk, config.solver);
      if (row.solve.status == SolveStatus::Converged) {
        RobustnessOptions ro;
        ro.runs = config.runs;
        ro.perturb_prob = config.perturb_prob;
        ro.seed = mc_seed;
        ro.horizon = config.horizon;
        ro.fixed_perturbation = config.fixed_perturbation;
        ro.stop_on_collision = config.stop_on_collision;
        ro.threads = mc_threads;
        row.robustness = robustness_eval(result.grid, row.solve.policy, ro);
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (solve_threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < solve_threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += solve_threads) work(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const CertificationError& e) {
      return fail(kExitCertification, e.what());
    } catch (const std::exception& e) {
      return fail(kExitInput, risk_label(config.risks[i]) + ": " + e.what());
    }
  }

  try {
    std::filesystem::create_directories(config.out_dir);
    std::string csv = std::string(kCsvHeader) + "\n";
    for (const auto& row : result.rows) {
      csv += csv_row(result.grid, row, *mdp) + "\n";
      auto report = solve_report_to_json(*mdp, row.risk, row.solve);
      report["grid"] = grid_label(result.grid);
      report["robustness"] =
          row.robustness ? robustness_to_json(*row.robustness) : nlohmann::ordered_json(nullptr);
      write_text(config.out_dir / (grid_label(result.grid) + "_" + risk_file_stem(row.risk) + ".json"),
                 report.dump(2) + "\n");
    }
    write_text(config.out_dir / "results.csv", csv);
    write_text(config.out_dir / "grid.json", gridworld_to_json(result.grid).dump(2) + "\n");
  } catch (const std::exception& e) {
    return fail(kExitInput, e.what());
  }

  print_table(out, result.grid, *mdp, result.rows);
  std::vector<SolveStatus> statuses;
  for (const auto& row : result.rows) statuses.push_back(row.solve.status);
  result.exit_code = status_exit_code(statuses);
  if (result.exit_code == kExitDivergence) {
    result.message = "divergence detected";
    err << "error: divergence detected (risk value exceeds the properness bound)\n";
  } else if (result.exit_code == kExitNotConverged) {
    result.message = "max iterations reached";
    err << "error: value iteration hit max_iter before reaching tol\n";
  }
  return result;
}

int solve_file(const std::filesystem::path& mdp_path, const RiskSpec& risk,
               const std::filesystem::path& out_path, const SolveOptions& opts,
               bool policy_iteration_method, std::ostream& out, std::ostream& err) {
  std::optional<Mdp> mdp;
  try {
    validate_risk_spec(risk);
    mdp.emplace(load_mdp(mdp_path));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  const auto validation = validate_mdp(*mdp);
  if (!validation.ok()) {
    err << "error: invalid MDP: " << validation.summary() << '\n';
    return kExitValidation;
  }
  SolveReport report;
  try {
    report = policy_iteration_method ? policy_iteration(*mdp, risk, opts)
                                     : value_iteration(*mdp, risk, opts);
  } catch (const CertificationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitCertification;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  try {
    if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
    write_text(out_path, solve_report_to_json(*mdp, risk, report).dump(2) + "\n");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  out << risk_label(risk) << ": J(" << mdp->state_name(mdp->initial())
      << ") = " << format_number(report.J[mdp->initial()]) << "  status " << to_string(report.status)
      << "  iterations " << report.iterations << '\n';
  const int code = status_exit_code({report.status});
  if (code == kExitDivergence) err << "error: divergence detected\n";
  if (code == kExitNotConverged) err << "error: max_iter reached before tol\n";
  return code;
}

}  // namespace riskssp
