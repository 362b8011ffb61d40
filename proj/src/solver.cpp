#include "riskssp/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "riskssp/rng.hpp"

namespace riskssp {

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Converged: return "Converged";
    case SolveStatus::MaxIterations: return "MaxIterations";
    case SolveStatus::DivergenceDetected: return "DivergenceDetected";
  }
  return "unknown";
}

namespace {

struct Scratch {
  std::vector<double> values;
  std::vector<double> probs;
};

double q_impl(const Mdp& mdp, const SigmaFn& sigma, const ValueFunction& J, StateId s, ActionId a,
              Scratch& scratch) {
  scratch.values.clear();
  scratch.probs.clear();
  for (const auto& t : mdp.row(s, a)) {
    if (t.prob <= 0.0) continue;
    scratch.values.push_back(J[t.next]);
    scratch.probs.push_back(t.prob);
  }
  double risk = 0.0;
  try {
    risk = sigma(Distribution{scratch.values, scratch.probs});
  } catch (const std::exception& e) {
    throw SolverError("risk evaluation failed at (" + mdp.state_name(s) + ", " +
                      mdp.action_name(a) + "): " + e.what());
  }
  return mdp.cost(s, a) + risk;
}

// Minimum over actions; ties go to the lowest index.
std::pair<double, ActionId> best_action(const Mdp& mdp, const SigmaFn& sigma,
                                        const ValueFunction& J, StateId s, Scratch& scratch) {
  double best = q_impl(mdp, sigma, J, s, 0, scratch);
  ActionId arg = 0;
  for (ActionId a = 1; a < mdp.num_actions(); ++a) {
    const double q = q_impl(mdp, sigma, J, s, a, scratch);
    if (q < best) {
      best = q;
      arg = a;
    }
  }
  return {best, arg};
}

double sup_distance(const ValueFunction& a, const ValueFunction& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

bool exceeds(const ValueFunction& J, double limit) {
  return std::any_of(J.begin(), J.end(), [&](double v) { return !std::isfinite(v) || v > limit; });
}

void require_value_function(const Mdp& mdp, const ValueFunction& J) {
  if (J.size() != mdp.num_states()) {
    throw std::invalid_argument("value function size does not match the number of states");
  }
  if (J[mdp.goal()] != 0.0) throw std::invalid_argument("value function must be 0 at the goal");
}

void require_initial(const Mdp& mdp, const ValueFunction& J) {
  require_value_function(mdp, J);
  for (double v : J) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument("initial value function must be finite and non-negative");
    }
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Shared fixed-point loop for D (policy == nullptr) and D_mu.
struct FixedPoint {
  ValueFunction J;
  Policy policy;
  std::size_t iterations = 0;
  double residual = 0.0;
  SolveStatus status = SolveStatus::MaxIterations;
};

FixedPoint iterate(const Mdp& mdp, const SigmaFn& sigma, const Policy* mu, ValueFunction J,
                   const SolveOptions& opts, double limit) {
  const std::size_t n = mdp.num_states();
  Scratch scratch;

  // Jacobi backup of J: returns (backed-up values, greedy or fixed policy).
  auto backup = [&](const ValueFunction& src) {
    Backup b{ValueFunction(n, 0.0), Policy(n, 0)};
    for (StateId s = 0; s < n; ++s) {
      if (s == mdp.goal()) continue;
      if (mu) {
        b.policy[s] = (*mu)[s];
        b.J[s] = q_impl(mdp, sigma, src, s, (*mu)[s], scratch);
      } else {
        auto [v, a] = best_action(mdp, sigma, src, s, scratch);
        b.J[s] = v;
        b.policy[s] = a;
      }
    }
    return b;
  };

  FixedPoint out;
  auto finish = [&](ValueFunction final_j, SolveStatus status, std::size_t iterations) {
    Backup b = backup(final_j);
    out.residual = sup_distance(b.J, final_j);
    out.policy = std::move(b.policy);
    out.J = std::move(final_j);
    out.status = status;
    out.iterations = iterations;
    return out;
  };

  for (std::size_t k = 0; k < opts.max_iter; ++k) {
    if (opts.gauss_seidel) {
      double diff = 0.0;
      for (StateId s = 0; s < n; ++s) {
        if (s == mdp.goal()) continue;
        const double v = mu ? q_impl(mdp, sigma, J, s, (*mu)[s], scratch)
                            : best_action(mdp, sigma, J, s, scratch).first;
        diff = std::max(diff, std::abs(v - J[s]));
        J[s] = v;
      }
      if (exceeds(J, limit)) return finish(std::move(J), SolveStatus::DivergenceDetected, k + 1);
      if (diff <= opts.tol) {
        Backup b = backup(J);
        if (sup_distance(b.J, J) <= opts.tol) {
          return finish(std::move(b.J), SolveStatus::Converged, k + 2);
        }
      }
      continue;
    }

    Backup b = backup(J);
    const double residual = sup_distance(b.J, J);
    J = std::move(b.J);
    if (exceeds(J, limit)) return finish(std::move(J), SolveStatus::DivergenceDetected, k + 1);
    // J was D^k J0 with residual <= tol; its backup is at least as close.
    if (residual <= opts.tol) return finish(std::move(J), SolveStatus::Converged, k + 1);
  }
  return finish(std::move(J), SolveStatus::MaxIterations, opts.max_iter);
}

struct Prepared {
  PropernessCertificate cert;
  SigmaFn sigma;
  ValueFunction J0;
  double limit;
};

Prepared prepare(const Mdp& mdp, const RiskSpec& risk, const SolveOptions& opts) {
  require_valid(mdp);
  Prepared p;
  p.cert = certify(mdp);
  p.sigma = make_sigma(risk);
  p.J0 = opts.initial.value_or(ValueFunction(mdp.num_states(), 0.0));
  require_initial(mdp, p.J0);
  if (!(opts.tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  p.limit = opts.divergence_factor * p.cert.upper_bound;
  return p;
}

}  // namespace

void require_policy(const Mdp& mdp, const Policy& mu) {
  if (mu.size() != mdp.num_states()) {
    throw ModelError("policy size does not match the number of states");
  }
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    if (s != mdp.goal() && mu[s] >= mdp.num_actions()) {
      throw ModelError("policy action out of range at state " + mdp.state_name(s));
    }
  }
}

double q_value(const Mdp& mdp, const SigmaFn& sigma, const ValueFunction& J, StateId s,
               ActionId a) {
  Scratch scratch;
  return q_impl(mdp, sigma, J, s, a, scratch);
}

Backup bellman_backup(const Mdp& mdp, const SigmaFn& sigma, const ValueFunction& J) {
  require_value_function(mdp, J);
  Scratch scratch;
  Backup out{ValueFunction(mdp.num_states(), 0.0), Policy(mdp.num_states(), 0)};
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    if (s == mdp.goal()) continue;
    auto [v, a] = best_action(mdp, sigma, J, s, scratch);
    out.J[s] = v;
    out.policy[s] = a;
  }
  return out;
}

Backup bellman_backup(const Mdp& mdp, const RiskSpec& risk, const ValueFunction& J) {
  return bellman_backup(mdp, make_sigma(risk), J);
}

ValueFunction policy_backup(const Mdp& mdp, const SigmaFn& sigma, const Policy& mu,
                            const ValueFunction& J) {
  require_value_function(mdp, J);
  require_policy(mdp, mu);
  Scratch scratch;
  ValueFunction out(mdp.num_states(), 0.0);
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    if (s == mdp.goal()) continue;
    out[s] = q_impl(mdp, sigma, J, s, mu[s], scratch);
  }
  return out;
}

ValueFunction policy_backup(const Mdp& mdp, const RiskSpec& risk, const Policy& mu,
                            const ValueFunction& J) {
  return policy_backup(mdp, make_sigma(risk), mu, J);
}

SolveReport value_iteration(const Mdp& mdp, const RiskSpec& risk, const SolveOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  Prepared p = prepare(mdp, risk, opts);
  FixedPoint fp = iterate(mdp, p.sigma, nullptr, std::move(p.J0), opts, p.limit);

  SolveReport report;
  report.J = std::move(fp.J);
  report.policy = std::move(fp.policy);
  report.iterations = fp.iterations;
  report.residual = fp.residual;
  report.status = fp.status;
  report.certificate = std::move(p.cert);
  report.wall_time = seconds_since(t0);
  return report;
}

PolicyEvaluation policy_evaluation(const Mdp& mdp, const RiskSpec& risk, const Policy& mu,
                                   const SolveOptions& opts) {
  require_valid(mdp);
  require_policy(mdp, mu);
  Prepared p = prepare(mdp, risk, opts);
  FixedPoint fp = iterate(mdp, p.sigma, &mu, std::move(p.J0), opts, p.limit);
  return {std::move(fp.J), fp.iterations, fp.residual, fp.status};
}

SolveReport policy_iteration(const Mdp& mdp, const RiskSpec& risk, const SolveOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  Prepared p = prepare(mdp, risk, opts);
  const std::size_t n = mdp.num_states();

  Policy mu = opts.initial_policy ? *opts.initial_policy : almost_sure_reach(mdp).policy;
  require_policy(mdp, mu);
  mu[mdp.goal()] = 0;

  SolveOptions inner = opts;
  inner.tol = opts.tol * 0.1;
  inner.gauss_seidel = false;
  const double keep_margin = opts.tol * 0.1;

  SolveReport report;
  report.certificate = p.cert;
  std::set<Policy> seen{mu};
  const ValueFunction J0 = p.J0;
  ValueFunction warm = std::move(p.J0);
  Scratch scratch;

  // A policy that reaches the goal surely can still have an infinite risk
  // value. Until one evaluation succeeds, a divergent policy is replaced by
  // the greedy policy of D^k J0, with k doubling each time.
  bool evaluated = false;
  ValueFunction reseed = J0;
  std::size_t reseed_sweeps = 0, next_sweeps = 1;

  for (std::size_t round = 1; round <= opts.max_iter; ++round) {
    FixedPoint ev = iterate(mdp, p.sigma, &mu, warm, inner, p.limit);
    report.iterations = round;
    if (ev.status == SolveStatus::DivergenceDetected && !evaluated &&
        reseed_sweeps < opts.max_iter) {
      Backup b;
      for (; reseed_sweeps < next_sweeps && reseed_sweeps < opts.max_iter; ++reseed_sweeps) {
        b = bellman_backup(mdp, p.sigma, reseed);
        reseed = std::move(b.J);
        if (exceeds(reseed, p.limit)) break;
      }
      next_sweeps *= 2;
      if (!exceeds(reseed, p.limit)) {
        mu = std::move(b.policy);
        mu[mdp.goal()] = 0;
        seen = {mu};
        warm = J0;
        continue;
      }
      ev.J = reseed;
    }
    if (ev.status != SolveStatus::Converged) {
      report.J = std::move(ev.J);
      report.policy = mu;
      report.residual = bellman_residual(mdp, risk, report.J).residual;
      report.status = ev.status;
      report.wall_time = seconds_since(t0);
      return report;
    }

    Policy next = mu;
    for (StateId s = 0; s < n; ++s) {
      if (s == mdp.goal()) continue;
      const double incumbent = q_impl(mdp, p.sigma, ev.J, s, mu[s], scratch);
      auto [best, arg] = best_action(mdp, p.sigma, ev.J, s, scratch);
      if (best < incumbent - keep_margin) next[s] = arg;
    }

    if (next == mu) {
      report.J = std::move(ev.J);
      report.policy = mu;
      report.residual = bellman_residual(mdp, risk, report.J).residual;
      report.status =
          report.residual <= opts.tol ? SolveStatus::Converged : SolveStatus::MaxIterations;
      report.wall_time = seconds_since(t0);
      return report;
    }
    if (!seen.insert(next).second) {
      throw SolverError("cycle-detected: policy repeated after " + std::to_string(round) +
                        " improvement rounds");
    }
    evaluated = true;
    mu = std::move(next);
    warm = std::move(ev.J);
  }

  report.J = warm;
  report.policy = mu;
  report.residual = bellman_residual(mdp, risk, report.J).residual;
  report.status = SolveStatus::MaxIterations;
  report.wall_time = seconds_since(t0);
  return report;
}

ResidualReport bellman_residual(const Mdp& mdp, const RiskSpec& risk, const ValueFunction& J,
                                double tol) {
  Backup b = bellman_backup(mdp, risk, J);
  ResidualReport out;
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    out.residual = std::max(out.residual, std::abs(J[s] - b.J[s]));
    if (J[s] > b.J[s] + tol) out.feasible = false;
  }
  return out;
}

namespace {

double tree_value(const Mdp& mdp, const SigmaFn& sigma, const Policy& mu, StateId s,
                  std::size_t stages_left) {
  if (stages_left == 0) return 0.0;
  const ActionId a = s == mdp.goal() ? 0 : mu[s];
  std::vector<double> values;
  std::vector<double> probs;
  for (const auto& t : mdp.row(s, a)) {
    if (t.prob <= 0.0) continue;
    values.push_back(tree_value(mdp, sigma, mu, t.next, stages_left - 1));
    probs.push_back(t.prob);
  }
  return mdp.cost(s, a) + sigma(Distribution{values, probs});
}

}  // namespace

ValueFunction nested_risk_bruteforce(const Mdp& mdp, const RiskSpec& risk, const Policy& mu,
                                     std::size_t horizon) {
  constexpr std::size_t kMaxHorizon = 8;
  constexpr std::size_t kMaxStates = 8;
  if (horizon > kMaxHorizon || mdp.num_states() > kMaxStates) {
    throw SolverError("tree-too-large: outcome tree limited to horizon <= 8 and |S| <= 8");
  }
  require_valid(mdp);
  require_policy(mdp, mu);
  const SigmaFn sigma = make_sigma(risk);
  ValueFunction out(mdp.num_states(), 0.0);
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    out[s] = tree_value(mdp, sigma, mu, s, horizon);
  }
  return out;
}

PropertyReport monotonicity_probe(const Mdp& mdp, const SigmaFn& sigma, std::size_t trials,
                                  std::uint64_t rng_seed) {
  constexpr double kRel = 1e-9;
  require_valid(mdp);
  SplitMix64 rng(rng_seed);
  PropertyRecorder rec;
  const std::size_t n = mdp.num_states();

  for (std::size_t trial = 0; trial < trials; ++trial) {
    rec.add_trial();
    ValueFunction v(n, 0.0), w(n, 0.0);
    Policy mu(n, 0);
    for (StateId s = 0; s < n; ++s) {
      if (s == mdp.goal()) continue;
      v[s] = rng.uniform(0.0, 20.0);
      w[s] = v[s] + (rng.bernoulli(0.3) ? 0.0 : rng.uniform(0.0, 10.0));
      mu[s] = static_cast<ActionId>(rng.below(mdp.num_actions()));
    }
    const auto dv_mu = policy_backup(mdp, sigma, mu, v);
    const auto dw_mu = policy_backup(mdp, sigma, mu, w);
    const auto dv = bellman_backup(mdp, sigma, v).J;
    const auto dw = bellman_backup(mdp, sigma, w).J;
    for (StateId s = 0; s < n; ++s) {
      auto witness = [&] {
        return Witness{{}, {}, v, w, 0, 0, "state " + mdp.state_name(s)};
      };
      rec.check("policy-operator-monotone", dv_mu[s], dw_mu[s], false, kRel, witness);
      rec.check("bellman-operator-monotone", dv[s], dw[s], false, kRel, witness);
    }
  }
  return rec.take();
}

PropertyReport monotonicity_probe(const Mdp& mdp, const RiskSpec& risk, std::size_t trials,
                                  std::uint64_t rng_seed) {
  return monotonicity_probe(mdp, make_sigma(risk), trials, rng_seed);
}

}  // namespace riskssp
