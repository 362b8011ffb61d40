#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "riskssp/mdp.hpp"
#include "riskssp/risk.hpp"

namespace riskssp {

/// J(s) per state, in cost units. J(goal) is always 0.
using ValueFunction = std::vector<double>;

/// Action per state; the goal entry is ignored.
using Policy = std::vector<ActionId>;

/// Solver failures other than certification ("cycle-detected",
/// "tree-too-large", evaluator errors with their (state, action) context).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SolveStatus { Converged, MaxIterations, DivergenceDetected };

std::string to_string(SolveStatus status);

struct SolveOptions {
  double tol = 1e-9;                ///< sup-norm Bellman residual target
  std::size_t max_iter = 100000;
  std::optional<ValueFunction> initial;  ///< J0; defaults to all zeros
  bool gauss_seidel = false;        ///< in-place sweeps; same fixed point
  double divergence_factor = 2.0;   ///< tripwire at factor * certificate bound
  std::optional<Policy> initial_policy;  ///< policy iteration only
};

struct SolveReport {
  ValueFunction J;
  Policy policy;
  std::size_t iterations = 0;
  double residual = 0.0;  ///< sup_s |J(s) - (DJ)(s)| of the returned J
  SolveStatus status = SolveStatus::MaxIterations;
  PropernessCertificate certificate;
  double wall_time = 0.0;  ///< seconds
};

struct Backup {
  ValueFunction J;
  Policy policy;
};

/// (DJ)(s) = min_a c(s,a) + sigma(J on supp T(.|s,a)); argmin ties go to the
/// lowest action index. (DJ)(goal) = 0.
Backup bellman_backup(const Mdp& mdp, const RiskSpec& risk, const ValueFunction& J);
Backup bellman_backup(const Mdp& mdp, const SigmaFn& sigma, const ValueFunction& J);

/// (D_mu J)(s) = c(s, mu(s)) + sigma(J on supp T(.|s, mu(s))).
ValueFunction policy_backup(const Mdp& mdp, const RiskSpec& risk, const Policy& mu,
                            const ValueFunction& J);
ValueFunction policy_backup(const Mdp& mdp, const SigmaFn& sigma, const Policy& mu,
                            const ValueFunction& J);

/// Q(s, a) = c(s,a) + sigma(J on supp T(.|s,a)).
double q_value(const Mdp& mdp, const SigmaFn& sigma, const ValueFunction& J, StateId s,
               ActionId a);

/**
 * Iterates J <- DJ from J0 (default 0) until sup |J^{k+1} - J^k| <= tol.
 * Jacobi sweeps by default, so the iterate sequence is exactly
 * J^{k+1} = D J^k. The report carries J^{k+1}, its own Bellman residual (no
 * larger than the last step, D being non-expansive) and the policy greedy
 * with respect to it. `iterations` counts applications of D.
 *
 * Stops with DivergenceDetected as soon as any J(s) exceeds
 * divergence_factor * certificate.upper_bound (or turns non-finite).
 * Throws CertificationError when the model cannot be certified.
 */
SolveReport value_iteration(const Mdp& mdp, const RiskSpec& risk, const SolveOptions& opts = {});

struct PolicyEvaluation {
  ValueFunction J;
  std::size_t iterations = 0;
  double residual = 0.0;  ///< sup |J - D_mu J|
  SolveStatus status = SolveStatus::MaxIterations;
};

/// Fixed point of D_mu by the same iteration with the minimization removed.
PolicyEvaluation policy_evaluation(const Mdp& mdp, const RiskSpec& risk, const Policy& mu,
                                   const SolveOptions& opts = {});

/**
 * Alternates policy evaluation and greedy improvement. The incumbent action is
 * kept unless another one improves its Q-value by more than tol/10, so the
 * sequence stops once no further improvement is found. Evaluations are warm
 * started from the previous policy's values.
 *
 * The initial policy is opts.initial_policy, else the attractor policy of
 * almost_sure_reach(), which is proper. Proper policies can still have an
 * infinite risk value; while no evaluation has succeeded, a divergent policy
 * is replaced by the greedy policy of D^k J0 for k = 1, 2, 4, ... Only if
 * those iterates trip the divergence limit is DivergenceDetected returned.
 * Throws SolverError("cycle-detected") if a policy repeats.
 */
SolveReport policy_iteration(const Mdp& mdp, const RiskSpec& risk, const SolveOptions& opts = {});

struct ResidualReport {
  double residual = 0.0;  ///< sup_s |J(s) - (DJ)(s)|
  bool feasible = true;   ///< J <= DJ + tol elementwise
};

ResidualReport bellman_residual(const Mdp& mdp, const RiskSpec& risk, const ValueFunction& J,
                                double tol = 1e-9);

/**
 * Nested risk rho(c_0 + rho(c_1 + ... )) of `mu` over `horizon` stages with
 * terminal value 0, evaluated by explicit recursion over the whole outcome
 * tree (no memoization). Limited to horizon <= 8 and |S| <= 8; throws
 * SolverError("tree-too-large") otherwise.
 */
ValueFunction nested_risk_bruteforce(const Mdp& mdp, const RiskSpec& risk, const Policy& mu,
                                     std::size_t horizon);

/**
 * Samples 0 <= v <= w (off-goal, zero at the goal) and a random policy, and
 * checks D_mu v <= D_mu w and Dv <= Dw elementwise within 1e-9.
 */
PropertyReport monotonicity_probe(const Mdp& mdp, const RiskSpec& risk, std::size_t trials,
                                  std::uint64_t rng_seed);
PropertyReport monotonicity_probe(const Mdp& mdp, const SigmaFn& sigma, std::size_t trials,
                                  std::uint64_t rng_seed);

/// Throws ModelError unless mu names a valid action for every non-goal state.
void require_policy(const Mdp& mdp, const Policy& mu);

}  // namespace riskssp
