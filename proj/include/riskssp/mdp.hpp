#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace riskssp {

using StateId = std::size_t;
using ActionId = std::size_t;

/// Absolute tolerance on transition row sums.
inline constexpr double kStochasticTol = 1e-12;

/// One entry of a sparse transition row.
struct Transition {
  StateId next;
  double prob;
};

/// Thrown for malformed models or inputs that cannot be ingested.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when neither the strict reachability assumption nor the standard
/// SSP conditions hold, so no solver may run on the model.
class CertificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/**
 * Finite transient MDP with a single cost-free absorbing goal state.
 *
 * States and actions are indexed contiguously from 0. The kernel is stored
 * row-wise per (state, action) with explicit support lists; every row is
 * expected to sum to one. The object does not enforce validity on
 * construction so that validate_mdp() can report every defect at once.
 * Solvers call require_valid() first.
 */
class Mdp {
 public:
  Mdp(std::vector<std::string> state_names, std::vector<std::string> action_names,
      std::vector<std::vector<Transition>> rows, std::vector<double> costs, StateId initial,
      StateId goal);

  std::size_t num_states() const { return state_names_.size(); }
  std::size_t num_actions() const { return action_names_.size(); }

  /// Support of T(.|s, a), sorted by next-state index.
  const std::vector<Transition>& row(StateId s, ActionId a) const {
    return rows_[s * num_actions() + a];
  }
  double cost(StateId s, ActionId a) const { return costs_[s * num_actions() + a]; }

  StateId initial() const { return initial_; }
  StateId goal() const { return goal_; }

  const std::vector<std::string>& state_names() const { return state_names_; }
  const std::vector<std::string>& action_names() const { return action_names_; }
  const std::string& state_name(StateId s) const { return state_names_.at(s); }
  const std::string& action_name(ActionId a) const { return action_names_.at(a); }

  std::optional<StateId> find_state(const std::string& name) const;
  std::optional<ActionId> find_action(const std::string& name) const;

  /// Largest immediate cost over all state-action pairs.
  double max_cost() const;

 private:
  std::vector<std::string> state_names_;
  std::vector<std::string> action_names_;
  std::vector<std::vector<Transition>> rows_;  // indexed s * |A| + a
  std::vector<double> costs_;                  // indexed s * |A| + a
  StateId initial_;
  StateId goal_;
};

enum class ViolationKind {
  TooFewStates,
  NoActions,
  BadInitialOrGoal,
  InitialIsGoal,
  NegativeProbability,
  BadSuccessor,
  RowSum,
  NegativeCost,
  NonFiniteValue,
  GoalCost,
  GoalNotAbsorbing,
};

std::string to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::optional<StateId> state;
  std::optional<ActionId> action;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(ViolationKind kind) const;
  std::string summary() const;
};

/// Lists every violated model invariant with its (state, action) location.
ValidationReport validate_mdp(const Mdp& mdp);

/// Throws ModelError with the validation summary if the model is invalid.
void require_valid(const Mdp& mdp);

/**
 * States from which some policy avoids the goal with certainty: the greatest
 * set C of non-goal states such that every s in C has an action whose support
 * lies inside C. The strict reachability assumption holds iff this is empty.
 */
std::vector<StateId> goal_avoidance_fixpoint(const Mdp& mdp);

enum class CertificateScope {
  AllPolicies,      ///< strict assumption: every policy reaches the goal
  ReferencePolicy,  ///< standard SSP conditions; bound taken on a proper reference policy
};

std::string to_string(CertificateScope scope);

/// Horizon tau, worst-case avoidance probability p and the total-cost bound
/// tau * c_bar / (1 - p).
struct PropernessCertificate {
  std::size_t tau = 0;
  double p = 0.0;
  double c_bar = 0.0;
  double upper_bound = 0.0;
  CertificateScope scope = CertificateScope::AllPolicies;
  /// Set for CertificateScope::ReferencePolicy: the proper policy the bound refers to.
  std::vector<ActionId> reference_policy;
};

/**
 * Certificate over all policies. u_0 = 1 off the goal,
 * u_{t+1}(s) = max_a sum_s' T(s'|s,a) u_t(s'); tau is the first t at which no
 * state avoids the goal with certainty, p = max_s u_tau(s).
 *
 * Throws CertificationError("assumption-1 violated") if the avoidance fixpoint
 * is non-empty.
 */
PropernessCertificate properness_certificate(const Mdp& mdp);

/// Same construction restricted to a single stationary policy.
PropernessCertificate policy_certificate(const Mdp& mdp, const std::vector<ActionId>& policy);

/**
 * States that can reach the goal with probability one under some policy
 * (almost-sure attractor), plus an attractor policy proper from each of them.
 * Entries of the policy outside the attractor are meaningless.
 */
struct AlmostSureReach {
  std::vector<bool> in_attractor;
  std::vector<ActionId> policy;
  bool all_states() const;
};

AlmostSureReach almost_sure_reach(const Mdp& mdp);

/**
 * Certifies the model for the solvers. Uses properness_certificate() when the
 * strict assumption holds. Otherwise falls back to the standard SSP
 * conditions (a proper policy exists from every state, and every action that
 * can keep the process inside the avoidance set has positive cost, so every
 * improper policy has infinite cost); the bound is then taken on the
 * attractor policy.
 *
 * Throws CertificationError when neither holds.
 */
PropernessCertificate certify(const Mdp& mdp);

}  // namespace riskssp
