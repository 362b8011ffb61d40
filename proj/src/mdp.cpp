#include "riskssp/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace riskssp {

Mdp::Mdp(std::vector<std::string> state_names, std::vector<std::string> action_names,
         std::vector<std::vector<Transition>> rows, std::vector<double> costs, StateId initial,
         StateId goal)
    : state_names_(std::move(state_names)),
      action_names_(std::move(action_names)),
      rows_(std::move(rows)),
      costs_(std::move(costs)),
      initial_(initial),
      goal_(goal) {
  const std::size_t pairs = state_names_.size() * action_names_.size();
  if (rows_.size() != pairs) {
    throw ModelError("transition table has " + std::to_string(rows_.size()) +
                     " rows, expected |S|*|A| = " + std::to_string(pairs));
  }
  if (costs_.size() != pairs) {
    throw ModelError("cost table has " + std::to_string(costs_.size()) +
                     " entries, expected |S|*|A| = " + std::to_string(pairs));
  }
  for (auto& r : rows_) {
    std::stable_sort(r.begin(), r.end(),
                     [](const Transition& a, const Transition& b) { return a.next < b.next; });
  }
}

std::optional<StateId> Mdp::find_state(const std::string& name) const {
  auto it = std::find(state_names_.begin(), state_names_.end(), name);
  if (it == state_names_.end()) return std::nullopt;
  return static_cast<StateId>(it - state_names_.begin());
}

std::optional<ActionId> Mdp::find_action(const std::string& name) const {
  auto it = std::find(action_names_.begin(), action_names_.end(), name);
  if (it == action_names_.end()) return std::nullopt;
  return static_cast<ActionId>(it - action_names_.begin());
}

double Mdp::max_cost() const {
  double m = 0.0;
  for (double c : costs_) m = std::max(m, c);
  return m;
}

std::string to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::TooFewStates: return "too few states";
    case ViolationKind::NoActions: return "no actions";
    case ViolationKind::BadInitialOrGoal: return "initial or goal out of range";
    case ViolationKind::InitialIsGoal: return "initial state equals goal";
    case ViolationKind::NegativeProbability: return "negative probability";
    case ViolationKind::BadSuccessor: return "successor out of range";
    case ViolationKind::RowSum: return "row sum != 1";
    case ViolationKind::NegativeCost: return "negative cost";
    case ViolationKind::NonFiniteValue: return "non-finite value";
    case ViolationKind::GoalCost: return "goal cost not zero";
    case ViolationKind::GoalNotAbsorbing: return "goal not absorbing";
  }
  return "unknown";
}

bool ValidationReport::has(ViolationKind kind) const {
  return std::any_of(violations.begin(), violations.end(),
                     [kind](const Violation& v) { return v.kind == kind; });
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) os << "; ";
    os << violations[i].message;
  }
  return os.str();
}

namespace {

std::string location(const Mdp& mdp, StateId s, ActionId a) {
  return "(" + mdp.state_name(s) + ", " + mdp.action_name(a) + ")";
}

}  // namespace

ValidationReport validate_mdp(const Mdp& mdp) {
  ValidationReport report;
  auto add = [&](ViolationKind kind, std::optional<StateId> s, std::optional<ActionId> a,
                 std::string msg) {
    report.violations.push_back({kind, s, a, std::move(msg)});
  };

  const std::size_t n = mdp.num_states();
  const std::size_t m = mdp.num_actions();
  if (n < 2) add(ViolationKind::TooFewStates, {}, {}, "need at least 2 states");
  if (m < 1) add(ViolationKind::NoActions, {}, {}, "need at least 1 action");

  const bool endpoints_ok = mdp.initial() < n && mdp.goal() < n;
  if (!endpoints_ok) {
    add(ViolationKind::BadInitialOrGoal, {}, {}, "initial or goal state index out of range");
  } else if (mdp.initial() == mdp.goal()) {
    add(ViolationKind::InitialIsGoal, mdp.initial(), {}, "initial state equals goal state");
  }

  for (StateId s = 0; s < n; ++s) {
    for (ActionId a = 0; a < m; ++a) {
      const std::string loc = location(mdp, s, a);
      double sum = 0.0;
      double goal_mass = 0.0;
      bool row_finite = true;
      for (const auto& t : mdp.row(s, a)) {
        if (!std::isfinite(t.prob)) {
          add(ViolationKind::NonFiniteValue, s, a, "non-finite probability at " + loc);
          row_finite = false;
          continue;
        }
        if (t.next >= n) {
          add(ViolationKind::BadSuccessor, s, a, "successor index out of range at " + loc);
          continue;
        }
        if (t.prob < 0.0) {
          add(ViolationKind::NegativeProbability, s, a, "negative probability at " + loc);
        }
        sum += t.prob;
        if (endpoints_ok && t.next == mdp.goal()) goal_mass += t.prob;
      }
      if (row_finite && std::abs(sum - 1.0) > kStochasticTol) {
        std::ostringstream os;
        os.precision(17);
        os << "row sum != 1 at " << loc << " (sum = " << sum << ")";
        add(ViolationKind::RowSum, s, a, os.str());
      }

      const double c = mdp.cost(s, a);
      if (!std::isfinite(c)) {
        add(ViolationKind::NonFiniteValue, s, a, "non-finite cost at " + loc);
      } else if (c < 0.0) {
        add(ViolationKind::NegativeCost, s, a, "negative cost at " + loc);
      }
      if (endpoints_ok && s == mdp.goal()) {
        if (c != 0.0) add(ViolationKind::GoalCost, s, a, "goal cost not zero at " + loc);
        if (std::abs(goal_mass - 1.0) > kStochasticTol) {
          add(ViolationKind::GoalNotAbsorbing, s, a, "goal not absorbing at " + loc);
        }
      }
    }
  }
  return report;
}

void require_valid(const Mdp& mdp) {
  auto report = validate_mdp(mdp);
  if (!report.ok()) throw ModelError("invalid MDP: " + report.summary());
}

namespace {

bool support_within(const std::vector<Transition>& row, const std::vector<bool>& set) {
  return std::all_of(row.begin(), row.end(),
                     [&](const Transition& t) { return t.prob <= 0.0 || set[t.next]; });
}

// One application of the "some action stays inside" operator restricted to
// the allowed action sets.
template <typename ActionsOf>
std::vector<bool> avoid_step(const Mdp& mdp, const std::vector<bool>& inside, ActionsOf actions_of) {
  std::vector<bool> next(mdp.num_states(), false);
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    if (s == mdp.goal() || !inside[s]) continue;
    for (ActionId a : actions_of(s)) {
      if (support_within(mdp.row(s, a), inside)) {
        next[s] = true;
        break;
      }
    }
  }
  return next;
}

bool any_set(const std::vector<bool>& v) { return std::find(v.begin(), v.end(), true) != v.end(); }

// tau and p for the given action sets; ActionsOf(s) yields the admissible actions.
template <typename ActionsOf>
PropernessCertificate certificate_for(const Mdp& mdp, ActionsOf actions_of) {
  const std::size_t n = mdp.num_states();
  std::vector<bool> surely_avoiding(n, true);
  surely_avoiding[mdp.goal()] = false;

  std::vector<double> u(n, 1.0);
  u[mdp.goal()] = 0.0;

  std::size_t tau = 0;
  while (any_set(surely_avoiding)) {
    if (tau > n) throw CertificationError("assumption-1 violated: tau would exceed |S|");
    auto next_avoid = avoid_step(mdp, surely_avoiding, actions_of);
    std::vector<double> next_u(n, 0.0);
    for (StateId s = 0; s < n; ++s) {
      if (s == mdp.goal()) continue;
      double best = 0.0;
      for (ActionId a : actions_of(s)) {
        double acc = 0.0;
        for (const auto& t : mdp.row(s, a)) acc += t.prob * u[t.next];
        best = std::max(best, acc);
      }
      if (best > u[s] + 1e-9) {
        throw std::logic_error("max-avoidance recursion is not monotone at state " +
                               mdp.state_name(s));
      }
      next_u[s] = best;
    }
    surely_avoiding = std::move(next_avoid);
    u = std::move(next_u);
    ++tau;
  }

  PropernessCertificate cert;
  cert.tau = tau;
  cert.p = *std::max_element(u.begin(), u.end());
  cert.c_bar = mdp.max_cost();
  if (!(cert.p < 1.0)) {
    throw CertificationError("assumption-1 violated: avoidance probability rounds to 1");
  }
  cert.upper_bound = static_cast<double>(cert.tau) * cert.c_bar / (1.0 - cert.p);
  return cert;
}

}  // namespace

std::vector<StateId> goal_avoidance_fixpoint(const Mdp& mdp) {
  const std::size_t n = mdp.num_states();
  std::vector<ActionId> all(mdp.num_actions());
  for (ActionId a = 0; a < all.size(); ++a) all[a] = a;
  auto actions_of = [&](StateId) -> const std::vector<ActionId>& { return all; };

  std::vector<bool> inside(n, true);
  inside[mdp.goal()] = false;
  for (;;) {
    auto next = avoid_step(mdp, inside, actions_of);
    if (next == inside) break;
    inside = std::move(next);
  }
  std::vector<StateId> out;
  for (StateId s = 0; s < n; ++s) {
    if (inside[s]) out.push_back(s);
  }
  return out;
}

PropernessCertificate properness_certificate(const Mdp& mdp) {
  require_valid(mdp);
  auto fix = goal_avoidance_fixpoint(mdp);
  if (!fix.empty()) {
    throw CertificationError("assumption-1 violated: state " + mdp.state_name(fix.front()) +
                             " can avoid the goal forever");
  }
  std::vector<ActionId> all(mdp.num_actions());
  for (ActionId a = 0; a < all.size(); ++a) all[a] = a;
  return certificate_for(mdp, [&](StateId) -> const std::vector<ActionId>& { return all; });
}

PropernessCertificate policy_certificate(const Mdp& mdp, const std::vector<ActionId>& policy) {
  require_valid(mdp);
  if (policy.size() != mdp.num_states()) {
    throw ModelError("policy size does not match the number of states");
  }
  std::vector<std::vector<ActionId>> single(mdp.num_states());
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    if (s == mdp.goal()) {
      single[s] = {0};
      continue;
    }
    if (policy[s] >= mdp.num_actions()) throw ModelError("policy action out of range");
    single[s] = {policy[s]};
  }
  auto actions_of = [&](StateId s) -> const std::vector<ActionId>& { return single[s]; };

  std::vector<bool> inside(mdp.num_states(), true);
  inside[mdp.goal()] = false;
  for (;;) {
    auto next = avoid_step(mdp, inside, actions_of);
    if (next == inside) break;
    inside = std::move(next);
  }
  if (any_set(inside)) throw CertificationError("reference policy is improper");

  auto cert = certificate_for(mdp, actions_of);
  cert.scope = CertificateScope::ReferencePolicy;
  cert.reference_policy = policy;
  return cert;
}

std::string to_string(CertificateScope scope) {
  return scope == CertificateScope::AllPolicies ? "all-policies" : "reference-policy";
}

bool AlmostSureReach::all_states() const {
  return std::all_of(in_attractor.begin(), in_attractor.end(), [](bool b) { return b; });
}

AlmostSureReach almost_sure_reach(const Mdp& mdp) {
  const std::size_t n = mdp.num_states();
  std::vector<bool> region(n, true);
  AlmostSureReach out;
  out.policy.assign(n, 0);

  for (;;) {
    // Positive-probability attractor of the goal inside `region`, built in
    // layers so that each chosen action points to an earlier layer.
    std::vector<bool> attractor(n, false);
    attractor[mdp.goal()] = true;
    for (;;) {
      std::vector<StateId> added;
      for (StateId s = 0; s < n; ++s) {
        if (!region[s] || attractor[s]) continue;
        double best_mass = 0.0;
        std::optional<ActionId> best;
        for (ActionId a = 0; a < mdp.num_actions(); ++a) {
          const auto& row = mdp.row(s, a);
          if (!support_within(row, region)) continue;
          double mass = 0.0;
          for (const auto& t : row) {
            if (attractor[t.next]) mass += t.prob;
          }
          if (mass > best_mass) {
            best_mass = mass;
            best = a;
          }
        }
        if (best) {
          out.policy[s] = *best;
          added.push_back(s);
        }
      }
      if (added.empty()) break;
      for (StateId s : added) attractor[s] = true;
    }
    if (attractor == region) break;
    region = std::move(attractor);
  }
  out.in_attractor = std::move(region);
  return out;
}

PropernessCertificate certify(const Mdp& mdp) {
  require_valid(mdp);
  auto fix = goal_avoidance_fixpoint(mdp);
  if (fix.empty()) return properness_certificate(mdp);

  auto reach = almost_sure_reach(mdp);
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    if (!reach.in_attractor[s]) {
      throw CertificationError("assumption-1 violated: no policy reaches the goal surely from " +
                               mdp.state_name(s));
    }
  }

  std::vector<bool> trap(mdp.num_states(), false);
  for (StateId s : fix) trap[s] = true;
  for (StateId s : fix) {
    for (ActionId a = 0; a < mdp.num_actions(); ++a) {
      if (support_within(mdp.row(s, a), trap) && !(mdp.cost(s, a) > 0.0)) {
        throw CertificationError("assumption-1 violated: zero-cost goal-avoiding action at (" +
                                 mdp.state_name(s) + ", " + mdp.action_name(a) + ")");
      }
    }
  }

  return policy_certificate(mdp, reach.policy);
}

}  // namespace riskssp
