// Independent reference implementations used only by the tests. They share no
// code with the library beyond the Mdp container.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "riskssp/gridworld.hpp"
#include "riskssp/mdp.hpp"

namespace oracle {

using riskssp::ActionId;
using riskssp::Mdp;
using riskssp::StateId;
using riskssp::Transition;

struct RandomMdpParams {
  std::size_t min_states = 3;
  std::size_t max_states = 10;
  std::size_t min_actions = 1;
  std::size_t max_actions = 3;
  std::size_t max_successors = 4;
  /// Every (s, a) gets a successor with a larger index, so all policies are proper.
  bool forward_edge = true;
  double max_cost = 1.0;
};

/// Goal is the last state, initial the first.
inline Mdp random_mdp(std::uint64_t seed, const RandomMdpParams& prm = {}) {
  std::mt19937_64 gen(seed);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(gen);
  };
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = pick(prm.min_states, prm.max_states);
  const std::size_t na = pick(prm.min_actions, prm.max_actions);
  const StateId goal = n - 1;
  std::vector<std::vector<Transition>> rows(n * na);
  std::vector<double> costs(n * na, 0.0);
  for (StateId s = 0; s < n; ++s) {
    for (ActionId a = 0; a < na; ++a) {
      auto& row = rows[s * na + a];
      if (s == goal) {
        row = {{goal, 1.0}};
        continue;
      }
      std::vector<StateId> succ;
      if (prm.forward_edge) succ.push_back(pick(s + 1, n - 1));
      const std::size_t extra = pick(prm.forward_edge ? 0 : 1, std::min(n, prm.max_successors) - (prm.forward_edge ? 1 : 0));
      for (std::size_t k = 0; k < extra; ++k) succ.push_back(pick(0, n - 1));
      std::sort(succ.begin(), succ.end());
      succ.erase(std::unique(succ.begin(), succ.end()), succ.end());
      std::vector<double> w(succ.size());
      double total = 0.0;
      for (auto& x : w) total += (x = 0.05 + unit(gen));
      for (std::size_t k = 0; k < succ.size(); ++k) row.push_back({succ[k], w[k] / total});
      costs[s * na + a] = prm.max_cost * unit(gen);
    }
  }
  std::vector<std::string> names(n), anames(na);
  for (StateId s = 0; s < n; ++s) names[s] = "s" + std::to_string(s);
  for (ActionId a = 0; a < na; ++a) anames[a] = "a" + std::to_string(a);
  return Mdp(std::move(names), std::move(anames), std::move(rows), std::move(costs), 0, goal);
}

/// Calls f(policy) for all |A|^|S| stationary deterministic policies.
inline void for_each_policy(const Mdp& mdp, const std::function<void(const std::vector<ActionId>&)>& f) {
  std::vector<ActionId> mu(mdp.num_states(), 0);
  while (true) {
    f(mu);
    std::size_t i = 0;
    while (i < mu.size() && ++mu[i] == mdp.num_actions()) mu[i++] = 0;
    if (i == mu.size()) return;
  }
}

/// States from which the goal is unreachable in the support graph of mu.
inline std::vector<bool> unreachable_under(const Mdp& mdp, const std::vector<ActionId>& mu) {
  const std::size_t n = mdp.num_states();
  std::vector<bool> reach(n, false);
  reach[mdp.goal()] = true;
  bool changed = true;
  while (changed) {
    changed = false;
    for (StateId s = 0; s < n; ++s) {
      if (reach[s]) continue;
      for (const auto& t : mdp.row(s, mu[s])) {
        if (t.prob > 0.0 && reach[t.next]) {
          reach[s] = true;
          changed = true;
          break;
        }
      }
    }
  }
  std::vector<bool> out(n);
  for (StateId s = 0; s < n; ++s) out[s] = !reach[s];
  return out;
}

/// Union over stationary policies of the states that never reach the goal.
inline std::vector<StateId> avoidable_states_by_enumeration(const Mdp& mdp) {
  std::vector<bool> any(mdp.num_states(), false);
  for_each_policy(mdp, [&](const std::vector<ActionId>& mu) {
    const auto u = unreachable_under(mdp, mu);
    for (StateId s = 0; s < u.size(); ++s) any[s] = any[s] || u[s];
  });
  std::vector<StateId> out;
  for (StateId s = 0; s < any.size(); ++s) {
    if (any[s]) out.push_back(s);
  }
  return out;
}

/// Probability of not being at the goal after following the decision rules
/// seq[0], seq[1], ... from `start`.
inline double avoid_probability(const Mdp& mdp, StateId start,
                                const std::vector<std::vector<ActionId>>& seq) {
  std::vector<long double> dist(mdp.num_states(), 0.0L);
  dist[start] = 1.0L;
  for (const auto& mu : seq) {
    std::vector<long double> next(mdp.num_states(), 0.0L);
    for (StateId s = 0; s < mdp.num_states(); ++s) {
      if (dist[s] == 0.0L) continue;
      if (s == mdp.goal()) {
        next[s] += dist[s];
        continue;
      }
      for (const auto& t : mdp.row(s, mu[s])) next[t.next] += dist[s] * t.prob;
    }
    dist = std::move(next);
  }
  return static_cast<double>(1.0L - dist[mdp.goal()]);
}

/// max over start states and over all sequences of `horizon` deterministic
/// decision rules of the avoidance probability. Exponential; small models only.
inline double max_avoidance_markov(const Mdp& mdp, std::size_t horizon) {
  std::vector<std::vector<ActionId>> all;
  for_each_policy(mdp, [&](const std::vector<ActionId>& mu) { all.push_back(mu); });
  double best = 0.0;
  std::vector<std::size_t> idx(horizon, 0);
  std::vector<std::vector<ActionId>> seq(horizon);
  while (true) {
    for (std::size_t t = 0; t < horizon; ++t) seq[t] = all[idx[t]];
    for (StateId s = 0; s < mdp.num_states(); ++s) {
      if (s != mdp.goal()) best = std::max(best, avoid_probability(mdp, s, seq));
    }
    std::size_t t = 0;
    while (t < horizon && ++idx[t] == all.size()) idx[t++] = 0;
    if (t == horizon) return best;
  }
}

/// Same maximum restricted to stationary policies.
inline double max_avoidance_stationary(const Mdp& mdp, std::size_t horizon) {
  double best = 0.0;
  for_each_policy(mdp, [&](const std::vector<ActionId>& mu) {
    std::vector<std::vector<ActionId>> seq(horizon, mu);
    for (StateId s = 0; s < mdp.num_states(); ++s) {
      if (s != mdp.goal()) best = std::max(best, avoid_probability(mdp, s, seq));
    }
  });
  return best;
}

/// Risk-neutral SSP value iteration in long double, Gauss-Seidel sweeps.
inline std::vector<double> classical_ssp_vi(const Mdp& mdp, long double tol = 1e-15L,
                                            std::size_t max_sweeps = 10'000'000) {
  const std::size_t n = mdp.num_states();
  std::vector<long double> J(n, 0.0L);
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    long double delta = 0.0L;
    for (StateId s = 0; s < n; ++s) {
      if (s == mdp.goal()) continue;
      long double best = std::numeric_limits<long double>::infinity();
      for (ActionId a = 0; a < mdp.num_actions(); ++a) {
        long double q = mdp.cost(s, a);
        for (const auto& t : mdp.row(s, a)) q += static_cast<long double>(t.prob) * J[t.next];
        best = std::min(best, q);
      }
      delta = std::max(delta, std::fabs(best - J[s]));
      J[s] = best;
    }
    if (delta < tol) break;
  }
  return {J.begin(), J.end()};
}

/// Solves (I - T_mu) J = c_mu on the non-goal states; J(goal) = 0.
inline std::vector<double> linear_policy_value(const Mdp& mdp, const std::vector<ActionId>& mu) {
  const std::size_t n = mdp.num_states();
  std::vector<int> pos(n, -1);
  int m = 0;
  for (StateId s = 0; s < n; ++s) {
    if (s != mdp.goal()) pos[s] = m++;
  }
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(m, m);
  Eigen::VectorXd b(m);
  for (StateId s = 0; s < n; ++s) {
    if (pos[s] < 0) continue;
    b(pos[s]) = mdp.cost(s, mu[s]);
    for (const auto& t : mdp.row(s, mu[s])) {
      if (pos[t.next] >= 0) A(pos[s], pos[t.next]) -= t.prob;
    }
  }
  Eigen::VectorXd x = A.fullPivLu().solve(b);
  std::vector<double> J(n, 0.0);
  for (StateId s = 0; s < n; ++s) {
    if (pos[s] >= 0) J[s] = x(pos[s]);
  }
  return J;
}

inline long double sum_ld(const std::vector<double>& values, const std::vector<double>& weights) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < values.size(); ++i) {
    acc += static_cast<long double>(values[i]) * static_cast<long double>(weights[i]);
  }
  return acc;
}

/// EVaR by brute force: the objective on `points` log-spaced zeta in
/// [1e-8, 1e8], together with the zeta -> infinity limit (the ess-sup).
/// expm1/log1p keep the small-zeta end accurate.
inline double evar_dense_grid(const std::vector<double>& v, const std::vector<double>& p, double eps,
                              std::size_t points = 1'000'000) {
  if (eps >= 1.0) return static_cast<double>(sum_ld(v, p));
  double vmax = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (p[i] > 0.0) vmax = std::max(vmax, v[i]);
  }
  std::vector<double> gap, w;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (p[i] > 0.0 && v[i] < vmax) {
      gap.push_back(v[i] - vmax);
      w.push_back(p[i]);
    }
  }
  double best = vmax;
  const double lo = std::log(1e-8);
  const double hi = std::log(1e8);
  const double log_eps = std::log(eps);
  for (std::size_t k = 0; k < points; ++k) {
    const double z = std::exp(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1));
    double m1 = 0.0;  // MGF minus one
    for (std::size_t i = 0; i < gap.size(); ++i) m1 += w[i] * std::expm1(z * gap[i]);
    best = std::min(best, vmax + (std::log1p(m1) - log_eps) / z);
  }
  return best;
}

/// Deterministic (slip = 0) shortest path cost from start to goal: each move
/// costs the cost of the cell it leaves.
inline double grid_dijkstra(const riskssp::GridWorldSpec& spec) {
  const int n = spec.rows * spec.cols;
  auto id = [&](int x, int y) { return y * spec.cols + x; };
  std::vector<bool> obstacle(n, false);
  for (const auto& c : spec.obstacles) obstacle[id(c.x, c.y)] = true;
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[id(spec.start.x, spec.start.y)] = 0.0;
  pq.push({0.0, id(spec.start.x, spec.start.y)});
  const int goal = id(spec.goal.x, spec.goal.y);
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u] || u == goal) continue;
    const int x = u % spec.cols;
    const int y = u / spec.cols;
    double c = obstacle[u] ? spec.obstacle_cost : spec.step_cost;
    if (spec.cost_mode == riskssp::CostMode::MinTime) c = 1.0;
    const int dx[] = {1, -1, 0, 0};
    const int dy[] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const int nx = x + dx[k];
      const int ny = y + dy[k];
      if (nx < 0 || ny < 0 || nx >= spec.cols || ny >= spec.rows) continue;
      const int v = id(nx, ny);
      if (d + c < dist[v]) {
        dist[v] = d + c;
        pq.push({dist[v], v});
      }
    }
  }
  return dist[goal];
}

/// Random finite distribution with k atoms; every fourth call uses integer
/// values so ties occur.
struct RandomDist {
  std::vector<double> values;
  std::vector<double> probs;
};

inline RandomDist random_distribution(std::mt19937_64& gen, std::size_t max_atoms = 8,
                                      double lo = -10.0, double hi = 10.0, bool integer = false) {
  std::uniform_int_distribution<std::size_t> k_dist(1, max_atoms);
  std::uniform_real_distribution<double> val(lo, hi);
  std::uniform_real_distribution<double> w(0.01, 1.0);
  const std::size_t k = k_dist(gen);
  RandomDist d;
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    d.values.push_back(integer ? std::round(val(gen)) : val(gen));
    d.probs.push_back(w(gen));
    total += d.probs.back();
  }
  for (auto& p : d.probs) p /= total;
  return d;
}

}  // namespace oracle
