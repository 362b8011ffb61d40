#include "riskssp/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <optional>
#include <thread>

namespace riskssp {

std::string to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::ReachedGoal: return "ReachedGoal";
    case Outcome::Collision: return "Collision";
    case Outcome::HorizonExceeded: return "HorizonExceeded";
  }
  return "?";
}

Trajectory simulate(const Mdp& mdp, const Policy& policy, StateId start, std::size_t horizon,
                    SplitMix64& rng, const SimulateOptions& opts) {
  if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  if (start >= mdp.num_states()) throw std::invalid_argument("start state out of range");
  auto collides = [&](StateId s) { return s < opts.collision.size() && opts.collision[s]; };

  Trajectory traj;
  traj.states.push_back(start);
  StateId s = start;
  if (s == mdp.goal()) {
    traj.outcome = Outcome::ReachedGoal;
    return traj;
  }
  for (std::size_t t = 0; t < horizon; ++t) {
    if (s >= policy.size() || policy[s] >= mdp.num_actions()) {
      throw SimulationError("undefined-policy-state: no action for state " + mdp.state_name(s));
    }
    const ActionId a = policy[s];
    traj.actions.push_back(a);
    traj.total_cost += mdp.cost(s, a);

    const auto& row = mdp.row(s, a);
    const double u = rng.uniform();
    double acc = 0.0;
    StateId next = row.back().next;
    for (const auto& tr : row) {
      acc += tr.prob;
      if (u < acc) {
        next = tr.next;
        break;
      }
    }
    s = next;
    traj.states.push_back(s);

    if (s == mdp.goal()) {
      traj.outcome = Outcome::ReachedGoal;
      return traj;
    }
    if (collides(s)) {
      traj.collided = true;
      if (opts.stop_on_collision) {
        traj.outcome = Outcome::Collision;
        return traj;
      }
    }
  }
  traj.outcome = Outcome::HorizonExceeded;
  return traj;
}

double pairwise_sum(const std::vector<double>& values) {
  auto rec = [&](auto&& self, std::size_t lo, std::size_t hi) -> double {
    if (hi - lo <= 8) {
      double s = 0.0;
      for (std::size_t i = lo; i < hi; ++i) s += values[i];
      return s;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    return self(self, lo, mid) + self(self, mid, hi);
  };
  return values.empty() ? 0.0 : rec(rec, 0, values.size());
}

namespace {

struct Episode {
  double cost = 0.0;
  Outcome outcome = Outcome::HorizonExceeded;
  bool collided = false;
};

}  // namespace

RobustnessReport robustness_eval(const GridWorldSpec& base, const Policy& policy,
                                 const RobustnessOptions& opts) {
  if (opts.runs == 0) throw std::invalid_argument("runs must be positive");
  if (!(opts.perturb_prob >= 0.0 && opts.perturb_prob <= 1.0)) {
    throw std::invalid_argument("perturbation probability must be in [0, 1]");
  }
  const Mdp base_mdp = build_gridworld_unchecked(base);
  require_policy(base_mdp, policy);
  const std::size_t horizon =
      opts.horizon > 0 ? opts.horizon : static_cast<std::size_t>(10 * (base.rows + base.cols));
  const StateId start = cell_index(base, base.start);

  std::optional<GridWorldSpec> fixed;
  if (opts.fixed_perturbation) {
    SplitMix64 rng(opts.seed);
    fixed = perturb_obstacles(base, rng, opts.perturb_prob);
  }

  std::vector<Episode> episodes(opts.runs);
  auto run_one = [&](std::size_t i) {
    SplitMix64 rng(derive_seed(opts.seed, i));
    const GridWorldSpec spec = fixed ? *fixed : perturb_obstacles(base, rng, opts.perturb_prob);
    // Only costs and collision flags change with the layout; transitions do not.
    const Mdp mdp = build_gridworld_unchecked(spec);
    SimulateOptions sim;
    sim.collision = obstacle_mask(spec);
    sim.stop_on_collision = opts.stop_on_collision;
    const Trajectory t = simulate(mdp, policy, start, horizon, rng, sim);
    episodes[i] = {t.total_cost, t.outcome, t.collided};
  };

  const std::size_t threads = std::clamp<std::size_t>(opts.threads, 1, opts.runs);
  if (threads == 1) {
    for (std::size_t i = 0; i < opts.runs; ++i) run_one(i);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < opts.runs; i += threads) run_one(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  RobustnessReport report;
  report.runs = opts.runs;
  report.seed = opts.seed;
  std::vector<double> costs;
  costs.reserve(opts.runs);
  for (const auto& e : episodes) {
    if (e.collided) ++report.failures;
    if (e.outcome == Outcome::ReachedGoal) ++report.reached_goal;
    if (e.outcome == Outcome::HorizonExceeded) ++report.horizon_exceeded;
    costs.push_back(e.cost);
  }
  report.failure_rate = static_cast<double>(report.failures) / static_cast<double>(report.runs);
  report.cost_mean = pairwise_sum(costs) / static_cast<double>(report.runs);
  std::sort(costs.begin(), costs.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(costs.size())));
  report.cost_p95 = costs[std::max<std::size_t>(rank, 1) - 1];
  return report;
}

nlohmann::ordered_json robustness_to_json(const RobustnessReport& report) {
  nlohmann::ordered_json j;
  j["runs"] = report.runs;
  j["failures"] = report.failures;
  j["failure_rate"] = report.failure_rate;
  j["reached_goal"] = report.reached_goal;
  j["horizon_exceeded"] = report.horizon_exceeded;
  j["cost_mean"] = report.cost_mean;
  j["cost_p95"] = report.cost_p95;
  j["seed"] = report.seed;
  return j;
}

}  // namespace riskssp
