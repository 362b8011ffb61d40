#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "riskssp/gridworld.hpp"
#include "riskssp/mdp.hpp"
#include "riskssp/rng.hpp"
#include "riskssp/solver.hpp"

namespace riskssp {

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Outcome { ReachedGoal, Collision, HorizonExceeded };

std::string to_string(Outcome outcome);

struct Trajectory {
  std::vector<StateId> states;    ///< s_0 .. s_T
  std::vector<ActionId> actions;  ///< a_0 .. a_{T-1}
  double total_cost = 0.0;        ///< sum of c(s_t, a_t)
  Outcome outcome = Outcome::HorizonExceeded;
  bool collided = false;  ///< entered an obstacle at least once
};

struct SimulateOptions {
  /// Per-state collision flags (empty: no collisions).
  std::vector<bool> collision;
  /// End the episode on the first collision. When false the episode runs on
  /// and a collision only sets `collided`.
  bool stop_on_collision = true;
};

/**
 * Samples s_{t+1} ~ T(.|s_t, mu(s_t)) for at most `horizon` steps. Throws
 * SimulationError("undefined-policy-state ...") when the policy has no valid
 * action for a visited state.
 */
Trajectory simulate(const Mdp& mdp, const Policy& policy, StateId start, std::size_t horizon,
                    SplitMix64& rng, const SimulateOptions& opts = {});

struct RobustnessOptions {
  std::size_t runs = 100;
  double perturb_prob = 0.2;
  std::uint64_t seed = 0;
  std::size_t horizon = 0;           ///< 0: 10 * (rows + cols)
  bool fixed_perturbation = false;   ///< one perturbed map for the whole batch
  bool stop_on_collision = true;
  std::size_t threads = 1;
};

struct RobustnessReport {
  std::size_t runs = 0;
  std::size_t failures = 0;          ///< episodes with a collision
  std::size_t reached_goal = 0;
  std::size_t horizon_exceeded = 0;
  double failure_rate = 0.0;         ///< failures / runs
  double cost_mean = 0.0;
  double cost_p95 = 0.0;             ///< nearest-rank
  std::uint64_t seed = 0;
};

/**
 * Runs `runs` episodes of `policy` (solved on the unperturbed map) from the
 * start cell. Episode i draws everything from SplitMix64(derive_seed(seed, i)):
 * first the perturbed obstacle layout, then the trajectory. With
 * fixed_perturbation the layout is drawn once from SplitMix64(seed) instead.
 * Results do not depend on the thread count.
 */
RobustnessReport robustness_eval(const GridWorldSpec& base, const Policy& policy,
                                 const RobustnessOptions& opts);

nlohmann::ordered_json robustness_to_json(const RobustnessReport& report);

/// Pairwise (cascade) summation, independent of how the values were produced.
double pairwise_sum(const std::vector<double>& values);

}  // namespace riskssp
