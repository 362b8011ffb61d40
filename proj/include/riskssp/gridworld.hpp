#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "riskssp/mdp.hpp"
#include "riskssp/rng.hpp"

namespace riskssp {

/// Grid cell; x is the column (0 = left), y the row (0 = bottom).
struct Cell {
  int x = 0;
  int y = 0;
  auto operator<=>(const Cell&) const = default;
};

enum class CostMode { Fuel, MinTime };

/// Actions in index order.
enum class Move : ActionId { E = 0, W = 1, N = 2, S = 3 };

/**
 * Rover-navigation grid. Each action reaches the intended neighbour with
 * probability 1 - 2*slip and each perpendicular neighbour with probability
 * slip; mass that would leave the grid stays in place. Obstacles are ordinary
 * states that cost obstacle_cost per step taken from them.
 */
struct GridWorldSpec {
  int rows = 4;  ///< M
  int cols = 5;  ///< N
  std::vector<Cell> obstacles;
  std::vector<Cell> uncertain_obstacles;  ///< subset of obstacles subject to perturbation
  double slip = 0.1;
  double obstacle_cost = 5.0;
  double step_cost = 1.0;
  CostMode cost_mode = CostMode::Fuel;
  Cell start{0, 0};
  Cell goal{4, 3};
};

/// Throws std::invalid_argument on a malformed spec.
void validate_gridworld_spec(const GridWorldSpec& spec);

/// Row-major state index y * cols + x.
StateId cell_index(const GridWorldSpec& spec, Cell c);
Cell cell_at(const GridWorldSpec& spec, StateId s);

std::string grid_label(const GridWorldSpec& spec);  ///< "4x5"

/// Per-state obstacle flags.
std::vector<bool> obstacle_mask(const GridWorldSpec& spec);

/// Throws ModelError("unreachable-goal ...") if some cell has no policy that
/// reaches the goal with probability one.
Mdp build_gridworld(const GridWorldSpec& spec);

/// Same construction without the reachability check. Perturbing obstacles
/// never changes transitions, so callers that rebuild a checked base map may
/// skip it.
Mdp build_gridworld_unchecked(const GridWorldSpec& spec);

/// Uncertain-obstacle count by grid size: 2, 4, 8 for 4x5, 10x10, 10x20, else MN/25.
std::size_t default_uncertain_count(int rows, int cols);

struct GridGenOptions {
  std::optional<std::size_t> obstacle_count;   ///< default floor(0.25 * M * N)
  std::optional<std::size_t> uncertain_count;  ///< default default_uncertain_count()
  double slip = 0.1;
  double obstacle_cost = 5.0;
  double step_cost = 1.0;
  CostMode cost_mode = CostMode::Fuel;
};

/**
 * Seeded random layout with start at the bottom-left and goal at the
 * top-right. Layouts failing the reachability check are redrawn up to 100
 * times before ModelError is thrown.
 */
GridWorldSpec generate_gridworld(int rows, int cols, std::uint64_t seed,
                                 const GridGenOptions& opts = {});

/**
 * Each uncertain obstacle independently moves, with probability
 * perturb_prob, to a uniformly chosen in-grid 4-neighbour other than the start
 * and goal (it stays put when there is none).
 */
GridWorldSpec perturb_obstacles(const GridWorldSpec& spec, SplitMix64& rng,
                                double perturb_prob = 0.2);

nlohmann::ordered_json gridworld_to_json(const GridWorldSpec& spec);
GridWorldSpec gridworld_from_json(const nlohmann::json& doc);

std::string to_string(CostMode mode);
CostMode parse_cost_mode(const std::string& text);

}  // namespace riskssp
