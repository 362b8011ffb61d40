#include "riskssp/gridworld.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace riskssp {

namespace {

bool in_grid(const GridWorldSpec& spec, Cell c) {
  return c.x >= 0 && c.x < spec.cols && c.y >= 0 && c.y < spec.rows;
}

Cell step(Cell c, Move m) {
  switch (m) {
    case Move::E: return {c.x + 1, c.y};
    case Move::W: return {c.x - 1, c.y};
    case Move::N: return {c.x, c.y + 1};
    case Move::S: return {c.x, c.y - 1};
  }
  return c;
}

std::pair<Move, Move> perpendicular(Move m) {
  if (m == Move::E || m == Move::W) return {Move::N, Move::S};
  return {Move::E, Move::W};
}

std::string cell_name(Cell c) { return "(" + std::to_string(c.x) + "," + std::to_string(c.y) + ")"; }

void sort_unique(std::vector<Cell>& cells) {
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
}

}  // namespace

void validate_gridworld_spec(const GridWorldSpec& spec) {
  if (spec.rows < 1 || spec.cols < 1) throw std::invalid_argument("grid dimensions must be positive");
  if (spec.rows * spec.cols < 2) throw std::invalid_argument("grid needs at least 2 cells");
  if (!(spec.slip >= 0.0 && spec.slip < 0.5)) throw std::invalid_argument("slip must be in [0, 0.5)");
  if (!(spec.obstacle_cost >= 0.0) || !(spec.step_cost >= 0.0)) {
    throw std::invalid_argument("costs must be non-negative");
  }
  if (!in_grid(spec, spec.start) || !in_grid(spec, spec.goal)) {
    throw std::invalid_argument("start and goal must lie in the grid");
  }
  if (spec.start == spec.goal) throw std::invalid_argument("start equals goal");
  for (const auto& c : spec.obstacles) {
    if (!in_grid(spec, c)) throw std::invalid_argument("obstacle " + cell_name(c) + " outside grid");
    if (c == spec.start || c == spec.goal) {
      throw std::invalid_argument("obstacle " + cell_name(c) + " on start or goal");
    }
  }
  for (const auto& c : spec.uncertain_obstacles) {
    if (std::find(spec.obstacles.begin(), spec.obstacles.end(), c) == spec.obstacles.end()) {
      throw std::invalid_argument("uncertain obstacle " + cell_name(c) + " is not an obstacle");
    }
  }
}

StateId cell_index(const GridWorldSpec& spec, Cell c) {
  return static_cast<StateId>(c.y) * static_cast<StateId>(spec.cols) + static_cast<StateId>(c.x);
}

Cell cell_at(const GridWorldSpec& spec, StateId s) {
  return {static_cast<int>(s % static_cast<StateId>(spec.cols)),
          static_cast<int>(s / static_cast<StateId>(spec.cols))};
}

std::string grid_label(const GridWorldSpec& spec) {
  return std::to_string(spec.rows) + "x" + std::to_string(spec.cols);
}

std::vector<bool> obstacle_mask(const GridWorldSpec& spec) {
  std::vector<bool> mask(static_cast<std::size_t>(spec.rows * spec.cols), false);
  for (const auto& c : spec.obstacles) mask[cell_index(spec, c)] = true;
  return mask;
}

Mdp build_gridworld_unchecked(const GridWorldSpec& spec) {
  validate_gridworld_spec(spec);
  const std::size_t n = static_cast<std::size_t>(spec.rows * spec.cols);
  constexpr std::size_t kActions = 4;
  const StateId goal = cell_index(spec, spec.goal);
  const auto obstacle = obstacle_mask(spec);

  std::vector<std::string> names(n);
  for (StateId s = 0; s < n; ++s) names[s] = cell_name(cell_at(spec, s));

  std::vector<std::vector<Transition>> rows(n * kActions);
  std::vector<double> costs(n * kActions, 0.0);
  for (StateId s = 0; s < n; ++s) {
    const Cell here = cell_at(spec, s);
    for (ActionId a = 0; a < kActions; ++a) {
      auto& row = rows[s * kActions + a];
      if (s == goal) {
        row = {{goal, 1.0}};
        continue;
      }
      std::map<StateId, double> mass;
      auto add = [&](Move m, double p) {
        if (p <= 0.0) return;
        const Cell to = step(here, m);
        mass[in_grid(spec, to) ? cell_index(spec, to) : s] += p;
      };
      const Move move = static_cast<Move>(a);
      const auto [side1, side2] = perpendicular(move);
      add(move, 1.0 - 2.0 * spec.slip);
      add(side1, spec.slip);
      add(side2, spec.slip);
      for (const auto& [to, p] : mass) row.push_back({to, p});

      double c = obstacle[s] ? spec.obstacle_cost : spec.step_cost;
      if (spec.cost_mode == CostMode::MinTime) c = 1.0;
      costs[s * kActions + a] = c;
    }
  }
  return Mdp(std::move(names), {"E", "W", "N", "S"}, std::move(rows), std::move(costs),
             cell_index(spec, spec.start), goal);
}

Mdp build_gridworld(const GridWorldSpec& spec) {
  Mdp mdp = build_gridworld_unchecked(spec);
  const auto reach = almost_sure_reach(mdp);
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    if (!reach.in_attractor[s]) {
      throw ModelError("unreachable-goal: no policy reaches the goal surely from " +
                       mdp.state_name(s));
    }
  }
  return mdp;
}

std::size_t default_uncertain_count(int rows, int cols) {
  if (rows == 4 && cols == 5) return 2;
  if (rows == 10 && cols == 10) return 4;
  if (rows == 10 && cols == 20) return 8;
  return static_cast<std::size_t>(rows * cols / 25);
}

GridWorldSpec generate_gridworld(int rows, int cols, std::uint64_t seed,
                                 const GridGenOptions& opts) {
  GridWorldSpec spec;
  spec.rows = rows;
  spec.cols = cols;
  spec.slip = opts.slip;
  spec.obstacle_cost = opts.obstacle_cost;
  spec.step_cost = opts.step_cost;
  spec.cost_mode = opts.cost_mode;
  spec.start = {0, 0};
  spec.goal = {cols - 1, rows - 1};
  validate_gridworld_spec(spec);

  std::vector<Cell> free_cells;
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      const Cell c{x, y};
      if (c != spec.start && c != spec.goal) free_cells.push_back(c);
    }
  }
  const std::size_t count = std::min(
      opts.obstacle_count.value_or(static_cast<std::size_t>(rows * cols / 4)), free_cells.size());
  const std::size_t uncertain =
      std::min(opts.uncertain_count.value_or(default_uncertain_count(rows, cols)), count);

  SplitMix64 rng(seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto cells = free_cells;
    // Partial Fisher-Yates: the first `count` cells become obstacles.
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(cells.size() - i));
      std::swap(cells[i], cells[j]);
    }
    spec.uncertain_obstacles.assign(cells.begin(), cells.begin() + static_cast<long>(uncertain));
    spec.obstacles.assign(cells.begin(), cells.begin() + static_cast<long>(count));
    sort_unique(spec.obstacles);
    try {
      build_gridworld(spec);
      return spec;
    } catch (const ModelError&) {
      continue;
    }
  }
  throw ModelError("unreachable-goal: no admissible obstacle layout after 100 draws");
}

GridWorldSpec perturb_obstacles(const GridWorldSpec& spec, SplitMix64& rng, double perturb_prob) {
  GridWorldSpec out = spec;
  std::vector<Cell> fixed;
  for (const auto& c : spec.obstacles) {
    if (std::find(spec.uncertain_obstacles.begin(), spec.uncertain_obstacles.end(), c) ==
        spec.uncertain_obstacles.end()) {
      fixed.push_back(c);
    }
  }
  out.uncertain_obstacles.clear();
  for (const auto& c : spec.uncertain_obstacles) {
    Cell moved = c;
    if (rng.bernoulli(perturb_prob)) {
      std::vector<Cell> options;
      for (Move m : {Move::E, Move::W, Move::N, Move::S}) {
        const Cell to = step(c, m);
        if (in_grid(spec, to) && to != spec.start && to != spec.goal) options.push_back(to);
      }
      if (!options.empty()) moved = options[rng.below(options.size())];
    }
    out.uncertain_obstacles.push_back(moved);
  }
  out.obstacles = fixed;
  out.obstacles.insert(out.obstacles.end(), out.uncertain_obstacles.begin(),
                       out.uncertain_obstacles.end());
  sort_unique(out.obstacles);
  return out;
}

std::string to_string(CostMode mode) { return mode == CostMode::Fuel ? "fuel" : "min_time"; }

CostMode parse_cost_mode(const std::string& text) {
  if (text == "fuel") return CostMode::Fuel;
  if (text == "min_time") return CostMode::MinTime;
  throw std::invalid_argument("unknown cost mode \"" + text + "\" (expected fuel or min_time)");
}

namespace {

nlohmann::ordered_json cells_to_json(const std::vector<Cell>& cells) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& c : cells) arr.push_back({c.x, c.y});
  return arr;
}

Cell cell_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer()) {
    throw std::invalid_argument(path + ": expected [x, y]");
  }
  return {j[0].get<int>(), j[1].get<int>()};
}

std::vector<Cell> cells_from_json(const nlohmann::json& doc, const std::string& key) {
  std::vector<Cell> out;
  if (!doc.contains(key)) return out;
  const auto& arr = doc.at(key);
  if (!arr.is_array()) throw std::invalid_argument("$." + key + ": expected an array");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    out.push_back(cell_from_json(arr[i], "$." + key + "[" + std::to_string(i) + "]"));
  }
  return out;
}

}  // namespace

nlohmann::ordered_json gridworld_to_json(const GridWorldSpec& spec) {
  nlohmann::ordered_json j;
  j["rows"] = spec.rows;
  j["cols"] = spec.cols;
  j["obstacles"] = cells_to_json(spec.obstacles);
  j["uncertain_obstacles"] = cells_to_json(spec.uncertain_obstacles);
  j["slip"] = spec.slip;
  j["obstacle_cost"] = spec.obstacle_cost;
  j["step_cost"] = spec.step_cost;
  j["cost_mode"] = to_string(spec.cost_mode);
  j["start"] = {spec.start.x, spec.start.y};
  j["goal"] = {spec.goal.x, spec.goal.y};
  return j;
}

GridWorldSpec gridworld_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("$: expected an object");
  GridWorldSpec spec;
  spec.rows = doc.at("rows").get<int>();
  spec.cols = doc.at("cols").get<int>();
  spec.obstacles = cells_from_json(doc, "obstacles");
  spec.uncertain_obstacles = cells_from_json(doc, "uncertain_obstacles");
  spec.slip = doc.value("slip", spec.slip);
  spec.obstacle_cost = doc.value("obstacle_cost", spec.obstacle_cost);
  spec.step_cost = doc.value("step_cost", spec.step_cost);
  spec.cost_mode = parse_cost_mode(doc.value("cost_mode", std::string("fuel")));
  spec.start = doc.contains("start") ? cell_from_json(doc.at("start"), "$.start") : Cell{0, 0};
  spec.goal = doc.contains("goal") ? cell_from_json(doc.at("goal"), "$.goal")
                                   : Cell{spec.cols - 1, spec.rows - 1};
  sort_unique(spec.obstacles);
  validate_gridworld_spec(spec);
  return spec;
}

}  // namespace riskssp
