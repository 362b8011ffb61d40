#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <random>

#include "oracles.hpp"
#include "riskssp/gridworld.hpp"
#include "riskssp/solver.hpp"

using namespace riskssp;

namespace {

const std::vector<RiskSpec> kAllRisks = {RiskSpec::expectation(), RiskSpec::cvar(0.3),
                                         RiskSpec::cvar(0.7), RiskSpec::evar(0.3),
                                         RiskSpec::evar(0.7)};

GridWorldSpec open_grid(int rows, int cols, double slip) {
  GridWorldSpec g;
  g.rows = rows;
  g.cols = cols;
  g.slip = slip;
  g.goal = {cols - 1, rows - 1};
  return g;
}

double row_prob(const Mdp& m, StateId s, ActionId a, StateId to) {
  for (const auto& t : m.row(s, a)) {
    if (t.next == to) return t.prob;
  }
  return 0.0;
}

}  // namespace

TEST_SUITE("construction") {
  TEST_CASE("default 4x5 map") {
    const auto spec = generate_gridworld(4, 5, 42);
    const Mdp m = build_gridworld(spec);
    CHECK(m.num_states() == 20);
    CHECK(m.num_actions() == 4);
    CHECK(m.action_names() == std::vector<std::string>{"E", "W", "N", "S"});
    CHECK(m.initial() == 0);
    CHECK(m.goal() == 19);
    CHECK(m.state_name(0) == "(0,0)");
    CHECK(m.state_name(19) == "(4,3)");
    CHECK(validate_mdp(m).ok());
    const auto cert = certify(m);
    CHECK(cert.upper_bound > 0.0);
    CHECK(std::isfinite(cert.upper_bound));
    CHECK(grid_label(spec) == "4x5");
  }

  TEST_CASE("slip probabilities in the interior") {
    const Mdp m = build_gridworld(open_grid(3, 3, 0.1));
    const GridWorldSpec g = open_grid(3, 3, 0.1);
    const StateId c = cell_index(g, {1, 1});
    const auto E = static_cast<ActionId>(Move::E);
    CHECK(row_prob(m, c, E, cell_index(g, {2, 1})) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(row_prob(m, c, E, cell_index(g, {1, 2})) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(row_prob(m, c, E, cell_index(g, {1, 0})) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(row_prob(m, c, E, c) == 0.0);
  }

  TEST_CASE("mass leaving the grid stays put") {
    const GridWorldSpec g = open_grid(3, 3, 0.1);
    const Mdp m = build_gridworld(g);
    const StateId corner = cell_index(g, {0, 0});
    const auto W = static_cast<ActionId>(Move::W);
    // West and south slip both leave the grid from the bottom-left corner.
    CHECK(row_prob(m, corner, W, corner) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(row_prob(m, corner, W, cell_index(g, {0, 1})) == doctest::Approx(0.1).epsilon(1e-15));
  }

  TEST_CASE("every row is stochastic") {
    for (auto [rows, cols] : {std::pair{4, 5}, {1, 2}, {2, 1}, {10, 10}}) {
      auto g = open_grid(rows, cols, 0.2);
      const Mdp m = build_gridworld(g);
      for (StateId s = 0; s < m.num_states(); ++s) {
        for (ActionId a = 0; a < m.num_actions(); ++a) {
          double sum = 0.0;
          for (const auto& t : m.row(s, a)) {
            CHECK(t.prob > 0.0);
            sum += t.prob;
          }
          CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
      }
    }
  }

  TEST_CASE("goal is absorbing and free") {
    const auto g = open_grid(3, 4, 0.1);
    const Mdp m = build_gridworld(g);
    for (ActionId a = 0; a < 4; ++a) {
      CHECK(m.cost(m.goal(), a) == 0.0);
      REQUIRE(m.row(m.goal(), a).size() == 1);
      CHECK(m.row(m.goal(), a)[0].next == m.goal());
    }
  }

  TEST_CASE("costs follow the obstacle layout and cost mode") {
    auto g = open_grid(3, 3, 0.1);
    g.obstacles = {{1, 1}};
    g.obstacle_cost = 7.0;
    g.step_cost = 2.0;
    Mdp m = build_gridworld(g);
    CHECK(m.cost(cell_index(g, {1, 1}), 0) == 7.0);
    CHECK(m.cost(cell_index(g, {0, 1}), 0) == 2.0);
    g.cost_mode = CostMode::MinTime;
    m = build_gridworld(g);
    CHECK(m.cost(cell_index(g, {1, 1}), 0) == 1.0);
    CHECK(m.cost(cell_index(g, {0, 1}), 0) == 1.0);
  }

  TEST_CASE("invalid specs are rejected") {
    auto g = open_grid(3, 3, 0.5);
    CHECK_THROWS_AS(build_gridworld(g), std::invalid_argument);
    g = open_grid(3, 3, 0.1);
    g.obstacles = {{2, 2}};
    CHECK_THROWS_AS(build_gridworld(g), std::invalid_argument);
    g.obstacles = {{5, 0}};
    CHECK_THROWS_AS(build_gridworld(g), std::invalid_argument);
    g.obstacles = {};
    g.uncertain_obstacles = {{1, 1}};
    CHECK_THROWS_AS(build_gridworld(g), std::invalid_argument);
    CHECK_THROWS_AS(build_gridworld(open_grid(1, 1, 0.0)), std::invalid_argument);
  }

  TEST_CASE("cell indexing round trips") {
    const auto g = open_grid(4, 7, 0.1);
    for (StateId s = 0; s < 28; ++s) CHECK(cell_index(g, cell_at(g, s)) == s);
    CHECK(cell_index(g, {3, 2}) == 17);
  }
}

TEST_SUITE("deterministic limits") {
  TEST_CASE("open grid without slip costs the Manhattan distance") {
    for (auto [rows, cols] : {std::pair{4, 5}, {1, 2}, {3, 7}}) {
      auto g = open_grid(rows, cols, 0.0);
      g.step_cost = 1.5;
      const Mdp m = build_gridworld(g);
      for (const auto& r : kAllRisks) {
        const auto rep = value_iteration(m, r);
        CAPTURE(risk_label(r));
        REQUIRE(rep.status == SolveStatus::Converged);
        for (StateId s = 0; s < m.num_states(); ++s) {
          const Cell c = cell_at(g, s);
          const double manhattan = (g.goal.x - c.x) + (g.goal.y - c.y);
          CHECK(rep.J[s] == doctest::Approx(manhattan * 1.5).epsilon(1e-12));
        }
      }
    }
  }

  TEST_CASE("obstacles without slip match a shortest-path oracle") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      GridGenOptions o;
      o.slip = 0.0;
      const auto g = generate_gridworld(5, 6, seed, o);
      const Mdp m = build_gridworld(g);
      const double ref = oracle::grid_dijkstra(g);
      for (const auto& r : {RiskSpec::expectation(), RiskSpec::cvar(0.3), RiskSpec::evar(0.3)}) {
        const auto rep = value_iteration(m, r);
        REQUIRE(rep.status == SolveStatus::Converged);
        CHECK(rep.J[m.initial()] == doctest::Approx(ref).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("two-cell grid") {
    CHECK(value_iteration(build_gridworld(open_grid(1, 2, 0.0)), RiskSpec::cvar(0.3)).J[0] == 1.0);

    const Mdp m = build_gridworld(open_grid(1, 2, 0.1));
    // Off-grid slips keep the rover in place, so only E makes progress and
    // reaches the goal w.p. 0.8.
    const auto e = value_iteration(m, RiskSpec::expectation());
    CHECK(e.policy[0] == static_cast<ActionId>(Move::E));
    CHECK(e.J[0] == doctest::Approx(1.0 / 0.8).epsilon(1e-9));

    // CVaR 0.3 reweights the 0.2 stay to 2/3, so J = 1 + 2J/3 = 3, beyond
    // twice the expectation-based bound 1.25.
    CHECK(value_iteration(m, RiskSpec::cvar(0.3)).status == SolveStatus::DivergenceDetected);
    SolveOptions o;
    o.divergence_factor = 1e9;
    const auto c = value_iteration(m, RiskSpec::cvar(0.3), o);
    CHECK(c.status == SolveStatus::Converged);
    CHECK(c.J[0] == doctest::Approx(3.0).epsilon(1e-9));
  }
}

TEST_SUITE("generation") {
  TEST_CASE("obstacle and uncertain counts") {
    const auto a = generate_gridworld(4, 5, 1);
    CHECK(a.obstacles.size() == 5);
    CHECK(a.uncertain_obstacles.size() == 2);
    const auto b = generate_gridworld(10, 10, 1);
    CHECK(b.obstacles.size() == 25);
    CHECK(b.uncertain_obstacles.size() == 4);
    const auto c = generate_gridworld(10, 20, 1);
    CHECK(c.obstacles.size() == 50);
    CHECK(c.uncertain_obstacles.size() == 8);
    CHECK(default_uncertain_count(5, 10) == 2);
    GridGenOptions o;
    o.obstacle_count = 3;
    o.uncertain_count = 1;
    const auto d = generate_gridworld(4, 5, 1, o);
    CHECK(d.obstacles.size() == 3);
    CHECK(d.uncertain_obstacles.size() == 1);
  }

  TEST_CASE("layouts avoid start and goal and mark uncertain cells as obstacles") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto g = generate_gridworld(6, 6, seed);
      for (const auto& c : g.obstacles) {
        CHECK(c != g.start);
        CHECK(c != g.goal);
      }
      for (const auto& u : g.uncertain_obstacles) {
        CHECK(std::find(g.obstacles.begin(), g.obstacles.end(), u) != g.obstacles.end());
      }
    }
  }

  TEST_CASE("same seed, same layout") {
    const auto a = generate_gridworld(10, 10, 99);
    const auto b = generate_gridworld(10, 10, 99);
    CHECK(a.obstacles == b.obstacles);
    CHECK(a.uncertain_obstacles == b.uncertain_obstacles);
    const auto c = generate_gridworld(10, 10, 100);
    CHECK(a.obstacles != c.obstacles);
  }
}

TEST_SUITE("perturbation") {
  TEST_CASE("zero probability leaves the map unchanged") {
    const auto g = generate_gridworld(10, 10, 5);
    SplitMix64 rng(1);
    for (int i = 0; i < 100; ++i) {
      const auto p = perturb_obstacles(g, rng, 0.0);
      CHECK(p.obstacles == g.obstacles);
    }
  }

  TEST_CASE("move frequency matches the probability") {
    auto g = open_grid(4, 5, 0.1);
    g.obstacles = {{2, 1}};
    g.uncertain_obstacles = {{2, 1}};
    SplitMix64 rng(2024);
    const int draws = 100000;
    int moved = 0;
    for (int i = 0; i < draws; ++i) {
      const auto p = perturb_obstacles(g, rng, 0.2);
      REQUIRE(p.obstacles.size() == 1);
      if (p.obstacles[0] != Cell{2, 1}) ++moved;
    }
    CHECK(std::abs(moved / double(draws) - 0.2) <= 0.005);
  }

  TEST_CASE("corner obstacle moves uniformly to its two neighbours") {
    auto g = open_grid(4, 5, 0.1);
    g.obstacles = {{4, 0}};
    g.uncertain_obstacles = {{4, 0}};
    SplitMix64 rng(7);
    std::map<Cell, int> hits;
    for (int i = 0; i < 20000; ++i) ++hits[perturb_obstacles(g, rng, 1.0).obstacles.at(0)];
    CHECK(hits.size() == 2);
    const int a = hits[Cell{3, 0}];
    const int b = hits[Cell{4, 1}];
    CHECK(a + b == 20000);
    CHECK(std::abs(a - 10000) < 4 * 71);  // 4 sigma
  }

  TEST_CASE("never lands on start or goal") {
    auto g = open_grid(4, 5, 0.1);
    g.obstacles = {{1, 0}, {3, 3}, {4, 2}};
    g.uncertain_obstacles = g.obstacles;
    SplitMix64 rng(8);
    for (int i = 0; i < 5000; ++i) {
      const auto p = perturb_obstacles(g, rng, 1.0);
      for (const auto& c : p.obstacles) {
        CHECK(c != g.start);
        CHECK(c != g.goal);
      }
    }
  }

  TEST_CASE("static obstacles never move") {
    auto g = open_grid(4, 5, 0.1);
    g.obstacles = {{1, 1}, {2, 2}};
    g.uncertain_obstacles = {{2, 2}};
    SplitMix64 rng(9);
    for (int i = 0; i < 1000; ++i) {
      const auto p = perturb_obstacles(g, rng, 1.0);
      CHECK(std::find(p.obstacles.begin(), p.obstacles.end(), Cell{1, 1}) != p.obstacles.end());
      CHECK(std::find(p.obstacles.begin(), p.obstacles.end(), Cell{2, 2}) == p.obstacles.end());
    }
  }
}

TEST_SUITE("serialization") {
  TEST_CASE("JSON round trip") {
    GridGenOptions o;
    o.cost_mode = CostMode::MinTime;
    o.slip = 0.05;
    const auto g = generate_gridworld(6, 8, 3, o);
    const auto back = gridworld_from_json(nlohmann::json::parse(gridworld_to_json(g).dump()));
    CHECK(back.rows == g.rows);
    CHECK(back.cols == g.cols);
    CHECK(back.obstacles == g.obstacles);
    CHECK(back.uncertain_obstacles == g.uncertain_obstacles);
    CHECK(back.slip == g.slip);
    CHECK(back.cost_mode == g.cost_mode);
    CHECK(back.start == g.start);
    CHECK(back.goal == g.goal);
  }

  TEST_CASE("cost mode names") {
    CHECK(parse_cost_mode(to_string(CostMode::Fuel)) == CostMode::Fuel);
    CHECK(parse_cost_mode(to_string(CostMode::MinTime)) == CostMode::MinTime);
    CHECK_THROWS(parse_cost_mode("teleport"));
  }
}
