#include "riskssp/mdp_json.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace riskssp {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ModelError(path + ": " + what);
}

const json& member(const json& obj, const std::string& key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(path, "missing key \"" + key + "\"");
  return *it;
}

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  double x = j.get<double>();
  if (!std::isfinite(x)) fail(path, "expected a finite number");
  return x;
}

std::vector<std::string> name_list(const json& doc, const std::string& key) {
  const std::string path = "$." + key;
  const json& arr = member(doc, key, "$");
  if (!arr.is_array()) fail(path, "expected an array");
  std::vector<std::string> names;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    auto name = as_string(arr[i], path + "[" + std::to_string(i) + "]");
    if (!seen.insert(name).second) {
      fail(path + "[" + std::to_string(i) + "]", "duplicate name \"" + name + "\"");
    }
    names.push_back(std::move(name));
  }
  return names;
}

}  // namespace

Mdp mdp_from_json(const json& doc) {
  if (!doc.is_object()) fail("$", "expected an object");

  const auto states = name_list(doc, "states");
  const auto actions = name_list(doc, "actions");
  std::unordered_map<std::string, StateId> state_index;
  std::unordered_map<std::string, ActionId> action_index;
  for (StateId s = 0; s < states.size(); ++s) state_index[states[s]] = s;
  for (ActionId a = 0; a < actions.size(); ++a) action_index[actions[a]] = a;

  auto lookup_state = [&](const json& j, const std::string& path) {
    auto name = as_string(j, path);
    auto it = state_index.find(name);
    if (it == state_index.end()) fail(path, "unknown state \"" + name + "\"");
    return it->second;
  };
  auto lookup_action = [&](const json& j, const std::string& path) {
    auto name = as_string(j, path);
    auto it = action_index.find(name);
    if (it == action_index.end()) fail(path, "unknown action \"" + name + "\"");
    return it->second;
  };

  const StateId initial = lookup_state(member(doc, "initial", "$"), "$.initial");

  std::vector<StateId> goals;
  const json& goal_json = member(doc, "goal", "$");
  if (goal_json.is_array()) {
    if (goal_json.empty()) fail("$.goal", "expected at least one goal state");
    std::set<StateId> seen;
    for (std::size_t i = 0; i < goal_json.size(); ++i) {
      const std::string path = "$.goal[" + std::to_string(i) + "]";
      StateId g = lookup_state(goal_json[i], path);
      if (!seen.insert(g).second) fail(path, "duplicate goal state");
      goals.push_back(g);
    }
  } else {
    goals.push_back(lookup_state(goal_json, "$.goal"));
  }

  const std::size_t n = states.size();
  const std::size_t m = actions.size();
  const std::size_t pairs = n * m;

  // Dense accumulation keyed by (s, a) -> next -> p; duplicates rejected.
  std::vector<std::map<StateId, double>> rows(pairs);
  const json& transitions = member(doc, "transitions", "$");
  if (!transitions.is_array()) fail("$.transitions", "expected an array");
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    const std::string path = "$.transitions[" + std::to_string(i) + "]";
    const json& t = transitions[i];
    if (!t.is_object()) fail(path, "expected an object");
    StateId from = lookup_state(member(t, "from", path), path + ".from");
    ActionId act = lookup_action(member(t, "action", path), path + ".action");
    StateId to = lookup_state(member(t, "to", path), path + ".to");
    double p = as_number(member(t, "p", path), path + ".p");
    if (p < 0.0) fail(path + ".p", "negative probability");
    if (!rows[from * m + act].emplace(to, p).second) fail(path, "duplicate transition");
  }

  std::vector<double> costs(pairs, 0.0);
  std::vector<bool> has_cost(pairs, false);
  const json& cost_json = member(doc, "costs", "$");
  if (!cost_json.is_array()) fail("$.costs", "expected an array");
  for (std::size_t i = 0; i < cost_json.size(); ++i) {
    const std::string path = "$.costs[" + std::to_string(i) + "]";
    const json& c = cost_json[i];
    if (!c.is_object()) fail(path, "expected an object");
    StateId s = lookup_state(member(c, "state", path), path + ".state");
    ActionId a = lookup_action(member(c, "action", path), path + ".action");
    if (has_cost[s * m + a]) fail(path, "duplicate cost");
    costs[s * m + a] = as_number(member(c, "c", path), path + ".c");
    has_cost[s * m + a] = true;
  }
  for (StateId s = 0; s < n; ++s) {
    for (ActionId a = 0; a < m; ++a) {
      if (!has_cost[s * m + a]) {
        fail("$.costs", "no cost for (" + states[s] + ", " + actions[a] + ")");
      }
    }
  }

  // Merge a goal set into the first goal's slot.
  std::vector<bool> is_goal(n, false);
  for (StateId g : goals) is_goal[g] = true;
  if (is_goal[initial]) fail("$.initial", "initial state is a goal state");
  const bool merge = goals.size() > 1;

  std::vector<StateId> remap(n);
  std::vector<std::string> out_states;
  StateId goal_slot = 0;
  for (StateId s = 0; s < n; ++s) {
    if (is_goal[s] && merge) {
      if (s == *std::min_element(goals.begin(), goals.end())) {
        goal_slot = out_states.size();
        std::string merged;
        for (StateId g : goals) merged += (merged.empty() ? "" : "+") + states[g];
        out_states.push_back(merged);
      }
      continue;
    }
    remap[s] = out_states.size();
    out_states.push_back(states[s]);
  }
  if (merge) {
    for (StateId g : goals) remap[g] = goal_slot;
  } else {
    goal_slot = remap[goals.front()];
  }

  const std::size_t n_out = out_states.size();
  std::vector<std::vector<Transition>> out_rows(n_out * m);
  std::vector<double> out_costs(n_out * m, 0.0);
  for (StateId s = 0; s < n; ++s) {
    if (merge && is_goal[s]) continue;
    for (ActionId a = 0; a < m; ++a) {
      const auto& src = rows[s * m + a];
      double sum = 0.0;
      for (const auto& [to, p] : src) sum += p;
      if (std::abs(sum - 1.0) > kStochasticTol) {
        std::ostringstream os;
        os.precision(17);
        os << "row sum != 1 at (" << states[s] << ", " << actions[a] << ") (sum = " << sum << ")";
        fail("$.transitions", os.str());
      }
      const double scale = sum == 1.0 ? 1.0 : sum;
      std::map<StateId, double> merged;
      for (const auto& [to, p] : src) {
        if (p > 0.0) merged[remap[to]] += p / scale;
      }
      auto& dst = out_rows[remap[s] * m + a];
      for (const auto& [to, p] : merged) dst.push_back({to, p});
      out_costs[remap[s] * m + a] = costs[s * m + a];
    }
  }
  if (merge) {
    for (ActionId a = 0; a < m; ++a) {
      out_rows[goal_slot * m + a] = {{goal_slot, 1.0}};
      out_costs[goal_slot * m + a] = 0.0;
    }
  }

  return Mdp(std::move(out_states), actions, std::move(out_rows), std::move(out_costs),
             remap[initial], goal_slot);
}

Mdp load_mdp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ModelError(path.string() + ": cannot open file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ModelError(path.string() + ": parse error at byte " + std::to_string(e.byte) + ": " +
                     e.what());
  }
  return mdp_from_json(doc);
}

nlohmann::ordered_json mdp_to_json(const Mdp& mdp) {
  nlohmann::ordered_json doc;
  doc["states"] = mdp.state_names();
  doc["actions"] = mdp.action_names();
  auto transitions = nlohmann::ordered_json::array();
  auto costs = nlohmann::ordered_json::array();
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    for (ActionId a = 0; a < mdp.num_actions(); ++a) {
      for (const auto& t : mdp.row(s, a)) {
        if (t.prob <= 0.0) continue;
        transitions.push_back({{"from", mdp.state_name(s)},
                               {"action", mdp.action_name(a)},
                               {"to", mdp.state_name(t.next)},
                               {"p", t.prob}});
      }
      costs.push_back(
          {{"state", mdp.state_name(s)}, {"action", mdp.action_name(a)}, {"c", mdp.cost(s, a)}});
    }
  }
  doc["transitions"] = std::move(transitions);
  doc["costs"] = std::move(costs);
  doc["initial"] = mdp.state_name(mdp.initial());
  doc["goal"] = mdp.state_name(mdp.goal());
  return doc;
}

}  // namespace riskssp
