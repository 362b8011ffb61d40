#pragma once

#include <filesystem>

#include "json.hpp"
#include "riskssp/mdp.hpp"

namespace riskssp {

/**
 * Builds an Mdp from the interchange document
 *
 *   {"states": [...], "actions": [...],
 *    "transitions": [{"from": s, "action": a, "to": s2, "p": x}, ...],
 *    "costs": [{"state": s, "action": a, "c": x}, ...],
 *    "initial": s, "goal": s | [s, ...]}
 *
 * Unlisted transitions have probability zero; every (state, action) pair must
 * have a cost. Rows whose sum is within kStochasticTol of one are
 * renormalized, others are rejected. A goal array is merged into one
 * absorbing, cost-free super-state (rows leaving the merged goals are
 * dropped). Schema errors throw ModelError carrying a JSON path such as
 * "$.transitions[3].p".
 *
 * Semantic invariants (negative costs, non-absorbing goal, ...) are left to
 * validate_mdp().
 */
Mdp mdp_from_json(const nlohmann::json& doc);

/// Reads and parses a file; parse failures report the byte offset.
Mdp load_mdp(const std::filesystem::path& path);

/// Inverse of mdp_from_json for a single-goal model; zero-probability
/// entries are omitted.
nlohmann::ordered_json mdp_to_json(const Mdp& mdp);

}  // namespace riskssp
