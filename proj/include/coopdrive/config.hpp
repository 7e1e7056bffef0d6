#pragma once

#include <string>

#include "json.hpp"

#include "coopdrive/network.hpp"
#include "coopdrive/sim.hpp"

namespace coopdrive {

/// Instantiates a network from a config document: either one of the built-in
/// generators ({"builtin": "corridor2" | "grid4" | "star5" | "single", ...})
/// or an explicit node/leg/movement/route description. An optional
/// "conflict_override" table replaces the geometric conflict computation.
NetworkSpec network_from_json(const nlohmann::json& j);

ScenarioConfig scenario_from_json(const nlohmann::json& j);
ScenarioConfig load_scenario(const std::string& path);

nlohmann::ordered_json scenario_to_json(const ScenarioConfig& cfg);

/// Applies one of the named strategy presets: fifo, dr, ds (MCTS with
/// prediction), pds (MCTS without prediction), exact.
void apply_strategy_preset(ScenarioConfig& cfg, const std::string& name);

}  // namespace coopdrive
