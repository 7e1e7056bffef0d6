#include "coopdrive/config.hpp"

#include <fstream>

namespace coopdrive {

namespace {

NetworkSpec builtin_network(const nlohmann::json& j) {
    const std::string name = j.at("builtin").get<std::string>();
    const double boundary = j.value("boundary_leg", 400.0);
    if (name == "corridor2")
        return make_corridor2(j.value("gap", 400.0), boundary, j.value("lanes", 1));
    if (name == "grid4")
        return make_grid4(j.value("gap", 400.0), boundary, j.value("lanes", 1));
    if (name == "star5") {
        std::vector<double> arms = {250.0, 300.0, 350.0, 400.0};
        if (j.contains("arms")) arms = j.at("arms").get<std::vector<double>>();
        return make_star5(arms, boundary, j.value("lanes", 2));
    }
    if (name == "single")
        return make_single_intersection(boundary, j.value("lanes", 1));
    throw ConfigError("unknown builtin network '" + name + "'");
}

NetworkSpec explicit_network(const nlohmann::json& j) {
    NetworkSpec net;
    net.conflict_area_len = j.value("area_len", 20.0);
    net.lane_width = j.value("lane_width", 3.5);
    for (const auto& n : j.at("nodes"))
        net.nodes.push_back({n.at("id").get<int>(), n.at("x").get<double>(),
                             n.at("y").get<double>()});
    for (const auto& l : j.at("legs"))
        net.legs.push_back({l.at("id").get<int>(), l.at("from").get<int>(),
                            l.at("to").get<int>(), l.at("length").get<double>(),
                            l.value("lanes", 1)});
    for (const auto& n : net.nodes)
        if (n.is_intersection()) net.intersections.push_back({n.id, {}, {}});
    for (const auto& m : j.at("movements")) {
        const int k = m.at("intersection").get<int>();
        for (auto& is : net.intersections) {
            if (is.id != k) continue;
            Movement mv;
            mv.id = m.at("id").get<int>();
            mv.in_leg = m.at("in_leg").get<int>();
            mv.in_lane = m.value("in_lane", 0);
            mv.out_leg = m.at("out_leg").get<int>();
            mv.out_lane = m.value("out_lane", 0);
            is.movements.push_back(mv);
        }
    }
    for (const auto& r : j.at("routes")) {
        Route rt;
        rt.id = r.at("id").get<int>();
        rt.entry_leg = r.at("entry_leg").get<int>();
        rt.entry_lane = r.value("entry_lane", 0);
        rt.weight = r.value("weight", 1.0);
        for (const auto& s : r.at("steps"))
            rt.steps.push_back(
                {s.at("intersection").get<int>(), s.at("movement").get<int>()});
        net.routes.push_back(std::move(rt));
    }
    // Conflict tables: geometric unless overridden per intersection.
    const nlohmann::json overrides = j.value("conflict_override", nlohmann::json::object());
    recompute_geometric_conflicts(net);
    for (auto& is : net.intersections) {
        const std::string key = std::to_string(is.id);
        if (!overrides.contains(key)) continue;
        is.conflict_pairs.clear();
        for (const auto& pr : overrides.at(key)) {
            const int a = pr.at(0).get<int>();
            const int b = pr.at(1).get<int>();
            is.conflict_pairs.insert({std::min(a, b), std::max(a, b)});
        }
    }
    net.validate();
    return net;
}

}  // namespace

NetworkSpec network_from_json(const nlohmann::json& j) {
    if (j.contains("builtin")) return builtin_network(j);
    return explicit_network(j);
}

ScenarioConfig scenario_from_json(const nlohmann::json& j) {
    ScenarioConfig cfg;
    cfg.name = j.value("name", "scenario");
    cfg.network = network_from_json(j.at("network"));
    if (j.contains("division")) {
        const auto& d = j.at("division");
        cfg.division.l_c = d.value("l_c", 200.0);
        cfg.division.l_r = d.value("l_r", 100.0);
        if (d.contains("l_r_per_leg"))
            for (const auto& [leg, lr] : d.at("l_r_per_leg").items())
                cfg.division.l_r_per_leg[std::stoi(leg)] = lr.get<double>();
    }
    if (j.contains("limits")) {
        const auto& l = j.at("limits");
        cfg.limits.v_max = l.value("v_max", 15.0);
        cfg.limits.v_min = l.value("v_min", 0.0);
        cfg.limits.a_max = l.value("a_max", 3.0);
        cfg.limits.a_min = l.value("a_min", -5.0);
        cfg.limits.v_c = l.value("v_c", 10.0);
    }
    if (j.contains("gaps")) {
        cfg.gaps.same_lane = j.at("gaps").value("same_lane", 1.5);
        cfg.gaps.cross = j.at("gaps").value("cross", 2.0);
    }
    if (j.contains("strategy")) apply_strategy_preset(cfg, j.at("strategy").get<std::string>());
    if (j.contains("rolling")) {
        const auto& r = j.at("rolling");
        cfg.rolling.delta_t = r.value("delta_t", cfg.rolling.delta_t);
        cfg.rolling.commit_horizon = r.value("commit_horizon", cfg.rolling.commit_horizon);
        cfg.rolling.w1 = r.value("w1", cfg.rolling.w1);
        cfg.rolling.w2 = r.value("w2", cfg.rolling.w2);
        cfg.rolling.gap_pad = r.value("gap_pad", cfg.rolling.gap_pad);
        cfg.rolling.parallel_subproblems =
            r.value("parallel_subproblems", cfg.rolling.parallel_subproblems);
    }
    if (j.contains("budget")) {
        const auto& b = j.at("budget");
        cfg.rolling.budget.wall_seconds = b.value("wall", 0.1);
        if (b.contains("iterations"))
            cfg.rolling.budget.max_iterations = b.at("iterations").get<long>();
    }
    cfg.arrival_rate = j.value("arrival_rate", 2400.0);
    cfg.duration = j.value("duration", 600.0);
    cfg.dt = j.value("dt", 0.05);
    cfg.seed = j.value("seed", std::uint64_t{1});
    return cfg;
}

ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read scenario file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("scenario file " + path + " is not valid JSON: " + e.what());
    }
    return scenario_from_json(j);
}

void apply_strategy_preset(ScenarioConfig& cfg, const std::string& name) {
    if (name == "fifo") {
        cfg.rolling.strategy = Strategy::Fifo;
        cfg.rolling.mode = CoordMode::DS;
    } else if (name == "dr") {
        cfg.rolling.strategy = Strategy::DynamicResequence;
        cfg.rolling.mode = CoordMode::DS;
    } else if (name == "ds") {
        cfg.rolling.strategy = Strategy::Mcts;
        cfg.rolling.mode = CoordMode::DS;
    } else if (name == "pds") {
        cfg.rolling.strategy = Strategy::Mcts;
        cfg.rolling.mode = CoordMode::PDS;
    } else if (name == "exact") {
        cfg.rolling.strategy = Strategy::Exact;
        cfg.rolling.mode = CoordMode::DS;
    } else {
        throw ConfigError("unknown strategy '" + name +
                          "' (expected fifo, dr, ds, pds, exact)");
    }
}

nlohmann::ordered_json scenario_to_json(const ScenarioConfig& cfg) {
    nlohmann::ordered_json j;
    j["name"] = cfg.name;
    j["strategy"] = to_string(cfg.rolling.strategy) + "/" + to_string(cfg.rolling.mode);
    j["arrival_rate"] = cfg.arrival_rate;
    j["duration"] = cfg.duration;
    j["dt"] = cfg.dt;
    j["seed"] = cfg.seed;
    j["division"] = {{"l_c", cfg.division.l_c}, {"l_r", cfg.division.l_r}};
    j["rolling"] = {{"delta_t", cfg.rolling.delta_t},
                    {"w1", cfg.rolling.w1},
                    {"w2", cfg.rolling.w2},
                    {"commit_horizon", cfg.rolling.commit_horizon}};
    j["gaps"] = {{"same_lane", cfg.gaps.same_lane}, {"cross", cfg.gaps.cross}};
    return j;
}

}  // namespace coopdrive
