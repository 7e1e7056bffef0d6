#include "coopdrive/experiments.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "coopdrive/config.hpp"

namespace coopdrive {

void ExperimentPlan::validate() const {
    if (values.empty()) throw ConfigError("experiment plan has no sweep values");
    if (strategies.empty()) throw ConfigError("experiment plan has no strategies");
    if (seeds.empty()) throw ConfigError("experiment plan has no seeds");
    if (sweep_param != "arrival_rate" && sweep_param != "l_r" && sweep_param != "delta_t")
        throw ConfigError("unknown sweep parameter '" + sweep_param +
                          "' (expected arrival_rate, l_r, delta_t)");
    for (const auto& s : strategies) {
        ScenarioConfig probe = base;
        apply_strategy_preset(probe, s);
    }
}

ExperimentPlan plan_from_json(const nlohmann::json& j) {
    ExperimentPlan plan;
    plan.base = scenario_from_json(j.at("scenario"));
    const auto& sweep = j.at("sweep");
    plan.sweep_param = sweep.at("parameter").get<std::string>();
    plan.values = sweep.at("values").get<std::vector<double>>();
    plan.strategies = j.at("strategies").get<std::vector<std::string>>();
    plan.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    plan.out_dir = j.value("output_dir", "out");
    plan.validate();
    return plan;
}

ExperimentPlan load_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read plan file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("plan file " + path + " is not valid JSON: " + e.what());
    }
    return plan_from_json(j);
}

ScenarioConfig configure_run(const ExperimentPlan& plan, std::size_t value_idx,
                             std::size_t strategy_idx, std::size_t seed_idx) {
    ScenarioConfig cfg = plan.base;
    const double value = plan.values.at(value_idx);
    if (plan.sweep_param == "arrival_rate") {
        cfg.arrival_rate = value;
    } else if (plan.sweep_param == "l_r") {
        cfg.division.l_r = value;
        cfg.division.l_r_per_leg.clear();
    } else {
        cfg.rolling.delta_t = value;
    }
    apply_strategy_preset(cfg, plan.strategies.at(strategy_idx));
    cfg.seed = plan.seeds.at(seed_idx);
    return cfg;
}

bool MatrixResult::all_ok() const {
    for (const auto& [key, digest] : runs)
        if (!digest.ok) return false;
    return true;
}

MatrixResult run_matrix(const ExperimentPlan& plan, int jobs) {
    plan.validate();
    struct Cell {
        std::size_t v, s, d;
    };
    std::vector<Cell> cells;
    for (std::size_t v = 0; v < plan.values.size(); ++v)
        for (std::size_t s = 0; s < plan.strategies.size(); ++s)
            for (std::size_t d = 0; d < plan.seeds.size(); ++d) cells.push_back({v, s, d});

    std::vector<RunDigest> digests(cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            RunDigest& dig = digests[i];
            try {
                const ScenarioConfig cfg =
                    configure_run(plan, cells[i].v, cells[i].s, cells[i].d);
                RunResult rr = run_scenario(cfg);
                dig.summary = std::move(rr.summary);
                dig.wall_seconds = rr.wall_seconds;
                dig.solve_wall_ms.reserve(rr.planning.size());
                for (const auto& rec : rr.planning) dig.solve_wall_ms.push_back(rec.wall_ms);
                dig.ok = true;
            } catch (const std::exception& e) {
                dig.ok = false;
                dig.error = e.what();
            }
        }
    };
    const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    MatrixResult out;
    for (std::size_t i = 0; i < cells.size(); ++i)
        out.runs[{cells[i].v, cells[i].s, cells[i].d}] = std::move(digests[i]);
    return out;
}

namespace {

std::string fmt6(double x) {
    if (std::isnan(x)) return "";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", x);
    return buf;
}

struct Stats {
    double mean = std::numeric_limits<double>::quiet_NaN();
    double stddev = std::numeric_limits<double>::quiet_NaN();
};

Stats stats_of(const std::vector<double>& xs) {
    Stats st;
    if (xs.empty()) return st;
    double sum = 0.0;
    for (double x : xs) sum += x;
    st.mean = sum / xs.size();
    double var = 0.0;
    for (double x : xs) var += (x - st.mean) * (x - st.mean);
    st.stddev = xs.size() > 1 ? std::sqrt(var / (xs.size() - 1)) : 0.0;
    return st;
}

}  // namespace

std::string render_table(const ExperimentPlan& plan, const MatrixResult& result) {
    std::vector<int> k_ids;
    for (const auto& is : plan.base.network.intersections) k_ids.push_back(is.id);
    std::sort(k_ids.begin(), k_ids.end());

    std::ostringstream out;
    out << plan.sweep_param << ",strategy,seeds,total_delay_mean,total_delay_std,"
        << "avg_speed_mean,avg_speed_std";
    for (int k : k_ids) out << ",delay_i" << k << "_mean";
    out << ",eta_total_mean,eta_first_mean\n";

    auto pds_idx = [&]() -> long {
        for (std::size_t s = 0; s < plan.strategies.size(); ++s)
            if (plan.strategies[s] == "pds") return static_cast<long>(s);
        return -1;
    }();

    for (std::size_t v = 0; v < plan.values.size(); ++v) {
        for (std::size_t s = 0; s < plan.strategies.size(); ++s) {
            std::vector<double> delays, speeds;
            std::map<int, std::vector<double>> per_k;
            std::vector<double> eta_total, eta_first;
            int n_ok = 0;
            for (std::size_t d = 0; d < plan.seeds.size(); ++d) {
                auto it = result.runs.find({v, s, d});
                if (it == result.runs.end() || !it->second.ok) continue;
                const MetricsSummary& m = it->second.summary;
                ++n_ok;
                delays.push_back(m.avg_total_delay);
                speeds.push_back(m.avg_speed);
                for (const auto& [k, val] : m.per_intersection_delay) per_k[k].push_back(val);
                if (pds_idx >= 0 && static_cast<long>(s) != pds_idx) {
                    auto bit = result.runs.find({v, static_cast<std::size_t>(pds_idx), d});
                    if (bit != result.runs.end() && bit->second.ok) {
                        const MetricsSummary& b = bit->second.summary;
                        if (b.avg_total_delay > 0.0)
                            eta_total.push_back((b.avg_total_delay - m.avg_total_delay) /
                                                b.avg_total_delay * 100.0);
                        if (!k_ids.empty()) {
                            const int k0 = k_ids.front();
                            auto mk = m.per_intersection_delay.find(k0);
                            auto bk = b.per_intersection_delay.find(k0);
                            if (mk != m.per_intersection_delay.end() &&
                                bk != b.per_intersection_delay.end() && bk->second > 0.0)
                                eta_first.push_back((bk->second - mk->second) / bk->second *
                                                    100.0);
                        }
                    }
                }
            }
            const Stats sd = stats_of(delays);
            const Stats sp = stats_of(speeds);
            out << fmt6(plan.values[v]) << ',' << plan.strategies[s] << ',' << n_ok << ','
                << fmt6(sd.mean) << ',' << fmt6(sd.stddev) << ',' << fmt6(sp.mean) << ','
                << fmt6(sp.stddev);
            for (int k : k_ids) {
                auto it = per_k.find(k);
                out << ',' << (it == per_k.end() ? "" : fmt6(stats_of(it->second).mean));
            }
            out << ',' << fmt6(stats_of(eta_total).mean) << ','
                << fmt6(stats_of(eta_first).mean) << '\n';
        }
    }
    return out.str();
}

std::string run_file_stem(const ExperimentPlan& plan, std::size_t value_idx,
                          std::size_t strategy_idx, std::size_t seed_idx) {
    std::ostringstream name;
    name << plan.base.name << "_" << plan.sweep_param << "=" << plan.values.at(value_idx)
         << "_" << plan.strategies.at(strategy_idx) << "_s" << plan.seeds.at(seed_idx);
    return name.str();
}

void write_matrix_outputs(const ExperimentPlan& plan, const MatrixResult& result) {
    namespace fs = std::filesystem;
    fs::create_directories(plan.out_dir);
    fs::create_directories(fs::path(plan.out_dir) / "runs");
    std::string first_error;
    for (const auto& [key, dig] : result.runs) {
        const auto [v, s, d] = key;
        if (!dig.ok) {
            if (first_error.empty())
                first_error = run_file_stem(plan, v, s, d) + ": " + dig.error;
            continue;
        }
        const fs::path p =
            fs::path(plan.out_dir) / "runs" / (run_file_stem(plan, v, s, d) + ".summary.json");
        std::ofstream f(p);
        f << dig.summary.to_json() << '\n';
    }
    {
        std::ofstream f(fs::path(plan.out_dir) / "table.csv");
        f << render_table(plan, result);
    }
    if (!first_error.empty())
        throw ConfigError("experiment aborted, partial results kept in " + plan.out_dir +
                          "; first failure: " + first_error);
}

}  // namespace coopdrive
