// Command-line front end: run one scenario or execute a comparison plan.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"

#include "coopdrive/config.hpp"
#include "coopdrive/experiments.hpp"
#include "coopdrive/sim.hpp"

namespace fs = std::filesystem;

namespace {

int cmd_run(const std::string& scenario_path, const std::string& out_dir,
            std::int64_t seed_override, const std::string& strategy_override,
            std::int64_t iters_override, double rate_override) {
    coopdrive::ScenarioConfig cfg = coopdrive::load_scenario(scenario_path);
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    if (!strategy_override.empty()) coopdrive::apply_strategy_preset(cfg, strategy_override);
    if (iters_override >= 0) cfg.rolling.budget.max_iterations = iters_override;
    if (rate_override >= 0) cfg.arrival_rate = rate_override;

    coopdrive::RunResult result = coopdrive::run_scenario(cfg);

    fs::create_directories(out_dir);
    {
        std::ofstream f(fs::path(out_dir) / "summary.json");
        f << result.summary.to_json() << '\n';
    }
    coopdrive::write_trace_csv((fs::path(out_dir) / "trace.csv").string(), result.trace);
    coopdrive::write_planning_jsonl((fs::path(out_dir) / "planning.jsonl").string(),
                                    result.planning);

    std::cout << result.summary.to_json() << std::endl;
    if (!result.violations.empty()) {
        std::cerr << result.violations.size() << " safety violation(s) detected" << std::endl;
        return 1;
    }
    return 0;
}

int cmd_compare(const std::string& plan_path, const std::string& out_dir, int jobs) {
    coopdrive::ExperimentPlan plan = coopdrive::load_plan(plan_path);
    if (!out_dir.empty()) plan.out_dir = out_dir;
    const coopdrive::MatrixResult result = coopdrive::run_matrix(plan, jobs);
    coopdrive::write_matrix_outputs(plan, result);  // throws on partial failure
    std::cout << coopdrive::render_table(plan, result);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"signal-free intersection cooperative-driving simulator"};
    app.require_subcommand(1);

    std::string scenario_path, plan_path;
    std::string out_dir = "out";
    std::string strategy_override;
    std::int64_t seed_override = -1;
    std::int64_t iters_override = -1;
    double rate_override = -1.0;
    int jobs = static_cast<int>(std::thread::hardware_concurrency());

    auto* run = app.add_subcommand("run", "simulate one scenario and write its outputs");
    run->add_option("--scenario", scenario_path, "scenario JSON file")->required();
    run->add_option("--out", out_dir, "output directory (summary.json, trace.csv, planning.jsonl)");
    run->add_option("--seed", seed_override, "override the master seed");
    run->add_option("--strategy", strategy_override,
                    "override the strategy (fifo, dr, ds, pds, exact)");
    run->add_option("--iterations", iters_override, "override the solver iteration budget");
    run->add_option("--rate", rate_override, "override the network arrival rate (veh/h)");

    auto* compare = app.add_subcommand("compare", "run a comparison plan and emit table.csv");
    compare->add_option("--plan", plan_path, "experiment plan JSON file")->required();
    compare->add_option("--out", out_dir, "output directory override");
    compare->add_option("--jobs", jobs, "parallel runs");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return cmd_run(scenario_path, out_dir, seed_override, strategy_override,
                           iters_override, rate_override);
        return cmd_compare(plan_path, out_dir == "out" ? "" : out_dir, jobs);
    } catch (const coopdrive::ConfigError& e) {
        std::cerr << "config error: " << e.what() << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 3;
    }
}
