#pragma once

#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "coopdrive/sim.hpp"

namespace coopdrive {

/// One comparison sweep: the base scenario is re-run for every
/// (value, strategy, seed) combination exactly once.
struct ExperimentPlan {
    ScenarioConfig base;
    std::string sweep_param = "arrival_rate";  // arrival_rate | l_r | delta_t
    std::vector<double> values;
    std::vector<std::string> strategies;
    std::vector<std::uint64_t> seeds;
    std::string out_dir = "out";

    void validate() const;
};

ExperimentPlan plan_from_json(const nlohmann::json& j);
ExperimentPlan load_plan(const std::string& path);

/// Scenario for one cell of the matrix.
ScenarioConfig configure_run(const ExperimentPlan& plan, std::size_t value_idx,
                             std::size_t strategy_idx, std::size_t seed_idx);

struct RunDigest {
    bool ok = false;
    std::string error;
    MetricsSummary summary;
    double wall_seconds = 0.0;
    std::vector<double> solve_wall_ms;
    int drift = 0;
};

struct MatrixResult {
    // keyed by (value_idx, strategy_idx, seed_idx)
    std::map<std::tuple<std::size_t, std::size_t, std::size_t>, RunDigest> runs;
    bool all_ok() const;
};

/// Runs every cell, `jobs` runs in parallel (runs are independent; outputs
/// merge deterministically).
MatrixResult run_matrix(const ExperimentPlan& plan, int jobs);

/// Fixed-schema delimited table, one row per (value, strategy): mean and
/// stddev over seeds of the total delay and average speed, per-intersection
/// mean delays, and the delay-reduction rate on rows that have a PDS
/// counterpart with identical seeds.
std::string render_table(const ExperimentPlan& plan, const MatrixResult& result);

/// Writes per-run summaries plus table.csv under plan.out_dir. Partial
/// results are preserved; throws after writing when any run failed.
void write_matrix_outputs(const ExperimentPlan& plan, const MatrixResult& result);

std::string run_file_stem(const ExperimentPlan& plan, std::size_t value_idx,
                          std::size_t strategy_idx, std::size_t seed_idx);

}  // namespace coopdrive
