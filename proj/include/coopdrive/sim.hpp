#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "coopdrive/coordinator.hpp"
#include "coopdrive/kinematics.hpp"
#include "coopdrive/network.hpp"
#include "coopdrive/scheduling.hpp"

namespace coopdrive {

struct ScenarioConfig {
    std::string name = "scenario";
    NetworkSpec network;
    DivisionParams division;
    KinematicLimits limits;
    SafetyGaps gaps;
    RollingHorizonConfig rolling;
    double arrival_rate = 2400.0;  // veh/h entering the network, split over input lanes
    double duration = 600.0;
    double dt = 0.05;
    std::uint64_t seed = 1;

    /// Throws ConfigError on invalid combinations (including the
    /// l_r >= v_c * delta_t reservation-coverage gate).
    void validate() const;
};

struct ArrivalEvent {
    double time = 0.0;
    int entry_leg = -1;
    int entry_lane = 0;
    int route_id = -1;
};

/// Poisson demand per input lane (independent exponential substreams of the
/// master seed). `rate_per_lane` is in veh/h. Deferrals while the entry cell
/// is blocked happen in the stepper, not here.
std::vector<ArrivalEvent> spawn_arrivals(double rate_per_lane, std::uint64_t seed,
                                         double duration, const NetworkSpec& net);

struct CrossingRecord {
    int intersection = 0;
    int movement = -1;
    int in_leg = -1;
    int in_lane = 0;
    double t_minfree = 0.0;  // free-flow floor given the actual upstream exit
    double t_assign = 0.0;
    double t_entry = 0.0;
    double t_exit_area = 0.0;
};

struct VehicleTraceRecord {
    int vid = -1;
    double spawn_time = 0.0;
    int entry_leg = -1;
    int entry_lane = 0;
    int route_id = -1;
    std::vector<CrossingRecord> crossings;
    double exit_time = std::numeric_limits<double>::quiet_NaN();
    double distance = 0.0;

    bool completed() const { return !std::isnan(exit_time); }
};

struct SafetyViolation {
    int intersection = 0;
    int vid_a = -1, vid_b = -1;
    double t_a = 0.0, t_b = 0.0;
    double required = 0.0;
    std::string kind;  // "same_lane" or "cross"
};

/// Replays recorded conflict-area entries against the raw gaps: consecutive
/// same-lane entries must differ by at least the same-lane gap, entries of
/// conflicting movements by the cross gap (minus eps).
std::vector<SafetyViolation> audit_safety(const std::vector<VehicleTraceRecord>& trace,
                                          const NetworkSpec& net, const SafetyGaps& gaps,
                                          double eps = 1e-6);

/// Entries whose measured time strays more than tol from the assigned one.
std::vector<SafetyViolation> audit_tracking(const std::vector<VehicleTraceRecord>& trace,
                                            double tol = 0.1);

struct MetricsSummary {
    std::string scenario;
    std::string strategy;
    std::uint64_t seed = 0;
    int spawned = 0;
    int completed = 0;
    int counted = 0;  // vehicles with at least one recorded crossing
    double avg_total_delay = 0.0;
    std::map<int, double> per_intersection_delay;
    std::map<int, int> per_intersection_count;
    double avg_speed = 0.0;
    double eta_total = std::numeric_limits<double>::quiet_NaN();
    double eta_first = std::numeric_limits<double>::quiet_NaN();  // at the lowest intersection id
    int cold_entries = 0;
    int relaxations = 0;
    int safety_violations = 0;

    std::string to_json() const;  // byte-stable for a fixed run
};

/// Delays per Eqs-style accounting: assigned minus the free-flow floor,
/// summed along each route; speed over completed vehicles. The optional
/// baseline (same scenario and seed) enables the delay-reduction rate.
MetricsSummary summarize(const ScenarioConfig& cfg,
                         const std::vector<VehicleTraceRecord>& trace,
                         int cold_entries, int relaxations, int safety_violations,
                         const MetricsSummary* baseline = nullptr);

struct RunResult {
    MetricsSummary summary;
    std::vector<VehicleTraceRecord> trace;
    std::vector<PlanningRecord> planning;
    std::vector<SafetyViolation> violations;
    double wall_seconds = 0.0;
};

RunResult run_scenario(const ScenarioConfig& cfg);

void write_trace_csv(const std::string& path, const std::vector<VehicleTraceRecord>& trace);
void write_planning_jsonl(const std::string& path, const std::vector<PlanningRecord>& log);

}  // namespace coopdrive
