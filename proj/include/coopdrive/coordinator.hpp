#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coopdrive/kinematics.hpp"
#include "coopdrive/network.hpp"
#include "coopdrive/scheduling.hpp"
#include "coopdrive/solvers.hpp"

namespace coopdrive {

enum class Strategy { Fifo, DynamicResequence, Mcts, Exact };
enum class CoordMode { DS, PDS };

Strategy strategy_from_string(const std::string& s);
std::string to_string(Strategy s);
std::string to_string(CoordMode m);

/// Rolling-horizon controls: re-plan every delta_t until the horizon ends.
/// DS includes road-segment vehicles in every sub-problem for
/// prediction-based coordination and reserves their arrival times; PDS
/// schedules each intersection area in isolation.
struct RollingHorizonConfig {
    double delta_t = 2.0;
    double horizon = 600.0;
    Strategy strategy = Strategy::Mcts;
    CoordMode mode = CoordMode::DS;
    SolverBudget budget;
    double w1 = 1.0;
    double w2 = 0.5;
    // Vehicles whose committed entry lies this close keep their relative
    // order across re-plans (prevents oscillation near the stop line).
    double commit_horizon = 3.0;
    bool parallel_subproblems = false;
    // Planning gap padding over the audited gaps; absorbs profile-following
    // and synthesis rounding so audited entry gaps never dip below spec.
    double gap_pad = 1e-3;
};

/// One vehicle as seen by a planning snapshot.
struct SnapVehicle {
    int vid = -1;
    double dist_to_line = 0.0;
    double velocity = 0.0;
    const Route* route = nullptr;
    std::size_t hop = 0;  // route step index for this intersection
    Zone zone = Zone::InsideArea;
    double prev_assign = std::numeric_limits<double>::quiet_NaN();
};

/// Frozen per-intersection planning input taken at one tick.
struct AreaSnapshot {
    int intersection = 0;
    double timestamp = 0.0;
    std::vector<SnapVehicle> in_area;  // inside l_c: receive trajectories
    std::vector<SnapVehicle> segment;  // within l_c + l_r: reservations only
};

struct CoordinatorContext {
    const NetworkSpec* net = nullptr;
    DivisionMap division;
    KinematicLimits limits;
    SafetyGaps gaps;  // audited values; planning adds cfg.gap_pad
    RollingHorizonConfig cfg;

    // Derived once by prepare():
    SafetyGaps planning_gaps;
    double crossing_time = 0.0;              // conflict_area_len / v_max
    std::map<int, double> leg_freeflow;      // approach leg -> free-flow time to its stop line
    void prepare();

    double hop_time(int approach_leg) const;
};

/// Builds one intersection's scheduling instance from a snapshot: t_min and
/// the latest feasible arrival recomputed from each vehicle's kinematic
/// state, in-area vehicles weighted w1, segment vehicles w2 (dropped
/// entirely in PDS), physical lane order and committed relative order as
/// precedence.
SchedulingInstance build_subproblem(const AreaSnapshot& snap, const CoordinatorContext& ctx);

/// Network-wide instance over every snapshot vehicle's full remaining route;
/// used by the exact strategy.
SchedulingInstance build_global_instance(const std::vector<AreaSnapshot>& snaps,
                                         const CoordinatorContext& ctx);

struct PlanningRecord {
    double t_p = 0.0;
    int intersection = 0;  // 0 = network-wide solve (exact strategy)
    int q1 = 0;
    int q2 = 0;
    long iterations = 0;
    double objective = 0.0;
    double wall_ms = 0.0;
    bool complete = false;
    bool relaxed = false;
};

/// Output of one planning tick, applied by the stepper at the tick barrier.
struct TickApply {
    std::map<std::pair<int, int>, double> trajectories;  // (vid, k) -> entry time
    std::map<std::pair<int, int>, double> reservations;  // (vid, k) -> reserved time
};

/// Owns reservations, per-intersection carried orders, and the planning
/// trace across a run. Sub-problems within one tick read the same frozen
/// snapshots and are mutually independent; their results merge in
/// intersection order regardless of solve order.
class Coordinator {
public:
    Coordinator(CoordinatorContext ctx, std::uint64_t master_seed);

    TickApply planning_tick(double t_p, const std::vector<AreaSnapshot>& snaps);

    /// A vehicle crossed into the intersection area between ticks. Returns
    /// the entry time to drive to (its reservation, relaxed if state drift
    /// made it infeasible), or nullopt when the vehicle stays unplanned
    /// until the next tick (PDS).
    std::optional<double> on_enter_area(const SnapVehicle& v, int k, double now);

    void on_crossed(int vid, int k);

    const std::vector<PlanningRecord>& log() const { return log_; }
    int cold_entries() const { return cold_entries_; }
    int relaxations() const { return relaxations_; }
    const CoordinatorContext& context() const { return ctx_; }

    /// Test hook: permutes the order in which sub-problem results are
    /// merged; outputs must not depend on it.
    void set_merge_permutation(std::vector<int> perm) { merge_perm_ = std::move(perm); }

private:
    struct ActiveEntry {
        int in_leg;
        int in_lane;
        int movement;
        double time;
    };

    SolverResult solve_sub(const SchedulingInstance& inst, int k, double t_p, long tick_index);
    double local_append(int k, int in_leg, int in_lane, int movement, double t_min) const;

    CoordinatorContext ctx_;
    std::uint64_t master_seed_;
    long tick_index_ = 0;
    std::map<std::pair<int, int>, double> reservations_;            // (vid, k) -> time
    std::map<std::pair<int, int>, ActiveEntry> reservation_info_;   // constraint view
    std::map<int, std::vector<int>> prev_order_;                    // k -> vids
    std::map<int, std::map<int, ActiveEntry>> active_;              // k -> vid -> entry
    std::vector<PlanningRecord> log_;
    int cold_entries_ = 0;
    int relaxations_ = 0;
    std::vector<int> merge_perm_;
};

}  // namespace coopdrive
