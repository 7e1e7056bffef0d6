#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace coopdrive {

/// Entry-time gaps enforced at every conflict area: same_lane between
/// consecutive vehicles on one lane, cross between vehicles whose movements
/// conflict.
struct SafetyGaps {
    double same_lane = 1.5;
    double cross = 2.0;
};

/// One vehicle inside a scheduling instance. The scope route lists the
/// intersections still ahead of it (just one for sub-problems); hop_times[i]
/// is the free-flow travel time (conflict-area crossing plus leg traversal
/// under the cruise model) from intersection i to i+1 of the scope route.
struct PlanVehicle {
    int vid = -1;
    std::vector<int> intersections;
    std::vector<int> movements;
    std::vector<int> lane_keys;  // dense per-instance lane ids, one per scope hop
    double t_min0 = 0.0;
    std::vector<double> hop_times;
    double t_max = std::numeric_limits<double>::infinity();
    int zone = 0;  // 0 = intersection area (w1), 1 = road segment (w2)
    bool committed = false;
    double prev_assign = std::numeric_limits<double>::quiet_NaN();
};

/// Hard ordering requirement at one intersection: `before` crosses ahead of
/// `after`. SameLane pairs additionally carry the same_lane gap; OrderOnly
/// pairs fix sequence without their own time constraint (used to pin
/// committed vehicles' relative order).
struct Precedence {
    enum class Kind { SameLane, OrderOnly };
    int k = 0;
    int before = -1;
    int after = -1;
    Kind kind = Kind::SameLane;
};

/// Cross-intersection consistency: u and v travel the same lane from k_src
/// to k_dst, so their order at k_dst must repeat their order at k_src (no
/// overtaking between areas).
struct LinkedOrder {
    int k_src = 0;
    int k_dst = 0;
    int u = -1;
    int v = -1;
};

struct SchedulingInstance {
    bool global_scope = false;
    std::vector<int> scope;  // intersections covered; size 1 unless global
    std::vector<PlanVehicle> vehicles;
    std::vector<Precedence> precedence;
    std::vector<LinkedOrder> linked;
    std::map<int, std::set<std::pair<int, int>>> conflicts;  // per k: movement-id pairs
    SafetyGaps gaps;
    double w1 = 1.0;
    double w2 = 0.5;
    int Q1 = 0;
    int Q2 = 0;

    bool movements_conflict(int k, int ma, int mb) const;
    int scope_index(const PlanVehicle& v, int k) const;
    std::size_t size() const { return vehicles.size(); }

    std::string dump() const;
    static SchedulingInstance load(const std::string& text);
};

/// Total crossing order per intersection in scope, by vehicle index.
struct PassingOrder {
    std::map<int, std::vector<int>> at;

    bool operator==(const PassingOrder&) const = default;
};

struct Assignment {
    bool feasible = false;
    std::string reason;
    // times[v][i] = assigned entry time of vehicle v at its scope hop i.
    std::vector<std::vector<double>> times;
};

/// Checks structural admissibility of an order: covers exactly the vehicles
/// using each scope intersection, respects precedence pairs and linked
/// orders. Returns an empty string when valid.
std::string validate_order(const SchedulingInstance& inst, const PassingOrder& order);

/// Earliest-feasible assignment for a fixed order. Componentwise minimal
/// under: t >= t_min (with downstream t_min refreshed from the upstream
/// assignment in global scope), same-lane gap, and cross-conflict gap
/// against every earlier conflicting vehicle. Infeasible (never throws) on
/// precedence violations, cyclic cross-intersection timing (causality
/// cycles), or assignments beyond a vehicle's latest feasible arrival.
Assignment forward_pass(const SchedulingInstance& inst, const PassingOrder& order);

/// Average delay over all vehicles and scope intersections (unweighted).
double objective_global(const SchedulingInstance& inst, const Assignment& a);

/// Weighted single-intersection objective: in-area delays scaled by w1,
/// segment delays by w2, normalized by Q1 + Q2.
double objective_sub(const SchedulingInstance& inst, const Assignment& a);

double instance_objective(const SchedulingInstance& inst, const Assignment& a);

/// Solution-space diagnostics: s = 2^(n1+n2) for the network-wide problem,
/// s' = 2^(n1/P) per sub-problem, both as reals.
std::pair<double, double> solution_space_sizes(int n1, int n2, int p);

/// Counts conflicts in a global instance: n1 between vehicles currently
/// heading to the same intersection (at that intersection), n2 all conflicts
/// arising at other shared conflict areas along their routes.
std::pair<int, int> count_conflicts(const SchedulingInstance& inst);

// --- dense single-intersection view used by the solvers -------------------

/// Preprocessed arrays for fast repeated forward passes over one
/// intersection's instance.
struct SubKView {
    const SchedulingInstance* inst = nullptr;
    int k = 0;
    int n = 0;
    std::vector<int> lane;                        // dense lane index per vehicle
    std::vector<int> mov;                         // dense movement index per vehicle
    std::vector<std::vector<int>> mov_conflicts;  // dense movement -> conflicting movements
    int n_lanes = 0;
    int n_movs = 0;
    std::vector<double> tmin;
    std::vector<double> tmax;
    std::vector<double> weight;
    std::vector<std::vector<int>> succ;  // precedence successors
    std::vector<int> base_indegree;
    double dt1 = 0.0, dt2 = 0.0;
    double norm = 1.0;  // 1 / (Q1 + Q2)
};

SubKView make_subk_view(const SchedulingInstance& inst);

/// Incremental forward-pass state over a SubKView: append vehicles one at a
/// time and read off entry times and the running weighted delay.
struct ForwardState {
    std::vector<double> lane_last;
    std::vector<double> mov_last;
    double weighted_delay = 0.0;
    int placed = 0;
    bool tmax_ok = true;

    void reset(const SubKView& view);
    double append(const SubKView& view, int v);
    double score(const SubKView& view) const {
        return placed == 0 ? 0.0 : weighted_delay * view.norm;
    }
};

}  // namespace coopdrive
