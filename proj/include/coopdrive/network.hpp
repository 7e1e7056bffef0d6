#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace coopdrive {

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Graph node. Intersections carry positive ids; boundary terminals where
/// vehicles enter/leave the network carry negative ids.
struct NodeSpec {
    int id = 0;
    double x = 0.0;
    double y = 0.0;
    bool is_intersection() const { return id > 0; }
};

/// Directed road link. For a leg ending at an intersection, `length` is the
/// driving distance from the upstream end (area exit or terminal) to that
/// intersection's stop line.
struct LegSpec {
    int id = -1;
    int from_node = 0;
    int to_node = 0;
    double length = 0.0;
    int lanes = 1;
};

/// One allowed way through a conflict area: an (in-leg, in-lane) paired with
/// the (out-leg, out-lane) it continues on.
struct Movement {
    int id = -1;
    int in_leg = -1;
    int in_lane = 0;
    int out_leg = -1;
    int out_lane = 0;
};

struct IntersectionSpec {
    int id = 0;
    std::vector<Movement> movements;
    // Unordered movement-id pairs whose paths meet inside the conflict area.
    std::set<std::pair<int, int>> conflict_pairs;

    bool conflicts(int m_a, int m_b) const {
        if (m_a == m_b) return false;
        auto key = m_a < m_b ? std::make_pair(m_a, m_b) : std::make_pair(m_b, m_a);
        return conflict_pairs.count(key) > 0;
    }
    const Movement& movement(int id) const;
};

struct RouteStep {
    int intersection = 0;
    int movement = -1;
};

/// A pre-determined path: entry lane at the boundary plus the movement taken
/// at each intersection in order. The final movement's out-leg must reach a
/// terminal.
struct Route {
    int id = -1;
    int entry_leg = -1;
    int entry_lane = 0;
    std::vector<RouteStep> steps;
    double weight = 1.0;
};

struct NetworkSpec {
    std::vector<NodeSpec> nodes;
    std::vector<LegSpec> legs;
    std::vector<IntersectionSpec> intersections;
    std::vector<Route> routes;
    double conflict_area_len = 20.0;
    double lane_width = 3.5;

    const NodeSpec& node(int id) const;
    const LegSpec& leg(int id) const;
    const IntersectionSpec& intersection(int id) const;
    std::vector<int> approach_legs(int intersection_id) const;
    /// Distinct (leg, lane) pairs where vehicles may enter the network, with
    /// the routes starting there.
    std::map<std::pair<int, int>, std::vector<int>> entry_points() const;
    int num_intersections() const { return static_cast<int>(intersections.size()); }

    void validate() const;
};

/// Range parameters dividing every approach into intersection area
/// [0, l_c), considered road segment [l_c, l_c + l_r), and outside.
struct DivisionParams {
    double l_c = 200.0;
    double l_r = 100.0;
    double delta_t = 2.0;
    double v_c = 10.0;
    std::map<int, double> l_r_per_leg;  // optional per-leg override, by leg id

    double lr_for_leg(int leg_id) const {
        auto it = l_r_per_leg.find(leg_id);
        return it == l_r_per_leg.end() ? l_r : it->second;
    }
};

enum class Zone { InsideArea, Segment, Outside };

/// Immutable per-approach zone table produced by divide_network.
struct DivisionMap {
    struct Spans {
        double area_end = 0.0;  // = l_c
        double seg_end = 0.0;   // = min(l_c + l_r, leg length)
    };
    std::map<std::pair<int, int>, Spans> spans;  // (intersection, approach leg)
    DivisionParams params;

    Zone zone_of(int intersection_id, int leg_id, double dist_to_line) const;
    const Spans& at(int intersection_id, int leg_id) const;
};

/// Labels every approach of every intersection. Rejects parameter sets that
/// break reservation coverage: the considered segment on every approach must
/// be at least v_c * delta_t long so each vehicle is planned at least once
/// before it reaches the intersection area.
DivisionMap divide_network(const NetworkSpec& net, const DivisionParams& params);

/// Pairs of vehicle indices (into `movements`) whose movements are listed as
/// conflicting at intersection k. Same-lane pairs are never conflicts.
std::set<std::pair<std::size_t, std::size_t>> conflict_pairs_at(
    const NetworkSpec& net, int k, const std::vector<int>& movements);

/// Rebuilds every conflict table from movement geometry: two movements
/// conflict when their straight paths through the area pass within a small
/// clearance of each other (same-lane pairs excluded).
void recompute_geometric_conflicts(NetworkSpec& net);

// Built-in topologies. `gap` is the distance between adjacent conflict
// areas; boundary legs are `boundary_len` long.
NetworkSpec make_corridor2(double gap = 400.0, double boundary_len = 400.0, int lanes = 1);
NetworkSpec make_grid4(double gap = 400.0, double boundary_len = 400.0, int lanes = 1);
NetworkSpec make_star5(const std::vector<double>& arm_gaps = {250.0, 300.0, 350.0, 400.0},
                       double boundary_len = 400.0, int lanes = 2);
NetworkSpec make_single_intersection(double boundary_len = 400.0, int lanes = 1);

}  // namespace coopdrive
