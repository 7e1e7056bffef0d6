#include "coopdrive/network.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace coopdrive {

namespace {

struct Vec2 {
    double x, y;
};

Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double norm(Vec2 a) { return std::sqrt(dot(a, a)); }

Vec2 unit(Vec2 a) {
    const double n = norm(a);
    if (n < 1e-12) throw ConfigError("degenerate leg geometry (zero length direction)");
    return {a.x / n, a.y / n};
}

// Right-hand normal of a travel direction.
Vec2 right_of(Vec2 u) { return {u.y, -u.x}; }

double point_seg_dist(Vec2 p, Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const double len2 = dot(ab, ab);
    if (len2 < 1e-18) return norm(p - a);
    double t = dot(p - a, ab) / len2;
    t = std::clamp(t, 0.0, 1.0);
    return norm(p - (a + ab * t));
}

double seg_seg_dist(Vec2 a1, Vec2 a2, Vec2 b1, Vec2 b2) {
    auto orient = [](Vec2 p, Vec2 q, Vec2 r) {
        return (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
    };
    const double o1 = orient(a1, a2, b1), o2 = orient(a1, a2, b2);
    const double o3 = orient(b1, b2, a1), o4 = orient(b1, b2, a2);
    if (((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0))) return 0.0;  // proper crossing
    return std::min(std::min(point_seg_dist(a1, b1, b2), point_seg_dist(a2, b1, b2)),
                    std::min(point_seg_dist(b1, a1, a2), point_seg_dist(b2, a1, a2)));
}

// Movements conflict when their straight paths across the area come within
// this clearance of each other. Parallel adjacent lanes (one lane width
// apart) stay clear; crossing and merging paths do not.
constexpr double kConflictClearance = 1.0;

struct MovementPath {
    Vec2 entry, exit;
};

MovementPath movement_path(const NetworkSpec& net, const IntersectionSpec& is,
                           const Movement& m) {
    const NodeSpec& c = net.node(is.id);
    const Vec2 center{c.x, c.y};
    const double half = net.conflict_area_len / 2.0;

    const LegSpec& in = net.leg(m.in_leg);
    const LegSpec& out = net.leg(m.out_leg);
    const NodeSpec& in_from = net.node(in.from_node);
    const NodeSpec& out_to = net.node(out.to_node);

    const Vec2 u = unit(center - Vec2{in_from.x, in_from.y});   // into the area
    const Vec2 w = unit(Vec2{out_to.x, out_to.y} - center);     // out of the area

    const double off_in = net.lane_width * (0.5 + m.in_lane);
    const double off_out = net.lane_width * (0.5 + m.out_lane);

    MovementPath p;
    p.entry = center - u * half + right_of(u) * off_in;
    p.exit = center + w * half + right_of(w) * off_out;
    return p;
}

void compute_conflicts(const NetworkSpec& net, IntersectionSpec& is) {
    is.conflict_pairs.clear();
    std::vector<MovementPath> paths;
    paths.reserve(is.movements.size());
    for (const auto& m : is.movements) paths.push_back(movement_path(net, is, m));
    for (std::size_t a = 0; a < is.movements.size(); ++a) {
        for (std::size_t b = a + 1; b < is.movements.size(); ++b) {
            const Movement& ma = is.movements[a];
            const Movement& mb = is.movements[b];
            if (ma.in_leg == mb.in_leg && ma.in_lane == mb.in_lane) continue;  // same-lane
            const double dist = seg_seg_dist(paths[a].entry, paths[a].exit,
                                             paths[b].entry, paths[b].exit);
            if (dist < kConflictClearance) {
                is.conflict_pairs.insert({std::min(ma.id, mb.id), std::max(ma.id, mb.id)});
            }
        }
    }
}

}  // namespace

const Movement& IntersectionSpec::movement(int mid) const {
    for (const auto& m : movements)
        if (m.id == mid) return m;
    throw ConfigError("unknown movement " + std::to_string(mid) + " at intersection " +
                      std::to_string(id));
}

const NodeSpec& NetworkSpec::node(int id) const {
    for (const auto& n : nodes)
        if (n.id == id) return n;
    throw ConfigError("unknown node " + std::to_string(id));
}

const LegSpec& NetworkSpec::leg(int id) const {
    for (const auto& l : legs)
        if (l.id == id) return l;
    throw ConfigError("unknown leg " + std::to_string(id));
}

const IntersectionSpec& NetworkSpec::intersection(int id) const {
    for (const auto& i : intersections)
        if (i.id == id) return i;
    throw ConfigError("unknown intersection " + std::to_string(id));
}

std::vector<int> NetworkSpec::approach_legs(int intersection_id) const {
    std::vector<int> out;
    for (const auto& l : legs)
        if (l.to_node == intersection_id) out.push_back(l.id);
    return out;
}

std::map<std::pair<int, int>, std::vector<int>> NetworkSpec::entry_points() const {
    std::map<std::pair<int, int>, std::vector<int>> out;
    for (const auto& r : routes) out[{r.entry_leg, r.entry_lane}].push_back(r.id);
    return out;
}

void NetworkSpec::validate() const {
    if (intersections.empty()) throw ConfigError("network has no intersections");
    for (const auto& l : legs) {
        if (!(l.length > 0.0))
            throw ConfigError("leg " + std::to_string(l.id) + " has non-positive length");
        if (l.lanes < 1) throw ConfigError("leg " + std::to_string(l.id) + " has no lanes");
        node(l.from_node);
        node(l.to_node);
    }
    for (const auto& is : intersections) {
        const auto& n = node(is.id);
        if (!n.is_intersection())
            throw ConfigError("intersection id " + std::to_string(is.id) + " must be positive");
        for (const auto& m : is.movements) {
            const auto& in = leg(m.in_leg);
            const auto& out = leg(m.out_leg);
            if (in.to_node != is.id || out.from_node != is.id)
                throw ConfigError("movement " + std::to_string(m.id) + " at intersection " +
                                  std::to_string(is.id) + " references detached legs");
            if (m.in_lane < 0 || m.in_lane >= in.lanes || m.out_lane < 0 || m.out_lane >= out.lanes)
                throw ConfigError("movement " + std::to_string(m.id) + " lane out of range");
        }
        for (const auto& [a, b] : is.conflict_pairs) {
            if (a == b) throw ConfigError("conflict relation must be irreflexive");
            const Movement& ma = is.movement(a);
            const Movement& mb = is.movement(b);
            if (ma.in_leg == mb.in_leg && ma.in_lane == mb.in_lane)
                throw ConfigError("movements on the same in-lane are same-lane precedence, "
                                  "not a conflict pair");
        }
    }
    for (const auto& r : routes) {
        if (r.steps.empty()) throw ConfigError("route " + std::to_string(r.id) + " has no steps");
        int cur_leg = r.entry_leg;
        int cur_lane = r.entry_lane;
        for (const auto& step : r.steps) {
            const auto& is = intersection(step.intersection);
            const Movement& m = is.movement(step.movement);
            if (m.in_leg != cur_leg || m.in_lane != cur_lane)
                throw ConfigError("route " + std::to_string(r.id) +
                                  " is disconnected at intersection " +
                                  std::to_string(step.intersection));
            if (leg(cur_leg).to_node != step.intersection)
                throw ConfigError("route " + std::to_string(r.id) +
                                  " approach leg does not reach intersection " +
                                  std::to_string(step.intersection));
            cur_leg = m.out_leg;
            cur_lane = m.out_lane;
        }
        if (node(leg(cur_leg).to_node).is_intersection())
            throw ConfigError("route " + std::to_string(r.id) +
                              " must end on a leg reaching a boundary terminal");
    }
}

Zone DivisionMap::zone_of(int intersection_id, int leg_id, double dist_to_line) const {
    const Spans& s = at(intersection_id, leg_id);
    if (dist_to_line <= s.area_end) return Zone::InsideArea;
    if (dist_to_line <= s.seg_end) return Zone::Segment;
    return Zone::Outside;
}

const DivisionMap::Spans& DivisionMap::at(int intersection_id, int leg_id) const {
    auto it = spans.find({intersection_id, leg_id});
    if (it == spans.end())
        throw ConfigError("no division entry for intersection " + std::to_string(intersection_id) +
                          ", leg " + std::to_string(leg_id));
    return it->second;
}

DivisionMap divide_network(const NetworkSpec& net, const DivisionParams& params) {
    if (!(params.l_c > 0.0)) throw ConfigError("l_c must be positive");
    if (!(params.delta_t > 0.0)) throw ConfigError("delta_t must be positive");
    if (params.l_r < 0.0) throw ConfigError("l_r must be non-negative");

    DivisionMap map;
    map.params = params;
    const double min_lr = params.v_c * params.delta_t;
    for (const auto& is : net.intersections) {
        for (int leg_id : net.approach_legs(is.id)) {
            const LegSpec& l = net.leg(leg_id);
            if (l.length + 1e-9 < params.l_c) {
                std::ostringstream msg;
                msg << "approach leg " << leg_id << " (" << l.length
                    << " m) is shorter than the intersection-area range l_c=" << params.l_c
                    << " m at intersection " << is.id;
                throw ConfigError(msg.str());
            }
            const double lr = params.lr_for_leg(leg_id);
            const double seg_span = std::min(lr, l.length - params.l_c);
            if (seg_span + 1e-9 < min_lr) {
                std::ostringstream msg;
                msg << "considered road segment on leg " << leg_id << " is " << seg_span
                    << " m, below v_c*delta_t=" << min_lr
                    << " m; reservation coverage requires every vehicle on a segment to be "
                       "planned at least once before it enters the intersection area "
                       "(l_r >= v_c * delta_t)";
                throw ConfigError(msg.str());
            }
            DivisionMap::Spans spans;
            spans.area_end = params.l_c;
            spans.seg_end = std::min(params.l_c + lr, l.length);
            map.spans[{is.id, leg_id}] = spans;
        }
    }
    return map;
}

void recompute_geometric_conflicts(NetworkSpec& net) {
    for (auto& is : net.intersections) compute_conflicts(net, is);
}

std::set<std::pair<std::size_t, std::size_t>> conflict_pairs_at(
    const NetworkSpec& net, int k, const std::vector<int>& movements) {
    const IntersectionSpec& is = net.intersection(k);
    for (int m : movements) is.movement(m);  // existence check
    std::set<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t a = 0; a < movements.size(); ++a)
        for (std::size_t b = a + 1; b < movements.size(); ++b)
            if (is.conflicts(movements[a], movements[b])) out.insert({a, b});
    return out;
}

namespace {

// Shared scaffolding for the built-in generators.
class Builder {
public:
    explicit Builder(double area_len) { net_.conflict_area_len = area_len; }

    int add_node(double x, double y, bool intersection) {
        const int id = intersection ? next_intersection_++ : next_terminal_--;
        net_.nodes.push_back({id, x, y});
        if (intersection) net_.intersections.push_back({id, {}, {}});
        return id;
    }

    int add_leg(int from, int to, double length, int lanes) {
        const int id = static_cast<int>(net_.legs.size());
        net_.legs.push_back({id, from, to, length, lanes});
        return id;
    }

    // Two one-way legs between a and b.
    std::pair<int, int> add_link(int a, int b, double length, int lanes) {
        return {add_leg(a, b, length, lanes), add_leg(b, a, length, lanes)};
    }

    int add_through(int intersection, int in_leg, int out_leg, int lane) {
        for (auto& is : net_.intersections) {
            if (is.id != intersection) continue;
            const int id = static_cast<int>(is.movements.size());
            is.movements.push_back({id, in_leg, lane, out_leg, lane});
            return id;
        }
        throw ConfigError("builder: unknown intersection");
    }

    // Follows matching through-movements from a boundary entry lane until a
    // terminal is reached.
    void add_straight_route(int entry_leg, int lane) {
        Route r;
        r.id = static_cast<int>(net_.routes.size());
        r.entry_leg = entry_leg;
        r.entry_lane = lane;
        int cur_leg = entry_leg;
        while (true) {
            const LegSpec& l = net_.leg(cur_leg);
            const NodeSpec& to = net_.node(l.to_node);
            if (!to.is_intersection()) break;
            const IntersectionSpec& is = net_.intersection(to.id);
            const Movement* next = nullptr;
            for (const auto& m : is.movements)
                if (m.in_leg == cur_leg && m.in_lane == lane) { next = &m; break; }
            if (next == nullptr)
                throw ConfigError("builder: no through movement continues the route");
            r.steps.push_back({to.id, next->id});
            cur_leg = next->out_leg;
        }
        net_.routes.push_back(std::move(r));
    }

    NetworkSpec finish() {
        for (auto& is : net_.intersections) compute_conflicts(net_, is);
        net_.validate();
        return std::move(net_);
    }

    NetworkSpec& net() { return net_; }

private:
    NetworkSpec net_;
    int next_intersection_ = 1;
    int next_terminal_ = -1;
};

// Attaches a terminal plus in/out legs on the given compass side of an
// intersection node. Returns (in_leg_to_intersection, out_leg_to_terminal).
std::pair<int, int> attach_terminal(Builder& b, int intersection, double cx, double cy,
                                    char side, double len, int lanes, double area_len) {
    const double reach = len + area_len;  // geometric placement only
    double tx = cx, ty = cy;
    switch (side) {
        case 'W': tx -= reach; break;
        case 'E': tx += reach; break;
        case 'N': ty += reach; break;
        case 'S': ty -= reach; break;
        default: throw ConfigError("bad side");
    }
    const int t = b.add_node(tx, ty, false);
    const int in = b.add_leg(t, intersection, len, lanes);
    const int out = b.add_leg(intersection, t, len, lanes);
    return {in, out};
}

}  // namespace

NetworkSpec make_single_intersection(double boundary_len, int lanes) {
    Builder b(20.0);
    const int i1 = b.add_node(0, 0, true);
    auto [w_in, w_out] = attach_terminal(b, i1, 0, 0, 'W', boundary_len, lanes, 20.0);
    auto [e_in, e_out] = attach_terminal(b, i1, 0, 0, 'E', boundary_len, lanes, 20.0);
    auto [n_in, n_out] = attach_terminal(b, i1, 0, 0, 'N', boundary_len, lanes, 20.0);
    auto [s_in, s_out] = attach_terminal(b, i1, 0, 0, 'S', boundary_len, lanes, 20.0);
    for (int q = 0; q < lanes; ++q) {
        b.add_through(i1, w_in, e_out, q);
        b.add_through(i1, e_in, w_out, q);
        b.add_through(i1, n_in, s_out, q);
        b.add_through(i1, s_in, n_out, q);
    }
    for (int q = 0; q < lanes; ++q) {
        b.add_straight_route(w_in, q);
        b.add_straight_route(e_in, q);
        b.add_straight_route(n_in, q);
        b.add_straight_route(s_in, q);
    }
    return b.finish();
}

NetworkSpec make_corridor2(double gap, double boundary_len, int lanes) {
    const double area = 20.0;
    Builder b(area);
    const double dx = gap + area;  // center-to-center spacing
    const int i1 = b.add_node(0, 0, true);
    const int i2 = b.add_node(dx, 0, true);
    auto [i12, i21] = b.add_link(i1, i2, gap, lanes);

    auto [w1_in, w1_out] = attach_terminal(b, i1, 0, 0, 'W', boundary_len, lanes, area);
    auto [n1_in, n1_out] = attach_terminal(b, i1, 0, 0, 'N', boundary_len, lanes, area);
    auto [s1_in, s1_out] = attach_terminal(b, i1, 0, 0, 'S', boundary_len, lanes, area);
    auto [e2_in, e2_out] = attach_terminal(b, i2, dx, 0, 'E', boundary_len, lanes, area);
    auto [n2_in, n2_out] = attach_terminal(b, i2, dx, 0, 'N', boundary_len, lanes, area);
    auto [s2_in, s2_out] = attach_terminal(b, i2, dx, 0, 'S', boundary_len, lanes, area);

    for (int q = 0; q < lanes; ++q) {
        b.add_through(i1, w1_in, i12, q);   // eastbound
        b.add_through(i1, i21, w1_out, q);  // westbound
        b.add_through(i1, n1_in, s1_out, q);
        b.add_through(i1, s1_in, n1_out, q);
        b.add_through(i2, i12, e2_out, q);
        b.add_through(i2, e2_in, i21, q);
        b.add_through(i2, n2_in, s2_out, q);
        b.add_through(i2, s2_in, n2_out, q);
    }
    for (int q = 0; q < lanes; ++q) {
        b.add_straight_route(w1_in, q);
        b.add_straight_route(e2_in, q);
        b.add_straight_route(n1_in, q);
        b.add_straight_route(s1_in, q);
        b.add_straight_route(n2_in, q);
        b.add_straight_route(s2_in, q);
    }
    return b.finish();
}

NetworkSpec make_grid4(double gap, double boundary_len, int lanes) {
    const double area = 20.0;
    Builder b(area);
    const double d = gap + area;
    const int i1 = b.add_node(0, d, true);   // NW
    const int i2 = b.add_node(d, d, true);   // NE
    const int i3 = b.add_node(0, 0, true);   // SW
    const int i4 = b.add_node(d, 0, true);   // SE

    auto [l12, l21] = b.add_link(i1, i2, gap, lanes);
    auto [l34, l43] = b.add_link(i3, i4, gap, lanes);
    auto [l13, l31] = b.add_link(i1, i3, gap, lanes);
    auto [l24, l42] = b.add_link(i2, i4, gap, lanes);

    auto [w1_in, w1_out] = attach_terminal(b, i1, 0, d, 'W', boundary_len, lanes, area);
    auto [n1_in, n1_out] = attach_terminal(b, i1, 0, d, 'N', boundary_len, lanes, area);
    auto [n2_in, n2_out] = attach_terminal(b, i2, d, d, 'N', boundary_len, lanes, area);
    auto [e2_in, e2_out] = attach_terminal(b, i2, d, d, 'E', boundary_len, lanes, area);
    auto [w3_in, w3_out] = attach_terminal(b, i3, 0, 0, 'W', boundary_len, lanes, area);
    auto [s3_in, s3_out] = attach_terminal(b, i3, 0, 0, 'S', boundary_len, lanes, area);
    auto [s4_in, s4_out] = attach_terminal(b, i4, d, 0, 'S', boundary_len, lanes, area);
    auto [e4_in, e4_out] = attach_terminal(b, i4, d, 0, 'E', boundary_len, lanes, area);

    for (int q = 0; q < lanes; ++q) {
        b.add_through(i1, w1_in, l12, q);
        b.add_through(i1, l21, w1_out, q);
        b.add_through(i1, n1_in, l13, q);
        b.add_through(i1, l31, n1_out, q);

        b.add_through(i2, l12, e2_out, q);
        b.add_through(i2, e2_in, l21, q);
        b.add_through(i2, n2_in, l24, q);
        b.add_through(i2, l42, n2_out, q);

        b.add_through(i3, w3_in, l34, q);
        b.add_through(i3, l43, w3_out, q);
        b.add_through(i3, l13, s3_out, q);
        b.add_through(i3, s3_in, l31, q);

        b.add_through(i4, l34, e4_out, q);
        b.add_through(i4, e4_in, l43, q);
        b.add_through(i4, l24, s4_out, q);
        b.add_through(i4, s4_in, l42, q);
    }
    for (int q = 0; q < lanes; ++q) {
        b.add_straight_route(w1_in, q);
        b.add_straight_route(n1_in, q);
        b.add_straight_route(n2_in, q);
        b.add_straight_route(e2_in, q);
        b.add_straight_route(w3_in, q);
        b.add_straight_route(s3_in, q);
        b.add_straight_route(s4_in, q);
        b.add_straight_route(e4_in, q);
    }
    return b.finish();
}

NetworkSpec make_star5(const std::vector<double>& arm_gaps, double boundary_len, int lanes) {
    if (arm_gaps.size() != 4) throw ConfigError("star network needs exactly 4 arm gaps");
    const double area = 20.0;
    Builder b(area);

    const int c = b.add_node(0, 0, true);  // center, intersection 1
    const std::array<char, 4> sides = {'W', 'N', 'E', 'S'};
    std::array<int, 4> peri{};
    std::array<std::pair<int, int>, 4> links{};  // (center->peri, peri->center)
    for (int a = 0; a < 4; ++a) {
        const double d = arm_gaps[a] + area;
        double px = 0, py = 0;
        switch (sides[a]) {
            case 'W': px = -d; break;
            case 'N': py = d; break;
            case 'E': px = d; break;
            case 'S': py = -d; break;
        }
        peri[a] = b.add_node(px, py, true);
        links[a] = b.add_link(c, peri[a], arm_gaps[a], lanes);
    }

    // Peripheral terminals: the outward radial side plus the two lateral
    // sides of each peripheral intersection.
    struct Ext {
        int in, out;
    };
    std::array<Ext, 4> radial{};                 // outer end of each arm
    std::array<std::array<Ext, 2>, 4> lateral{};  // two cross streets per peripheral
    for (int a = 0; a < 4; ++a) {
        const NodeSpec& pn = b.net().node(peri[a]);
        const char outward = sides[a];
        auto [rin, rout] = attach_terminal(b, peri[a], pn.x, pn.y, outward, boundary_len,
                                           lanes, area);
        radial[a] = {rin, rout};
        const std::array<char, 2> lat =
            (outward == 'W' || outward == 'E') ? std::array<char, 2>{'N', 'S'}
                                               : std::array<char, 2>{'W', 'E'};
        for (int s = 0; s < 2; ++s) {
            auto [lin, lout] = attach_terminal(b, peri[a], pn.x, pn.y, lat[s], boundary_len,
                                               lanes, area);
            lateral[a][s] = {lin, lout};
        }
    }

    // Through movements. Radial axes run across the peripheral intersection
    // and the center; opposite arms pair up (W<->E, N<->S).
    const int W = 0, N = 1, E = 2, S = 3;
    for (int q = 0; q < lanes; ++q) {
        // center: all four straight-through crossings
        b.add_through(c, links[W].second, links[E].first, q);  // eastbound
        b.add_through(c, links[E].second, links[W].first, q);  // westbound
        b.add_through(c, links[N].second, links[S].first, q);  // southbound
        b.add_through(c, links[S].second, links[N].first, q);  // northbound
        for (int a = 0; a < 4; ++a) {
            // radial through the peripheral intersection, both directions
            b.add_through(peri[a], radial[a].in, links[a].second, q);
            b.add_through(peri[a], links[a].first, radial[a].out, q);
            // lateral cross street
            b.add_through(peri[a], lateral[a][0].in, lateral[a][1].out, q);
            b.add_through(peri[a], lateral[a][1].in, lateral[a][0].out, q);
        }
    }
    for (int q = 0; q < lanes; ++q) {
        for (int a = 0; a < 4; ++a) {
            b.add_straight_route(radial[a].in, q);
            b.add_straight_route(lateral[a][0].in, q);
            b.add_straight_route(lateral[a][1].in, q);
        }
    }
    return b.finish();
}

}  // namespace coopdrive
