#include "coopdrive/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <memory>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace coopdrive {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Precomputed route coordinates: s runs from the spawn point (0) to the
// network exit; line_s[i] is the stop line of the i-th crossed intersection.
struct RouteGeom {
    std::vector<double> line_s;
    std::vector<double> leg_start_s;
    std::vector<int> leg;   // approach leg per step
    std::vector<int> lane;  // approach lane per step
    int exit_leg = -1;
    int exit_lane = 0;
    double exit_start_s = 0.0;
    double exit_s = 0.0;
};

RouteGeom build_geom(const NetworkSpec& net, const Route& r) {
    RouteGeom g;
    double s = 0.0;
    int cur_leg = r.entry_leg;
    int cur_lane = r.entry_lane;
    for (const auto& step : r.steps) {
        g.leg_start_s.push_back(s);
        g.leg.push_back(cur_leg);
        g.lane.push_back(cur_lane);
        s += net.leg(cur_leg).length;
        g.line_s.push_back(s);
        s += net.conflict_area_len;
        const Movement& m = net.intersection(step.intersection).movement(step.movement);
        cur_leg = m.out_leg;
        cur_lane = m.out_lane;
    }
    g.exit_leg = cur_leg;
    g.exit_lane = cur_lane;
    g.exit_start_s = s;
    g.exit_s = s + net.leg(cur_leg).length;
    return g;
}

enum class Mode { Approach, Crossing, ExitLeg, Done };

struct Vehicle {
    int vid = -1;
    const Route* route = nullptr;
    const RouteGeom* geom = nullptr;
    double spawn_time = 0.0;
    double s = 0.0;
    double v = 0.0;
    std::size_t hop = 0;
    Mode mode = Mode::Approach;

    bool has_profile = false;
    SpeedProfile profile;
    double prof_t0 = 0.0;
    LongitudinalState prof_anchor;
    double assigned = kNaN;
    std::map<int, double> reserved;

    bool dirty = false;
    bool was_in_area = false;
    double baseline_next = 0.0;
    VehicleTraceRecord trace;

    bool alive() const { return mode != Mode::Done; }
    std::pair<int, int> chain_key() const {
        if (mode == Mode::ExitLeg) return {geom->exit_leg, geom->exit_lane};
        return {geom->leg[hop], geom->lane[hop]};
    }
    double leg_pos() const {
        if (mode == Mode::ExitLeg) return s - geom->exit_start_s;
        return s - geom->leg_start_s[hop];
    }
    int intersection_at(std::size_t h) const { return route->steps[h].intersection; }
};

// Closed-form slice of motion steering toward a target speed.
struct Slice {
    double ds = 0.0;
    double v_end = 0.0;
};

Slice steer_to(double v, double target, double span, const KinematicLimits& lim) {
    if (std::abs(v - target) < 1e-12) return {v * span, v};
    const double a = v < target ? lim.a_max : lim.a_min;
    const double t_hit = (target - v) / a;
    if (t_hit >= span) return {v * span + 0.5 * a * span * span, v + a * span};
    return {v * t_hit + 0.5 * a * t_hit * t_hit + target * (span - t_hit), target};
}

Slice brake_to_stop(double v, double span, const KinematicLimits& lim) {
    const double brake = -lim.a_min;
    const double t0 = v / brake;
    if (t0 >= span) return {v * span - 0.5 * brake * span * span, v - brake * span};
    return {v * v / (2.0 * brake), 0.0};
}

// Earliest tau in [0, span] with pos(tau) >= target, pos monotone.
template <typename F>
double solve_reach(F pos, double target, double span) {
    double lo = 0.0, hi = span;
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (pos(mid) >= target) hi = mid; else lo = mid;
    }
    return hi;
}

double round6(double x) {
    if (std::isnan(x)) return x;
    return std::round(x * 1e6) / 1e6;
}

class World {
public:
    World(const ScenarioConfig& cfg, DivisionParams division)
        : cfg_(cfg), division_(std::move(division)) {
        ctx_.net = &cfg_.network;
        ctx_.division = divide_network(cfg_.network, division_);
        ctx_.limits = cfg_.limits;
        ctx_.gaps = cfg_.gaps;
        ctx_.cfg = cfg_.rolling;
        coord_ = std::make_unique<Coordinator>(ctx_, cfg_.seed);

        for (const auto& r : cfg_.network.routes) geoms_[r.id] = build_geom(cfg_.network, r);

        const auto entries = cfg_.network.entry_points();
        const double per_lane =
            entries.empty() ? 0.0 : cfg_.arrival_rate / static_cast<double>(entries.size());
        for (const auto& ev :
             spawn_arrivals(per_lane, cfg_.seed, cfg_.duration, cfg_.network))
            pending_[{ev.entry_leg, ev.entry_lane}].push_back(ev);
    }

    RunResult run() {
        const auto wall0 = std::chrono::steady_clock::now();
        const long n_steps = std::lround(cfg_.duration / cfg_.dt);
        const long tick_steps = std::lround(cfg_.rolling.delta_t / cfg_.dt);
        for (long step = 0; step < n_steps; ++step) {
            const double t = static_cast<double>(step) * cfg_.dt;
            spawn_pending(t);
            if (step % tick_steps == 0) planning_tick(t);
            advance_all(t, cfg_.dt);
        }
        RunResult out;
        for (const auto& veh : vehicles_) out.trace.push_back(veh.trace);
        out.planning = coord_->log();
        out.violations = audit_safety(out.trace, cfg_.network, cfg_.gaps);
        out.summary = summarize(cfg_, out.trace, coord_->cold_entries(), coord_->relaxations(),
                                static_cast<int>(out.violations.size()));
        out.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
        return out;
    }

private:
    using ChainKey = std::pair<int, int>;

    void spawn_pending(double t) {
        const double block_span = cfg_.gaps.same_lane * cfg_.limits.v_c;
        for (auto& [key, queue] : pending_) {
            while (!queue.empty() && queue.front().time <= t + 1e-12) {
                auto it = last_spawn_.find(key);
                if (it != last_spawn_.end()) {
                    const Vehicle& prev = vehicles_[it->second];
                    if (prev.alive() && prev.chain_key() == key && prev.leg_pos() < block_span)
                        break;  // entry cell blocked; keep the queue
                }
                do_spawn(queue.front(), t);
                last_spawn_[key] = static_cast<int>(vehicles_.size() - 1);
                queue.pop_front();
            }
        }
    }

    void do_spawn(const ArrivalEvent& ev, double t) {
        Vehicle veh;
        veh.vid = static_cast<int>(vehicles_.size());
        veh.route = &route_by_id(ev.route_id);
        veh.geom = &geoms_.at(ev.route_id);
        veh.spawn_time = t;
        veh.s = 0.0;
        veh.v = cfg_.limits.v_c;
        veh.trace.vid = veh.vid;
        veh.trace.spawn_time = t;
        veh.trace.entry_leg = ev.entry_leg;
        veh.trace.entry_lane = ev.entry_lane;
        veh.trace.route_id = ev.route_id;
        veh.baseline_next = t + approach_freeflow(veh, 0, cfg_.limits.v_c);
        vehicles_.push_back(std::move(veh));
    }

    const Route& route_by_id(int id) const {
        for (const auto& r : cfg_.network.routes)
            if (r.id == id) return r;
        throw ConfigError("unknown route id " + std::to_string(id));
    }

    // Free-flow time from distance d0 (defaults to the whole approach leg) to
    // the stop line of hop h, entering the leg at speed v0: cruise-model
    // outside the area, time-optimal inside.
    double approach_freeflow(const Vehicle& veh, std::size_t h, double v0,
                             double d0 = -1.0) const {
        const int k = veh.intersection_at(h);
        const auto& spans = ctx_.division.at(k, veh.geom->leg[h]);
        const double leg_len = cfg_.network.leg(veh.geom->leg[h]).length;
        const double d = d0 < 0.0 ? leg_len : d0;
        const double outside = std::max(0.0, d - spans.area_end);
        const CruiseTravel ct = cruise_travel(outside, v0, cfg_.limits);
        const LongitudinalState at_boundary{std::min(d, spans.area_end), ct.v_end};
        return ct.time + minimal_arrival_time(at_boundary, cfg_.limits);
    }

    void planning_tick(double t) {
        std::vector<AreaSnapshot> snaps;
        std::map<int, std::size_t> by_k;
        for (const auto& is : cfg_.network.intersections) {
            by_k[is.id] = snaps.size();
            snaps.push_back({is.id, t, {}, {}});
        }
        for (auto& veh : vehicles_) {
            if (!veh.alive() || veh.mode != Mode::Approach) continue;
            const int k = veh.intersection_at(veh.hop);
            const double d = veh.geom->line_s[veh.hop] - veh.s;
            const Zone zone = ctx_.division.zone_of(k, veh.geom->leg[veh.hop], d);
            if (zone == Zone::Outside) continue;
            SnapVehicle sv;
            sv.vid = veh.vid;
            sv.dist_to_line = d;
            sv.velocity = veh.v;
            sv.route = veh.route;
            sv.hop = veh.hop;
            sv.zone = zone;
            if (zone == Zone::InsideArea) {
                sv.prev_assign = veh.assigned;
                snaps[by_k[k]].in_area.push_back(sv);
            } else {
                auto it = veh.reserved.find(k);
                sv.prev_assign = it == veh.reserved.end() ? kNaN : it->second;
                snaps[by_k[k]].segment.push_back(sv);
            }
        }
        const TickApply apply = coord_->planning_tick(t, snaps);
        for (const auto& [key, time] : apply.trajectories) {
            Vehicle& veh = vehicles_[key.first];
            veh.assigned = time;
            synthesize(veh, time, t);
        }
        for (const auto& [key, time] : apply.reservations)
            vehicles_[key.first].reserved[key.second] = time;
    }

    void synthesize(Vehicle& veh, double target_abs, double now) {
        const double d = veh.geom->line_s[veh.hop] - veh.s;
        const LongitudinalState state{std::max(0.0, d), veh.v};
        const double t_min = minimal_arrival_time(state, cfg_.limits);
        const double target = std::max(target_abs - now, t_min);
        try {
            veh.profile = synthesize_profile(state, target, cfg_.limits);
        } catch (const ProfileInfeasible&) {
            // State drift pushed the target beyond the latest achievable
            // arrival; run to the latest instead.
            const double latest = latest_arrival_time(state, cfg_.limits);
            ++drift_events_;
            veh.profile =
                synthesize_profile(state, std::max(t_min, latest - 1e-9), cfg_.limits);
        }
        veh.prof_t0 = now;
        veh.prof_anchor = state;
        veh.has_profile = true;
        veh.dirty = false;
    }

    void rebuild_chains() {
        chains_.clear();
        for (std::size_t i = 0; i < vehicles_.size(); ++i) {
            const Vehicle& veh = vehicles_[i];
            if (!veh.alive()) continue;
            chains_[veh.chain_key()].push_back(static_cast<int>(i));
        }
        for (auto& [key, members] : chains_) {
            std::sort(members.begin(), members.end(), [&](int a, int b) {
                const double pa = vehicles_[a].leg_pos();
                const double pb = vehicles_[b].leg_pos();
                if (pa != pb) return pa > pb;  // front first
                return vehicles_[a].vid < vehicles_[b].vid;
            });
        }
    }

    void advance_all(double t, double dt) {
        rebuild_chains();
        pre_pos_.assign(vehicles_.size(), 0.0);
        pre_v_.assign(vehicles_.size(), 0.0);
        for (std::size_t i = 0; i < vehicles_.size(); ++i) {
            if (!vehicles_[i].alive()) continue;
            pre_pos_[i] = vehicles_[i].leg_pos();
            pre_v_[i] = vehicles_[i].v;
        }

        for (auto& [key, members] : chains_) {
            double leader_pos = kNaN;  // post-step leg_pos of the member ahead
            double leader_v = 0.0;
            for (std::size_t mi = 0; mi < members.size(); ++mi) {
                Vehicle& veh = vehicles_[members[mi]];
                const double gap = std::max(2.0, cfg_.gaps.same_lane * veh.v);
                double allowed = kInf;
                double allowed_v = kInf;
                if (mi > 0 && !std::isnan(leader_pos)) {
                    allowed = veh.s + (leader_pos - gap - veh.leg_pos());
                    allowed_v = leader_v;
                } else if (mi == 0) {
                    // Virtual leader: the rearmost vehicle of the chain this
                    // one enters next, at its pre-step position.
                    const auto next = next_chain_key(veh);
                    if (next) {
                        auto cit = chains_.find(*next);
                        if (cit != chains_.end() && !cit->second.empty()) {
                            const int tail = cit->second.back();
                            allowed = veh.s + (chain_end_pos(veh) - veh.leg_pos()) +
                                      pre_pos_[tail] - gap;
                            allowed_v = pre_v_[tail];
                        }
                    }
                }
                advance_vehicle(veh, t, dt, allowed, allowed_v);
                if (veh.alive() && veh.chain_key() == key) {
                    leader_pos = veh.leg_pos();
                    leader_v = veh.v;
                } else {
                    leader_pos = kNaN;  // left this chain mid-step
                }
            }
        }

        // Post-step transitions: area entries (reservation activation) and
        // profile repair after guard clamps.
        const double now = t + dt;
        for (auto& veh : vehicles_) {
            if (!veh.alive() || veh.mode != Mode::Approach) continue;
            const int k = veh.intersection_at(veh.hop);
            const double d = veh.geom->line_s[veh.hop] - veh.s;
            const auto& spans = ctx_.division.at(k, veh.geom->leg[veh.hop]);
            if (!veh.was_in_area && d <= spans.area_end) {
                veh.was_in_area = true;
                if (std::isnan(veh.assigned)) {
                    SnapVehicle sv;
                    sv.vid = veh.vid;
                    sv.dist_to_line = d;
                    sv.velocity = veh.v;
                    sv.route = veh.route;
                    sv.hop = veh.hop;
                    sv.zone = Zone::InsideArea;
                    const auto r = coord_->on_enter_area(sv, k, now);
                    if (r) {
                        veh.assigned = *r;
                        synthesize(veh, *r, now);
                    }
                }
                veh.reserved.erase(k);
            }
            if (veh.dirty) {
                if (veh.has_profile && !std::isnan(veh.assigned))
                    synthesize(veh, veh.assigned, now);
                else
                    veh.dirty = false;
            }
        }
    }

    std::optional<ChainKey> next_chain_key(const Vehicle& veh) const {
        if (veh.mode == Mode::ExitLeg || veh.mode == Mode::Done) return std::nullopt;
        if (veh.hop + 1 < veh.route->steps.size())
            return ChainKey{veh.geom->leg[veh.hop + 1], veh.geom->lane[veh.hop + 1]};
        return ChainKey{veh.geom->exit_leg, veh.geom->exit_lane};
    }

    double chain_end_pos(const Vehicle& veh) const {
        if (veh.mode == Mode::ExitLeg) return cfg_.network.leg(veh.geom->exit_leg).length;
        return cfg_.network.leg(veh.geom->leg[veh.hop]).length +
               cfg_.network.conflict_area_len;
    }

    void advance_vehicle(Vehicle& veh, double t, double dt, double allowed_s, double allowed_v) {
        double cur_t = t;
        double remaining = dt;
        while (remaining > 1e-12 && veh.alive()) {
            switch (veh.mode) {
                case Mode::Approach:
                    if (!approach_slice(veh, cur_t, remaining, allowed_s, allowed_v)) return;
                    break;
                case Mode::Crossing:
                    if (!crossing_slice(veh, cur_t, remaining, allowed_s, allowed_v)) return;
                    break;
                case Mode::ExitLeg:
                    exit_slice(veh, cur_t, remaining, allowed_s, allowed_v);
                    return;
                case Mode::Done:
                    return;
            }
        }
    }

    // Returns false when the slice consumed the whole step. cur_t/remaining
    // are advanced across the stop line.
    bool approach_slice(Vehicle& veh, double& cur_t, double& remaining, double allowed_s,
                        double allowed_v) {
        const double line = veh.geom->line_s[veh.hop];
        double new_s, new_v;
        double cross_tau = -1.0;

        if (veh.has_profile) {
            const double prof_end = veh.prof_t0 + veh.profile.total_time();
            if (cur_t + remaining >= prof_end - 1e-12) {
                cross_tau = std::clamp(prof_end - cur_t, 0.0, remaining);
                const LongitudinalState fin = integrate(veh.prof_anchor, veh.profile,
                                                        prof_end - veh.prof_t0, cfg_.limits);
                new_s = line;
                new_v = fin.velocity;
            } else {
                const LongitudinalState st = integrate(veh.prof_anchor, veh.profile,
                                                       cur_t + remaining - veh.prof_t0,
                                                       cfg_.limits);
                new_s = line - st.distance;
                new_v = st.velocity;
            }
        } else {
            // Unplanned: cruise toward v_c, but never run the stop line.
            const double d = line - veh.s;
            const double brake_d = veh.v * veh.v / (2.0 * -cfg_.limits.a_min);
            Slice sl;
            if (d <= brake_d + 2.0) {
                sl = brake_to_stop(veh.v, remaining, cfg_.limits);
                if (veh.s + sl.ds > line) {
                    const double v0 = veh.v;
                    cross_tau = solve_reach(
                        [&](double tau) { return brake_to_stop(v0, tau, cfg_.limits).ds; }, d,
                        remaining);
                    sl = brake_to_stop(v0, cross_tau, cfg_.limits);
                }
            } else {
                sl = steer_to(veh.v, cfg_.limits.v_c, remaining, cfg_.limits);
                if (veh.s + sl.ds >= line - 1e-9) {
                    const double v0 = veh.v;
                    cross_tau = solve_reach(
                        [&](double tau) { return steer_to(v0, cfg_.limits.v_c, tau, cfg_.limits).ds; },
                        d, remaining);
                    sl = steer_to(v0, cfg_.limits.v_c, cross_tau, cfg_.limits);
                }
            }
            new_s = cross_tau >= 0.0 ? line : veh.s + sl.ds;
            new_v = sl.v_end;
        }

        if (new_s > allowed_s) {
            // Rear-end guard: clamp behind the leader.
            const double clamped = std::max(veh.s, allowed_s);
            new_v = std::min(new_v, std::max(0.0, allowed_v));
            veh.dirty = true;
            if (cross_tau >= 0.0 && clamped >= line - 1e-9) {
                // Leader is already beyond the line; the crossing stands.
                veh.s = line;
                veh.v = new_v;
                begin_crossing(veh, cur_t + cross_tau);
                cur_t += cross_tau;
                remaining -= cross_tau;
                return true;
            }
            veh.s = std::min(clamped, line - 1e-9);
            veh.v = new_v;
            return false;
        }

        if (cross_tau >= 0.0) {
            veh.s = line;
            veh.v = new_v;
            begin_crossing(veh, cur_t + cross_tau);
            cur_t += cross_tau;
            remaining -= cross_tau;
            return true;
        }
        veh.s = new_s;
        veh.v = new_v;
        return false;
    }

    bool crossing_slice(Vehicle& veh, double& cur_t, double& remaining, double allowed_s,
                        double allowed_v) {
        const double area_end_s = veh.geom->line_s[veh.hop] + cfg_.network.conflict_area_len;
        double new_s = veh.s + veh.v * remaining;
        if (new_s > allowed_s) {
            veh.s = std::max(veh.s, std::min(allowed_s, area_end_s - 1e-9));
            veh.v = std::min(veh.v, std::max(0.5, allowed_v));
            veh.dirty = true;
            return false;
        }
        if (new_s < area_end_s) {
            veh.s = new_s;
            return false;
        }
        const double tau = (area_end_s - veh.s) / veh.v;
        finish_crossing(veh, cur_t + tau);
        cur_t += tau;
        remaining -= tau;
        return true;
    }

    void exit_slice(Vehicle& veh, double cur_t, double remaining, double allowed_s,
                    double allowed_v) {
        Slice sl = steer_to(veh.v, cfg_.limits.v_c, remaining, cfg_.limits);
        double new_s = veh.s + sl.ds;
        double new_v = sl.v_end;
        if (new_s > allowed_s) {
            new_s = std::max(veh.s, allowed_s);
            new_v = std::min(new_v, std::max(0.0, allowed_v));
        }
        if (new_s >= veh.geom->exit_s - 1e-9) {
            const double d = veh.geom->exit_s - veh.s;
            const double v0 = veh.v;
            const double tau = solve_reach(
                [&](double x) { return steer_to(v0, cfg_.limits.v_c, x, cfg_.limits).ds; }, d,
                remaining);
            veh.s = veh.geom->exit_s;
            veh.mode = Mode::Done;
            veh.trace.exit_time = cur_t + tau;
            veh.trace.distance = veh.geom->exit_s;
            return;
        }
        veh.s = new_s;
        veh.v = new_v;
    }

    void begin_crossing(Vehicle& veh, double t_entry) {
        const int k = veh.intersection_at(veh.hop);
        const RouteStep& step = veh.route->steps[veh.hop];
        const Movement& m = cfg_.network.intersection(k).movement(step.movement);
        CrossingRecord rec;
        rec.intersection = k;
        rec.movement = m.id;
        rec.in_leg = m.in_leg;
        rec.in_lane = m.in_lane;
        rec.t_minfree = veh.baseline_next;
        rec.t_assign = std::isnan(veh.assigned) ? t_entry : veh.assigned;
        rec.t_entry = t_entry;
        rec.t_exit_area = kNaN;
        veh.trace.crossings.push_back(rec);

        veh.mode = Mode::Crossing;
        veh.v = std::max(1.0, veh.v);  // crossing speed floor
        veh.has_profile = false;
        veh.dirty = false;
    }

    void finish_crossing(Vehicle& veh, double t_exit) {
        const int k = veh.intersection_at(veh.hop);
        veh.trace.crossings.back().t_exit_area = t_exit;
        coord_->on_crossed(veh.vid, k);
        veh.s = veh.geom->line_s[veh.hop] + cfg_.network.conflict_area_len;
        veh.assigned = kNaN;
        veh.was_in_area = false;
        veh.dirty = false;
        ++veh.hop;
        if (veh.hop < veh.route->steps.size()) {
            veh.mode = Mode::Approach;
            veh.baseline_next = t_exit + approach_freeflow(veh, veh.hop, veh.v);
        } else {
            veh.mode = Mode::ExitLeg;
        }
    }

    const ScenarioConfig& cfg_;
    DivisionParams division_;
    CoordinatorContext ctx_;
    std::unique_ptr<Coordinator> coord_;
    std::map<int, RouteGeom> geoms_;
    std::deque<Vehicle> vehicles_;
    std::map<ChainKey, std::deque<ArrivalEvent>> pending_;
    std::map<ChainKey, int> last_spawn_;
    std::map<ChainKey, std::vector<int>> chains_;
    std::vector<double> pre_pos_;
    std::vector<double> pre_v_;
    int drift_events_ = 0;
};

}  // namespace

void ScenarioConfig::validate() const {
    network.validate();
    limits.validate();
    if (!(gaps.same_lane > 0.0) || !(gaps.cross > 0.0))
        throw ConfigError("safety gaps must be positive");
    if (!(dt > 0.0)) throw ConfigError("time step must be positive");
    if (duration < rolling.delta_t)
        throw ConfigError("duration must cover at least one planning interval");
    const double ratio = rolling.delta_t / dt;
    if (std::abs(ratio - std::round(ratio)) > 1e-6)
        throw ConfigError("time step must divide the planning interval delta_t");
    if (arrival_rate < 0.0) throw ConfigError("arrival rate must be non-negative");
    rolling.budget.validate();
    DivisionParams p = division;
    p.v_c = limits.v_c;
    p.delta_t = rolling.delta_t;
    divide_network(network, p);  // enforces l_r >= v_c * delta_t per approach
    if (rolling.mode == CoordMode::PDS && p.l_c < limits.v_c * rolling.delta_t)
        throw ConfigError("PDS needs l_c >= v_c * delta_t so vehicles entering an area are "
                          "planned before reaching the stop line");
    if (rolling.strategy == Strategy::Exact && network.num_intersections() > 2)
        throw ConfigError("the exact strategy enumerates network-wide passing orders and is "
                          "only offered on networks with at most 2 intersections; use ds, dr "
                          "or fifo for larger networks");
}

std::vector<ArrivalEvent> spawn_arrivals(double rate_per_lane, std::uint64_t seed,
                                         double duration, const NetworkSpec& net) {
    std::vector<ArrivalEvent> events;
    if (rate_per_lane <= 0.0) return events;
    const double mean_gap = 3600.0 / rate_per_lane;
    for (const auto& [entry, route_ids] : net.entry_points()) {
        std::mt19937_64 rng(splitmix64(
            seed ^ splitmix64((static_cast<std::uint64_t>(entry.first) << 20) ^
                              static_cast<std::uint64_t>(entry.second + 7))));
        std::exponential_distribution<double> exp_dist(1.0 / mean_gap);
        std::vector<std::pair<int, double>> weighted;
        double wsum = 0.0;
        for (int rid : route_ids) {
            for (const auto& r : net.routes) {
                if (r.id == rid) {
                    weighted.push_back({rid, r.weight});
                    wsum += r.weight;
                }
            }
        }
        if (weighted.empty()) continue;
        double t = 0.0;
        while (true) {
            t += exp_dist(rng);
            if (t > duration) break;
            ArrivalEvent ev;
            ev.time = t;
            ev.entry_leg = entry.first;
            ev.entry_lane = entry.second;
            if (weighted.size() == 1) {
                ev.route_id = weighted[0].first;
            } else {
                double pick = std::uniform_real_distribution<double>(0.0, wsum)(rng);
                ev.route_id = weighted.back().first;
                for (const auto& [rid, w] : weighted) {
                    if (pick < w) {
                        ev.route_id = rid;
                        break;
                    }
                    pick -= w;
                }
            }
            events.push_back(ev);
        }
    }
    std::sort(events.begin(), events.end(), [](const ArrivalEvent& a, const ArrivalEvent& b) {
        return std::tie(a.time, a.entry_leg, a.entry_lane) <
               std::tie(b.time, b.entry_leg, b.entry_lane);
    });
    return events;
}

std::vector<SafetyViolation> audit_safety(const std::vector<VehicleTraceRecord>& trace,
                                          const NetworkSpec& net, const SafetyGaps& gaps,
                                          double eps) {
    struct Entry {
        double t;
        int vid;
        int movement;
        int in_leg;
        int in_lane;
    };
    std::map<int, std::vector<Entry>> per_k;
    for (const auto& rec : trace)
        for (const auto& c : rec.crossings)
            per_k[c.intersection].push_back({c.t_entry, rec.vid, c.movement, c.in_leg, c.in_lane});

    std::vector<SafetyViolation> out;
    for (auto& [k, entries] : per_k) {
        const IntersectionSpec& is = net.intersection(k);
        std::sort(entries.begin(), entries.end(),
                  [](const Entry& a, const Entry& b) { return a.t < b.t; });
        std::map<std::pair<int, int>, Entry> last_on_lane;
        std::map<int, Entry> last_of_movement;
        for (const auto& e : entries) {
            auto lit = last_on_lane.find({e.in_leg, e.in_lane});
            if (lit != last_on_lane.end() && e.t - lit->second.t < gaps.same_lane - eps)
                out.push_back({k, lit->second.vid, e.vid, lit->second.t, e.t, gaps.same_lane,
                               "same_lane"});
            last_on_lane[{e.in_leg, e.in_lane}] = e;

            for (const auto& [prev_mov, pe] : last_of_movement) {
                if (prev_mov == e.movement) continue;
                if (!is.conflicts(prev_mov, e.movement)) continue;
                if (e.t - pe.t < gaps.cross - eps)
                    out.push_back({k, pe.vid, e.vid, pe.t, e.t, gaps.cross, "cross"});
            }
            last_of_movement[e.movement] = e;
        }
    }
    return out;
}

std::vector<SafetyViolation> audit_tracking(const std::vector<VehicleTraceRecord>& trace,
                                            double tol) {
    std::vector<SafetyViolation> out;
    for (const auto& rec : trace)
        for (const auto& c : rec.crossings)
            if (std::abs(c.t_entry - c.t_assign) > tol)
                out.push_back({c.intersection, rec.vid, rec.vid, c.t_assign, c.t_entry, tol,
                               "tracking"});
    return out;
}

MetricsSummary summarize(const ScenarioConfig& cfg, const std::vector<VehicleTraceRecord>& trace,
                         int cold_entries, int relaxations, int safety_violations,
                         const MetricsSummary* baseline) {
    MetricsSummary m;
    m.scenario = cfg.name;
    m.strategy = to_string(cfg.rolling.strategy);
    if (cfg.rolling.strategy == Strategy::Mcts)
        m.strategy += "-" + to_string(cfg.rolling.mode);
    m.seed = cfg.seed;
    m.spawned = static_cast<int>(trace.size());
    m.cold_entries = cold_entries;
    m.relaxations = relaxations;
    m.safety_violations = safety_violations;

    double total_delay = 0.0;
    double total_speed = 0.0;
    for (const auto& rec : trace) {
        if (!rec.crossings.empty()) ++m.counted;
        for (const auto& c : rec.crossings) {
            const double delay = std::max(0.0, c.t_assign - c.t_minfree);
            total_delay += delay;
            m.per_intersection_delay[c.intersection] += delay;
            m.per_intersection_count[c.intersection] += 1;
        }
        if (rec.completed()) {
            ++m.completed;
            total_speed += rec.distance / (rec.exit_time - rec.spawn_time);
        }
    }
    m.avg_total_delay = m.counted > 0 ? total_delay / m.counted : 0.0;
    for (auto& [k, sum] : m.per_intersection_delay)
        sum /= std::max(1, m.per_intersection_count[k]);
    m.avg_speed = m.completed > 0 ? total_speed / m.completed : 0.0;

    if (baseline) {
        if (baseline->scenario != m.scenario || baseline->seed != m.seed)
            throw ConfigError(
                "delay-reduction rate needs a baseline with the same scenario and seed");
        if (baseline->avg_total_delay > 0.0)
            m.eta_total = (baseline->avg_total_delay - m.avg_total_delay) /
                          baseline->avg_total_delay * 100.0;
        if (!baseline->per_intersection_delay.empty() && !m.per_intersection_delay.empty()) {
            const int k = m.per_intersection_delay.begin()->first;
            auto bit = baseline->per_intersection_delay.find(k);
            if (bit != baseline->per_intersection_delay.end() && bit->second > 0.0)
                m.eta_first =
                    (bit->second - m.per_intersection_delay.at(k)) / bit->second * 100.0;
        }
    }
    return m;
}

std::string MetricsSummary::to_json() const {
    nlohmann::ordered_json j;
    j["schema"] = "coopdrive-summary-v1";
    j["scenario"] = scenario;
    j["strategy"] = strategy;
    j["seed"] = seed;
    j["spawned"] = spawned;
    j["completed"] = completed;
    j["counted"] = counted;
    j["avg_total_delay"] = round6(avg_total_delay);
    auto& per = j["per_intersection_delay"] = nlohmann::ordered_json::object();
    for (const auto& [k, d] : per_intersection_delay) per[std::to_string(k)] = round6(d);
    j["avg_speed"] = round6(avg_speed);
    if (!std::isnan(eta_total)) j["eta_total"] = round6(eta_total);
    if (!std::isnan(eta_first)) j["eta_first"] = round6(eta_first);
    j["cold_entries"] = cold_entries;
    j["relaxations"] = relaxations;
    j["safety_violations"] = safety_violations;
    return j.dump(2);
}

RunResult run_scenario(const ScenarioConfig& cfg) {
    cfg.validate();
    DivisionParams p = cfg.division;
    p.v_c = cfg.limits.v_c;
    p.delta_t = cfg.rolling.delta_t;
    World world(cfg, p);
    return world.run();
}

void write_trace_csv(const std::string& path, const std::vector<VehicleTraceRecord>& trace) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << "# schema=coopdrive-trace-v1\n";
    out << "vid,spawn,entry_leg,entry_lane,route,exit_time,distance,crossings\n";
    char buf[64];
    auto fmt = [&](double x) {
        if (std::isnan(x)) return std::string("");
        std::snprintf(buf, sizeof(buf), "%.6f", x);
        return std::string(buf);
    };
    for (const auto& rec : trace) {
        out << rec.vid << ',' << fmt(rec.spawn_time) << ',' << rec.entry_leg << ','
            << rec.entry_lane << ',' << rec.route_id << ',' << fmt(rec.exit_time) << ','
            << fmt(rec.distance) << ',';
        for (std::size_t i = 0; i < rec.crossings.size(); ++i) {
            const auto& c = rec.crossings[i];
            if (i) out << ';';
            out << c.intersection << ':' << c.movement << ':' << c.in_leg << ':' << c.in_lane
                << ':' << fmt(c.t_minfree) << ':' << fmt(c.t_assign) << ':' << fmt(c.t_entry)
                << ':' << fmt(c.t_exit_area);
        }
        out << '\n';
    }
}

void write_planning_jsonl(const std::string& path, const std::vector<PlanningRecord>& log) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    for (const auto& rec : log) {
        nlohmann::ordered_json j;
        j["type"] = "tick";
        j["t_p"] = round6(rec.t_p);
        j["k"] = rec.intersection;
        j["q1"] = rec.q1;
        j["q2"] = rec.q2;
        j["iterations"] = rec.iterations;
        j["objective"] = round6(rec.objective);
        j["wall_ms"] = round6(rec.wall_ms);
        j["complete"] = rec.complete;
        j["relaxed"] = rec.relaxed;
        out << j.dump() << '\n';
    }
}

}  // namespace coopdrive
