#include "coopdrive/coordinator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>

namespace coopdrive {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct VehicleKinematics {
    double t_min_rel;
    double t_max_rel;
};

// Arrival window from the vehicle's current state. In-area vehicles use the
// full dynamics; segment vehicles first traverse the remaining segment under
// the cruise model, then run free inside the area.
VehicleKinematics arrival_window(const SnapVehicle& sv, Zone zone, double area_end,
                                 const KinematicLimits& lim) {
    if (zone == Zone::InsideArea) {
        const LongitudinalState st{sv.dist_to_line, sv.velocity};
        return {minimal_arrival_time(st, lim), latest_arrival_time(st, lim)};
    }
    const double seg_dist = std::max(0.0, sv.dist_to_line - area_end);
    const CruiseTravel ct = cruise_travel(seg_dist, sv.velocity, lim);
    const LongitudinalState at_boundary{area_end, ct.v_end};
    return {ct.time + minimal_arrival_time(at_boundary, lim),
            ct.time + latest_arrival_time(at_boundary, lim)};
}

// Deterministic order completion: carried vehicles keep their previous
// rank, new vehicles follow FIFO, everything respecting precedence.
PassingOrder fallback_order(const SchedulingInstance& inst,
                            const std::map<int, std::vector<int>>& prev_orders) {
    PassingOrder order;
    const int n = static_cast<int>(inst.vehicles.size());
    for (int k : inst.scope) {
        std::map<int, int> prev_rank;
        auto pit = prev_orders.find(k);
        if (pit != prev_orders.end())
            for (std::size_t i = 0; i < pit->second.size(); ++i)
                prev_rank[pit->second[i]] = static_cast<int>(i);

        std::vector<int> users;
        std::vector<int> indeg(n, 0);
        std::vector<std::vector<int>> succ(n);
        for (int v = 0; v < n; ++v)
            if (inst.scope_index(inst.vehicles[v], k) >= 0) users.push_back(v);
        std::vector<char> in_scope(n, 0);
        for (int v : users) in_scope[v] = 1;
        for (const auto& pr : inst.precedence) {
            if (pr.k != k) continue;
            succ[pr.before].push_back(pr.after);
            ++indeg[pr.after];
        }
        auto key = [&](int v) {
            const auto& pv = inst.vehicles[v];
            auto it = prev_rank.find(pv.vid);
            const int carried = it != prev_rank.end() ? 0 : 1;
            const int rank = carried == 0 ? it->second : 0;
            const int hop = inst.scope_index(pv, k);
            const double tmin = [&] {
                double t = pv.t_min0;
                for (int i = 0; i < hop; ++i) t += pv.hop_times[i];
                return t;
            }();
            const int lane = pv.lane_keys.empty() ? 0 : pv.lane_keys[0];
            return std::make_tuple(carried, rank, tmin, lane, pv.vid);
        };
        std::vector<char> placed(n, 0);
        auto& seq = order.at[k];
        for (std::size_t step = 0; step < users.size(); ++step) {
            int pick = -1;
            for (int v : users) {
                if (placed[v] || indeg[v] > 0) continue;
                if (pick < 0 || key(v) < key(pick)) pick = v;
            }
            if (pick < 0) break;
            seq.push_back(pick);
            placed[pick] = 1;
            for (int s : succ[pick])
                if (in_scope[s]) --indeg[s];
        }
    }
    return order;
}

std::vector<int> vids_of(const SchedulingInstance& inst, const std::vector<int>& idxs) {
    std::vector<int> out;
    out.reserve(idxs.size());
    for (int i : idxs) out.push_back(inst.vehicles[i].vid);
    return out;
}

}  // namespace

Strategy strategy_from_string(const std::string& s) {
    if (s == "fifo") return Strategy::Fifo;
    if (s == "dr") return Strategy::DynamicResequence;
    if (s == "ds" || s == "mcts") return Strategy::Mcts;
    if (s == "exact") return Strategy::Exact;
    throw ConfigError("unknown strategy '" + s + "' (expected fifo, dr, ds, pds, exact)");
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::Fifo: return "fifo";
        case Strategy::DynamicResequence: return "dr";
        case Strategy::Mcts: return "mcts";
        case Strategy::Exact: return "exact";
    }
    return "?";
}

std::string to_string(CoordMode m) { return m == CoordMode::DS ? "ds" : "pds"; }

void CoordinatorContext::prepare() {
    planning_gaps.same_lane = gaps.same_lane + cfg.gap_pad;
    planning_gaps.cross = gaps.cross + cfg.gap_pad;
    crossing_time = net->conflict_area_len / limits.v_max;
    leg_freeflow.clear();
    for (const auto& l : net->legs) {
        if (!net->node(l.to_node).is_intersection()) continue;
        if (!net->node(l.from_node).is_intersection()) continue;
        const auto& spans = division.at(l.to_node, l.id);
        const CruiseTravel ct = cruise_travel(l.length - spans.area_end, limits.v_max, limits);
        const LongitudinalState at_boundary{spans.area_end, ct.v_end};
        leg_freeflow[l.id] = ct.time + minimal_arrival_time(at_boundary, limits);
    }
}

double CoordinatorContext::hop_time(int approach_leg) const {
    return crossing_time + leg_freeflow.at(approach_leg);
}

namespace {

struct InstanceBuilder {
    const CoordinatorContext& ctx;
    SchedulingInstance inst;
    std::map<std::tuple<int, int, int>, int> lane_ids;  // (k, in_leg, in_lane) -> dense
    // chains[k][(leg,lane)] -> (dist, idx) of vehicles physically on that lane
    std::map<int, std::map<std::pair<int, int>, std::vector<std::pair<double, int>>>> chains;
    std::map<int, std::vector<std::pair<double, int>>> committed;  // k -> (prev_assign, idx)

    explicit InstanceBuilder(const CoordinatorContext& c) : ctx(c) {
        inst.gaps = ctx.planning_gaps;
        inst.w1 = ctx.cfg.w1;
        inst.w2 = ctx.cfg.w2;
    }

    int lane_key(int k, int leg, int lane) {
        auto [it, fresh] =
            lane_ids.try_emplace(std::make_tuple(k, leg, lane), static_cast<int>(lane_ids.size()));
        return it->second;
    }

    void add(const AreaSnapshot& snap, const SnapVehicle& sv, Zone zone, bool full_route) {
        const int k = snap.intersection;
        PlanVehicle v;
        v.vid = sv.vid;
        v.zone = zone == Zone::InsideArea ? 0 : 1;
        v.prev_assign = sv.prev_assign;

        const std::size_t last = full_route ? sv.route->steps.size() : sv.hop + 1;
        for (std::size_t h = sv.hop; h < last; ++h) {
            const RouteStep& step = sv.route->steps[h];
            const Movement& m =
                ctx.net->intersection(step.intersection).movement(step.movement);
            v.intersections.push_back(step.intersection);
            v.movements.push_back(m.id);
            v.lane_keys.push_back(lane_key(step.intersection, m.in_leg, m.in_lane));
            if (h + 1 < last) {
                const RouteStep& next = sv.route->steps[h + 1];
                const Movement& mn =
                    ctx.net->intersection(next.intersection).movement(next.movement);
                v.hop_times.push_back(ctx.hop_time(mn.in_leg));
            }
        }

        const auto& spans = ctx.division.at(k, v.movements.empty()
                                                   ? 0
                                                   : ctx.net->intersection(k)
                                                         .movement(v.movements[0])
                                                         .in_leg);
        const VehicleKinematics win = arrival_window(sv, zone, spans.area_end, ctx.limits);
        v.t_min0 = snap.timestamp + win.t_min_rel;
        v.t_max = std::isfinite(win.t_max_rel) ? snap.timestamp + win.t_max_rel : kInf;
        v.committed = zone == Zone::InsideArea && !std::isnan(sv.prev_assign) &&
                      sv.prev_assign - snap.timestamp <= ctx.cfg.commit_horizon;

        const int idx = static_cast<int>(inst.vehicles.size());
        const Movement& m0 = ctx.net->intersection(k).movement(v.movements[0]);
        chains[k][{m0.in_leg, m0.in_lane}].push_back({sv.dist_to_line, idx});
        if (v.committed) committed[k].push_back({sv.prev_assign, idx});
        inst.vehicles.push_back(std::move(v));
    }

    void finalize_intersection_structure() {
        for (auto& [k, lanes] : chains) {
            for (auto& [lane, members] : lanes) {
                std::sort(members.begin(), members.end());
                for (std::size_t i = 1; i < members.size(); ++i)
                    inst.precedence.push_back({k, members[i - 1].second, members[i].second,
                                               Precedence::Kind::SameLane});
            }
        }
        for (auto& [k, list] : committed) {
            std::sort(list.begin(), list.end());
            for (std::size_t i = 1; i < list.size(); ++i)
                inst.precedence.push_back(
                    {k, list[i - 1].second, list[i].second, Precedence::Kind::OrderOnly});
        }
    }

    void add_cross_intersection_links() {
        // Vehicles reaching a later intersection on the same entry lane
        // cannot overtake between areas.
        const int n = static_cast<int>(inst.vehicles.size());
        for (int a = 0; a < n; ++a) {
            const PlanVehicle& u = inst.vehicles[a];
            for (int b = a + 1; b < n; ++b) {
                const PlanVehicle& v = inst.vehicles[b];
                for (std::size_t i = 0; i < u.intersections.size(); ++i) {
                    const int k = u.intersections[i];
                    const int j = inst.scope_index(v, k);
                    if (j < 0) continue;
                    if (u.lane_keys[i] != v.lane_keys[j]) continue;
                    if (i == 0 && j == 0) continue;  // physical chain handled above
                    if (i > 0 && j > 0) {
                        // Both arrive via the shared upstream intersection.
                        inst.linked.push_back({u.intersections[i - 1], k, a, b});
                    } else if (i == 0) {
                        inst.precedence.push_back({k, a, b, Precedence::Kind::SameLane});
                    } else {
                        inst.precedence.push_back({k, b, a, Precedence::Kind::SameLane});
                    }
                }
            }
        }
    }

    void set_scope(std::vector<int> scope, bool global) {
        inst.scope = std::move(scope);
        inst.global_scope = global;
        for (int k : inst.scope)
            inst.conflicts[k] = ctx.net->intersection(k).conflict_pairs;
    }
};

}  // namespace

SchedulingInstance build_subproblem(const AreaSnapshot& snap, const CoordinatorContext& ctx) {
    InstanceBuilder b(ctx);
    for (const auto& sv : snap.in_area) b.add(snap, sv, Zone::InsideArea, false);
    b.inst.Q1 = static_cast<int>(snap.in_area.size());
    if (ctx.cfg.mode == CoordMode::DS) {
        for (const auto& sv : snap.segment) b.add(snap, sv, Zone::Segment, false);
        b.inst.Q2 = static_cast<int>(snap.segment.size());
    } else {
        b.inst.Q2 = 0;
    }
    b.finalize_intersection_structure();
    b.set_scope({snap.intersection}, false);
    return std::move(b.inst);
}

SchedulingInstance build_global_instance(const std::vector<AreaSnapshot>& snaps,
                                         const CoordinatorContext& ctx) {
    InstanceBuilder b(ctx);
    std::set<int> ks;
    for (const auto& snap : snaps) {
        for (const auto& sv : snap.in_area) b.add(snap, sv, Zone::InsideArea, true);
        for (const auto& sv : snap.segment) b.add(snap, sv, Zone::Segment, true);
        b.inst.Q1 += static_cast<int>(snap.in_area.size());
        b.inst.Q2 += static_cast<int>(snap.segment.size());
    }
    for (const auto& v : b.inst.vehicles)
        for (int k : v.intersections) ks.insert(k);
    b.finalize_intersection_structure();
    b.add_cross_intersection_links();
    b.set_scope(std::vector<int>(ks.begin(), ks.end()), true);
    return std::move(b.inst);
}

Coordinator::Coordinator(CoordinatorContext ctx, std::uint64_t master_seed)
    : ctx_(std::move(ctx)), master_seed_(master_seed) {
    ctx_.prepare();
}

SolverResult Coordinator::solve_sub(const SchedulingInstance& inst, int k, double /*t_p*/,
                                    long tick_index) {
    SolverBudget budget = ctx_.cfg.budget;
    budget.seed = splitmix64(master_seed_ ^ splitmix64(static_cast<std::uint64_t>(tick_index) *
                                                           1000003ULL +
                                                       static_cast<std::uint64_t>(k)));
    switch (ctx_.cfg.strategy) {
        case Strategy::Fifo: return solve_fifo(inst);
        case Strategy::DynamicResequence: {
            auto it = prev_order_.find(k);
            static const std::vector<int> empty;
            return solve_greedy_resequence(inst, it == prev_order_.end() ? empty : it->second);
        }
        case Strategy::Mcts: return solve_mcts(inst, budget);
        case Strategy::Exact: return solve_exact(inst, budget);
    }
    return solve_fifo(inst);
}

TickApply Coordinator::planning_tick(double t_p, const std::vector<AreaSnapshot>& snaps) {
    TickApply out;
    const long tick = tick_index_++;

    struct SubResult {
        int k = 0;
        SchedulingInstance inst;
        SolverResult res;
        bool relaxed = false;
        double wall_ms = 0.0;
    };

    std::vector<SubResult> results;
    auto run_one = [&](const SchedulingInstance& inst, int k) {
        SubResult sr;
        sr.k = k;
        const auto t0 = std::chrono::steady_clock::now();
        sr.res = solve_sub(inst, k, t_p, tick);
        if (!sr.res.assignment.feasible) {
            PassingOrder fb = fallback_order(inst, prev_order_);
            Assignment a = forward_pass(inst, fb);
            if (!a.feasible) {
                SchedulingInstance relaxed_inst = inst;
                for (auto& v : relaxed_inst.vehicles) v.t_max = kInf;
                a = forward_pass(relaxed_inst, fb);
            }
            sr.res.order = std::move(fb);
            sr.res.assignment = std::move(a);
            sr.res.objective = sr.res.assignment.feasible
                                   ? instance_objective(inst, sr.res.assignment)
                                   : kInf;
            sr.relaxed = true;
        }
        sr.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                               t0)
                         .count();
        return sr;
    };

    if (ctx_.cfg.strategy == Strategy::Exact) {
        SubResult sr;
        sr.inst = build_global_instance(snaps, ctx_);
        SubResult solved = run_one(sr.inst, 0);
        solved.inst = std::move(sr.inst);
        results.push_back(std::move(solved));
    } else {
        std::vector<SchedulingInstance> instances;
        instances.reserve(snaps.size());
        for (const auto& snap : snaps) instances.push_back(build_subproblem(snap, ctx_));
        results.resize(snaps.size());
        if (ctx_.cfg.parallel_subproblems && snaps.size() > 1) {
            std::vector<std::future<SubResult>> futs;
            for (std::size_t i = 0; i < snaps.size(); ++i)
                futs.push_back(std::async(std::launch::async, [&, i] {
                    return run_one(instances[i], snaps[i].intersection);
                }));
            for (std::size_t i = 0; i < snaps.size(); ++i) results[i] = futs[i].get();
        } else {
            for (std::size_t i = 0; i < snaps.size(); ++i)
                results[i] = run_one(instances[i], snaps[i].intersection);
        }
        for (std::size_t i = 0; i < snaps.size(); ++i)
            results[i].inst = std::move(instances[i]);
    }

    // Barrier merge: apply in a fixed order (or a test-supplied permutation;
    // outputs must be identical either way because sub-problems share no
    // state within a tick).
    std::vector<int> merge_idx(results.size());
    for (std::size_t i = 0; i < results.size(); ++i) merge_idx[i] = static_cast<int>(i);
    if (merge_perm_.size() == results.size()) merge_idx = merge_perm_;

    for (int mi : merge_idx) {
        SubResult& sr = results[mi];
        const SchedulingInstance& inst = sr.inst;
        for (std::size_t v = 0; v < inst.vehicles.size(); ++v) {
            const PlanVehicle& pv = inst.vehicles[v];
            if (sr.res.assignment.times[v].empty()) continue;
            const double t = sr.res.assignment.times[v][0];
            const int k0 = pv.intersections[0];
            const Movement& m = ctx_.net->intersection(k0).movement(pv.movements[0]);
            if (pv.zone == 0) {
                out.trajectories[{pv.vid, k0}] = t;
                active_[k0][pv.vid] = {m.in_leg, m.in_lane, m.id, t};
                reservations_.erase({pv.vid, k0});
            } else {
                out.reservations[{pv.vid, k0}] = t;
                reservations_[{pv.vid, k0}] = t;
                reservation_info_[{pv.vid, k0}] = {m.in_leg, m.in_lane, m.id, t};
            }
        }
        for (const auto& [k, seq] : sr.res.order.at) prev_order_[k] = vids_of(inst, seq);

        PlanningRecord rec;
        rec.t_p = t_p;
        rec.intersection = sr.k;
        rec.q1 = inst.Q1;
        rec.q2 = inst.Q2;
        rec.iterations = sr.res.telemetry.iterations;
        rec.objective = sr.res.objective;
        rec.wall_ms = sr.wall_ms;
        rec.complete = sr.res.telemetry.complete;
        rec.relaxed = sr.relaxed;
        if (sr.relaxed) ++relaxations_;
        log_.push_back(rec);
    }
    return out;
}

std::optional<double> Coordinator::on_enter_area(const SnapVehicle& sv, int k, double now) {
    if (ctx_.cfg.mode == CoordMode::PDS) return std::nullopt;
    const RouteStep& step = sv.route->steps[sv.hop];
    const Movement& m = ctx_.net->intersection(k).movement(step.movement);
    const double t_min =
        now + minimal_arrival_time({sv.dist_to_line, sv.velocity}, ctx_.limits);

    double t;
    auto it = reservations_.find({sv.vid, k});
    if (it != reservations_.end()) {
        t = it->second;
        reservations_.erase(it);
        reservation_info_.erase({sv.vid, k});
        if (t < t_min - 1e-6) {
            t = local_append(k, m.in_leg, m.in_lane, m.id, t_min);
            ++relaxations_;
        }
    } else {
        ++cold_entries_;
        t = local_append(k, m.in_leg, m.in_lane, m.id, t_min);
    }
    active_[k][sv.vid] = {m.in_leg, m.in_lane, m.id, t};
    return t;
}

void Coordinator::on_crossed(int vid, int k) {
    auto it = active_.find(k);
    if (it != active_.end()) it->second.erase(vid);
    reservations_.erase({vid, k});
    reservation_info_.erase({vid, k});
}

double Coordinator::local_append(int k, int in_leg, int in_lane, int movement,
                                 double t_min) const {
    double t = t_min;
    const IntersectionSpec& is = ctx_.net->intersection(k);
    auto consider = [&](const ActiveEntry& e) {
        if (e.in_leg == in_leg && e.in_lane == in_lane)
            t = std::max(t, e.time + ctx_.planning_gaps.same_lane);
        else if (is.conflicts(e.movement, movement))
            t = std::max(t, e.time + ctx_.planning_gaps.cross);
    };
    auto ait = active_.find(k);
    if (ait != active_.end())
        for (const auto& [vid, e] : ait->second) consider(e);
    for (const auto& [key, e] : reservation_info_)
        if (key.second == k) consider(e);
    return t;
}

}  // namespace coopdrive
