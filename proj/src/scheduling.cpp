#include "coopdrive/scheduling.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "json.hpp"

namespace coopdrive {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFeasTol = 1e-9;
}  // namespace

bool SchedulingInstance::movements_conflict(int k, int ma, int mb) const {
    if (ma == mb) return false;
    auto it = conflicts.find(k);
    if (it == conflicts.end()) return false;
    auto key = ma < mb ? std::make_pair(ma, mb) : std::make_pair(mb, ma);
    return it->second.count(key) > 0;
}

int SchedulingInstance::scope_index(const PlanVehicle& v, int k) const {
    for (std::size_t i = 0; i < v.intersections.size(); ++i)
        if (v.intersections[i] == k) return static_cast<int>(i);
    return -1;
}

std::string validate_order(const SchedulingInstance& inst, const PassingOrder& order) {
    const int n = static_cast<int>(inst.vehicles.size());
    std::map<int, std::vector<int>> pos;  // per k: vehicle -> position (-1 absent)
    for (int k : inst.scope) {
        auto it = order.at.find(k);
        std::vector<int> expected;
        for (int v = 0; v < n; ++v)
            if (inst.scope_index(inst.vehicles[v], k) >= 0) expected.push_back(v);
        if (it == order.at.end()) {
            if (!expected.empty()) return "order missing intersection " + std::to_string(k);
            pos[k] = std::vector<int>(n, -1);
            continue;
        }
        std::vector<int>& p = pos[k];
        p.assign(n, -1);
        for (std::size_t i = 0; i < it->second.size(); ++i) {
            const int v = it->second[i];
            if (v < 0 || v >= n) return "order references unknown vehicle";
            if (p[v] >= 0) return "vehicle listed twice at intersection " + std::to_string(k);
            p[v] = static_cast<int>(i);
        }
        for (int v : expected)
            if (p[v] < 0)
                return "vehicle " + std::to_string(inst.vehicles[v].vid) +
                       " missing from order at intersection " + std::to_string(k);
        if (it->second.size() != expected.size())
            return "order at intersection " + std::to_string(k) + " has extra vehicles";
    }
    for (const auto& pr : inst.precedence) {
        auto pit = pos.find(pr.k);
        if (pit == pos.end()) continue;
        const auto& p = pit->second;
        if (p[pr.before] < 0 || p[pr.after] < 0) continue;
        if (p[pr.before] > p[pr.after])
            return "precedence violated at intersection " + std::to_string(pr.k);
    }
    for (const auto& lo : inst.linked) {
        auto sit = pos.find(lo.k_src);
        auto dit = pos.find(lo.k_dst);
        if (sit == pos.end() || dit == pos.end()) continue;
        const auto& ps = sit->second;
        const auto& pd = dit->second;
        if (ps[lo.u] < 0 || ps[lo.v] < 0 || pd[lo.u] < 0 || pd[lo.v] < 0) continue;
        if ((ps[lo.u] < ps[lo.v]) != (pd[lo.u] < pd[lo.v]))
            return "linked lane order differs between intersections " +
                   std::to_string(lo.k_src) + " and " + std::to_string(lo.k_dst);
    }
    return {};
}

namespace {

Assignment infeasible(std::string reason) {
    Assignment a;
    a.feasible = false;
    a.reason = std::move(reason);
    return a;
}

Assignment forward_pass_single(const SchedulingInstance& inst, const PassingOrder& order) {
    SubKView view = make_subk_view(inst);
    ForwardState st;
    st.reset(view);
    Assignment a;
    a.times.assign(inst.vehicles.size(), {});
    const auto it = order.at.find(view.k);
    if (it != order.at.end()) {
        for (int v : it->second) a.times[v] = {st.append(view, v)};
    }
    if (!st.tmax_ok)
        return infeasible("assignment exceeds a vehicle's latest feasible arrival");
    a.feasible = true;
    return a;
}

Assignment forward_pass_global(const SchedulingInstance& inst, const PassingOrder& order) {
    struct Event {
        int v, hop, k, pos;
    };
    const int n = static_cast<int>(inst.vehicles.size());
    std::vector<Event> events;
    std::map<int, std::vector<int>> event_at;  // per k: event index by order position
    std::vector<std::vector<int>> vehicle_events(n);
    for (int k : inst.scope) {
        auto it = order.at.find(k);
        if (it == order.at.end()) continue;
        auto& ev = event_at[k];
        for (std::size_t p = 0; p < it->second.size(); ++p) {
            const int v = it->second[p];
            const int hop = inst.scope_index(inst.vehicles[v], k);
            events.push_back({v, hop, k, static_cast<int>(p)});
            ev.push_back(static_cast<int>(events.size() - 1));
        }
    }
    for (std::size_t e = 0; e < events.size(); ++e)
        vehicle_events[events[e].v].push_back(static_cast<int>(e));
    for (auto& ve : vehicle_events)
        std::sort(ve.begin(), ve.end(),
                  [&](int a, int b) { return events[a].hop < events[b].hop; });

    // Dependency edges: route predecessor, earlier same-lane and conflicting
    // vehicles at the same intersection.
    const std::size_t m = events.size();
    std::vector<std::vector<int>> succ(m);
    std::vector<int> indeg(m, 0);
    auto add_edge = [&](int a, int b) {
        succ[a].push_back(b);
        ++indeg[b];
    };
    for (const auto& [k, evs] : event_at) {
        for (std::size_t p = 0; p < evs.size(); ++p) {
            const Event& e = events[evs[p]];
            const PlanVehicle& ve = inst.vehicles[e.v];
            for (std::size_t q = 0; q < p; ++q) {
                const Event& u = events[evs[q]];
                const PlanVehicle& vu = inst.vehicles[u.v];
                const bool same_lane = vu.lane_keys[u.hop] == ve.lane_keys[e.hop];
                const bool conflicting = inst.movements_conflict(
                    k, vu.movements[u.hop], ve.movements[e.hop]);
                if (same_lane || conflicting) add_edge(evs[q], evs[p]);
            }
        }
    }
    for (int v = 0; v < n; ++v)
        for (std::size_t i = 1; i < vehicle_events[v].size(); ++i)
            add_edge(vehicle_events[v][i - 1], vehicle_events[v][i]);

    std::vector<double> time(m, 0.0);
    std::vector<double> refreshed_tmin(m, 0.0);
    std::deque<int> ready;
    for (std::size_t e = 0; e < m; ++e)
        if (indeg[e] == 0) ready.push_back(static_cast<int>(e));

    Assignment a;
    a.times.assign(n, {});
    for (int v = 0; v < n; ++v)
        a.times[v].assign(inst.vehicles[v].intersections.size(),
                          std::numeric_limits<double>::quiet_NaN());

    std::size_t done = 0;
    while (!ready.empty()) {
        const int ei = ready.front();
        ready.pop_front();
        const Event& e = events[ei];
        const PlanVehicle& ve = inst.vehicles[e.v];
        double tmin = ve.t_min0;
        if (e.hop > 0) {
            const double t_prev = a.times[e.v][e.hop - 1];
            tmin = t_prev + ve.hop_times[e.hop - 1];
        }
        double t = tmin;
        const auto& evs = event_at[e.k];
        for (int p = 0; p < e.pos; ++p) {
            const Event& u = events[evs[p]];
            const PlanVehicle& vu = inst.vehicles[u.v];
            const double tu = a.times[u.v][u.hop];
            if (vu.lane_keys[u.hop] == ve.lane_keys[e.hop])
                t = std::max(t, tu + inst.gaps.same_lane);
            else if (inst.movements_conflict(e.k, vu.movements[u.hop], ve.movements[e.hop]))
                t = std::max(t, tu + inst.gaps.cross);
        }
        if (e.hop == 0 && t > ve.t_max + kFeasTol)
            return infeasible("assignment exceeds a vehicle's latest feasible arrival");
        a.times[e.v][e.hop] = t;
        refreshed_tmin[ei] = tmin;
        ++done;
        for (int s : succ[ei])
            if (--indeg[s] == 0) ready.push_back(s);
    }
    if (done != m)
        return infeasible("causality cycle: the chosen orders couple intersections cyclically");
    a.feasible = true;
    return a;
}

}  // namespace

Assignment forward_pass(const SchedulingInstance& inst, const PassingOrder& order) {
    if (auto msg = validate_order(inst, order); !msg.empty()) return infeasible(msg);
    if (!inst.global_scope && inst.scope.size() == 1) return forward_pass_single(inst, order);
    return forward_pass_global(inst, order);
}

double objective_global(const SchedulingInstance& inst, const Assignment& a) {
    if (inst.vehicles.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t v = 0; v < inst.vehicles.size(); ++v) {
        const PlanVehicle& pv = inst.vehicles[v];
        double tmin = pv.t_min0;
        for (std::size_t i = 0; i < a.times[v].size(); ++i) {
            if (i > 0) tmin = a.times[v][i - 1] + pv.hop_times[i - 1];
            total += a.times[v][i] - tmin;
        }
    }
    return total / static_cast<double>(inst.vehicles.size());
}

double objective_sub(const SchedulingInstance& inst, const Assignment& a) {
    const int q = inst.Q1 + inst.Q2;
    if (q == 0) return 0.0;
    double total = 0.0;
    for (std::size_t v = 0; v < inst.vehicles.size(); ++v) {
        const PlanVehicle& pv = inst.vehicles[v];
        const double w = pv.zone == 0 ? inst.w1 : inst.w2;
        if (!a.times[v].empty()) total += w * (a.times[v][0] - pv.t_min0);
    }
    return total / static_cast<double>(q);
}

double instance_objective(const SchedulingInstance& inst, const Assignment& a) {
    return inst.global_scope ? objective_global(inst, a) : objective_sub(inst, a);
}

std::pair<double, double> solution_space_sizes(int n1, int n2, int p) {
    return {std::pow(2.0, static_cast<double>(n1) + static_cast<double>(n2)),
            std::pow(2.0, static_cast<double>(n1) / static_cast<double>(p))};
}

std::pair<int, int> count_conflicts(const SchedulingInstance& inst) {
    int n1 = 0, n2 = 0;
    for (std::size_t a = 0; a < inst.vehicles.size(); ++a) {
        for (std::size_t b = a + 1; b < inst.vehicles.size(); ++b) {
            const PlanVehicle& u = inst.vehicles[a];
            const PlanVehicle& v = inst.vehicles[b];
            for (std::size_t i = 0; i < u.intersections.size(); ++i) {
                const int k = u.intersections[i];
                const int j = inst.scope_index(v, k);
                if (j < 0) continue;
                if (!inst.movements_conflict(k, u.movements[i], v.movements[j])) continue;
                const bool both_current =
                    !u.intersections.empty() && !v.intersections.empty() &&
                    u.intersections[0] == k && v.intersections[0] == k;
                if (both_current) ++n1; else ++n2;
            }
        }
    }
    return {n1, n2};
}

SubKView make_subk_view(const SchedulingInstance& inst) {
    SubKView view;
    view.inst = &inst;
    view.k = inst.scope.empty() ? -1 : inst.scope[0];
    view.n = static_cast<int>(inst.vehicles.size());
    view.dt1 = inst.gaps.same_lane;
    view.dt2 = inst.gaps.cross;
    const int q = inst.Q1 + inst.Q2;
    view.norm = q > 0 ? 1.0 / q : (view.n > 0 ? 1.0 / view.n : 1.0);

    std::map<int, int> lane_ids, mov_ids;
    view.lane.resize(view.n);
    view.mov.resize(view.n);
    view.tmin.resize(view.n);
    view.tmax.resize(view.n);
    view.weight.resize(view.n);
    for (int v = 0; v < view.n; ++v) {
        const PlanVehicle& pv = inst.vehicles[v];
        const int lk = pv.lane_keys.empty() ? 0 : pv.lane_keys[0];
        const int mv = pv.movements.empty() ? 0 : pv.movements[0];
        auto [lit, lnew] = lane_ids.try_emplace(lk, static_cast<int>(lane_ids.size()));
        auto [mit, mnew] = mov_ids.try_emplace(mv, static_cast<int>(mov_ids.size()));
        view.lane[v] = lit->second;
        view.mov[v] = mit->second;
        view.tmin[v] = pv.t_min0;
        view.tmax[v] = pv.t_max;
        view.weight[v] = pv.zone == 0 ? inst.w1 : inst.w2;
    }
    view.n_lanes = static_cast<int>(lane_ids.size());
    view.n_movs = static_cast<int>(mov_ids.size());
    view.mov_conflicts.assign(view.n_movs, {});
    auto cit = inst.conflicts.find(view.k);
    if (cit != inst.conflicts.end()) {
        for (const auto& [ma, mb] : cit->second) {
            auto ia = mov_ids.find(ma);
            auto ib = mov_ids.find(mb);
            if (ia == mov_ids.end() || ib == mov_ids.end()) continue;
            view.mov_conflicts[ia->second].push_back(ib->second);
            view.mov_conflicts[ib->second].push_back(ia->second);
        }
    }
    view.succ.assign(view.n, {});
    view.base_indegree.assign(view.n, 0);
    for (const auto& pr : inst.precedence) {
        if (pr.k != view.k) continue;
        view.succ[pr.before].push_back(pr.after);
        ++view.base_indegree[pr.after];
    }
    return view;
}

void ForwardState::reset(const SubKView& view) {
    lane_last.assign(view.n_lanes, kNegInf);
    mov_last.assign(view.n_movs, kNegInf);
    weighted_delay = 0.0;
    placed = 0;
    tmax_ok = true;
}

double ForwardState::append(const SubKView& view, int v) {
    double t = view.tmin[v];
    const int lane = view.lane[v];
    const int mov = view.mov[v];
    if (lane_last[lane] > kNegInf) t = std::max(t, lane_last[lane] + view.dt1);
    for (int mc : view.mov_conflicts[mov]) {
        if (mov_last[mc] > kNegInf) t = std::max(t, mov_last[mc] + view.dt2);
    }
    lane_last[lane] = t;
    mov_last[mov] = std::max(mov_last[mov], t);
    weighted_delay += view.weight[v] * (t - view.tmin[v]);
    if (t > view.tmax[v] + kFeasTol) tmax_ok = false;
    ++placed;
    return t;
}

// --- instance snapshot (structured text) ----------------------------------

std::string SchedulingInstance::dump() const {
    nlohmann::ordered_json j;
    j["schema"] = "coopdrive-instance-v1";
    j["global_scope"] = global_scope;
    j["scope"] = scope;
    j["gaps"] = {{"same_lane", gaps.same_lane}, {"cross", gaps.cross}};
    j["weights"] = {{"w1", w1}, {"w2", w2}};
    j["q1"] = Q1;
    j["q2"] = Q2;
    auto& jv = j["vehicles"] = nlohmann::ordered_json::array();
    for (const auto& v : vehicles) {
        nlohmann::ordered_json e;
        e["vid"] = v.vid;
        e["intersections"] = v.intersections;
        e["movements"] = v.movements;
        e["lane_keys"] = v.lane_keys;
        e["t_min"] = v.t_min0;
        e["hop_times"] = v.hop_times;
        if (std::isfinite(v.t_max)) e["t_max"] = v.t_max;
        e["zone"] = v.zone;
        e["committed"] = v.committed;
        if (!std::isnan(v.prev_assign)) e["prev_assign"] = v.prev_assign;
        jv.push_back(std::move(e));
    }
    auto& jp = j["precedence"] = nlohmann::ordered_json::array();
    for (const auto& p : precedence)
        jp.push_back({{"k", p.k},
                      {"before", p.before},
                      {"after", p.after},
                      {"kind", p.kind == Precedence::Kind::SameLane ? "same_lane" : "order"}});
    auto& jl = j["linked"] = nlohmann::ordered_json::array();
    for (const auto& l : linked)
        jl.push_back({{"k_src", l.k_src}, {"k_dst", l.k_dst}, {"u", l.u}, {"v", l.v}});
    auto& jc = j["conflicts"] = nlohmann::ordered_json::object();
    for (const auto& [k, pairs] : conflicts) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& [a, b] : pairs) arr.push_back({a, b});
        jc[std::to_string(k)] = std::move(arr);
    }
    return j.dump(2);
}

SchedulingInstance SchedulingInstance::load(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    SchedulingInstance inst;
    inst.global_scope = j.at("global_scope").get<bool>();
    inst.scope = j.at("scope").get<std::vector<int>>();
    inst.gaps.same_lane = j.at("gaps").at("same_lane").get<double>();
    inst.gaps.cross = j.at("gaps").at("cross").get<double>();
    inst.w1 = j.at("weights").at("w1").get<double>();
    inst.w2 = j.at("weights").at("w2").get<double>();
    inst.Q1 = j.at("q1").get<int>();
    inst.Q2 = j.at("q2").get<int>();
    for (const auto& e : j.at("vehicles")) {
        PlanVehicle v;
        v.vid = e.at("vid").get<int>();
        v.intersections = e.at("intersections").get<std::vector<int>>();
        v.movements = e.at("movements").get<std::vector<int>>();
        v.lane_keys = e.at("lane_keys").get<std::vector<int>>();
        v.t_min0 = e.at("t_min").get<double>();
        v.hop_times = e.at("hop_times").get<std::vector<double>>();
        if (e.contains("t_max")) v.t_max = e.at("t_max").get<double>();
        v.zone = e.at("zone").get<int>();
        v.committed = e.at("committed").get<bool>();
        if (e.contains("prev_assign")) v.prev_assign = e.at("prev_assign").get<double>();
        inst.vehicles.push_back(std::move(v));
    }
    for (const auto& p : j.at("precedence")) {
        Precedence pr;
        pr.k = p.at("k").get<int>();
        pr.before = p.at("before").get<int>();
        pr.after = p.at("after").get<int>();
        pr.kind = p.at("kind").get<std::string>() == "same_lane" ? Precedence::Kind::SameLane
                                                                 : Precedence::Kind::OrderOnly;
        inst.precedence.push_back(pr);
    }
    for (const auto& l : j.at("linked")) {
        LinkedOrder lo;
        lo.k_src = l.at("k_src").get<int>();
        lo.k_dst = l.at("k_dst").get<int>();
        lo.u = l.at("u").get<int>();
        lo.v = l.at("v").get<int>();
        inst.linked.push_back(lo);
    }
    for (const auto& [ks, pairs] : j.at("conflicts").items()) {
        const int k = std::stoi(ks);
        for (const auto& pr : pairs)
            inst.conflicts[k].insert({pr.at(0).get<int>(), pr.at(1).get<int>()});
    }
    return inst;
}

}  // namespace coopdrive
