#include "coopdrive/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>

namespace coopdrive {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using Clock = std::chrono::steady_clock;

struct Deadline {
    Clock::time_point end;
    bool active = false;

    static Deadline from(const SolverBudget& b) {
        Deadline d;
        if (b.wall_seconds > 0.0) {
            d.active = true;
            d.end = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                       std::chrono::duration<double>(b.wall_seconds));
        }
        return d;
    }
    bool expired() const { return active && Clock::now() >= end; }
};

SolverResult finish(const SchedulingInstance& inst, PassingOrder order, SolverTelemetry tel) {
    SolverResult res;
    res.order = std::move(order);
    res.assignment = forward_pass(inst, res.order);
    res.objective = res.assignment.feasible ? instance_objective(inst, res.assignment) : kInf;
    res.telemetry = std::move(tel);
    return res;
}

// Static arrival floor of vehicle v at scope hop i (free flow from t_min0).
double static_tmin(const PlanVehicle& v, std::size_t hop) {
    double t = v.t_min0;
    for (std::size_t i = 0; i < hop && i < v.hop_times.size(); ++i) t += v.hop_times[i];
    return t;
}

// FIFO sequence per intersection. Kahn over the per-k precedence DAG picking
// the admissible vehicle with the smallest (arrival floor, lane, vid) key.
PassingOrder fifo_order(const SchedulingInstance& inst) {
    PassingOrder order;
    for (int k : inst.scope) {
        std::vector<int> users;
        std::vector<double> key_t;
        const int n = static_cast<int>(inst.vehicles.size());
        std::vector<int> indeg(n, 0);
        std::vector<std::vector<int>> succ(n);
        for (int v = 0; v < n; ++v) {
            const int hop = inst.scope_index(inst.vehicles[v], k);
            if (hop >= 0) {
                users.push_back(v);
                key_t.push_back(static_tmin(inst.vehicles[v], hop));
            }
        }
        for (const auto& pr : inst.precedence) {
            if (pr.k != k) continue;
            succ[pr.before].push_back(pr.after);
            ++indeg[pr.after];
        }
        std::vector<char> placed(n, 0), in_scope(n, 0);
        std::vector<double> tkey(n, 0.0);
        for (std::size_t i = 0; i < users.size(); ++i) {
            in_scope[users[i]] = 1;
            tkey[users[i]] = key_t[i];
        }
        auto& seq = order.at[k];
        for (std::size_t step = 0; step < users.size(); ++step) {
            int pick = -1;
            for (int v : users) {
                if (placed[v] || indeg[v] > 0) continue;
                if (pick < 0) { pick = v; continue; }
                const auto& pv = inst.vehicles[v];
                const auto& pp = inst.vehicles[pick];
                const int lv = pv.lane_keys.empty() ? 0 : pv.lane_keys[0];
                const int lp = pp.lane_keys.empty() ? 0 : pp.lane_keys[0];
                if (std::tie(tkey[v], lv, pv.vid) < std::tie(tkey[pick], lp, pp.vid)) pick = v;
            }
            if (pick < 0) break;  // precedence cycle; validate_order will report
            seq.push_back(pick);
            placed[pick] = 1;
            for (int s : succ[pick])
                if (in_scope[s]) --indeg[s];
        }
    }
    return order;
}

// ---------------------------------------------------------------------------
// Exact search, single intersection: DFS branch and bound over the SubKView.

class SubKBranchAndBound {
public:
    SubKBranchAndBound(const SchedulingInstance& inst, const SolverBudget& budget)
        : inst_(inst), view_(make_subk_view(inst)), budget_(budget) {}

    SolverResult run() {
        SolverTelemetry tel;
        const int n = view_.n;
        best_sum_ = kInf;
        // Seed the incumbent with FIFO so pruning bites immediately.
        PassingOrder fifo = fifo_order(inst_);
        if (validate_order(inst_, fifo).empty()) {
            ForwardState st;
            st.reset(view_);
            for (int v : fifo.at[view_.k]) st.append(view_, v);
            if (st.tmax_ok) {
                best_sum_ = st.weighted_delay;
                best_seq_ = fifo.at[view_.k];
            }
        }
        deadline_ = Deadline::from(budget_);
        nodes_ = 0;
        aborted_ = false;
        indeg_ = view_.base_indegree;
        placed_.assign(n, 0);
        seq_.clear();
        state_.reset(view_);
        dfs();
        tel.iterations = nodes_;
        tel.complete = !aborted_;
        PassingOrder order;
        order.at[view_.k] = best_seq_;
        if (best_seq_.size() != static_cast<std::size_t>(n)) {
            // No feasible incumbent found (or search aborted before one);
            // fall back to FIFO structure so callers get a valid order shape.
            order = fifo_order(inst_);
            tel.complete = false;
        }
        return finish(inst_, std::move(order), std::move(tel));
    }

private:
    void dfs() {
        if (aborted_) return;
        if ((++nodes_ & 1023) == 0 && deadline_.expired()) {
            aborted_ = true;
            return;
        }
        if (budget_.max_iterations && nodes_ > *budget_.max_iterations) {
            aborted_ = true;
            return;
        }
        const int n = view_.n;
        if (state_.placed == n) {
            if (state_.tmax_ok && state_.weighted_delay < best_sum_ - 1e-12) {
                best_sum_ = state_.weighted_delay;
                best_seq_ = seq_;
            }
            return;
        }
        // Node lower bound: current weighted delay plus, for every unplaced
        // vehicle, the delay already forced by the prefix.
        double lb = state_.weighted_delay;
        for (int v = 0; v < n; ++v) {
            if (placed_[v]) continue;
            double t = view_.tmin[v];
            const double lane_t = state_.lane_last[view_.lane[v]];
            if (lane_t > kNegInf) t = std::max(t, lane_t + view_.dt1);
            for (int mc : view_.mov_conflicts[view_.mov[v]])
                if (state_.mov_last[mc] > kNegInf) t = std::max(t, state_.mov_last[mc] + view_.dt2);
            lb += view_.weight[v] * (t - view_.tmin[v]);
        }
        if (lb >= best_sum_ - 1e-12) return;

        // Candidates ordered by earliest feasible time for greedy-first dives.
        struct Cand {
            int v;
            double t;
        };
        std::vector<Cand> cands;
        for (int v = 0; v < n; ++v) {
            if (placed_[v] || indeg_[v] > 0) continue;
            double t = view_.tmin[v];
            const double lane_t = state_.lane_last[view_.lane[v]];
            if (lane_t > kNegInf) t = std::max(t, lane_t + view_.dt1);
            for (int mc : view_.mov_conflicts[view_.mov[v]])
                if (state_.mov_last[mc] > kNegInf) t = std::max(t, state_.mov_last[mc] + view_.dt2);
            if (t > view_.tmax[v] + 1e-9) continue;  // would overrun its latest arrival
            cands.push_back({v, t});
        }
        std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
            if (a.t != b.t) return a.t < b.t;
            return a.v < b.v;
        });
        for (const Cand& c : cands) {
            const int v = c.v;
            const int lane = view_.lane[v];
            const int mov = view_.mov[v];
            const double prev_lane = state_.lane_last[lane];
            const double prev_mov = state_.mov_last[mov];
            const double prev_delay = state_.weighted_delay;
            const bool prev_ok = state_.tmax_ok;
            state_.append(view_, v);
            placed_[v] = 1;
            seq_.push_back(v);
            for (int s : view_.succ[v]) --indeg_[s];

            dfs();

            for (int s : view_.succ[v]) ++indeg_[s];
            seq_.pop_back();
            placed_[v] = 0;
            state_.lane_last[lane] = prev_lane;
            state_.mov_last[mov] = prev_mov;
            state_.weighted_delay = prev_delay;
            state_.tmax_ok = prev_ok;
            --state_.placed;
            if (aborted_) return;
        }
    }

    const SchedulingInstance& inst_;
    SubKView view_;
    SolverBudget budget_;
    Deadline deadline_;
    long nodes_ = 0;
    bool aborted_ = false;
    double best_sum_ = kInf;
    std::vector<int> best_seq_;
    std::vector<int> seq_;
    std::vector<char> placed_;
    std::vector<int> indeg_;
    ForwardState state_;
};

// ---------------------------------------------------------------------------
// Exact search, global scope: chronological event-append branch and bound.
// Appending (vehicle, hop) events in nondecreasing assigned-time order visits
// every acyclic combination of per-intersection orders exactly once; cyclic
// combinations (causality cycles) have no chronological linearization and
// are skipped automatically.

class GlobalBranchAndBound {
public:
    GlobalBranchAndBound(const SchedulingInstance& inst, const SolverBudget& budget)
        : inst_(inst), budget_(budget) {
        n_ = static_cast<int>(inst.vehicles.size());
        for (std::size_t i = 0; i < inst.scope.size(); ++i) k_index_[inst.scope[i]] = i;
        const std::size_t nk = inst.scope.size();
        lane_last_.assign(nk, {});
        mov_last_.assign(nk, {});
        for (std::size_t i = 0; i < nk; ++i) {
            const int k = inst.scope[i];
            int max_lane = 0, max_mov = 0;
            for (const auto& v : inst.vehicles) {
                const int hop = inst.scope_index(v, k);
                if (hop < 0) continue;
                max_lane = std::max(max_lane, v.lane_keys[hop] + 1);
                max_mov = std::max(max_mov, v.movements[hop] + 1);
            }
            lane_last_[i].assign(max_lane, kNegInf);
            mov_last_[i].assign(max_mov, kNegInf);
            conf_[inst.scope[i]] = {};
            auto cit = inst.conflicts.find(k);
            if (cit != inst.conflicts.end()) {
                auto& adj = conf_[k];
                adj.assign(max_mov, {});
                for (const auto& [a, b] : cit->second) {
                    if (a < max_mov && b < max_mov) {
                        adj[a].push_back(b);
                        adj[b].push_back(a);
                    }
                }
            } else {
                conf_[k].assign(max_mov, {});
            }
        }
        next_hop_.assign(n_, 0);
        assigned_.assign(n_, {});
        for (int v = 0; v < n_; ++v)
            assigned_[v].assign(inst.vehicles[v].intersections.size(), 0.0);
        total_events_ = 0;
        for (const auto& v : inst.vehicles) total_events_ += v.intersections.size();
        // Per-intersection precedence counters keyed by (k, vehicle).
        for (const auto& pr : inst.precedence) pred_count_[{pr.k, pr.after}]++;
    }

    SolverResult run() {
        SolverTelemetry tel;
        best_obj_sum_ = kInf;
        // FIFO incumbent (skipped when invalid; the dive then supplies one).
        {
            PassingOrder f = fifo_order(inst_);
            Assignment a = forward_pass(inst_, f);
            if (a.feasible) {
                best_obj_sum_ = objective_global(inst_, a) * n_;
                best_order_ = f;
            }
        }
        deadline_ = Deadline::from(budget_);
        nodes_ = 0;
        aborted_ = false;
        seq_.clear();
        dfs(-kInf, std::make_pair(-1, -1));
        tel.iterations = nodes_;
        tel.complete = !aborted_;
        PassingOrder order = best_order_;
        if (order.at.empty()) {
            order = fifo_order(inst_);
            tel.complete = false;
        }
        return finish(inst_, std::move(order), std::move(tel));
    }

private:
    // Telescoped objective: sum over vehicles of (final-hop arrival minus the
    // static free-flow arrival). Lower bound uses current per-lane/movement
    // state, which only grows as events are appended.
    double lower_bound_sum() const {
        double lb = 0.0;
        for (int v = 0; v < n_; ++v) {
            const PlanVehicle& pv = inst_.vehicles[v];
            const std::size_t hops = pv.intersections.size();
            if (hops == 0) continue;
            const double stat = static_tmin(pv, hops - 1);
            double fin;
            if (next_hop_[v] >= static_cast<int>(hops)) {
                fin = assigned_[v][hops - 1];
            } else {
                double base = next_hop_[v] == 0 ? pv.t_min0
                                                : assigned_[v][next_hop_[v] - 1] +
                                                      pv.hop_times[next_hop_[v] - 1];
                fin = base;
                for (std::size_t h = next_hop_[v]; h < hops; ++h) {
                    const int k = pv.intersections[h];
                    const std::size_t ki = k_index_.at(k);
                    double t = fin;
                    const auto& ll = lane_last_[ki];
                    if (pv.lane_keys[h] < static_cast<int>(ll.size()) &&
                        ll[pv.lane_keys[h]] > kNegInf)
                        t = std::max(t, ll[pv.lane_keys[h]] + inst_.gaps.same_lane);
                    const auto& adj = conf_.at(k);
                    if (pv.movements[h] < static_cast<int>(adj.size())) {
                        for (int mc : adj[pv.movements[h]]) {
                            if (mov_last_[ki][mc] > kNegInf)
                                t = std::max(t, mov_last_[ki][mc] + inst_.gaps.cross);
                        }
                    }
                    fin = t + (h + 1 < hops ? pv.hop_times[h] : 0.0);
                }
            }
            lb += std::max(0.0, fin - stat);
        }
        return lb;
    }

    double event_time(int v, int hop) const {
        const PlanVehicle& pv = inst_.vehicles[v];
        const int k = pv.intersections[hop];
        const std::size_t ki = k_index_.at(k);
        double t = hop == 0 ? pv.t_min0 : assigned_[v][hop - 1] + pv.hop_times[hop - 1];
        const auto& ll = lane_last_[ki];
        if (pv.lane_keys[hop] < static_cast<int>(ll.size()) && ll[pv.lane_keys[hop]] > kNegInf)
            t = std::max(t, ll[pv.lane_keys[hop]] + inst_.gaps.same_lane);
        const auto& adj = conf_.at(k);
        if (pv.movements[hop] < static_cast<int>(adj.size())) {
            for (int mc : adj[pv.movements[hop]])
                if (mov_last_[ki][mc] > kNegInf)
                    t = std::max(t, mov_last_[ki][mc] + inst_.gaps.cross);
        }
        return t;
    }

    bool linked_block(int v, int k) const {
        // v may not take its turn at k while a linked partner that crossed
        // the shared upstream lane earlier has not yet been sequenced at k.
        for (const auto& lo : inst_.linked) {
            if (lo.k_dst != k) continue;
            int other = -1;
            if (lo.u == v) other = lo.v;
            else if (lo.v == v) other = lo.u;
            else continue;
            const int src_hop_v = inst_.scope_index(inst_.vehicles[v], lo.k_src);
            const int src_hop_o = inst_.scope_index(inst_.vehicles[other], lo.k_src);
            const int dst_hop_o = inst_.scope_index(inst_.vehicles[other], lo.k_dst);
            if (src_hop_v < 0 || src_hop_o < 0 || dst_hop_o < 0) continue;
            const bool o_src_placed = next_hop_[other] > src_hop_o;
            const bool o_dst_placed = next_hop_[other] > dst_hop_o;
            if (o_dst_placed) continue;  // other already went at k: fine behind it
            if (o_src_placed && next_hop_[v] > src_hop_v &&
                assigned_[other][src_hop_o] < assigned_[v][src_hop_v])
                return true;  // other was ahead on the shared lane upstream
        }
        return false;
    }

    void dfs(double last_t, std::pair<int, int> last_key) {
        if (aborted_) return;
        if ((++nodes_ & 1023) == 0 && deadline_.expired()) {
            aborted_ = true;
            return;
        }
        if (budget_.max_iterations && nodes_ > *budget_.max_iterations) {
            aborted_ = true;
            return;
        }
        if (seq_.size() == total_events_) {
            const double obj = lower_bound_sum();  // exact once everything placed
            if (obj < best_obj_sum_ - 1e-12) {
                best_obj_sum_ = obj;
                best_order_.at.clear();
                for (const auto& [v, hop] : seq_) {
                    best_order_.at[inst_.vehicles[v].intersections[hop]].push_back(v);
                }
            }
            return;
        }
        if (lower_bound_sum() >= best_obj_sum_ - 1e-12) return;

        struct Cand {
            int v, hop;
            double t;
        };
        std::vector<Cand> cands;
        for (int v = 0; v < n_; ++v) {
            const PlanVehicle& pv = inst_.vehicles[v];
            const int hop = next_hop_[v];
            if (hop >= static_cast<int>(pv.intersections.size())) continue;
            const int k = pv.intersections[hop];
            auto pit = pred_count_.find({k, v});
            if (pit != pred_count_.end() && pit->second > 0) continue;
            if (linked_block(v, k)) continue;
            const double t = event_time(v, hop);
            // Chronological canonical form: times must be nondecreasing along
            // the appended sequence, ties broken by (vehicle, hop).
            if (t < last_t - 1e-12) continue;
            if (std::abs(t - last_t) <= 1e-12 && std::make_pair(v, hop) < last_key) continue;
            if (hop == 0 && t > pv.t_max + 1e-9) continue;
            cands.push_back({v, hop, t});
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.t != b.t) return a.t < b.t;
            return std::tie(a.v, a.hop) < std::tie(b.v, b.hop);
        });
        for (const Cand& c : cands) {
            const PlanVehicle& pv = inst_.vehicles[c.v];
            const int k = pv.intersections[c.hop];
            const std::size_t ki = k_index_.at(k);
            const int lane = pv.lane_keys[c.hop];
            const int mov = pv.movements[c.hop];
            const double prev_lane = lane < static_cast<int>(lane_last_[ki].size())
                                         ? lane_last_[ki][lane]
                                         : kNegInf;
            const double prev_mov = mov_last_[ki][mov];

            assigned_[c.v][c.hop] = c.t;
            next_hop_[c.v] = c.hop + 1;
            lane_last_[ki][lane] = c.t;
            mov_last_[ki][mov] = std::max(mov_last_[ki][mov], c.t);
            for (const auto& pr : inst_.precedence)
                if (pr.k == k && pr.before == c.v) pred_count_[{k, pr.after}]--;
            seq_.push_back({c.v, c.hop});

            dfs(c.t, {c.v, c.hop});

            seq_.pop_back();
            for (const auto& pr : inst_.precedence)
                if (pr.k == k && pr.before == c.v) pred_count_[{k, pr.after}]++;
            lane_last_[ki][lane] = prev_lane;
            mov_last_[ki][mov] = prev_mov;
            next_hop_[c.v] = c.hop;
            if (aborted_) return;
        }
    }

    const SchedulingInstance& inst_;
    SolverBudget budget_;
    Deadline deadline_;
    int n_ = 0;
    std::size_t total_events_ = 0;
    std::map<int, std::size_t> k_index_;
    std::vector<std::vector<double>> lane_last_;  // per scope index
    std::vector<std::vector<double>> mov_last_;
    std::map<int, std::vector<std::vector<int>>> conf_;
    std::vector<int> next_hop_;
    std::vector<std::vector<double>> assigned_;
    std::map<std::pair<int, int>, int> pred_count_;
    std::vector<std::pair<int, int>> seq_;
    long nodes_ = 0;
    bool aborted_ = false;
    double best_obj_sum_ = kInf;
    PassingOrder best_order_;
};

}  // namespace

void SolverBudget::validate() const {
    if (wall_seconds <= 0.0 && !max_iterations)
        throw std::invalid_argument("solver budget needs a wall-clock or iteration limit");
}

SolverResult solve_fifo(const SchedulingInstance& inst) {
    SolverTelemetry tel;
    tel.complete = true;
    return finish(inst, fifo_order(inst), std::move(tel));
}

SolverResult solve_exact(const SchedulingInstance& inst, const SolverBudget& budget) {
    budget.validate();
    if (inst.vehicles.empty()) {
        SolverTelemetry tel;
        tel.complete = true;
        PassingOrder order;
        for (int k : inst.scope) order.at[k] = {};
        return finish(inst, std::move(order), std::move(tel));
    }
    if (!inst.global_scope && inst.scope.size() == 1)
        return SubKBranchAndBound(inst, budget).run();
    return GlobalBranchAndBound(inst, budget).run();
}

namespace {

// ---------------------------------------------------------------------------
// MCTS over order prefixes.

struct MctsNode {
    int parent = -1;
    int vehicle = -1;  // appended by the edge from parent
    std::vector<int> untried;
    std::vector<int> children;
    long visits = 0;
    double sum_s = 0.0;
    bool solved = false;
};

class Mcts {
public:
    Mcts(const SchedulingInstance& inst, const SolverBudget& budget)
        : inst_(inst), view_(make_subk_view(inst)), budget_(budget), rng_(budget.seed) {}

    SolverResult run() {
        SolverTelemetry tel;
        const int n = view_.n;
        deadline_ = Deadline::from(budget_);

        nodes_.push_back(MctsNode{});
        nodes_[0].untried = admissible(view_.base_indegree, std::vector<char>(n, 0));
        shuffle(nodes_[0].untried);

        best_sum_ = kInf;
        long iter = 0;
        while (true) {
            if (nodes_[0].solved) {
                tel.complete = true;
                break;
            }
            if (budget_.max_iterations && iter >= *budget_.max_iterations) break;
            if ((iter & 63) == 0 && deadline_.expired()) break;
            ++iter;
            iterate();
            if (improved_) {
                tel.incumbent_curve.push_back(best_sum_ * view_.norm);
                improved_ = false;
            }
        }
        tel.iterations = iter;
        PassingOrder order;
        if (best_seq_.size() == static_cast<std::size_t>(n)) {
            order.at[view_.k] = best_seq_;
        } else {
            order = fifo_order(inst_);
            tel.complete = false;
        }
        return finish(inst_, std::move(order), std::move(tel));
    }

private:
    std::vector<int> admissible(const std::vector<int>& indeg, const std::vector<char>& placed) {
        std::vector<int> out;
        for (int v = 0; v < view_.n; ++v)
            if (!placed[v] && indeg[v] == 0) out.push_back(v);
        return out;
    }

    void shuffle(std::vector<int>& v) {
        std::shuffle(v.begin(), v.end(), rng_);
    }

    void apply(int v, ForwardState& st, std::vector<int>& indeg, std::vector<char>& placed) {
        st.append(view_, v);
        placed[v] = 1;
        for (int s : view_.succ[v]) --indeg[s];
    }

    void iterate() {
        ForwardState st;
        st.reset(view_);
        std::vector<int> indeg = view_.base_indegree;
        std::vector<char> placed(view_.n, 0);
        std::vector<int> path{0};
        std::vector<int> prefix;

        // Selection.
        int node = 0;
        while (nodes_[node].untried.empty() && !nodes_[node].children.empty()) {
            const int next = select_child(node);
            if (next < 0) break;  // every child solved; handled below
            node = next;
            path.push_back(node);
            apply(nodes_[node].vehicle, st, indeg, placed);
            prefix.push_back(nodes_[node].vehicle);
        }

        // Expansion.
        if (!nodes_[node].untried.empty()) {
            const int v = nodes_[node].untried.back();
            nodes_[node].untried.pop_back();
            MctsNode child;
            child.parent = node;
            child.vehicle = v;
            apply(v, st, indeg, placed);
            prefix.push_back(v);
            child.untried = admissible(indeg, placed);
            shuffle(child.untried);
            nodes_.push_back(std::move(child));
            const int cid = static_cast<int>(nodes_.size() - 1);
            nodes_[node].children.push_back(cid);
            node = cid;
            path.push_back(node);
        }

        // Rollout: FIFO completion over the remaining vehicles.
        std::vector<int> full = prefix;
        while (static_cast<int>(full.size()) < view_.n) {
            int pick = -1;
            for (int v = 0; v < view_.n; ++v) {
                if (placed[v] || indeg[v] > 0) continue;
                if (pick < 0) { pick = v; continue; }
                const auto& pv = inst_.vehicles[v];
                const auto& pp = inst_.vehicles[pick];
                const int lv = pv.lane_keys.empty() ? 0 : pv.lane_keys[0];
                const int lp = pp.lane_keys.empty() ? 0 : pp.lane_keys[0];
                if (std::tie(view_.tmin[v], lv, pv.vid) < std::tie(view_.tmin[pick], lp, pp.vid))
                    pick = v;
            }
            if (pick < 0) break;  // precedence deadlock (malformed instance)
            apply(pick, st, indeg, placed);
            full.push_back(pick);
        }

        double s;
        if (static_cast<int>(full.size()) == view_.n && st.tmax_ok) {
            s = st.weighted_delay;
            s_min_ = std::min(s_min_, s);
            s_max_ = std::max(s_max_, s);
            if (s < best_sum_ - 1e-12) {
                best_sum_ = s;
                best_seq_ = full;
                improved_ = true;
            }
        } else {
            s = kPenalty;
        }

        // Backpropagation plus solved-subtree marking.
        for (auto it = path.rbegin(); it != path.rend(); ++it) {
            MctsNode& nd = nodes_[*it];
            ++nd.visits;
            nd.sum_s += s;
        }
        // A leaf holding a complete prefix is solved; interior nodes become
        // solved once expanded fully with all children solved.
        if (static_cast<int>(prefix.size()) == view_.n) nodes_[node].solved = true;
        for (auto it = path.rbegin(); it != path.rend(); ++it) {
            MctsNode& nd = nodes_[*it];
            if (nd.solved) continue;
            if (!nd.untried.empty()) break;
            bool all = !nd.children.empty();
            for (int c : nd.children)
                if (!nodes_[c].solved) { all = false; break; }
            if (all) nd.solved = true; else break;
        }
    }

    int select_child(int node) {
        const MctsNode& nd = nodes_[node];
        double best = -kInf;
        int pick = -1;
        const double range = std::max(1e-9, s_max_ - s_min_);
        for (int c : nd.children) {
            const MctsNode& ch = nodes_[c];
            if (ch.solved) continue;
            const double mean = ch.sum_s / std::max<long>(1, ch.visits);
            double value = (s_max_ - mean) / range;
            value = std::clamp(value, 0.0, 1.0);
            const double explore =
                std::sqrt(2.0 * std::log(static_cast<double>(std::max<long>(1, nd.visits))) /
                          static_cast<double>(std::max<long>(1, ch.visits)));
            const double score = value + explore;
            if (score > best) {
                best = score;
                pick = c;
            }
        }
        return pick;
    }

    static constexpr double kPenalty = 1e9;

    const SchedulingInstance& inst_;
    SubKView view_;
    SolverBudget budget_;
    Deadline deadline_;
    std::mt19937_64 rng_;
    std::vector<MctsNode> nodes_;
    double best_sum_ = kInf;
    std::vector<int> best_seq_;
    double s_min_ = kInf, s_max_ = -kInf;
    bool improved_ = false;
};

}  // namespace

SolverResult solve_mcts(const SchedulingInstance& inst, const SolverBudget& budget) {
    budget.validate();
    if (inst.global_scope || inst.scope.size() != 1)
        throw std::invalid_argument("MCTS solves single-intersection sub-problems only");
    if (inst.vehicles.empty()) {
        SolverTelemetry tel;
        tel.complete = true;
        PassingOrder order;
        order.at[inst.scope[0]] = {};
        return finish(inst, std::move(order), std::move(tel));
    }
    if (budget.max_iterations && *budget.max_iterations == 0) {
        SolverResult res = solve_fifo(inst);
        res.telemetry.fifo_fallback = true;
        res.telemetry.complete = false;
        return res;
    }
    return Mcts(inst, budget).run();
}

SolverResult solve_greedy_resequence(const SchedulingInstance& inst,
                                     const std::vector<int>& prev_order_vids) {
    if (inst.global_scope || inst.scope.size() != 1)
        throw std::invalid_argument("dynamic resequencing solves single-intersection "
                                    "sub-problems only");
    const int k = inst.scope[0];
    const int n = static_cast<int>(inst.vehicles.size());
    SubKView view = make_subk_view(inst);

    std::map<int, int> by_vid;
    for (int v = 0; v < n; ++v) by_vid[inst.vehicles[v].vid] = v;

    std::vector<int> seq;
    std::vector<char> carried(n, 0);
    for (int vid : prev_order_vids) {
        auto it = by_vid.find(vid);
        if (it == by_vid.end()) continue;
        seq.push_back(it->second);
        carried[it->second] = 1;
    }
    // New arrivals are inserted in precedence-topological order (a lane
    // follower never goes in before its leader), FIFO keys breaking ties.
    std::vector<int> fresh;
    {
        std::vector<int> indeg(n, 0);
        for (const auto& pr : inst.precedence)
            if (pr.k == k && !carried[pr.before] && !carried[pr.after]) ++indeg[pr.after];
        std::vector<char> done(n, 0);
        while (true) {
            int pick = -1;
            for (int v = 0; v < n; ++v) {
                if (carried[v] || done[v] || indeg[v] > 0) continue;
                if (pick < 0) { pick = v; continue; }
                const auto& pv = inst.vehicles[v];
                const auto& pp = inst.vehicles[pick];
                const int lv = pv.lane_keys.empty() ? 0 : pv.lane_keys[0];
                const int lp = pp.lane_keys.empty() ? 0 : pp.lane_keys[0];
                if (std::tie(view.tmin[v], lv, pv.vid) < std::tie(view.tmin[pick], lp, pp.vid))
                    pick = v;
            }
            if (pick < 0) break;
            fresh.push_back(pick);
            done[pick] = 1;
            for (const auto& pr : inst.precedence)
                if (pr.k == k && pr.before == pick && !carried[pr.after]) --indeg[pr.after];
        }
    }

    auto eval = [&](const std::vector<int>& cand) {
        ForwardState st;
        st.reset(view);
        for (int v : cand) st.append(view, v);
        return st.tmax_ok ? st.weighted_delay : kInf;
    };
    auto admissible_at = [&](const std::vector<int>& cur, int v, std::size_t pos) {
        // Position must sit after every predecessor and before every
        // successor of v already in the sequence.
        for (const auto& pr : inst.precedence) {
            if (pr.k != k) continue;
            if (pr.after == v) {
                for (std::size_t i = pos; i < cur.size(); ++i)
                    if (cur[i] == pr.before) return false;
            }
            if (pr.before == v) {
                for (std::size_t i = 0; i < pos; ++i)
                    if (cur[i] == pr.after) return false;
            }
        }
        return true;
    };

    for (int v : fresh) {
        std::size_t best_pos = seq.size();
        double best_cost = kInf;
        bool found = false;
        for (std::size_t pos = 0; pos <= seq.size(); ++pos) {
            if (!admissible_at(seq, v, pos)) continue;
            if (!found) best_pos = pos;  // fall back to the first legal slot
            found = true;
            std::vector<int> cand = seq;
            cand.insert(cand.begin() + pos, v);
            const double cost = eval(cand);
            if (cost < best_cost - 1e-12) {
                best_cost = cost;
                best_pos = pos;
            }
        }
        seq.insert(seq.begin() + best_pos, v);
    }

    SolverTelemetry tel;
    tel.complete = true;
    PassingOrder order;
    order.at[k] = std::move(seq);
    return finish(inst, std::move(order), std::move(tel));
}

}  // namespace coopdrive
