#pragma once

#include <algorithm>
#include <limits>
#include <random>
#include <vector>

#include "coopdrive/scheduling.hpp"

namespace coopdrive::testing {

// Fluent single-intersection instance builder. Vehicles added on the same
// lane get leader-first precedence in insertion order; lane i uses movement
// id i unless overridden.
class SubInstance {
public:
    explicit SubInstance(double dt1 = 1.5, double dt2 = 2.0, int k = 1) {
        inst_.scope = {k};
        inst_.gaps = {dt1, dt2};
        inst_.conflicts[k] = {};
    }

    int add(double t_min, int lane, int zone = 0,
            double t_max = std::numeric_limits<double>::infinity(), int movement = -1) {
        PlanVehicle v;
        v.vid = static_cast<int>(inst_.vehicles.size());
        v.intersections = {inst_.scope[0]};
        v.movements = {movement < 0 ? lane : movement};
        v.lane_keys = {lane};
        v.t_min0 = t_min;
        v.t_max = t_max;
        v.zone = zone;
        const int idx = static_cast<int>(inst_.vehicles.size());
        auto& chain = lane_chain_[lane];
        if (!chain.empty())
            inst_.precedence.push_back(
                {inst_.scope[0], chain.back(), idx, Precedence::Kind::SameLane});
        chain.push_back(idx);
        inst_.vehicles.push_back(std::move(v));
        return idx;
    }

    void conflict(int mov_a, int mov_b) {
        inst_.conflicts[inst_.scope[0]].insert({std::min(mov_a, mov_b), std::max(mov_a, mov_b)});
    }

    void weights(double w1, double w2) {
        inst_.w1 = w1;
        inst_.w2 = w2;
    }

    SchedulingInstance build() {
        SchedulingInstance out = inst_;
        out.Q1 = 0;
        out.Q2 = 0;
        for (const auto& v : out.vehicles) (v.zone == 0 ? out.Q1 : out.Q2)++;
        return out;
    }

private:
    SchedulingInstance inst_;
    std::map<int, std::vector<int>> lane_chain_;
};

// Every admissible total order at intersection k (respecting precedence).
inline std::vector<std::vector<int>> admissible_orders(const SchedulingInstance& inst) {
    const int n = static_cast<int>(inst.vehicles.size());
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    std::sort(perm.begin(), perm.end());
    std::vector<std::vector<int>> out;
    do {
        std::vector<int> pos(n);
        for (int i = 0; i < n; ++i) pos[perm[i]] = i;
        bool ok = true;
        for (const auto& pr : inst.precedence)
            if (pos[pr.before] > pos[pr.after]) { ok = false; break; }
        if (ok) out.push_back(perm);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return out;
}

// Exhaustive oracle: minimum objective over all admissible orders.
inline double enumerate_best(const SchedulingInstance& inst, PassingOrder* best = nullptr) {
    double best_obj = std::numeric_limits<double>::infinity();
    for (const auto& seq : admissible_orders(inst)) {
        PassingOrder order;
        order.at[inst.scope[0]] = seq;
        const Assignment a = forward_pass(inst, order);
        if (!a.feasible) continue;
        const double obj = instance_objective(inst, a);
        if (obj < best_obj) {
            best_obj = obj;
            if (best) *best = order;
        }
    }
    return best_obj;
}

// Random single-intersection instance: `lanes` lanes (movement id == lane),
// a random symmetric conflict relation between distinct movements, random
// arrival floors, and a few segment-tagged vehicles.
inline SchedulingInstance random_instance(std::mt19937_64& rng, int n, int lanes = 3,
                                          double conflict_p = 0.6, bool zones = true) {
    SubInstance b;
    std::uniform_real_distribution<double> tmin(0.0, 25.0);
    std::uniform_int_distribution<int> lane_pick(0, lanes - 1);
    std::bernoulli_distribution conf(conflict_p);
    std::bernoulli_distribution seg(0.3);
    for (int a = 0; a < lanes; ++a)
        for (int c = a + 1; c < lanes; ++c)
            if (conf(rng)) b.conflict(a, c);
    for (int i = 0; i < n; ++i)
        b.add(tmin(rng), lane_pick(rng), zones && seg(rng) ? 1 : 0);
    return b.build();
}

}  // namespace coopdrive::testing
