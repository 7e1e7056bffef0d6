#include <cmath>

#include "doctest.h"

#include "coopdrive/coordinator.hpp"

using namespace coopdrive;

namespace {

KinematicLimits paper_limits() { return {15.0, 0.0, 3.0, -5.0, 10.0}; }

CoordinatorContext make_ctx(const NetworkSpec& net, Strategy strat = Strategy::Mcts,
                            CoordMode mode = CoordMode::DS) {
    CoordinatorContext ctx;
    ctx.net = &net;
    DivisionParams p;
    p.l_c = 200.0;
    p.l_r = 100.0;
    p.delta_t = 2.0;
    p.v_c = 10.0;
    ctx.division = divide_network(net, p);
    ctx.limits = paper_limits();
    ctx.gaps = {1.5, 2.0};
    ctx.cfg.strategy = strat;
    ctx.cfg.mode = mode;
    ctx.cfg.budget.wall_seconds = 0.0;
    ctx.cfg.budget.max_iterations = 2000;
    ctx.prepare();
    return ctx;
}

const Route& route_with_steps(const NetworkSpec& net, std::size_t n_steps, int first_k) {
    for (const auto& r : net.routes)
        if (r.steps.size() == n_steps && r.steps[0].intersection == first_k) return r;
    throw std::runtime_error("no such route");
}

SnapVehicle snap_vehicle(int vid, double dist, double vel, const Route& r, std::size_t hop,
                         Zone zone, double prev = std::numeric_limits<double>::quiet_NaN()) {
    SnapVehicle sv;
    sv.vid = vid;
    sv.dist_to_line = dist;
    sv.velocity = vel;
    sv.route = &r;
    sv.hop = hop;
    sv.zone = zone;
    sv.prev_assign = prev;
    return sv;
}

}  // namespace

TEST_CASE("build_subproblem: zone counts and weights") {
    const NetworkSpec net = make_corridor2();
    const auto ctx = make_ctx(net);
    const Route& eb = route_with_steps(net, 2, 1);
    const Route& nb = route_with_steps(net, 1, 1);

    AreaSnapshot snap{1, 100.0, {}, {}};
    snap.in_area.push_back(snap_vehicle(0, 150.0, 10.0, eb, 0, Zone::InsideArea));
    snap.in_area.push_back(snap_vehicle(1, 180.0, 12.0, nb, 0, Zone::InsideArea));
    snap.in_area.push_back(snap_vehicle(2, 60.0, 14.0, nb, 0, Zone::InsideArea));
    snap.segment.push_back(snap_vehicle(3, 250.0, 10.0, eb, 0, Zone::Segment));
    snap.segment.push_back(snap_vehicle(4, 290.0, 10.0, nb, 0, Zone::Segment));

    SUBCASE("DS keeps segment vehicles with the w2 tag") {
        const SchedulingInstance inst = build_subproblem(snap, ctx);
        CHECK(inst.Q1 == 3);
        CHECK(inst.Q2 == 2);
        CHECK(inst.vehicles.size() == 5);
        int segs = 0;
        for (const auto& v : inst.vehicles) segs += v.zone == 1 ? 1 : 0;
        CHECK(segs == 2);
    }
    SUBCASE("PDS drops them") {
        auto ctx2 = make_ctx(net, Strategy::Mcts, CoordMode::PDS);
        const SchedulingInstance inst = build_subproblem(snap, ctx2);
        CHECK(inst.Q1 == 3);
        CHECK(inst.Q2 == 0);
        CHECK(inst.vehicles.size() == 3);
    }
    SUBCASE("empty snapshot gives an empty instance") {
        AreaSnapshot empty{1, 100.0, {}, {}};
        const SchedulingInstance inst = build_subproblem(empty, ctx);
        CHECK(inst.vehicles.empty());
        CHECK(inst.Q1 == 0);
        CHECK(inst.Q2 == 0);
    }
}

TEST_CASE("build_subproblem: arrival windows recomputed from kinematic state") {
    const NetworkSpec net = make_corridor2();
    const auto ctx = make_ctx(net);
    const Route& eb = route_with_steps(net, 2, 1);

    AreaSnapshot snap{1, 100.0, {}, {}};
    snap.in_area.push_back(snap_vehicle(0, 200.0, 10.0, eb, 0, Zone::InsideArea));
    snap.segment.push_back(snap_vehicle(1, 250.0, 10.0, eb, 0, Zone::Segment));
    const SchedulingInstance inst = build_subproblem(snap, ctx);

    // In-area: full dynamics from (200 m, 10 m/s).
    CHECK(inst.vehicles[0].t_min0 ==
          doctest::Approx(100.0 + minimal_arrival_time({200.0, 10.0}, ctx.limits)));
    // Segment: cruise 50 m at v_c, then free run over l_c.
    CHECK(inst.vehicles[1].t_min0 ==
          doctest::Approx(100.0 + 5.0 + minimal_arrival_time({200.0, 10.0}, ctx.limits)));
    CHECK(std::isinf(inst.vehicles[1].t_max));
    // Same entry lane: physical order leader-first.
    bool found = false;
    for (const auto& pr : inst.precedence)
        if (pr.before == 0 && pr.after == 1 && pr.kind == Precedence::Kind::SameLane)
            found = true;
    CHECK(found);
}

TEST_CASE("build_subproblem: committed vehicles keep their relative order") {
    const NetworkSpec net = make_corridor2();
    const auto ctx = make_ctx(net);
    const Route& eb = route_with_steps(net, 2, 1);
    const Route& nb = route_with_steps(net, 1, 1);

    AreaSnapshot snap{1, 100.0, {}, {}};
    // Both within the 3 s commit horizon, conflicting movements.
    snap.in_area.push_back(snap_vehicle(0, 15.0, 14.0, eb, 0, Zone::InsideArea, 101.2));
    snap.in_area.push_back(snap_vehicle(1, 25.0, 14.0, nb, 0, Zone::InsideArea, 102.9));
    // Far from its entry: free to re-sequence.
    snap.in_area.push_back(snap_vehicle(2, 190.0, 10.0, nb, 0, Zone::InsideArea, 113.0));
    const SchedulingInstance inst = build_subproblem(snap, ctx);
    CHECK(inst.vehicles[0].committed);
    CHECK(inst.vehicles[1].committed);
    CHECK_FALSE(inst.vehicles[2].committed);
    bool chain = false;
    for (const auto& pr : inst.precedence)
        if (pr.kind == Precedence::Kind::OrderOnly && pr.before == 0 && pr.after == 1)
            chain = true;
    CHECK(chain);
}

TEST_CASE("planning_tick: lone vehicle gets its floor (zero delay)") {
    const NetworkSpec net = make_corridor2();
    Coordinator coord(make_ctx(net), 1);
    const Route& eb = route_with_steps(net, 2, 1);
    AreaSnapshot snap{1, 0.0, {}, {}};
    snap.in_area.push_back(snap_vehicle(7, 150.0, 10.0, eb, 0, Zone::InsideArea));
    const TickApply out = coord.planning_tick(0.0, {snap});
    REQUIRE(out.trajectories.count({7, 1}) == 1);
    CHECK(out.trajectories.at({7, 1}) ==
          doctest::Approx(minimal_arrival_time({150.0, 10.0}, paper_limits())));
    CHECK(out.reservations.empty());
    REQUIRE(coord.log().size() == 1);  // one record per snapshot
    CHECK(coord.log()[0].q1 == 1);
    CHECK(coord.log()[0].q2 == 0);
}

TEST_CASE("planning_tick: segment vehicles get reservations, not trajectories") {
    const NetworkSpec net = make_corridor2();
    Coordinator coord(make_ctx(net), 1);
    const Route& eb = route_with_steps(net, 2, 1);
    AreaSnapshot snap{1, 0.0, {}, {}};
    snap.segment.push_back(snap_vehicle(3, 250.0, 10.0, eb, 0, Zone::Segment));
    const TickApply out = coord.planning_tick(0.0, {snap});
    CHECK(out.trajectories.empty());
    REQUIRE(out.reservations.count({3, 1}) == 1);
    const double reserved = out.reservations.at({3, 1});

    SUBCASE("activation on area entry returns the reservation") {
        const auto r =
            coord.on_enter_area(snap_vehicle(3, 199.5, 10.0, eb, 0, Zone::InsideArea), 1, 5.0);
        REQUIRE(r.has_value());
        CHECK(*r == doctest::Approx(reserved));
        CHECK(coord.cold_entries() == 0);
        CHECK(coord.relaxations() == 0);
    }
    SUBCASE("a stale reservation is relaxed to the refreshed floor") {
        // Pretend heavy drift: the vehicle shows up much later than planned.
        const auto r =
            coord.on_enter_area(snap_vehicle(3, 199.5, 10.0, eb, 0, Zone::InsideArea), 1, 50.0);
        REQUIRE(r.has_value());
        CHECK(*r == doctest::Approx(50.0 + minimal_arrival_time({199.5, 10.0}, paper_limits())));
        CHECK(coord.relaxations() == 1);
    }
    SUBCASE("missing reservation counts as a cold entry") {
        const auto r =
            coord.on_enter_area(snap_vehicle(9, 199.5, 10.0, eb, 0, Zone::InsideArea), 1, 5.0);
        REQUIRE(r.has_value());
        CHECK(coord.cold_entries() == 1);
    }
}

TEST_CASE("PDS never answers area entries") {
    const NetworkSpec net = make_corridor2();
    Coordinator coord(make_ctx(net, Strategy::Mcts, CoordMode::PDS), 1);
    const Route& eb = route_with_steps(net, 2, 1);
    const auto r =
        coord.on_enter_area(snap_vehicle(3, 199.0, 10.0, eb, 0, Zone::InsideArea), 1, 5.0);
    CHECK_FALSE(r.has_value());
}

TEST_CASE("sub-problem results are independent of merge order and threading") {
    const NetworkSpec net = make_corridor2();
    const Route& eb = route_with_steps(net, 2, 1);
    const Route& wb = route_with_steps(net, 2, 2);
    const Route& nb1 = route_with_steps(net, 1, 1);
    const Route& nb2 = route_with_steps(net, 1, 2);

    auto build_snaps = [&]() {
        std::vector<AreaSnapshot> snaps;
        AreaSnapshot s1{1, 0.0, {}, {}};
        s1.in_area.push_back(snap_vehicle(0, 150.0, 10.0, eb, 0, Zone::InsideArea));
        s1.in_area.push_back(snap_vehicle(1, 120.0, 11.0, nb1, 0, Zone::InsideArea));
        s1.segment.push_back(snap_vehicle(2, 260.0, 10.0, eb, 0, Zone::Segment));
        AreaSnapshot s2{2, 0.0, {}, {}};
        s2.in_area.push_back(snap_vehicle(3, 90.0, 9.0, wb, 0, Zone::InsideArea));
        s2.in_area.push_back(snap_vehicle(4, 140.0, 12.0, nb2, 0, Zone::InsideArea));
        snaps.push_back(s1);
        snaps.push_back(s2);
        return snaps;
    };

    Coordinator a(make_ctx(net), 99);
    const TickApply ra = a.planning_tick(0.0, build_snaps());

    Coordinator b(make_ctx(net), 99);
    b.set_merge_permutation({1, 0});
    const TickApply rb = b.planning_tick(0.0, build_snaps());

    auto ctx_par = make_ctx(net);
    ctx_par.cfg.parallel_subproblems = true;
    Coordinator c(ctx_par, 99);
    const TickApply rc = c.planning_tick(0.0, build_snaps());

    CHECK(ra.trajectories == rb.trajectories);
    CHECK(ra.reservations == rb.reservations);
    CHECK(ra.trajectories == rc.trajectories);
    CHECK(ra.reservations == rc.reservations);
}

TEST_CASE("global instance: remaining routes, hop times, and no-overtaking links") {
    const NetworkSpec net = make_corridor2();
    const auto ctx = make_ctx(net, Strategy::Exact);
    const Route& eb = route_with_steps(net, 2, 1);

    std::vector<AreaSnapshot> snaps;
    AreaSnapshot s1{1, 0.0, {}, {}};
    s1.in_area.push_back(snap_vehicle(0, 150.0, 10.0, eb, 0, Zone::InsideArea));
    s1.in_area.push_back(snap_vehicle(1, 180.0, 10.0, eb, 0, Zone::InsideArea));
    snaps.push_back(s1);
    snaps.push_back(AreaSnapshot{2, 0.0, {}, {}});

    const SchedulingInstance inst = build_global_instance(snaps, ctx);
    CHECK(inst.global_scope);
    CHECK(inst.scope == std::vector<int>{1, 2});
    REQUIRE(inst.vehicles.size() == 2);
    CHECK(inst.vehicles[0].intersections == std::vector<int>{1, 2});
    REQUIRE(inst.vehicles[0].hop_times.size() == 1);
    // crossing at v_max plus the 400 m leg under the cruise model
    const double hop = inst.vehicles[0].hop_times[0];
    const CruiseTravel ct = cruise_travel(400.0 - 200.0, 15.0, ctx.limits);
    CHECK(hop == doctest::Approx(20.0 / 15.0 + ct.time +
                                 minimal_arrival_time({200.0, ct.v_end}, ctx.limits)));
    // same-lane pair travels together: linked order at intersection 2
    REQUIRE(inst.linked.size() == 1);
    CHECK(inst.linked[0].k_src == 1);
    CHECK(inst.linked[0].k_dst == 2);

    Coordinator coord(ctx, 5);
    const TickApply out = coord.planning_tick(0.0, snaps);
    CHECK(out.trajectories.size() == 2);  // first-hop trajectories only
    CHECK(out.reservations.empty());
}
