#include <cmath>
#include <random>

#include "doctest.h"

#include "coopdrive/kinematics.hpp"

using namespace coopdrive;

namespace {

KinematicLimits paper_limits() { return {15.0, 0.0, 3.0, -5.0, 10.0}; }

// Independent oracle: integrate the time-optimal policy (full throttle to
// v_max, then hold) at 1 ms, interpolating the crossing inside the last step.
double oracle_minimal_time(double dist, double v, const KinematicLimits& lim) {
    const double dt = 1e-3;
    double t = 0.0;
    while (dist > 0.0) {
        const double a = v < lim.v_max - 1e-12 ? lim.a_max : 0.0;
        const double v2 = std::min(lim.v_max, v + a * dt);
        const double step_a = (v2 - v) / dt;
        const double ds = v * dt + 0.5 * step_a * dt * dt;
        if (ds >= dist) {
            if (std::abs(step_a) < 1e-12) return t + dist / v;
            return t + (-v + std::sqrt(v * v + 2.0 * step_a * dist)) / step_a;
        }
        dist -= ds;
        v = v2;
        t += dt;
    }
    return t;
}

struct ProfileScan {
    double final_distance;
    double v_lo, v_hi;
};

ProfileScan scan_profile(const LongitudinalState& s, const SpeedProfile& prof,
                         const KinematicLimits& lim) {
    ProfileScan scan{s.distance, s.velocity, s.velocity};
    const double total = prof.total_time();
    for (double t = 0.0; t <= total + 1e-9; t += 1e-3) {
        const LongitudinalState st = integrate(s, prof, std::min(t, total), lim);
        scan.v_lo = std::min(scan.v_lo, st.velocity);
        scan.v_hi = std::max(scan.v_hi, st.velocity);
    }
    scan.final_distance = integrate(s, prof, total, lim).distance;
    return scan;
}

}  // namespace

TEST_CASE("minimal arrival time closed forms") {
    const KinematicLimits lim = paper_limits();
    CHECK(minimal_arrival_time({0.0, 7.0}, lim) == doctest::Approx(0.0));
    // accelerate 10 -> 15 over 20.8333 m, cruise the remaining 179.1667 m
    CHECK(minimal_arrival_time({200.0, 10.0}, lim) == doctest::Approx(13.6111).epsilon(1e-4));
    CHECK(minimal_arrival_time({10.0, 15.0}, lim) == doctest::Approx(0.6667).epsilon(1e-4));
}

TEST_CASE("minimal arrival time matches 1 ms forward integration") {
    const KinematicLimits lim = paper_limits();
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> d_dist(0.5, 500.0);
    std::uniform_real_distribution<double> v_dist(0.0, 15.0);
    for (int i = 0; i < 500; ++i) {
        const double d = d_dist(rng);
        const double v = v_dist(rng);
        const double closed = minimal_arrival_time({d, v}, lim);
        const double integrated = oracle_minimal_time(d, v, lim);
        CHECK(std::abs(closed - integrated) < 2e-3);
    }
}

TEST_CASE("minimal arrival time monotone in distance and velocity") {
    const KinematicLimits lim = paper_limits();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> d_dist(0.0, 400.0);
    std::uniform_real_distribution<double> v_dist(0.0, 15.0);
    for (int i = 0; i < 2000; ++i) {
        const double d = d_dist(rng);
        const double v = v_dist(rng);
        const double base = minimal_arrival_time({d, v}, lim);
        CHECK(minimal_arrival_time({d + 1.0, v}, lim) >= base - 1e-12);
        if (v >= 0.5) CHECK(minimal_arrival_time({d, v - 0.5}, lim) >= base - 1e-12);
    }
}

TEST_CASE("latest arrival time") {
    const KinematicLimits lim = paper_limits();
    // can stop well short of the line -> unbounded
    CHECK(latest_arrival_time({200.0, 10.0}, lim) == kInfiniteTime);
    // inside braking distance: forced across while braking
    const double t = latest_arrival_time({5.0, 15.0}, lim);
    CHECK(std::isfinite(t));
    CHECK(t > 5.0 / 15.0);  // slower than free flow
    // crawl floor when v_min > 0
    KinematicLimits crawl = lim;
    crawl.v_min = 2.0;
    CHECK(latest_arrival_time({100.0, 10.0}, crawl) ==
          doctest::Approx((10.0 - 2.0) / 5.0 + (100.0 - 9.6) / 2.0));
}

TEST_CASE("synthesize: boundary case reproduces the minimal profile") {
    const KinematicLimits lim = paper_limits();
    const LongitudinalState s{200.0, 10.0};
    const double t_min = minimal_arrival_time(s, lim);
    const SpeedProfile prof = synthesize_profile(s, t_min, lim);
    CHECK(prof.total_time() == doctest::Approx(t_min).epsilon(1e-9));
    const ProfileScan scan = scan_profile(s, prof, lim);
    CHECK(std::abs(scan.final_distance) < 1e-4);
}

TEST_CASE("synthesize: delayed three-phase arrival at exactly t=20") {
    const KinematicLimits lim = paper_limits();
    const LongitudinalState s{200.0, 10.0};
    const SpeedProfile prof = synthesize_profile(s, 20.0, lim);
    CHECK(prof.total_time() == doctest::Approx(20.0).epsilon(1e-9));
    const ProfileScan scan = scan_profile(s, prof, lim);
    CHECK(std::abs(scan.final_distance) < 1e-4);
    CHECK(scan.v_lo < 10.0);  // dips below the initial speed to burn slack
    // terminal velocity is as high as the family permits: back at v_max
    const LongitudinalState fin = integrate(s, prof, prof.total_time(), lim);
    CHECK(fin.velocity == doctest::Approx(lim.v_max).epsilon(1e-6));
}

TEST_CASE("synthesize: stop-and-wait for a far-future target") {
    const KinematicLimits lim = paper_limits();
    const LongitudinalState s{200.0, 10.0};
    const SpeedProfile prof = synthesize_profile(s, 1e6, lim);
    CHECK(prof.total_time() == doctest::Approx(1e6).epsilon(1e-9));
    double v = s.velocity;
    double v_min_seen = v;
    for (const auto& ph : prof.phases) {
        v = std::clamp(v + ph.accel * ph.duration, lim.v_min, lim.v_max);
        v_min_seen = std::min(v_min_seen, v);
    }
    CHECK(v_min_seen == doctest::Approx(0.0).epsilon(1e-9));
    const LongitudinalState fin = integrate(s, prof, prof.total_time(), lim);
    CHECK(std::abs(fin.distance) < 1e-4);
}

TEST_CASE("synthesize: infeasible target rejected naming the deficit") {
    const KinematicLimits lim = paper_limits();
    CHECK_THROWS_AS(synthesize_profile({200.0, 10.0}, 5.0, lim), ProfileInfeasible);
    try {
        synthesize_profile({200.0, 10.0}, 5.0, lim);
    } catch (const ProfileInfeasible& e) {
        CHECK(std::string(e.what()).find("deficit") != std::string::npos);
    }
}

TEST_CASE("synthesize property: exact arrival over random states and targets") {
    const KinematicLimits lim = paper_limits();
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> d_dist(0.5, 450.0);
    std::uniform_real_distribution<double> v_dist(0.0, 15.0);
    std::uniform_real_distribution<double> u_dist(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const LongitudinalState s{d_dist(rng), v_dist(rng)};
        const double t_min = minimal_arrival_time(s, lim);
        const double latest = latest_arrival_time(s, lim);
        double target = t_min + u_dist(rng) * u_dist(rng) * 90.0;
        if (std::isfinite(latest)) target = std::min(target, latest - 1e-6);
        target = std::max(target, t_min);
        const SpeedProfile prof = synthesize_profile(s, target, lim);
        CHECK(std::abs(prof.total_time() - target) < 1e-6);
        const LongitudinalState fin = integrate(s, prof, prof.total_time(), lim);
        CHECK(std::abs(fin.distance) < 1e-4);
        const ProfileScan scan = scan_profile(s, prof, lim);
        CHECK(scan.v_lo >= lim.v_min - 1e-9);
        CHECK(scan.v_hi <= lim.v_max + 1e-9);
    }
}

TEST_CASE("integrate: closed-form slices") {
    const KinematicLimits lim = paper_limits();
    SUBCASE("zero acceleration") {
        SpeedProfile prof{{{1.0, 0.0}}};
        const LongitudinalState out = integrate({100.0, 10.0}, prof, 1.0, lim);
        CHECK(out.distance == doctest::Approx(90.0));
        CHECK(out.velocity == doctest::Approx(10.0));
    }
    SUBCASE("clamps at v_max mid-phase") {
        SpeedProfile prof{{{1.0, 3.0}}};
        const LongitudinalState out = integrate({100.0, 14.5}, prof, 1.0, lim);
        CHECK(out.velocity == doctest::Approx(15.0));
        CHECK(100.0 - out.distance == doctest::Approx(14.9583).epsilon(1e-4));
    }
    SUBCASE("empty profile leaves the state untouched") {
        SpeedProfile prof;
        const LongitudinalState out = integrate({100.0, 10.0}, prof, 5.0, lim);
        CHECK(out.distance == doctest::Approx(100.0));
        CHECK(out.velocity == doctest::Approx(10.0));
    }
}

TEST_CASE("cruise travel toward v_c") {
    const KinematicLimits lim = paper_limits();
    SUBCASE("already at v_c") {
        const CruiseTravel ct = cruise_travel(100.0, 10.0, lim);
        CHECK(ct.time == doctest::Approx(10.0));
        CHECK(ct.v_end == doctest::Approx(10.0));
    }
    SUBCASE("decelerates from v_max") {
        const CruiseTravel ct = cruise_travel(100.0, 15.0, lim);
        CHECK(ct.time == doctest::Approx(1.0 + 87.5 / 10.0));
        CHECK(ct.v_end == doctest::Approx(10.0));
    }
    SUBCASE("accelerates from rest") {
        const CruiseTravel ct = cruise_travel(100.0, 0.0, lim);
        CHECK(ct.time == doctest::Approx(10.0 / 3.0 + (100.0 - 50.0 / 3.0) / 10.0));
        CHECK(ct.v_end == doctest::Approx(10.0));
    }
    SUBCASE("distance too short to finish adjusting") {
        const CruiseTravel ct = cruise_travel(5.0, 15.0, lim);
        CHECK(ct.v_end == doctest::Approx(std::sqrt(225.0 - 2.0 * 5.0 * 5.0)));
    }
}
