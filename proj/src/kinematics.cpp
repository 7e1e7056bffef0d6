#include "coopdrive/kinematics.hpp"

#include <algorithm>
#include <cmath>

namespace coopdrive {

namespace {

constexpr double kTimeTol = 1e-9;

// Time-optimal traversal of `dist` starting at speed v0: full throttle to
// v_max, then cruise. Returns 0 for non-positive distances.
double fast_traverse_time(double dist, double v0, const KinematicLimits& lim) {
    if (dist <= 0.0) return 0.0;
    const double d_acc = (lim.v_max * lim.v_max - v0 * v0) / (2.0 * lim.a_max);
    if (d_acc <= dist) {
        return (lim.v_max - v0) / lim.a_max + (dist - d_acc) / lim.v_max;
    }
    return (-v0 + std::sqrt(v0 * v0 + 2.0 * lim.a_max * dist)) / lim.a_max;
}

// Appends the fast-traverse phases (accelerate, then cruise at v_max when
// reached) for `dist` meters starting at v0.
void append_fast_traverse(std::vector<ProfilePhase>& phases, double dist, double v0,
                          const KinematicLimits& lim) {
    if (dist <= 0.0) return;
    const double d_acc = (lim.v_max * lim.v_max - v0 * v0) / (2.0 * lim.a_max);
    if (d_acc <= dist) {
        if (lim.v_max > v0) phases.push_back({(lim.v_max - v0) / lim.a_max, lim.a_max});
        const double rest = dist - d_acc;
        if (rest > 0.0) phases.push_back({rest / lim.v_max, 0.0});
    } else {
        const double t = (-v0 + std::sqrt(v0 * v0 + 2.0 * lim.a_max * dist)) / lim.a_max;
        phases.push_back({t, lim.a_max});
    }
}

}  // namespace

void KinematicLimits::validate() const {
    if (!(v_min >= 0.0) || !(v_min <= v_c) || !(v_c <= v_max))
        throw std::invalid_argument("kinematic limits require 0 <= v_min <= v_c <= v_max");
    if (!(a_min < 0.0) || !(a_max > 0.0))
        throw std::invalid_argument("kinematic limits require a_min < 0 < a_max");
}

double SpeedProfile::total_time() const {
    double t = 0.0;
    for (const auto& p : phases) t += p.duration;
    return t;
}

double minimal_arrival_time(const LongitudinalState& s, const KinematicLimits& lim) {
    const double v = std::clamp(s.velocity, lim.v_min, lim.v_max);
    return fast_traverse_time(s.distance, v, lim);
}

double latest_arrival_time(const LongitudinalState& s, const KinematicLimits& lim) {
    if (s.distance <= 0.0) return 0.0;
    const double v = std::clamp(s.velocity, lim.v_min, lim.v_max);
    const double brake = -lim.a_min;
    const double d_brake = (v * v - lim.v_min * lim.v_min) / (2.0 * brake);
    if (d_brake < s.distance) {
        if (lim.v_min <= 0.0) return kInfiniteTime;
        return (v - lim.v_min) / brake + (s.distance - d_brake) / lim.v_min;
    }
    // The line is crossed while still braking.
    const double disc = v * v - 2.0 * brake * s.distance;
    return (v - std::sqrt(std::max(0.0, disc))) / brake;
}

SpeedProfile synthesize_profile(const LongitudinalState& s, double t_target,
                                const KinematicLimits& lim) {
    const double d = s.distance;
    const double v = std::clamp(s.velocity, lim.v_min, lim.v_max);
    const double t_min = fast_traverse_time(d, v, lim);

    if (t_target < t_min - kTimeTol) {
        throw ProfileInfeasible("arrival target " + std::to_string(t_target) +
                                " s is below the minimal arrival time " + std::to_string(t_min) +
                                " s (deficit " + std::to_string(t_min - t_target) + " s)");
    }

    SpeedProfile out;
    if (d <= 0.0) return out;

    if (t_target <= t_min + kTimeTol) {
        append_fast_traverse(out.phases, d, v, lim);
        return out;
    }

    const double brake = -lim.a_min;

    // Family 1: cruise at the current speed for tau, then run to the line at
    // full throttle. Covers [t_min, T1_max] where T1_max corresponds to the
    // whole slack being absorbed before any braking is needed.
    if (v > lim.v_min + 1e-12) {
        // With the v_max cruise tail: arrival = t_min + tau * (1 - v / v_max),
        // valid while the acceleration still reaches v_max before the line.
        const double d_acc_full = (lim.v_max * lim.v_max - v * v) / (2.0 * lim.a_max);
        if (d_acc_full <= d && lim.v_max > v) {
            const double tau_star = (d - d_acc_full) / v;
            const double t_at_tau_star = t_min + tau_star * (1.0 - v / lim.v_max);
            if (t_target <= t_at_tau_star + kTimeTol) {
                const double tau = (t_target - t_min) / (1.0 - v / lim.v_max);
                if (tau > 0.0) out.phases.push_back({tau, 0.0});
                append_fast_traverse(out.phases, d - v * tau, v, lim);
                return out;
            }
        }
    } else if (lim.v_min <= 0.0 && v <= 1e-12) {
        // Standing start: wait in place, then sprint. Exact by construction.
        const double wait = t_target - t_min;
        out.phases.push_back({wait, 0.0});
        append_fast_traverse(out.phases, d, v, lim);
        return out;
    }

    // Family 2: decelerate at a_min to a hold speed v_h, cruise at v_h, then
    // accelerate so v_max is regained exactly at the line. For a given
    // arrival time the hold duration is fixed, leaving one equation in v_h
    // on the covered distance. The residual is monotone in v_h, so bisect.
    const double v_reach = std::sqrt(std::max(0.0, v * v - 2.0 * brake * d));
    const double v_lo_bound = std::max(lim.v_min, v_reach);

    auto hold_residual = [&](double v_h) {
        // > 0 means the profile overshoots the line for this v_h.
        const double t1 = (v - v_h) / brake;
        const double d1 = (v * v - v_h * v_h) / (2.0 * brake);
        const double t3 = (lim.v_max - v_h) / lim.a_max;
        const double d3 = (lim.v_max * lim.v_max - v_h * v_h) / (2.0 * lim.a_max);
        const double tau = t_target - t1 - t3;
        return d1 + v_h * tau + d3 - d;
    };

    auto emit_hold_profile = [&](double v_h) {
        const double t1 = (v - v_h) / brake;
        const double t3 = (lim.v_max - v_h) / lim.a_max;
        const double tau = t_target - t1 - t3;
        if (t1 > 0.0) out.phases.push_back({t1, lim.a_min});
        if (tau > 0.0) out.phases.push_back({tau, 0.0});
        if (t3 > 0.0) out.phases.push_back({t3, lim.a_max});
    };

    // The hold family needs tau >= 0 and v_h within [v_lo_bound, v]. Check
    // whether some admissible v_h solves the residual. Hold speeds below
    // 0.01 m/s are numerically degenerate crawls; those targets go to the
    // stop-and-wait branch instead.
    {
        double lo = std::max(v_lo_bound, 0.01), hi = v;
        auto tau_of = [&](double v_h) {
            return t_target - (v - v_h) / brake - (lim.v_max - v_h) / lim.a_max;
        };
        // Shrink hi until tau >= 0 (tau grows as v_h falls only when braking
        // frees up time; for v_h close to v tau can be negative when the
        // target is tight -- those targets were handled by family 1).
        if (tau_of(hi) < 0.0) {
            // find v_h where tau == 0 via closed form: linear in v_h
            // tau(v_h) = t_target - (v - v_h)/brake - (v_max - v_h)/a_max
            const double slope = 1.0 / brake + 1.0 / lim.a_max;
            const double v_h0 = (t_target - v / brake - lim.v_max / lim.a_max) / -slope;
            hi = std::min(hi, v_h0);
        }
        if (hi >= lo) {
            const double r_lo = hold_residual(lo);
            const double r_hi = hold_residual(hi);
            if ((r_lo <= 0.0 && r_hi >= 0.0) || (r_lo >= 0.0 && r_hi <= 0.0)) {
                for (int i = 0; i < 200; ++i) {
                    const double mid = 0.5 * (lo + hi);
                    const double r = hold_residual(mid);
                    if ((r >= 0.0) == (r_hi >= 0.0)) hi = mid; else lo = mid;
                    if (hi - lo < 1e-14) break;
                }
                const double v_h = 0.5 * (lo + hi);
                if (tau_of(v_h) >= -1e-12 && std::abs(hold_residual(v_h)) < 1e-5) {
                    emit_hold_profile(v_h);
                    return out;
                }
            }
        }
    }

    // Family 3: dip -- decelerate to v_h and immediately accelerate to the
    // line (no room to regain v_max). Arrival is monotone decreasing in v_h.
    auto dip_time = [&](double v_h) {
        const double t1 = (v - v_h) / brake;
        const double d1 = (v * v - v_h * v_h) / (2.0 * brake);
        return t1 + fast_traverse_time(d - d1, v_h, lim);
    };
    auto emit_dip_profile = [&](double v_h) {
        const double t1 = (v - v_h) / brake;
        const double d1 = (v * v - v_h * v_h) / (2.0 * brake);
        if (t1 > 0.0) out.phases.push_back({t1, lim.a_min});
        append_fast_traverse(out.phases, d - d1, v_h, lim);
    };

    const double t_bottom = dip_time(v_lo_bound);
    if (t_target <= t_bottom + kTimeTol) {
        double lo = v_lo_bound, hi = v;
        for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (lo + hi);
            if (dip_time(mid) > t_target) lo = mid; else hi = mid;
            if (hi - lo < 1e-14) break;
        }
        const double v_h = 0.5 * (lo + hi);
        emit_dip_profile(v_h);
        return out;
    }

    // Slack exceeds what braking to v_lo_bound can absorb.
    if (v_lo_bound > lim.v_min + 1e-12) {
        // Within braking distance of the line and unable to stop: the target
        // is later than the latest physically achievable arrival.
        throw ProfileInfeasible("arrival target " + std::to_string(t_target) +
                                " s exceeds the latest achievable arrival " +
                                std::to_string(t_bottom) + " s");
    }
    if (lim.v_min > 0.0) {
        // Crawl at v_min; the maximum stretch ends with the whole remainder
        // at v_min.
        const double t1 = (v - lim.v_min) / brake;
        const double d1 = (v * v - lim.v_min * lim.v_min) / (2.0 * brake);
        const double t_latest = t1 + (d - d1) / lim.v_min;
        if (t_target > t_latest + kTimeTol) {
            throw ProfileInfeasible("arrival target " + std::to_string(t_target) +
                                    " s exceeds the latest achievable arrival " +
                                    std::to_string(t_latest) + " s (v_min > 0)");
        }
        // Hold v_min for tau, then sprint. Solve the distance equation for tau.
        // d1 + v_min*tau + dist(sprint over remaining) = d with sprint time
        // t_target - t1 - tau; bisect on tau.
        double lo = 0.0, hi = (d - d1) / lim.v_min;
        auto arrival = [&](double tau) {
            return t1 + tau + fast_traverse_time(d - d1 - lim.v_min * tau, lim.v_min, lim);
        };
        for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (lo + hi);
            if (arrival(mid) < t_target) lo = mid; else hi = mid;
            if (hi - lo < 1e-14) break;
        }
        const double tau = 0.5 * (lo + hi);
        if (t1 > 0.0) out.phases.push_back({t1, lim.a_min});
        if (tau > 0.0) out.phases.push_back({tau, 0.0});
        append_fast_traverse(out.phases, d - d1 - lim.v_min * tau, lim.v_min, lim);
        return out;
    }

    // Stop-and-wait: brake to a full stop short of the line, wait, depart so
    // the line is crossed exactly at t_target.
    const double t1 = v / brake;
    const double d1 = v * v / (2.0 * brake);
    const double sprint = fast_traverse_time(d - d1, 0.0, lim);
    const double wait = t_target - t1 - sprint;
    if (t1 > 0.0) out.phases.push_back({t1, lim.a_min});
    out.phases.push_back({wait, 0.0});
    append_fast_traverse(out.phases, d - d1, 0.0, lim);
    return out;
}

CruiseTravel cruise_travel(double dist, double v0, const KinematicLimits& lim) {
    if (dist <= 0.0) return {0.0, v0};
    const double v = std::clamp(v0, lim.v_min, lim.v_max);
    if (std::abs(v - lim.v_c) < 1e-12) return {dist / lim.v_c, lim.v_c};
    const double a = v > lim.v_c ? lim.a_min : lim.a_max;
    const double t_adj = (lim.v_c - v) / a;
    const double d_adj = (lim.v_c * lim.v_c - v * v) / (2.0 * a);
    if (d_adj >= dist) {
        // Still adjusting when the distance runs out.
        const double v_end = std::sqrt(std::max(0.0, v * v + 2.0 * a * dist));
        return {(v_end - v) / a, v_end};
    }
    return {t_adj + (dist - d_adj) / lim.v_c, lim.v_c};
}

LongitudinalState integrate(const LongitudinalState& s, const SpeedProfile& profile,
                            double dt, const KinematicLimits& lim) {
    LongitudinalState cur = s;
    double remaining = dt;
    for (const auto& phase : profile.phases) {
        if (remaining <= 0.0) break;
        const double span = std::min(remaining, phase.duration);
        double v0 = cur.velocity;
        double a = phase.accel;
        double travel = 0.0;
        if (a == 0.0) {
            travel = v0 * span;
        } else {
            const double bound = a > 0.0 ? lim.v_max : lim.v_min;
            const double t_hit = (bound - v0) / a;
            if (t_hit >= span) {
                travel = v0 * span + 0.5 * a * span * span;
                v0 = v0 + a * span;
            } else {
                const double t_clamped = std::max(0.0, t_hit);
                travel = v0 * t_clamped + 0.5 * a * t_clamped * t_clamped +
                         bound * (span - t_clamped);
                v0 = bound;
            }
        }
        cur.distance -= travel;
        cur.velocity = std::clamp(v0, lim.v_min, lim.v_max);
        remaining -= span;
    }
    return cur;
}

}  // namespace coopdrive
