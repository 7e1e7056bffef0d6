#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace coopdrive {

/// Longitudinal vehicle limits. Velocities in m/s, accelerations in m/s^2.
/// v_c is the cruise speed held in the sections outside any control range.
struct KinematicLimits {
    double v_max = 15.0;
    double v_min = 0.0;
    double a_max = 3.0;
    double a_min = -5.0;
    double v_c = 10.0;

    void validate() const;
};

/// State of one vehicle relative to the next conflict-area entry line.
/// distance decreases toward 0 as the vehicle approaches the line.
struct LongitudinalState {
    double distance = 0.0;
    double velocity = 0.0;
};

struct ProfilePhase {
    double duration;
    double accel;
};

/// Piecewise-constant-acceleration speed profile. Phases are applied in
/// order starting from the state the profile was synthesized for; an empty
/// profile leaves the state untouched.
struct SpeedProfile {
    std::vector<ProfilePhase> phases;

    double total_time() const;
};

class ProfileInfeasible : public std::runtime_error {
public:
    explicit ProfileInfeasible(const std::string& what) : std::runtime_error(what) {}
};

/// Time-optimal arrival at distance 0: accelerate at a_max until v_max,
/// then cruise. Lower bound for any feasible profile from this state.
double minimal_arrival_time(const LongitudinalState& s, const KinematicLimits& lim);

/// Latest possible arrival at distance 0. Infinity when the vehicle can
/// come to a stop (or hold v_min = 0) strictly before the line; finite when
/// it is already within braking distance or when v_min > 0.
double latest_arrival_time(const LongitudinalState& s, const KinematicLimits& lim);

/// Builds a profile that crosses the line exactly at t_target (seconds from
/// now). Family: cruise/accelerate when t_target is near the minimum;
/// otherwise decelerate at a_min to a hold speed v_h (found by bisection on
/// the distance residual), cruise at v_h, then accelerate at a_max so the
/// vehicle is back at v_max when it reaches the line. When even v_h = v_min
/// cannot absorb the slack and v_min = 0, the vehicle stops short of the
/// line and departs so as to arrive exactly on time. Terminal velocity is
/// the highest the family admits.
///
/// Throws ProfileInfeasible when t_target is below the minimal arrival time
/// (beyond a 1e-9 s tolerance) or above the latest achievable arrival.
SpeedProfile synthesize_profile(const LongitudinalState& s, double t_target,
                                const KinematicLimits& lim);

/// Advances a state through a profile for dt seconds. Exact closed form per
/// phase; velocity is clamped to [v_min, v_max] inside each phase. Any time
/// left after the last phase does not move the vehicle (callers own the
/// follow-up behavior).
LongitudinalState integrate(const LongitudinalState& s, const SpeedProfile& profile,
                            double dt, const KinematicLimits& lim);

struct CruiseTravel {
    double time = 0.0;
    double v_end = 0.0;
};

/// Travel over `dist` meters outside any control range: steer toward the
/// cruise speed v_c (a_min when above, a_max when below) and hold it.
CruiseTravel cruise_travel(double dist, double v0, const KinematicLimits& lim);

constexpr double kInfiniteTime = std::numeric_limits<double>::infinity();

}  // namespace coopdrive
