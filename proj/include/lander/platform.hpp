#pragma once

#include "lander/dynamics.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string_view>

namespace lander {

enum class PlatformKind { Static, ConstantVelocity, Sinusoidal };

std::string_view to_string(PlatformKind kind);
PlatformKind platform_kind_from_string(std::string_view name);

/// Level landing pad. Horizontal motion only; the surface sits at top_height.
struct PlatformModel {
    PlatformKind kind = PlatformKind::Static;
    Eigen::Vector2d origin = Eigen::Vector2d::Zero();
    Eigen::Vector2d velocity = Eigen::Vector2d::Zero();   // constant_velocity
    Eigen::Vector2d amplitude = Eigen::Vector2d::Zero();  // sinusoidal, per axis
    double period = 1.0;                                   // sinusoidal, s
    double top_height = 0.0;
    double half_extent = 0.5;  // half side length of the square landing surface

    /// Peak horizontal speed of the model.
    double max_speed() const;
    void validate() const;
};

struct PlatformState {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
};

/// Closed-form platform state. Sinusoidal phase is resolved on a 1 us time
/// grid so that state(t) and state(t + period) agree bit for bit.
PlatformState platform_state_at(const PlatformModel& model, double t);

/// World z of the surface directly beneath a horizontal point: the platform
/// top when over the pad, otherwise the ground.
double surface_height_below(const Eigen::Vector2d& point, const PlatformState& platform,
                            const PlatformModel& model, double ground_height);

enum class LandingPhase { Approach, Track, Descend, Touchdown, Landed };

std::string_view to_string(LandingPhase phase);

struct PhaseThresholds {
    double track_enter = 0.25;        // m, APPROACH -> TRACK
    double descend_enter = 0.15;      // m, TRACK -> DESCEND after dwell
    double descend_dwell = 0.5;       // s
    double abort_error = 0.30;        // m, DESCEND -> TRACK
    double touchdown_height = 0.05;   // m above the platform top
    double touchdown_error = 0.15;    // m
    double touchdown_vz_min = -0.5;   // m/s, relative vertical speed window
    double touchdown_vz_max = 0.0;
};

/// Phase variable owned by a single trial, with the timers the transitions need.
struct PhaseState {
    LandingPhase phase = LandingPhase::Approach;
    std::optional<double> dwell_start;    // TRACK: when the error first dropped below descend_enter
    std::optional<double> descend_start;  // DESCEND: when the current descent began
};

/// Advances the landing state machine by at most one transition.
PhaseState update_phase(const PhaseState& current, const State12& drone, const PlatformState& platform,
                        const PhaseThresholds& thresholds, double t);

struct DescentProfile {
    double approach_altitude = 1.0;  // m above the platform top
    double descent_rate = 0.4;       // m/s
    double final_offset = 0.02;      // m above the top at the end of the ramp
};

/// Target point for the tracking cost. `time_in_descend` is the time since
/// the current DESCEND interval began (ignored in other phases).
Eigen::Vector3d descent_reference(LandingPhase phase, const Eigen::Vector3d& platform_position,
                                  const DescentProfile& profile, double time_in_descend);

/// Vertical velocity implied by the descent ramp at the given time.
double descent_reference_rate(LandingPhase phase, const DescentProfile& profile, double time_in_descend);

}  // namespace lander
