#include "lander/platform.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace lander {

namespace {

constexpr double kMaxPlatformSpeed = 2.0;
constexpr double kTicksPerSecond = 1e6;
constexpr double kTimeEps = 1e-9;

double horizontal_error(const State12& drone, const PlatformState& platform)
{
    return (drone.x.segment<2>(kPx) - platform.position.head<2>()).norm();
}

}  // namespace

std::string_view to_string(PlatformKind kind)
{
    switch (kind) {
    case PlatformKind::Static: return "static";
    case PlatformKind::ConstantVelocity: return "constant_velocity";
    case PlatformKind::Sinusoidal: return "sinusoidal";
    }
    return "unknown";
}

PlatformKind platform_kind_from_string(std::string_view name)
{
    if (name == "static") return PlatformKind::Static;
    if (name == "constant_velocity") return PlatformKind::ConstantVelocity;
    if (name == "sinusoidal") return PlatformKind::Sinusoidal;
    throw std::invalid_argument("unknown platform kind '" + std::string(name) + "'");
}

std::string_view to_string(LandingPhase phase)
{
    switch (phase) {
    case LandingPhase::Approach: return "APPROACH";
    case LandingPhase::Track: return "TRACK";
    case LandingPhase::Descend: return "DESCEND";
    case LandingPhase::Touchdown: return "TOUCHDOWN";
    case LandingPhase::Landed: return "LANDED";
    }
    return "UNKNOWN";
}

double PlatformModel::max_speed() const
{
    switch (kind) {
    case PlatformKind::Static: return 0.0;
    case PlatformKind::ConstantVelocity: return velocity.norm();
    case PlatformKind::Sinusoidal: return amplitude.norm() * 2.0 * std::numbers::pi / period;
    }
    return 0.0;
}

void PlatformModel::validate() const
{
    if (!(top_height >= 0.0)) throw std::invalid_argument("platform top height must be non-negative");
    if (!(half_extent > 0.0)) throw std::invalid_argument("platform half extent must be positive");
    if (kind == PlatformKind::Sinusoidal && !(period >= 1.0 / kTicksPerSecond))
        throw std::invalid_argument("sinusoidal platform period must be positive");
    if (!(max_speed() <= kMaxPlatformSpeed))
        throw std::invalid_argument("platform speed exceeds 2 m/s");
}

PlatformState platform_state_at(const PlatformModel& model, double t)
{
    PlatformState s;
    s.position.z() = model.top_height;
    switch (model.kind) {
    case PlatformKind::Static:
        s.position.head<2>() = model.origin;
        break;
    case PlatformKind::ConstantVelocity:
        s.position.head<2>() = model.origin + model.velocity * t;
        s.velocity.head<2>() = model.velocity;
        break;
    case PlatformKind::Sinusoidal: {
        const long long period_ticks = std::llround(model.period * kTicksPerSecond);
        long long ticks = std::llround(t * kTicksPerSecond) % period_ticks;
        if (ticks < 0) ticks += period_ticks;
        const double omega = 2.0 * std::numbers::pi / model.period;
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(ticks)
                             / static_cast<double>(period_ticks);
        s.position.head<2>() = model.origin + model.amplitude * std::sin(angle);
        s.velocity.head<2>() = model.amplitude * (omega * std::cos(angle));
        break;
    }
    }
    return s;
}

double surface_height_below(const Eigen::Vector2d& point, const PlatformState& platform,
                            const PlatformModel& model, double ground_height)
{
    const Eigen::Vector2d d = point - platform.position.head<2>();
    if (std::abs(d.x()) <= model.half_extent && std::abs(d.y()) <= model.half_extent)
        return model.top_height;
    return ground_height;
}

PhaseState update_phase(const PhaseState& current, const State12& drone, const PlatformState& platform,
                        const PhaseThresholds& th, double t)
{
    PhaseState next = current;
    const double err = horizontal_error(drone, platform);

    switch (current.phase) {
    case LandingPhase::Approach:
        if (err < th.track_enter) {
            next.phase = LandingPhase::Track;
            next.dwell_start = err < th.descend_enter ? std::optional<double>(t) : std::nullopt;
        }
        break;
    case LandingPhase::Track:
        if (err < th.descend_enter) {
            if (!next.dwell_start) {
                next.dwell_start = t;
            } else if (t - *next.dwell_start >= th.descend_dwell - kTimeEps) {
                next.phase = LandingPhase::Descend;
                next.dwell_start.reset();
                next.descend_start = t;
            }
        } else {
            next.dwell_start.reset();
        }
        break;
    case LandingPhase::Descend: {
        if (err > th.abort_error) {
            next.phase = LandingPhase::Track;
            next.descend_start.reset();
            next.dwell_start.reset();
            break;
        }
        const double rel_height = drone.x[kPz] - platform.position.z();
        const double rel_vz = drone.x[kVz] - platform.velocity.z();
        if (rel_height < th.touchdown_height && err < th.touchdown_error
            && rel_vz >= th.touchdown_vz_min && rel_vz <= th.touchdown_vz_max) {
            next.phase = LandingPhase::Touchdown;
        }
        break;
    }
    case LandingPhase::Touchdown:
        next.phase = LandingPhase::Landed;
        break;
    case LandingPhase::Landed:
        break;
    }
    return next;
}

Eigen::Vector3d descent_reference(LandingPhase phase, const Eigen::Vector3d& platform_position,
                                  const DescentProfile& profile, double time_in_descend)
{
    Eigen::Vector3d target = platform_position;
    const double top = platform_position.z();
    switch (phase) {
    case LandingPhase::Approach:
    case LandingPhase::Track:
        target.z() = top + profile.approach_altitude;
        break;
    case LandingPhase::Descend: {
        const double start = top + profile.approach_altitude;
        const double floor = top + profile.final_offset;
        target.z() = std::max(floor, start - profile.descent_rate * std::max(time_in_descend, 0.0));
        break;
    }
    case LandingPhase::Touchdown:
    case LandingPhase::Landed:
        target.z() = top;
        break;
    }
    return target;
}

double descent_reference_rate(LandingPhase phase, const DescentProfile& profile, double time_in_descend)
{
    if (phase != LandingPhase::Descend) return 0.0;
    const double drop = profile.approach_altitude - profile.final_offset;
    if (profile.descent_rate * std::max(time_in_descend, 0.0) >= drop) return 0.0;
    return -profile.descent_rate;
}

}  // namespace lander
