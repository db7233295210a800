#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace lander {

using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat12 = Eigen::Matrix<double, 12, 12>;
using Mat12x4 = Eigen::Matrix<double, 12, 4>;

/// Raised when the plant or the prediction model leaves its valid domain
/// (Euler-rate singularity, non-finite state).
class SimulationFault : public std::runtime_error {
public:
    explicit SimulationFault(const std::string& what) : std::runtime_error(what) {}
};

/// Index layout of the 12-dimensional state vector.
enum StateIndex : int {
    kPx = 0, kPy, kPz,
    kVx, kVy, kVz,
    kRoll, kPitch, kYaw,
    kWx, kWy, kWz,
};

/// Full drone state: world position and velocity, ZYX Euler angles
/// (roll, pitch, yaw) and body angular rates.
struct State12 {
    Vec12 x = Vec12::Zero();

    State12() = default;
    explicit State12(const Vec12& v) : x(v) {}

    auto position() { return x.segment<3>(kPx); }
    auto velocity() { return x.segment<3>(kVx); }
    auto euler() { return x.segment<3>(kRoll); }
    auto body_rates() { return x.segment<3>(kWx); }
    auto position() const { return x.segment<3>(kPx); }
    auto velocity() const { return x.segment<3>(kVx); }
    auto euler() const { return x.segment<3>(kRoll); }
    auto body_rates() const { return x.segment<3>(kWx); }

    bool operator==(const State12& o) const { return x == o.x; }
};

/// Per-motor thrusts in newtons.
struct ControlInput {
    Eigen::Vector4d thrust = Eigen::Vector4d::Zero();

    ControlInput() = default;
    explicit ControlInput(const Eigen::Vector4d& u) : thrust(u) {}

    bool operator==(const ControlInput& o) const { return thrust == o.thrust; }
};

struct QuadrotorParams {
    double mass = 1.5;
    double arm_x = 0.12;
    double arm_y = 0.12;
    double yaw_torque_coeff = 0.016;
    Eigen::Vector3d inertia{0.02, 0.02, 0.035};
    double rotor_radius = 0.12;
    double ground_effect_eps = 0.01;
    double ground_effect_max = 1.5;
    double gravity = 9.81;
    double ground_height = 0.0;

    /// Throws std::invalid_argument on a physically meaningless parameter set.
    void validate() const;

    double hover_thrust_per_motor() const { return mass * gravity / 4.0; }
};

struct BodyWrench {
    double total_thrust = 0.0;
    Eigen::Vector3d torque = Eigen::Vector3d::Zero();
};

/// Motor mixing: per-motor thrusts to collective thrust and body torques.
BodyWrench mix(const ControlInput& u, const QuadrotorParams& params);

/// 3x4 torque allocation matrix used by mix().
Eigen::Matrix<double, 3, 4> torque_matrix(const QuadrotorParams& params);

/// In-ground-effect thrust multiplier k >= 1 for a rotor plane `height`
/// metres above the surface below it. Clamped to [1, ground_effect_max];
/// negative heights are treated as contact.
double ground_effect_multiplier(double height, const QuadrotorParams& params);

/// d k / d height; zero wherever the clamp is engaged.
double ground_effect_slope(double height, const QuadrotorParams& params);

/// Continuous-time state derivative. `surface_height` is the world z of the
/// surface directly beneath the drone.
Vec12 derivative(const State12& x, const ControlInput& u, const QuadrotorParams& params,
                 double surface_height);

struct DynamicsJacobian {
    Mat12 A = Mat12::Zero();    // d f / d x
    Mat12x4 B = Mat12x4::Zero(); // d f / d u
};

/// Analytic Jacobians of derivative() with respect to state and input.
DynamicsJacobian derivative_jacobian(const State12& x, const ControlInput& u,
                                     const QuadrotorParams& params, double surface_height);

/// Explicit Euler step; this is the discretization used by the NMPC prediction model.
State12 euler_step(const State12& x, const ControlInput& u, double dt,
                   const QuadrotorParams& params, double surface_height);

/// Classical RK4 step with the input held constant over the step.
State12 rk4_step(const State12& x, const ControlInput& u, double dt,
                 const QuadrotorParams& params, double surface_height);

/// Throws SimulationFault if the state is non-finite or too close to the
/// pitch singularity of the Euler-rate map.
void check_state_domain(const State12& x);

}  // namespace lander
