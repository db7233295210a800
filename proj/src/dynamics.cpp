#include "lander/dynamics.hpp"

#include <cmath>
#include <numbers>

namespace lander {

namespace {

constexpr double kSingularityMargin = 1e-3;

}  // namespace

void QuadrotorParams::validate() const
{
    if (!(mass > 0.0)) throw std::invalid_argument("quadrotor mass must be positive");
    if (!(inertia.array() > 0.0).all()) throw std::invalid_argument("inertia entries must be positive");
    if (!(rotor_radius > 0.0)) throw std::invalid_argument("rotor radius must be positive");
    if (!(ground_effect_eps > 0.0)) throw std::invalid_argument("ground effect regularizer must be positive");
    if (!(ground_effect_max >= 1.0)) throw std::invalid_argument("ground effect clamp must be >= 1");
    if (!(arm_x >= 0.0 && arm_y >= 0.0 && yaw_torque_coeff >= 0.0))
        throw std::invalid_argument("arm lengths and yaw coefficient must be non-negative");
    if (!(gravity > 0.0)) throw std::invalid_argument("gravity must be positive");
}

Eigen::Matrix<double, 3, 4> torque_matrix(const QuadrotorParams& params)
{
    const double ly = params.arm_y;
    const double lx = params.arm_x;
    const double kt = params.yaw_torque_coeff;
    Eigen::Matrix<double, 3, 4> m;
    m << -ly, ly, ly, -ly,
         -lx, lx, -lx, lx,
          kt, kt, -kt, -kt;
    return m;
}

BodyWrench mix(const ControlInput& u, const QuadrotorParams& params)
{
    BodyWrench w;
    w.total_thrust = u.thrust.sum();
    w.torque = torque_matrix(params) * u.thrust;
    return w;
}

double ground_effect_multiplier(double height, const QuadrotorParams& params)
{
    const double h = std::max(height, 0.0) + params.ground_effect_eps;
    const double a = params.rotor_radius / (4.0 * h);
    const double denom = 1.0 - a * a;
    if (denom <= 1.0 / params.ground_effect_max) return params.ground_effect_max;
    return std::max(1.0, 1.0 / denom);
}

double ground_effect_slope(double height, const QuadrotorParams& params)
{
    if (height < 0.0) return 0.0;
    const double h = height + params.ground_effect_eps;
    const double a = params.rotor_radius / (4.0 * h);
    const double denom = 1.0 - a * a;
    if (denom <= 1.0 / params.ground_effect_max) return 0.0;
    const double k = 1.0 / denom;
    return -2.0 * a * a * k * k / h;
}

void check_state_domain(const State12& x)
{
    if (!x.x.allFinite()) throw SimulationFault("non-finite state");
    constexpr double limit = std::numbers::pi / 2.0 - kSingularityMargin;
    if (std::abs(x.x[kRoll]) >= limit || std::abs(x.x[kPitch]) >= limit)
        throw SimulationFault("attitude outside the nonsingular Euler range");
}

Vec12 derivative(const State12& x, const ControlInput& u, const QuadrotorParams& params,
                 double surface_height)
{
    check_state_domain(x);

    const double phi = x.x[kRoll];
    const double theta = x.x[kPitch];
    const double psi = x.x[kYaw];
    const double cphi = std::cos(phi), sphi = std::sin(phi);
    const double cth = std::cos(theta), sth = std::sin(theta);
    const double cpsi = std::cos(psi), spsi = std::sin(psi);
    const double tth = sth / cth;

    const BodyWrench w = mix(u, params);
    const double f_over_m = w.total_thrust / params.mass;
    const double k_ge = ground_effect_multiplier(x.x[kPz] - surface_height, params);

    Vec12 dx;
    dx.segment<3>(kPx) = x.velocity();
    dx[kVx] = f_over_m * (cpsi * sth * cphi + spsi * sphi);
    dx[kVy] = f_over_m * (spsi * sth * cphi - cpsi * sphi);
    dx[kVz] = f_over_m * k_ge * cth * cphi - params.gravity;

    const double wx = x.x[kWx], wy = x.x[kWy], wz = x.x[kWz];
    dx[kRoll] = wx + sphi * tth * wy + cphi * tth * wz;
    dx[kPitch] = cphi * wy - sphi * wz;
    dx[kYaw] = (sphi * wy + cphi * wz) / cth;

    const Eigen::Vector3d& J = params.inertia;
    dx[kWx] = (w.torque[0] - (J[2] - J[1]) * wy * wz) / J[0];
    dx[kWy] = (w.torque[1] - (J[0] - J[2]) * wz * wx) / J[1];
    dx[kWz] = (w.torque[2] - (J[1] - J[0]) * wx * wy) / J[2];
    return dx;
}

DynamicsJacobian derivative_jacobian(const State12& x, const ControlInput& u,
                                     const QuadrotorParams& params, double surface_height)
{
    check_state_domain(x);

    const double phi = x.x[kRoll];
    const double theta = x.x[kPitch];
    const double psi = x.x[kYaw];
    const double cphi = std::cos(phi), sphi = std::sin(phi);
    const double cth = std::cos(theta), sth = std::sin(theta);
    const double cpsi = std::cos(psi), spsi = std::sin(psi);
    const double tth = sth / cth;

    const double m = params.mass;
    const double F = u.thrust.sum();
    const double height = x.x[kPz] - surface_height;
    const double k_ge = ground_effect_multiplier(height, params);
    const double dk = ground_effect_slope(height, params);

    DynamicsJacobian jac;
    auto& A = jac.A;
    auto& B = jac.B;

    A(kPx, kVx) = 1.0;
    A(kPy, kVy) = 1.0;
    A(kPz, kVz) = 1.0;

    const double zx = cpsi * sth * cphi + spsi * sphi;
    const double zy = spsi * sth * cphi - cpsi * sphi;
    const double zz = cth * cphi;

    A(kVx, kRoll) = F / m * (-cpsi * sth * sphi + spsi * cphi);
    A(kVx, kPitch) = F / m * (cpsi * cth * cphi);
    A(kVx, kYaw) = F / m * (-spsi * sth * cphi + cpsi * sphi);
    A(kVy, kRoll) = F / m * (-spsi * sth * sphi - cpsi * cphi);
    A(kVy, kPitch) = F / m * (spsi * cth * cphi);
    A(kVy, kYaw) = F / m * zx;
    A(kVz, kPz) = F / m * dk * zz;
    A(kVz, kRoll) = -F / m * k_ge * cth * sphi;
    A(kVz, kPitch) = -F / m * k_ge * sth * cphi;

    B.row(kVx).setConstant(zx / m);
    B.row(kVy).setConstant(zy / m);
    B.row(kVz).setConstant(k_ge * zz / m);

    const double wx = x.x[kWx], wy = x.x[kWy], wz = x.x[kWz];
    A(kRoll, kRoll) = cphi * tth * wy - sphi * tth * wz;
    A(kRoll, kPitch) = (sphi * wy + cphi * wz) / (cth * cth);
    A(kRoll, kWx) = 1.0;
    A(kRoll, kWy) = sphi * tth;
    A(kRoll, kWz) = cphi * tth;

    A(kPitch, kRoll) = -sphi * wy - cphi * wz;
    A(kPitch, kWy) = cphi;
    A(kPitch, kWz) = -sphi;

    A(kYaw, kRoll) = (cphi * wy - sphi * wz) / cth;
    A(kYaw, kPitch) = (sphi * wy + cphi * wz) * sth / (cth * cth);
    A(kYaw, kWy) = sphi / cth;
    A(kYaw, kWz) = cphi / cth;

    const Eigen::Vector3d& J = params.inertia;
    A(kWx, kWy) = -(J[2] - J[1]) * wz / J[0];
    A(kWx, kWz) = -(J[2] - J[1]) * wy / J[0];
    A(kWy, kWz) = -(J[0] - J[2]) * wx / J[1];
    A(kWy, kWx) = -(J[0] - J[2]) * wz / J[1];
    A(kWz, kWx) = -(J[1] - J[0]) * wy / J[2];
    A(kWz, kWy) = -(J[1] - J[0]) * wx / J[2];

    const Eigen::Matrix<double, 3, 4> M = torque_matrix(params);
    for (int i = 0; i < 3; ++i) B.row(kWx + i) = M.row(i) / J[i];
    return jac;
}

State12 euler_step(const State12& x, const ControlInput& u, double dt,
                   const QuadrotorParams& params, double surface_height)
{
    if (dt == 0.0) return x;
    return State12(x.x + dt * derivative(x, u, params, surface_height));
}

State12 rk4_step(const State12& x, const ControlInput& u, double dt,
                 const QuadrotorParams& params, double surface_height)
{
    if (dt == 0.0) return x;
    const Vec12 k1 = derivative(x, u, params, surface_height);
    const Vec12 k2 = derivative(State12(x.x + 0.5 * dt * k1), u, params, surface_height);
    const Vec12 k3 = derivative(State12(x.x + 0.5 * dt * k2), u, params, surface_height);
    const Vec12 k4 = derivative(State12(x.x + dt * k3), u, params, surface_height);
    return State12(x.x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

}  // namespace lander
