#pragma once

#include "lander/dynamics.hpp"

#include <Eigen/Dense>

#include <vector>

namespace lander {

/// Static obstacle modelled as an infinite vertical cylinder. The barrier
/// keeps the drone outside the circle of radius r_safe = radius + margin.
class ObstacleSpec {
public:
    ObstacleSpec(Eigen::Vector2d center, double radius, double margin);

    const Eigen::Vector2d& center() const { return center_; }
    double radius() const { return radius_; }
    double margin() const { return margin_; }
    double safe_radius() const { return safe_radius_; }

    bool operator==(const ObstacleSpec&) const = default;

private:
    Eigen::Vector2d center_;
    double radius_;
    double margin_;
    double safe_radius_;
};

struct CbfConfig {
    double gamma = 0.4;
    std::vector<ObstacleSpec> obstacles;
    /// Extra clearance (m) the predictive controller adds to every safety
    /// radius. Barrier values reported for the plant always use r_safe.
    double prediction_buffer = 0.0;

    void validate() const;
    /// Obstacles as the controller sees them, with the buffer folded into the margin.
    CbfConfig buffered() const;
};

/// h(x, y) = |p - c|^2 - r_safe^2. Non-negative outside the safety circle.
double barrier_value(const Eigen::Vector2d& pos, const ObstacleSpec& obs);

Eigen::Vector2d barrier_gradient(const Eigen::Vector2d& pos, const ObstacleSpec& obs);

/// Discrete CBF residual h(x_{k+1}) - (1 - gamma) h(x_k); satisfied when >= 0.
double cbf_residual(double h_now, double h_next, double gamma);

double cbf_residual(const State12& now, const State12& next, const ObstacleSpec& obs, double gamma);

}  // namespace lander
