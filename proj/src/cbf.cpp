#include "lander/cbf.hpp"

#include <stdexcept>

namespace lander {

ObstacleSpec::ObstacleSpec(Eigen::Vector2d center, double radius, double margin)
    : center_(std::move(center)), radius_(radius), margin_(margin), safe_radius_(radius + margin)
{
    if (!(radius > 0.0)) throw std::invalid_argument("obstacle radius must be positive");
    if (!(margin >= 0.0)) throw std::invalid_argument("obstacle safety margin must be non-negative");
    if (!center_.allFinite()) throw std::invalid_argument("obstacle center must be finite");
}

void CbfConfig::validate() const
{
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("cbf gamma must lie in (0, 1]");
    if (!(prediction_buffer >= 0.0)) throw std::invalid_argument("cbf prediction buffer must be non-negative");
}

CbfConfig CbfConfig::buffered() const
{
    CbfConfig out;
    out.gamma = gamma;
    for (const auto& o : obstacles) out.obstacles.emplace_back(o.center(), o.radius(), o.margin() + prediction_buffer);
    return out;
}

double barrier_value(const Eigen::Vector2d& pos, const ObstacleSpec& obs)
{
    const double r = obs.safe_radius();
    return (pos - obs.center()).squaredNorm() - r * r;
}

Eigen::Vector2d barrier_gradient(const Eigen::Vector2d& pos, const ObstacleSpec& obs)
{
    return 2.0 * (pos - obs.center());
}

double cbf_residual(double h_now, double h_next, double gamma)
{
    return h_next - (1.0 - gamma) * h_now;
}

double cbf_residual(const State12& now, const State12& next, const ObstacleSpec& obs, double gamma)
{
    const double h_now = barrier_value(now.x.segment<2>(kPx), obs);
    const double h_next = barrier_value(next.x.segment<2>(kPx), obs);
    return cbf_residual(h_now, h_next, gamma);
}

}  // namespace lander
