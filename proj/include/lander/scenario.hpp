#pragma once

#include "lander/cbf.hpp"
#include "lander/dynamics.hpp"
#include "lander/ocp.hpp"
#include "lander/platform.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>

namespace lander {

/// Per-group standard deviations of the additive feedback noise.
struct NoiseSigmas {
    double position = 0.0;  // m
    double velocity = 0.0;  // m/s
    double attitude = 0.0;  // rad
    double rates = 0.0;     // rad/s

    bool is_zero() const { return position == 0.0 && velocity == 0.0 && attitude == 0.0 && rates == 0.0; }
    void validate() const;
    bool operator==(const NoiseSigmas&) const = default;
};

enum class PlantIntegrator { Rk4, Euler };

/// Optional pass/fail bounds checked by `lander run --assert`.
struct AcceptanceBounds {
    std::optional<double> max_mean_fpe_cm;
    std::optional<double> min_barrier;  // lower bound on h over every logged step
    bool require_all_success = true;
};

struct ScenarioConfig {
    std::string name = "unnamed";
    QuadrotorParams params;
    NmpcConfig nmpc;
    CbfConfig cbf;
    PlatformModel platform;
    State12 initial_state;
    int trials = 10;
    std::uint64_t seed = 1;
    NoiseSigmas noise;
    double timeout = 60.0;  // s of simulated time

    PhaseThresholds phases;
    DescentProfile descent;
    PlantIntegrator integrator = PlantIntegrator::Rk4;
    int substeps = 10;
    double init_position_spread = 0.3;   // half-width of the uniform start perturbation, m
    double init_attitude_spread = 0.05;  // rad
    AcceptanceBounds acceptance;

    /// Throws std::invalid_argument on the first broken precondition.
    void validate() const;
};

}  // namespace lander
