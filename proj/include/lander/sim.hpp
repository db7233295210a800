#pragma once

#include "lander/ocp.hpp"
#include "lander/platform.hpp"
#include "lander/scenario.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace lander {

/// Additive zero-mean Gaussian noise with one sigma per state group.
State12 add_state_noise(const State12& state, const NoiseSigmas& sigma, std::mt19937_64& rng);

struct SolverDiagnostics {
    SolveStatus status = SolveStatus::MaxIterations;
    bool converged = false;
    bool held = false;  // previous control re-applied after a diverged solve
    int iterations = 0;
    int inner_iterations = 0;
    double cost = 0.0;
    double kkt_residual = 0.0;
    double defect_norm = 0.0;
    double min_cbf_residual = 0.0;

    bool operator==(const SolverDiagnostics&) const = default;
};

struct StepRecord {
    double t = 0.0;
    State12 plant;
    ControlInput u;
    State12 predicted;  // X[1] of the plan, i.e. the model's guess for t + dt
    PlatformState platform;
    LandingPhase phase = LandingPhase::Approach;
    SolverDiagnostics solver;
    std::vector<double> h;  // barrier value per obstacle at the plant position

    bool operator==(const StepRecord& o) const;
};

struct TerminalRecord {
    double touchdown_time = 0.0;
    Eigen::Vector3d drone_position = Eigen::Vector3d::Zero();
    Eigen::Vector3d platform_position = Eigen::Vector3d::Zero();

    bool operator==(const TerminalRecord&) const = default;
};

enum class TrialOutcome { Landed, Timeout, Diverged, Crashed };

std::string_view to_string(TrialOutcome outcome);

struct TrialLog {
    std::uint64_t seed = 0;
    std::vector<StepRecord> steps;
    std::optional<TerminalRecord> terminal;
    TrialOutcome outcome = TrialOutcome::Timeout;
    std::string failure_reason;
    /// Wall time of each control cycle in ms. Not part of the trajectory and
    /// excluded from equality.
    std::vector<double> cycle_ms;

    bool landed() const { return outcome == TrialOutcome::Landed; }
    /// Smallest barrier value over all records and obstacles; +inf without obstacles.
    double min_barrier() const;
    bool all_solves_converged() const;

    bool operator==(const TrialLog& o) const;
};

/// Initial state of a trial: the scenario start perturbed uniformly by the
/// configured spreads, drawn from `rng`.
State12 perturbed_start(const ScenarioConfig& scenario, std::mt19937_64& rng);

/// Reference plan for one solve. The target follows the platform over the
/// horizon at its current velocity and the descent ramp advances with the
/// stage time.
ReferencePlan make_reference_plan(const ScenarioConfig& scenario, const PhaseState& phase,
                                  const PlatformState& platform, const State12& measured, double t,
                                  double initial_yaw);

TrialLog run_closed_loop(const ScenarioConfig& scenario, std::uint64_t seed);

/// Columnar trajectory log. The header line names every column.
void write_trial_csv(const TrialLog& log, std::ostream& out);
std::string trial_csv_header(int n_obstacles);

}  // namespace lander
