#include "lander/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>

namespace lander {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> barrier_values(const State12& x, const CbfConfig& cbf)
{
    std::vector<double> h;
    h.reserve(cbf.obstacles.size());
    for (const auto& obs : cbf.obstacles) h.push_back(barrier_value(x.x.segment<2>(kPx), obs));
    return h;
}

State12 advance_plant(const State12& x, const ControlInput& u, const ScenarioConfig& sc, double surface)
{
    const double h = sc.nmpc.dt / sc.substeps;
    State12 s = x;
    for (int i = 0; i < sc.substeps; ++i) {
        s = sc.integrator == PlantIntegrator::Rk4 ? rk4_step(s, u, h, sc.params, surface)
                                                  : euler_step(s, u, h, sc.params, surface);
    }
    check_state_domain(s);
    return s;
}

// Drone at rest on the pad: level, riding along with the platform.
State12 resting_on(const State12& x, const PlatformState& from, const PlatformState& to)
{
    State12 s = x;
    s.x.segment<2>(kPx) += to.position.head<2>() - from.position.head<2>();
    s.x[kPz] = to.position.z();
    s.velocity() = to.velocity;
    s.x[kRoll] = 0.0;
    s.x[kPitch] = 0.0;
    s.body_rates().setZero();
    return s;
}

SolverDiagnostics diagnostics_of(const OcpSolution& sol)
{
    SolverDiagnostics d;
    d.status = sol.status;
    d.converged = sol.converged;
    d.iterations = sol.iterations;
    d.inner_iterations = sol.inner_iterations;
    d.cost = sol.cost;
    d.kkt_residual = sol.kkt_residual;
    d.defect_norm = sol.defect_norm;
    d.min_cbf_residual = sol.min_cbf_residual;
    return d;
}

}  // namespace

State12 add_state_noise(const State12& state, const NoiseSigmas& sigma, std::mt19937_64& rng)
{
    if (sigma.is_zero()) return state;
    State12 out = state;
    const double groups[4] = {sigma.position, sigma.velocity, sigma.attitude, sigma.rates};
    for (int g = 0; g < 4; ++g) {
        if (groups[g] == 0.0) continue;
        std::normal_distribution<double> n(0.0, groups[g]);
        for (int i = 0; i < 3; ++i) out.x[3 * g + i] += n(rng);
    }
    return out;
}

bool StepRecord::operator==(const StepRecord& o) const
{
    return t == o.t && plant == o.plant && u == o.u && predicted == o.predicted
           && platform.position == o.platform.position && platform.velocity == o.platform.velocity
           && phase == o.phase && solver == o.solver && h == o.h;
}

std::string_view to_string(TrialOutcome outcome)
{
    switch (outcome) {
    case TrialOutcome::Landed: return "landed";
    case TrialOutcome::Timeout: return "timeout";
    case TrialOutcome::Diverged: return "diverged";
    case TrialOutcome::Crashed: return "crashed";
    }
    return "unknown";
}

double TrialLog::min_barrier() const
{
    double m = kInf;
    for (const auto& r : steps)
        for (double h : r.h) m = std::min(m, h);
    return m;
}

bool TrialLog::all_solves_converged() const
{
    return std::all_of(steps.begin(), steps.end(), [](const StepRecord& r) {
        return r.phase == LandingPhase::Touchdown || r.phase == LandingPhase::Landed || r.solver.converged;
    });
}

bool TrialLog::operator==(const TrialLog& o) const
{
    return seed == o.seed && steps == o.steps && terminal == o.terminal && outcome == o.outcome
           && failure_reason == o.failure_reason;
}

State12 perturbed_start(const ScenarioConfig& sc, std::mt19937_64& rng)
{
    State12 x = sc.initial_state;
    std::uniform_real_distribution<double> dp(-sc.init_position_spread, sc.init_position_spread);
    std::uniform_real_distribution<double> da(-sc.init_attitude_spread, sc.init_attitude_spread);
    for (int i = kPx; i <= kPz; ++i) x.x[i] += dp(rng);
    for (int i = kRoll; i <= kYaw; ++i) x.x[i] += da(rng);
    return x;
}

ReferencePlan make_reference_plan(const ScenarioConfig& sc, const PhaseState& phase, const PlatformState& platform,
                                  const State12& measured, double t, double initial_yaw)
{
    const int N = sc.nmpc.horizon;
    const double dt = sc.nmpc.dt;
    const double in_descend = phase.descend_start ? t - *phase.descend_start : 0.0;

    ReferencePlan plan;
    plan.states.resize(N + 1);
    plan.targets.resize(N + 1);
    for (int k = 0; k <= N; ++k) {
        const double tau = k * dt;
        const Eigen::Vector3d pad = platform.position + platform.velocity * tau;
        const Eigen::Vector3d target = descent_reference(phase.phase, pad, sc.descent, in_descend + tau);
        State12 r;
        r.position() = target;
        r.x[kVx] = platform.velocity.x();
        r.x[kVy] = platform.velocity.y();
        r.x[kVz] = descent_reference_rate(phase.phase, sc.descent, in_descend + tau);
        r.x[kYaw] = initial_yaw;
        plan.states[k] = r;
        plan.targets[k] = target;
    }
    plan.terminal = plan.states[N];
    plan.positional_cost_active = phase.phase == LandingPhase::Track || phase.phase == LandingPhase::Descend;
    plan.surface_height = surface_height_below(measured.x.segment<2>(kPx), platform, sc.platform,
                                               sc.params.ground_height);
    // Hover trim at each stage's reference height, ground effect included.
    // The height is floored well above the clamp zone: trims taken inside it
    // make the final descent solves stall at the iteration limit.
    constexpr double kTrimFloor = 0.1;
    plan.control_reference.resize(N);
    for (int k = 0; k < N; ++k) {
        const double height = std::max(kTrimFloor, plan.states[k].x[kPz] - plan.surface_height);
        const double k_ge = ground_effect_multiplier(height, sc.params);
        plan.control_reference[k].setConstant(
            std::clamp(sc.params.hover_thrust_per_motor() / k_ge, sc.nmpc.u_min, sc.nmpc.u_max));
    }
    return plan;
}

TrialLog run_closed_loop(const ScenarioConfig& sc, std::uint64_t seed)
{
    using Clock = std::chrono::steady_clock;
    sc.validate();

    TrialLog log;
    log.seed = seed;
    std::mt19937_64 rng(seed);

    const double dt = sc.nmpc.dt;
    const int n_obs = static_cast<int>(sc.cbf.obstacles.size());
    State12 x = perturbed_start(sc, rng);
    const double yaw0 = x.x[kYaw];
    PhaseState phase;
    std::optional<WarmStart> warm;
    ControlInput u_prev(Eigen::Vector4d::Constant(
        std::clamp(sc.params.hover_thrust_per_motor(), sc.nmpc.u_min, sc.nmpc.u_max)));
    int holds = 0;
    const long max_steps = static_cast<long>(std::floor(sc.timeout / dt + 1e-9));

    auto fail = [&](TrialOutcome outcome, std::string reason) {
        log.outcome = outcome;
        log.failure_reason = std::move(reason);
    };

    for (long k = 0;; ++k) {
        const double t = static_cast<double>(k) * dt;
        const double t_next = static_cast<double>(k + 1) * dt;
        const auto wall_start = Clock::now();
        const PlatformState plat = platform_state_at(sc.platform, t);

        StepRecord rec;
        rec.t = t;
        rec.plant = x;
        rec.platform = plat;
        rec.phase = phase.phase;
        rec.h = barrier_values(x, sc.cbf);

        if (phase.phase == LandingPhase::Landed) {
            rec.predicted = x;
            log.steps.push_back(std::move(rec));
            log.cycle_ms.push_back(0.0);
            log.outcome = TrialOutcome::Landed;
            break;
        }
        if (k >= max_steps) {
            rec.predicted = x;
            log.steps.push_back(std::move(rec));
            log.cycle_ms.push_back(0.0);
            fail(TrialOutcome::Timeout, "timeout");
            break;
        }

        const PlatformState plat_next = platform_state_at(sc.platform, t_next);

        if (phase.phase == LandingPhase::Touchdown) {
            // Motors off; the drone settles on the pad.
            const State12 rest = resting_on(x, plat, plat_next);
            rec.predicted = rest;
            log.steps.push_back(std::move(rec));
            log.cycle_ms.push_back(0.0);
            x = rest;
            phase = update_phase(phase, x, plat_next, sc.phases, t_next);
            continue;
        }

        const State12 measured = add_state_noise(x, sc.noise, rng);
        const ReferencePlan plan = make_reference_plan(sc, phase, plat, measured, t, yaw0);
        const OcpSolution sol = solve(measured, plan, warm ? &*warm : nullptr, sc.nmpc, sc.cbf, sc.params);

        ControlInput u;
        rec.solver = diagnostics_of(sol);
        if (sol.status == SolveStatus::Diverged) {
            ++holds;
            u = u_prev;
            warm.reset();
            rec.solver.held = true;
            rec.predicted = euler_step(measured, u, dt, sc.params, plan.surface_height);
        } else {
            holds = 0;
            u = sol.u_apply;
            rec.predicted = sol.decision.X[1];
            warm = shift_warm_start(WarmStart{sol.decision, sol.multipliers, sol.penalty}, n_obs);
        }
        rec.u = u;
        u_prev = u;

        const double surface = surface_height_below(x.x.segment<2>(kPx), plat, sc.platform, sc.params.ground_height);
        State12 x_next;
        bool faulted = false;
        try {
            x_next = advance_plant(x, u, sc, surface);
        } catch (const SimulationFault& e) {
            faulted = true;
            fail(TrialOutcome::Crashed, e.what());
        }
        log.cycle_ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - wall_start).count());
        log.steps.push_back(std::move(rec));
        if (faulted) break;
        if (holds >= 3) {
            fail(TrialOutcome::Diverged, "solver diverged on 3 consecutive cycles");
            break;
        }

        phase = update_phase(phase, x_next, plat_next, sc.phases, t_next);
        if (phase.phase == LandingPhase::Touchdown) {
            log.terminal = TerminalRecord{t_next, x_next.position(), plat_next.position};
        } else {
            const double below = surface_height_below(x_next.x.segment<2>(kPx), plat_next, sc.platform,
                                                      sc.params.ground_height);
            if (x_next.x[kPz] < below) {
                x = x_next;
                fail(TrialOutcome::Crashed, "surface contact outside the touchdown window");
                StepRecord last;
                last.t = t_next;
                last.plant = x;
                last.predicted = x;
                last.platform = plat_next;
                last.phase = phase.phase;
                last.h = barrier_values(x, sc.cbf);
                log.steps.push_back(std::move(last));
                log.cycle_ms.push_back(0.0);
                break;
            }
        }
        x = x_next;
    }
    return log;
}

std::string trial_csv_header(int n_obstacles)
{
    static const char* const kState[] = {"px", "py", "pz", "vx", "vy", "vz", "roll", "pitch", "yaw", "wx", "wy", "wz"};
    std::string h = "t,phase";
    for (const char* s : kState) h += std::string(",") + s;
    h += ",u1,u2,u3,u4";
    for (const char* s : kState) h += std::string(",pred_") + s;
    h += ",plat_x,plat_y,plat_z,plat_vx,plat_vy,plat_vz";
    h += ",solver_status,converged,held,outer_iters,inner_iters,cost,kkt_residual,defect_norm,min_cbf_residual";
    for (int j = 0; j < n_obstacles; ++j) h += ",h_" + std::to_string(j);
    return h;
}

void write_trial_csv(const TrialLog& log, std::ostream& out)
{
    const int n_obs = log.steps.empty() ? 0 : static_cast<int>(log.steps.front().h.size());
    out << trial_csv_header(n_obs) << '\n';
    char buf[32];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << ',' << buf;
    };
    for (const auto& r : log.steps) {
        std::snprintf(buf, sizeof buf, "%.17g", r.t);
        out << buf << ',' << to_string(r.phase);
        for (int i = 0; i < 12; ++i) num(r.plant.x[i]);
        for (int i = 0; i < 4; ++i) num(r.u.thrust[i]);
        for (int i = 0; i < 12; ++i) num(r.predicted.x[i]);
        for (int i = 0; i < 3; ++i) num(r.platform.position[i]);
        for (int i = 0; i < 3; ++i) num(r.platform.velocity[i]);
        const char* status = r.solver.iterations == 0 && !r.solver.held         ? "none"
                             : r.solver.status == SolveStatus::Converged        ? "converged"
                             : r.solver.status == SolveStatus::Diverged         ? "diverged"
                                                                                : "max_iterations";
        out << ',' << status << ',' << (r.solver.converged ? 1 : 0) << ',' << (r.solver.held ? 1 : 0) << ','
            << r.solver.iterations << ',' << r.solver.inner_iterations;
        num(r.solver.cost);
        num(r.solver.kkt_residual);
        num(r.solver.defect_norm);
        num(r.solver.min_cbf_residual);
        for (double h : r.h) num(h);
        out << '\n';
    }
}

}  // namespace lander
