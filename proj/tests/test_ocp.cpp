#include "lander/ocp.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace lander;

namespace {

State12 point(double x, double y, double z)
{
    State12 s;
    s.x[kPx] = x;
    s.x[kPy] = y;
    s.x[kPz] = z;
    return s;
}

// Every stage references the same state; controls are measured from hover.
ReferencePlan constant_plan(const State12& ref, const NmpcConfig& cfg, const QuadrotorParams& p, bool positional)
{
    ReferencePlan plan;
    plan.states.assign(cfg.horizon + 1, ref);
    plan.targets.assign(cfg.horizon + 1, Eigen::Vector3d(ref.position()));
    plan.terminal = ref;
    plan.positional_cost_active = positional;
    plan.control_reference.assign(cfg.horizon, Eigen::Vector4d::Constant(p.hover_thrust_per_motor()));
    return plan;
}

DecisionVector random_decision(const State12& x0, const NmpcConfig& cfg, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> thrust(cfg.u_min, cfg.u_max);
    DecisionVector d;
    d.X.assign(cfg.horizon + 1, x0);
    d.U.resize(cfg.horizon);
    for (int k = 1; k <= cfg.horizon; ++k) {
        d.X[k].x.segment<3>(kPx) += 0.5 * Eigen::Vector3d(u(rng), u(rng), u(rng));
        d.X[k].x.segment<3>(kVx) = Eigen::Vector3d(u(rng), u(rng), u(rng));
        d.X[k].x.segment<3>(kRoll) = 0.3 * Eigen::Vector3d(u(rng), u(rng), u(rng));
        d.X[k].x.segment<3>(kWx) = Eigen::Vector3d(u(rng), u(rng), u(rng));
    }
    for (auto& c : d.U) c.thrust = Eigen::Vector4d(thrust(rng), thrust(rng), thrust(rng), thrust(rng));
    return d;
}

Multipliers random_multipliers(int N, int n_obs, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Multipliers m;
    m.defect = Eigen::VectorXd::NullaryExpr(12 * N, [&] { return u(rng); });
    m.cbf = Eigen::VectorXd::NullaryExpr(N * n_obs, [&] { return std::abs(u(rng)); });
    return m;
}

CbfConfig one_obstacle(double x, double y)
{
    CbfConfig c;
    c.obstacles.emplace_back(Eigen::Vector2d(x, y), 0.2, 0.3);
    return c;
}

}  // namespace

TEST(StageCost, PerfectTrackingIsFree)
{
    const NmpcConfig cfg;
    const State12 x = point(1.0, 2.0, 3.0);
    EXPECT_EQ(stage_cost(x, ControlInput{}, x, Eigen::Vector3d(1, 2, 3), cfg, true), 0.0);
}

TEST(StageCost, SingleQuadraticTerm)
{
    NmpcConfig cfg;
    cfg.Q.setOnes();
    cfg.R.setOnes();
    cfg.lambda.setZero();
    const State12 ref;
    EXPECT_DOUBLE_EQ(stage_cost(point(1, 0, 0), ControlInput{}, ref, Eigen::Vector3d::Zero(), cfg, true), 1.0);
}

TEST(StageCost, PositionalTermAddsHalfUnit)
{
    NmpcConfig cfg;
    cfg.lambda = Eigen::Vector3d(2, 0, 0);
    const State12 x = point(0.5, 0.0, 0.0);
    const double base = stage_cost(x, ControlInput{}, x, Eigen::Vector3d::Zero(), cfg, false);
    const double with = stage_cost(x, ControlInput{}, x, Eigen::Vector3d::Zero(), cfg, true);
    EXPECT_EQ(base, 0.0);
    EXPECT_DOUBLE_EQ(with - base, 0.5);
}

TEST(StageCost, ControlWeightMeasuredFromReference)
{
    NmpcConfig cfg;
    const State12 x;
    const Eigen::Vector4d u_ref = Eigen::Vector4d::Constant(3.0);
    EXPECT_EQ(stage_cost(x, ControlInput(u_ref), x, Eigen::Vector3d::Zero(), cfg, false, u_ref), 0.0);
    EXPECT_DOUBLE_EQ(stage_cost(x, ControlInput(u_ref), x, Eigen::Vector3d::Zero(), cfg, false), 0.1 * 4 * 9.0);
}

TEST(TerminalCost, Examples)
{
    NmpcConfig cfg;
    const State12 x = point(1, 2, 3);
    EXPECT_EQ(terminal_cost(x, x, cfg), 0.0);
    cfg.Q_terminal = Vec12::Constant(10.0);
    State12 y = x;
    y.x[kVy] += 1.0;
    EXPECT_DOUBLE_EQ(terminal_cost(y, x, cfg), 10.0);
}

TEST(TotalCost, ZeroErrorIsZero)
{
    const NmpcConfig cfg;
    const QuadrotorParams p;
    const State12 x = point(0, 0, 2);
    const ReferencePlan plan = constant_plan(x, cfg, p, true);
    const DecisionVector d = cold_start(x, cfg, p);
    EXPECT_EQ(total_cost(d, plan, cfg), 0.0);
}

TEST(TotalCost, SingleStageIsStagePlusTerminal)
{
    NmpcConfig cfg;
    cfg.horizon = 1;
    const QuadrotorParams p;
    const ReferencePlan plan = constant_plan(point(0, 0, 2), cfg, p, true);
    std::mt19937_64 rng(4);
    const DecisionVector d = random_decision(point(0.3, -0.2, 1.5), cfg, rng);
    const double expected = stage_cost(d.X[0], d.U[0], plan.states[0], plan.targets[0], cfg, true,
                                       plan.control_at(0))
                            + terminal_cost(d.X[1], plan.terminal, cfg);
    EXPECT_DOUBLE_EQ(total_cost(d, plan, cfg), expected);
}

TEST(TotalCost, MatchesNaiveLoop)
{
    const NmpcConfig cfg;
    const QuadrotorParams p;
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const ReferencePlan plan = constant_plan(point(0.1 * trial, 0.0, 1.3), cfg, p, trial % 2 == 0);
        const DecisionVector d = random_decision(point(-1.0, 0.5, 2.0), cfg, rng);
        double oracle = 0.0;
        for (int k = 0; k < cfg.horizon; ++k) {
            for (int i = 0; i < 12; ++i) {
                const double e = d.X[k].x[i] - plan.states[k].x[i];
                oracle += cfg.Q[i] * e * e;
            }
            for (int i = 0; i < 4; ++i) {
                const double e = d.U[k].thrust[i] - plan.control_reference[k][i];
                oracle += cfg.R[i] * e * e;
            }
            if (plan.positional_cost_active)
                for (int i = 0; i < 3; ++i) {
                    const double e = d.X[k].x[i] - plan.targets[k][i];
                    oracle += cfg.lambda[i] * e * e;
                }
        }
        for (int i = 0; i < 12; ++i) {
            const double e = d.X[cfg.horizon].x[i] - plan.terminal.x[i];
            oracle += cfg.Q_terminal[i] * e * e;
        }
        EXPECT_NEAR(total_cost(d, plan, cfg), oracle, 1e-9 * oracle);
    }
}

TEST(ConstraintEval, RolloutHasNoDefects)
{
    const NmpcConfig cfg;
    const QuadrotorParams p;
    std::mt19937_64 rng(6);
    const State12 x0 = point(-2.0, 0.1, 1.5);
    std::uniform_real_distribution<double> near_hover(p.hover_thrust_per_motor() - 0.2, p.hover_thrust_per_motor() + 0.2);
    std::vector<ControlInput> U(cfg.horizon);
    for (auto& u : U) u.thrust = Eigen::Vector4d::NullaryExpr([&] { return near_hover(rng); });
    const DecisionVector d = rollout(x0, U, cfg, p, 0.0);
    const ConstraintBundle b = constraint_eval(d, x0, cfg, one_obstacle(0.0, 3.0), p, 0.0);
    ASSERT_EQ(static_cast<int>(b.defects.size()), cfg.horizon);
    for (const auto& dk : b.defects) EXPECT_EQ(dk, Vec12::Zero());
    EXPECT_EQ(b.initial_residual, Vec12::Zero());
    EXPECT_EQ(b.cbf.size(), static_cast<std::size_t>(cfg.horizon));
}

TEST(ConstraintEval, NodePerturbationTouchesOnlyAdjacentDefects)
{
    const NmpcConfig cfg;
    const QuadrotorParams p;
    std::mt19937_64 rng(7);
    const State12 x0 = point(-2.0, 0.1, 1.5);
    DecisionVector d = random_decision(x0, cfg, rng);
    const ConstraintBundle before = constraint_eval(d, x0, cfg, CbfConfig{}, p, 0.0);

    Vec12 delta = Vec12::Zero();
    delta[kPy] = 0.01;
    delta[kWz] = -0.02;
    d.X[3].x += delta;
    const ConstraintBundle after = constraint_eval(d, x0, cfg, CbfConfig{}, p, 0.0);

    for (int k = 0; k < cfg.horizon; ++k) {
        if (k == 2)
            EXPECT_LT((after.defects[k] - before.defects[k] - delta).cwiseAbs().maxCoeff(), 1e-14);
        else if (k == 3)
            EXPECT_GT((after.defects[k] - before.defects[k]).cwiseAbs().maxCoeff(), 1e-3);
        else
            EXPECT_EQ(after.defects[k], before.defects[k]) << "stage " << k;
    }
}

TEST(ConstraintEval, NoObstaclesNoResiduals)
{
    const NmpcConfig cfg;
    const QuadrotorParams p;
    const State12 x0 = point(0, 0, 1);
    const ConstraintBundle b = constraint_eval(cold_start(x0, cfg, p), x0, cfg, CbfConfig{}, p, 0.0);
    EXPECT_TRUE(b.cbf.empty());
    EXPECT_EQ(b.min_cbf(), std::numeric_limits<double>::infinity());
}

TEST(Solve, HoverInPlace)
{
    const NmpcConfig cfg;
    const QuadrotorParams p;
    const State12 x0 = point(0.0, 0.0, 5.0);
    const OcpSolution sol = solve(x0, constant_plan(x0, cfg, p, false), nullptr, cfg, CbfConfig{}, p);
    EXPECT_TRUE(sol.converged);
    const double hover = p.mass * p.gravity / 4.0;
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(sol.u_apply.thrust[i], hover, 0.01 * hover);
}

TEST(Solve, PassesObstacleOnOneSide)
{
    NmpcConfig cfg;
    const QuadrotorParams p;
    const State12 x0 = point(-2.0, 0.02, 1.3);
    const CbfConfig cbf = one_obstacle(-1.25, 0.0);
    const ReferencePlan plan = constant_plan(point(0.0, 0.0, 1.3), cfg, p, true);

    // Close the loop on the prediction model so the plan sweeps past the obstacle.
    State12 x = x0;
    WarmStart warm;
    const WarmStart* w = nullptr;
    double min_h = std::numeric_limits<double>::infinity();
    double y_extreme = 0.0;
    for (int cycle = 0; cycle < 30; ++cycle) {
        const OcpSolution sol = solve(x, plan, w, cfg, cbf, p);
        ASSERT_TRUE(sol.converged) << "cycle " << cycle;
        for (const auto& node : sol.decision.X) {
            min_h = std::min(min_h, barrier_value(node.x.segment<2>(kPx), cbf.obstacles[0]));
            if (std::abs(node.x[kPy]) > std::abs(y_extreme)) y_extreme = node.x[kPy];
        }
        x = euler_step(x, sol.u_apply, cfg.dt, p, 0.0);
        warm = shift_warm_start(WarmStart{sol.decision, sol.multipliers, sol.penalty}, 1);
        w = &warm;
    }
    EXPECT_GE(min_h, -1e-5);
    EXPECT_GT(std::abs(y_extreme), 0.3);
    EXPECT_GT(x.x[kPx], -1.25) << "drone never got past the obstacle";
}

TEST(Solve, WarmResolveNeedsFewOuterIterations)
{
    const NmpcConfig cfg;
    const QuadrotorParams p;
    const State12 x0 = point(-2.0, 0.02, 1.3);
    const CbfConfig cbf = one_obstacle(-1.25, 0.0);
    const ReferencePlan plan = constant_plan(point(0.0, 0.0, 1.3), cfg, p, true);
    const OcpSolution first = solve(x0, plan, nullptr, cfg, cbf, p);
    ASSERT_TRUE(first.converged);
    const WarmStart warm{first.decision, first.multipliers, first.penalty};
    const OcpSolution again = solve(x0, plan, &warm, cfg, cbf, p);
    EXPECT_TRUE(again.converged);
    EXPECT_LE(again.iterations, 3);
}

TEST(Solve, ConvergedSolutionsMeetTolerancesAndBoxes)
{
    const NmpcConfig cfg;
    const QuadrotorParams p;
    const CbfConfig cbf = one_obstacle(-1.25, 0.0);
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    int converged = 0;
    for (int trial = 0; trial < 10; ++trial) {
        const State12 x0 = point(-2.5 + u(rng), u(rng), 1.3 + u(rng));
        const OcpSolution sol = solve(x0, constant_plan(point(0, 0, 1.3), cfg, p, true), nullptr, cfg, cbf, p);
        if (!sol.converged) continue;
        ++converged;
        EXPECT_LE(sol.defect_norm, 1e-4);
        EXPECT_GE(sol.min_cbf_residual, -1e-5);
        for (const auto& c : sol.decision.U)
            for (int i = 0; i < 4; ++i) {
                EXPECT_GE(c.thrust[i], cfg.u_min);
                EXPECT_LE(c.thrust[i], cfg.u_max);
            }
        for (int k = 2; k <= cfg.horizon; ++k)
            for (int i = 0; i < 12; ++i) {
                EXPECT_GE(sol.decision.X[k].x[i], cfg.x_min[i] - 1e-4);
                EXPECT_LE(sol.decision.X[k].x[i], cfg.x_max[i] + 1e-4);
            }
        EXPECT_EQ(sol.u_apply, sol.decision.U[0]);
    }
    EXPECT_EQ(converged, 10);
}

TEST(Solve, AugmentedObjectiveNonIncreasingWithinEachOuterIteration)
{
    NmpcConfig cfg;
    cfg.solver.record_trace = true;
    const QuadrotorParams p;
    const OcpSolution sol = solve(point(-2.0, 0.02, 1.3), constant_plan(point(0, 0, 1.3), cfg, p, true), nullptr,
                                  cfg, one_obstacle(-1.25, 0.0), p);
    ASSERT_TRUE(sol.converged);
    ASSERT_EQ(static_cast<int>(sol.trace.size()), sol.iterations);
    for (const auto& outer : sol.trace)
        for (std::size_t i = 1; i < outer.size(); ++i) EXPECT_LE(outer[i], outer[i - 1]);
}

TEST(Solve, IsDeterministic)
{
    const NmpcConfig cfg;
    const QuadrotorParams p;
    const State12 x0 = point(-2.0, 0.02, 1.3);
    const ReferencePlan plan = constant_plan(point(0, 0, 1.3), cfg, p, true);
    const CbfConfig cbf = one_obstacle(-1.25, 0.0);
    const OcpSolution a = solve(x0, plan, nullptr, cfg, cbf, p);
    const OcpSolution b = solve(x0, plan, nullptr, cfg, cbf, p);
    EXPECT_EQ(a.decision, b.decision);
    EXPECT_EQ(a.multipliers, b.multipliers);
    EXPECT_EQ(a.u_apply, b.u_apply);
    EXPECT_EQ(a.cost, b.cost);
    EXPECT_EQ(a.iterations, b.iterations);
    EXPECT_EQ(a.inner_iterations, b.inner_iterations);

    const WarmStart warm = shift_warm_start(WarmStart{a.decision, a.multipliers, a.penalty}, 1);
    const OcpSolution c = solve(x0, plan, &warm, cfg, cbf, p);
    const OcpSolution d = solve(x0, plan, &warm, cfg, cbf, p);
    EXPECT_EQ(c.decision, d.decision);
    EXPECT_EQ(c.multipliers, d.multipliers);
}

TEST(Solve, RejectsMismatchedPlan)
{
    const NmpcConfig cfg;
    const QuadrotorParams p;
    ReferencePlan plan = constant_plan(point(0, 0, 1), cfg, p, false);
    plan.states.pop_back();
    EXPECT_THROW(solve(point(0, 0, 1), plan, nullptr, cfg, CbfConfig{}, p), std::invalid_argument);
}

TEST(ShiftWarmStart, ConstantSequenceIsFixedPoint)
{
    const NmpcConfig cfg;
    const QuadrotorParams p;
    const DecisionVector d = cold_start(point(1, 2, 3), cfg, p);
    EXPECT_EQ(shift_warm_start(d), d);
}

TEST(ShiftWarmStart, PreservesLengths)
{
    NmpcConfig cfg;
    cfg.horizon = 7;
    std::mt19937_64 rng(13);
    const DecisionVector s = shift_warm_start(random_decision(point(0, 0, 1), cfg, rng));
    EXPECT_EQ(s.X.size(), 8u);
    EXPECT_EQ(s.U.size(), 7u);
}

TEST(ShiftWarmStart, TwoShiftsOfRampEqualShiftByTwo)
{
    const int N = 10;
    DecisionVector d;
    for (int k = 0; k <= N; ++k) d.X.push_back(State12(Vec12::Constant(0.5 * k)));
    for (int k = 0; k < N; ++k) d.U.push_back(ControlInput(Eigen::Vector4d::Constant(1.0 + k)));

    DecisionVector by_two = d;
    for (int k = 0; k <= N; ++k) by_two.X[k] = d.X[std::min(k + 2, N)];
    for (int k = 0; k < N; ++k) by_two.U[k] = d.U[std::min(k + 2, N - 1)];

    EXPECT_EQ(shift_warm_start(shift_warm_start(d)), by_two);
}

TEST(ShiftWarmStart, MultipliersFollowTheirStages)
{
    const int N = 4, n_obs = 2;
    WarmStart w;
    w.decision.X.assign(N + 1, State12{});
    w.decision.U.assign(N, ControlInput{});
    w.multipliers.defect = Eigen::VectorXd::LinSpaced(12 * N, 0, 12 * N - 1);
    w.multipliers.cbf = Eigen::VectorXd::LinSpaced(N * n_obs, 0, N * n_obs - 1);
    w.penalty = 50.0;
    const WarmStart s = shift_warm_start(w, n_obs);
    EXPECT_EQ(s.multipliers.defect.head(12 * (N - 1)), w.multipliers.defect.tail(12 * (N - 1)));
    EXPECT_EQ(s.multipliers.cbf.head(n_obs * (N - 1)), w.multipliers.cbf.tail(n_obs * (N - 1)));
    EXPECT_EQ(s.penalty, 50.0);
}

TEST(GradientCheck, QuadraticOnlyProblemAgreesToRoundoff)
{
    const NmpcConfig cfg;
    const QuadrotorParams p;
    const State12 x0 = point(-1.0, 0.5, 1.0);
    AugmentedObjective obj(x0, constant_plan(point(0, 0, 1.3), cfg, p, true), cfg, CbfConfig{}, p);
    Multipliers zero{Eigen::VectorXd::Zero(12 * cfg.horizon), Eigen::VectorXd::Zero(0)};
    obj.set_multipliers(zero, 0.0);
    std::mt19937_64 rng(14);
    const Eigen::VectorXd z = obj.pack(random_decision(x0, cfg, rng));
    EXPECT_DOUBLE_EQ(obj.value(z), obj.cost(z));
    const GradientCheckReport r = gradient_check(obj, z, 1e-6, 1e-8);
    EXPECT_TRUE(r.passed) << r.max_relative_error;
    EXPECT_LT(r.max_relative_error, 1e-8);
}

TEST(GradientCheck, FullProblemAtRandomPoints)
{
    const NmpcConfig cfg;
    const QuadrotorParams p;
    const State12 x0 = point(-2.0, 0.1, 1.3);
    CbfConfig cbf = one_obstacle(-1.25, 0.0);
    cbf.obstacles.emplace_back(Eigen::Vector2d(-1.8, 0.6), 0.1, 0.2);
    ReferencePlan plan = constant_plan(point(0, 0, 1.3), cfg, p, true);
    plan.surface_height = 1.25;  // puts some nodes inside ground effect
    AugmentedObjective obj(x0, plan, cfg, cbf, p);
    std::mt19937_64 rng(15);
    for (int trial = 0; trial < 10; ++trial) {
        obj.set_multipliers(random_multipliers(cfg.horizon, 2, rng), 10.0 + 9.0 * trial);
        const GradientCheckReport r = gradient_check(obj, obj.pack(random_decision(x0, cfg, rng)), 1e-6, 1e-5);
        EXPECT_TRUE(r.passed) << "trial " << trial << " error " << r.max_relative_error;
    }
}

TEST(GradientCheck, DetectsCorruptedEntry)
{
    const NmpcConfig cfg;
    const QuadrotorParams p;
    const State12 x0 = point(-2.0, 0.1, 1.3);
    AugmentedObjective obj(x0, constant_plan(point(0, 0, 1.3), cfg, p, true), cfg, one_obstacle(-1.25, 0.0), p);
    std::mt19937_64 rng(16);
    obj.set_multipliers(random_multipliers(cfg.horizon, 1, rng), 20.0);
    const Eigen::VectorXd z = obj.pack(random_decision(x0, cfg, rng));

    Eigen::Index worst;
    obj.gradient(z).cwiseAbs().maxCoeff(&worst);
    const GradientFn corrupted = [&](const Eigen::VectorXd& at) {
        Eigen::VectorXd g = obj.gradient(at);
        g[worst] *= 1.1;
        return g;
    };
    EXPECT_TRUE(gradient_check(obj, z, 1e-6, 1e-5).passed);
    const GradientCheckReport r = gradient_check(obj, z, 1e-6, 1e-5, corrupted);
    EXPECT_FALSE(r.passed);
    EXPECT_EQ(r.worst_index, worst);
}

TEST(NmpcConfig, RejectsDegenerateHorizons)
{
    NmpcConfig cfg;
    cfg.horizon = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = NmpcConfig{};
    cfg.dt = 0.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = NmpcConfig{};
    cfg.R[2] = -1.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
