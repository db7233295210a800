#pragma once

#include "lander/cbf.hpp"
#include "lander/dynamics.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <vector>

namespace lander {

/// Budgets and tolerances of the augmented-Lagrangian solver.
struct SolverOptions {
    int max_outer = 20;
    int max_inner = 100;
    double penalty_init = 10.0;
    double penalty_growth = 5.0;
    double penalty_max = 1e9;
    /// Ceiling on the penalty carried over by a warm start. A penalty left
    /// high by a hard previous cycle makes the Newton systems ill-conditioned.
    double penalty_warm_max = 1e4;
    /// Outer loop target on max |defect| and max(0, -cbf residual).
    double feasibility_tol = 1e-7;
    /// Inner loop target on the projected-gradient infinity norm.
    double stationarity_tol = 1e-5;
    /// Record the augmented objective after every accepted step.
    bool record_trace = false;
};

struct NmpcConfig {
    int horizon = 10;
    double dt = 0.1;
    Vec12 Q;
    Eigen::Vector4d R;
    Vec12 Q_terminal;
    Eigen::Vector3d lambda;  // positional weights, applied in TRACK/DESCEND only
    double u_min = 0.0;
    double u_max = 7.5;
    Vec12 x_min;
    Vec12 x_max;
    SolverOptions solver;

    NmpcConfig();
    void validate() const;
};

struct ReferencePlan {
    std::vector<State12> states;            // x_r[0..N]
    std::vector<Eigen::Vector3d> targets;   // platform target per stage, [0..N]
    State12 terminal;                        // x_rf
    bool positional_cost_active = false;
    /// Surface height used by the ground-effect term of the prediction model.
    double surface_height = 0.0;
    /// Per-stage thrust the control weight R is measured from (usually the
    /// hover trim at the stage's reference height). Empty means zero.
    std::vector<Eigen::Vector4d> control_reference;

    void validate(int horizon) const;
    Eigen::Vector4d control_at(int k) const
    {
        return control_reference.empty() ? Eigen::Vector4d::Zero() : control_reference[k];
    }
};

struct DecisionVector {
    std::vector<State12> X;       // [0..N], X[0] pinned to the measured state
    std::vector<ControlInput> U;  // [0..N-1]

    int horizon() const { return static_cast<int>(U.size()); }
    bool operator==(const DecisionVector&) const = default;
};

struct Multipliers {
    Eigen::VectorXd defect;  // 12 N, stage-major
    Eigen::VectorXd cbf;     // N * n_obstacles, stage-major

    bool operator==(const Multipliers& o) const
    {
        return defect.size() == o.defect.size() && cbf.size() == o.cbf.size()
               && defect == o.defect && cbf == o.cbf;
    }
};

struct WarmStart {
    DecisionVector decision;
    Multipliers multipliers;
    double penalty = 0.0;  // final penalty of the previous solve
};

enum class SolveStatus { Converged, MaxIterations, Diverged };

struct OcpSolution {
    DecisionVector decision;
    ControlInput u_apply;
    Multipliers multipliers;
    double penalty = 0.0;
    double cost = 0.0;
    double kkt_residual = 0.0;
    double defect_norm = 0.0;
    /// Most-violated barrier residual over the stages the controls can
    /// influence (k >= 1); +inf without obstacles.
    double min_cbf_residual = 0.0;
    /// Stage-0 residual. X[1]'s position is fixed by the measured state under
    /// the Euler model, so this value is data, not a solver outcome.
    double initial_cbf_residual = 0.0;
    int iterations = 0;              // outer iterations
    int inner_iterations = 0;        // accumulated inner iterations
    bool converged = false;
    SolveStatus status = SolveStatus::MaxIterations;
    /// Augmented objective after each accepted step, one list per outer
    /// iteration. Filled only when SolverOptions::record_trace is set.
    std::vector<std::vector<double>> trace;
};

double stage_cost(const State12& x, const ControlInput& u, const State12& x_ref,
                  const Eigen::Vector3d& target, const NmpcConfig& cfg, bool positional_active,
                  const Eigen::Vector4d& u_ref = Eigen::Vector4d::Zero());

double terminal_cost(const State12& x_N, const State12& x_rf, const NmpcConfig& cfg);

double total_cost(const DecisionVector& decision, const ReferencePlan& plan, const NmpcConfig& cfg);

struct ConstraintBundle {
    std::vector<Vec12> defects;        // d_k = X[k+1] - euler_step(X[k], U[k])
    std::vector<double> cbf;           // c_{k,j} at index k * n_obs + j
    Vec12 initial_residual;            // X[0] - x_init
    double bound_violation = 0.0;      // worst excursion outside the input boxes and the state boxes of X[2..N]

    double defect_norm() const;
    double min_cbf() const;
};

ConstraintBundle constraint_eval(const DecisionVector& decision, const State12& x_init,
                                 const NmpcConfig& cfg, const CbfConfig& cbf, const QuadrotorParams& params,
                                 double surface_height);

/// X[k] <- X[k+1], U[k] <- U[k+1]; the last state and control are held.
DecisionVector shift_warm_start(const DecisionVector& prev);

/// Shifts primal and dual variables together.
WarmStart shift_warm_start(const WarmStart& prev, int n_obstacles);

/// Cold start: every node at x_init, every control at hover thrust.
DecisionVector cold_start(const State12& x_init, const NmpcConfig& cfg, const QuadrotorParams& params);

/// Forward Euler rollout of the controls from x_init.
DecisionVector rollout(const State12& x_init, const std::vector<ControlInput>& U, const NmpcConfig& cfg,
                       const QuadrotorParams& params, double surface_height);

/// The augmented Lagrangian of the multiple-shooting program as a function
/// of the packed decision vector z = [U_0, X_1, U_1, X_2, ..., U_{N-1}, X_N].
class AugmentedObjective {
public:
    AugmentedObjective(const State12& x_init, const ReferencePlan& plan, const NmpcConfig& cfg,
                       const CbfConfig& cbf, const QuadrotorParams& params);

    int size() const { return 16 * horizon_; }
    int horizon() const { return horizon_; }
    int n_obstacles() const { return static_cast<int>(cbf_.obstacles.size()); }

    Eigen::VectorXd pack(const DecisionVector& d) const;
    DecisionVector unpack(const Eigen::VectorXd& z) const;

    void set_multipliers(const Multipliers& m, double penalty);
    const Multipliers& multipliers() const { return multipliers_; }
    double penalty() const { return penalty_; }

    const Eigen::VectorXd& lower() const { return lower_; }
    const Eigen::VectorXd& upper() const { return upper_; }
    Eigen::VectorXd project(const Eigen::VectorXd& z) const;

    double value(const Eigen::VectorXd& z) const;
    Eigen::VectorXd gradient(const Eigen::VectorXd& z) const;

    /// Gradient and Gauss-Newton Hessian approximation.
    void linearize(const Eigen::VectorXd& z, Eigen::VectorXd& grad, Eigen::MatrixXd& hessian) const;

    /// Objective of the original program (no penalty or multiplier terms).
    double cost(const Eigen::VectorXd& z) const;

    ConstraintBundle constraints(const Eigen::VectorXd& z) const;

private:
    int u_offset(int k) const { return 16 * k; }
    int x_offset(int k) const { return 16 * (k - 1) + 4; }  // k in [1, N]

    State12 node(const Eigen::VectorXd& z, int k) const;
    ControlInput control(const Eigen::VectorXd& z, int k) const;

    void accumulate(const Eigen::VectorXd& z, double* value, Eigen::VectorXd* grad,
                    Eigen::MatrixXd* hessian) const;

    State12 x_init_;
    ReferencePlan plan_;
    NmpcConfig cfg_;
    CbfConfig cbf_;
    QuadrotorParams params_;
    int horizon_;
    Multipliers multipliers_;
    double penalty_ = 0.0;
    Eigen::VectorXd lower_;
    Eigen::VectorXd upper_;
};

/// Solves the landing program from x_init. Returns the best iterate when the
/// budgets run out (converged = false) and status Diverged on a non-finite
/// objective.
OcpSolution solve(const State12& x_init, const ReferencePlan& plan, const WarmStart* warm,
                  const NmpcConfig& cfg, const CbfConfig& cbf, const QuadrotorParams& params);

struct GradientCheckReport {
    double max_relative_error = 0.0;
    int worst_index = -1;
    bool passed = false;
};

using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Compares an analytic gradient (objective.gradient() unless overridden)
/// against central differences. The error of entry i is
/// |g_i - fd_i| / max(1, ||fd||_inf).
GradientCheckReport gradient_check(const AugmentedObjective& objective, const Eigen::VectorXd& z,
                                   double step, double tol, const GradientFn& analytic = {});

}  // namespace lander
