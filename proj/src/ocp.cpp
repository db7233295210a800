#include "lander/ocp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lander {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDomainAngle = 1.4;  // rad, roll/pitch limit of every predicted node

double weighted_sq(const Vec12& e, const Vec12& w) { return (e.array().square() * w.array()).sum(); }

}  // namespace

NmpcConfig::NmpcConfig()
{
    Q << 10, 10, 10, 1, 1, 1, 5, 5, 5, 0.5, 0.5, 0.5;
    R = Eigen::Vector4d::Constant(0.1);
    Q_terminal = 5.0 * Q;
    lambda = Eigen::Vector3d::Constant(20.0);

    x_min = Vec12::Constant(-kInf);
    x_max = Vec12::Constant(kInf);
    x_min[kPz] = 0.0;
    x_min.segment<3>(kVx).setConstant(-3.0);
    x_max.segment<3>(kVx).setConstant(3.0);
    x_min[kRoll] = x_min[kPitch] = -0.6;
    x_max[kRoll] = x_max[kPitch] = 0.6;
}

void NmpcConfig::validate() const
{
    if (horizon < 1) throw std::invalid_argument("prediction horizon must be >= 1");
    if (!(dt > 0.0)) throw std::invalid_argument("sampling time must be positive");
    if ((Q.array() < 0.0).any() || (R.array() < 0.0).any() || (Q_terminal.array() < 0.0).any()
        || (lambda.array() < 0.0).any())
        throw std::invalid_argument("cost weights must be non-negative");
    if (!(u_min <= u_max)) throw std::invalid_argument("control bounds are not ordered");
    if ((x_min.array() > x_max.array()).any()) throw std::invalid_argument("state bounds are not ordered");
    if (solver.max_outer < 1 || solver.max_inner < 1) throw std::invalid_argument("solver budgets must be >= 1");
    if (!(solver.penalty_init > 0.0 && solver.penalty_growth >= 1.0))
        throw std::invalid_argument("penalty parameters out of range");
}

void ReferencePlan::validate(int horizon) const
{
    if (static_cast<int>(states.size()) != horizon + 1 || static_cast<int>(targets.size()) != horizon + 1)
        throw std::invalid_argument("reference plan must hold N + 1 entries");
    if (!control_reference.empty() && static_cast<int>(control_reference.size()) != horizon)
        throw std::invalid_argument("control reference must be empty or hold N entries");
}

double stage_cost(const State12& x, const ControlInput& u, const State12& x_ref,
                  const Eigen::Vector3d& target, const NmpcConfig& cfg, bool positional_active,
                  const Eigen::Vector4d& u_ref)
{
    double c = weighted_sq(x.x - x_ref.x, cfg.Q);
    c += ((u.thrust - u_ref).array().square() * cfg.R.array()).sum();
    if (positional_active)
        c += ((x.position() - target).array().square() * cfg.lambda.array()).sum();
    return c;
}

double terminal_cost(const State12& x_N, const State12& x_rf, const NmpcConfig& cfg)
{
    return weighted_sq(x_N.x - x_rf.x, cfg.Q_terminal);
}

double total_cost(const DecisionVector& d, const ReferencePlan& plan, const NmpcConfig& cfg)
{
    const int N = d.horizon();
    double c = 0.0;
    for (int k = 0; k < N; ++k)
        c += stage_cost(d.X[k], d.U[k], plan.states[k], plan.targets[k], cfg, plan.positional_cost_active,
                        plan.control_at(k));
    return c + terminal_cost(d.X[N], plan.terminal, cfg);
}

double ConstraintBundle::defect_norm() const
{
    double m = 0.0;
    for (const auto& d : defects) m = std::max(m, d.lpNorm<Eigen::Infinity>());
    return m;
}

double ConstraintBundle::min_cbf() const
{
    double m = kInf;
    for (double c : cbf) m = std::min(m, c);
    return m;
}

ConstraintBundle constraint_eval(const DecisionVector& d, const State12& x_init, const NmpcConfig& cfg,
                                 const CbfConfig& cbf, const QuadrotorParams& params, double surface_height)
{
    const int N = d.horizon();
    ConstraintBundle b;
    b.initial_residual = d.X[0].x - x_init.x;
    b.defects.reserve(N);
    for (int k = 0; k < N; ++k)
        b.defects.push_back(d.X[k + 1].x - euler_step(d.X[k], d.U[k], cfg.dt, params, surface_height).x);

    const CbfConfig seen = cbf.buffered();
    b.cbf.reserve(static_cast<std::size_t>(N) * seen.obstacles.size());
    for (int k = 0; k < N; ++k)
        for (const auto& obs : seen.obstacles) b.cbf.push_back(cbf_residual(d.X[k], d.X[k + 1], obs, seen.gamma));

    double v = 0.0;
    for (int k = 2; k <= N; ++k) {
        v = std::max(v, (cfg.x_min - d.X[k].x).maxCoeff());
        v = std::max(v, (d.X[k].x - cfg.x_max).maxCoeff());
    }
    for (const auto& u : d.U) {
        v = std::max(v, cfg.u_min - u.thrust.minCoeff());
        v = std::max(v, u.thrust.maxCoeff() - cfg.u_max);
    }
    b.bound_violation = v;
    return b;
}

DecisionVector shift_warm_start(const DecisionVector& prev)
{
    DecisionVector next = prev;
    const int N = prev.horizon();
    if (N == 0) return next;
    for (int k = 0; k < N; ++k) next.X[k] = prev.X[k + 1];
    next.X[N] = prev.X[N];
    for (int k = 0; k + 1 < N; ++k) next.U[k] = prev.U[k + 1];
    next.U[N - 1] = prev.U[N - 1];
    return next;
}

WarmStart shift_warm_start(const WarmStart& prev, int n_obstacles)
{
    WarmStart next;
    next.decision = shift_warm_start(prev.decision);
    const int N = prev.decision.horizon();

    auto shift_blocks = [N](const Eigen::VectorXd& v, int block) {
        Eigen::VectorXd out = v;
        if (v.size() != static_cast<Eigen::Index>(N) * block || N == 0 || block == 0) return out;
        for (int k = 0; k + 1 < N; ++k) out.segment(k * block, block) = v.segment((k + 1) * block, block);
        return out;
    };
    next.multipliers.defect = shift_blocks(prev.multipliers.defect, 12);
    next.multipliers.cbf = shift_blocks(prev.multipliers.cbf, n_obstacles);
    next.penalty = prev.penalty;
    return next;
}

DecisionVector cold_start(const State12& x_init, const NmpcConfig& cfg, const QuadrotorParams& params)
{
    DecisionVector d;
    d.X.assign(cfg.horizon + 1, x_init);
    const double hover = std::clamp(params.hover_thrust_per_motor(), cfg.u_min, cfg.u_max);
    d.U.assign(cfg.horizon, ControlInput(Eigen::Vector4d::Constant(hover)));
    return d;
}

DecisionVector rollout(const State12& x_init, const std::vector<ControlInput>& U, const NmpcConfig& cfg,
                       const QuadrotorParams& params, double surface_height)
{
    DecisionVector d;
    d.U = U;
    d.X.reserve(U.size() + 1);
    d.X.push_back(x_init);
    for (const auto& u : U) d.X.push_back(euler_step(d.X.back(), u, cfg.dt, params, surface_height));
    return d;
}

// ---------------------------------------------------------------------------

AugmentedObjective::AugmentedObjective(const State12& x_init, const ReferencePlan& plan, const NmpcConfig& cfg,
                                       const CbfConfig& cbf, const QuadrotorParams& params)
    : x_init_(x_init), plan_(plan), cfg_(cfg), cbf_(cbf.buffered()), params_(params), horizon_(cfg.horizon)
{
    plan_.validate(horizon_);
    multipliers_.defect = Eigen::VectorXd::Zero(12 * horizon_);
    multipliers_.cbf = Eigen::VectorXd::Zero(horizon_ * n_obstacles());

    lower_.resize(size());
    upper_.resize(size());
    for (int k = 0; k < horizon_; ++k) {
        lower_.segment<4>(u_offset(k)).setConstant(cfg_.u_min);
        upper_.segment<4>(u_offset(k)).setConstant(cfg_.u_max);
        // X[1] is pinned by x_init up to the thrust-dependent velocity, so
        // boxes start at X[2].
        if (k == 0) {
            lower_.segment<12>(x_offset(1)).setConstant(-kInf);
            upper_.segment<12>(x_offset(1)).setConstant(kInf);
        } else {
            lower_.segment<12>(x_offset(k + 1)) = cfg_.x_min;
            upper_.segment<12>(x_offset(k + 1)) = cfg_.x_max;
        }
        // Every node stays inside the nonsingular range of the Euler-rate map.
        for (int i : {kRoll, kPitch}) {
            double& lo = lower_[x_offset(k + 1) + i];
            double& hi = upper_[x_offset(k + 1) + i];
            lo = std::clamp(lo, -kDomainAngle, kDomainAngle);
            hi = std::clamp(hi, -kDomainAngle, kDomainAngle);
        }
    }
}

Eigen::VectorXd AugmentedObjective::pack(const DecisionVector& d) const
{
    if (d.horizon() != horizon_ || static_cast<int>(d.X.size()) != horizon_ + 1)
        throw std::invalid_argument("decision vector does not match the horizon");
    Eigen::VectorXd z(size());
    for (int k = 0; k < horizon_; ++k) {
        z.segment<4>(u_offset(k)) = d.U[k].thrust;
        z.segment<12>(x_offset(k + 1)) = d.X[k + 1].x;
    }
    return z;
}

DecisionVector AugmentedObjective::unpack(const Eigen::VectorXd& z) const
{
    DecisionVector d;
    d.X.reserve(horizon_ + 1);
    d.X.push_back(x_init_);
    for (int k = 0; k < horizon_; ++k) {
        d.U.emplace_back(z.segment<4>(u_offset(k)));
        d.X.emplace_back(z.segment<12>(x_offset(k + 1)));
    }
    return d;
}

void AugmentedObjective::set_multipliers(const Multipliers& m, double penalty)
{
    if (m.defect.size() != multipliers_.defect.size() || m.cbf.size() != multipliers_.cbf.size())
        throw std::invalid_argument("multiplier sizes do not match the program");
    if (!(penalty >= 0.0)) throw std::invalid_argument("penalty must be non-negative");
    multipliers_ = m;
    penalty_ = penalty;
}

Eigen::VectorXd AugmentedObjective::project(const Eigen::VectorXd& z) const
{
    return z.cwiseMax(lower_).cwiseMin(upper_);
}

State12 AugmentedObjective::node(const Eigen::VectorXd& z, int k) const
{
    if (k == 0) return x_init_;
    return State12(z.segment<12>(x_offset(k)));
}

ControlInput AugmentedObjective::control(const Eigen::VectorXd& z, int k) const
{
    return ControlInput(z.segment<4>(u_offset(k)));
}

double AugmentedObjective::value(const Eigen::VectorXd& z) const
{
    double v = 0.0;
    try {
        accumulate(z, &v, nullptr, nullptr);
    } catch (const SimulationFault&) {
        return kInf;
    }
    return v;
}

Eigen::VectorXd AugmentedObjective::gradient(const Eigen::VectorXd& z) const
{
    Eigen::VectorXd g;
    accumulate(z, nullptr, &g, nullptr);
    return g;
}

void AugmentedObjective::linearize(const Eigen::VectorXd& z, Eigen::VectorXd& grad,
                                   Eigen::MatrixXd& hessian) const
{
    accumulate(z, nullptr, &grad, &hessian);
}

double AugmentedObjective::cost(const Eigen::VectorXd& z) const { return total_cost(unpack(z), plan_, cfg_); }

ConstraintBundle AugmentedObjective::constraints(const Eigen::VectorXd& z) const
{
    return constraint_eval(unpack(z), x_init_, cfg_, cbf_, params_, plan_.surface_height);
}

void AugmentedObjective::accumulate(const Eigen::VectorXd& z, double* value, Eigen::VectorXd* grad,
                                    Eigen::MatrixXd* H) const
{
    const int N = horizon_;
    const double rho = penalty_;
    const double dt = cfg_.dt;
    double L = 0.0;
    if (grad) grad->setZero(size());
    if (H) H->setZero(size(), size());

    // Tracking cost. Stage 0 state terms are constant (X[0] is pinned).
    for (int k = 0; k < N; ++k) {
        const State12 xk = node(z, k);
        const Eigen::Vector4d u = z.segment<4>(u_offset(k)) - plan_.control_at(k);
        const Vec12 e = xk.x - plan_.states[k].x;
        L += weighted_sq(e, cfg_.Q);
        L += (u.array().square() * cfg_.R.array()).sum();
        if (grad) grad->segment<4>(u_offset(k)) += 2.0 * cfg_.R.cwiseProduct(u);
        if (H) H->diagonal().segment<4>(u_offset(k)) += 2.0 * cfg_.R;

        Eigen::Vector3d ep = Eigen::Vector3d::Zero();
        if (plan_.positional_cost_active) {
            ep = xk.position() - plan_.targets[k];
            L += (ep.array().square() * cfg_.lambda.array()).sum();
        }
        if (k >= 1) {
            const int o = x_offset(k);
            if (grad) {
                grad->segment<12>(o) += 2.0 * cfg_.Q.cwiseProduct(e);
                grad->segment<3>(o) += 2.0 * cfg_.lambda.cwiseProduct(ep);
            }
            if (H) {
                H->diagonal().segment<12>(o) += 2.0 * cfg_.Q;
                if (plan_.positional_cost_active) H->diagonal().segment<3>(o) += 2.0 * cfg_.lambda;
            }
        }
    }
    {
        const Vec12 e = node(z, N).x - plan_.terminal.x;
        L += weighted_sq(e, cfg_.Q_terminal);
        if (grad) grad->segment<12>(x_offset(N)) += 2.0 * cfg_.Q_terminal.cwiseProduct(e);
        if (H) H->diagonal().segment<12>(x_offset(N)) += 2.0 * cfg_.Q_terminal;
    }

    // Shooting defects: lambda^T d + rho/2 |d|^2.
    const Mat12 I12 = Mat12::Identity();
    for (int k = 0; k < N; ++k) {
        const State12 xk = node(z, k);
        const ControlInput uk = control(z, k);
        const Vec12 xn = z.segment<12>(x_offset(k + 1));
        const Vec12 d = xn - xk.x - dt * derivative(xk, uk, params_, plan_.surface_height);
        const auto lam = multipliers_.defect.segment<12>(12 * k);
        L += lam.dot(d) + 0.5 * rho * d.squaredNorm();

        if (!grad && !H) continue;
        const DynamicsJacobian jac = derivative_jacobian(xk, uk, params_, plan_.surface_height);
        const Mat12 Jx = -(I12 + dt * jac.A);
        const Mat12x4 Ju = -dt * jac.B;
        const int uo = u_offset(k);
        const int xo = x_offset(k + 1);

        if (grad) {
            const Vec12 w = lam + rho * d;
            grad->segment<12>(xo) += w;
            grad->segment<4>(uo) += Ju.transpose() * w;
            if (k >= 1) grad->segment<12>(x_offset(k)) += Jx.transpose() * w;
        }
        if (H && rho > 0.0) {
            H->block<12, 12>(xo, xo).diagonal().array() += rho;
            H->block<4, 4>(uo, uo) += rho * Ju.transpose() * Ju;
            H->block<4, 12>(uo, xo) += rho * Ju.transpose();
            H->block<12, 4>(xo, uo) += rho * Ju;
            if (k >= 1) {
                const int po = x_offset(k);
                const Mat12 JxT = Jx.transpose();
                H->block<12, 12>(po, po) += rho * JxT * Jx;
                const Eigen::Matrix<double, 12, 4> xu = rho * JxT * Ju;
                H->block<12, 4>(po, uo) += xu;
                H->block<4, 12>(uo, po) += xu.transpose();
                H->block<12, 12>(po, xo) += rho * JxT;
                H->block<12, 12>(xo, po) += rho * Jx;
            }
        }
    }

    // CBF inequalities c >= 0 in shifted-penalty form:
    // (max(0, mu - rho c)^2 - mu^2) / (2 rho), which tends to -mu c as rho -> 0.
    // Stage 0 is excluded: under explicit Euler the position of X[1] is
    // p0 + dt v0 whatever the controls, so c_{0,j} is fixed by x_init.
    const int n_obs = n_obstacles();
    const double decay = 1.0 - cbf_.gamma;
    for (int k = 1; k < N; ++k) {
        const Eigen::Vector2d p0 = node(z, k).x.segment<2>(kPx);
        const Eigen::Vector2d p1 = z.segment<2>(x_offset(k + 1) + kPx);
        for (int j = 0; j < n_obs; ++j) {
            const ObstacleSpec& obs = cbf_.obstacles[j];
            const double c = cbf_residual(barrier_value(p0, obs), barrier_value(p1, obs), cbf_.gamma);
            const double mu = multipliers_.cbf[k * n_obs + j];
            const double s = std::max(0.0, mu - rho * c);
            L += rho > 0.0 ? (s * s - mu * mu) / (2.0 * rho) : -mu * c;

            if (s <= 0.0) continue;
            const Eigen::Vector2d g1 = barrier_gradient(p1, obs);
            const Eigen::Vector2d g0 = -decay * barrier_gradient(p0, obs);
            const int o1 = x_offset(k + 1) + kPx;
            const int o0 = x_offset(k) + kPx;
            if (grad) {
                grad->segment<2>(o1) -= s * g1;
                grad->segment<2>(o0) -= s * g0;
            }
            if (H && rho > 0.0) {
                H->block<2, 2>(o1, o1) += rho * g1 * g1.transpose();
                H->block<2, 2>(o0, o0) += rho * g0 * g0.transpose();
                H->block<2, 2>(o0, o1) += rho * g0 * g1.transpose();
                H->block<2, 2>(o1, o0) += rho * g1 * g0.transpose();
            }
        }
    }

    if (value) *value = L;
}

// ---------------------------------------------------------------------------

namespace {

struct InnerResult {
    Eigen::VectorXd z;
    double value = 0.0;
    double pg_norm = kInf;
    int iterations = 0;
    bool diverged = false;
    std::vector<double> trace;
};

// Variable coupling in z spans at most X_k .. X_{k+1}: (16k + 15) - (16(k-1) + 4).
constexpr int kBandwidth = 27;

/// In-place Cholesky of a symmetric positive definite banded matrix stored
/// densely; only entries within `bw` of the diagonal are read. Solves for rhs.
bool banded_cholesky_solve(Eigen::MatrixXd& A, int bw, Eigen::VectorXd& rhs)
{
    const int n = static_cast<int>(A.rows());
    for (int j = 0; j < n; ++j) {
        const int lo = std::max(0, j - bw);
        double d = A(j, j);
        for (int k = lo; k < j; ++k) d -= A(j, k) * A(j, k);
        if (!(d > 0.0)) return false;
        d = std::sqrt(d);
        A(j, j) = d;
        const int hi = std::min(n - 1, j + bw);
        for (int i = j + 1; i <= hi; ++i) {
            double s = A(i, j);
            const int lo_i = std::max(0, i - bw);
            for (int k = std::max(lo, lo_i); k < j; ++k) s -= A(i, k) * A(j, k);
            A(i, j) = s / d;
        }
    }
    for (int i = 0; i < n; ++i) {
        double s = rhs[i];
        for (int k = std::max(0, i - bw); k < i; ++k) s -= A(i, k) * rhs[k];
        rhs[i] = s / A(i, i);
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = rhs[i];
        for (int k = i + 1; k <= std::min(n - 1, i + bw); ++k) s -= A(k, i) * rhs[k];
        rhs[i] = s / A(i, i);
    }
    return true;
}

double projected_gradient_norm(const AugmentedObjective& obj, const Eigen::VectorXd& z, const Eigen::VectorXd& g)
{
    return (obj.project(z - g) - z).lpNorm<Eigen::Infinity>();
}

/// Projected Gauss-Newton on the box-constrained augmented Lagrangian with
/// an epsilon-active set and Armijo backtracking along the projection arc.
InnerResult inner_solve(const AugmentedObjective& obj, Eigen::VectorXd z, const SolverOptions& opt)
{
    InnerResult r;
    const int n = obj.size();
    double L = obj.value(z);
    if (!std::isfinite(L)) {
        r.z = std::move(z);
        r.diverged = true;
        return r;
    }
    if (opt.record_trace) r.trace.push_back(L);

    Eigen::VectorXd g(n);
    Eigen::MatrixXd H(n, n);
    Eigen::MatrixXd factor(n, n);
    constexpr double kArmijo = 1e-4;

    for (int it = 0; it < opt.max_inner; ++it) {
        obj.linearize(z, g, H);
        if (!g.allFinite()) {
            r.diverged = true;
            break;
        }
        const double pg = projected_gradient_norm(obj, z, g);
        r.pg_norm = pg;
        if (pg <= opt.stationarity_tol) break;

        const double eps = std::min(1e-6, pg);
        std::vector<char> active(n, 0);
        for (int i = 0; i < n; ++i) {
            if ((z[i] <= obj.lower()[i] + eps && g[i] > 0.0) || (z[i] >= obj.upper()[i] - eps && g[i] < 0.0))
                active[i] = 1;
        }
        Eigen::VectorXd rhs = -g;
        for (int i = 0; i < n; ++i) {
            if (!active[i]) continue;
            H.row(i).setZero();
            H.col(i).setZero();
            H(i, i) = 1.0;
            rhs[i] = 0.0;
        }
        const double scale = std::max(1.0, H.diagonal().maxCoeff());
        double damping = 1e-10 * scale;

        bool accepted = false;
        Eigen::VectorXd z_trial;
        double L_trial = L;
        for (int attempt = 0; attempt < 4 && !accepted; ++attempt, damping *= 1e3) {
            factor = H;
            factor.diagonal().array() += damping;
            Eigen::VectorXd p = rhs;
            if (!banded_cholesky_solve(factor, kBandwidth, p)) continue;
            double alpha = 1.0;
            for (int ls = 0; ls < 30; ++ls, alpha *= 0.5) {
                z_trial = obj.project(z + alpha * p);
                const double slope = g.dot(z_trial - z);
                if (slope >= 0.0) continue;
                L_trial = obj.value(z_trial);
                if (std::isfinite(L_trial) && L_trial <= L + kArmijo * slope) {
                    accepted = true;
                    break;
                }
            }
        }
        if (!accepted) {
            // Projected steepest descent as a last resort.
            double beta = 1.0 / scale;
            for (int ls = 0; ls < 40; ++ls, beta *= 0.5) {
                z_trial = obj.project(z - beta * g);
                const double slope = g.dot(z_trial - z);
                if (slope >= 0.0) break;
                L_trial = obj.value(z_trial);
                if (std::isfinite(L_trial) && L_trial <= L + kArmijo * slope) {
                    accepted = true;
                    break;
                }
            }
        }
        if (!accepted) break;

        ++r.iterations;
        const double decrease = L - L_trial;
        z = std::move(z_trial);
        L = L_trial;
        if (opt.record_trace) r.trace.push_back(L);
        if (decrease <= 1e-15 * std::max(1.0, std::abs(L))) {
            obj.linearize(z, g, H);
            r.pg_norm = projected_gradient_norm(obj, z, g);
            break;
        }
    }
    r.z = std::move(z);
    r.value = L;
    return r;
}

/// Worst violation of the constraints the optimizer controls: all defects and
/// the barrier residuals of stages 1..N-1.
double violation(const ConstraintBundle& b, int n_obs)
{
    double v = b.defect_norm();
    for (std::size_t i = n_obs; i < b.cbf.size(); ++i) v = std::max(v, -b.cbf[i]);
    return v;
}

}  // namespace

OcpSolution solve(const State12& x_init, const ReferencePlan& plan, const WarmStart* warm, const NmpcConfig& cfg,
                  const CbfConfig& cbf, const QuadrotorParams& params)
{
    cfg.validate();
    plan.validate(cfg.horizon);
    const SolverOptions& opt = cfg.solver;
    const int N = cfg.horizon;
    const int n_obs = static_cast<int>(cbf.obstacles.size());

    AugmentedObjective obj(x_init, plan, cfg, cbf, params);

    OcpSolution sol;
    Multipliers mult = obj.multipliers();
    DecisionVector start = cold_start(x_init, cfg, params);
    if (warm && warm->decision.horizon() == N && static_cast<int>(warm->decision.X.size()) == N + 1) {
        start = warm->decision;
        start.X[0] = x_init;
        if (warm->multipliers.defect.size() == mult.defect.size()) mult.defect = warm->multipliers.defect;
        if (warm->multipliers.cbf.size() == mult.cbf.size()) mult.cbf = warm->multipliers.cbf.cwiseMax(0.0);
        mult.cbf.head(n_obs).setZero();
    }

    Eigen::VectorXd z = obj.project(obj.pack(start));
    if (warm && !std::isfinite(obj.value(z))) {
        // The shifted guess left the model domain; start over.
        z = obj.project(obj.pack(cold_start(x_init, cfg, params)));
        mult = Multipliers{Eigen::VectorXd::Zero(mult.defect.size()), Eigen::VectorXd::Zero(mult.cbf.size())};
    }

    double rho = opt.penalty_init;
    if (warm) rho = std::clamp(warm->penalty, opt.penalty_init, std::max(opt.penalty_init, opt.penalty_warm_max));
    double prev_viol = kInf;

    Eigen::VectorXd best_z = z;
    Multipliers best_mult = mult;
    double best_viol = kInf;
    double best_cost = kInf;
    double best_pg = kInf;
    double last_pg = kInf;

    for (int outer = 0; outer < opt.max_outer; ++outer) {
        obj.set_multipliers(mult, rho);
        InnerResult inner;
        try {
            inner = inner_solve(obj, z, opt);
        } catch (const SimulationFault&) {
            inner.diverged = true;
        }
        sol.iterations = outer + 1;
        sol.inner_iterations += inner.iterations;
        if (opt.record_trace) sol.trace.push_back(std::move(inner.trace));
        if (inner.diverged) {
            sol.status = SolveStatus::Diverged;
            break;
        }
        z = inner.z;
        last_pg = inner.pg_norm;

        const ConstraintBundle b = obj.constraints(z);
        const double viol = violation(b, n_obs);
        const double c = obj.cost(z);
        if (!std::isfinite(c) || !std::isfinite(viol)) {
            sol.status = SolveStatus::Diverged;
            break;
        }

        const bool better = (viol <= opt.feasibility_tol && best_viol <= opt.feasibility_tol)
                                ? c < best_cost
                                : viol < best_viol;
        if (better) {
            best_z = z;
            best_mult = mult;
            best_viol = viol;
            best_cost = c;
            best_pg = last_pg;
        }

        if (viol <= opt.feasibility_tol && last_pg <= opt.stationarity_tol) {
            sol.status = SolveStatus::Converged;
            best_z = z;
            best_pg = last_pg;
            best_viol = viol;
        }

        for (int k = 0; k < N; ++k) mult.defect.segment<12>(12 * k) += rho * b.defects[k];
        for (int i = n_obs; i < static_cast<int>(b.cbf.size()); ++i)
            mult.cbf[i] = std::max(0.0, mult.cbf[i] - rho * b.cbf[i]);
        if (sol.status == SolveStatus::Converged) {
            best_mult = mult;
            break;
        }

        // At the penalty ceiling a violation that no longer shrinks means the
        // constraints cannot be met from this state; more iterations only
        // worsen the conditioning.
        if (rho >= opt.penalty_max && viol > 0.9 * prev_viol) break;
        if (viol > 0.25 * prev_viol) rho = std::min(rho * opt.penalty_growth, opt.penalty_max);
        prev_viol = viol;
    }

    if (sol.status == SolveStatus::Diverged) {
        sol.converged = false;
        sol.decision = obj.unpack(best_z);
        sol.multipliers = best_mult;
        sol.cost = kInf;
        return sol;
    }

    DecisionVector decision = obj.unpack(best_z);
    ConstraintBundle bundle = obj.constraints(best_z);

    // Close the remaining shooting gaps with a forward rollout of the controls
    // when this keeps the barrier and box constraints within tolerance.
    if (sol.status == SolveStatus::Converged) {
        DecisionVector rolled = rollout(x_init, decision.U, cfg, params, plan.surface_height);
        const ConstraintBundle rb = constraint_eval(rolled, x_init, cfg, cbf, params, plan.surface_height);
        if (violation(rb, n_obs) <= opt.feasibility_tol && rb.bound_violation <= opt.feasibility_tol) {
            decision = std::move(rolled);
            bundle = rb;
        }
    }

    sol.decision = decision;
    sol.multipliers = best_mult;
    sol.penalty = rho;
    sol.cost = total_cost(decision, plan, cfg);
    sol.kkt_residual = best_pg;
    sol.defect_norm = bundle.defect_norm();
    sol.min_cbf_residual = kInf;
    sol.initial_cbf_residual = kInf;
    for (int i = 0; i < static_cast<int>(bundle.cbf.size()); ++i) {
        double& slot = i < n_obs ? sol.initial_cbf_residual : sol.min_cbf_residual;
        slot = std::min(slot, bundle.cbf[i]);
    }
    sol.converged = sol.status == SolveStatus::Converged && sol.defect_norm <= 1e-4
                    && sol.min_cbf_residual >= -1e-5;
    sol.u_apply = ControlInput(decision.U[0].thrust.cwiseMax(cfg.u_min).cwiseMin(cfg.u_max));
    return sol;
}

GradientCheckReport gradient_check(const AugmentedObjective& objective, const Eigen::VectorXd& z, double step,
                                   double tol, const GradientFn& analytic)
{
    const Eigen::VectorXd g = analytic ? analytic(z) : objective.gradient(z);
    const int n = objective.size();
    Eigen::VectorXd fd(n);
    Eigen::VectorXd zp = z;
    for (int i = 0; i < n; ++i) {
        const double orig = zp[i];
        zp[i] = orig + step;
        const double fp = objective.value(zp);
        zp[i] = orig - step;
        const double fm = objective.value(zp);
        zp[i] = orig;
        fd[i] = (fp - fm) / (2.0 * step);
    }
    GradientCheckReport rep;
    const double denom = std::max(1.0, fd.lpNorm<Eigen::Infinity>());
    for (int i = 0; i < n; ++i) {
        const double e = std::abs(g[i] - fd[i]) / denom;
        if (e > rep.max_relative_error || rep.worst_index < 0) {
            rep.max_relative_error = e;
            rep.worst_index = i;
        }
    }
    rep.passed = rep.max_relative_error < tol;
    return rep;
}

}  // namespace lander
