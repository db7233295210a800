#include "lander/harness.hpp"
#include "lander/scenario.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>

namespace lander {

namespace {

using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed)
{
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : obj.items())
        if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

double number(const json& v, const std::string& what)
{
    if (!v.is_number()) throw ConfigError(what + " must be a number");
    return v.get<double>();
}

// null stands for an unbounded entry.
double bound(const json& v, double unbounded, const std::string& what)
{
    if (v.is_null()) return unbounded;
    return number(v, what);
}

template <int N>
Eigen::Matrix<double, N, 1> vec(const json& v, const std::string& what, double null_value = kInf,
                                bool allow_null = false)
{
    if (!v.is_array() || static_cast<int>(v.size()) != N)
        throw ConfigError(what + " must be an array of " + std::to_string(N) + " numbers");
    Eigen::Matrix<double, N, 1> out;
    for (int i = 0; i < N; ++i)
        out[i] = allow_null ? bound(v[i], null_value, what) : number(v[i], what);
    return out;
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where)
{
    if (!obj.contains(key)) return;
    if constexpr (std::is_same_v<T, double>) {
        out = number(obj.at(key), where + "." + key);
    } else if constexpr (std::is_same_v<T, int>) {
        const json& v = obj.at(key);
        if (!v.is_number_integer()) throw ConfigError(where + "." + key + " must be an integer");
        out = v.get<int>();
    } else if constexpr (std::is_same_v<T, bool>) {
        const json& v = obj.at(key);
        if (!v.is_boolean()) throw ConfigError(where + "." + key + " must be true or false");
        out = v.get<bool>();
    } else {
        out = vec<T::RowsAtCompileTime>(obj.at(key), where + "." + key);
    }
}

void parse_params(const json& j, QuadrotorParams& p)
{
    require_keys(j, "quadrotor", {"mass", "arm_x", "arm_y", "yaw_torque_coeff", "inertia", "rotor_radius",
                                  "ground_effect_eps", "ground_effect_max", "gravity", "ground_height"});
    read(j, "mass", p.mass, "quadrotor");
    read(j, "arm_x", p.arm_x, "quadrotor");
    read(j, "arm_y", p.arm_y, "quadrotor");
    read(j, "yaw_torque_coeff", p.yaw_torque_coeff, "quadrotor");
    read(j, "inertia", p.inertia, "quadrotor");
    read(j, "rotor_radius", p.rotor_radius, "quadrotor");
    read(j, "ground_effect_eps", p.ground_effect_eps, "quadrotor");
    read(j, "ground_effect_max", p.ground_effect_max, "quadrotor");
    read(j, "gravity", p.gravity, "quadrotor");
    read(j, "ground_height", p.ground_height, "quadrotor");
}

void parse_solver(const json& j, SolverOptions& s)
{
    require_keys(j, "nmpc.solver", {"max_outer", "max_inner", "penalty_init", "penalty_growth", "penalty_max",
                                    "penalty_warm_max", "feasibility_tol", "stationarity_tol"});
    read(j, "max_outer", s.max_outer, "nmpc.solver");
    read(j, "max_inner", s.max_inner, "nmpc.solver");
    read(j, "penalty_init", s.penalty_init, "nmpc.solver");
    read(j, "penalty_growth", s.penalty_growth, "nmpc.solver");
    read(j, "penalty_max", s.penalty_max, "nmpc.solver");
    read(j, "penalty_warm_max", s.penalty_warm_max, "nmpc.solver");
    read(j, "feasibility_tol", s.feasibility_tol, "nmpc.solver");
    read(j, "stationarity_tol", s.stationarity_tol, "nmpc.solver");
}

void parse_nmpc(const json& j, NmpcConfig& c)
{
    require_keys(j, "nmpc", {"horizon", "dt", "Q", "R", "Q_terminal", "lambda", "u_min", "u_max", "x_min", "x_max",
                             "solver"});
    read(j, "horizon", c.horizon, "nmpc");
    read(j, "dt", c.dt, "nmpc");
    read(j, "Q", c.Q, "nmpc");
    read(j, "R", c.R, "nmpc");
    read(j, "Q_terminal", c.Q_terminal, "nmpc");
    read(j, "lambda", c.lambda, "nmpc");
    read(j, "u_min", c.u_min, "nmpc");
    read(j, "u_max", c.u_max, "nmpc");
    if (j.contains("x_min")) c.x_min = vec<12>(j.at("x_min"), "nmpc.x_min", -kInf, true);
    if (j.contains("x_max")) c.x_max = vec<12>(j.at("x_max"), "nmpc.x_max", kInf, true);
    if (j.contains("solver")) parse_solver(j.at("solver"), c.solver);
}

void parse_cbf(const json& j, CbfConfig& c)
{
    require_keys(j, "cbf", {"gamma", "obstacles", "prediction_buffer"});
    read(j, "gamma", c.gamma, "cbf");
    read(j, "prediction_buffer", c.prediction_buffer, "cbf");
    if (!j.contains("obstacles")) return;
    const json& list = j.at("obstacles");
    if (!list.is_array()) throw ConfigError("cbf.obstacles must be an array");
    c.obstacles.clear();
    for (const json& o : list) {
        require_keys(o, "cbf.obstacles[]", {"center", "radius", "margin"});
        if (!o.contains("center") || !o.contains("radius"))
            throw ConfigError("an obstacle needs a center and a radius");
        const double margin = o.contains("margin") ? number(o.at("margin"), "obstacle margin") : 0.0;
        try {
            c.obstacles.emplace_back(vec<2>(o.at("center"), "obstacle center"), number(o.at("radius"), "obstacle radius"),
                                     margin);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
}

void parse_platform(const json& j, PlatformModel& p)
{
    require_keys(j, "platform", {"kind", "origin", "velocity", "amplitude", "period", "top_height", "half_extent"});
    if (j.contains("kind")) {
        if (!j.at("kind").is_string()) throw ConfigError("platform.kind must be a string");
        try {
            p.kind = platform_kind_from_string(j.at("kind").get<std::string>());
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    read(j, "origin", p.origin, "platform");
    read(j, "velocity", p.velocity, "platform");
    read(j, "amplitude", p.amplitude, "platform");
    read(j, "period", p.period, "platform");
    read(j, "top_height", p.top_height, "platform");
    read(j, "half_extent", p.half_extent, "platform");
}

void parse_initial(const json& j, State12& x)
{
    require_keys(j, "initial_state", {"position", "velocity", "euler", "body_rates"});
    if (j.contains("position")) x.position() = vec<3>(j.at("position"), "initial_state.position");
    if (j.contains("velocity")) x.velocity() = vec<3>(j.at("velocity"), "initial_state.velocity");
    if (j.contains("euler")) x.euler() = vec<3>(j.at("euler"), "initial_state.euler");
    if (j.contains("body_rates")) x.body_rates() = vec<3>(j.at("body_rates"), "initial_state.body_rates");
}

void parse_noise(const json& j, NoiseSigmas& n)
{
    if (j.is_string()) {
        n = noise_preset(j.get<std::string>());
        return;
    }
    require_keys(j, "noise", {"position", "velocity", "attitude", "rates"});
    read(j, "position", n.position, "noise");
    read(j, "velocity", n.velocity, "noise");
    read(j, "attitude", n.attitude, "noise");
    read(j, "rates", n.rates, "noise");
}

void parse_phases(const json& j, PhaseThresholds& p)
{
    require_keys(j, "phases", {"track_enter", "descend_enter", "descend_dwell", "abort_error", "touchdown_height",
                               "touchdown_error", "touchdown_vz_min", "touchdown_vz_max"});
    read(j, "track_enter", p.track_enter, "phases");
    read(j, "descend_enter", p.descend_enter, "phases");
    read(j, "descend_dwell", p.descend_dwell, "phases");
    read(j, "abort_error", p.abort_error, "phases");
    read(j, "touchdown_height", p.touchdown_height, "phases");
    read(j, "touchdown_error", p.touchdown_error, "phases");
    read(j, "touchdown_vz_min", p.touchdown_vz_min, "phases");
    read(j, "touchdown_vz_max", p.touchdown_vz_max, "phases");
}

void parse_descent(const json& j, DescentProfile& d)
{
    require_keys(j, "descent", {"approach_altitude", "descent_rate", "final_offset"});
    read(j, "approach_altitude", d.approach_altitude, "descent");
    read(j, "descent_rate", d.descent_rate, "descent");
    read(j, "final_offset", d.final_offset, "descent");
}

void parse_plant(const json& j, ScenarioConfig& sc)
{
    require_keys(j, "plant", {"integrator", "substeps"});
    if (j.contains("integrator")) {
        const json& v = j.at("integrator");
        const std::string name = v.is_string() ? v.get<std::string>() : "";
        if (name == "rk4") sc.integrator = PlantIntegrator::Rk4;
        else if (name == "euler") sc.integrator = PlantIntegrator::Euler;
        else throw ConfigError("plant.integrator must be \"rk4\" or \"euler\"");
    }
    read(j, "substeps", sc.substeps, "plant");
}

void parse_perturbation(const json& j, ScenarioConfig& sc)
{
    require_keys(j, "perturbation", {"position", "attitude"});
    read(j, "position", sc.init_position_spread, "perturbation");
    read(j, "attitude", sc.init_attitude_spread, "perturbation");
}

void parse_acceptance(const json& j, AcceptanceBounds& a)
{
    require_keys(j, "acceptance", {"max_mean_fpe_cm", "min_barrier", "require_all_success"});
    if (j.contains("max_mean_fpe_cm")) a.max_mean_fpe_cm = number(j.at("max_mean_fpe_cm"), "acceptance.max_mean_fpe_cm");
    if (j.contains("min_barrier")) a.min_barrier = number(j.at("min_barrier"), "acceptance.min_barrier");
    read(j, "require_all_success", a.require_all_success, "acceptance");
}

// Distance from a point to an axis-aligned square.
double distance_to_square(const Eigen::Vector2d& p, const Eigen::Vector2d& center, double half)
{
    const Eigen::Vector2d d = ((p - center).cwiseAbs().array() - half).cwiseMax(0.0).matrix();
    return d.norm();
}

}  // namespace

void NoiseSigmas::validate() const
{
    if (!(position >= 0.0 && velocity >= 0.0 && attitude >= 0.0 && rates >= 0.0))
        throw std::invalid_argument("noise sigmas must be non-negative");
}

void ScenarioConfig::validate() const
{
    params.validate();
    nmpc.validate();
    cbf.validate();
    platform.validate();
    noise.validate();
    if (trials < 0) throw std::invalid_argument("trial count must be non-negative");
    if (!(timeout > 0.0)) throw std::invalid_argument("timeout must be positive");
    if (substeps < 1) throw std::invalid_argument("plant substeps must be >= 1");
    if (!(init_position_spread >= 0.0 && init_attitude_spread >= 0.0))
        throw std::invalid_argument("start perturbation spreads must be non-negative");
    if (!initial_state.x.allFinite()) throw std::invalid_argument("initial state must be finite");
    if (std::abs(initial_state.x[kRoll]) + init_attitude_spread >= 1.5
        || std::abs(initial_state.x[kPitch]) + init_attitude_spread >= 1.5)
        throw std::invalid_argument("initial attitude too close to the Euler singularity");

    const Eigen::Vector2d start = initial_state.x.segment<2>(kPx);
    const double start_slack = init_position_spread * std::sqrt(2.0);
    for (const auto& obs : cbf.obstacles) {
        if ((start - obs.center()).norm() - start_slack <= obs.safe_radius())
            throw std::invalid_argument("initial drone position can fall inside an obstacle safety circle");
    }

    // Sweep the platform footprint over the whole trial.
    if (!cbf.obstacles.empty()) {
        const double step = std::min(nmpc.dt, 0.01);
        const long n = static_cast<long>(std::ceil(timeout / step));
        for (long i = 0; i <= n; ++i) {
            const PlatformState ps = platform_state_at(platform, static_cast<double>(i) * step);
            for (const auto& obs : cbf.obstacles) {
                if (distance_to_square(obs.center(), ps.position.head<2>(), platform.half_extent)
                    <= obs.safe_radius())
                    throw std::invalid_argument("platform path enters an obstacle safety circle");
            }
            if (platform.kind == PlatformKind::Static) break;
        }
    }
}

NoiseSigmas noise_preset(const std::string& name)
{
    if (name == "none") return {};
    if (name == "low") return {0.005, 0.01, 0.002, 0.01};
    if (name == "medium") return {0.01, 0.02, 0.005, 0.02};
    if (name == "high") return {0.02, 0.05, 0.01, 0.05};
    throw ConfigError("unknown noise preset '" + name + "' (expected none, low, medium or high)");
}

ScenarioConfig parse_scenario(const json& doc)
{
    require_keys(doc, "scenario", {"name", "trials", "seed", "timeout", "quadrotor", "nmpc", "cbf", "platform",
                                   "initial_state", "noise", "phases", "descent", "plant", "perturbation",
                                   "acceptance"});
    ScenarioConfig sc;
    if (doc.contains("name")) {
        if (!doc.at("name").is_string()) throw ConfigError("name must be a string");
        sc.name = doc.at("name").get<std::string>();
    }
    read(doc, "trials", sc.trials, "scenario");
    if (doc.contains("seed")) {
        if (!doc.at("seed").is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
        sc.seed = doc.at("seed").get<std::uint64_t>();
    }
    read(doc, "timeout", sc.timeout, "scenario");
    if (doc.contains("quadrotor")) parse_params(doc.at("quadrotor"), sc.params);
    if (doc.contains("nmpc")) parse_nmpc(doc.at("nmpc"), sc.nmpc);
    if (doc.contains("cbf")) parse_cbf(doc.at("cbf"), sc.cbf);
    if (doc.contains("platform")) parse_platform(doc.at("platform"), sc.platform);
    if (doc.contains("initial_state")) parse_initial(doc.at("initial_state"), sc.initial_state);
    if (doc.contains("noise")) parse_noise(doc.at("noise"), sc.noise);
    if (doc.contains("phases")) parse_phases(doc.at("phases"), sc.phases);
    if (doc.contains("descent")) parse_descent(doc.at("descent"), sc.descent);
    if (doc.contains("plant")) parse_plant(doc.at("plant"), sc);
    if (doc.contains("perturbation")) parse_perturbation(doc.at("perturbation"), sc);
    if (doc.contains("acceptance")) parse_acceptance(doc.at("acceptance"), sc.acceptance);

    try {
        sc.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return sc;
}

ScenarioConfig load_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_scenario(doc);
}

}  // namespace lander
