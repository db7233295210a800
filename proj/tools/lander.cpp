// lander: batch runner and diagnostics for the landing simulator.
//
//   lander run --scenario <file> --trials <n> --seed <s> --out <dir>
//              [--noise <preset>] [--format json|table] [--assert]
//   lander check-gradients --scenario <file>
//   lander validate --scenario <file>
//
// Exit status: 0 success, 1 failed trial / check / bound, 2 invalid configuration.

#include "lander/harness.hpp"
#include "lander/ocp.hpp"
#include "lander/sim.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

namespace fs = std::filesystem;
using namespace lander;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

void write_file(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

int cmd_run(const std::string& scenario_path, int trials, std::uint64_t seed, const std::string& out_dir,
            const std::string& noise, const std::string& format, bool assert_bounds)
{
    ScenarioConfig sc;
    try {
        sc = load_scenario(scenario_path);
        if (!noise.empty()) sc.noise = noise_preset(noise);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    const BatchResult result = run_batch(sc, trials, seed);
    fs::create_directories(out_dir);
    for (const auto& log : result.logs) {
        const std::string stem = "trial_" + std::to_string(log.seed);
        std::ofstream csv(fs::path(out_dir) / (stem + ".csv"), std::ios::binary);
        write_trial_csv(log, csv);
        write_file(fs::path(out_dir) / (stem + ".json"), trial_summary_json(log).dump(2) + "\n");
    }
    write_file(fs::path(out_dir) / "report.json", report_to_json(result.report, false).dump(2) + "\n");
    write_file(fs::path(out_dir) / "report.txt", render_table(result.report));

    emit_report(result.report, format == "json" ? ReportFormat::Json : ReportFormat::Table, std::cout);

    const bool all_ok = result.report.totals.successes == result.report.totals.trials;
    if (assert_bounds) {
        const AcceptanceResult acc = check_acceptance(result.report, sc.acceptance);
        for (const auto& f : acc.failures) std::cerr << "assert: " << f << "\n";
        return acc.passed && all_ok ? kExitOk : kExitFailure;
    }
    return all_ok ? kExitOk : kExitFailure;
}

int cmd_check_gradients(const std::string& scenario_path, int points, std::uint64_t seed)
{
    ScenarioConfig sc;
    try {
        sc = load_scenario(scenario_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    // Problem at the nominal start with the plan a first solve would see.
    std::mt19937_64 rng(seed);
    const PlatformState plat = platform_state_at(sc.platform, 0.0);
    const ReferencePlan plan =
        make_reference_plan(sc, PhaseState{}, plat, sc.initial_state, 0.0, sc.initial_state.x[kYaw]);
    AugmentedObjective obj(sc.initial_state, plan, sc.nmpc, sc.cbf, sc.params);

    const int n = obj.size();
    const int n_obs = obj.n_obstacles();
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> pos(0.0, 1.0);
    const DecisionVector base = cold_start(sc.initial_state, sc.nmpc, sc.params);

    double worst = 0.0;
    int failures = 0;
    for (int p = 0; p < points; ++p) {
        DecisionVector d = base;
        for (int k = 1; k < static_cast<int>(d.X.size()); ++k) {
            Vec12& x = d.X[k].x;
            x.segment<3>(kPx) += 0.5 * Eigen::Vector3d(unit(rng), unit(rng), unit(rng));
            x.segment<3>(kVx) = Eigen::Vector3d(unit(rng), unit(rng), unit(rng));
            x.segment<3>(kRoll) = 0.3 * Eigen::Vector3d(unit(rng), unit(rng), unit(rng));
            x.segment<3>(kWx) = Eigen::Vector3d(unit(rng), unit(rng), unit(rng));
        }
        for (auto& u : d.U)
            for (int i = 0; i < 4; ++i) u.thrust[i] = sc.nmpc.u_min + (sc.nmpc.u_max - sc.nmpc.u_min) * pos(rng);

        Multipliers m;
        m.defect = Eigen::VectorXd(12 * sc.nmpc.horizon);
        for (int i = 0; i < m.defect.size(); ++i) m.defect[i] = unit(rng);
        m.cbf = Eigen::VectorXd(sc.nmpc.horizon * n_obs);
        for (int i = 0; i < m.cbf.size(); ++i) m.cbf[i] = pos(rng);
        obj.set_multipliers(m, 10.0 + 90.0 * pos(rng));

        const GradientCheckReport r = gradient_check(obj, obj.pack(d), 1e-6, 1e-5);
        worst = std::max(worst, r.max_relative_error);
        if (!r.passed) ++failures;
        std::printf("point %2d  max relative error %.3e  worst index %4d  %s\n", p, r.max_relative_error,
                    r.worst_index, r.passed ? "ok" : "FAIL");
    }
    std::printf("variables %d  points %d  worst %.3e  tolerance 1e-05  %s\n", n, points, worst,
                failures == 0 ? "PASS" : "FAIL");
    return failures == 0 ? kExitOk : kExitFailure;
}

int cmd_validate(const std::string& scenario_path)
{
    try {
        const ScenarioConfig sc = load_scenario(scenario_path);
        std::cout << "ok: " << sc.name << " (" << sc.cbf.obstacles.size() << " obstacle(s), platform "
                  << to_string(sc.platform.kind) << ")\n";
        return kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"NMPC landing simulator"};
    app.require_subcommand(1);

    std::string scenario;
    int trials = 0;
    std::uint64_t seed = 1;
    std::string out_dir;
    std::string noise;
    std::string format = "table";
    bool assert_bounds = false;

    auto* run = app.add_subcommand("run", "run a batch of closed-loop trials");
    run->add_option("--scenario", scenario, "scenario file")->required()->check(CLI::ExistingFile);
    run->add_option("--trials", trials, "number of trials")->required()->check(CLI::NonNegativeNumber);
    run->add_option("--seed", seed, "base seed; trial i uses seed + i")->required();
    run->add_option("--out", out_dir, "output directory")->required();
    run->add_option("--noise", noise, "feedback noise preset (none, low, medium, high)");
    run->add_option("--format", format, "stdout report format")->check(CLI::IsMember({"json", "table"}));
    run->add_flag("--assert", assert_bounds, "fail unless the scenario's acceptance bounds hold");

    int points = 20;
    std::uint64_t grad_seed = 7;
    auto* grad = app.add_subcommand("check-gradients", "compare analytic and finite-difference gradients");
    grad->add_option("--scenario", scenario, "scenario file")->required()->check(CLI::ExistingFile);
    grad->add_option("--points", points, "random decision points")->check(CLI::PositiveNumber);
    grad->add_option("--seed", grad_seed, "sampling seed");

    auto* val = app.add_subcommand("validate", "parse and check a scenario file");
    val->add_option("--scenario", scenario, "scenario file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*run) return cmd_run(scenario, trials, seed, out_dir, noise, format, assert_bounds);
        if (*grad) return cmd_check_gradients(scenario, points, grad_seed);
        if (*val) return cmd_validate(scenario);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitFailure;
}
