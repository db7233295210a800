#pragma once

#include "lander/scenario.hpp"
#include "lander/sim.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace lander {

/// Raised for malformed or inconsistent scenario files.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

ScenarioConfig parse_scenario(const nlohmann::json& doc);
ScenarioConfig load_scenario(const std::filesystem::path& path);

/// Named feedback-noise levels for `--noise`.
NoiseSigmas noise_preset(const std::string& name);

/// Distance between touchdown point and platform centre in cm. Horizontal by
/// default; `three_d` includes the vertical offset.
double final_point_error(const Eigen::Vector3d& drone, const Eigen::Vector3d& platform, bool three_d = false);

/// Throws std::invalid_argument for a log without a terminal record.
double final_point_error(const TrialLog& log, bool three_d = false);

struct TrialSummary {
    std::uint64_t seed = 0;
    bool failed = true;
    std::string outcome;
    std::optional<double> fpe_cm;
    std::optional<double> touchdown_time;
    std::optional<double> min_h;  // empty without obstacles
    bool all_converged = false;
    double mean_solve_ms = 0.0;
    double max_solve_ms = 0.0;

    bool operator==(const TrialSummary&) const = default;
};

TrialSummary summarize(const TrialLog& log);

struct BatchAggregates {
    int trials = 0;
    int successes = 0;
    std::optional<double> success_rate;  // empty for an empty batch
    std::optional<double> mean_fpe_cm;   // over successful trials
    std::optional<double> max_fpe_cm;
    std::optional<double> min_h;         // over all trials
    double max_solve_ms = 0.0;

    bool operator==(const BatchAggregates&) const = default;
};

BatchAggregates aggregate(const std::vector<TrialSummary>& trials);

struct BatchReport {
    std::string scenario;
    std::uint64_t base_seed = 0;
    std::vector<TrialSummary> trials;
    BatchAggregates totals;

    bool operator==(const BatchReport&) const = default;
};

struct BatchResult {
    BatchReport report;
    std::vector<TrialLog> logs;  // seed order
};

/// Runs seeds base_seed .. base_seed + trials - 1, `workers` at a time
/// (0 = hardware concurrency). Results are ordered by seed.
BatchResult run_batch(const ScenarioConfig& scenario, int trials, std::uint64_t base_seed, unsigned workers = 0);

/// JSON form of a report. Wall-clock fields are left out unless asked for so
/// that identical runs give identical bytes.
nlohmann::json report_to_json(const BatchReport& report, bool include_timing);
BatchReport report_from_json(const nlohmann::json& doc);

/// Aligned plain-text table.
std::string render_table(const BatchReport& report);

enum class ReportFormat { Json, Table };

void emit_report(const BatchReport& report, ReportFormat format, std::ostream& out);

/// Terminal-summary sidecar of one trial.
nlohmann::json trial_summary_json(const TrialLog& log);

struct AcceptanceResult {
    bool passed = true;
    std::vector<std::string> failures;
};

AcceptanceResult check_acceptance(const BatchReport& report, const AcceptanceBounds& bounds);

}  // namespace lander
