#include "lander/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace lander {

namespace {

using nlohmann::json;

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j, const char* key)
{
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

std::string fixed(const std::optional<double>& v, int decimals)
{
    if (!v) return "n/a";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, *v);
    return buf;
}

std::string sci(const std::optional<double>& v)
{
    if (!v) return "n/a";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", *v);
    return buf;
}

}  // namespace

double final_point_error(const Eigen::Vector3d& drone, const Eigen::Vector3d& platform, bool three_d)
{
    const Eigen::Vector3d d = drone - platform;
    return 100.0 * (three_d ? d.norm() : d.head<2>().norm());
}

double final_point_error(const TrialLog& log, bool three_d)
{
    if (!log.terminal) throw std::invalid_argument("trial has no touchdown record");
    return final_point_error(log.terminal->drone_position, log.terminal->platform_position, three_d);
}

TrialSummary summarize(const TrialLog& log)
{
    TrialSummary s;
    s.seed = log.seed;
    s.failed = !log.landed();
    s.outcome = std::string(to_string(log.outcome));
    if (log.terminal) {
        s.fpe_cm = final_point_error(log);
        s.touchdown_time = log.terminal->touchdown_time;
    }
    if (!log.steps.empty() && !log.steps.front().h.empty()) s.min_h = log.min_barrier();
    s.all_converged = log.all_solves_converged();

    double total = 0.0;
    int solves = 0;
    for (std::size_t i = 0; i < log.steps.size(); ++i) {
        if (log.steps[i].solver.iterations == 0) continue;
        total += log.cycle_ms[i];
        s.max_solve_ms = std::max(s.max_solve_ms, log.cycle_ms[i]);
        ++solves;
    }
    s.mean_solve_ms = solves > 0 ? total / solves : 0.0;
    return s;
}

BatchAggregates aggregate(const std::vector<TrialSummary>& trials)
{
    BatchAggregates a;
    a.trials = static_cast<int>(trials.size());
    double fpe_sum = 0.0;
    for (const auto& t : trials) {
        a.max_solve_ms = std::max(a.max_solve_ms, t.max_solve_ms);
        if (t.min_h) a.min_h = a.min_h ? std::min(*a.min_h, *t.min_h) : *t.min_h;
        if (t.failed) continue;
        ++a.successes;
        if (t.fpe_cm) {
            fpe_sum += *t.fpe_cm;
            a.max_fpe_cm = a.max_fpe_cm ? std::max(*a.max_fpe_cm, *t.fpe_cm) : *t.fpe_cm;
        }
    }
    if (a.trials > 0) a.success_rate = static_cast<double>(a.successes) / a.trials;
    if (a.successes > 0) a.mean_fpe_cm = fpe_sum / a.successes;
    return a;
}

BatchResult run_batch(const ScenarioConfig& scenario, int trials, std::uint64_t base_seed, unsigned workers)
{
    if (trials < 0) throw std::invalid_argument("trial count must be non-negative");
    scenario.validate();

    BatchResult out;
    out.logs.resize(trials);
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<unsigned>(workers, std::max(trials, 1));

    std::atomic<int> next{0};
    auto work = [&] {
        for (int i = next++; i < trials; i = next++)
            out.logs[i] = run_closed_loop(scenario, base_seed + static_cast<std::uint64_t>(i));
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    out.report.scenario = scenario.name;
    out.report.base_seed = base_seed;
    for (const auto& log : out.logs) out.report.trials.push_back(summarize(log));
    out.report.totals = aggregate(out.report.trials);
    return out;
}

json report_to_json(const BatchReport& r, bool include_timing)
{
    json trials = json::array();
    for (const auto& t : r.trials) {
        json j = {{"seed", t.seed},         {"failed", t.failed},
                  {"outcome", t.outcome},   {"fpe_cm", opt(t.fpe_cm)},
                  {"touchdown_time", opt(t.touchdown_time)}, {"min_h", opt(t.min_h)},
                  {"all_converged", t.all_converged}};
        if (include_timing) {
            j["mean_solve_ms"] = t.mean_solve_ms;
            j["max_solve_ms"] = t.max_solve_ms;
        }
        trials.push_back(std::move(j));
    }
    const BatchAggregates& a = r.totals;
    json totals = {{"trials", a.trials},
                   {"successes", a.successes},
                   {"success_rate", opt(a.success_rate)},
                   {"mean_fpe_cm", opt(a.mean_fpe_cm)},
                   {"max_fpe_cm", opt(a.max_fpe_cm)},
                   {"min_h", opt(a.min_h)}};
    if (include_timing) totals["max_solve_ms"] = a.max_solve_ms;
    return {{"scenario", r.scenario}, {"base_seed", r.base_seed}, {"trials", trials}, {"totals", totals}};
}

BatchReport report_from_json(const json& doc)
{
    BatchReport r;
    r.scenario = doc.at("scenario").get<std::string>();
    r.base_seed = doc.at("base_seed").get<std::uint64_t>();
    for (const json& j : doc.at("trials")) {
        TrialSummary t;
        t.seed = j.at("seed").get<std::uint64_t>();
        t.failed = j.at("failed").get<bool>();
        t.outcome = j.at("outcome").get<std::string>();
        t.fpe_cm = opt_from(j, "fpe_cm");
        t.touchdown_time = opt_from(j, "touchdown_time");
        t.min_h = opt_from(j, "min_h");
        t.all_converged = j.at("all_converged").get<bool>();
        t.mean_solve_ms = j.value("mean_solve_ms", 0.0);
        t.max_solve_ms = j.value("max_solve_ms", 0.0);
        r.trials.push_back(std::move(t));
    }
    const json& a = doc.at("totals");
    r.totals.trials = a.at("trials").get<int>();
    r.totals.successes = a.at("successes").get<int>();
    r.totals.success_rate = opt_from(a, "success_rate");
    r.totals.mean_fpe_cm = opt_from(a, "mean_fpe_cm");
    r.totals.max_fpe_cm = opt_from(a, "max_fpe_cm");
    r.totals.min_h = opt_from(a, "min_h");
    r.totals.max_solve_ms = a.value("max_solve_ms", 0.0);
    return r;
}

std::string render_table(const BatchReport& r)
{
    std::ostringstream out;
    char line[256];
    out << "scenario: " << r.scenario << "  base seed: " << r.base_seed << "  trials: " << r.totals.trials << "\n";
    std::snprintf(line, sizeof line, "%-8s %-9s %9s %11s %11s %9s %9s %9s\n", "seed", "outcome", "fpe_cm",
                  "touchdown_s", "min_h", "converged", "mean_ms", "max_ms");
    out << line;
    for (const auto& t : r.trials) {
        std::snprintf(line, sizeof line, "%-8llu %-9s %9s %11s %11s %9s %9.2f %9.2f\n",
                      static_cast<unsigned long long>(t.seed), t.outcome.c_str(), fixed(t.fpe_cm, 2).c_str(),
                      fixed(t.touchdown_time, 1).c_str(), sci(t.min_h).c_str(), t.all_converged ? "yes" : "no",
                      t.mean_solve_ms, t.max_solve_ms);
        out << line;
    }
    const BatchAggregates& a = r.totals;
    const std::string rate = a.success_rate ? fixed(100.0 * *a.success_rate, 1) + "%" : "n/a";
    out << "success: " << a.successes << "/" << a.trials << " (" << rate << ")\n";
    out << "mean FPE: " << fixed(a.mean_fpe_cm, 2) << " cm  max FPE: " << fixed(a.max_fpe_cm, 2) << " cm\n";
    out << "min h: " << sci(a.min_h) << "  max solve: " << fixed(a.max_solve_ms, 2) << " ms\n";
    return out.str();
}

void emit_report(const BatchReport& report, ReportFormat format, std::ostream& out)
{
    if (format == ReportFormat::Json)
        out << report_to_json(report, false).dump(2) << '\n';
    else
        out << render_table(report);
}

json trial_summary_json(const TrialLog& log)
{
    const TrialSummary s = summarize(log);
    json j = {{"seed", log.seed},
              {"outcome", std::string(to_string(log.outcome))},
              {"failure_reason", log.failure_reason},
              {"steps", log.steps.size()},
              {"fpe_cm", opt(s.fpe_cm)},
              {"min_h", opt(s.min_h)},
              {"all_converged", s.all_converged}};
    if (log.terminal) {
        const auto& t = *log.terminal;
        j["terminal"] = {{"touchdown_time", t.touchdown_time},
                         {"drone_position", {t.drone_position.x(), t.drone_position.y(), t.drone_position.z()}},
                         {"platform_position",
                          {t.platform_position.x(), t.platform_position.y(), t.platform_position.z()}}};
    } else {
        j["terminal"] = nullptr;
    }
    return j;
}

AcceptanceResult check_acceptance(const BatchReport& report, const AcceptanceBounds& bounds)
{
    AcceptanceResult res;
    auto fail = [&](std::string msg) {
        res.passed = false;
        res.failures.push_back(std::move(msg));
    };
    const BatchAggregates& a = report.totals;
    if (bounds.require_all_success && a.successes != a.trials)
        fail(std::to_string(a.trials - a.successes) + " of " + std::to_string(a.trials) + " trials failed");
    if (bounds.max_mean_fpe_cm) {
        if (!a.mean_fpe_cm)
            fail("no successful trial to compute a mean FPE");
        else if (*a.mean_fpe_cm > *bounds.max_mean_fpe_cm)
            fail("mean FPE " + fixed(a.mean_fpe_cm, 2) + " cm exceeds " + fixed(bounds.max_mean_fpe_cm, 2) + " cm");
    }
    if (bounds.min_barrier && a.min_h && *a.min_h < *bounds.min_barrier)
        fail("min h " + sci(a.min_h) + " below " + sci(bounds.min_barrier));
    return res;
}

}  // namespace lander
