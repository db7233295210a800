#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int lander(const std::string& args)
{
    const std::string cmd = std::string(LANDER_BIN) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string scenario(const std::string& name)
{
    return std::string(LANDER_SCENARIO_DIR) + "/" + name + ".json";
}

fs::path scratch_dir(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("lander_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST(Cli, ValidateAcceptsShippedScenario)
{
    EXPECT_EQ(lander("validate --scenario " + scenario("dynamic_obstacle")), 0);
}

TEST(Cli, InvalidConfigurationExitsTwo)
{
    const fs::path dir = scratch_dir("invalid");
    const fs::path bad = dir / "bad.json";
    std::ofstream(bad) << R"({"nmpc": {"horizon": 0}})";
    EXPECT_EQ(lander("validate --scenario " + bad.string()), 2);
    EXPECT_EQ(lander("run --scenario " + bad.string() + " --trials 1 --seed 1 --out " + (dir / "o").string()), 2);

    const fs::path broken = dir / "broken.json";
    std::ofstream(broken) << "{ not json";
    EXPECT_EQ(lander("validate --scenario " + broken.string()), 2);
    EXPECT_EQ(lander("validate --scenario " + (dir / "missing.json").string()), 2);
    EXPECT_EQ(lander("run --scenario " + scenario("static_clear") + " --trials 1 --seed 1 --out " + dir.string()
                     + " --noise extreme"),
              2);
    EXPECT_EQ(lander("run --scenario " + scenario("static_clear") + " --trials 1"), 2);
    EXPECT_EQ(lander("frobnicate"), 2);
    fs::remove_all(dir);
}

TEST(Cli, RunWritesEveryArtifact)
{
    const fs::path dir = scratch_dir("run");
    EXPECT_EQ(lander("run --scenario " + scenario("static_clear") + " --trials 2 --seed 5 --format json --assert --out "
                     + dir.string()),
              0);
    for (const char* f : {"trial_5.csv", "trial_5.json", "trial_6.csv", "trial_6.json", "report.json", "report.txt"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;

    std::ifstream in(dir / "report.json");
    const nlohmann::json report = nlohmann::json::parse(in);
    EXPECT_EQ(report.at("base_seed"), 5);
    EXPECT_EQ(report.at("totals").at("successes"), 2);
    EXPECT_FALSE(report.at("totals").contains("max_solve_ms"));
    fs::remove_all(dir);
}

TEST(Cli, AssertFailsOnUnmetBound)
{
    const fs::path dir = scratch_dir("assert");
    const fs::path strict = dir / "strict.json";
    std::ofstream(strict) << R"({"name": "strict", "initial_state": {"position": [-1.0, 0.0, 1.3]},
                                 "platform": {"top_height": 0.3}, "timeout": 1.0})";
    EXPECT_EQ(lander("run --scenario " + strict.string() + " --trials 1 --seed 1 --assert --out " + dir.string()), 1);
    fs::remove_all(dir);
}

TEST(Cli, CheckGradientsPasses)
{
    EXPECT_EQ(lander("check-gradients --scenario " + scenario("static_obstacle") + " --points 5"), 0);
}
