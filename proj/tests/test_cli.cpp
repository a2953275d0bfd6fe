#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "illiquid/cli.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kRef = std::string(SAMPLES_DIR) + "/reference.toml";

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "illiquid");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream o, e;
    const int code = illiquid::cli::run(int(argv.size()), argv.data(), o, e);
    return {code, o.str(), e.str()};
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("illiquid_test_" + name);
    fs::remove_all(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST(Cli, SolveWritesArtifacts) {
    const auto d = fresh_dir("solve");
    const auto r = run({"solve", "--params", kRef, "--out", d.string()});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(d / "solution.csv"));
    EXPECT_TRUE(fs::exists(d / "summary.json"));
    const auto man = nlohmann::json::parse(slurp(d / "manifest.json"));
    EXPECT_EQ(man["params"]["p"], 0.5);
    EXPECT_TRUE(man.contains("settings"));
}

TEST(Cli, DeltaBelowThresholdIsUserError) {
    const auto d = fresh_dir("delta");
    const auto r = run({"solve", "--params", kRef, "--set", "delta=0.01", "--out", d.string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("delta"), std::string::npos) << r.err;
}

TEST(Cli, UnreachableToleranceIsNumericalFailure) {
    const auto d = fresh_dir("tol");
    const auto r = run({"solve", "--params", kRef, "--tol", "1e-18", "--out", d.string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("ToleranceNotMet"), std::string::npos) << r.err;
}

TEST(Cli, BadConfigIsUserError) {
    const auto d = fresh_dir("cfg");
    EXPECT_EQ(run({"solve", "--params", kRef, "--set", "bogus=1", "--out", d.string()}).code, 1);
    EXPECT_EQ(run({"solve", "--params", kRef, "--set", "mu1=abc", "--out", d.string()}).code, 1);
    EXPECT_EQ(run({"solve", "--params", "/nonexistent.toml"}).code, 1);
    EXPECT_EQ(run({"frobnicate"}).code, 1);
}

TEST(Cli, PolicyAndAsymptotics) {
    const auto d = fresh_dir("policy");
    EXPECT_EQ(run({"policy", "--params", kRef, "--out", d.string()}).code, 0);
    const auto j = nlohmann::json::parse(slurp(d / "policy.json"));
    for (const char* k : {"x_lo", "x_hi", "x_hat", "pi_lo", "pi_hi", "value", "zeta0", "zeta1", "initial_trade"})
        EXPECT_TRUE(j.contains(k)) << k;
    EXPECT_EQ(j["initial_trade"]["kind"], "buy");
    EXPECT_EQ(run({"asymptotics", "--params", kRef, "--out", d.string()}).code, 0);
    EXPECT_TRUE(fs::exists(d / "asymptotics.json"));
}

TEST(Cli, SweepFitAndEdgeCases) {
    const auto d = fresh_dir("sweep");
    auto r = run({"sweep", "--params", kRef, "--lambdas", "1e-4,1e-3,1e-2", "--out", d.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto pos = r.out.find("# slope=");
    ASSERT_NE(pos, std::string::npos);
    const double slope = std::stod(r.out.substr(pos + 8));
    EXPECT_GE(slope, 0.31);
    EXPECT_LE(slope, 0.36);

    r = run({"sweep", "--params", kRef, "--lambdas", "1e-3", "--out", d.string()});
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out.find("# slope="), std::string::npos);
    std::istringstream rows(r.out);
    std::string line;
    int n = 0;
    while (std::getline(rows, line)) n += !line.empty() && line[0] != '#';
    EXPECT_EQ(n, 2); // header + one row

    EXPECT_EQ(run({"sweep", "--params", kRef, "--out", d.string()}).code, 1);
}

TEST(Cli, SimulateZeroPathsIsUserError) {
    const auto d = fresh_dir("zero");
    EXPECT_EQ(run({"simulate", "--params", kRef, "--paths", "0", "--out", d.string()}).code, 1);
}

TEST(Cli, SimulateDefaultPassesAndIsReproducible) {
    const auto a = fresh_dir("sim_a"), b = fresh_dir("sim_b");
    const auto ra = run({"simulate", "--params", kRef, "--out", a.string()});
    EXPECT_EQ(ra.code, 0) << ra.err;
    const auto rb = run({"simulate", "--params", kRef, "--threads", "3", "--out", b.string()});
    EXPECT_EQ(rb.code, 0) << rb.err;
    EXPECT_EQ(slurp(a / "simulation.json"), slurp(b / "simulation.json"));
    const auto j = nlohmann::json::parse(slurp(a / "simulation.json"));
    for (const char* k : {"g_estimate", "g_target", "stderr", "budget_rms", "adm_min"})
        EXPECT_TRUE(j.contains(k)) << k;
}

TEST(Cli, PathDump) {
    const auto d = fresh_dir("dump");
    const auto r = run({"simulate", "--params", kRef, "--paths", "20", "--horizon", "100", "--steps", "1000", "--dump",
                        "2", "--out", d.string()});
    EXPECT_NE(r.code, 1) << r.err;
    std::ifstream in(d / "paths.csv");
    std::string line;
    int n = 0;
    while (std::getline(in, line)) ++n;
    EXPECT_EQ(n, 1 + 2 * 1001);
}
