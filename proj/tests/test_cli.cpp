// End-to-end runs of the gpi executable: exit codes, output and round trips.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "gpi/io.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code = -1;
    std::string out;
};

// Runs the CLI with stderr merged into stdout.
CliRun gpi_run(const std::string& args) {
    const char* exe = std::getenv("GPI_CLI");
    if (!exe) throw std::runtime_error("GPI_CLI is not set");
    const std::string cmd = std::string(exe) + " " + args + " 2>&1";
    CliRun r;
    FILE* p = popen(cmd.c_str(), "r");
    std::array<char, 4096> buf{};
    while (std::size_t n = fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("gpi_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

const std::string kSigma = "--sigma '[[1,0.5],[0.5,1]]'";

}  // namespace

TEST(Cli, UsageErrors) {
    EXPECT_EQ(gpi_run("").code, 1);
    EXPECT_EQ(gpi_run("frobnicate").code, 1);
    EXPECT_EQ(gpi_run("check-lower --nu 0.2,1").code, 1);
    EXPECT_EQ(gpi_run("check-lower --sigma '[[1,2],[2,1]]' --j 1 --nu 0.2,1").code, 1);
    EXPECT_EQ(gpi_run("check-lower " + kSigma + " --j 3 --nu 0.2,1").code, 1);
    EXPECT_EQ(gpi_run("check-lower --sigma '[[1,0.5],[0.5' --j 1 --nu 0.2,1").code, 1);
    EXPECT_EQ(gpi_run("check-amgm " + kSigma + " --j 1 --nu 0.2,0.2").code, 1);
    EXPECT_EQ(gpi_run("probe-open " + kSigma + " --j 1 --nu 0.2,0.7").code, 1);
}

TEST(Cli, MomentPrintsValueWithError) {
    const CliRun r = gpi_run("moment " + kSigma + " --j 1 --nu 0.25,1");
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("moment = 1.5050699"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("+/-"), std::string::npos);
}

TEST(Cli, LowerVerifiedAndGuard) {
    CliRun r = gpi_run("check-lower " + kSigma + " --j 1 --nu 0.25,1");
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("lower: verified"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("rhs    = 1.2900599"), std::string::npos) << r.out;

    r = gpi_run("check-lower " + kSigma + " --j 1 --nu 0.495,1");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("InvalidSpec"), std::string::npos) << r.out;
    r = gpi_run("check-lower " + kSigma + " --j 1 --nu 0.495,1 --force-delta 0.001");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("near_divergence: true"), std::string::npos) << r.out;
}

TEST(Cli, ProductFormViolationExitCode) {
    const CliRun r = gpi_run(
        "check-elliptical --sigma '[[1,0],[0,1]]' --radial constant:1 --f stepdown:0.5 --g stepup:0.8660254 "
        "--comparator product");
    EXPECT_EQ(r.code, 3) << r.out;
    EXPECT_NE(r.out.find("violation_candidate"), std::string::npos);
}

TEST(Cli, JsonRoundTripsThroughRegenerate) {
    const fs::path dir = scratch("regen");
    const CliRun r = gpi_run("check-upper " + kSigma +
                          " --j 1 --nu 0.3,0 --psi '{\"kind\":\"exp_linear\",\"weights\":[0.5]}' --json --seed 7");
    ASSERT_EQ(r.code, 0) << r.out;
    std::ofstream(dir / "v.json") << r.out;
    const CliRun again = gpi_run("regenerate --verdict " + (dir / "v.json").string() + " --json");
    EXPECT_EQ(again.code, 0);
    EXPECT_EQ(again.out, r.out);

    gpi::json tampered = gpi::json::parse(r.out);
    tampered["context"]["version"] = "9.9.9";
    std::ofstream(dir / "t.json") << tampered.dump();
    const CliRun bad = gpi_run("regenerate --verdict " + (dir / "t.json").string());
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.out.find("VersionMismatch"), std::string::npos);
}

TEST(Cli, SweepSummarizeRegenerate) {
    const fs::path dir = scratch("sweep");
    std::ofstream(dir / "c.json") << R"({"name": "s", "mode": "upper_amgm", "dims": [2, 3], "n_matrices": 2,
                                          "samples": 8192, "budget": 32768})";
    CliRun r = gpi_run("sweep --config " + (dir / "c.json").string() + " --out " + dir.string());
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(fs::exists(dir / "s.verdicts.jsonl"));
    EXPECT_TRUE(fs::exists(dir / "s.summary.csv"));
    EXPECT_TRUE(fs::exists(dir / "s.report.json"));

    r = gpi_run("summarize " + (dir / "s.verdicts.jsonl").string());
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out.rfind("mode,verdicts", 0), 0u) << r.out;
    EXPECT_NE(r.out.find("upper_amgm,4,"), std::string::npos) << r.out;

    r = gpi_run("regenerate --verdict " + (dir / "s.verdicts.jsonl").string() + " --instance 1");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_EQ(gpi_run("regenerate --verdict " + (dir / "s.verdicts.jsonl").string() + " --instance 9").code, 1);

    std::ofstream(dir / "bad.json") << R"({"mode": "lower", "bogus": 1})";
    r = gpi_run("sweep --config " + (dir / "bad.json").string() + " --out " + dir.string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("bogus"), std::string::npos);
    EXPECT_EQ(gpi_run("sweep --config " + (dir / "none.json").string()).code, 1);
}

TEST(Cli, SummarizeRejectsMixedModes) {
    const fs::path dir = scratch("mix");
    for (const char* mode : {"lower", "convex_order"})
        std::ofstream(dir / (std::string(mode) + ".json"))
            << R"({"name": ")" << mode << R"(", "mode": ")" << mode << R"(", "dims": [2], "n_matrices": 1})";
    for (const char* mode : {"lower", "convex_order"})
        ASSERT_EQ(gpi_run("sweep --config " + (dir / (std::string(mode) + ".json")).string() + " --out " + dir.string()).code,
                  0);
    const CliRun r = gpi_run("summarize " + (dir / "lower.verdicts.jsonl").string() + " " +
                          (dir / "convex_order.verdicts.jsonl").string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("ModeMixError"), std::string::npos) << r.out;
}

TEST(Cli, Selftest) {
    CliRun r = gpi_run("selftest");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("9/9 checks passed"), std::string::npos) << r.out;
    r = gpi_run("selftest --inject-fault gamma");
    EXPECT_EQ(r.code, 4);
    EXPECT_NE(r.out.find("FAIL  univariate_abs_moment"), std::string::npos) << r.out;
}
