// Sweep configuration, execution, summaries and regeneration.

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "gpi/harness.hpp"

using namespace gpi;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("gpi_harness_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no exception";
    return ErrorKind::DomainError;
}

SweepConfig small(SweepMode mode, const std::string& name) {
    SweepConfig c;
    c.name = name;
    c.mode = mode;
    c.dims = {2, 3};
    c.n_matrices = 3;
    c.samples = 1 << 13;
    c.budget = 1 << 15;
    return c;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
    SweepConfig c = small(SweepMode::upper_amgm, "rt");
    c.nu_jc = {0.1, 2.0};
    c.comparator = EllipticalComparator::product;
    const SweepConfig back = sweep_config_from_json(sweep_config_to_json(c));
    EXPECT_EQ(sweep_config_to_json(back).dump(), sweep_config_to_json(c).dump());
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    EXPECT_EQ(kind_of([] { sweep_config_from_json(json{{"mode", "lower"}, {"n_matrix", 3}}); }), ErrorKind::ConfigError);
    EXPECT_EQ(kind_of([] { sweep_config_from_json(json{{"mode", "sideways"}}); }), ErrorKind::ConfigError);
    EXPECT_EQ(kind_of([] { sweep_config_from_json(json{{"dims", {1}}}); }), ErrorKind::ConfigError);
    EXPECT_EQ(kind_of([] { sweep_config_from_json(json{{"nu_j", {0.1, 0.6}}}); }), ErrorKind::ConfigError);
    EXPECT_EQ(kind_of([] { sweep_config_from_json(json{{"samples", "many"}}); }), ErrorKind::ConfigError);
    EXPECT_EQ(kind_of([] { load_sweep_config("/nonexistent/config.json"); }), ErrorKind::ConfigError);
}

TEST(Config, ShippedConfigsParse) {
    const fs::path dir = fs::path(GPI_SOURCE_DIR) / "configs";
    std::size_t n = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() != ".json") continue;
        EXPECT_NO_THROW(load_sweep_config(entry.path())) << entry.path();
        ++n;
    }
    EXPECT_GT(n, 0u);
}

TEST(Sweep, EmptySweep) {
    const fs::path dir = scratch("empty");
    SweepConfig c = small(SweepMode::lower, "empty");
    c.n_matrices = 0;
    const SweepReport r = run_sweep(c, dir);
    EXPECT_TRUE(r.entries.empty());
    EXPECT_EQ(r.summary.verdicts, 0u);
    const auto paths = sweep_paths(dir, "empty");
    EXPECT_EQ(slurp(paths.verdicts), "");
    EXPECT_EQ(slurp(paths.summary), std::string(kSummaryHeader) + "\n");
    EXPECT_EQ(summary_csv({}), std::string(kSummaryHeader) + "\n");
}

TEST(Sweep, LowerSmallAllVerified) {
    const SweepReport r = run_sweep(small(SweepMode::lower, "lower"));
    EXPECT_EQ(r.summary.verdicts, 6u);
    EXPECT_EQ(r.summary.violation_candidate, 0u);
    EXPECT_EQ(r.summary.errors, 0u);
    EXPECT_GE(r.summary.verified, 5u);
    for (const auto& e : r.entries) {
        ASSERT_TRUE(e.verdict.has_value());
        EXPECT_EQ(e.verdict->flags.at("gpi_proven"), "true");
    }
}

TEST(Sweep, OutputsAndDeterminism) {
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    const SweepConfig c = small(SweepMode::upper_convex, "det");
    run_sweep(c, a, 1);
    run_sweep(c, b, 2);
    const auto pa = sweep_paths(a, "det"), pb = sweep_paths(b, "det");
    EXPECT_EQ(slurp(pa.verdicts), slurp(pb.verdicts));
    EXPECT_EQ(slurp(pa.summary), slurp(pb.summary));
    json ra = json::parse(slurp(pa.report)), rb = json::parse(slurp(pb.report));
    ra.erase("wall_time_seconds");
    rb.erase("wall_time_seconds");
    EXPECT_EQ(ra.dump(), rb.dump());
    const auto lines = read_verdict_lines(pa.verdicts);
    ASSERT_EQ(lines.size(), 6u);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        EXPECT_EQ(lines[i].at("instance").get<std::size_t>(), i);
        EXPECT_EQ(lines[i].at("mode"), "upper_convex");
    }
}

TEST(Sweep, ModeMixRejected) {
    const auto lower = run_sweep(small(SweepMode::lower, "m1"));
    const auto amgm = run_sweep(small(SweepMode::upper_amgm, "m2"));
    std::vector<json> lines;
    for (const auto& e : lower.entries) lines.push_back(entry_to_json(e, SweepMode::lower));
    EXPECT_NO_THROW(summary_csv(lines));
    for (const auto& e : amgm.entries) lines.push_back(entry_to_json(e, SweepMode::upper_amgm));
    EXPECT_EQ(kind_of([&] { summary_csv(lines); }), ErrorKind::ModeMixError);
}

TEST(Sweep, AllModesRunWithoutErrors) {
    for (SweepMode mode : {SweepMode::upper_amgm, SweepMode::open_probe, SweepMode::elliptical, SweepMode::convex_order}) {
        const SweepReport r = run_sweep(small(mode, "all"));
        EXPECT_EQ(r.summary.errors, 0u) << to_string(mode);
        if (theorem_true(mode)) EXPECT_EQ(r.summary.violation_candidate, 0u) << to_string(mode);
    }
}

TEST(Regenerate, FromFileIsBitIdentical) {
    const fs::path dir = scratch("regen");
    run_sweep(small(SweepMode::upper_amgm, "regen"), dir);
    const auto path = sweep_paths(dir, "regen").verdicts;
    const auto lines = read_verdict_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        json again = verdict_to_json(regenerate_from_file(path, i));
        json orig = lines[i];
        for (const char* k : {"instance", "d", "mode"}) orig.erase(k);
        EXPECT_EQ(again.dump(), orig.dump()) << "instance " << i;
    }
    EXPECT_EQ(kind_of([&] { regenerate_from_file(path, lines.size()); }), ErrorKind::NotFound);
    EXPECT_EQ(kind_of([&] { regenerate_from_file(dir / "missing.jsonl", 0); }), ErrorKind::NotFound);
}

TEST(Regenerate, TamperedSeedChangesValues) {
    const auto r = run_sweep(small(SweepMode::convex_order, "tamper"));
    json rec = entry_to_json(r.entries.front(), SweepMode::convex_order);
    rec["context"]["seed"] = rec["context"]["seed"].get<std::uint64_t>() + 1;
    const json again = verdict_to_json(regenerate(rec));
    EXPECT_NE(again.at("lhs").at("value"), rec.at("lhs").at("value"));
}

TEST(Summary, CountsMatchEntries) {
    const auto r = run_sweep(small(SweepMode::elliptical, "count"));
    std::vector<json> lines;
    for (const auto& e : r.entries) lines.push_back(entry_to_json(e, SweepMode::elliptical));
    const SweepSummary s = summarize_verdicts(lines);
    EXPECT_EQ(s.verdicts, r.entries.size());
    EXPECT_EQ(s.verified + s.inconclusive + s.violation_candidate + s.errors, s.verdicts);
    const std::string csv = summary_csv(lines);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
    EXPECT_EQ(csv.substr(csv.find('\n') + 1, 11), "elliptical,");
}
