// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Oracles below are independent of the library code paths
// they check (std::tgamma, a brute-force pairing enumerator, Gauss-Jordan).

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "gpi/bounds.hpp"
#include "gpi/harness.hpp"
#include "gpi/linalg.hpp"
#include "gpi/moments.hpp"
#include "gpi/random.hpp"

using namespace gpi;
namespace fs = std::filesystem;

namespace {

// E|Z|^a for Z ~ N(0, 1).
double abs_moment(double a) {
    return std::tgamma(0.5 * (a + 1.0)) * std::pow(2.0, 0.5 * a) / std::sqrt(std::numbers::pi);
}

double pairing_sum(const std::vector<std::size_t>& idx, const Matrix& s) {
    if (idx.empty()) return 1.0;
    double total = 0.0;
    for (std::size_t k = 1; k < idx.size(); ++k) {
        std::vector<std::size_t> rest;
        for (std::size_t m = 1; m < idx.size(); ++m)
            if (m != k) rest.push_back(idx[m]);
        total += s(idx[0], idx[k]) * pairing_sum(rest, s);
    }
    return total;
}

std::vector<std::vector<double>> gauss_jordan_inverse(std::vector<std::vector<double>> a) {
    const std::size_t n = a.size();
    std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t p = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
        std::swap(a[c], a[p]);
        std::swap(inv[c], inv[p]);
        const double piv = a[c][c];
        for (std::size_t k = 0; k < n; ++k) {
            a[c][k] /= piv;
            inv[c][k] /= piv;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == c) continue;
            const double f = a[r][c];
            for (std::size_t k = 0; k < n; ++k) {
                a[r][k] -= f * a[c][k];
                inv[r][k] -= f * inv[c][k];
            }
        }
    }
    return inv;
}

double rel_maxnorm(const Matrix& m, const Matrix& ref) { return (Matrix(m) -= ref).max_abs() / ref.max_abs(); }

// Random covariance: correlation matrix with per-coordinate scales in [0.5, 2].
CovMatrix random_cov(std::size_t d, std::uint64_t seed) {
    Matrix m = random_correlation(d, seed).entries();
    Rng rng(derive_seed(seed, 99));
    std::vector<double> sc(d);
    for (auto& v : sc) v = 0.5 + 1.5 * rng.uniform();
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) m(i, j) *= sc[i] * sc[j];
    return CovMatrix(symmetrized(m));
}

std::vector<std::size_t> random_proper_subset(Rng& rng, std::size_t d) {
    std::vector<std::size_t> j;
    for (std::size_t i = 0; i < d; ++i)
        if (rng.uniform() < 0.5) j.push_back(i);
    if (j.empty()) j.push_back(rng.uniform_index(d));
    if (j.size() == d) j.erase(j.begin() + static_cast<long>(rng.uniform_index(d)));
    return j;
}

std::string sci(double v) {
    std::ostringstream os;
    os.precision(2);
    os << std::scientific << v;
    return os.str();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

int cli_exit(const std::string& args) {
    const char* exe = std::getenv("GPI_CLI");
    if (!exe) return -1;
    const int status = std::system((std::string(exe) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// ---------------------------------------------------------------------------

Outcome closed_form_vs_quadrature() {
    double worst = 0.0;
    for (double nu : {0.05, 0.1, 0.25, 0.4, 0.45}) {
        const ExponentSpec spec(IndexPartition(1, {0}), {nu});
        const double q = s_representation_moment(CovMatrix(Matrix{{1.0}}), spec).value;
        worst = std::max(worst, std::abs(q / univariate_abs_moment(1.0, -nu) - 1.0));
    }
    return {worst <= 1e-6, "max rel err " + sci(worst)};
}

Outcome oracle_triangle() {
    Rng rng(2024);
    double worst_z = 0.0;
    std::size_t agree = 0;
    const std::size_t total = 30;
    for (std::size_t t = 0; t < total; ++t) {
        const std::size_t d = 2 + t % 2;
        const CovMatrix sigma = random_cov(d, 4000 + t);
        const IndexPartition part(d, random_proper_subset(rng, d));
        std::vector<double> nu(d);
        for (std::size_t j : part.j()) nu[j] = 0.02 + 0.18 * rng.uniform();
        for (std::size_t i : part.jc()) nu[i] = rng.uniform() < 0.5 ? 1.0 : 2.0;
        const ExponentSpec spec(part, nu);

        const MomentEstimate mc = mc_mixed_moment(sigma, spec, 1'000'000, derive_seed(77, t));
        const MomentEstimate quad = s_representation_moment(sigma, spec, InnerMethod::exact_wick);
        MomentOptions is_opt;
        is_opt.samples = 1 << 18;
        is_opt.force_importance = true;
        const MomentEstimate is = s_representation_moment(sigma, spec, InnerMethod::exact_wick, is_opt, derive_seed(78, t));

        const MomentEstimate* est[] = {&mc, &quad, &is};
        bool ok = true;
        for (int a = 0; a < 3; ++a)
            for (int b = a + 1; b < 3; ++b) {
                const double se = std::hypot(uncertainty(*est[a]), uncertainty(*est[b]));
                const double z = std::abs(est[a]->value - est[b]->value) / se;
                worst_z = std::max(worst_z, z);
                ok = ok && z <= 4.0;
            }
        agree += ok;
    }
    return {agree == total, std::to_string(agree) + "/" + std::to_string(total) +
                                " instances agree (MC n=1e6, s-quadrature, s-importance; Wick inner), max |z| " +
                                sci(worst_z)};
}

Outcome wick_correctness() {
    double worst = 0.0;
    for (std::size_t t = 0; t < 20; ++t) {
        const CovMatrix c = random_cov(3, 600 + t);
        const Matrix& s = c.entries();
        const int p2[] = {2, 2, 0};
        const int p3[] = {2, 2, 2};
        const double f2 = s(0, 0) * s(1, 1) + 2.0 * s(0, 1) * s(0, 1);
        const double b3 = pairing_sum({0, 0, 1, 1, 2, 2}, s);
        worst = std::max(worst, std::abs(wick_moment(s, p2) - f2) / std::abs(f2));
        worst = std::max(worst, std::abs(wick_moment(s, p3) - b3) / std::abs(b3));
        worst = std::max(worst, std::abs(pairing_sum({0, 0, 1, 1}, s) - f2) / std::abs(f2));
    }
    return {worst <= 1e-12, "20 matrices, max rel err " + sci(worst)};
}

Outcome block_algebra() {
    Rng rng(31);
    double worst_inv = 0.0, worst_id = 0.0;
    for (std::size_t t = 0; t < 100; ++t) {
        const std::size_t d = 2 + t % 11;
        const CovMatrix s = random_cov(d, 7000 + t);
        const IndexPartition part(d, random_proper_subset(rng, d));
        const Matrix gj = Matrix::from_rows(gauss_jordan_inverse(s.entries().to_rows()));
        const Matrix bi = block_inverse(s, part);
        const Matrix b2 = block_inverse_variant2(s.entries(), part);
        const Matrix dense = general_inverse(s.entries());
        worst_inv = std::max({worst_inv, rel_maxnorm(bi, gj), rel_maxnorm(b2, gj), rel_maxnorm(dense, gj),
                              rel_maxnorm(bi, b2)});
        for (const Matrix* inv : {&bi, &b2, &dense})
            worst_id = std::max(worst_id, (s.entries() * *inv - Matrix::identity(d)).max_abs());
    }
    return {worst_inv <= 1e-9 && worst_id <= 1e-10,
            "100 matrices d<=12, max rel diff " + sci(worst_inv) + ", max |S S^-1 - I| " + sci(worst_id)};
}

Outcome theorem_sweeps() {
    std::string detail;
    bool pass = true;
    double total_time = 0.0;
    for (const char* mode : {"lower", "upper_convex", "upper_amgm", "convex_order", "elliptical"}) {
        const SweepConfig c = load_sweep_config(fs::path(GPI_SOURCE_DIR) / "configs" / (std::string(mode) + ".json"));
        if (c.dims != std::vector<std::size_t>{2, 3, 4} || c.n_matrices != 50 || c.samples != SweepConfig{}.samples ||
            c.budget != SweepConfig{}.budget)
            return {false, std::string("configs/") + mode + ".json is not the default [2,3,4] x 50 setup"};
        const SweepReport r = run_sweep(c);
        const auto& s = r.summary;
        bool proven = true;
        if (c.mode == SweepMode::lower)
            for (const auto& e : r.entries)
                if (e.verdict && e.verdict->flags.at("gpi_proven") != "true") proven = false;
        const bool ok = s.violation_candidate == 0 && s.errors == 0 && s.verdicts == 150 &&
                        20 * s.verified >= 19 * s.verdicts && proven;
        pass = pass && ok;
        total_time += r.wall_time_seconds;
        detail += std::string(detail.empty() ? "" : "; ") + mode + " " + std::to_string(s.verified) + "/" +
                  std::to_string(s.verdicts) + " verified, " + std::to_string(s.violation_candidate) + " violations";
        if (s.errors) detail += ", " + std::to_string(s.errors) + " errors";
        if (!proven) detail += ", conjectural instances present";
    }
    return {pass && total_time < 1200.0, detail};
}

Outcome special_case_recovery() {
    Rng rng(5);
    double worst = 0.0;
    for (std::size_t t = 0; t < 20; ++t) {
        const std::size_t d = 2 + t % 4;
        const CovMatrix s = random_cov(d, 800 + t);
        const double nu1 = 0.02 + 0.43 * rng.uniform();
        std::vector<double> nu(d, 1.0);
        nu[0] = nu1;
        const double rhs = lower_bound_rhs(s, ExponentSpec(IndexPartition(d, {0}), nu)).value;
        double explicit_form = std::pow(s(0, 0), -nu1) * abs_moment(-2.0 * nu1);
        for (std::size_t i = 1; i < d; ++i)
            explicit_form *= s(i, i) * (1.0 - s(0, i) * s(0, i) / (s(0, 0) * s(i, i)));
        worst = std::max(worst, std::abs(rhs / explicit_form - 1.0));
    }
    return {worst <= 1e-9, "20 matrices, max rel err " + sci(worst)};
}

Outcome loewner_chain() {
    Rng rng(17);
    std::size_t ok = 0;
    double worst_gap = 0.0;
    for (std::size_t t = 0; t < 50; ++t) {
        const std::size_t d = 2 + t % 5;
        const CovMatrix s = random_cov(d, 900 + t);
        const IndexPartition part(d, random_proper_subset(rng, d));
        std::vector<double> sv;
        for (std::size_t k = 0; k < part.j().size(); ++k) sv.push_back(std::exp(-6.0 + 12.0 * rng.uniform()));
        const CovMatrix y = transformed_covariance(s, part, SVector(sv));
        const Matrix schur = schur_complement(s, part);
        bool good = loewner_leq(y.entries(), s.entries());
        for (std::size_t a = 0; a < part.jc().size(); ++a) {
            const std::size_t i = part.jc()[a];
            const double gap = schur(a, a) - y(i, i);
            worst_gap = std::max(worst_gap, gap);
            good = good && gap <= 1e-12;
        }
        ok += good;
    }
    return {ok == 50, std::to_string(ok) + "/50 hold, max (Schur - Var) " + sci(worst_gap)};
}

Outcome pointwise_H() {
    const std::vector<MonotoneFn> fs = {MonotoneFn(MonotoneFn::Kind::constant, 1.0), MonotoneFn(MonotoneFn::Kind::exp_decay, 0.8),
                                        MonotoneFn(MonotoneFn::Kind::inverse_power, 1.5),
                                        MonotoneFn(MonotoneFn::Kind::step_down, 0.7)};
    const std::vector<MonotoneFn> gs = {MonotoneFn(MonotoneFn::Kind::constant, 2.0), MonotoneFn(MonotoneFn::Kind::power, 1.3),
                                        MonotoneFn(MonotoneFn::Kind::min_cap, 0.9),
                                        MonotoneFn(MonotoneFn::Kind::step_up, 0.6)};
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < 10; ++t) {
        const CovMatrix s = random_cov(2, 1100 + t);
        for (const auto& f : fs)
            for (const auto& g : gs)
                for (int k = 0; k < 1024; ++k) {
                    const double th = 2.0 * std::numbers::pi * k / 1024.0;
                    const double u[] = {std::cos(th), std::sin(th)};
                    worst = std::max(worst, elliptical_pointwise_H(s, u, f, g));
                }
    }
    return {worst <= 1e-12, "10 matrices x 16 (f,g) pairs x 1024 points, max H " + sci(worst)};
}

Outcome determinism() {
    std::size_t checked = 0, identical = 0;
    const fs::path base = fs::temp_directory_path() / "gpi_acceptance_determinism";
    bool reports_equal = true;
    for (SweepMode mode : {SweepMode::lower, SweepMode::upper_convex, SweepMode::upper_amgm, SweepMode::open_probe,
                           SweepMode::elliptical, SweepMode::convex_order}) {
        SweepConfig c;
        c.name = std::string(to_string(mode));
        c.mode = mode;
        c.dims = {2, 3, 4};
        c.n_matrices = 3;
        fs::remove_all(base);
        run_sweep(c, base / "a", 1);
        run_sweep(c, base / "b", 4);
        const auto pa = sweep_paths(base / "a", c.name), pb = sweep_paths(base / "b", c.name);
        auto slurp = [](const fs::path& p) {
            std::ifstream in(p);
            std::stringstream ss;
            ss << in.rdbuf();
            return ss.str();
        };
        json ra = json::parse(slurp(pa.report)), rb = json::parse(slurp(pb.report));
        ra.erase("wall_time_seconds");
        rb.erase("wall_time_seconds");
        reports_equal = reports_equal && ra == rb && slurp(pa.verdicts) == slurp(pb.verdicts) &&
                        slurp(pa.summary) == slurp(pb.summary);
        const auto lines = read_verdict_lines(pa.verdicts);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            json orig = lines[i];
            if (orig.at("decision") == "error") continue;
            for (const char* k : {"instance", "d", "mode"}) orig.erase(k);
            ++checked;
            identical += verdict_to_json(regenerate_from_file(pa.verdicts, i)).dump() == orig.dump();
        }
    }
    fs::remove_all(base);
    return {reports_equal && checked > 0 && identical == checked,
            std::to_string(identical) + "/" + std::to_string(checked) +
                " regenerated verdicts bit-identical; sweep reports " + (reports_equal ? "identical" : "DIFFER") +
                " across thread counts (timing excluded)"};
}

Outcome guard_behavior() {
    const CovMatrix s{{1.0, 0.4, 0.1}, {0.4, 1.0, 0.2}, {0.1, 0.2, 1.0}};
    std::size_t rejected = 0, accepted = 0, flagged = 0, total = 0;
    for (double nu : {0.4901, 0.493, 0.497, 0.4995}) {
        ++total;
        try {
            ExponentSpec(IndexPartition(3, {0}), {nu, 1.0, 0.5});
        } catch (const Error& e) {
            rejected += e.kind() == ErrorKind::InvalidSpec;
        }
        const ExponentSpec forced(IndexPartition(3, {0}), {nu, 1.0, 0.5}, 0.5 - nu - 1e-5);
        const BoundVerdict v = check_lower_bound(s, forced, {}, 1);
        ++accepted;
        flagged += v.flags.count("near_divergence") && v.flags.at("near_divergence") == "true" &&
                   v.lhs.diagnostics.count("near_divergence");
    }
    std::string cli = "CLI not checked";
    bool cli_ok = true;
    if (std::getenv("GPI_CLI")) {
        const std::string base = "check-lower --sigma '[[1,0.4],[0.4,1]]' --j 1 --nu 0.495,1";
        const int plain = cli_exit(base), forced = cli_exit(base + " --force-delta 0.001");
        cli_ok = plain == 1 && forced == 0;
        cli = "CLI exit " + std::to_string(plain) + " default, " + std::to_string(forced) + " with --force-delta";
    }
    return {rejected == total && accepted == total && flagged == total && cli_ok,
            std::to_string(rejected) + "/" + std::to_string(total) + " rejected by default, " + std::to_string(flagged) +
                "/" + std::to_string(total) + " accepted with near_divergence diagnostics; " + cli};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
        double time_limit;
    };
    const Criterion criteria[] = {
        {"closed form vs s-quadrature (d=1)", closed_form_vs_quadrature, 1.0},
        {"oracle triangle", oracle_triangle, 300.0},
        {"Wick correctness", wick_correctness, 60.0},
        {"block algebra", block_algebra, 60.0},
        {"theorem sweeps", theorem_sweeps, 1200.0},
        {"special-case recovery", special_case_recovery, 60.0},
        {"Loewner / convex-order chain", loewner_chain, 60.0},
        {"pointwise H <= 0", pointwise_H, 60.0},
        {"determinism", determinism, 600.0},
        {"guard behavior", guard_behavior, 60.0},
    };
    int failed = 0, index = 0;
    for (const auto& c : criteria) {
        ++index;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (secs > c.time_limit) {
            o.pass = false;
            o.detail += "; exceeded time limit";
        }
        failed += !o.pass;
        std::printf("%s  [%d] %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", index, c.name, o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("acceptance: %d/%d criteria passed\n", index - failed, index);
    return failed == 0 ? 0 : 1;
}
