#pragma once

// Randomized sweeps over (d, Sigma, exponents), report persistence
// (<name>.verdicts.jsonl, <name>.summary.csv, <name>.report.json),
// regeneration of single verdicts and summaries.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gpi/bounds.hpp"
#include "gpi/error.hpp"
#include "gpi/io.hpp"
#include "gpi/moments.hpp"
#include "gpi/random.hpp"

namespace gpi {

enum class SweepMode { lower, upper_convex, upper_amgm, open_probe, elliptical, convex_order };

inline std::string_view to_string(SweepMode m) {
    switch (m) {
        case SweepMode::lower: return "lower";
        case SweepMode::upper_convex: return "upper_convex";
        case SweepMode::upper_amgm: return "upper_amgm";
        case SweepMode::open_probe: return "open_probe";
        case SweepMode::elliptical: return "elliptical";
        case SweepMode::convex_order: return "convex_order";
    }
    return "unknown";
}

inline SweepMode parse_sweep_mode(std::string_view s) {
    for (SweepMode m : {SweepMode::lower, SweepMode::upper_convex, SweepMode::upper_amgm, SweepMode::open_probe,
                        SweepMode::elliptical, SweepMode::convex_order})
        if (to_string(m) == s) return m;
    throw Error(ErrorKind::ConfigError, "unknown sweep mode '" + std::string(s) + "'");
}

/// Every mode except the open probe checks a proven statement.
inline bool theorem_true(SweepMode m) { return m != SweepMode::open_probe; }

struct Range {
    double lo;
    double hi;
};

struct SweepConfig {
    std::string name = "sweep";
    SweepMode mode = SweepMode::lower;
    std::vector<std::size_t> dims = {2, 3};
    std::size_t n_matrices = 10;
    std::uint64_t master_seed = 1;
    double condition_cap = kDefaultConditionCap;
    std::size_t samples = std::size_t{1} << 15;  // initial samples per verdict
    std::size_t budget = std::size_t{1} << 18;   // escalation cap
    double rel_tol = 1e-8;
    Range nu_j{0.05, 0.49};
    Range nu_jc{0.05, 3.0};
    double boundary_fraction = 0.2;  // share of nu_J draws in [0.4, 0.49]
    std::size_t j_min = 1;
    std::size_t j_max = 0;  // 0: d - 1
    bool proven_only = true;
    LowerForm lower_form = LowerForm::theorem;
    bool triage = true;
    double delta_min = kDefaultDeltaMin;
    EllipticalComparator comparator = EllipticalComparator::spherical;
    std::vector<double> rho_grid;  // open_probe: bivariate instances at these correlations
    std::vector<double> fixed_nu;  // optional exponents used for every instance

    void validate() const {
        auto fail = [](const std::string& m) { throw Error(ErrorKind::ConfigError, m); };
        if (name.empty() || name.find('/') != std::string::npos) fail("name must be a plain file stem");
        for (std::size_t d : dims)
            if (d < 2 || d > 12) fail("dims must lie in [2, 12]");
        if (mode == SweepMode::elliptical)
            for (std::size_t d : dims)
                if (d < 2) fail("elliptical mode needs d >= 2");
        if (samples < 1000 || budget < samples) fail("need 1000 <= samples <= budget");
        if (!(rel_tol > 0.0 && rel_tol < 1e-2)) fail("rel_tol must lie in (0, 1e-2)");
        if (!(nu_j.lo >= 0.0 && nu_j.lo <= nu_j.hi && nu_j.hi <= 0.49)) fail("nu_j range must lie in [0, 0.49]");
        if (!(nu_jc.lo > 0.0 && nu_jc.lo <= nu_jc.hi && nu_jc.hi <= 3.0)) fail("nu_jc range must lie in (0, 3]");
        if (!(boundary_fraction >= 0.0 && boundary_fraction <= 1.0)) fail("boundary_fraction must lie in [0, 1]");
        if (j_min < 1) fail("j_min must be >= 1");
        if (j_max != 0 && j_max < j_min) fail("j_max must be >= j_min");
        if (!(condition_cap > 1.0)) fail("condition_cap must exceed 1");
        if (!(delta_min >= 0.0 && delta_min < 0.5)) fail("delta_min must lie in [0, 1/2)");
        for (double r : rho_grid)
            if (!(std::abs(r) < 1.0)) fail("rho_grid values must lie in (-1, 1)");
        if (!rho_grid.empty() && mode != SweepMode::open_probe) fail("rho_grid is only meaningful for open_probe");
    }
};

inline json sweep_config_to_json(const SweepConfig& c) {
    return {{"name", c.name},
            {"mode", std::string(to_string(c.mode))},
            {"dims", c.dims},
            {"n_matrices", c.n_matrices},
            {"master_seed", c.master_seed},
            {"condition_cap", c.condition_cap},
            {"samples", c.samples},
            {"budget", c.budget},
            {"rel_tol", c.rel_tol},
            {"nu_j", {c.nu_j.lo, c.nu_j.hi}},
            {"nu_jc", {c.nu_jc.lo, c.nu_jc.hi}},
            {"boundary_fraction", c.boundary_fraction},
            {"j_min", c.j_min},
            {"j_max", c.j_max},
            {"proven_only", c.proven_only},
            {"lower_form", std::string(to_string(c.lower_form))},
            {"triage", c.triage},
            {"delta_min", c.delta_min},
            {"comparator", std::string(to_string(c.comparator))},
            {"rho_grid", c.rho_grid},
            {"fixed_nu", c.fixed_nu}};
}

/// Parses a SweepConfig; unknown keys are rejected.
inline SweepConfig sweep_config_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorKind::ConfigError, "config must be a JSON object");
    static const std::set<std::string> known = {
        "name", "mode", "dims", "n_matrices", "master_seed", "condition_cap", "samples", "budget", "rel_tol", "nu_j",
        "nu_jc", "boundary_fraction", "j_min", "j_max", "proven_only", "lower_form", "triage", "delta_min",
        "comparator", "rho_grid", "fixed_nu"};
    for (const auto& [k, v] : j.items())
        if (!known.contains(k)) throw Error(ErrorKind::ConfigError, "unknown config key '" + k + "'");
    SweepConfig c;
    try {
        auto range = [](const json& r) {
            const auto v = r.get<std::vector<double>>();
            if (v.size() != 2) throw Error(ErrorKind::ConfigError, "ranges are [lo, hi]");
            return Range{v[0], v[1]};
        };
        if (j.contains("name")) c.name = j.at("name").get<std::string>();
        if (j.contains("mode")) c.mode = parse_sweep_mode(j.at("mode").get<std::string>());
        if (j.contains("dims")) c.dims = j.at("dims").get<std::vector<std::size_t>>();
        if (j.contains("n_matrices")) c.n_matrices = j.at("n_matrices").get<std::size_t>();
        if (j.contains("master_seed")) c.master_seed = j.at("master_seed").get<std::uint64_t>();
        if (j.contains("condition_cap")) c.condition_cap = j.at("condition_cap").get<double>();
        if (j.contains("samples")) c.samples = j.at("samples").get<std::size_t>();
        if (j.contains("budget")) c.budget = j.at("budget").get<std::size_t>();
        if (j.contains("rel_tol")) c.rel_tol = j.at("rel_tol").get<double>();
        if (j.contains("nu_j")) c.nu_j = range(j.at("nu_j"));
        if (j.contains("nu_jc")) c.nu_jc = range(j.at("nu_jc"));
        if (j.contains("boundary_fraction")) c.boundary_fraction = j.at("boundary_fraction").get<double>();
        if (j.contains("j_min")) c.j_min = j.at("j_min").get<std::size_t>();
        if (j.contains("j_max")) c.j_max = j.at("j_max").get<std::size_t>();
        if (j.contains("proven_only")) c.proven_only = j.at("proven_only").get<bool>();
        if (j.contains("lower_form")) c.lower_form = parse_lower_form(j.at("lower_form").get<std::string>());
        if (j.contains("triage")) c.triage = j.at("triage").get<bool>();
        if (j.contains("delta_min")) c.delta_min = j.at("delta_min").get<double>();
        if (j.contains("comparator")) c.comparator = parse_comparator(j.at("comparator").get<std::string>());
        if (j.contains("rho_grid")) c.rho_grid = j.at("rho_grid").get<std::vector<double>>();
        if (j.contains("fixed_nu")) c.fixed_nu = j.at("fixed_nu").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ConfigError, std::string("invalid config value: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::ConfigError) throw;
        throw Error(ErrorKind::ConfigError, e.what());
    }
    c.validate();
    return c;
}

inline SweepConfig load_sweep_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ConfigError, "cannot open config file '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::ConfigError, std::string("config is not valid JSON: ") + e.what());
    }
    return sweep_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Instance sampling

namespace detail {

inline double uniform_in(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

inline std::vector<std::size_t> sample_subset(Rng& rng, std::size_t d, std::size_t size) {
    std::vector<std::size_t> all(d);
    for (std::size_t i = 0; i < d; ++i) all[i] = i;
    for (std::size_t i = 0; i < size; ++i) std::swap(all[i], all[i + rng.uniform_index(d - i)]);
    std::vector<std::size_t> out(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(size));
    std::sort(out.begin(), out.end());
    return out;
}

inline double sample_nu_j(Rng& rng, const SweepConfig& c) {
    const double hi = std::min(c.nu_j.hi, 0.5 - c.delta_min);
    if (rng.uniform() < c.boundary_fraction && hi >= 0.4) return uniform_in(rng, 0.4, hi);
    return uniform_in(rng, c.nu_j.lo, hi);
}

/// Half-integer grid {1/2, 1, ..., 3} restricted to the nu_jc range.
inline std::vector<double> half_integer_grid(const SweepConfig& c) {
    std::vector<double> out;
    for (int k = 1; k <= 6; ++k) {
        const double v = 0.5 * k;
        if (v >= c.nu_jc.lo && v <= c.nu_jc.hi) out.push_back(v);
    }
    if (out.empty()) out.push_back(1.0);
    return out;
}

inline std::vector<double> sample_nu_jc(Rng& rng, const SweepConfig& c, std::size_t m) {
    std::vector<double> nu(m);
    if (c.mode == SweepMode::open_probe) {
        // total in (0, 1/2), split by normalized exponential weights
        const double total = uniform_in(rng, 0.02, 0.48);
        double sum = 0.0;
        for (double& v : nu) sum += (v = -std::log(rng.uniform()));
        for (double& v : nu) v *= total / sum;
        return nu;
    }
    for (double& v : nu) v = uniform_in(rng, c.nu_jc.lo, c.nu_jc.hi);
    if (c.mode == SweepMode::lower && c.proven_only && m >= 3) {
        const auto grid = half_integer_grid(c);
        if (m > 3) {
            std::fill(nu.begin(), nu.end(), 1.0);
        } else if (rng.uniform() < 0.5) {
            for (double& v : nu) v = grid[rng.uniform_index(grid.size())];
        } else {
            std::vector<double> ints;
            for (double g : grid)
                if (g == std::floor(g)) ints.push_back(g);
            if (ints.empty()) ints.push_back(1.0);
            nu[rng.uniform_index(m)] = ints[rng.uniform_index(ints.size())];
        }
    }
    if (c.mode == SweepMode::upper_amgm) {
        double total = 0.0;
        for (double v : nu) total += v;
        if (total < 0.5) {
            const double target = uniform_in(rng, 0.5, 1.0);
            for (double& v : nu) v *= target / total;
        }
    }
    return nu;
}

inline ConvexFn sample_convex(Rng& rng, std::size_t m) {
    const std::size_t kind = rng.uniform_index(3);
    std::vector<double> w(m);
    if (kind == 0) {
        for (double& v : w) v = uniform_in(rng, 0.1, 1.0);
        return ConvexFn::power_of_weighted_abs_sum(w, uniform_in(rng, 1.0, 3.0));
    }
    if (kind == 1) {
        for (double& v : w) v = rng.normal();
        std::vector<double> neg(w);
        for (double& v : neg) v = -v;
        return ConvexFn::max_affine({{w, 0.0}, {neg, 0.0}, {std::vector<double>(m, 0.0), uniform_in(rng, 0.1, 0.8)}});
    }
    for (double& v : w) v = 0.5 * rng.normal();
    return ConvexFn::exp_linear(w);
}

inline MonotoneFn sample_decreasing(Rng& rng) {
    switch (rng.uniform_index(3)) {
        case 0: return MonotoneFn(MonotoneFn::Kind::exp_decay, uniform_in(rng, 0.2, 2.0));
        case 1: return MonotoneFn(MonotoneFn::Kind::inverse_power, uniform_in(rng, 0.5, 3.0));
        default: return MonotoneFn(MonotoneFn::Kind::step_down, uniform_in(rng, 0.3, 1.5));
    }
}

inline MonotoneFn sample_increasing(Rng& rng, const RadialSpec& radial) {
    switch (rng.uniform_index(3)) {
        case 0: {
            const double cap = std::min(2.0, radial.moment_limit() / 2.5);
            return MonotoneFn(MonotoneFn::Kind::power, uniform_in(rng, 0.25, std::max(0.3, cap)));
        }
        case 1: return MonotoneFn(MonotoneFn::Kind::min_cap, uniform_in(rng, 0.3, 1.5));
        default: return MonotoneFn(MonotoneFn::Kind::step_up, uniform_in(rng, 0.3, 1.5));
    }
}

inline RadialSpec sample_radial(Rng& rng) {
    switch (rng.uniform_index(4)) {
        case 0: return RadialSpec(RadialSpec::Kind::constant, uniform_in(rng, 0.5, 2.0));
        case 1: return RadialSpec(RadialSpec::Kind::chi2);
        case 2: return RadialSpec(RadialSpec::Kind::absnormal);
        default: return RadialSpec(RadialSpec::Kind::pareto, uniform_in(rng, 3.0, 6.0));
    }
}

inline CheckOptions check_options(const SweepConfig& c) {
    CheckOptions o;
    o.moments.samples = c.samples;
    o.moments.rel_tol = c.rel_tol;
    o.moments.threads = 1;
    o.budget = c.budget;
    o.form = c.lower_form;
    o.triage = c.triage && theorem_true(c.mode);
    return o;
}

}  // namespace detail

/// One instance of a sweep: its index, dimension and verdict (or error).
struct SweepEntry {
    std::size_t instance = 0;
    std::size_t dim = 0;
    std::optional<BoundVerdict> verdict;
    std::string error_kind;
    std::string error_message;
};

inline json entry_to_json(const SweepEntry& e, SweepMode mode) {
    json j;
    if (e.verdict) {
        j = verdict_to_json(*e.verdict);
    } else {
        j = {{"schema", kVerdictSchema}, {"version", kCodeVersion}, {"kind", std::string(to_string(mode))},
             {"decision", "error"}, {"error", {{"kind", e.error_kind}, {"message", e.error_message}}}};
    }
    j["instance"] = e.instance;
    j["d"] = e.dim;
    j["mode"] = std::string(to_string(mode));
    return j;
}

/// Builds and checks instance i of the sweep. Deterministic in
/// (master_seed, i).
inline SweepEntry run_instance(const SweepConfig& c, std::size_t i) {
    SweepEntry e;
    e.instance = i;
    const bool grid = c.mode == SweepMode::open_probe && !c.rho_grid.empty();
    const std::size_t d = grid ? 2 : c.dims[i / std::max<std::size_t>(1, c.n_matrices)];
    e.dim = d;
    Rng rng(c.master_seed, 3 * static_cast<std::uint64_t>(i));
    const std::uint64_t matrix_seed = derive_seed(c.master_seed, 3 * static_cast<std::uint64_t>(i) + 1);
    const std::uint64_t check_seed = derive_seed(c.master_seed, 3 * static_cast<std::uint64_t>(i) + 2);
    const CheckOptions opt = detail::check_options(c);
    try {
        const CovMatrix sigma = grid ? CovMatrix(Matrix{{1.0, c.rho_grid[i]}, {c.rho_grid[i], 1.0}})
                                     : random_correlation(d, matrix_seed, c.condition_cap);
        if (c.mode == SweepMode::elliptical) {
            const CovMatrix s2(submatrix(sigma.entries(), std::vector<std::size_t>{0, 1}, std::vector<std::size_t>{0, 1}));
            const RadialSpec radial = detail::sample_radial(rng);
            const MonotoneFn f = detail::sample_decreasing(rng);
            const MonotoneFn g = detail::sample_increasing(rng, radial);
            e.verdict = elliptical_check(s2, radial, f, g, opt, check_seed, c.comparator);
            return e;
        }
        const std::size_t j_hi = std::min(c.j_max == 0 ? d - 1 : c.j_max, d - 1);
        const std::size_t j_lo = std::min(c.j_min, j_hi);
        const std::size_t j_size = j_lo + rng.uniform_index(j_hi - j_lo + 1);
        const std::vector<std::size_t> j = grid ? std::vector<std::size_t>{0} : detail::sample_subset(rng, d, j_size);
        const IndexPartition part(d, j);
        if (c.mode == SweepMode::convex_order) {
            std::vector<double> s;
            for (std::size_t a = 0; a < j.size(); ++a) s.push_back(std::exp(1.5 * rng.normal()));
            const CovMatrix sigma1 = transformed_covariance(sigma, part, SVector(s));
            const ConvexFn psi = detail::sample_convex(rng, d);
            e.verdict = convex_order_check(sigma1, sigma, {psi}, opt, check_seed).front();
            return e;
        }
        std::vector<double> nu(d, 0.0);
        for (std::size_t idx : part.j()) nu[idx] = detail::sample_nu_j(rng, c);
        const auto nu_jc = detail::sample_nu_jc(rng, c, part.jc().size());
        for (std::size_t a = 0; a < nu_jc.size(); ++a) nu[part.jc()[a]] = nu_jc[a];
        if (!c.fixed_nu.empty()) {
            if (c.fixed_nu.size() != d) throw Error(ErrorKind::ConfigError, "fixed_nu length must equal d");
            nu = c.fixed_nu;
        }
        if (c.mode == SweepMode::upper_convex) {
            std::vector<double> nu_j;
            for (std::size_t idx : part.j()) nu_j.push_back(nu[idx]);
            const ConvexFn psi = detail::sample_convex(rng, part.jc().size());
            e.verdict = check_upper_bound_convex(sigma, part, nu_j, psi, opt, check_seed, c.delta_min);
            return e;
        }
        const ExponentSpec spec(part, nu, c.delta_min);
        switch (c.mode) {
            case SweepMode::lower: e.verdict = check_lower_bound(sigma, spec, opt, check_seed); break;
            case SweepMode::upper_amgm: e.verdict = check_amgm(sigma, spec, opt, check_seed); break;
            case SweepMode::open_probe: e.verdict = probe_open_case(sigma, spec, opt, check_seed); break;
            default: break;
        }
    } catch (const Error& err) {
        if (err.kind() == ErrorKind::ConfigError) throw;
        e.verdict.reset();
        e.error_kind = std::string(to_string(err.kind()));
        e.error_message = err.what();
    }
    return e;
}

inline std::size_t instance_count(const SweepConfig& c) {
    if (c.mode == SweepMode::open_probe && !c.rho_grid.empty()) return c.rho_grid.size();
    return c.dims.size() * c.n_matrices;
}

// ---------------------------------------------------------------------------
// Reports

struct SweepSummary {
    std::size_t verdicts = 0;
    std::size_t verified = 0;
    std::size_t inconclusive = 0;
    std::size_t violation_candidate = 0;
    std::size_t errors = 0;
    std::size_t numerical_anomalies = 0;
    std::size_t equality = 0;
    std::optional<double> min_margin;
    std::optional<std::size_t> min_margin_instance;
    std::optional<double> min_z;
    std::optional<std::size_t> min_z_instance;
    std::vector<double> margins;  // relative margins, sorted
};

struct SweepReport {
    SweepConfig config;
    std::vector<SweepEntry> entries;
    SweepSummary summary;
    double wall_time_seconds = 0.0;
};

namespace detail {

inline double relative_margin(const json& v) {
    const double m = number_from_json(v.at("margin"));
    const double r = std::abs(number_from_json(v.at("rhs").at("value")));
    return r > 0.0 ? m / r : m;
}

inline void tally(SweepSummary& s, const json& v) {
    const std::string decision = v.at("decision").get<std::string>();
    if (decision == "error") {
        ++s.errors;
        return;
    }
    ++s.verdicts;
    const std::size_t inst = v.value("instance", std::size_t{0});
    switch (parse_decision(decision)) {
        case Decision::verified: ++s.verified; break;
        case Decision::inconclusive: ++s.inconclusive; break;
        case Decision::violation_candidate: ++s.violation_candidate; break;
    }
    if (v.at("equality").get<bool>()) ++s.equality;
    if (v.at("flags").contains("numerical_anomaly")) ++s.numerical_anomalies;
    const double m = number_from_json(v.at("margin"));
    const double z = number_from_json(v.at("z"));
    if (!s.min_margin || m < *s.min_margin) {
        s.min_margin = m;
        s.min_margin_instance = inst;
    }
    if (!v.at("equality").get<bool>() && (!s.min_z || z < *s.min_z)) {
        s.min_z = z;
        s.min_z_instance = inst;
    }
    s.margins.push_back(relative_margin(v));
}

inline double quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(sorted.size() - 1, lo + 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline std::string fmt(double v) {
    if (std::isnan(v)) return "";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

}  // namespace detail

inline SweepSummary summarize_verdicts(const std::vector<json>& lines) {
    SweepSummary s;
    for (const auto& v : lines) detail::tally(s, v);
    std::sort(s.margins.begin(), s.margins.end());
    return s;
}

inline const char* kSummaryHeader =
    "mode,verdicts,verified,inconclusive,violation_candidate,errors,numerical_anomalies,equality,"
    "min_margin,min_margin_instance,min_z,min_z_instance,rel_margin_q05,rel_margin_q50,rel_margin_q95";

/// CSV summary of verdict records (one mode). Empty input gives the header only.
inline std::string summary_csv(const std::vector<json>& lines) {
    std::ostringstream os;
    os << kSummaryHeader << '\n';
    if (lines.empty()) return os.str();
    std::set<std::string> modes;
    for (const auto& v : lines) modes.insert(v.value("mode", v.value("kind", std::string())));
    if (modes.size() > 1) {
        std::string all;
        for (const auto& m : modes) all += (all.empty() ? "" : ", ") + m;
        throw Error(ErrorKind::ModeMixError, "verdicts from several modes cannot be summarized together: " + all);
    }
    const SweepSummary s = summarize_verdicts(lines);
    auto opt_num = [](const std::optional<double>& v) { return v ? detail::fmt(*v) : std::string(); };
    auto opt_idx = [](const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : std::string(); };
    os << *modes.begin() << ',' << s.verdicts << ',' << s.verified << ',' << s.inconclusive << ','
       << s.violation_candidate << ',' << s.errors << ',' << s.numerical_anomalies << ',' << s.equality << ','
       << opt_num(s.min_margin) << ',' << opt_idx(s.min_margin_instance) << ',' << opt_num(s.min_z) << ','
       << opt_idx(s.min_z_instance) << ',' << detail::fmt(detail::quantile(s.margins, 0.05)) << ','
       << detail::fmt(detail::quantile(s.margins, 0.5)) << ',' << detail::fmt(detail::quantile(s.margins, 0.95))
       << '\n';
    return os.str();
}

inline std::vector<json> read_verdict_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::NotFound, "cannot open verdict file '" + path.string() + "'");
    std::vector<json> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw Error(ErrorKind::ParseError, "bad verdict line in '" + path.string() + "': " + e.what());
        }
    }
    return out;
}

inline std::vector<json> read_verdict_files(const std::vector<std::filesystem::path>& paths) {
    std::vector<json> all;
    for (const auto& p : paths) {
        auto lines = read_verdict_lines(p);
        all.insert(all.end(), lines.begin(), lines.end());
    }
    return all;
}

struct SweepPaths {
    std::filesystem::path verdicts;
    std::filesystem::path summary;
    std::filesystem::path report;
};

inline SweepPaths sweep_paths(const std::filesystem::path& dir, const std::string& name) {
    return {dir / (name + ".verdicts.jsonl"), dir / (name + ".summary.csv"), dir / (name + ".report.json")};
}

/// Runs every instance, appending verdict lines in instance order as blocks
/// complete (so an interrupted run leaves a valid prefix), then writes the
/// summary CSV and report JSON. With an empty out_dir nothing is written.
inline SweepReport run_sweep(const SweepConfig& config, const std::filesystem::path& out_dir = {},
                             unsigned threads = 0) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    SweepReport report;
    report.config = config;
    const std::size_t total = instance_count(config);
    const unsigned workers = threads == 0 ? default_thread_count() : threads;

    std::ofstream out;
    SweepPaths paths;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        paths = sweep_paths(out_dir, config.name);
        out.open(paths.verdicts, std::ios::trunc);
        if (!out) throw Error(ErrorKind::ConfigError, "cannot write '" + paths.verdicts.string() + "'");
    }
    std::vector<json> lines;
    const std::size_t block = std::max<std::size_t>(1, workers);
    for (std::size_t begin = 0; begin < total; begin += block) {
        const std::size_t end = std::min(total, begin + block);
        std::vector<SweepEntry> chunk(end - begin);
        parallel_for(end - begin, workers, [&](std::size_t k) { chunk[k] = run_instance(config, begin + k); });
        for (auto& e : chunk) {
            lines.push_back(entry_to_json(e, config.mode));
            if (out) {
                out << lines.back().dump() << '\n';
                out.flush();
            }
            report.entries.push_back(std::move(e));
        }
    }
    report.summary = summarize_verdicts(lines);
    report.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!out_dir.empty()) {
        std::ofstream csv(paths.summary, std::ios::trunc);
        csv << summary_csv(lines);
        const auto& s = report.summary;
        json summary = {{"verdicts", s.verdicts},
                        {"verified", s.verified},
                        {"inconclusive", s.inconclusive},
                        {"violation_candidate", s.violation_candidate},
                        {"errors", s.errors},
                        {"numerical_anomalies", s.numerical_anomalies},
                        {"equality", s.equality},
                        {"min_margin", s.min_margin ? number_to_json(*s.min_margin) : json(nullptr)},
                        {"min_margin_instance", s.min_margin_instance ? json(*s.min_margin_instance) : json(nullptr)},
                        {"min_z", s.min_z ? number_to_json(*s.min_z) : json(nullptr)},
                        {"min_z_instance", s.min_z_instance ? json(*s.min_z_instance) : json(nullptr)}};
        json rep = {{"config", sweep_config_to_json(config)},
                    {"summary", summary},
                    {"environment", {{"version", kCodeVersion}, {"schema", kVerdictSchema}}},
                    {"wall_time_seconds", report.wall_time_seconds}};
        std::ofstream rj(paths.report, std::ios::trunc);
        rj << rep.dump(2) << '\n';
    }
    return report;
}

/// Re-runs a verdict from its context (the "context" member of a verdict
/// record, or the whole record).
inline BoundVerdict regenerate(const json& record) {
    if (record.is_object() && record.contains("context")) return evaluate_context(record.at("context"));
    return evaluate_context(record);
}

/// Re-runs instance `instance` of a verdict file.
inline BoundVerdict regenerate_from_file(const std::filesystem::path& path, std::size_t instance) {
    for (const auto& v : read_verdict_lines(path))
        if (v.value("instance", std::numeric_limits<std::size_t>::max()) == instance) {
            if (!v.contains("context"))
                throw Error(ErrorKind::NotFound, "instance " + std::to_string(instance) + " has no verdict context");
            return regenerate(v);
        }
    throw Error(ErrorKind::NotFound, "no verdict for instance " + std::to_string(instance) + " in '" + path.string() + "'");
}

}  // namespace gpi
