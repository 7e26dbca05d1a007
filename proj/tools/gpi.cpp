// gpi: command-line front end. Subcommands map one-to-one onto library calls;
// indices on the command line are 1-based.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gpi/bounds.hpp"
#include "gpi/harness.hpp"
#include "gpi/io.hpp"
#include "gpi/moments.hpp"
#include "gpi/selftest.hpp"

namespace {

using namespace gpi;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInconclusive = 2;
constexpr int kExitViolation = 3;
constexpr int kExitError = 4;

/// Errors caused by the caller's input map to the usage exit code.
int exit_code_for(ErrorKind k) {
    switch (k) {
        case ErrorKind::ConfigError:
        case ErrorKind::ParseError:
        case ErrorKind::InvalidSpec:
        case ErrorKind::InvalidPartition:
        case ErrorKind::DimensionMismatch:
        case ErrorKind::NotPositiveDefinite:
        case ErrorKind::HypothesisViolated:
        case ErrorKind::PreconditionFailed:
        case ErrorKind::MomentDiverges:
        case ErrorKind::NotFound:
        case ErrorKind::VersionMismatch:
        case ErrorKind::ModeMixError: return kExitUsage;
        default: return kExitError;
    }
}

int exit_code_for(Decision d) {
    switch (d) {
        case Decision::verified: return kExitOk;
        case Decision::inconclusive: return kExitInconclusive;
        case Decision::violation_candidate: return kExitViolation;
    }
    return kExitError;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ConfigError, "cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Inline JSON when the argument starts with '[' or '{', else a file path.
CovMatrix load_sigma(const std::string& arg) {
    const auto first = arg.find_first_not_of(" \t\n");
    if (first != std::string::npos && (arg[first] == '[' || arg[first] == '{')) return cov_from_json_text(arg);
    return cov_from_json_text(read_text(arg));
}

std::vector<std::size_t> to_zero_based(const std::vector<std::size_t>& one_based, std::size_t d) {
    std::vector<std::size_t> out;
    for (std::size_t i : one_based) {
        if (i < 1 || i > d)
            throw Error(ErrorKind::InvalidPartition, "index " + std::to_string(i) + " outside 1.." + std::to_string(d));
        out.push_back(i - 1);
    }
    std::sort(out.begin(), out.end());
    return out;
}

json parse_json_arg(const std::string& arg) {
    const auto first = arg.find_first_not_of(" \t\n");
    const std::string text = first != std::string::npos && (arg[first] == '[' || arg[first] == '{') ? arg : read_text(arg);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::ParseError, std::string("invalid JSON: ") + e.what());
    }
}

std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

std::string estimate_text(const MomentEstimate& e) {
    std::ostringstream os;
    os << num(e.value);
    if (e.std_error > 0.0) os << " +/- " << num(e.std_error) << " (std error)";
    if (e.error_bound > 0.0) os << " +/- " << num(e.error_bound) << " (error bound)";
    if (e.exact()) os << " (exact to rounding)";
    os << " [" << to_string(e.method) << "]";
    return os.str();
}

void print_verdict(const BoundVerdict& v, bool as_json) {
    if (as_json) {
        std::cout << verdict_to_json(v).dump() << '\n';
        return;
    }
    std::cout << v.kind << ": " << to_string(v.decision) << (v.equality ? " (equality)" : "") << '\n'
              << "  lhs    = " << estimate_text(v.lhs) << '\n'
              << "  rhs    = " << estimate_text(v.rhs) << '\n'
              << "  margin = " << num(v.margin) << " +/- " << num(v.margin_error) << "  z = " << num(v.z) << '\n'
              << "  samples = " << v.samples << ", escalations = " << v.escalations << '\n';
    for (const auto& [k, val] : v.flags) std::cout << "  " << k << ": " << val << '\n';
    for (const auto& [k, val] : v.lhs.diagnostics) std::cout << "  lhs " << k << ": " << val << '\n';
}

struct Common {
    std::string sigma;
    std::vector<std::size_t> j;
    std::vector<double> nu;
    std::size_t n = std::size_t{1} << 16;
    std::size_t budget = std::size_t{1} << 18;
    std::uint64_t seed = 1;
    std::optional<double> force_delta;
    bool json_out = false;
};

void add_common(CLI::App* app, Common& c, bool with_spec = true) {
    app->add_option("--sigma", c.sigma, "covariance: inline JSON or file")->required();
    if (with_spec) {
        app->add_option("--j", c.j, "indices of J (1-based), comma separated")->delimiter(',');
        app->add_option("--nu", c.nu, "exponent magnitudes nu_1..nu_d, comma separated")->delimiter(',')->required();
        app->add_option("--force-delta", c.force_delta, "accept nu_j up to 1/2 - delta (default guard 0.01)");
    }
    app->add_option("--n", c.n, "initial Monte Carlo samples");
    app->add_option("--budget", c.budget, "escalation cap on samples");
    app->add_option("--seed", c.seed, "random seed");
    app->add_flag("--json", c.json_out, "print a JSON record");
}

ExponentSpec make_spec(const Common& c, std::size_t d) {
    const double delta = c.force_delta.value_or(kDefaultDeltaMin);
    if (c.j.empty()) {
        if (c.nu.size() != d) throw Error(ErrorKind::InvalidSpec, "nu length must equal dimension");
        return ExponentSpec(IndexPartition::positive_only(d), c.nu, delta);
    }
    return ExponentSpec(IndexPartition(d, to_zero_based(c.j, d)), c.nu, delta);
}

CheckOptions make_options(const Common& c) {
    CheckOptions o;
    o.moments.samples = c.n;
    o.budget = std::max(c.budget, c.n);
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mixed-sign Gaussian moment bounds: computation and statistical checks"};
    app.require_subcommand(1);

    Common mom;
    std::string method = "auto";
    auto* moment_cmd = app.add_subcommand("moment", "E[prod_J |X_j|^{-2nu_j} prod_Jc |X_i|^{2nu_i}]");
    add_common(moment_cmd, mom);
    moment_cmd->add_option("--method", method, "auto|closed_form|wick|mc_direct|s_quadrature|s_importance");

    Common low;
    std::string form = "theorem";
    auto* lower_cmd = app.add_subcommand("check-lower", "check the lower bound");
    add_common(lower_cmd, low);
    lower_cmd->add_option("--form", form, "theorem (E[prod]) or corollary (prod E)");

    Common up;
    std::string psi_arg;
    auto* upper_cmd = app.add_subcommand("check-upper", "check the convex upper bound");
    add_common(upper_cmd, up);
    upper_cmd->add_option("--psi", psi_arg, "convex function as JSON (inline or file)")->required();

    Common am;
    auto* amgm_cmd = app.add_subcommand("check-amgm", "check the AM-GM upper bound (sum nu_Jc >= 1/2)");
    add_common(amgm_cmd, am);

    Common po;
    auto* probe_cmd = app.add_subcommand("probe-open", "probe the open regime 0 < sum nu_Jc < 1/2");
    add_common(probe_cmd, po);

    Common el;
    std::string radial = "chi2", f_arg = "exp:1", g_arg = "power:1", comparator = "product";
    auto* ell_cmd = app.add_subcommand("check-elliptical", "two-dimensional elliptical inequality");
    add_common(ell_cmd, el, false);
    ell_cmd->add_option("--radial", radial, "constant:r | chi2 | absnormal | pareto:alpha");
    ell_cmd->add_option("--f", f_arg, "nonincreasing: const:c | exp:a | invpow:a | stepdown:c");
    ell_cmd->add_option("--g", g_arg, "nondecreasing: const:c | power:a | min:c | stepup:c");
    ell_cmd->add_option("--comparator", comparator, "product | spherical");

    Common co;
    std::string sigma2;
    std::vector<std::string> psis;
    auto* cx_cmd = app.add_subcommand("check-convex-order", "E psi(X1) <= E psi(X2) for Sigma1 <= Sigma2 (Loewner)");
    add_common(cx_cmd, co, false);
    cx_cmd->add_option("--sigma2", sigma2, "larger covariance")->required();
    cx_cmd->add_option("--psi", psis, "convex function JSON (repeatable)")->required();

    std::string config_path, out_dir = ".";
    auto* sweep_cmd = app.add_subcommand("sweep", "run a randomized sweep from a JSON config");
    sweep_cmd->add_option("--config", config_path, "sweep config (JSON)")->required();
    sweep_cmd->add_option("--out", out_dir, "output directory");

    std::vector<std::string> summary_inputs;
    std::string summary_out;
    auto* sum_cmd = app.add_subcommand("summarize", "CSV summary of verdict files");
    sum_cmd->add_option("files", summary_inputs, ".verdicts.jsonl files")->required();
    sum_cmd->add_option("--out", summary_out, "write CSV here instead of stdout");

    std::string verdict_path;
    std::optional<std::size_t> instance;
    bool regen_json = false;
    auto* regen_cmd = app.add_subcommand("regenerate", "re-run a verdict from its JSON record");
    regen_cmd->add_option("--verdict", verdict_path, "JSON record, or .verdicts.jsonl with --instance")->required();
    regen_cmd->add_option("--instance", instance, "instance index inside a .verdicts.jsonl");
    regen_cmd->add_flag("--json", regen_json, "print a JSON record");

    std::string inject;
    auto* self_cmd = app.add_subcommand("selftest", "fast built-in checks");
    self_cmd->add_option("--inject-fault", inject, "testing hook: 'gamma' corrupts the Gamma function")->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*moment_cmd) {
            const CovMatrix sigma = load_sigma(mom.sigma);
            const ExponentSpec spec = make_spec(mom, sigma.dim());
            MomentOptions opt;
            opt.samples = mom.n;
            const MomentEstimate e = moment(sigma, spec, parse_method_choice(method), opt, mom.seed);
            if (mom.json_out) {
                json j = estimate_to_json(e);
                j["context"] = {{"sigma", matrix_to_json(sigma.entries())}, {"j", spec.partition().j()},
                                {"nu", spec.nu()}, {"method", method}, {"seed", mom.seed}, {"n", mom.n}};
                std::cout << j.dump() << '\n';
            } else {
                std::cout << "moment = " << estimate_text(e) << '\n';
                for (const auto& [k, v] : e.diagnostics) std::cout << "  " << k << ": " << v << '\n';
            }
            return kExitOk;
        }
        if (*lower_cmd) {
            const CovMatrix sigma = load_sigma(low.sigma);
            CheckOptions opt = make_options(low);
            opt.form = parse_lower_form(form);
            const BoundVerdict v = check_lower_bound(sigma, make_spec(low, sigma.dim()), opt, low.seed);
            print_verdict(v, low.json_out);
            return exit_code_for(v.decision);
        }
        if (*upper_cmd) {
            const CovMatrix sigma = load_sigma(up.sigma);
            const ExponentSpec spec = make_spec(up, sigma.dim());
            std::vector<double> nu_j;
            for (std::size_t j : spec.partition().j()) nu_j.push_back(spec.nu(j));
            for (std::size_t i : spec.partition().jc())
                if (spec.nu(i) != 0.0) throw Error(ErrorKind::InvalidSpec, "check-upper takes nu = 0 on the complement of J");
            const BoundVerdict v = check_upper_bound_convex(sigma, spec.partition(), nu_j,
                                                            ConvexFn::from_json(parse_json_arg(psi_arg)),
                                                            make_options(up), up.seed, spec.delta_min());
            print_verdict(v, up.json_out);
            return exit_code_for(v.decision);
        }
        if (*amgm_cmd) {
            const CovMatrix sigma = load_sigma(am.sigma);
            const BoundVerdict v = check_amgm(sigma, make_spec(am, sigma.dim()), make_options(am), am.seed);
            print_verdict(v, am.json_out);
            return exit_code_for(v.decision);
        }
        if (*probe_cmd) {
            const CovMatrix sigma = load_sigma(po.sigma);
            const BoundVerdict v = probe_open_case(sigma, make_spec(po, sigma.dim()), make_options(po), po.seed);
            print_verdict(v, po.json_out);
            return exit_code_for(v.decision);
        }
        if (*ell_cmd) {
            const CovMatrix sigma = load_sigma(el.sigma);
            const BoundVerdict v = elliptical_check(sigma, RadialSpec::parse(radial), MonotoneFn::parse(f_arg),
                                                    MonotoneFn::parse(g_arg), make_options(el), el.seed,
                                                    parse_comparator(comparator));
            print_verdict(v, el.json_out);
            return exit_code_for(v.decision);
        }
        if (*cx_cmd) {
            const CovMatrix s1 = load_sigma(co.sigma), s2 = load_sigma(sigma2);
            std::vector<ConvexFn> family;
            for (const auto& p : psis) family.push_back(ConvexFn::from_json(parse_json_arg(p)));
            const auto verdicts = convex_order_check(s1, s2, family, make_options(co), co.seed);
            int code = kExitOk;
            for (const auto& v : verdicts) {
                print_verdict(v, co.json_out);
                code = std::max(code, exit_code_for(v.decision));
            }
            return code;
        }
        if (*sweep_cmd) {
            if (!std::filesystem::exists(config_path)) {
                std::cerr << "error: config file '" << config_path << "' not found\n";
                return kExitUsage;
            }
            const SweepConfig config = load_sweep_config(config_path);
            const SweepReport report = run_sweep(config, out_dir);
            const auto paths = sweep_paths(out_dir, config.name);
            const auto& s = report.summary;
            std::cout << "sweep " << config.name << " (" << to_string(config.mode) << "): " << s.verdicts
                      << " verdicts, " << s.verified << " verified, " << s.inconclusive << " inconclusive, "
                      << s.violation_candidate << " violation candidates, " << s.errors << " errors\n"
                      << "  " << paths.verdicts.string() << "\n  " << paths.summary.string() << "\n  "
                      << paths.report.string() << '\n';
            if (s.min_z) std::cout << "  smallest z = " << num(*s.min_z) << " (instance " << *s.min_z_instance << ")\n";
            return s.violation_candidate > 0 ? kExitViolation : kExitOk;
        }
        if (*sum_cmd) {
            std::vector<std::filesystem::path> paths(summary_inputs.begin(), summary_inputs.end());
            const std::string csv = summary_csv(read_verdict_files(paths));
            if (summary_out.empty()) {
                std::cout << csv;
            } else {
                std::ofstream(summary_out) << csv;
            }
            return kExitOk;
        }
        if (*regen_cmd) {
            BoundVerdict v;
            if (instance) {
                v = regenerate_from_file(verdict_path, *instance);
            } else {
                v = regenerate(parse_json_arg(read_text(verdict_path)));
            }
            print_verdict(v, regen_json);
            return exit_code_for(v.decision);
        }
        if (*self_cmd) {
            if (!inject.empty()) {
                if (inject != "gamma") throw Error(ErrorKind::ParseError, "unknown fault '" + inject + "'");
                testing_hooks::gamma_perturbation = 1e-3;
            }
            const SelftestResult r = run_selftest(std::cout);
            if (!r.ok()) {
                std::cerr << "selftest failed:";
                for (const auto& name : r.failed) std::cerr << ' ' << name;
                std::cerr << '\n';
                return kExitError;
            }
            return kExitOk;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitError;
    }
    return kExitUsage;
}
