#pragma once

// Right-hand sides of the mixed-sign moment bounds and statistical checks of
// each inequality. Every check returns a BoundVerdict whose context is enough
// to re-run it bit for bit (see evaluate_context).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gpi/error.hpp"
#include "gpi/io.hpp"
#include "gpi/linalg.hpp"
#include "gpi/moments.hpp"
#include "gpi/random.hpp"
#include "gpi/stats.hpp"

namespace gpi {

// ---------------------------------------------------------------------------
// Verdicts

enum class Decision { verified, inconclusive, violation_candidate };

inline std::string_view to_string(Decision d) {
    switch (d) {
        case Decision::verified: return "verified";
        case Decision::inconclusive: return "inconclusive";
        case Decision::violation_candidate: return "violation_candidate";
    }
    return "unknown";
}

inline Decision parse_decision(std::string_view s) {
    if (s == "verified") return Decision::verified;
    if (s == "inconclusive") return Decision::inconclusive;
    if (s == "violation_candidate") return Decision::violation_candidate;
    throw Error(ErrorKind::ParseError, "unknown decision '" + std::string(s) + "'");
}

struct DecisionRule {
    double z_pass = 2.0;
    double z_fail = 4.0;
    double equality_tol = 1e-9;  // relative to |rhs|
};

/// Which negative-block factor the lower bound uses: E[prod] or prod E.
enum class LowerForm { theorem, corollary };

inline std::string_view to_string(LowerForm f) { return f == LowerForm::theorem ? "theorem" : "corollary"; }

inline LowerForm parse_lower_form(std::string_view s) {
    if (s == "theorem") return LowerForm::theorem;
    if (s == "corollary") return LowerForm::corollary;
    throw Error(ErrorKind::ParseError, "unknown lower-bound form '" + std::string(s) + "'");
}

struct CheckOptions {
    MomentOptions moments{.samples = std::size_t{1} << 16, .rel_tol = 1e-9};
    std::size_t budget = std::size_t{1} << 18;  // escalation cap on samples
    DecisionRule rule;
    LowerForm form = LowerForm::theorem;
    bool alternate = false;  // switch the LHS estimation route
    bool triage = false;     // re-run violations with 4x budget and both routes
};

/// margin is positive when the inequality holds.
struct BoundVerdict {
    std::string kind;
    MomentEstimate lhs;
    MomentEstimate rhs;
    double margin = 0.0;
    double margin_error = 0.0;
    double z = 0.0;
    Decision decision = Decision::inconclusive;
    bool equality = false;
    bool stochastic = false;
    std::size_t samples = 0;
    std::size_t escalations = 0;
    std::map<std::string, std::string> flags;
    json context;
};

inline void decide(BoundVerdict& v, const DecisionRule& rule) {
    const double scale = std::abs(v.rhs.value);
    if (std::abs(v.margin) <= rule.equality_tol * scale) {
        v.equality = true;
        v.z = v.margin_error > 0.0 ? v.margin / v.margin_error : 0.0;
        v.decision = Decision::verified;
        return;
    }
    v.equality = false;
    if (v.margin_error > 0.0) {
        v.z = v.margin / v.margin_error;
    } else {
        v.z = v.margin > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    }
    if (v.z >= rule.z_pass) {
        v.decision = Decision::verified;
    } else if (v.z <= -rule.z_fail) {
        v.decision = Decision::violation_candidate;
    } else {
        v.decision = Decision::inconclusive;
    }
}

inline double uncertainty(const MomentEstimate& e) { return std::hypot(e.std_error, e.error_bound); }

// ---------------------------------------------------------------------------
// GPI provenness of a positive-exponent pattern

namespace detail {
inline bool half_integer(double v) { return v > 0.0 && 2.0 * v == std::floor(2.0 * v); }
}  // namespace detail

/// True when GPI for these exponents is established in the literature:
/// at most two indices, all exponents equal to 1, or three indices with all
/// exponents in (1/2)N or one of them an integer.
inline bool gpi_proven(std::span<const double> nu) {
    std::vector<double> active;
    for (double v : nu)
        if (v > 0.0) active.push_back(v);
    if (active.size() <= 2) return true;
    if (std::all_of(active.begin(), active.end(), [](double v) { return v == 1.0; })) return true;
    if (active.size() == 3) {
        if (std::all_of(active.begin(), active.end(), detail::half_integer)) return true;
        if (std::any_of(active.begin(), active.end(), [](double v) { return v == std::floor(v); })) return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// Convex test functions

/// psi: R^m -> R from a closed family; convex by construction.
class ConvexFn {
public:
    enum class Kind { constant, max_affine, power_of_weighted_abs_sum, exp_linear };

    struct Piece {
        std::vector<double> weights;
        double offset = 0.0;
    };

    static ConvexFn constant(double c) {
        ConvexFn f(Kind::constant);
        f.offset_ = c;
        return f;
    }
    static ConvexFn max_affine(std::vector<Piece> pieces) {
        if (pieces.empty()) throw Error(ErrorKind::InvalidSpec, "max_affine needs at least one piece");
        ConvexFn f(Kind::max_affine);
        f.pieces_ = std::move(pieces);
        for (const auto& p : f.pieces_)
            if (p.weights.size() != f.pieces_[0].weights.size())
                throw Error(ErrorKind::InvalidSpec, "max_affine pieces must share one dimension");
        return f;
    }
    /// (sum_i w_i |x_i|)^p, w_i >= 0, p >= 1.
    static ConvexFn power_of_weighted_abs_sum(std::vector<double> w, double p) {
        if (!(p >= 1.0) || !std::isfinite(p)) throw Error(ErrorKind::InvalidSpec, "power exponent must be >= 1");
        for (double v : w)
            if (!(v >= 0.0)) throw Error(ErrorKind::InvalidSpec, "power_of_weighted_abs_sum needs weights >= 0");
        ConvexFn f(Kind::power_of_weighted_abs_sum);
        f.weights_ = std::move(w);
        f.power_ = p;
        return f;
    }
    /// exp(w . x).
    static ConvexFn exp_linear(std::vector<double> w) {
        ConvexFn f(Kind::exp_linear);
        f.weights_ = std::move(w);
        return f;
    }

    Kind kind() const noexcept { return kind_; }

    /// Input dimension; 0 for constants (any dimension).
    std::size_t dim() const {
        switch (kind_) {
            case Kind::constant: return 0;
            case Kind::max_affine: return pieces_[0].weights.size();
            default: return weights_.size();
        }
    }

    void require_dim(std::size_t m) const {
        if (dim() != 0 && dim() != m)
            throw Error(ErrorKind::DimensionMismatch,
                        "psi takes " + std::to_string(dim()) + " arguments, got " + std::to_string(m));
    }

    double operator()(std::span<const double> x) const {
        switch (kind_) {
            case Kind::constant: return offset_;
            case Kind::max_affine: {
                double best = -std::numeric_limits<double>::infinity();
                for (const auto& p : pieces_) {
                    double v = p.offset;
                    for (std::size_t i = 0; i < x.size(); ++i) v += p.weights[i] * x[i];
                    best = std::max(best, v);
                }
                return best;
            }
            case Kind::power_of_weighted_abs_sum: {
                double s = 0.0;
                for (std::size_t i = 0; i < x.size(); ++i) s += weights_[i] * std::abs(x[i]);
                return power_ == 2.0 ? s * s : std::pow(s, power_);
            }
            case Kind::exp_linear: {
                double s = 0.0;
                for (std::size_t i = 0; i < x.size(); ++i) s += weights_[i] * x[i];
                return std::exp(s);
            }
        }
        return 0.0;
    }

    json to_json() const {
        switch (kind_) {
            case Kind::constant: return {{"kind", "constant"}, {"value", offset_}};
            case Kind::max_affine: {
                json pieces = json::array();
                for (const auto& p : pieces_) pieces.push_back({{"weights", p.weights}, {"offset", p.offset}});
                return {{"kind", "max_affine"}, {"pieces", pieces}};
            }
            case Kind::power_of_weighted_abs_sum:
                return {{"kind", "power_of_weighted_abs_sum"}, {"weights", weights_}, {"p", power_}};
            case Kind::exp_linear: return {{"kind", "exp_linear"}, {"weights", weights_}};
        }
        return {};
    }

    static ConvexFn from_json(const json& j) {
        try {
            const std::string kind = j.at("kind").get<std::string>();
            if (kind == "constant") return constant(j.at("value").get<double>());
            if (kind == "max_affine") {
                std::vector<Piece> pieces;
                for (const auto& p : j.at("pieces"))
                    pieces.push_back({p.at("weights").get<std::vector<double>>(), p.value("offset", 0.0)});
                return max_affine(std::move(pieces));
            }
            if (kind == "power_of_weighted_abs_sum")
                return power_of_weighted_abs_sum(j.at("weights").get<std::vector<double>>(), j.at("p").get<double>());
            if (kind == "exp_linear") return exp_linear(j.at("weights").get<std::vector<double>>());
            throw Error(ErrorKind::InvalidSpec, "unknown convex function kind '" + kind + "'");
        } catch (const json::exception& e) {
            throw Error(ErrorKind::ParseError, std::string("invalid convex function: ") + e.what());
        }
    }

    friend bool operator==(const ConvexFn& a, const ConvexFn& b) { return a.to_json() == b.to_json(); }

private:
    explicit ConvexFn(Kind k) : kind_(k) {}

    Kind kind_;
    std::vector<Piece> pieces_;
    std::vector<double> weights_;
    double power_ = 1.0;
    double offset_ = 0.0;
};

// ---------------------------------------------------------------------------
// Shared sampling over the s-representation

namespace detail {

inline ExponentSpec negative_part(const ExponentSpec& spec) {
    std::vector<double> nu(spec.dim(), 0.0);
    for (std::size_t j : spec.partition().j()) nu[j] = spec.nu(j);
    return ExponentSpec(spec.partition(), std::move(nu), spec.delta_min());
}

/// Draws x uniform on (0, 2)^k and calls body(rng, W, cov, out) with W the
/// importance weight of the node and cov the Y(s) covariance at `local`.
template <class Body>
MultiStats s_paired(const SRepresentation& rep, const std::vector<std::size_t>& local, std::size_t n,
                    std::uint64_t seed, unsigned threads, std::size_t q, Body&& body) {
    const std::size_t k = rep.axes();
    const double volume = std::pow(2.0, static_cast<double>(k));
    return monte_carlo(n, seed, threads, q, [&](Rng& rng, std::span<double> out) {
        thread_local std::vector<double> x;
        x.resize(k);
        for (double& v : x) v = 2.0 * rng.uniform();
        Matrix cov;
        const double w = volume * rep.node_at(x, local, cov);
        body(rng, w, cov, out);
    });
}

inline void unit_direction(Rng& rng, std::vector<double>& u, std::size_t m) {
    u.resize(m);
    double norm2 = 0.0;
    do {
        rng.fill_normal(u);
        norm2 = 0.0;
        for (double v : u) norm2 += v * v;
    } while (!(norm2 > 0.0));
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& v : u) v *= inv;
}

inline void lower_mul(const Matrix& l, std::span<const double> z, std::vector<double>& out) {
    const std::size_t m = l.rows();
    out.resize(m);
    for (std::size_t a = 0; a < m; ++a) {
        double v = 0.0;
        for (std::size_t b = 0; b <= a; ++b) v += l(a, b) * z[b];
        out[a] = v;
    }
}

inline MomentEstimate sample_estimate(const MultiStats& st, std::size_t i, std::size_t n, MomentMethod m) {
    MomentEstimate e;
    e.value = st.mean(i);
    e.std_error = st.std_error(i);
    e.n_samples = n;
    e.method = m;
    return e;
}

inline MomentEstimate product(const MomentEstimate& a, double c) {
    MomentEstimate e = a;
    e.value *= c;
    e.std_error *= std::abs(c);
    e.error_bound *= std::abs(c);
    return e;
}

inline json spec_context(const CovMatrix& sigma, const ExponentSpec& spec) {
    return {{"sigma", matrix_to_json(sigma.entries())},
            {"j", spec.partition().j()},
            {"nu", spec.nu()},
            {"delta_min", spec.delta_min()}};
}

inline json options_context(const CheckOptions& o) {
    return {{"samples", o.moments.samples},
            {"budget", o.budget},
            {"max_evaluations", o.moments.max_evaluations},
            {"rel_tol", o.moments.rel_tol},
            {"abs_tol", o.moments.abs_tol},
            {"z_pass", o.rule.z_pass},
            {"z_fail", o.rule.z_fail},
            {"equality_tol", o.rule.equality_tol},
            {"form", std::string(to_string(o.form))},
            {"alternate", o.alternate},
            {"triage", o.triage}};
}

inline void finish(BoundVerdict& v, const CheckOptions& opt) {
    decide(v, opt.rule);
}

/// Doubles the sample count while the verdict is inconclusive and sampling
/// noise is involved, keeping the predecessor when the std error grows.
template <class Shot>
BoundVerdict escalate(const CheckOptions& opt, Shot&& shot) {
    std::size_t n = opt.moments.samples;
    BoundVerdict v = shot(n);
    v.samples = n;
    std::size_t steps = 0;
    while (v.decision == Decision::inconclusive && v.stochastic && !v.equality && n * 2 <= opt.budget) {
        n *= 2;
        ++steps;
        BoundVerdict next = shot(n);
        next.samples = n;
        if (next.margin_error <= v.margin_error) v = std::move(next);
    }
    v.escalations = steps;
    return v;
}

}  // namespace detail

/// Runs a single-instance check with escalation and, when requested, the
/// violation triage: a violation is re-run with 4x samples and budget on the
/// primary route and on the alternate route; if both still report a
/// violation the verdict is flagged as a numerical anomaly.
template <class Check>
BoundVerdict run_with_triage(const CheckOptions& opt, Check&& check) {
    BoundVerdict v = detail::escalate(opt, [&](std::size_t n) { return check(opt, n); });
    if (!opt.triage || v.decision != Decision::violation_candidate) return v;
    CheckOptions big = opt;
    big.moments.samples *= 4;
    big.budget *= 4;
    CheckOptions alt = big;
    alt.alternate = !opt.alternate;
    BoundVerdict primary = detail::escalate(big, [&](std::size_t n) { return check(big, n); });
    const BoundVerdict other = detail::escalate(alt, [&](std::size_t n) { return check(alt, n); });
    primary.flags["triage_initial"] = std::string(to_string(v.decision));
    primary.flags["triage_alternate"] = std::string(to_string(other.decision));
    if (primary.decision == Decision::violation_candidate && other.decision == Decision::violation_candidate)
        primary.flags["numerical_anomaly"] = "true";
    primary.escalations += v.escalations;
    return primary;
}

// ---------------------------------------------------------------------------
// Lower bound

/// E[prod_J |X_j|^{-2 nu_j}] in the requested form: the joint moment
/// (theorem) or the product of univariate moments (corollary).
inline MomentEstimate negative_block_moment(const CovMatrix& sigma, const ExponentSpec& spec, LowerForm form,
                                            const MomentOptions& opt, std::uint64_t seed) {
    if (form == LowerForm::corollary) {
        MomentEstimate e;
        for (std::size_t j : spec.negative()) e.value *= univariate_abs_moment(sigma(j, j), -spec.nu(j));
        if (spec.negative().empty()) e.value = 1.0;
        e.method = MomentMethod::closed_form;
        return e;
    }
    return s_representation_moment(sigma, detail::negative_part(spec), InnerMethod::automatic, opt, seed);
}

/// prod_{i in Jc} E|X_i|^{2 nu_i} with X_i rescaled to the Schur complement
/// variance (Sigma/Sigma_JJ)_ii.
inline double lower_bound_positive_factor(const CovMatrix& sigma, const ExponentSpec& spec) {
    const auto pos = spec.positive();
    if (pos.empty()) return 1.0;
    const Matrix schur = schur_complement(sigma, spec.partition());
    const auto& jc = spec.partition().jc();
    double c = 1.0;
    for (std::size_t a = 0; a < jc.size(); ++a)
        if (spec.nu(jc[a]) > 0.0) c *= univariate_abs_moment(schur(a, a), spec.nu(jc[a]));
    return c;
}

/// Shrink factors (Sigma/Sigma_JJ)_ii / Sigma_ii for i in Jc.
inline std::vector<double> shrink_factors(const CovMatrix& sigma, const IndexPartition& part) {
    const Matrix schur = schur_complement(sigma, part);
    std::vector<double> out;
    const auto& jc = part.jc();
    for (std::size_t a = 0; a < jc.size(); ++a) out.push_back(schur(a, a) / sigma(jc[a], jc[a]));
    return out;
}

inline MomentEstimate lower_bound_rhs(const CovMatrix& sigma, const ExponentSpec& spec,
                                      LowerForm form = LowerForm::theorem, const MomentOptions& opt = {},
                                      std::uint64_t seed = 0) {
    if (spec.dim() != sigma.dim()) throw Error(ErrorKind::InvalidSpec, "spec dimension does not match covariance");
    const MomentEstimate neg = negative_block_moment(sigma, spec, form, opt, seed);
    MomentEstimate e = detail::product(neg, lower_bound_positive_factor(sigma, spec));
    e.diagnostics["form"] = std::string(to_string(form));
    return e;
}

namespace detail {

inline bool lhs_deterministic(const CovMatrix& sigma, const ExponentSpec& spec) {
    return plan_inner(sigma, spec, InnerMethod::automatic) != InnerMethod::mc &&
           spec.negative().size() <= kMaxQuadratureAxes;
}

/// LHS - c * E[neg] (sign = +1) or c * E[neg] - LHS (sign = -1), paired on
/// the same s-nodes when sampling. `c` multiplies the negative-block moment
/// on the RHS; for LowerForm::corollary the RHS is exact instead.
inline BoundVerdict product_form_shot(const CovMatrix& sigma, const ExponentSpec& spec, double c, double sign,
                                      const std::optional<double>& exact_rhs, const CheckOptions& opt,
                                      std::size_t n, std::uint64_t seed) {
    BoundVerdict v;
    MomentOptions mo = opt.moments;
    mo.samples = n;
    const bool deterministic = lhs_deterministic(sigma, spec);
    if (deterministic && !opt.alternate) {
        v.lhs = s_representation_moment(sigma, spec, InnerMethod::automatic, mo, seed);
        if (exact_rhs) {
            v.rhs.value = *exact_rhs;
            v.rhs.method = MomentMethod::closed_form;
        } else {
            v.rhs = product(s_representation_moment(sigma, negative_part(spec), InnerMethod::automatic, mo, seed), c);
        }
        v.margin = sign * (v.lhs.value - v.rhs.value);
        v.margin_error = uncertainty(v.lhs) + uncertainty(v.rhs);
        v.stochastic = false;
        return v;
    }
    // Sampling route: importance sampling over s with the radial-integrated
    // inner draw, RHS paired on the same nodes.
    const SRepresentation rep(sigma, spec);
    const auto& pos = rep.positive();
    const auto local = rep.local_positions(pos);
    const auto& nu_pos = rep.nu_positive();
    double p = 0.0;
    for (double x : nu_pos) p += x;
    const double radial = pos.empty() ? 1.0 : chi_moment(pos.size(), p);
    const InnerMethod plan = plan_inner(sigma, spec, InnerMethod::automatic);
    const bool exact_inner = plan != InnerMethod::mc && !opt.alternate;
    const MultiStats st = s_paired(rep, local, n, seed, mo.thread_count(), 3,
                                   [&](Rng& rng, double w, const Matrix& cov, std::span<double> out) {
                                       double inner = 1.0;
                                       if (!pos.empty()) {
                                           if (exact_inner) {
                                               inner = inner_moment(plan, cov, nu_pos);
                                           } else {
                                               thread_local std::vector<double> u;
                                               const Matrix l = cholesky(cov, ErrorKind::SingularBlock);
                                               inner = inner_angular_draw(l, nu_pos, radial, rng, u);
                                           }
                                       }
                                       out[0] = w * inner;
                                       out[1] = exact_rhs ? *exact_rhs : w * c;
                                       out[2] = sign * (out[0] - out[1]);
                                   });
    v.lhs = sample_estimate(st, 0, n, MomentMethod::s_importance);
    v.lhs.diagnostics["inner"] = exact_inner ? std::string(to_string(plan)) : "mc";
    if (exact_rhs) {
        v.rhs.value = *exact_rhs;
        v.rhs.method = MomentMethod::closed_form;
    } else {
        v.rhs = sample_estimate(st, 1, n, MomentMethod::s_importance);
    }
    v.margin = st.mean(2);
    v.margin_error = st.std_error(2);
    v.stochastic = true;
    return v;
}

inline void add_spec_flags(const ExponentSpec& spec, BoundVerdict& v) {
    std::vector<double> nu_jc;
    for (std::size_t i : spec.partition().jc()) nu_jc.push_back(spec.nu(i));
    const bool proven = gpi_proven(nu_jc);
    v.flags["gpi_proven"] = proven ? "true" : "false";
    if (spec.near_divergence()) v.flags["near_divergence"] = "true";
}

}  // namespace detail

/// E[prod_J |X_j|^{-2nu_j} prod_Jc |X_i|^{2nu_i}] >= lower_bound_rhs.
inline BoundVerdict check_lower_bound(const CovMatrix& sigma, const ExponentSpec& spec, const CheckOptions& opt = {},
                                      std::uint64_t seed = 0) {
    if (spec.dim() != sigma.dim()) throw Error(ErrorKind::InvalidSpec, "spec dimension does not match covariance");
    const double c = lower_bound_positive_factor(sigma, spec);
    std::optional<double> exact_rhs;
    if (opt.form == LowerForm::corollary)
        exact_rhs = negative_block_moment(sigma, spec, LowerForm::corollary, opt.moments, seed).value * c;
    BoundVerdict v = run_with_triage(opt, [&](const CheckOptions& o, std::size_t n) {
        BoundVerdict s = detail::product_form_shot(sigma, spec, c, 1.0, exact_rhs, o, n, seed);
        s.kind = "lower";
        detail::finish(s, o);
        return s;
    });
    v.rhs.diagnostics["form"] = std::string(to_string(opt.form));
    detail::add_spec_flags(spec, v);
    v.flags["regime"] = v.flags["gpi_proven"] == "true" ? "proven" : "conjectural";
    v.context = detail::spec_context(sigma, spec);
    v.context["kind"] = "lower";
    v.context["seed"] = seed;
    v.context["options"] = detail::options_context(opt);
    return v;
}

// ---------------------------------------------------------------------------
// Upper bounds

/// E[prod_J |X_j|^{-2nu_j} psi(X_Jc)] <= E[prod_J |X_j|^{-2nu_j}] E[psi(X_Jc)].
/// Paired estimator: on each s-node, psi is evaluated at L_Y(s) z and L_X z
/// with the same z, so the difference has small variance.
inline BoundVerdict check_upper_bound_convex(const CovMatrix& sigma, const IndexPartition& part,
                                             const std::vector<double>& nu_j, const ConvexFn& psi,
                                             const CheckOptions& opt = {}, std::uint64_t seed = 0,
                                             double delta_min = kDefaultDeltaMin) {
    require_partition_dim(sigma.entries(), part);
    if (nu_j.size() != part.j().size()) throw Error(ErrorKind::DimensionMismatch, "nu_J needs one entry per index of J");
    const auto& jc = part.jc();
    if (jc.empty()) throw Error(ErrorKind::InvalidPartition, "upper bound needs a nonempty complement");
    psi.require_dim(jc.size());
    std::vector<double> nu(sigma.dim(), 0.0);
    for (std::size_t a = 0; a < nu_j.size(); ++a) nu[part.j()[a]] = nu_j[a];
    const ExponentSpec spec(part, nu, delta_min);
    const SRepresentation rep(sigma, spec);
    const auto local = rep.local_positions(jc);
    const Matrix lx = cholesky(submatrix(sigma.entries(), jc, jc), ErrorKind::SingularBlock);
    const std::size_t m = jc.size();

    BoundVerdict v = run_with_triage(opt, [&](const CheckOptions& o, std::size_t n) {
        const std::uint64_t s = o.alternate ? derive_seed(seed, 1) : seed;
        const MultiStats st =
            detail::s_paired(rep, local, n, s, o.moments.thread_count(), 3,
                             [&](Rng& rng, double w, const Matrix& cov, std::span<double> out) {
                                 thread_local std::vector<double> z, y, x;
                                 z.resize(m);
                                 rng.fill_normal(z);
                                 const Matrix ly = cholesky(cov, ErrorKind::SingularBlock);
                                 detail::lower_mul(ly, z, y);
                                 detail::lower_mul(lx, z, x);
                                 out[0] = w * psi(y);
                                 out[1] = w * psi(x);
                                 out[2] = out[1] - out[0];
                             });
        BoundVerdict b;
        b.kind = "upper_convex";
        b.lhs = detail::sample_estimate(st, 0, n, MomentMethod::s_importance);
        b.rhs = detail::sample_estimate(st, 1, n, MomentMethod::s_importance);
        b.margin = st.mean(2);
        b.margin_error = st.std_error(2);
        b.stochastic = true;
        detail::finish(b, o);
        return b;
    });
    if (spec.near_divergence()) v.flags["near_divergence"] = "true";
    v.flags["regime"] = "theorem";
    v.context = detail::spec_context(sigma, spec);
    v.context["kind"] = "upper_convex";
    v.context["psi"] = psi.to_json();
    v.context["seed"] = seed;
    v.context["options"] = detail::options_context(opt);
    return v;
}

namespace detail {

inline void require_amgm(const ExponentSpec& spec) {
    if (spec.total_positive() < 0.5)
        throw Error(ErrorKind::HypothesisViolated,
                    "the AM-GM upper bound needs sum of Jc exponents >= 1/2; use probe-open for the open regime");
}

}  // namespace detail

/// E[prod_J |X_j|^{-2nu_j}] * E[(sum_i w_i |X_i|)^{2p}], w_i = nu_i / p,
/// p = sum_Jc nu_i. The second factor is exact for one index and otherwise
/// sampled with the radial part integrated (R ~ chi_m, E[R^{2p}] exact).
inline MomentEstimate amgm_upper_bound_rhs(const CovMatrix& sigma, const ExponentSpec& spec,
                                           const MomentOptions& opt = {}, std::uint64_t seed = 0) {
    if (spec.dim() != sigma.dim()) throw Error(ErrorKind::InvalidSpec, "spec dimension does not match covariance");
    detail::require_amgm(spec);
    const MomentEstimate neg = negative_block_moment(sigma, spec, LowerForm::theorem, opt, seed);
    const auto pos = spec.positive();
    const double p = spec.total_positive();
    if (pos.size() == 1) {
        MomentEstimate e = detail::product(neg, univariate_abs_moment(sigma(pos[0], pos[0]), spec.nu(pos[0])));
        return e;
    }
    const Matrix l = cholesky(submatrix(sigma.entries(), pos, pos), ErrorKind::SingularBlock);
    std::vector<double> w;
    for (std::size_t i : pos) w.push_back(spec.nu(i) / p);
    const double radial = chi_moment(pos.size(), p);
    const MultiStats st = monte_carlo(opt.samples, derive_seed(seed, 2), opt.thread_count(), 1,
                                      [&](Rng& rng, std::span<double> out) {
                                          thread_local std::vector<double> u, x;
                                          detail::unit_direction(rng, u, pos.size());
                                          detail::lower_mul(l, u, x);
                                          double s = 0.0;
                                          for (std::size_t a = 0; a < x.size(); ++a) s += w[a] * std::abs(x[a]);
                                          out[0] = radial * std::pow(s, 2.0 * p);
                                      });
    const double a = neg.value, b = st.mean(0);
    MomentEstimate e;
    e.value = a * b;
    e.std_error = std::hypot(a * st.std_error(0), b * neg.std_error);
    e.error_bound = std::abs(b) * neg.error_bound;
    e.n_samples = opt.samples;
    e.method = MomentMethod::s_importance;
    e.diagnostics["negative_block"] = std::string(to_string(neg.method));
    return e;
}

/// E[prod_J |X_j|^{-2nu_j} prod_Jc |X_i|^{2nu_i}] <= amgm_upper_bound_rhs.
inline BoundVerdict check_amgm(const CovMatrix& sigma, const ExponentSpec& spec, const CheckOptions& opt = {},
                               std::uint64_t seed = 0) {
    if (spec.dim() != sigma.dim()) throw Error(ErrorKind::InvalidSpec, "spec dimension does not match covariance");
    detail::require_amgm(spec);
    const auto pos = spec.positive();
    const double p = spec.total_positive();
    BoundVerdict v;
    if (pos.size() == 1) {
        const double c = univariate_abs_moment(sigma(pos[0], pos[0]), spec.nu(pos[0]));
        v = run_with_triage(opt, [&](const CheckOptions& o, std::size_t n) {
            BoundVerdict s = detail::product_form_shot(sigma, spec, c, -1.0, std::nullopt, o, n, seed);
            s.kind = "upper_amgm";
            detail::finish(s, o);
            return s;
        });
    } else {
        const SRepresentation rep(sigma, spec);
        const auto local = rep.local_positions(pos);
        const auto& nu_pos = rep.nu_positive();
        const Matrix lx = cholesky(submatrix(sigma.entries(), pos, pos), ErrorKind::SingularBlock);
        std::vector<double> w;
        for (double x : nu_pos) w.push_back(x / p);
        const double radial = chi_moment(pos.size(), p);
        v = run_with_triage(opt, [&](const CheckOptions& o, std::size_t n) {
            const std::uint64_t s = o.alternate ? derive_seed(seed, 1) : seed;
            const MultiStats st =
                detail::s_paired(rep, local, n, s, o.moments.thread_count(), 3,
                                 [&](Rng& rng, double wt, const Matrix& cov, std::span<double> out) {
                                     thread_local std::vector<double> u, y, x;
                                     detail::unit_direction(rng, u, pos.size());
                                     const Matrix ly = cholesky(cov, ErrorKind::SingularBlock);
                                     detail::lower_mul(ly, u, y);
                                     detail::lower_mul(lx, u, x);
                                     double prod = 1.0, sum = 0.0;
                                     for (std::size_t a = 0; a < y.size(); ++a) {
                                         prod *= std::pow(std::abs(y[a]), 2.0 * nu_pos[a]);
                                         sum += w[a] * std::abs(x[a]);
                                     }
                                     out[0] = wt * radial * prod;
                                     out[1] = wt * radial * std::pow(sum, 2.0 * p);
                                     out[2] = out[1] - out[0];
                                 });
            BoundVerdict b;
            b.kind = "upper_amgm";
            b.lhs = detail::sample_estimate(st, 0, n, MomentMethod::s_importance);
            b.rhs = detail::sample_estimate(st, 1, n, MomentMethod::s_importance);
            b.margin = st.mean(2);
            b.margin_error = st.std_error(2);
            b.stochastic = true;
            detail::finish(b, o);
            return b;
        });
    }
    detail::add_spec_flags(spec, v);
    v.flags["regime"] = "theorem";
    v.context = detail::spec_context(sigma, spec);
    v.context["kind"] = "upper_amgm";
    v.context["seed"] = seed;
    v.context["options"] = detail::options_context(opt);
    return v;
}

/// Open regime 0 < sum_Jc nu_i < 1/2: tests
///   E[prod_J |X_j|^{-2nu_j} prod_Jc |X_i|^{2nu_i}] <= E[prod_J ...] prod_Jc E|X_i|^{2nu_i}
/// and records evidence only.
inline BoundVerdict probe_open_case(const CovMatrix& sigma, const ExponentSpec& spec, const CheckOptions& opt = {},
                                    std::uint64_t seed = 0) {
    if (spec.dim() != sigma.dim()) throw Error(ErrorKind::InvalidSpec, "spec dimension does not match covariance");
    const double p = spec.total_positive();
    if (!(p > 0.0 && p < 0.5))
        throw Error(ErrorKind::PreconditionFailed, "probe-open needs 0 < sum of Jc exponents < 1/2");
    double c = 1.0;
    for (std::size_t i : spec.positive()) c *= univariate_abs_moment(sigma(i, i), spec.nu(i));
    BoundVerdict v = run_with_triage(opt, [&](const CheckOptions& o, std::size_t n) {
        BoundVerdict s = detail::product_form_shot(sigma, spec, c, -1.0, std::nullopt, o, n, seed);
        s.kind = "open_probe";
        detail::finish(s, o);
        return s;
    });
    detail::add_spec_flags(spec, v);
    v.flags["regime"] = "conjectural";
    v.context = detail::spec_context(sigma, spec);
    v.context["kind"] = "open_probe";
    v.context["seed"] = seed;
    v.context["options"] = detail::options_context(opt);
    return v;
}

// ---------------------------------------------------------------------------
// Convex order

/// For each psi, E[psi(Y)] <= E[psi(X)] with Y ~ N(0, sigma1), X ~ N(0, sigma2),
/// using the same normal draws for both.
inline std::vector<BoundVerdict> convex_order_check(const CovMatrix& sigma1, const CovMatrix& sigma2,
                                                    const std::vector<ConvexFn>& family, const CheckOptions& opt = {},
                                                    std::uint64_t seed = 0) {
    if (sigma1.dim() != sigma2.dim()) throw Error(ErrorKind::DimensionMismatch, "covariances differ in dimension");
    if (!loewner_leq(sigma1.entries(), sigma2.entries()))
        throw Error(ErrorKind::PreconditionFailed, "sigma1 is not below sigma2 in the Loewner order");
    const std::size_t d = sigma1.dim();
    const Matrix& l1 = sigma1.chol();
    const Matrix& l2 = sigma2.chol();
    std::vector<BoundVerdict> out;
    for (std::size_t f = 0; f < family.size(); ++f) {
        const ConvexFn& psi = family[f];
        psi.require_dim(d);
        BoundVerdict v = run_with_triage(opt, [&](const CheckOptions& o, std::size_t n) {
            const std::uint64_t s = o.alternate ? derive_seed(seed, 1) : seed;
            const MultiStats st = monte_carlo(n, s, o.moments.thread_count(), 3, [&](Rng& rng, std::span<double> r) {
                thread_local std::vector<double> z, y, x;
                z.resize(d);
                rng.fill_normal(z);
                detail::lower_mul(l1, z, y);
                detail::lower_mul(l2, z, x);
                r[0] = psi(y);
                r[1] = psi(x);
                r[2] = r[1] - r[0];
            });
            BoundVerdict b;
            b.kind = "convex_order";
            b.lhs = detail::sample_estimate(st, 0, n, MomentMethod::mc_direct);
            b.rhs = detail::sample_estimate(st, 1, n, MomentMethod::mc_direct);
            b.margin = st.mean(2);
            b.margin_error = st.std_error(2);
            b.stochastic = true;
            detail::finish(b, o);
            return b;
        });
        v.flags["regime"] = "theorem";
        v.context = {{"kind", "convex_order"},
                     {"sigma1", matrix_to_json(sigma1.entries())},
                     {"sigma2", matrix_to_json(sigma2.entries())},
                     {"psi", psi.to_json()},
                     {"seed", seed},
                     {"options", detail::options_context(opt)}};
        out.push_back(std::move(v));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Two-dimensional elliptical laws

/// Monotone function on [0, inf): nonincreasing kinds for f, nondecreasing
/// kinds for g, plus constants (both).
class MonotoneFn {
public:
    enum class Kind { constant, exp_decay, inverse_power, step_down, power, min_cap, step_up };

    MonotoneFn(Kind k, double param) : kind_(k), param_(param) {
        const bool positive_param = k == Kind::exp_decay || k == Kind::inverse_power || k == Kind::power || k == Kind::min_cap;
        if (!std::isfinite(param_) || (positive_param && !(param_ > 0.0)) || (k == Kind::step_down && !(param_ >= 0.0)) ||
            (k == Kind::step_up && !(param_ >= 0.0)))
            throw Error(ErrorKind::InvalidSpec, "invalid parameter for monotone function " + std::string(name()));
    }

    Kind kind() const noexcept { return kind_; }
    double param() const noexcept { return param_; }
    bool nonincreasing() const { return kind_ == Kind::constant || kind_ == Kind::exp_decay || kind_ == Kind::inverse_power || kind_ == Kind::step_down; }
    bool nondecreasing() const { return kind_ == Kind::constant || kind_ == Kind::power || kind_ == Kind::min_cap || kind_ == Kind::step_up; }

    /// Growth exponent a with f(x) = O(x^a) as x -> inf.
    double growth() const { return kind_ == Kind::power ? param_ : 0.0; }

    double operator()(double x) const {
        switch (kind_) {
            case Kind::constant: return param_;
            case Kind::exp_decay: return std::exp(-param_ * x);
            case Kind::inverse_power: return std::pow(1.0 + x, -param_);
            case Kind::step_down: return x <= param_ ? 1.0 : 0.0;
            case Kind::power: return std::pow(x, param_);
            case Kind::min_cap: return std::min(x, param_);
            case Kind::step_up: return x >= param_ ? 1.0 : 0.0;
        }
        return 0.0;
    }

    std::string_view name() const {
        switch (kind_) {
            case Kind::constant: return "const";
            case Kind::exp_decay: return "exp";
            case Kind::inverse_power: return "invpow";
            case Kind::step_down: return "stepdown";
            case Kind::power: return "power";
            case Kind::min_cap: return "min";
            case Kind::step_up: return "stepup";
        }
        return "unknown";
    }

    /// "name:param", e.g. "exp:1", "stepup:0.5".
    std::string to_string() const {
        std::ostringstream os;
        os.precision(17);
        os << name() << ':' << param_;
        return os.str();
    }

    static MonotoneFn parse(std::string_view text) {
        const auto colon = text.find(':');
        const std::string name(text.substr(0, colon));
        if (colon == std::string_view::npos) throw Error(ErrorKind::ParseError, "monotone function needs name:param");
        double param = 0.0;
        try {
            param = std::stod(std::string(text.substr(colon + 1)));
        } catch (const std::exception&) {
            throw Error(ErrorKind::ParseError, "bad parameter in '" + std::string(text) + "'");
        }
        static const std::map<std::string, Kind> kinds = {
            {"const", Kind::constant},  {"exp", Kind::exp_decay}, {"invpow", Kind::inverse_power},
            {"stepdown", Kind::step_down}, {"power", Kind::power}, {"min", Kind::min_cap},
            {"stepup", Kind::step_up}};
        const auto it = kinds.find(name);
        if (it == kinds.end()) throw Error(ErrorKind::ParseError, "unknown monotone function '" + name + "'");
        return MonotoneFn(it->second, param);
    }

private:
    Kind kind_;
    double param_;
};

/// Radial law of R in (X, Y) = R Sigma^{1/2} U.
class RadialSpec {
public:
    enum class Kind { constant, chi2, absnormal, pareto };

    RadialSpec(Kind k, double param = 1.0) : kind_(k), param_(param) {
        if (!(param_ > 0.0) || !std::isfinite(param_)) throw Error(ErrorKind::InvalidSpec, "radial parameter must be > 0");
    }

    Kind kind() const noexcept { return kind_; }
    double param() const noexcept { return param_; }

    /// Largest a with E[R^a] finite (infinity for light tails).
    double moment_limit() const {
        return kind_ == Kind::pareto ? param_ : std::numeric_limits<double>::infinity();
    }

    double sample(Rng& rng) const {
        switch (kind_) {
            case Kind::constant: return param_;
            case Kind::chi2: return std::sqrt(-2.0 * std::log(rng.uniform()));
            case Kind::absnormal: return std::abs(rng.normal());
            case Kind::pareto: return std::pow(rng.uniform(), -1.0 / param_);
        }
        return 0.0;
    }

    std::string to_string() const {
        std::ostringstream os;
        os.precision(17);
        switch (kind_) {
            case Kind::constant: os << "constant:" << param_; break;
            case Kind::chi2: os << "chi2"; break;
            case Kind::absnormal: os << "absnormal"; break;
            case Kind::pareto: os << "pareto:" << param_; break;
        }
        return os.str();
    }

    static RadialSpec parse(std::string_view text) {
        const auto colon = text.find(':');
        const std::string name(text.substr(0, colon));
        double param = 1.0;
        if (colon != std::string_view::npos) {
            try {
                param = std::stod(std::string(text.substr(colon + 1)));
            } catch (const std::exception&) {
                throw Error(ErrorKind::ParseError, "bad radial parameter in '" + std::string(text) + "'");
            }
        }
        if (name == "constant") return RadialSpec(Kind::constant, param);
        if (name == "chi2") return RadialSpec(Kind::chi2);
        if (name == "absnormal") return RadialSpec(Kind::absnormal);
        if (name == "pareto") {
            if (colon == std::string_view::npos) throw Error(ErrorKind::ParseError, "pareto needs a tail index, e.g. pareto:3");
            return RadialSpec(Kind::pareto, param);
        }
        throw Error(ErrorKind::ParseError, "unknown radial law '" + name + "'");
    }

private:
    Kind kind_;
    double param_;
};

/// Comparison law for the elliptical check: the product of marginal
/// expectations, or the uncorrelated elliptical law with the same radial
/// part and scales.
enum class EllipticalComparator { product, spherical };

inline std::string_view to_string(EllipticalComparator c) {
    return c == EllipticalComparator::product ? "product" : "spherical";
}

inline EllipticalComparator parse_comparator(std::string_view s) {
    if (s == "product") return EllipticalComparator::product;
    if (s == "spherical") return EllipticalComparator::spherical;
    throw Error(ErrorKind::ParseError, "unknown comparator '" + std::string(s) + "'");
}

/// Symmetric square root of a 2x2 SPD matrix.
inline Matrix sqrt_spd_2x2(const Matrix& m) {
    if (m.rows() != 2 || m.cols() != 2) throw Error(ErrorKind::DimensionMismatch, "expected a 2x2 matrix");
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    if (!(det > 0.0) || !(m(0, 0) > 0.0)) throw Error(ErrorKind::NotPositiveDefinite, "matrix is not positive definite");
    const double s = std::sqrt(det);
    const double t = std::sqrt(m(0, 0) + m(1, 1) + 2.0 * s);
    return Matrix{{(m(0, 0) + s) / t, m(0, 1) / t}, {m(1, 0) / t, (m(1, 1) + s) / t}};
}

namespace detail {

inline void check_monotone_pair(const MonotoneFn& f, const MonotoneFn& g) {
    if (!f.nonincreasing()) throw Error(ErrorKind::InvalidSpec, "f must be nonincreasing (const, exp, invpow, stepdown)");
    if (!g.nondecreasing()) throw Error(ErrorKind::InvalidSpec, "g must be nondecreasing (const, power, min, stepup)");
}

}  // namespace detail

/// Equispaced directions per radial draw (random common offset).
inline constexpr std::size_t kAngularStrata = 32;

/// E[f(|X|) g(|Y|)] <= E[f(|X|)] E[g(|Y|)] (product) or
/// E[f(|X|) g(|Y|)] <= E[f(|X0|) g(|Y0|)] (spherical) for
/// (X, Y) = R Sigma^{1/2} U and (X0, Y0) = R diag(sigma_11, sigma_22)^{1/2} U.
inline BoundVerdict elliptical_check(const CovMatrix& sigma, const RadialSpec& radial, const MonotoneFn& f,
                                     const MonotoneFn& g, const CheckOptions& opt = {}, std::uint64_t seed = 0,
                                     EllipticalComparator comparator = EllipticalComparator::product) {
    if (sigma.dim() != 2) throw Error(ErrorKind::DimensionMismatch, "elliptical check is two-dimensional");
    detail::check_monotone_pair(f, g);
    if (g.growth() >= radial.moment_limit())
        throw Error(ErrorKind::MomentDiverges, "E[g(|Y|)] is infinite: radial tail index " +
                                                   std::to_string(radial.moment_limit()) + " <= growth of g");
    const Matrix root = sqrt_spd_2x2(sigma.entries());
    // X = R s1 (alpha . u), Y = R s2 (beta . u) with unit rows alpha, beta.
    const double s1 = std::hypot(root(0, 0), root(0, 1));
    const double s2 = std::hypot(root(1, 0), root(1, 1));
    const double a0 = root(0, 0) / s1, a1 = root(0, 1) / s1;
    const double b0 = root(1, 0) / s2, b1 = root(1, 1) / s2;
    // Per direction u: LHS term f(|X|) g(|Y|) and the comparison term, which
    // averages the two orthonormal pairings (alpha, T alpha) and (T beta, beta)
    // of the uncorrelated law. Each direction is paired with its reflection
    // (-u1, u2); with equal scales the difference then equals -H/2 summed over
    // the pair and is pointwise of one sign.
    auto terms = [&](double rad, double u1, double u2, std::span<double> r) {
        const double pa = a0 * u1 + a1 * u2, pb = b0 * u1 + b1 * u2;
        const double ta = -a1 * u1 + a0 * u2, tb = -b1 * u1 + b0 * u2;
        const double fa = f(rad * s1 * std::abs(pa)), gb = g(rad * s2 * std::abs(pb));
        const double ge = g(rad * s2 * std::abs(ta)), fc = f(rad * s1 * std::abs(tb));
        r[0] += fa;
        r[1] += gb;
        r[2] += fa * gb;
        r[3] += 0.5 * (fa * ge + fc * gb) - fa * gb;
    };
    BoundVerdict v = run_with_triage(opt, [&](const CheckOptions& o, std::size_t n) {
        const std::uint64_t s = o.alternate ? derive_seed(seed, 1) : seed;
        const MultiStats st = monte_carlo(n, s, o.moments.thread_count(), 4, [&](Rng& rng, std::span<double> r) {
            const double rad = radial.sample(rng);
            const double t0 = rng.uniform();
            std::fill(r.begin(), r.end(), 0.0);
            for (std::size_t k = 0; k < kAngularStrata; ++k) {
                const double t = 2.0 * std::numbers::pi * (t0 + static_cast<double>(k)) / static_cast<double>(kAngularStrata);
                const double u1 = std::cos(t), u2 = std::sin(t);
                terms(rad, u1, u2, r);
                terms(rad, -u1, u2, r);
            }
            for (double& x : r) x /= static_cast<double>(2 * kAngularStrata);
        });
        BoundVerdict b;
        b.kind = "elliptical";
        b.lhs = detail::sample_estimate(st, 2, n, MomentMethod::mc_direct);
        if (comparator == EllipticalComparator::product) {
            const double mf = st.mean(0), mg = st.mean(1);
            b.rhs.value = mf * mg;
            const std::vector<double> grad_rhs = {mg, mf, 0.0, 0.0};
            b.rhs.std_error = st.std_error(grad_rhs);
            b.rhs.n_samples = n;
            b.rhs.method = MomentMethod::mc_direct;
            b.margin = b.rhs.value - b.lhs.value;
            const std::vector<double> grad = {mg, mf, -1.0, 0.0};
            b.margin_error = st.std_error(grad);
        } else {
            b.rhs.value = st.mean(2) + st.mean(3);
            const std::vector<double> grad_rhs = {0.0, 0.0, 1.0, 1.0};
            b.rhs.std_error = st.std_error(grad_rhs);
            b.rhs.n_samples = n;
            b.rhs.method = MomentMethod::mc_direct;
            b.margin = st.mean(3);
            b.margin_error = st.std_error(3);
        }
        b.stochastic = true;
        detail::finish(b, o);
        return b;
    });
    if (2.0 * g.growth() >= radial.moment_limit())
        v.flags["infinite_variance_risk"] = "E[g(|Y|)^2] is infinite for this radial tail";
    v.flags["regime"] = comparator == EllipticalComparator::spherical ? "theorem" : "stated_product_form";
    v.context = {{"kind", "elliptical"},
                 {"sigma", matrix_to_json(sigma.entries())},
                 {"radial", radial.to_string()},
                 {"f", f.to_string()},
                 {"g", g.to_string()},
                 {"comparator", std::string(to_string(comparator))},
                 {"seed", seed},
                 {"options", detail::options_context(opt)}};
    return v;
}

/// H(u) = {f(|alpha.u|) - f(|T beta.u|)} {g(|beta.u|) - g(|T alpha.u|)} with
/// alpha, beta the unit-normalized rows of Sigma^{1/2} and T the rotation by
/// pi/2.
inline double elliptical_pointwise_H(const CovMatrix& sigma, std::span<const double> u, const MonotoneFn& f,
                                     const MonotoneFn& g) {
    if (sigma.dim() != 2 || u.size() != 2) throw Error(ErrorKind::DimensionMismatch, "pointwise H is two-dimensional");
    const Matrix root = sqrt_spd_2x2(sigma.entries());
    const double na = std::hypot(root(0, 0), root(0, 1));
    const double nb = std::hypot(root(1, 0), root(1, 1));
    const double a0 = root(0, 0) / na, a1 = root(0, 1) / na;
    const double b0 = root(1, 0) / nb, b1 = root(1, 1) / nb;
    // T(x, y) = (-y, x)
    const double alpha_u = std::abs(a0 * u[0] + a1 * u[1]);
    const double t_alpha_u = std::abs(-a1 * u[0] + a0 * u[1]);
    const double beta_u = std::abs(b0 * u[0] + b1 * u[1]);
    const double t_beta_u = std::abs(-b1 * u[0] + b0 * u[1]);
    return (f(alpha_u) - f(t_beta_u)) * (g(beta_u) - g(t_alpha_u));
}

// ---------------------------------------------------------------------------
// Serialization and re-evaluation

inline json estimate_to_json(const MomentEstimate& e) {
    json diag = json::object();
    for (const auto& [k, v] : e.diagnostics) diag[k] = v;
    return {{"value", number_to_json(e.value)},
            {"std_error", number_to_json(e.std_error)},
            {"error_bound", number_to_json(e.error_bound)},
            {"n_samples", e.n_samples},
            {"evaluations", e.evaluations},
            {"method", std::string(to_string(e.method))},
            {"diagnostics", diag}};
}

/// Flat verdict record; "context" holds everything needed to re-run it.
inline json verdict_to_json(const BoundVerdict& v) {
    json flags = json::object();
    for (const auto& [k, val] : v.flags) flags[k] = val;
    json ctx = v.context;
    ctx["schema"] = kVerdictSchema;
    ctx["version"] = kCodeVersion;
    return {{"schema", kVerdictSchema},
            {"version", kCodeVersion},
            {"kind", v.kind},
            {"decision", std::string(to_string(v.decision))},
            {"margin", number_to_json(v.margin)},
            {"margin_error", number_to_json(v.margin_error)},
            {"z", number_to_json(v.z)},
            {"equality", v.equality},
            {"samples", v.samples},
            {"escalations", v.escalations},
            {"lhs", estimate_to_json(v.lhs)},
            {"rhs", estimate_to_json(v.rhs)},
            {"flags", flags},
            {"context", ctx}};
}

namespace detail {

inline CheckOptions options_from_context(const json& o) {
    CheckOptions opt;
    opt.moments.samples = o.at("samples").get<std::size_t>();
    opt.budget = o.at("budget").get<std::size_t>();
    opt.moments.max_evaluations = o.at("max_evaluations").get<std::size_t>();
    opt.moments.rel_tol = o.at("rel_tol").get<double>();
    opt.moments.abs_tol = o.at("abs_tol").get<double>();
    opt.rule.z_pass = o.at("z_pass").get<double>();
    opt.rule.z_fail = o.at("z_fail").get<double>();
    opt.rule.equality_tol = o.at("equality_tol").get<double>();
    opt.form = parse_lower_form(o.at("form").get<std::string>());
    opt.alternate = o.at("alternate").get<bool>();
    opt.triage = o.at("triage").get<bool>();
    return opt;
}

inline ExponentSpec spec_from_context(const json& c, std::size_t d) {
    return ExponentSpec(IndexPartition(d, c.at("j").get<std::vector<std::size_t>>()),
                        c.at("nu").get<std::vector<double>>(), c.at("delta_min").get<double>());
}

}  // namespace detail

/// Re-runs the check described by a verdict context (as written by
/// verdict_to_json). Throws VersionMismatch when the context was produced
/// by another schema or code version.
inline BoundVerdict evaluate_context(const json& context) {
    if (!context.is_object() || context.empty()) throw Error(ErrorKind::NotFound, "no verdict context to regenerate");
    const std::string schema = context.value("schema", "");
    const std::string version = context.value("version", "");
    if (schema != kVerdictSchema)
        throw Error(ErrorKind::VersionMismatch, "context schema '" + schema + "' differs from " + kVerdictSchema);
    if (version != kCodeVersion)
        throw Error(ErrorKind::VersionMismatch, "context code version '" + version + "' differs from " + kCodeVersion);
    try {
        const std::string kind = context.at("kind").get<std::string>();
        const CheckOptions opt = detail::options_from_context(context.at("options"));
        const std::uint64_t seed = context.at("seed").get<std::uint64_t>();
        if (kind == "convex_order") {
            const CovMatrix s1 = cov_from_json(context.at("sigma1"));
            const CovMatrix s2 = cov_from_json(context.at("sigma2"));
            auto out = convex_order_check(s1, s2, {ConvexFn::from_json(context.at("psi"))}, opt, seed);
            return out.front();
        }
        const CovMatrix sigma = cov_from_json(context.at("sigma"));
        if (kind == "elliptical")
            return elliptical_check(sigma, RadialSpec::parse(context.at("radial").get<std::string>()),
                                    MonotoneFn::parse(context.at("f").get<std::string>()),
                                    MonotoneFn::parse(context.at("g").get<std::string>()), opt, seed,
                                    parse_comparator(context.at("comparator").get<std::string>()));
        const ExponentSpec spec = detail::spec_from_context(context, sigma.dim());
        if (kind == "lower") return check_lower_bound(sigma, spec, opt, seed);
        if (kind == "upper_amgm") return check_amgm(sigma, spec, opt, seed);
        if (kind == "open_probe") return probe_open_case(sigma, spec, opt, seed);
        if (kind == "upper_convex") {
            std::vector<double> nu_j;
            for (std::size_t j : spec.partition().j()) nu_j.push_back(spec.nu(j));
            return check_upper_bound_convex(sigma, spec.partition(), nu_j, ConvexFn::from_json(context.at("psi")), opt,
                                            seed, spec.delta_min());
        }
        throw Error(ErrorKind::InvalidSpec, "unknown verdict kind '" + kind + "'");
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("malformed verdict context: ") + e.what());
    }
}

}  // namespace gpi
