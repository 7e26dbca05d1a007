#pragma once

// Mixed-sign absolute moments E[prod_J |X_j|^{-2nu_j} prod_Jc |X_i|^{2nu_i}]
// of a centered Gaussian vector, by closed form, Wick pairings, direct Monte
// Carlo, and the s-integral representation
//
//   |x|^{-2nu} = Gamma(nu)^{-1} int_0^inf exp(-s x^2) s^{nu-1} ds,
//
// under which the inner expectation is a positive-exponent moment of the
// renormalized vector Y(s) ~ N(0, (Sigma^{-1} + T_s)^{-1}), T_s = diag(2s, 0).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gpi/error.hpp"
#include "gpi/linalg.hpp"
#include "gpi/quadrature.hpp"
#include "gpi/random.hpp"
#include "gpi/special.hpp"
#include "gpi/stats.hpp"

namespace gpi {

// ---------------------------------------------------------------------------
// Exponent specification

inline constexpr double kDefaultDeltaMin = 0.01;

/// Exponents for a partition (J, Jc): X_j enters as |X_j|^{-2 nu_j} on J and
/// X_i as |X_i|^{2 nu_i} on Jc. Zero exponents are inert.
class ExponentSpec {
public:
    ExponentSpec(IndexPartition part, std::vector<double> nu, double delta_min = kDefaultDeltaMin)
        : part_(std::move(part)), nu_(std::move(nu)), delta_min_(delta_min) {
        validate();
    }

    /// All indices carry positive exponents (J empty).
    static ExponentSpec positive_only(std::vector<double> nu) {
        const std::size_t d = nu.size();
        return ExponentSpec(IndexPartition::positive_only(d), std::move(nu), kDefaultDeltaMin);
    }

    std::size_t dim() const noexcept { return part_.dim(); }
    const IndexPartition& partition() const noexcept { return part_; }
    const std::vector<double>& nu() const noexcept { return nu_; }
    double nu(std::size_t i) const { return nu_[i]; }
    double delta_min() const noexcept { return delta_min_; }

    /// Indices of J with nu > 0.
    std::vector<std::size_t> negative() const {
        std::vector<std::size_t> out;
        for (std::size_t j : part_.j())
            if (nu_[j] > 0.0) out.push_back(j);
        return out;
    }

    /// Indices of Jc with nu > 0.
    std::vector<std::size_t> positive() const {
        std::vector<std::size_t> out;
        for (std::size_t i : part_.jc())
            if (nu_[i] > 0.0) out.push_back(i);
        return out;
    }

    double total_positive() const {
        double acc = 0.0;
        for (std::size_t i : part_.jc()) acc += nu_[i];
        return acc;
    }

    double max_negative() const {
        double m = 0.0;
        for (std::size_t j : part_.j()) m = std::max(m, nu_[j]);
        return m;
    }

    /// Some nu_j lies above the default guard 1/2 - kDefaultDeltaMin.
    bool near_divergence() const { return max_negative() > 0.5 - kDefaultDeltaMin; }

    /// Value of the product inside the expectation at x.
    double integrand(std::span<const double> x) const {
        double v = 1.0;
        for (std::size_t j : part_.j())
            if (nu_[j] > 0.0) v *= std::pow(std::abs(x[j]), -2.0 * nu_[j]);
        for (std::size_t i : part_.jc())
            if (nu_[i] > 0.0) v *= std::pow(std::abs(x[i]), 2.0 * nu_[i]);
        return v;
    }

    friend bool operator==(const ExponentSpec&, const ExponentSpec&) = default;

private:
    void validate() const {
        if (nu_.size() != part_.dim()) throw Error(ErrorKind::InvalidSpec, "nu length must equal dimension");
        if (!(delta_min_ >= 0.0 && delta_min_ < 0.5)) throw Error(ErrorKind::InvalidSpec, "delta_min must be in [0, 1/2)");
        for (double v : nu_)
            if (!std::isfinite(v) || v < 0.0) throw Error(ErrorKind::InvalidSpec, "exponent magnitudes must be finite and >= 0");
        for (std::size_t j : part_.j()) {
            if (!(nu_[j] < 0.5))
                throw Error(ErrorKind::InvalidSpec, "negative-side exponent nu_j must be < 1/2 (moment diverges)");
            if (nu_[j] > 0.5 - delta_min_)
                throw Error(ErrorKind::InvalidSpec,
                            "nu_j = " + std::to_string(nu_[j]) + " exceeds the guard 1/2 - delta_min; lower delta_min to force");
        }
    }

    IndexPartition part_;
    std::vector<double> nu_;
    double delta_min_;
};

// ---------------------------------------------------------------------------
// Estimates

enum class MomentMethod { closed_form, wick, angular_quadrature, mc_direct, s_quadrature, s_importance };

inline std::string_view to_string(MomentMethod m) {
    switch (m) {
        case MomentMethod::closed_form: return "closed_form";
        case MomentMethod::wick: return "wick";
        case MomentMethod::angular_quadrature: return "angular_quadrature";
        case MomentMethod::mc_direct: return "mc_direct";
        case MomentMethod::s_quadrature: return "s_quadrature";
        case MomentMethod::s_importance: return "s_importance";
    }
    return "unknown";
}

/// Point value with its uncertainty: std_error for sampling methods,
/// error_bound for quadrature, both zero for exact formulas.
struct MomentEstimate {
    double value = 0.0;
    double std_error = 0.0;
    double error_bound = 0.0;
    std::size_t n_samples = 0;
    std::size_t evaluations = 0;
    MomentMethod method = MomentMethod::closed_form;
    std::map<std::string, std::string> diagnostics;

    bool exact() const { return std_error == 0.0 && error_bound == 0.0; }
};

struct MomentOptions {
    std::size_t samples = std::size_t{1} << 18;
    std::size_t max_evaluations = 40'000'000;
    double rel_tol = 1e-9;
    double abs_tol = 1e-14;
    unsigned threads = 0;  // 0: default_thread_count()
    bool force_importance = false;

    unsigned thread_count() const { return threads == 0 ? default_thread_count() : threads; }
};

// ---------------------------------------------------------------------------
// Closed forms

/// E|X|^{2 nu} for X ~ N(0, variance): Gamma(nu + 1/2) / sqrt(pi) * (2 variance)^nu.
inline double univariate_abs_moment(double variance, double nu) {
    if (!(variance > 0.0)) throw Error(ErrorKind::DomainError, "variance must be positive");
    if (!(nu > -0.5)) throw Error(ErrorKind::DomainError, "E|X|^{2nu} diverges for nu <= -1/2");
    if (nu == 0.0) return 1.0;
    return gamma(nu + 0.5) / std::sqrt(std::numbers::pi) * std::pow(2.0 * variance, nu);
}

/// E[R^{2p}] for R ~ chi with m degrees of freedom.
inline double chi_moment(std::size_t m, double p) {
    const double half = 0.5 * static_cast<double>(m);
    return std::pow(2.0, p) * gamma(half + p) / gamma(half);
}

inline constexpr int kMaxWickDegree = 24;

/// E[prod_i X_i^{p_i}] for X ~ N(0, cov) by the Isserlis recursion
///   E[X^p] = sum_j c_j cov(i, j) E[X^{p - e_i - e_j}],
/// with i the first index carrying a power and c_j the number of copies of
/// X_j left to pair with one copy of X_i. The table over all p' <= p sums
/// exactly the perfect pairings of the index multiset.
inline double wick_moment(const Matrix& cov, std::span<const int> powers) {
    if (!cov.square() || cov.rows() != powers.size())
        throw Error(ErrorKind::DimensionMismatch, "powers must match covariance dimension");
    int degree = 0;
    for (int p : powers) {
        if (p < 0) throw Error(ErrorKind::DomainError, "powers must be nonnegative");
        degree += p;
    }
    if (degree > kMaxWickDegree) throw Error(ErrorKind::DegreeTooLarge, "total degree above " + std::to_string(kMaxWickDegree));
    if (degree % 2 != 0) return 0.0;
    if (degree == 0) return 1.0;

    std::vector<std::size_t> idx;
    std::vector<int> radix;
    for (std::size_t i = 0; i < powers.size(); ++i)
        if (powers[i] > 0) {
            idx.push_back(i);
            radix.push_back(powers[i] + 1);
        }
    const std::size_t m = idx.size();
    std::vector<std::size_t> stride(m);
    std::size_t states = 1;
    for (std::size_t a = 0; a < m; ++a) {
        stride[a] = states;
        states *= static_cast<std::size_t>(radix[a]);
    }
    std::vector<double> table(states, 0.0);
    std::vector<int> count(m, 0);
    table[0] = 1.0;
    for (std::size_t s = 1; s < states; ++s) {
        // increment the mixed-radix counter
        for (std::size_t a = 0; a < m; ++a) {
            if (++count[a] < radix[a]) break;
            count[a] = 0;
        }
        int total = 0;
        for (int c : count) total += c;
        if (total % 2 != 0) continue;
        std::size_t first = 0;
        while (count[first] == 0) ++first;
        const std::size_t base = s - stride[first];
        double acc = 0.0;
        for (std::size_t b = 0; b < m; ++b) {
            const int copies = b == first ? count[b] - 1 : count[b];
            if (copies <= 0) continue;
            acc += copies * cov(idx[first], idx[b]) * table[base - stride[b]];
        }
        table[s] = acc;
    }
    return table[states - 1];
}

inline double wick_moment(const CovMatrix& sigma, std::span<const int> powers) {
    return wick_moment(sigma.entries(), powers);
}

/// E[|Y1|^{2a} |Y2|^{2b}] for a bivariate centered normal by the polar
/// decomposition Y = R L u: the radial factor is a chi_2 moment and the
/// angular mean reduces to F(psi) + F(pi - psi), where psi is the angle
/// between the rows of the Cholesky factor L and
///   F(L) = int_0^L sin(t)^{2a} sin(L - t)^{2b} dt.
inline double angular_bivariate_moment(const Matrix& cov, double a, double b, double rel_tol = 1e-12) {
    if (cov.rows() != 2 || cov.cols() != 2) throw Error(ErrorKind::DimensionMismatch, "angular moment needs a 2x2 covariance");
    const Matrix l = cholesky(cov, ErrorKind::SingularBlock);
    const double r1 = l(0, 0);
    const double r2 = std::hypot(l(1, 0), l(1, 1));
    const double psi = std::atan2(l(1, 1), l(1, 0));
    auto piece = [&](double len) {
        auto f = [&](double, double dl, double dr) {
            return std::pow(std::sin(std::min(dl, std::numbers::pi - dl)), 2.0 * a) *
                   std::pow(std::sin(std::min(dr, std::numbers::pi - dr)), 2.0 * b);
        };
        const auto res = quad::tanh_sinh(f, 0.0, len, rel_tol);
        return res.value;
    };
    const double angular = (piece(psi) + piece(std::numbers::pi - psi)) / std::numbers::pi;
    return chi_moment(2, a + b) * std::pow(r1, 2.0 * a) * std::pow(r2, 2.0 * b) * angular;
}

// ---------------------------------------------------------------------------
// Renormalized covariance (Sigma^{-1} + T_s)^{-1}

/// Strictly positive s-node, one entry per index of J.
struct SVector {
    std::vector<double> s;

    explicit SVector(std::vector<double> values) : s(std::move(values)) {
        for (double v : s)
            if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorKind::DomainError, "s entries must be finite and > 0");
    }
};

/// Precomputed blocks for evaluating the Y(s) family. Each axis is
/// parametrized by theta = 2s/(1+2s) and phi = 1/(1+2s), which stay finite
/// for s -> 0 and s -> infinity. With N = Phi^{1/2} A^{-1} Phi^{1/2} + Theta,
///   (A^{-1} + S)^{-1} = Phi^{1/2} N^{-1} Phi^{1/2},
///   det(I + S A)     = det(N) det(A) / det(Phi),
/// and the remaining blocks follow the block-inverse formulas:
///   top-right    (A^{-1}+S)^{-1} A^{-1} B,
///   bottom-right Sigma/A + B^T A^{-1} (A^{-1}+S)^{-1} A^{-1} B.
class RenormalizedFamily {
public:
    RenormalizedFamily(const CovMatrix& sigma, IndexPartition part) : part_(std::move(part)) {
        require_partition_dim(sigma.entries(), part_);
        const BlockView v = blocks(sigma, part_);
        const Matrix la = cholesky(v.a, ErrorKind::SingularBlock);
        log_det_a_ = log_det_from_cholesky(la);
        a_inv_ = symmetrized(cholesky_solve(la, Matrix::identity(v.a.rows())));
        g_ = cholesky_solve(la, v.b);
        schur_ = symmetrized(v.c - v.b.transpose() * g_);
    }

    const IndexPartition& partition() const noexcept { return part_; }
    std::size_t axes() const noexcept { return part_.j().size(); }
    const Matrix& schur() const noexcept { return schur_; }

    /// Evaluates the node; returns -1/2 (log det N + log det A) and fills the
    /// Jc-block covariance restricted to `rest` (local Jc positions).
    double evaluate(std::span<const double> theta, std::span<const double> phi, std::span<const std::size_t> rest,
                    Matrix& rest_cov) const {
        const std::size_t k = axes();
        Matrix n(k, k);
        for (std::size_t i = 0; i < k; ++i) {
            const double si = std::sqrt(phi[i]);
            for (std::size_t j = 0; j < k; ++j) n(i, j) = si * a_inv_(i, j) * std::sqrt(phi[j]);
            n(i, i) += theta[i];
        }
        const Matrix ln = cholesky(n, ErrorKind::SingularBlock);
        const std::size_t r = rest.size();
        // W = L_N^{-1} Phi^{1/2} G restricted to `rest`; then G^T K G = W^T W.
        Matrix w(k, r);
        for (std::size_t c = 0; c < r; ++c)
            for (std::size_t i = 0; i < k; ++i) {
                double v = std::sqrt(phi[i]) * g_(i, rest[c]);
                for (std::size_t t = 0; t < i; ++t) v -= ln(i, t) * w(t, c);
                w(i, c) = v / ln(i, i);
            }
        rest_cov = Matrix(r, r);
        for (std::size_t a = 0; a < r; ++a)
            for (std::size_t b = a; b < r; ++b) {
                double v = schur_(rest[a], rest[b]);
                for (std::size_t t = 0; t < k; ++t) v += w(t, a) * w(t, b);
                rest_cov(a, b) = v;
                rest_cov(b, a) = v;
            }
        return -0.5 * (log_det_from_cholesky(ln) + log_det_a_);
    }

    /// Full d x d covariance of Y(s) in original index order.
    Matrix full(std::span<const double> theta, std::span<const double> phi) const {
        const std::size_t k = axes();
        const std::size_t r = part_.jc().size();
        Matrix n(k, k);
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j) n(i, j) = std::sqrt(phi[i]) * a_inv_(i, j) * std::sqrt(phi[j]);
            n(i, i) += theta[i];
        }
        const Matrix n_inv = spd_inverse(n);
        Matrix kmat(k, k);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) kmat(i, j) = std::sqrt(phi[i]) * n_inv(i, j) * std::sqrt(phi[j]);
        kmat = symmetrized(kmat);
        const Matrix tr = kmat * g_;
        Matrix br = schur_;
        if (r > 0) br = symmetrized(schur_ + g_.transpose() * tr);
        return assemble(kmat, tr, br, part_);
    }

    /// theta/phi of a concrete s.
    static void axis_weights(std::span<const double> s, std::vector<double>& theta, std::vector<double>& phi) {
        theta.resize(s.size());
        phi.resize(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            phi[i] = 1.0 / (1.0 + 2.0 * s[i]);
            theta[i] = 2.0 * s[i] * phi[i];
        }
    }

private:
    IndexPartition part_;
    double log_det_a_ = 0.0;
    Matrix a_inv_;
    Matrix g_;  // A^{-1} B
    Matrix schur_;
};

/// (Sigma^{-1} + T_s)^{-1} with T_s = diag(2 s_J, 0).
inline CovMatrix transformed_covariance(const CovMatrix& sigma, const IndexPartition& part, const SVector& s) {
    if (s.s.size() != part.j().size()) throw Error(ErrorKind::DimensionMismatch, "s must have one entry per index of J");
    const RenormalizedFamily family(sigma, part);
    std::vector<double> theta, phi;
    RenormalizedFamily::axis_weights(s.s, theta, phi);
    return CovMatrix(family.full(theta, phi));
}

/// E[exp(-X^T T_s X / 2)] = det(I + T_s Sigma)^{-1/2}, via log-determinants.
inline double gaussian_laplace_factor(const CovMatrix& sigma, const IndexPartition& part, const SVector& s) {
    if (s.s.size() != part.j().size()) throw Error(ErrorKind::DimensionMismatch, "s must have one entry per index of J");
    const RenormalizedFamily family(sigma, part);
    std::vector<double> theta, phi;
    RenormalizedFamily::axis_weights(s.s, theta, phi);
    Matrix unused;
    double log_value = family.evaluate(theta, phi, {}, unused);
    for (double p : phi) log_value += 0.5 * std::log(p);
    return std::exp(log_value);
}

// ---------------------------------------------------------------------------
// Inner positive-exponent moments

enum class InnerMethod { automatic, none, closed_form, exact_wick, angular, mc };

inline std::string_view to_string(InnerMethod m) {
    switch (m) {
        case InnerMethod::automatic: return "auto";
        case InnerMethod::none: return "none";
        case InnerMethod::closed_form: return "closed_form";
        case InnerMethod::exact_wick: return "exact_wick";
        case InnerMethod::angular: return "angular";
        case InnerMethod::mc: return "mc";
    }
    return "unknown";
}

namespace detail {

inline bool is_integer(double v) { return v == std::floor(v); }

/// Positive-exponent coordinates of Y(s) are mutually independent for every
/// s: their Sigma block is diagonal and at most one of them is correlated
/// with the negative block.
inline bool positive_block_independent(const CovMatrix& sigma, std::span<const std::size_t> neg,
                                       std::span<const std::size_t> pos) {
    for (std::size_t a = 0; a < pos.size(); ++a)
        for (std::size_t b = a + 1; b < pos.size(); ++b)
            if (sigma(pos[a], pos[b]) != 0.0) return false;
    std::size_t linked = 0;
    for (std::size_t i : pos) {
        bool any = false;
        for (std::size_t j : neg) any = any || sigma(i, j) != 0.0;
        linked += any ? 1 : 0;
    }
    return linked <= 1;
}

}  // namespace detail

/// Resolves `automatic` and validates explicit requests.
inline InnerMethod plan_inner(const CovMatrix& sigma, const ExponentSpec& spec, InnerMethod requested) {
    const auto neg = spec.negative();
    const auto pos = spec.positive();
    bool all_integer = true;
    for (std::size_t i : pos) all_integer = all_integer && detail::is_integer(spec.nu(i));
    const bool independent = detail::positive_block_independent(sigma, neg, pos);
    switch (requested) {
        case InnerMethod::automatic:
            if (pos.empty()) return InnerMethod::none;
            if (pos.size() == 1 || independent) return InnerMethod::closed_form;
            if (all_integer) {
                int degree = 0;
                for (std::size_t i : pos) degree += static_cast<int>(2.0 * spec.nu(i));
                if (degree <= kMaxWickDegree) return InnerMethod::exact_wick;
            }
            if (pos.size() == 2) return InnerMethod::angular;
            return InnerMethod::mc;
        case InnerMethod::none:
            if (!pos.empty()) throw Error(ErrorKind::InvalidSpec, "inner=none needs an empty positive block");
            return InnerMethod::none;
        case InnerMethod::closed_form:
            if (!(pos.size() <= 1 || independent))
                throw Error(ErrorKind::InvalidSpec, "closed-form inner needs independent positive coordinates");
            return InnerMethod::closed_form;
        case InnerMethod::exact_wick:
            if (!all_integer) throw Error(ErrorKind::InvalidSpec, "exact_wick inner needs integer positive exponents");
            return InnerMethod::exact_wick;
        case InnerMethod::angular:
            if (pos.size() != 2) throw Error(ErrorKind::InvalidSpec, "angular inner needs exactly two positive indices");
            return InnerMethod::angular;
        case InnerMethod::mc:
            return pos.empty() ? InnerMethod::none : InnerMethod::mc;
    }
    return requested;
}

/// Deterministic E[prod_a |Y_a|^{2 nu_a}] for Y ~ N(0, cov).
inline double inner_moment(InnerMethod method, const Matrix& cov, std::span<const double> nu) {
    switch (method) {
        case InnerMethod::none: return 1.0;
        case InnerMethod::closed_form: {
            double v = 1.0;
            for (std::size_t a = 0; a < nu.size(); ++a) v *= univariate_abs_moment(cov(a, a), nu[a]);
            return v;
        }
        case InnerMethod::exact_wick: {
            std::vector<int> powers(nu.size());
            for (std::size_t a = 0; a < nu.size(); ++a) powers[a] = static_cast<int>(std::lround(2.0 * nu[a]));
            return wick_moment(cov, powers);
        }
        case InnerMethod::angular: return angular_bivariate_moment(cov, nu[0], nu[1]);
        default: break;
    }
    throw Error(ErrorKind::InvalidSpec, "inner method is not deterministic");
}

/// One radial-integrated draw of E[prod_a |Y_a|^{2 nu_a}]: with Y = R L u,
/// R ~ chi_m independent of the direction u, the radial factor is replaced
/// by its exact moment.
inline double inner_angular_draw(const Matrix& chol, std::span<const double> nu, double radial_moment, Rng& rng,
                                 std::vector<double>& u) {
    const std::size_t m = nu.size();
    u.resize(m);
    double norm2 = 0.0;
    do {
        rng.fill_normal(u);
        norm2 = 0.0;
        for (double v : u) norm2 += v * v;
    } while (!(norm2 > 0.0));
    const double inv = 1.0 / std::sqrt(norm2);
    double v = radial_moment;
    for (std::size_t a = 0; a < m; ++a) {
        double y = 0.0;
        for (std::size_t b = 0; b <= a; ++b) y += chol(a, b) * u[b];
        v *= std::pow(std::abs(y * inv), 2.0 * nu[a]);
    }
    return v;
}

// ---------------------------------------------------------------------------
// s-integral representation

/// Per-axis change of variables x in (0, 2) -> s in (0, inf):
///   x <= 1: s = x^{1/nu},              s^{nu-1} ds = dx / nu
///   x >  1: s = (2 - x)^{-1/beta},     s^{nu-1} ds = s^{1/2} dx / beta,
/// beta = 1/2 - nu. The laplace factor's phi^{1/2} is folded into the axis
/// weight, so each factor stays bounded on the whole axis.
struct AxisNode {
    double theta;
    double phi;
    double weight;
};

inline AxisNode axis_node(double x, double nu, double gamma_nu) {
    if (x <= 1.0) {
        const double s = std::pow(x, 1.0 / nu);
        const double phi = 1.0 / (1.0 + 2.0 * s);
        return {2.0 * s * phi, phi, std::sqrt(phi) / (nu * gamma_nu)};
    }
    const double beta = 0.5 - nu;
    const double q = std::pow(2.0 - x, 1.0 / beta);  // 1 / s
    return {2.0 / (q + 2.0), q / (q + 2.0), 1.0 / (beta * gamma_nu * std::sqrt(2.0 + q))};
}

/// Integrand of the representation in x-coordinates, shared by the moment
/// and the bound checkers.
class SRepresentation {
public:
    SRepresentation(const CovMatrix& sigma, const ExponentSpec& spec)
        : neg_(spec.negative()),
          pos_(spec.positive()),
          family_(sigma, neg_.empty() ? IndexPartition::positive_only(sigma.dim()) : IndexPartition(sigma.dim(), neg_)) {
        for (std::size_t j : neg_) {
            nu_neg_.push_back(spec.nu(j));
            gamma_neg_.push_back(gamma(spec.nu(j)));
        }
        for (std::size_t i : pos_) nu_pos_.push_back(spec.nu(i));
        const auto& rest = family_.partition().jc();
        for (std::size_t i : pos_) pos_local_.push_back(static_cast<std::size_t>(
            std::lower_bound(rest.begin(), rest.end(), i) - rest.begin()));
    }

    std::size_t axes() const noexcept { return neg_.size(); }
    const std::vector<std::size_t>& negative() const noexcept { return neg_; }
    const std::vector<std::size_t>& positive() const noexcept { return pos_; }
    const std::vector<double>& nu_positive() const noexcept { return nu_pos_; }
    const RenormalizedFamily& family() const noexcept { return family_; }

    /// Weight W(x) = prod axis weights * det-factor / prod Gamma(nu_j), and the
    /// covariance of Y(s) on the positive indices (their Jc order).
    double node(std::span<const double> x, Matrix& pos_cov) const {
        const std::size_t k = axes();
        thread_local std::vector<double> theta, phi;
        theta.resize(k);
        phi.resize(k);
        double w = 1.0;
        for (std::size_t a = 0; a < k; ++a) {
            const AxisNode n = axis_node(x[a], nu_neg_[a], gamma_neg_[a]);
            theta[a] = n.theta;
            phi[a] = n.phi;
            w *= n.weight;
        }
        return w * std::exp(family_.evaluate(theta, phi, pos_local_, pos_cov));
    }

    /// Same node, covariance over every index outside the negative block.
    double node_rest(std::span<const double> x, Matrix& rest_cov) const {
        std::vector<std::size_t> all(family_.partition().jc().size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        return node_at(x, all, rest_cov);
    }

    /// Local positions (in the family's complement) of original indices,
    /// none of which may carry a negative exponent.
    std::vector<std::size_t> local_positions(std::span<const std::size_t> original) const {
        const auto& rest = family_.partition().jc();
        std::vector<std::size_t> out;
        for (std::size_t i : original) {
            const auto it = std::lower_bound(rest.begin(), rest.end(), i);
            if (it == rest.end() || *it != i)
                throw Error(ErrorKind::InvalidPartition, "index " + std::to_string(i) + " lies in the negative block");
            out.push_back(static_cast<std::size_t>(it - rest.begin()));
        }
        return out;
    }

    /// Node weight with the covariance of Y(s) at the given local positions.
    double node_at(std::span<const double> x, std::span<const std::size_t> local, Matrix& cov) const {
        const std::size_t k = axes();
        thread_local std::vector<double> theta, phi;
        theta.resize(k);
        phi.resize(k);
        double w = 1.0;
        for (std::size_t a = 0; a < k; ++a) {
            const AxisNode n = axis_node(x[a], nu_neg_[a], gamma_neg_[a]);
            theta[a] = n.theta;
            phi[a] = n.phi;
            w *= n.weight;
        }
        return w * std::exp(family_.evaluate(theta, phi, local, cov));
    }

private:
    std::vector<std::size_t> neg_;
    std::vector<std::size_t> pos_;
    RenormalizedFamily family_;
    std::vector<double> nu_neg_;
    std::vector<double> gamma_neg_;
    std::vector<double> nu_pos_;
    std::vector<std::size_t> pos_local_;
};

namespace detail {

/// Nested adaptive Gauss-Kronrod over (0, 2)^k with a break at 1 per axis.
class NestedQuadrature {
public:
    NestedQuadrature(std::size_t k, const MomentOptions& opt) : k_(k), opt_(opt), x_(k) {}

    template <class F>
    quad::Result run(F&& f) {
        std::function<double(std::span<const double>)> fn = std::forward<F>(f);
        f_ = &fn;
        const quad::Result r = level(0);
        quad::Result out = r;
        out.evaluations = evaluations_;
        out.error = r.error + inner_rel_error_ * std::abs(r.value);
        out.converged = r.converged && inner_converged_ && evaluations_ <= opt_.max_evaluations;
        return out;
    }

private:
    quad::Result level(std::size_t axis) {
        quad::Tolerance tol;
        tol.rel = axis == 0 ? opt_.rel_tol : 0.1 * opt_.rel_tol;
        tol.abs = opt_.abs_tol;
        tol.max_evaluations = opt_.max_evaluations;
        auto integrand = [&](double x) {
            x_[axis] = x;
            if (axis + 1 == k_) {
                ++evaluations_;
                if (evaluations_ > opt_.max_evaluations) throw Error(ErrorKind::BudgetExceeded, "quadrature evaluation budget exhausted");
                return (*f_)(x_);
            }
            const quad::Result inner = level(axis + 1);
            if (!inner.converged) inner_converged_ = false;
            if (inner.value != 0.0) inner_rel_error_ = std::max(inner_rel_error_, inner.error / std::abs(inner.value));
            return inner.value;
        };
        return quad::gauss_kronrod(integrand, std::vector<double>{0.0, 1.0, 2.0}, tol);
    }

    std::size_t k_;
    MomentOptions opt_;
    std::vector<double> x_;
    const std::function<double(std::span<const double>)>* f_ = nullptr;
    std::size_t evaluations_ = 0;
    double inner_rel_error_ = 0.0;
    bool inner_converged_ = true;
};

inline void add_guard_diagnostics(const ExponentSpec& spec, MomentEstimate& est) {
    if (spec.near_divergence()) est.diagnostics["near_divergence"] = "nu_j above 1/2 - 0.01; integrand tails are extreme";
}

}  // namespace detail

inline constexpr std::size_t kMaxQuadratureAxes = 3;

/// The representation integral
///   (prod Gamma(nu_j))^{-1} int laplace(s) Inner(Y(s)) prod s_j^{nu_j - 1} ds.
/// Deterministic inner moments with at most three axes use nested adaptive
/// quadrature; otherwise the axes are importance sampled uniformly in the
/// x-coordinates of axis_node (bounded weights, finite variance).
inline MomentEstimate s_representation_moment(const CovMatrix& sigma, const ExponentSpec& spec,
                                              InnerMethod inner = InnerMethod::automatic,
                                              const MomentOptions& opt = {}, std::uint64_t seed = 0) {
    if (spec.dim() != sigma.dim()) throw Error(ErrorKind::InvalidSpec, "spec dimension does not match covariance");
    const InnerMethod plan = plan_inner(sigma, spec, inner);
    const SRepresentation rep(sigma, spec);
    const std::size_t k = rep.axes();
    const auto& nu_pos = rep.nu_positive();
    MomentEstimate est;
    est.diagnostics["inner"] = std::string(to_string(plan));

    if (k == 0 && plan != InnerMethod::mc) {
        Matrix pos_cov = submatrix(sigma.entries(), rep.positive(), rep.positive());
        est.value = inner_moment(plan, pos_cov, nu_pos);
        est.method = plan == InnerMethod::exact_wick ? MomentMethod::wick
                     : plan == InnerMethod::angular  ? MomentMethod::angular_quadrature
                                                     : MomentMethod::closed_form;
        if (plan == InnerMethod::angular) est.error_bound = 1e-12 * est.value;
        return est;
    }

    const bool deterministic = plan != InnerMethod::mc;
    if (deterministic && k <= kMaxQuadratureAxes && !opt.force_importance) {
        detail::NestedQuadrature nq(k, opt);
        Matrix pos_cov;
        const quad::Result r = nq.run([&](std::span<const double> x) {
            const double w = rep.node(x, pos_cov);
            return w * inner_moment(plan, pos_cov, nu_pos);
        });
        if (!r.converged)
            throw Error(ErrorKind::BudgetExceeded, "s-quadrature did not reach tolerance within " +
                                                       std::to_string(opt.max_evaluations) + " evaluations");
        est.value = r.value;
        est.error_bound = r.error;
        est.evaluations = r.evaluations;
        est.method = MomentMethod::s_quadrature;
        detail::add_guard_diagnostics(spec, est);
        return est;
    }

    const std::size_t n = opt.samples;
    if (n < 2) throw Error(ErrorKind::InvalidSpec, "importance sampling needs at least 2 samples");
    const double volume = std::pow(2.0, static_cast<double>(k));
    double total_nu = 0.0;
    for (double v : nu_pos) total_nu += v;
    const double radial = chi_moment(nu_pos.size(), total_nu);
    const MultiStats stats = monte_carlo(n, seed, opt.thread_count(), 1, [&](Rng& rng, std::span<double> out) {
        std::vector<double> x(k);
        for (double& v : x) v = 2.0 * rng.uniform();
        Matrix pos_cov;
        const double w = rep.node(x, pos_cov);
        double value = 0.0;
        if (plan == InnerMethod::mc) {
            thread_local std::vector<double> u;
            const Matrix l = cholesky(pos_cov, ErrorKind::SingularBlock);
            value = inner_angular_draw(l, nu_pos, radial, rng, u);
        } else {
            value = inner_moment(plan, pos_cov, nu_pos);
        }
        out[0] = volume * w * value;
    });
    est.value = stats.mean(0);
    est.std_error = stats.std_error(0);
    est.n_samples = n;
    est.method = MomentMethod::s_importance;
    detail::add_guard_diagnostics(spec, est);
    return est;
}

/// Direct Monte Carlo: x = L z with z standard normal, deterministic per
/// seed. Flags infinite_variance_risk when some nu_j >= 1/4.
inline MomentEstimate mc_mixed_moment(const CovMatrix& sigma, const ExponentSpec& spec, std::size_t n,
                                      std::uint64_t seed, unsigned threads = 0) {
    if (spec.dim() != sigma.dim()) throw Error(ErrorKind::InvalidSpec, "spec dimension does not match covariance");
    if (n < 1000) throw Error(ErrorKind::InvalidSpec, "mc_mixed_moment needs n >= 1000");
    const std::size_t d = sigma.dim();
    const Matrix& l = sigma.chol();
    const MultiStats stats =
        monte_carlo(n, seed, threads == 0 ? default_thread_count() : threads, 1, [&](Rng& rng, std::span<double> out) {
            thread_local std::vector<double> z, x;
            z.resize(d);
            x.resize(d);
            rng.fill_normal(z);
            for (std::size_t i = 0; i < d; ++i) {
                double v = 0.0;
                for (std::size_t j = 0; j <= i; ++j) v += l(i, j) * z[j];
                x[i] = v;
            }
            out[0] = spec.integrand(x);
        });
    MomentEstimate est;
    est.value = stats.mean(0);
    est.std_error = stats.std_error(0);
    est.n_samples = n;
    est.method = MomentMethod::mc_direct;
    if (spec.max_negative() >= 0.25)
        est.diagnostics["infinite_variance_risk"] = "some nu_j >= 1/4: the estimator's variance is infinite";
    detail::add_guard_diagnostics(spec, est);
    return est;
}

// ---------------------------------------------------------------------------
// Method dispatch

enum class MethodChoice { automatic, closed_form, wick, mc_direct, s_quadrature, s_importance };

inline MethodChoice parse_method_choice(std::string_view s) {
    if (s == "auto") return MethodChoice::automatic;
    if (s == "closed_form") return MethodChoice::closed_form;
    if (s == "wick") return MethodChoice::wick;
    if (s == "mc_direct" || s == "mc") return MethodChoice::mc_direct;
    if (s == "s_quadrature") return MethodChoice::s_quadrature;
    if (s == "s_importance") return MethodChoice::s_importance;
    throw Error(ErrorKind::ParseError, "unknown method '" + std::string(s) + "'");
}

/// Every active coordinate uncorrelated with every other.
inline bool active_independent(const CovMatrix& sigma, const ExponentSpec& spec) {
    std::vector<std::size_t> active = spec.negative();
    const auto pos = spec.positive();
    active.insert(active.end(), pos.begin(), pos.end());
    for (std::size_t a = 0; a < active.size(); ++a)
        for (std::size_t b = a + 1; b < active.size(); ++b)
            if (sigma(active[a], active[b]) != 0.0) return false;
    return true;
}

inline MomentEstimate moment(const CovMatrix& sigma, const ExponentSpec& spec, MethodChoice choice,
                             const MomentOptions& opt = {}, std::uint64_t seed = 0) {
    switch (choice) {
        case MethodChoice::closed_form: {
            if (!active_independent(sigma, spec))
                throw Error(ErrorKind::InvalidSpec, "closed form needs mutually uncorrelated active coordinates");
            MomentEstimate est;
            est.value = 1.0;
            for (std::size_t j : spec.negative()) est.value *= univariate_abs_moment(sigma(j, j), -spec.nu(j));
            for (std::size_t i : spec.positive()) est.value *= univariate_abs_moment(sigma(i, i), spec.nu(i));
            est.method = MomentMethod::closed_form;
            return est;
        }
        case MethodChoice::wick: {
            if (!spec.negative().empty()) throw Error(ErrorKind::InvalidSpec, "wick needs no negative exponents");
            std::vector<int> powers(spec.dim(), 0);
            for (std::size_t i : spec.positive()) {
                if (!detail::is_integer(spec.nu(i))) throw Error(ErrorKind::InvalidSpec, "wick needs integer exponents");
                powers[i] = static_cast<int>(2.0 * spec.nu(i));
            }
            MomentEstimate est;
            est.value = wick_moment(sigma, powers);
            est.method = MomentMethod::wick;
            return est;
        }
        case MethodChoice::mc_direct: return mc_mixed_moment(sigma, spec, opt.samples, seed, opt.threads);
        case MethodChoice::s_quadrature: {
            MomentOptions o = opt;
            o.force_importance = false;
            const InnerMethod plan = plan_inner(sigma, spec, InnerMethod::automatic);
            if (plan == InnerMethod::mc || spec.negative().size() > kMaxQuadratureAxes)
                throw Error(ErrorKind::InvalidSpec, "s_quadrature needs a deterministic inner moment and at most 3 axes");
            return s_representation_moment(sigma, spec, plan, o, seed);
        }
        case MethodChoice::s_importance: {
            MomentOptions o = opt;
            o.force_importance = true;
            return s_representation_moment(sigma, spec, InnerMethod::automatic, o, seed);
        }
        case MethodChoice::automatic: break;
    }
    return s_representation_moment(sigma, spec, InnerMethod::automatic, opt, seed);
}

}  // namespace gpi
