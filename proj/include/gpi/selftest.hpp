#pragma once

// Fast built-in checks: closed-form identities, block algebra, a small Monte
// Carlo cross-check and verdict reproducibility. Output is deterministic.

#include <cmath>
#include <functional>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gpi/bounds.hpp"
#include "gpi/linalg.hpp"
#include "gpi/moments.hpp"
#include "gpi/quadrature.hpp"
#include "gpi/random.hpp"

namespace gpi {

struct SelftestResult {
    std::vector<std::string> passed;
    std::vector<std::string> failed;
    bool ok() const { return failed.empty(); }
};

namespace detail {

inline bool close(double a, double b, double rel) { return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)); }

/// E|X|^{2 nu} for X ~ N(0, 1) without the Gamma function: power series on
/// [0, 1] (handles the x^{2 nu} singularity), tanh-sinh on (1, inf).
inline double abs_moment_by_quadrature(double nu) {
    double head = 0.0, term = 1.0;
    for (int k = 0; k < 40; ++k) {
        head += term / (2.0 * nu + 2.0 * k + 1.0);
        term *= -0.5 / (k + 1);
    }
    auto f = [nu](double, double, double dr) {
        // x = 1 / (1 - t), dx = dt / (1 - t)^2
        const double x = 1.0 / dr;
        return std::pow(x, 2.0 * nu) * std::exp(-0.5 * x * x) / (dr * dr);
    };
    const double tail = quad::tanh_sinh(f, 0.0, 1.0, 1e-13, 12).value;
    return 2.0 * (head + tail) / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace detail

inline SelftestResult run_selftest(std::ostream& out) {
    SelftestResult res;
    auto check = [&](const std::string& name, const std::function<std::string()>& body) {
        std::string failure;
        try {
            failure = body();
        } catch (const std::exception& e) {
            failure = std::string("threw ") + e.what();
        }
        if (failure.empty()) {
            res.passed.push_back(name);
            out << "ok    " << name << '\n';
        } else {
            res.failed.push_back(name);
            out << "FAIL  " << name << ": " << failure << '\n';
        }
    };

    check("univariate_abs_moment", [] {
        struct Case { double nu, expected; };
        const Case cases[] = {{-0.25, 1.72007997464903898689574730531}, {0.5, std::sqrt(2.0 / std::numbers::pi)},
                              {1.0, 1.0}, {2.0, 3.0}};
        for (const auto& c : cases) {
            const double v = univariate_abs_moment(1.0, c.nu);
            if (!detail::close(v, c.expected, 1e-12)) return "nu=" + std::to_string(c.nu) + " gave " + std::to_string(v);
        }
        for (double nu : {-0.4, -0.1, 0.3, 1.7}) {
            const double q = detail::abs_moment_by_quadrature(nu);
            if (!detail::close(univariate_abs_moment(1.0, nu), q, 1e-9))
                return "disagrees with quadrature at nu=" + std::to_string(nu);
        }
        return std::string();
    });

    check("s_representation_d1", [] {
        for (double nu : {0.05, 0.25, 0.45}) {
            const CovMatrix one(Matrix::identity(1));
            const ExponentSpec spec(IndexPartition(1, {0}), {nu});
            const double rep = s_representation_moment(one, spec).value;
            if (!detail::close(rep, univariate_abs_moment(1.0, -nu), 1e-7)) return "mismatch at nu=" + std::to_string(nu);
        }
        return std::string();
    });

    check("wick_moment", [] {
        const Matrix s{{2.0, 0.3, -0.5, 0.1}, {0.3, 1.0, 0.2, 0.4}, {-0.5, 0.2, 1.5, -0.3}, {0.1, 0.4, -0.3, 1.2}};
        const int p22[] = {2, 2, 0, 0};
        const int p4[] = {4, 0, 0, 0};
        const int p1111[] = {1, 1, 1, 1};
        if (!detail::close(wick_moment(s, p22), s(0, 0) * s(1, 1) + 2.0 * s(0, 1) * s(0, 1), 1e-14)) return std::string("E[X1^2 X2^2]");
        if (!detail::close(wick_moment(s, p4), 3.0 * s(0, 0) * s(0, 0), 1e-14)) return std::string("E[X1^4]");
        const double e = s(0, 1) * s(2, 3) + s(0, 2) * s(1, 3) + s(0, 3) * s(1, 2);
        if (!detail::close(wick_moment(s, p1111), e, 1e-14)) return std::string("E[X1 X2 X3 X4]");
        return std::string();
    });

    check("block_algebra", [] {
        const CovMatrix sigma = random_correlation(6, 5);
        const IndexPartition part(6, {1, 3, 4});
        const Matrix dense = general_inverse(sigma.entries());
        if (relative_max_diff(block_inverse(sigma, part), dense) > 1e-9) return std::string("block_inverse");
        if (relative_max_diff(block_inverse_variant2(sigma.entries(), part), dense) > 1e-9)
            return std::string("block_inverse_variant2");
        if ((sigma.entries() * dense - Matrix::identity(6)).max_abs() > 1e-10) return std::string("Sigma * Sigma^-1 != I");
        return std::string();
    });

    check("renormalized_covariance", [] {
        const CovMatrix sigma = random_correlation(4, 9);
        const IndexPartition part(4, {0, 2});
        const CovMatrix y = transformed_covariance(sigma, part, SVector({0.7, 3.0}));
        if (!loewner_leq(y.entries(), sigma.entries())) return std::string("not below Sigma in Loewner order");
        const Matrix schur = schur_complement(sigma, part);
        const auto& jc = part.jc();
        for (std::size_t a = 0; a < jc.size(); ++a)
            if (y(jc[a], jc[a]) < schur(a, a) - 1e-12) return std::string("variance below the Schur complement");
        return std::string();
    });

    check("mc_cross_check", [] {
        const CovMatrix sigma(Matrix{{1.0, 0.6}, {0.6, 1.0}});
        const ExponentSpec spec(IndexPartition(2, {0}), {0.2, 1.0});
        const MomentEstimate q = s_representation_moment(sigma, spec);
        const MomentEstimate mc = mc_mixed_moment(sigma, spec, std::size_t{1} << 18, 7);
        const double z = std::abs(q.value - mc.value) / std::hypot(mc.std_error, q.error_bound);
        if (z > 4.0) return "quadrature " + std::to_string(q.value) + " vs MC " + std::to_string(mc.value);
        return std::string();
    });

    check("lower_bound_rhs", [] {
        const CovMatrix sigma(Matrix{{1.0, 0.5}, {0.5, 1.0}});
        const ExponentSpec spec(IndexPartition(2, {0}), {0.25, 1.0});
        const double rhs = lower_bound_rhs(sigma, spec).value;
        if (!detail::close(rhs, 1.29005998098677924, 1e-8)) return "rhs " + std::to_string(rhs);
        if (check_lower_bound(sigma, spec, {}, 1).decision != Decision::verified) return std::string("not verified");
        return std::string();
    });

    check("elliptical_pointwise_H", [] {
        const CovMatrix sigma(Matrix{{1.0, 0.6}, {0.6, 1.0}});
        const MonotoneFn f(MonotoneFn::Kind::exp_decay, 1.0), g(MonotoneFn::Kind::power, 1.0);
        for (int k = 0; k < 1024; ++k) {
            const double t = 2.0 * std::numbers::pi * k / 1024.0;
            const double u[] = {std::cos(t), std::sin(t)};
            if (elliptical_pointwise_H(sigma, u, f, g) > 1e-12) return "H > 0 at grid point " + std::to_string(k);
        }
        return std::string();
    });

    check("verdict_reproducibility", [] {
        const CovMatrix sigma(Matrix{{1.0, 0.8}, {0.8, 1.0}});
        const BoundVerdict v = check_upper_bound_convex(sigma, IndexPartition(2, {0}), {0.3},
                                                        ConvexFn::power_of_weighted_abs_sum({1.0}, 2.0), {}, 3);
        const json a = verdict_to_json(v);
        const json b = verdict_to_json(evaluate_context(a.at("context")));
        if (a.dump() != b.dump()) return std::string("regenerated verdict differs");
        return std::string();
    });

    out << "selftest: " << res.passed.size() << '/' << res.passed.size() + res.failed.size() << " checks passed\n";
    return res;
}

}  // namespace gpi
