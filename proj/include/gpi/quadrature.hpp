#pragma once

// One-dimensional quadrature: globally adaptive Gauss-Kronrod (7/15) for
// smooth integrands and tanh-sinh for integrands with algebraic endpoint
// singularities.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <vector>

namespace gpi::quad {

struct Result {
    double value = 0.0;
    double error = 0.0;
    std::size_t evaluations = 0;
    bool converged = false;
};

struct Tolerance {
    double abs = 1e-10;
    double rel = 1e-10;
    std::size_t max_evaluations = 200000;
};

namespace detail {

inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000,
};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
};

struct Segment {
    double a, b, value, error;
    bool operator<(const Segment& o) const { return error < o.error; }
};

template <class F>
Segment gk15(F& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double kronrod = fc * kKronrodWeights[7];
    double gauss = fc * kGaussWeights[3];
    for (std::size_t k = 0; k < 7; ++k) {
        const double dx = h * kKronrodNodes[k];
        const double pair = f(c - dx) + f(c + dx);
        kronrod += kKronrodWeights[k] * pair;
        if (k % 2 == 1) gauss += kGaussWeights[k / 2] * pair;
    }
    return {a, b, kronrod * h, std::abs((kronrod - gauss) * h)};
}

}  // namespace detail

/// Integrates f over the union of [breaks[i], breaks[i+1]], bisecting the
/// segment with the largest error estimate until the total error is within
/// max(abs, rel * |value|) or the evaluation cap is hit.
template <class F>
Result gauss_kronrod(F&& f, const std::vector<double>& breaks, const Tolerance& tol) {
    std::priority_queue<detail::Segment> heap;
    Result r;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        heap.push(detail::gk15(f, breaks[i], breaks[i + 1]));
        r.evaluations += 15;
    }
    auto totals = [&] {
        double v = 0.0, e = 0.0;
        auto copy = heap;
        while (!copy.empty()) {
            v += copy.top().value;
            e += copy.top().error;
            copy.pop();
        }
        return std::pair{v, e};
    };
    double value = 0.0, error = 0.0;
    {
        auto [v, e] = totals();
        value = v;
        error = e;
    }
    while (error > std::max(tol.abs, tol.rel * std::abs(value))) {
        if (r.evaluations + 30 > tol.max_evaluations) break;
        const detail::Segment worst = heap.top();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b)) break;
        heap.pop();
        const auto left = detail::gk15(f, worst.a, mid);
        const auto right = detail::gk15(f, mid, worst.b);
        r.evaluations += 30;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum from the segments to shed accumulated rounding of the running totals.
    auto [v, e] = totals();
    r.value = v;
    r.error = e;
    r.converged = e <= std::max(tol.abs, tol.rel * std::abs(v));
    return r;
}

template <class F>
Result gauss_kronrod(F&& f, double a, double b, const Tolerance& tol) {
    return gauss_kronrod(std::forward<F>(f), std::vector<double>{a, b}, tol);
}

/// Tanh-sinh rule on [a, b]. The integrand is never evaluated at the
/// endpoints, so integrable algebraic endpoint singularities are fine. f is
/// called as f(x, distance_to_a, distance_to_b) so that callers can evaluate
/// singular factors without cancellation near the ends.
template <class F>
Result tanh_sinh(F&& f, double a, double b, double rel_tol = 1e-12, int max_level = 10) {
    const double half = 0.5 * (b - a);
    const double pi_2 = 1.5707963267948966;
    Result r;
    const double t_max = 4.0;
    auto term = [&](double t) {
        const double sh = pi_2 * std::sinh(t);
        const double ch = std::cosh(sh);
        const double w = pi_2 * std::cosh(t) / (ch * ch);
        // 1 - tanh(sh) and 1 + tanh(sh) computed without cancellation.
        const double e = std::exp(-2.0 * std::abs(sh));
        const double small = 2.0 * e / (1.0 + e);
        const double dist_left = half * (sh < 0 ? small : 2.0 - small);
        const double dist_right = half * (sh < 0 ? 2.0 - small : small);
        if (!(dist_left > 0.0) || !(dist_right > 0.0)) return 0.0;
        const double x = sh < 0 ? a + dist_left : b - dist_right;
        ++r.evaluations;
        return w * f(x, dist_left, dist_right);
    };
    double h = 1.0;
    double sum = term(0.0);
    for (double t = h; t <= t_max; t += h) sum += term(t) + term(-t);
    double estimate = half * h * sum;
    for (int level = 1; level <= max_level; ++level) {
        h *= 0.5;
        for (double t = h; t <= t_max; t += 2.0 * h) sum += term(t) + term(-t);
        const double next = half * h * sum;
        const double diff = std::abs(next - estimate);
        estimate = next;
        if (level >= 3 && diff <= rel_tol * std::abs(estimate)) {
            r.value = estimate;
            r.error = diff;
            r.converged = true;
            return r;
        }
        r.error = diff;
    }
    r.value = estimate;
    r.converged = r.error <= 1e3 * rel_tol * std::abs(estimate);
    return r;
}

}  // namespace gpi::quad
