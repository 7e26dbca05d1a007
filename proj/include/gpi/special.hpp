#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <numbers>

#include "gpi/error.hpp"

namespace gpi {

namespace testing_hooks {
/// Relative perturbation applied to every gamma() result. Zero in normal
/// operation; the self-test uses it to check that a corrupted Gamma is caught.
inline std::atomic<double> gamma_perturbation{0.0};
}  // namespace testing_hooks

/// Gamma function via the Lanczos approximation (g = 7, 9 terms) with the
/// reflection formula below 1/2. Relative accuracy is about 1e-15 on (0, 10].
inline double gamma(double x) {
    static constexpr std::array<double, 9> kCoef = {
        0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
        771.32342877765313,      -176.61502916214059,   12.507343278686905,
        -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7,
    };
    if (!std::isfinite(x)) throw Error(ErrorKind::DomainError, "gamma of non-finite argument");
    if (x <= 0.0 && x == std::floor(x)) throw Error(ErrorKind::DomainError, "gamma pole at non-positive integer");
    double result = 0.0;
    if (x < 0.5) {
        result = std::numbers::pi / (std::sin(std::numbers::pi * x) * gamma(1.0 - x));
    } else {
        const double z = x - 1.0;
        double acc = kCoef[0];
        for (int i = 1; i < 9; ++i) acc += kCoef[static_cast<std::size_t>(i)] / (z + i);
        const double t = z + 7.5;
        result = std::sqrt(2.0 * std::numbers::pi) * std::pow(t, z + 0.5) * std::exp(-t) * acc;
    }
    const double eps = testing_hooks::gamma_perturbation.load(std::memory_order_relaxed);
    return eps == 0.0 ? result : result * (1.0 + eps);
}

}  // namespace gpi
