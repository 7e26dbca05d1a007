#pragma once

// Deterministic seeded random streams and the random correlation generator.
//
// Every stochastic computation is split into fixed-size batches; batch b
// draws from stream derive_seed(seed, b). Partial results are reduced in
// batch order, so results do not depend on the worker count.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <exception>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "gpi/error.hpp"
#include "gpi/linalg.hpp"

namespace gpi {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Seed of substream `stream` under master seed `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix64(mix64(seed) ^ mix64(stream + 0x632BE59BD9B4E019ULL));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t seed, std::uint64_t stream) : engine_(derive_seed(seed, stream)) {}

    /// Uniform on the open interval (0, 1).
    double uniform() {
        for (;;) {
            const double u = std::generate_canonical<double, 53>(engine_);
            if (u > 0.0 && u < 1.0) return u;
        }
    }

    double normal() { return normal_(engine_); }

    void fill_normal(std::span<double> out) {
        for (double& v : out) v = normal_(engine_);
    }

    std::uint64_t next_u64() { return engine_(); }

    std::size_t uniform_index(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Worker cap from GPI_THREADS, else hardware concurrency.
inline unsigned default_thread_count() {
    if (const char* env = std::getenv("GPI_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0, n) on up to `threads` workers. Bodies must
/// write only to slots they own.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::min<std::size_t>(n, 1024))));
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= n || failed.load()) return;
                    try {
                        body(i);
                    } catch (...) {
                        if (!failed.exchange(true)) failure = std::current_exception();
                        return;
                    }
                }
            });
    }
    if (failure) std::rethrow_exception(failure);
}

/// Samples per stochastic batch; part of the determinism contract.
inline constexpr std::size_t kBatchSize = 4096;

inline std::size_t batch_count(std::size_t n) { return (n + kBatchSize - 1) / kBatchSize; }

// ---------------------------------------------------------------------------

inline constexpr double kDefaultConditionCap = 1e4;
inline constexpr int kCorrelationRetries = 1000;

/// Random correlation matrix: Gram matrix of d unit vectors drawn uniformly
/// on the sphere, resampled until its condition number is <= condition_cap.
inline CovMatrix random_correlation(std::size_t d, std::uint64_t seed, double condition_cap = kDefaultConditionCap) {
    if (d == 0) throw Error(ErrorKind::DomainError, "random_correlation needs d >= 1");
    if (!(condition_cap > 1.0)) throw Error(ErrorKind::DomainError, "condition_cap must exceed 1");
    if (d == 1) return CovMatrix(Matrix::identity(1));
    for (int attempt = 0; attempt < kCorrelationRetries; ++attempt) {
        Rng rng(seed, static_cast<std::uint64_t>(attempt));
        std::vector<std::vector<double>> cols(d, std::vector<double>(d));
        for (auto& c : cols) {
            double norm2 = 0.0;
            do {
                rng.fill_normal(c);
                norm2 = 0.0;
                for (double v : c) norm2 += v * v;
            } while (!(norm2 > 0.0));
            const double inv = 1.0 / std::sqrt(norm2);
            for (double& v : c) v *= inv;
        }
        Matrix g(d, d);
        for (std::size_t i = 0; i < d; ++i) {
            g(i, i) = 1.0;
            for (std::size_t j = i + 1; j < d; ++j) {
                double dot = 0.0;
                for (std::size_t k = 0; k < d; ++k) dot += cols[i][k] * cols[j][k];
                dot = std::clamp(dot, -1.0, 1.0);
                g(i, j) = dot;
                g(j, i) = dot;
            }
        }
        if (condition_number_spd(g) > condition_cap) continue;
        if (!try_cholesky(g)) continue;
        return CovMatrix(g);
    }
    throw Error(ErrorKind::GenerationExhausted, "no correlation matrix met the condition cap");
}

}  // namespace gpi
