#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "gpi/random.hpp"

namespace gpi {

/// Running mean and co-moment matrix of q jointly sampled quantities.
/// Batches are merged with Chan's pairwise update in a fixed order.
class MultiStats {
public:
    explicit MultiStats(std::size_t q = 1) : q_(q), mean_(q, 0.0), comoment_(q * q, 0.0) {}

    void add(std::span<const double> x) {
        ++n_;
        const double inv_n = 1.0 / static_cast<double>(n_);
        delta_.resize(q_);
        for (std::size_t i = 0; i < q_; ++i) {
            delta_[i] = x[i] - mean_[i];
            mean_[i] += delta_[i] * inv_n;
        }
        for (std::size_t i = 0; i < q_; ++i) {
            const double post = x[i] - mean_[i];
            for (std::size_t j = 0; j < q_; ++j) comoment_[i * q_ + j] += delta_[j] * post;
        }
    }

    void merge(const MultiStats& o) {
        if (o.n_ == 0) return;
        if (n_ == 0) {
            *this = o;
            return;
        }
        const double na = static_cast<double>(n_), nb = static_cast<double>(o.n_);
        const double n = na + nb;
        std::vector<double> d(q_);
        for (std::size_t i = 0; i < q_; ++i) d[i] = o.mean_[i] - mean_[i];
        for (std::size_t i = 0; i < q_; ++i)
            for (std::size_t j = 0; j < q_; ++j)
                comoment_[i * q_ + j] += o.comoment_[i * q_ + j] + d[i] * d[j] * na * nb / n;
        for (std::size_t i = 0; i < q_; ++i) mean_[i] += d[i] * nb / n;
        n_ += o.n_;
    }

    std::size_t count() const noexcept { return n_; }
    std::size_t quantities() const noexcept { return q_; }
    double mean(std::size_t i) const { return mean_[i]; }

    double covariance(std::size_t i, std::size_t j) const {
        return n_ > 1 ? comoment_[i * q_ + j] / static_cast<double>(n_ - 1) : 0.0;
    }

    /// Standard error of the sample mean of quantity i.
    double std_error(std::size_t i) const {
        return n_ > 1 ? std::sqrt(std::max(0.0, covariance(i, i)) / static_cast<double>(n_)) : 0.0;
    }

    /// Standard error of sum_i c_i * mean_i.
    double std_error(std::span<const double> coeffs) const {
        if (n_ <= 1) return 0.0;
        double v = 0.0;
        for (std::size_t i = 0; i < q_; ++i)
            for (std::size_t j = 0; j < q_; ++j) v += coeffs[i] * coeffs[j] * covariance(i, j);
        return std::sqrt(std::max(0.0, v) / static_cast<double>(n_));
    }

private:
    std::size_t q_;
    std::size_t n_ = 0;
    std::vector<double> mean_;
    std::vector<double> comoment_;
    std::vector<double> delta_;
};

/// Runs `sample(rng, out)` n times, writing q quantities per call. Batch b
/// of kBatchSize draws uses stream b of `seed`, so the result is identical
/// for every worker count.
template <class Sampler>
MultiStats monte_carlo(std::size_t n, std::uint64_t seed, unsigned threads, std::size_t q, Sampler&& sample) {
    const std::size_t batches = batch_count(n);
    std::vector<MultiStats> partial(batches, MultiStats(q));
    parallel_for(batches, threads, [&](std::size_t b) {
        Rng rng(seed, b);
        const std::size_t begin = b * kBatchSize;
        const std::size_t end = std::min(n, begin + kBatchSize);
        std::vector<double> out(q);
        MultiStats local(q);
        for (std::size_t i = begin; i < end; ++i) {
            sample(rng, std::span<double>(out));
            local.add(out);
        }
        partial[b] = std::move(local);
    });
    MultiStats total(q);
    for (const auto& p : partial) total.merge(p);
    return total;
}

}  // namespace gpi
