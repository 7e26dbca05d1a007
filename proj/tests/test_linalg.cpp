// Linear algebra: Cholesky, partitions, Schur complements, block inverses,
// Loewner order and random correlation matrices.

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "gpi/linalg.hpp"
#include "gpi/random.hpp"

using namespace gpi;

namespace {

// Gauss-Jordan with partial pivoting on a plain vector-of-rows copy; shares
// no code with the library.
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

double max_rel_diff(const Matrix& m, const std::vector<std::vector<double>>& ref) {
    double scale = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i)
        for (std::size_t j = 0; j < ref.size(); ++j) {
            scale = std::max(scale, std::abs(ref[i][j]));
            diff = std::max(diff, std::abs(m(i, j) - ref[i][j]));
        }
    return diff / scale;
}

std::vector<std::size_t> random_subset(Rng& rng, std::size_t d) {
    std::vector<std::size_t> j;
    for (std::size_t i = 0; i < d; ++i)
        if (rng.uniform() < 0.5) j.push_back(i);
    if (j.empty()) j.push_back(rng.uniform_index(d));
    if (j.size() == d) j.pop_back();
    return j;
}

}  // namespace

TEST(Cholesky, ReconstructsMatrix) {
    const Matrix m{{4.0, 2.0, 0.4}, {2.0, 3.0, 0.5}, {0.4, 0.5, 1.0}};
    const Matrix l = cholesky(m);
    EXPECT_LT((l * l.transpose() - m).max_abs(), 1e-14);
    EXPECT_EQ(l(0, 1), 0.0);
}

TEST(Cholesky, RejectsIndefinite) {
    const Matrix m{{1.0, 2.0}, {2.0, 1.0}};
    EXPECT_FALSE(try_cholesky(m).has_value());
    try {
        CovMatrix c(m);
        FAIL() << "accepted an indefinite matrix";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NotPositiveDefinite);
    }
}

TEST(CovMatrix, RejectsAsymmetricAndNonSquare) {
    EXPECT_THROW(CovMatrix(Matrix{{1.0, 0.2}, {0.3, 1.0}}), Error);
    try {
        CovMatrix c(Matrix(2, 3));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
    }
}

TEST(IndexPartition, ComplementSorted) {
    const IndexPartition p(5, {3, 0});
    EXPECT_EQ(p.jc(), (std::vector<std::size_t>{1, 2, 4}));
}

TEST(IndexPartition, RejectsBadIndices) {
    for (auto j : {std::vector<std::size_t>{}, std::vector<std::size_t>{5}, std::vector<std::size_t>{1, 1}}) {
        try {
            IndexPartition p(5, j);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::InvalidPartition);
        }
    }
}

TEST(Schur, BivariateExample) {
    const CovMatrix s{{1.0, 0.5}, {0.5, 1.0}};
    const Matrix sc = schur_complement(s, IndexPartition(2, {0}));
    ASSERT_EQ(sc.rows(), 1u);
    EXPECT_NEAR(sc(0, 0), 0.75, 1e-15);
}

TEST(Schur, IdentityGivesIdentity) {
    const CovMatrix s(Matrix::identity(4));
    const Matrix sc = schur_complement(s, IndexPartition(4, {1, 2}));
    EXPECT_EQ(sc, Matrix::identity(2));
}

TEST(Schur, EqualsInverseOfInverseBlock) {
    const CovMatrix s{{2.0, 1.0, 0.0}, {1.0, 2.0, 1.0}, {0.0, 1.0, 2.0}};
    const auto inv = gauss_jordan_inverse(s.entries().to_rows());
    // Jc = {2}: (Sigma / Sigma_JJ) = 1 / (Sigma^{-1})_{22}
    const Matrix sc = schur_complement(s, IndexPartition(3, {0, 1}));
    EXPECT_NEAR(sc(0, 0), 1.0 / inv[2][2], 1e-14);
    EXPECT_NEAR(sc(0, 0), 4.0 / 3.0, 1e-14);
}

TEST(Schur, RandomAgainstDenseInverse) {
    Rng rng(11);
    for (int t = 0; t < 30; ++t) {
        const std::size_t d = 2 + rng.uniform_index(7);
        const CovMatrix s = random_correlation(d, 100 + t);
        const IndexPartition part(d, random_subset(rng, d));
        const auto inv = gauss_jordan_inverse(s.entries().to_rows());
        std::vector<std::vector<double>> block;
        for (std::size_t a : part.jc()) {
            block.emplace_back();
            for (std::size_t b : part.jc()) block.back().push_back(inv[a][b]);
        }
        EXPECT_LT(max_rel_diff(schur_complement(s, part), gauss_jordan_inverse(block)), 1e-9);
    }
}

TEST(BlockInverse, AgreesWithGaussJordan) {
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
        const std::size_t d = 2 + rng.uniform_index(11);
        const CovMatrix s = random_correlation(d, 500 + t);
        const IndexPartition part(d, random_subset(rng, d));
        const auto ref = gauss_jordan_inverse(s.entries().to_rows());
        EXPECT_LT(max_rel_diff(block_inverse(s, part), ref), 1e-9);
        EXPECT_LT(max_rel_diff(block_inverse_variant2(s.entries(), part), ref), 1e-9);
        EXPECT_LT((s.entries() * block_inverse(s, part) - Matrix::identity(d)).max_abs(), 1e-10);
    }
}

TEST(Partition, AssembleRoundTrip) {
    const CovMatrix s = random_correlation(6, 42);
    const IndexPartition part(6, {1, 4});
    EXPECT_EQ(reassemble(blocks(s, part), part), s.entries());
}

TEST(Loewner, OrderProperties) {
    const Matrix a{{1.0, 0.3}, {0.3, 1.0}};
    Matrix b = a;
    b(0, 0) += 0.5;
    EXPECT_TRUE(loewner_leq(a, b));
    EXPECT_FALSE(loewner_leq(b, a));
    EXPECT_TRUE(loewner_leq(a, a));
}

TEST(Loewner, SchurDiagonalBelowSigma) {
    for (int t = 0; t < 20; ++t) {
        const CovMatrix s = random_correlation(5, 900 + t);
        const IndexPartition part(5, {0, 3});
        const Matrix sc = schur_complement(s, part);
        for (std::size_t a = 0; a < part.jc().size(); ++a)
            EXPECT_LE(sc(a, a), s(part.jc()[a], part.jc()[a]) + 1e-15);
    }
}

TEST(Eigen, SymmetricEigenvaluesOfKnownMatrix) {
    const Matrix m{{2.0, 1.0}, {1.0, 2.0}};
    auto ev = symmetric_eigenvalues(m);
    std::sort(ev.begin(), ev.end());
    EXPECT_NEAR(ev[0], 1.0, 1e-13);
    EXPECT_NEAR(ev[1], 3.0, 1e-13);
}

TEST(RandomCorrelation, UnitDiagonalSymmetricDeterministic) {
    for (std::size_t d : {2u, 5u, 12u}) {
        const CovMatrix a = random_correlation(d, 7), b = random_correlation(d, 7);
        EXPECT_TRUE(a == b);
        for (std::size_t i = 0; i < d; ++i) {
            EXPECT_EQ(a(i, i), 1.0);
            for (std::size_t j = 0; j < d; ++j) EXPECT_EQ(a(i, j), a(j, i));
        }
        EXPECT_LE(condition_number_spd(a.entries()), kDefaultConditionCap);
    }
    EXPECT_FALSE(random_correlation(4, 1) == random_correlation(4, 2));
}

TEST(Rng, SeedDerivationIsStable) {
    Rng a(derive_seed(5, 1)), b(derive_seed(5, 1)), c(derive_seed(5, 2));
    const double x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    EXPECT_NE(x, c.uniform());
}
