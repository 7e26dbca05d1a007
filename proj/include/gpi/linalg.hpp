#pragma once

// Dense symmetric linear algebra for small covariance matrices: validation,
// Cholesky, block partitioning by an index set, Schur complements, the
// two block-inverse formulas and Loewner-order tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gpi/error.hpp"

namespace gpi {

/// Row-major dense matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw Error(ErrorKind::DimensionMismatch, "ragged matrix literal");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix diagonal(std::span<const double> diag) {
        Matrix m(diag.size(), diag.size());
        for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
        return m;
    }

    static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
        Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != m.cols_) throw Error(ErrorKind::DimensionMismatch, "ragged rows");
            std::copy(rows[i].begin(), rows[i].end(), m.data_.begin() + static_cast<std::ptrdiff_t>(i * m.cols_));
        }
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool square() const noexcept { return rows_ == cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> data() const noexcept { return data_; }

    std::vector<std::vector<double>> to_rows() const {
        std::vector<std::vector<double>> out(rows_);
        for (std::size_t i = 0; i < rows_; ++i) out[i].assign(row(i).begin(), row(i).end());
        return out;
    }

    Matrix transpose() const {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    Matrix& operator+=(const Matrix& o) {
        require_same_shape(o);
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
        return *this;
    }
    Matrix& operator-=(const Matrix& o) {
        require_same_shape(o);
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
        return *this;
    }
    Matrix& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }

    friend Matrix operator*(const Matrix& a, const Matrix& b) {
        if (a.cols_ != b.rows_) throw Error(ErrorKind::DimensionMismatch, "matrix product shapes");
        Matrix c(a.rows_, b.cols_);
        for (std::size_t i = 0; i < a.rows_; ++i)
            for (std::size_t k = 0; k < a.cols_; ++k) {
                const double aik = a(i, k);
                if (aik == 0.0) continue;
                for (std::size_t j = 0; j < b.cols_; ++j) c(i, j) += aik * b(k, j);
            }
        return c;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    void require_same_shape(const Matrix& o) const {
        if (rows_ != o.rows_ || cols_ != o.cols_) throw Error(ErrorKind::DimensionMismatch, "shape mismatch");
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline std::vector<double> operator*(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) throw Error(ErrorKind::DimensionMismatch, "matrix-vector shapes");
    std::vector<double> y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * x[j];
        y[i] = acc;
    }
    return y;
}

/// Max-norm relative difference |a-b|_max / max(|b|_max, tiny).
inline double relative_max_diff(const Matrix& a, const Matrix& b) {
    return (a - b).max_abs() / std::max(b.max_abs(), std::numeric_limits<double>::min());
}

/// Copies `m` with each (i,j),(j,i) pair replaced by its average.
inline Matrix symmetrized(const Matrix& m) {
    Matrix s = m;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = i + 1; j < m.cols(); ++j) {
            const double v = 0.5 * (m(i, j) + m(j, i));
            s(i, j) = v;
            s(j, i) = v;
        }
    return s;
}

inline double max_asymmetry(const Matrix& m) {
    double worst = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = i + 1; j < m.cols(); ++j) worst = std::max(worst, std::abs(m(i, j) - m(j, i)));
    return worst;
}

/// Extracts the submatrix on the given row and column index lists.
inline Matrix submatrix(const Matrix& m, std::span<const std::size_t> rows, std::span<const std::size_t> cols) {
    Matrix out(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(rows[i], cols[j]);
    return out;
}

// ---------------------------------------------------------------------------
// Cholesky

/// Pivot threshold for positive definiteness, relative to the largest
/// diagonal entry.
inline constexpr double kPivotThreshold = 1e-12;

/// Lower-triangular L with L L^T = m, or nullopt when a pivot falls below
/// kPivotThreshold * max diagonal.
inline std::optional<Matrix> try_cholesky(const Matrix& m, double rel_pivot = kPivotThreshold) {
    if (!m.square()) return std::nullopt;
    const std::size_t n = m.rows();
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, m(i, i));
    if (!(max_diag > 0.0) || !std::isfinite(max_diag)) return n == 0 ? std::optional<Matrix>(Matrix()) : std::nullopt;
    const double threshold = rel_pivot * max_diag;
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double pivot = m(j, j);
        for (std::size_t k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
        if (!(pivot > threshold)) return std::nullopt;
        const double ljj = std::sqrt(pivot);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = m(i, j);
            for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
            l(i, j) = v / ljj;
        }
    }
    return l;
}

inline Matrix cholesky(const Matrix& m, ErrorKind on_failure = ErrorKind::NotPositiveDefinite) {
    auto l = try_cholesky(m);
    if (!l) throw Error(on_failure, "Cholesky factorization failed (matrix not positive definite)");
    return *std::move(l);
}

/// log det(m) from its Cholesky factor.
inline double log_det_from_cholesky(const Matrix& l) {
    double acc = 0.0;
    for (std::size_t i = 0; i < l.rows(); ++i) acc += std::log(l(i, i));
    return 2.0 * acc;
}

/// Solves L L^T X = B in place of B.
inline Matrix cholesky_solve(const Matrix& l, Matrix b) {
    const std::size_t n = l.rows();
    if (b.rows() != n) throw Error(ErrorKind::DimensionMismatch, "cholesky_solve rhs rows");
    for (std::size_t c = 0; c < b.cols(); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double v = b(i, c);
            for (std::size_t k = 0; k < i; ++k) v -= l(i, k) * b(k, c);
            b(i, c) = v / l(i, i);
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double v = b(ii, c);
            for (std::size_t k = ii + 1; k < n; ++k) v -= l(k, ii) * b(k, c);
            b(ii, c) = v / l(ii, ii);
        }
    }
    return b;
}

/// Inverse of a symmetric positive definite matrix; symmetric on output.
inline Matrix spd_inverse(const Matrix& m, ErrorKind on_failure = ErrorKind::SingularBlock) {
    const Matrix l = cholesky(m, on_failure);
    return symmetrized(cholesky_solve(l, Matrix::identity(m.rows())));
}

/// Inverse by LU with partial pivoting; for symmetric blocks that need not
/// be definite.
inline Matrix general_inverse(const Matrix& m, ErrorKind on_failure = ErrorKind::SingularBlock) {
    if (!m.square()) throw Error(ErrorKind::DimensionMismatch, "inverse of non-square matrix");
    const std::size_t n = m.rows();
    Matrix lu = m;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    const double scale = std::max(m.max_abs(), std::numeric_limits<double>::min());
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(lu(i, k)) > std::abs(lu(p, k))) p = i;
        if (std::abs(lu(p, k)) <= 1e-14 * scale) throw Error(on_failure, "singular block in LU factorization");
        if (p != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(p, j));
            std::swap(perm[k], perm[p]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            lu(i, k) /= lu(k, k);
            for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= lu(i, k) * lu(k, j);
        }
    }
    Matrix inv(n, n);
    for (std::size_t c = 0; c < n; ++c) {
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) {
            double v = perm[i] == c ? 1.0 : 0.0;
            for (std::size_t k = 0; k < i; ++k) v -= lu(i, k) * x[k];
            x[i] = v;
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double v = x[ii];
            for (std::size_t k = ii + 1; k < n; ++k) v -= lu(ii, k) * x[k];
            x[ii] = v / lu(ii, ii);
        }
        for (std::size_t i = 0; i < n; ++i) inv(i, c) = x[i];
    }
    return inv;
}

// ---------------------------------------------------------------------------
// Symmetric eigenvalues (cyclic Jacobi). Only used for PSD tests and
// condition numbers on small matrices.

inline std::vector<double> symmetric_eigenvalues(const Matrix& m) {
    if (!m.square()) throw Error(ErrorKind::DimensionMismatch, "eigenvalues of non-square matrix");
    const std::size_t n = m.rows();
    Matrix a = symmetrized(m);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        if (off <= 1e-300) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
    std::sort(eig.begin(), eig.end());
    return eig;
}

inline double spectral_norm_symmetric(const Matrix& m) {
    const auto eig = symmetric_eigenvalues(m);
    if (eig.empty()) return 0.0;
    return std::max(std::abs(eig.front()), std::abs(eig.back()));
}

// ---------------------------------------------------------------------------
// Covariance matrix

/// Tolerance on |m_ij - m_ji| (relative to max |m|) accepted when building a
/// covariance from external data. Stored entries are exactly symmetric.
inline constexpr double kSymmetryTolerance = 1e-12;

/// Symmetric positive definite matrix with its Cholesky factor computed once
/// at construction.
class CovMatrix {
public:
    explicit CovMatrix(const Matrix& entries) {
        if (!entries.square() || entries.rows() == 0)
            throw Error(ErrorKind::DimensionMismatch, "covariance must be a non-empty square matrix");
        for (double v : entries.data())
            if (!std::isfinite(v)) throw Error(ErrorKind::NotPositiveDefinite, "non-finite covariance entry");
        if (max_asymmetry(entries) > kSymmetryTolerance * entries.max_abs())
            throw Error(ErrorKind::NotPositiveDefinite, "covariance is not symmetric");
        entries_ = symmetrized(entries);
        chol_ = cholesky(entries_);
    }

    CovMatrix(std::initializer_list<std::initializer_list<double>> rows) : CovMatrix(Matrix(rows)) {}

    std::size_t dim() const noexcept { return entries_.rows(); }
    const Matrix& entries() const noexcept { return entries_; }
    const Matrix& chol() const noexcept { return chol_; }
    double operator()(std::size_t i, std::size_t j) const { return entries_(i, j); }
    double log_det() const { return log_det_from_cholesky(chol_); }

    friend bool operator==(const CovMatrix& a, const CovMatrix& b) { return a.entries_ == b.entries_; }

private:
    Matrix entries_;
    Matrix chol_;
};

// ---------------------------------------------------------------------------
// Index partitions (0-based internally)

class IndexPartition {
public:
    /// J must be nonempty, in range and free of duplicates; Jc is the sorted
    /// complement.
    IndexPartition(std::size_t d, std::vector<std::size_t> j) : d_(d), j_(std::move(j)) {
        if (j_.empty()) throw Error(ErrorKind::InvalidPartition, "J must be nonempty");
        init();
    }

    /// Degenerate J = {} partition used only for positive-exponent moments.
    static IndexPartition positive_only(std::size_t d) { return IndexPartition(d); }

    std::size_t dim() const noexcept { return d_; }
    const std::vector<std::size_t>& j() const noexcept { return j_; }
    const std::vector<std::size_t>& jc() const noexcept { return jc_; }
    bool contains_j(std::size_t i) const { return std::binary_search(j_.begin(), j_.end(), i); }

    /// J followed by Jc; the block order used by every block operation.
    std::vector<std::size_t> permutation() const {
        std::vector<std::size_t> p = j_;
        p.insert(p.end(), jc_.begin(), jc_.end());
        return p;
    }

    friend bool operator==(const IndexPartition&, const IndexPartition&) = default;

private:
    explicit IndexPartition(std::size_t d) : d_(d) { init(); }

    void init() {
        if (d_ == 0) throw Error(ErrorKind::InvalidPartition, "dimension must be positive");
        std::sort(j_.begin(), j_.end());
        if (std::adjacent_find(j_.begin(), j_.end()) != j_.end())
            throw Error(ErrorKind::InvalidPartition, "duplicate index in J");
        if (!j_.empty() && j_.back() >= d_) throw Error(ErrorKind::InvalidPartition, "index in J out of range");
        jc_.clear();
        for (std::size_t i = 0; i < d_; ++i)
            if (!contains_j(i)) jc_.push_back(i);
    }

    std::size_t d_ = 0;
    std::vector<std::size_t> j_;
    std::vector<std::size_t> jc_;
};

/// Blocks of a matrix under a partition: A = M_JJ, B = M_JJc, C = M_JcJc.
struct BlockView {
    Matrix a;
    Matrix b;
    Matrix c;
};

inline void require_partition_dim(const Matrix& m, const IndexPartition& part) {
    if (!m.square() || m.rows() != part.dim())
        throw Error(ErrorKind::DimensionMismatch, "partition dimension does not match matrix");
}

inline BlockView blocks(const Matrix& m, const IndexPartition& part) {
    require_partition_dim(m, part);
    return {submatrix(m, part.j(), part.j()), submatrix(m, part.j(), part.jc()), submatrix(m, part.jc(), part.jc())};
}

inline BlockView blocks(const CovMatrix& sigma, const IndexPartition& part) { return blocks(sigma.entries(), part); }

/// Writes [[tl, tr], [tr^T, br]] back into original index order.
inline Matrix assemble(const Matrix& tl, const Matrix& tr, const Matrix& br, const IndexPartition& part) {
    const auto& j = part.j();
    const auto& jc = part.jc();
    Matrix out(part.dim(), part.dim());
    for (std::size_t r = 0; r < j.size(); ++r) {
        for (std::size_t c = 0; c < j.size(); ++c) out(j[r], j[c]) = tl(r, c);
        for (std::size_t c = 0; c < jc.size(); ++c) {
            out(j[r], jc[c]) = tr(r, c);
            out(jc[c], j[r]) = tr(r, c);
        }
    }
    for (std::size_t r = 0; r < jc.size(); ++r)
        for (std::size_t c = 0; c < jc.size(); ++c) out(jc[r], jc[c]) = br(r, c);
    return out;
}

inline Matrix reassemble(const BlockView& v, const IndexPartition& part) { return assemble(v.a, v.b, v.c, part); }

/// Sigma / Sigma_JJ = C - B^T A^{-1} B, in the local order of Jc.
inline Matrix schur_complement(const CovMatrix& sigma, const IndexPartition& part) {
    if (part.jc().empty()) throw Error(ErrorKind::InvalidPartition, "Schur complement needs nonempty Jc");
    const BlockView v = blocks(sigma, part);
    if (part.j().empty()) return v.c;
    const Matrix la = cholesky(v.a, ErrorKind::SingularBlock);
    const Matrix g = cholesky_solve(la, v.b);  // A^{-1} B
    return symmetrized(v.c - v.b.transpose() * g);
}

/// Sigma^{-1} from the block formula pivoting on A = Sigma_JJ:
///   [[A^-1 + A^-1 B S^-1 B^T A^-1, -A^-1 B S^-1], [., S^-1]],  S = Sigma/A.
inline Matrix block_inverse(const CovMatrix& sigma, const IndexPartition& part) {
    const BlockView v = blocks(sigma, part);
    const Matrix a_inv = spd_inverse(v.a);
    if (part.jc().empty()) return assemble(a_inv, Matrix(part.j().size(), 0), Matrix(), part);
    const Matrix g = a_inv * v.b;  // A^{-1} B
    const Matrix s_inv = spd_inverse(symmetrized(v.c - v.b.transpose() * g));
    const Matrix gs = g * s_inv;
    const Matrix tl = symmetrized(a_inv + gs * g.transpose());
    return assemble(tl, gs * -1.0, s_inv, part);
}

/// M^{-1} from the block formula pivoting on the bottom-right block
/// R = M_JcJc, with M/R = P - Q R^{-1} Q^T. M need only be symmetric with
/// R and M/R invertible.
inline Matrix block_inverse_variant2(const Matrix& m, const IndexPartition& part) {
    if (max_asymmetry(m) > kSymmetryTolerance * m.max_abs())
        throw Error(ErrorKind::DimensionMismatch, "block_inverse_variant2 expects a symmetric matrix");
    const BlockView v = blocks(m, part);
    if (part.jc().empty()) return general_inverse(v.a);
    const Matrix r_inv = general_inverse(v.c);
    if (part.j().empty()) return assemble(Matrix(), Matrix(0, part.jc().size()), r_inv, part);
    const Matrix h = v.b * r_inv;  // Q R^{-1}
    const Matrix mr_inv = general_inverse(v.a - h * v.b.transpose());
    const Matrix tr = (mr_inv * h) * -1.0;
    const Matrix br = r_inv + h.transpose() * mr_inv * h;
    return assemble(symmetrized(mr_inv), tr, symmetrized(br), part);
}

/// a <= b in the Loewner order: smallest eigenvalue of b - a >= -tol.
/// A negative tol selects the default 1e-10 * ||b||_2.
inline bool loewner_leq(const Matrix& a, const Matrix& b, double tol = -1.0) {
    if (!a.square() || !b.square() || a.rows() != b.rows())
        throw Error(ErrorKind::DimensionMismatch, "loewner_leq operands differ in shape");
    if (tol < 0.0) tol = 1e-10 * spectral_norm_symmetric(b);
    const auto eig = symmetric_eigenvalues(b - a);
    return eig.empty() || eig.front() >= -tol;
}

inline double condition_number_spd(const Matrix& m) {
    const auto eig = symmetric_eigenvalues(m);
    if (eig.empty()) return 1.0;
    if (!(eig.front() > 0.0)) return std::numeric_limits<double>::infinity();
    return eig.back() / eig.front();
}

}  // namespace gpi
