#include "gridwatch/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace gridwatch::lin {

Vector matvec(const Matrix& A, const Vector& x) {
    if (static_cast<int>(x.size()) != A.cols()) throw ShapeError("matvec: dimension mismatch");
    Vector y(static_cast<std::size_t>(A.rows()), 0.0);
    for (int r = 0; r < A.rows(); ++r) {
        const double* row = A.row(r);
        double acc = 0.0;
        for (int c = 0; c < A.cols(); ++c) acc += row[c] * x[static_cast<std::size_t>(c)];
        y[static_cast<std::size_t>(r)] = acc;
    }
    return y;
}

Vector matvec_t(const Matrix& A, const Vector& x) {
    if (static_cast<int>(x.size()) != A.rows()) throw ShapeError("matvec_t: dimension mismatch");
    Vector y(static_cast<std::size_t>(A.cols()), 0.0);
    for (int r = 0; r < A.rows(); ++r) {
        const double* row = A.row(r);
        const double xr = x[static_cast<std::size_t>(r)];
        for (int c = 0; c < A.cols(); ++c) y[static_cast<std::size_t>(c)] += row[c] * xr;
    }
    return y;
}

Matrix drop_rows(const Matrix& A, const std::vector<int>& rows_sorted) {
    Matrix out(A.rows() - static_cast<int>(rows_sorted.size()), A.cols());
    int w = 0;
    std::size_t k = 0;
    for (int r = 0; r < A.rows(); ++r) {
        if (k < rows_sorted.size() && rows_sorted[k] == r) {
            ++k;
            continue;
        }
        for (int c = 0; c < A.cols(); ++c) out(w, c) = A(r, c);
        ++w;
    }
    return out;
}

Vector drop_rows(const Vector& v, const std::vector<int>& rows_sorted) {
    Vector out;
    out.reserve(v.size() - rows_sorted.size());
    std::size_t k = 0;
    for (std::size_t r = 0; r < v.size(); ++r) {
        if (k < rows_sorted.size() && static_cast<std::size_t>(rows_sorted[k]) == r) {
            ++k;
            continue;
        }
        out.push_back(v[r]);
    }
    return out;
}

double norm2(const Vector& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

double dot(const Vector& a, const Vector& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

namespace {

// In-place Householder QR of A (m x n, m >= n). beta[j] holds the reflector
// coefficient; the reflector vector lives in column j below the diagonal with
// implicit leading 1.
void householder_qr(Matrix& A, Vector& beta) {
    const int m = A.rows(), n = A.cols();
    beta.assign(static_cast<std::size_t>(n), 0.0);
    for (int j = 0; j < n; ++j) {
        double norm = 0.0;
        for (int i = j; i < m; ++i) norm += A(i, j) * A(i, j);
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        const double alpha = (A(j, j) > 0.0) ? -norm : norm;
        const double v0 = A(j, j) - alpha;
        beta[static_cast<std::size_t>(j)] = -v0 / alpha;  // = v0^2-normalized coefficient
        // store v (scaled so v[0] = 1) below the diagonal
        for (int i = j + 1; i < m; ++i) A(i, j) /= v0;
        A(j, j) = alpha;
        // apply reflector to trailing columns
        for (int c = j + 1; c < n; ++c) {
            double s = A(j, c);
            for (int i = j + 1; i < m; ++i) s += A(i, j) * A(i, c);
            s *= beta[static_cast<std::size_t>(j)];
            A(j, c) -= s;
            for (int i = j + 1; i < m; ++i) A(i, c) -= s * A(i, j);
        }
    }
}

// Apply Q^T (from householder_qr) to b in place.
void apply_qt(const Matrix& qr, const Vector& beta, Vector& b) {
    const int m = qr.rows(), n = qr.cols();
    for (int j = 0; j < n; ++j) {
        if (beta[static_cast<std::size_t>(j)] == 0.0) continue;
        double s = b[static_cast<std::size_t>(j)];
        for (int i = j + 1; i < m; ++i) s += qr(i, j) * b[static_cast<std::size_t>(i)];
        s *= beta[static_cast<std::size_t>(j)];
        b[static_cast<std::size_t>(j)] -= s;
        for (int i = j + 1; i < m; ++i) b[static_cast<std::size_t>(i)] -= s * qr(i, j);
    }
}

Vector back_substitute(const Matrix& qr, const Vector& qtb, double rcond) {
    const int n = qr.cols();
    double rmax = 0.0;
    for (int j = 0; j < n; ++j) rmax = std::max(rmax, std::fabs(qr(j, j)));
    Vector x(static_cast<std::size_t>(n), 0.0);
    for (int j = n - 1; j >= 0; --j) {
        if (std::fabs(qr(j, j)) <= rcond * rmax || rmax == 0.0) {
            throw EstimationError("least squares: matrix is numerically rank deficient");
        }
        double s = qtb[static_cast<std::size_t>(j)];
        for (int c = j + 1; c < n; ++c) s -= qr(j, c) * x[static_cast<std::size_t>(c)];
        x[static_cast<std::size_t>(j)] = s / qr(j, j);
    }
    return x;
}

}  // namespace

Vector lstsq_qr(const Matrix& A, const Vector& b, double rcond) {
    QrSolver qr(A, rcond);
    return qr.solve(b);
}

QrSolver::QrSolver(const Matrix& A, double rcond) : m_(A.rows()), n_(A.cols()), qr_(A) {
    if (m_ < n_) throw ShapeError("QrSolver: need rows >= cols");
    householder_qr(qr_, beta_);
    // surface rank deficiency at construction
    double rmax = 0.0;
    for (int j = 0; j < n_; ++j) rmax = std::max(rmax, std::fabs(qr_(j, j)));
    for (int j = 0; j < n_; ++j) {
        if (rmax == 0.0 || std::fabs(qr_(j, j)) <= rcond * rmax) {
            throw EstimationError("QrSolver: matrix is numerically rank deficient");
        }
    }
}

Vector QrSolver::solve(const Vector& b) const {
    if (static_cast<int>(b.size()) != m_) throw ShapeError("QrSolver::solve: bad rhs length");
    Vector qtb = b;
    apply_qt(qr_, beta_, qtb);
    return back_substitute(qr_, qtb, 0.0);
}

int rank_cpqr(const Matrix& A, double rtol) {
    Matrix R = A;
    const int m = R.rows(), n = R.cols();
    const int kmax = std::min(m, n);
    std::vector<double> colnorm(static_cast<std::size_t>(n), 0.0);
    for (int c = 0; c < n; ++c) {
        double s = 0.0;
        for (int r = 0; r < m; ++r) s += R(r, c) * R(r, c);
        colnorm[static_cast<std::size_t>(c)] = s;
    }
    double first_pivot = 0.0;
    int rank = 0;
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    for (int k = 0; k < kmax; ++k) {
        // pivot: column with largest remaining norm (recomputed exactly to
        // dodge downdating drift; matrices here are small)
        int best = k;
        double bestnorm = -1.0;
        for (int c = k; c < n; ++c) {
            double s = 0.0;
            for (int r = k; r < m; ++r) s += R(r, c) * R(r, c);
            colnorm[static_cast<std::size_t>(c)] = s;
            if (s > bestnorm) {
                bestnorm = s;
                best = c;
            }
        }
        if (best != k) {
            for (int r = 0; r < m; ++r) std::swap(R(r, k), R(r, best));
            std::swap(perm[static_cast<std::size_t>(k)], perm[static_cast<std::size_t>(best)]);
        }
        double norm = std::sqrt(std::max(bestnorm, 0.0));
        if (k == 0) first_pivot = norm;
        if (norm == 0.0 || (first_pivot > 0.0 && norm <= rtol * first_pivot)) break;
        ++rank;
        const double alpha = (R(k, k) > 0.0) ? -norm : norm;
        const double v0 = R(k, k) - alpha;
        if (v0 == 0.0) continue;
        const double beta = -v0 / alpha;
        for (int i = k + 1; i < m; ++i) R(i, k) /= v0;
        R(k, k) = alpha;
        for (int c = k + 1; c < n; ++c) {
            double s = R(k, c);
            for (int i = k + 1; i < m; ++i) s += R(i, k) * R(i, c);
            s *= beta;
            R(k, c) -= s;
            for (int i = k + 1; i < m; ++i) R(i, c) -= s * R(i, k);
        }
    }
    return rank;
}

Cholesky::Cholesky(const Matrix& spd) : n_(spd.rows()), l_(spd) {
    if (spd.rows() != spd.cols()) throw ShapeError("Cholesky: matrix not square");
    for (int j = 0; j < n_; ++j) {
        for (int k = 0; k < j; ++k) {
            const double ljk = l_(j, k);
            for (int i = j; i < n_; ++i) l_(i, j) -= l_(i, k) * ljk;
        }
        if (l_(j, j) <= 0.0) throw EstimationError("Cholesky: matrix not positive definite");
        const double d = std::sqrt(l_(j, j));
        for (int i = j; i < n_; ++i) l_(i, j) /= d;
    }
}

Vector Cholesky::solve(const Vector& b) const {
    if (static_cast<int>(b.size()) != n_) throw ShapeError("Cholesky::solve: bad rhs length");
    Vector y(b);
    for (int i = 0; i < n_; ++i) {
        double s = y[static_cast<std::size_t>(i)];
        for (int k = 0; k < i; ++k) s -= l_(i, k) * y[static_cast<std::size_t>(k)];
        y[static_cast<std::size_t>(i)] = s / l_(i, i);
    }
    for (int i = n_ - 1; i >= 0; --i) {
        double s = y[static_cast<std::size_t>(i)];
        for (int k = i + 1; k < n_; ++k) s -= l_(k, i) * y[static_cast<std::size_t>(k)];
        y[static_cast<std::size_t>(i)] = s / l_(i, i);
    }
    return y;
}

}  // namespace gridwatch::lin
