#pragma once

#include <vector>

#include "gridwatch/errors.hpp"

namespace gridwatch::lin {

using Vector = std::vector<double>;

// Dense row-major matrix. Sized for this domain (m <= a few hundred);
// no sparsity, no BLAS.
class Matrix {
  public:
    Matrix() = default;
    Matrix(int rows, int cols) : rows_(rows), cols_(cols), d_(static_cast<std::size_t>(rows) * cols, 0.0) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    double& operator()(int r, int c) { return d_[static_cast<std::size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return d_[static_cast<std::size_t>(r) * cols_ + c]; }

    double* row(int r) { return d_.data() + static_cast<std::size_t>(r) * cols_; }
    const double* row(int r) const { return d_.data() + static_cast<std::size_t>(r) * cols_; }

    const std::vector<double>& data() const { return d_; }
    std::vector<double>& data() { return d_; }

  private:
    int rows_ = 0, cols_ = 0;
    std::vector<double> d_;
};

Vector matvec(const Matrix& A, const Vector& x);
// y = A^T x
Vector matvec_t(const Matrix& A, const Vector& x);

Matrix drop_rows(const Matrix& A, const std::vector<int>& rows_sorted);
Vector drop_rows(const Vector& v, const std::vector<int>& rows_sorted);

double norm2(const Vector& v);
double dot(const Vector& a, const Vector& b);

// Least squares min ||Ax - b|| via Householder QR (A is m x n, m >= n).
// Throws EstimationError when A is numerically rank deficient.
Vector lstsq_qr(const Matrix& A, const Vector& b, double rcond = 1e-12);

// Reusable QR factorization for repeated solves against one matrix.
class QrSolver {
  public:
    explicit QrSolver(const Matrix& A, double rcond = 1e-12);
    Vector solve(const Vector& b) const;
    int rows() const { return m_; }
    int cols() const { return n_; }

  private:
    int m_ = 0, n_ = 0;
    Matrix qr_;           // Householder vectors below the diagonal, R on/above
    Vector beta_;         // Householder coefficients
};

// Numerical rank via column-pivoted Householder QR. Diagonal magnitudes of R
// below rtol * |R(0,0)| count as zero.
int rank_cpqr(const Matrix& A, double rtol);

// Cholesky factorization of a symmetric positive definite matrix, reusable
// for many right-hand sides. Throws EstimationError if not SPD.
class Cholesky {
  public:
    explicit Cholesky(const Matrix& spd);
    Vector solve(const Vector& b) const;

  private:
    int n_ = 0;
    Matrix l_;
};

}  // namespace gridwatch::lin
