#pragma once

#include <Eigen/Dense>

#include <string_view>

namespace glf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace linalg {

/// Symmetric eigendecomposition with eigenvalues sorted descending.
struct SymEigen {
    Vector values;
    Matrix vectors;
};

SymEigen sym_eigen_desc(const Matrix& a);

/// (A + A^T) / 2.
Matrix symmetrize(const Matrix& a);

bool all_finite(const Matrix& a);

/// Cholesky factorisation that retries with a diagonal ridge
/// (1e-10, 1e-9, ..., 1e-6, relative to the mean diagonal) when the matrix is
/// not numerically positive definite. Throws NumericalError naming `context`
/// if every attempt fails.
class RobustCholesky {
public:
    RobustCholesky(const Matrix& a, std::string_view context);

    Matrix solve(const Matrix& b) const;
    Vector solve(const Vector& b) const;
    /// Lower-triangular factor L with L L^T = A + ridge*I.
    Matrix matrix_l() const;
    double ridge() const noexcept { return ridge_; }
    double log_det() const;

private:
    Eigen::LLT<Matrix> llt_;
    double ridge_ = 0.0;
};

/// Largest over smallest eigenvalue of a symmetric matrix (infinity when the
/// smallest is not positive).
double condition_number(const Matrix& a);

}  // namespace linalg
}  // namespace glf
