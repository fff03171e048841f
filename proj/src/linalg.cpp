#include "glf/linalg.hpp"

#include "glf/error.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>
#include <string>

namespace glf::linalg {

SymEigen sym_eigen_desc(const Matrix& a)
{
    Eigen::SelfAdjointEigenSolver<Matrix> solver(a);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("symmetric eigendecomposition failed");
    }
    const Index n = a.rows();
    SymEigen out{Vector(n), Matrix(n, n)};
    // Eigen returns ascending order.
    for (Index j = 0; j < n; ++j) {
        out.values(j) = solver.eigenvalues()(n - 1 - j);
        out.vectors.col(j) = solver.eigenvectors().col(n - 1 - j);
    }
    return out;
}

Matrix symmetrize(const Matrix& a)
{
    return 0.5 * (a + a.transpose());
}

bool all_finite(const Matrix& a)
{
    return a.allFinite();
}

RobustCholesky::RobustCholesky(const Matrix& a, std::string_view context)
{
    if (a.rows() != a.cols()) {
        throw DataError(std::string(context) + ": matrix is not square");
    }
    if (!a.allFinite()) {
        throw NumericalError(std::string(context) + ": non-finite entries");
    }
    const double scale = a.rows() > 0 ? std::max(a.diagonal().cwiseAbs().mean(), 1e-300) : 1.0;
    llt_.compute(a);
    if (llt_.info() == Eigen::Success) {
        return;
    }
    for (double rel = 1e-10; rel <= 1e-6 * 1.0001; rel *= 10.0) {
        ridge_ = rel * scale;
        Matrix shifted = a;
        shifted.diagonal().array() += ridge_;
        llt_.compute(shifted);
        if (llt_.info() == Eigen::Success) {
            spdlog::debug("{}: Cholesky needed ridge {:.3g}", context, ridge_);
            return;
        }
    }
    throw NumericalError(std::string(context) +
                         ": matrix is not positive definite even with ridge 1e-6; "
                         "check variance estimates or increase the kinship ridge");
}

Matrix RobustCholesky::solve(const Matrix& b) const
{
    return llt_.solve(b);
}

Vector RobustCholesky::solve(const Vector& b) const
{
    return llt_.solve(b);
}

Matrix RobustCholesky::matrix_l() const
{
    return llt_.matrixL();
}

double RobustCholesky::log_det() const
{
    return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

double condition_number(const Matrix& a)
{
    Eigen::SelfAdjointEigenSolver<Matrix> solver(a, Eigen::EigenvaluesOnly);
    const double lo = solver.eigenvalues().minCoeff();
    const double hi = solver.eigenvalues().maxCoeff();
    if (lo <= 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return hi / lo;
}

}  // namespace glf::linalg
