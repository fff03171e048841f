#pragma once

#include "glf/core.hpp"

namespace glf {

/// Eigenvalue scree of a genetic correlation matrix and the acceleration
/// factor used to locate its elbow. Positions are 1-based as in the usual
/// scree notation: acceleration(k) holds af_{k+2}.
struct ScreeProfile {
    Vector eigenvalues;    ///< delta_1 >= ... >= delta_s
    Vector acceleration;   ///< af_j = delta_{j+1} - 2 delta_j + delta_{j-1}, j = 2..s-1
    Vector intercepts;     ///< optimal-coordinate line a_{j+1}, j = 1..s-2
    Vector slopes;         ///< optimal-coordinate line b_{j+1}, j = 1..s-2
    Index elbow = 0;       ///< s' = argmax_j af_j (1-based, lowest j on ties)
    double condition_number = 0.0;
};

struct DimensionChoice {
    Index m_star = 1;
    ScreeProfile profile;
};

/// m* = #{j : delta_j >= 1 and j < s'}, at least 1.
/// Throws DataError when s < 3.
DimensionChoice select_dimension(const SymMatrix& genetic_correlation);

struct FactorFitOptions {
    double psi_floor = 0.005;
    double grad_tol = 1e-6;
    int max_iter = 500;
};

struct FactorModel {
    Matrix loadings;      ///< s x m
    Vector uniquenesses;  ///< diagonal of Psi
    Index m_star = 0;
    double fit_value = 0.0;  ///< ML discrepancy F at the optimum
    bool converged = false;
    bool heywood = false;    ///< some uniqueness sits on the floor
    int iterations = 0;

    /// Lambda Lambda^T + Psi.
    Matrix implied() const;
};

/// Maximum-likelihood factor analysis of a correlation matrix: BFGS over
/// log-uniquenesses with Lambda profiled out by an eigen solve, started at
/// Psi = diag(1 - SMC). Non-convergence is reported in the result.
/// Throws NumericalError if the input is not positive definite.
FactorModel fit_factor_model(const SymMatrix& genetic_correlation, Index m_star,
                             const FactorFitOptions& options = {});

/// ln|S| + tr(R S^-1) - ln|R| - s with S = Lambda Lambda^T + Psi.
double ml_discrepancy(const Matrix& r, const Matrix& loadings, const Vector& psi);

/// Loadings maximising the likelihood for fixed Psi.
Matrix profile_loadings(const Matrix& r, const Vector& psi, Index m);

/// Discrepancy at the profiled loadings.
double profile_discrepancy(const Matrix& r, const Vector& psi, Index m);

/// Gradient of profile_discrepancy with respect to ln(psi).
Vector profile_gradient_log_psi(const Matrix& r, const Vector& psi, Index m);

struct VarimaxResult {
    Matrix loadings;
    Matrix rotation;  ///< orthogonal m x m, rotated = input * rotation
    int iterations = 0;
};

/// Orthogonal Varimax rotation (Kaiser row normalisation when `normalize`) by
/// pairwise planar sweeps; stops once no pair turns by more than `tol` radians.
VarimaxResult varimax(const Matrix& loadings, bool normalize = true, double tol = 1e-10,
                      int max_iter = 1000);

/// Raw Varimax criterion sum_j [mean_i z_ij^4 - (mean_i z_ij^2)^2] on the
/// (optionally row-normalised) loadings.
double varimax_criterion(const Matrix& loadings, bool normalize = true);

}  // namespace glf
