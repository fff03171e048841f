#pragma once

#include "glf/core.hpp"

namespace glf {

/// Moment estimates of one timepoint's covariance structure.
struct CovariancePair {
    SymMatrix sigma_g;  ///< genetic, PSD-repaired
    SymMatrix sigma_e;  ///< plot residual
    SymMatrix sigma_p;  ///< covariance of genotype BLUEs
    double r_used = 1.0;
};

/// R^T R / (n - g). Throws DataError when n <= g.
SymMatrix estimate_residual_cov(const Matrix& residuals, const TrialDesign& design);

/// Sigma_P = covariance of BLUE rows (denominator g - 1),
/// Sigma_G = nearest_psd(Sigma_P - Sigma_E / r). Throws DataError for g < 3 and
/// NumericalError for a trait that is constant across genotypes;
/// logs a warning when g < s + 1.
CovariancePair estimate_genetic_cov(const Matrix& blues, const SymMatrix& sigma_e, double r);

/// Sigma_P - Sigma_E / r before any repair.
Matrix raw_genetic_cov(const Matrix& blues, const SymMatrix& sigma_e, double r);

/// BLUEs, residuals and both covariance estimates for one plot matrix.
CovariancePair estimate_covariances(const Matrix& plot_values, const TrialDesign& design);

/// sigma_g / (sigma_g + sigma_e / r), clipped to [0, 1].
/// Throws NumericalError when both variances are zero.
double heritability(double sigma_g, double sigma_e, double r);

}  // namespace glf
