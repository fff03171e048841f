#include "glf/covest.hpp"

#include "glf/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <string>

namespace glf {

SymMatrix estimate_residual_cov(const Matrix& residuals, const TrialDesign& design)
{
    const Index n = design.n_plots();
    const Index g = design.n_genotypes();
    if (residuals.rows() != n) {
        throw DataError("estimate_residual_cov: residual rows do not match plots");
    }
    if (n <= g) {
        throw DataError("estimate_residual_cov: insufficient replication (n = " + std::to_string(n) +
                        ", g = " + std::to_string(g) + ")");
    }
    Matrix s = residuals.transpose() * residuals;
    s /= static_cast<double>(n - g);
    return SymMatrix(s, MatrixKind::covariance);
}

Matrix raw_genetic_cov(const Matrix& blues, const SymMatrix& sigma_e, double r)
{
    const Index g = blues.rows();
    if (g < 3) {
        throw DataError("estimate_genetic_cov: need at least 3 genotypes, got " + std::to_string(g));
    }
    if (sigma_e.dim() != blues.cols()) {
        throw DataError("estimate_genetic_cov: residual covariance dimension mismatch");
    }
    const Matrix centred = blues.rowwise() - blues.colwise().mean();
    Matrix sigma_p = centred.transpose() * centred / static_cast<double>(g - 1);
    return sigma_p - sigma_e.values() / r;
}

CovariancePair estimate_genetic_cov(const Matrix& blues, const SymMatrix& sigma_e, double r)
{
    const Index g = blues.rows();
    const Index s = blues.cols();
    if (g < 3) {
        throw DataError("estimate_genetic_cov: need at least 3 genotypes, got " + std::to_string(g));
    }
    if (g < s + 1) {
        spdlog::warn("estimate_genetic_cov: g = {} < s + 1 = {}; genetic covariance is ill-conditioned", g,
                     s + 1);
    }
    const Matrix centred = blues.rowwise() - blues.colwise().mean();
    const Matrix sigma_p = centred.transpose() * centred / static_cast<double>(g - 1);
    const double typical = sigma_p.diagonal().cwiseAbs().maxCoeff();
    for (Index j = 0; j < s; ++j) {
        if (!(sigma_p(j, j) > 1e-12 * typical)) {
            throw NumericalError("estimate_genetic_cov: trait " + std::to_string(j) +
                                 " has no variance across genotypes");
        }
    }
    const Matrix raw = sigma_p - sigma_e.values() / r;
    return CovariancePair{nearest_psd(raw, MatrixKind::covariance),
                          sigma_e,
                          SymMatrix(sigma_p, MatrixKind::covariance),
                          r};
}

CovariancePair estimate_covariances(const Matrix& plot_values, const TrialDesign& design)
{
    const Matrix blues = genotype_blues(plot_values, design);
    const Matrix resid = plot_residuals(plot_values, blues, design);
    const SymMatrix sigma_e = estimate_residual_cov(resid, design);
    return estimate_genetic_cov(blues, sigma_e, design.effective_replicates());
}

double heritability(double sigma_g, double sigma_e, double r)
{
    if (sigma_g < 0.0 || sigma_e < 0.0) {
        throw NumericalError("heritability: variances must be nonnegative");
    }
    const double total = sigma_g + sigma_e / r;
    if (total <= 0.0) {
        throw NumericalError("heritability: undefined when both variances are zero");
    }
    return std::clamp(sigma_g / total, 0.0, 1.0);
}

}  // namespace glf
