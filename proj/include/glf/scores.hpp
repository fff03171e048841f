#pragma once

#include "glf/covest.hpp"
#include "glf/factor.hpp"

#include <string>
#include <vector>

namespace glf {

/// B = (Psi + w Sigma_E)^-1 Lambda [I + Lambda^T (Psi + w Sigma_E)^-1 Lambda]^-1.
/// Throws NumericalError when Psi + w Sigma_E is singular.
Matrix thomson_projection(const Matrix& loadings, const Vector& psi, const Matrix& sigma_e,
                          double weight);

/// Centred data times the Thomson projection.
Matrix thomson_scores(const Matrix& data, const Matrix& loadings, const Vector& psi,
                      const Matrix& sigma_e, double weight);

/// Frozen per-timepoint scoring map: standardise by the genetic SDs around a
/// fixed centre, then project. Built once from training data and applied to
/// any plots or genotype means afterwards.
struct TimepointProjection {
    Vector center;
    Vector scale;
    Matrix projection;  ///< s x m on the standardised scale

    Matrix apply(const Matrix& data) const;
};

/// Projection for one timepoint. `model` carries correlation-scale loadings
/// (already rotated/aligned as desired); Sigma_E is standardised by
/// sqrt(diag Sigma_G) and weighted by 1/r.
TimepointProjection make_projection(const FactorModel& model, const CovariancePair& cov,
                                    const Vector& center);

struct ScoreSeries {
    std::vector<Matrix> genotype_scores;  ///< g x m per timepoint
    std::vector<Matrix> plot_scores;      ///< n x m per timepoint
    bool aligned = false;
    std::vector<std::string> timepoint_labels;

    Index n_timepoints() const noexcept { return static_cast<Index>(genotype_scores.size()); }
};

/// Score every timepoint of `data` with projections fitted on `data`
/// itself (centre = mean of its genotype BLUEs).
ScoreSeries score_series(const TrialDataset& data, const std::vector<FactorModel>& models,
                         const std::vector<CovariancePair>& covariances, bool aligned);

/// Apply frozen projections to another dataset (e.g. the test genotypes).
ScoreSeries apply_projections(const TrialDataset& data,
                              const std::vector<TimepointProjection>& projections, bool aligned);

}  // namespace glf
