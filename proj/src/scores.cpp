#include "glf/scores.hpp"

#include "glf/error.hpp"

#include <cmath>
#include <string>

namespace glf {

Matrix thomson_projection(const Matrix& loadings, const Vector& psi, const Matrix& sigma_e,
                          double weight)
{
    const Index s = loadings.rows();
    const Index m = loadings.cols();
    if (psi.size() != s || sigma_e.rows() != s || sigma_e.cols() != s) {
        throw DataError("thomson_projection: dimension mismatch");
    }
    Matrix noise = weight * sigma_e;
    noise.diagonal() += psi;
    Eigen::LLT<Matrix> llt(noise);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("thomson_projection: Psi + w*Sigma_E is singular; "
                             "raise the uniqueness floor");
    }
    const Matrix noise_inv_lambda = llt.solve(loadings);
    Matrix inner = loadings.transpose() * noise_inv_lambda;
    inner.diagonal().array() += 1.0;
    Eigen::LLT<Matrix> inner_llt(inner);
    return noise_inv_lambda * inner_llt.solve(Matrix::Identity(m, m));
}

Matrix thomson_scores(const Matrix& data, const Matrix& loadings, const Vector& psi,
                      const Matrix& sigma_e, double weight)
{
    if (data.cols() != loadings.rows()) {
        throw DataError("thomson_scores: data columns do not match loadings rows");
    }
    return data * thomson_projection(loadings, psi, sigma_e, weight);
}

Matrix TimepointProjection::apply(const Matrix& data) const
{
    if (data.cols() != center.size()) {
        throw DataError("projection: data has " + std::to_string(data.cols()) + " columns, expected " +
                        std::to_string(center.size()));
    }
    const Matrix standardised =
        (data.rowwise() - center.transpose()) * scale.cwiseInverse().asDiagonal();
    return standardised * projection;
}

TimepointProjection make_projection(const FactorModel& model, const CovariancePair& cov,
                                    const Vector& center)
{
    const Vector var = cov.sigma_g.values().diagonal();
    if ((var.array() <= 0.0).any()) {
        throw NumericalError("make_projection: zero genetic variance, cannot standardise");
    }
    TimepointProjection out;
    out.center = center;
    out.scale = var.cwiseSqrt();
    const Vector inv = out.scale.cwiseInverse();
    const Matrix sigma_e_std = inv.asDiagonal() * cov.sigma_e.values() * inv.asDiagonal();
    out.projection = thomson_projection(model.loadings, model.uniquenesses, sigma_e_std, 1.0 / cov.r_used);
    return out;
}

ScoreSeries apply_projections(const TrialDataset& data,
                              const std::vector<TimepointProjection>& projections, bool aligned)
{
    if (projections.size() != data.secondary.size()) {
        throw DataError("apply_projections: one projection per timepoint required");
    }
    ScoreSeries out;
    out.aligned = aligned;
    out.timepoint_labels = data.design.timepoint_labels();
    for (std::size_t l = 0; l < projections.size(); ++l) {
        try {
            const Matrix blues = genotype_blues(data.secondary[l], data.design);
            out.genotype_scores.push_back(projections[l].apply(blues));
            out.plot_scores.push_back(projections[l].apply(data.secondary[l]));
        } catch (const Error& e) {
            throw NumericalError("timepoint " + std::to_string(l) + ": " + e.what());
        }
    }
    return out;
}

ScoreSeries score_series(const TrialDataset& data, const std::vector<FactorModel>& models,
                         const std::vector<CovariancePair>& covariances, bool aligned)
{
    if (models.size() != data.secondary.size() || covariances.size() != data.secondary.size()) {
        throw DataError("score_series: need one model and covariance pair per timepoint");
    }
    std::vector<TimepointProjection> projections;
    for (std::size_t l = 0; l < models.size(); ++l) {
        try {
            const Matrix blues = genotype_blues(data.secondary[l], data.design);
            projections.push_back(make_projection(models[l], covariances[l], blues.colwise().mean()));
        } catch (const Error& e) {
            throw NumericalError("timepoint " + std::to_string(l) + ": " + e.what());
        }
    }
    return apply_projections(data, projections, aligned);
}

}  // namespace glf
