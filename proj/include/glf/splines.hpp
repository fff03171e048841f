#pragma once

#include "glf/scores.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace glf {

/// B-spline basis of a given degree, evaluated on [lower(), upper()].
class BSplineBasis {
public:
    BSplineBasis() = default;
    /// Clamped basis: boundary knots repeated degree + 1 times.
    BSplineBasis(std::vector<double> interior_and_boundary, Index degree);

    /// Equally spaced knots on [lo, hi], continued past both ends at the same
    /// spacing, so a second-difference penalty leaves straight lines alone.
    static BSplineBasis uniform(double lo, double hi, Index segments, Index degree = 3);

    Index degree() const noexcept { return degree_; }
    Index size() const noexcept { return static_cast<Index>(knots_.size()) - degree_ - 1; }
    double lower() const noexcept { return lo_; }
    double upper() const noexcept { return hi_; }

    Vector evaluate(double t) const;
    Matrix design(const std::vector<double>& ts) const;

private:
    std::vector<double> knots_;
    Index degree_ = 3;
    double lo_ = 0.0;
    double hi_ = 0.0;
};

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-10);

struct TrajectoryOptions {
    std::optional<double> penalty;  ///< fixed smoothing parameter; GCV when empty
    Index segments = 0;             ///< 0 = min(tau - 3, 20)
};

/// Smoothed trajectories of one factor: population curve fitted to the
/// genotype mean, genotype deviations fitted to genotype minus mean with one
/// shared penalty.
struct FactorTrajectory {
    Vector population_coef;
    Matrix deviation_coef;   ///< g x basis size
    Matrix deviation_hat;    ///< basis size x tau, maps centred scores to coefficients
    Vector mean_scores;      ///< genotype mean at each timepoint
    double population_penalty = 0.0;
    double deviation_penalty = 0.0;
    Vector residual_variance;  ///< sigma^2(l)
};

struct TrajectoryFit {
    BSplineBasis basis;
    std::vector<double> times;
    std::vector<FactorTrajectory> factors;
    bool piecewise_linear = false;

    Index n_genotypes() const
    {
        return factors.empty() ? 0 : factors.front().deviation_coef.rows();
    }
    double population(Index factor, double t) const;
    double deviation(Index factor, Index genotype, double t) const;
    double genotype(Index factor, Index genotype, double t) const;
};

/// Two-level P-spline fit (cubic, second-difference penalty) of every factor's
/// genotype score series over `times`. Needs tau >= 4; with 2 or 3 timepoints
/// it degrades to piecewise-linear interpolation and logs a warning.
TrajectoryFit fit_trajectories(const ScoreSeries& scores, const std::vector<double>& times,
                               const TrajectoryOptions& options = {});

struct SplineCharacteristics {
    double t0 = 0.0;
    double t1 = 0.0;
    Matrix auc;          ///< g x m
    Matrix minimum;
    Matrix maximum;
    Matrix time_of_max;
    Matrix mean_slope;
};

/// Area, extrema and mean slope of every genotype curve on [t0, t1].
/// Throws DataError when the interval leaves the fitted range.
SplineCharacteristics extract_characteristics(const TrajectoryFit& fit, double t0, double t1);

/// AUC of a curve built from any score series s (tau values) with the fitted
/// smoothers: population AUC + weights^T (s - mean_scores). Linear in s, so
/// it maps plot-level and test-set series consistently.
struct AucMap {
    double offset = 0.0;
    Vector weights;
    Vector mean_scores;

    double apply(const Vector& series) const { return offset + weights.dot(series - mean_scores); }
};

AucMap auc_map(const TrajectoryFit& fit, Index factor, double t0, double t1);

}  // namespace glf
