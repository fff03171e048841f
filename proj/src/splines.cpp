#include "glf/splines.hpp"

#include "glf/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace glf {

BSplineBasis::BSplineBasis(std::vector<double> interior_and_boundary, Index degree) : degree_(degree)
{
    if (interior_and_boundary.size() < 2 || degree < 0) {
        throw DataError("B-spline basis needs at least two knots");
    }
    if (!std::is_sorted(interior_and_boundary.begin(), interior_and_boundary.end())) {
        throw DataError("B-spline knots must be sorted");
    }
    lo_ = interior_and_boundary.front();
    hi_ = interior_and_boundary.back();
    knots_.assign(static_cast<std::size_t>(degree), lo_);
    knots_.insert(knots_.end(), interior_and_boundary.begin(), interior_and_boundary.end());
    knots_.insert(knots_.end(), static_cast<std::size_t>(degree), hi_);
}

BSplineBasis BSplineBasis::uniform(double lo, double hi, Index segments, Index degree)
{
    if (segments < 1 || degree < 0 || !(hi > lo)) {
        throw DataError("uniform B-spline basis needs lo < hi and at least one segment");
    }
    BSplineBasis out;
    out.degree_ = degree;
    out.lo_ = lo;
    out.hi_ = hi;
    const double h = (hi - lo) / static_cast<double>(segments);
    for (Index i = -degree; i <= segments + degree; ++i) {
        out.knots_.push_back(i == segments ? hi : lo + h * static_cast<double>(i));
    }
    return out;
}

Vector BSplineBasis::evaluate(double t) const
{
    const Index n = size();
    Vector out = Vector::Zero(n);
    const double lo = lower();
    const double hi = upper();
    if (t < lo || t > hi) {
        return out;
    }
    // Locate the span; the right end belongs to the last non-empty interval.
    Index span = degree_;
    const auto last = static_cast<Index>(knots_.size()) - degree_ - 2;
    if (t >= hi) {
        span = last;
        while (span > degree_ && knots_[static_cast<std::size_t>(span)] == knots_[static_cast<std::size_t>(span + 1)]) {
            --span;
        }
    } else {
        while (span < last && t >= knots_[static_cast<std::size_t>(span + 1)]) {
            ++span;
        }
    }
    // Cox-de Boor triangle for the degree + 1 non-zero functions.
    std::vector<double> n_vals(static_cast<std::size_t>(degree_ + 1), 0.0);
    std::vector<double> left(static_cast<std::size_t>(degree_ + 1), 0.0);
    std::vector<double> right(static_cast<std::size_t>(degree_ + 1), 0.0);
    n_vals[0] = 1.0;
    for (Index j = 1; j <= degree_; ++j) {
        left[static_cast<std::size_t>(j)] = t - knots_[static_cast<std::size_t>(span + 1 - j)];
        right[static_cast<std::size_t>(j)] = knots_[static_cast<std::size_t>(span + j)] - t;
        double saved = 0.0;
        for (Index r = 0; r < j; ++r) {
            const double denom = right[static_cast<std::size_t>(r + 1)] + left[static_cast<std::size_t>(j - r)];
            const double temp = denom != 0.0 ? n_vals[static_cast<std::size_t>(r)] / denom : 0.0;
            n_vals[static_cast<std::size_t>(r)] = saved + right[static_cast<std::size_t>(r + 1)] * temp;
            saved = left[static_cast<std::size_t>(j - r)] * temp;
        }
        n_vals[static_cast<std::size_t>(j)] = saved;
    }
    for (Index j = 0; j <= degree_; ++j) {
        out(span - degree_ + j) = n_vals[static_cast<std::size_t>(j)];
    }
    return out;
}

Matrix BSplineBasis::design(const std::vector<double>& ts) const
{
    Matrix b(static_cast<Index>(ts.size()), size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
        b.row(static_cast<Index>(i)) = evaluate(ts[i]).transpose();
    }
    return b;
}

namespace {

double simpson_step(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                    double fb, double whole, double tol, int depth)
{
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

Matrix second_difference(Index n)
{
    Matrix d = Matrix::Zero(std::max<Index>(n - 2, 0), n);
    for (Index i = 0; i + 2 < n; ++i) {
        d(i, i) = 1.0;
        d(i, i + 1) = -2.0;
        d(i, i + 2) = 1.0;
    }
    return d;
}

/// (B^T B + lambda D^T D)^-1 B^T, with a tiny ridge when unpenalised and
/// rank deficient.
Matrix coefficient_map(const Matrix& b, const Matrix& penalty, double lambda)
{
    Matrix lhs = b.transpose() * b + lambda * penalty;
    Eigen::LDLT<Matrix> ldlt(lhs);
    if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-13) {
        lhs.diagonal().array() += 1e-10 * std::max(1.0, lhs.diagonal().maxCoeff());
        ldlt.compute(lhs);
    }
    return ldlt.solve(b.transpose());
}

struct Gcv {
    double lambda = 0.0;
    Matrix coef_map;
};

/// Penalty minimising pooled GCV over the columns of `y` (tau x k).
Gcv choose_penalty(const Matrix& b, const Matrix& penalty, const Matrix& y)
{
    const double n_obs = static_cast<double>(y.size());
    const double k = static_cast<double>(y.cols());
    Gcv best{0.0, Matrix()};
    double best_score = std::numeric_limits<double>::infinity();
    for (int step = -24; step <= 24; ++step) {
        const double lambda = std::pow(10.0, 0.25 * step);
        Matrix cm = coefficient_map(b, penalty, lambda);
        const Matrix hat = b * cm;
        const double edf = hat.trace();
        const double denom = n_obs - k * edf;
        if (denom <= 1e-8 * n_obs) {
            continue;
        }
        const double rss = (y - hat * y).squaredNorm();
        const double score = n_obs * rss / (denom * denom);
        if (score < best_score) {
            best_score = score;
            best = {lambda, std::move(cm)};
        }
    }
    if (best.coef_map.size() == 0) {
        best = {1.0, coefficient_map(b, penalty, 1.0)};
    }
    return best;
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b, double tol)
{
    if (a == b) {
        return 0.0;
    }
    const double fa = f(a);
    const double fb = f(b);
    const double fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_step(f, a, b, fa, fm, fb, whole, tol, 40);
}

double TrajectoryFit::population(Index factor, double t) const
{
    return basis.evaluate(t).dot(factors[static_cast<std::size_t>(factor)].population_coef);
}

double TrajectoryFit::deviation(Index factor, Index genotype, double t) const
{
    return factors[static_cast<std::size_t>(factor)].deviation_coef.row(genotype).dot(basis.evaluate(t));
}

double TrajectoryFit::genotype(Index factor, Index genotype, double t) const
{
    const Vector bt = basis.evaluate(t);
    const auto& ft = factors[static_cast<std::size_t>(factor)];
    return bt.dot(ft.population_coef) + ft.deviation_coef.row(genotype).dot(bt);
}

TrajectoryFit fit_trajectories(const ScoreSeries& scores, const std::vector<double>& times,
                               const TrajectoryOptions& options)
{
    const Index tau = scores.n_timepoints();
    if (static_cast<Index>(times.size()) != tau) {
        throw DataError("fit_trajectories: one time value per timepoint required");
    }
    if (tau < 2) {
        throw DataError("fit_trajectories: too few timepoints (" + std::to_string(tau) + ")");
    }
    const Index g = scores.genotype_scores.front().rows();
    const Index m = scores.genotype_scores.front().cols();

    TrajectoryFit fit;
    fit.times = times;
    double fixed_penalty = options.penalty.value_or(0.0);
    bool use_gcv = !options.penalty.has_value();
    if (tau < 4) {
        spdlog::warn("fit_trajectories: {} timepoints, falling back to piecewise-linear curves", tau);
        fit.basis = BSplineBasis(times, 1);
        fit.piecewise_linear = true;
        use_gcv = false;
        fixed_penalty = 0.0;
    } else {
        const Index segments = options.segments > 0 ? options.segments : std::clamp<Index>(tau - 3, 1, 20);
        fit.basis = BSplineBasis::uniform(times.front(), times.back(), segments, 3);
    }
    const Matrix b = fit.basis.design(times);
    const Matrix d = second_difference(fit.basis.size());
    const Matrix penalty = d.transpose() * d;

    for (Index k = 0; k < m; ++k) {
        Matrix series(tau, g);  // column c = genotype c's trajectory
        for (Index l = 0; l < tau; ++l) {
            series.row(l) = scores.genotype_scores[static_cast<std::size_t>(l)].col(k).transpose();
        }
        FactorTrajectory ft;
        ft.mean_scores = series.rowwise().mean();
        const Matrix centred = series.colwise() - ft.mean_scores;

        Matrix pop_map;
        Matrix dev_map;
        if (use_gcv) {
            auto pop = choose_penalty(b, penalty, ft.mean_scores);
            auto dev = choose_penalty(b, penalty, centred);
            ft.population_penalty = pop.lambda;
            ft.deviation_penalty = dev.lambda;
            pop_map = std::move(pop.coef_map);
            dev_map = std::move(dev.coef_map);
        } else {
            ft.population_penalty = ft.deviation_penalty = fixed_penalty;
            pop_map = coefficient_map(b, penalty, fixed_penalty);
            dev_map = pop_map;
        }
        ft.population_coef = pop_map * ft.mean_scores;
        ft.deviation_coef = (dev_map * centred).transpose();
        ft.deviation_hat = dev_map;
        const Matrix fitted = (b * ft.deviation_coef.transpose()).colwise() + b * ft.population_coef;
        ft.residual_variance = (series - fitted).cwiseAbs2().rowwise().mean();
        fit.factors.push_back(std::move(ft));
    }
    return fit;
}

namespace {

void check_interval(const TrajectoryFit& fit, double t0, double t1)
{
    const double eps = 1e-12 * std::max(1.0, std::abs(fit.basis.upper()));
    if (!(t0 <= t1) || t0 < fit.basis.lower() - eps || t1 > fit.basis.upper() + eps) {
        throw DataError("spline characteristics: interval [" + std::to_string(t0) + ", " + std::to_string(t1) +
                        "] outside the fitted range (extrapolation)");
    }
}

double golden_max(const std::function<double(double)>& f, double a, double b)
{
    const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - ratio * (b - a);
    double x2 = a + ratio * (b - a);
    double f1 = f(x1);
    double f2 = f(x2);
    for (int it = 0; it < 80 && (b - a) > 1e-12 * std::max(1.0, std::abs(b)); ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = f(x1);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace

SplineCharacteristics extract_characteristics(const TrajectoryFit& fit, double t0, double t1)
{
    check_interval(fit, t0, t1);
    const Index g = fit.n_genotypes();
    const auto m = static_cast<Index>(fit.factors.size());
    SplineCharacteristics out;
    out.t0 = t0;
    out.t1 = t1;
    out.auc.resize(g, m);
    out.minimum.resize(g, m);
    out.maximum.resize(g, m);
    out.time_of_max.resize(g, m);
    out.mean_slope.resize(g, m);
    constexpr int kGrid = 256;
    const double width = t1 - t0;
    for (Index k = 0; k < m; ++k) {
        for (Index c = 0; c < g; ++c) {
            auto curve = [&](double t) { return fit.genotype(k, c, t); };
            out.auc(c, k) = integrate(curve, t0, t1, 1e-10);
            const double f0 = curve(t0);
            const double f1 = curve(t1);
            out.mean_slope(c, k) = width > 0.0 ? (f1 - f0) / width : 0.0;

            int arg_max = 0;
            int arg_min = 0;
            std::vector<double> grid(kGrid);
            for (int i = 0; i < kGrid; ++i) {
                const double t = t0 + width * static_cast<double>(i) / (kGrid - 1);
                grid[static_cast<std::size_t>(i)] = curve(t);
                if (grid[static_cast<std::size_t>(i)] > grid[static_cast<std::size_t>(arg_max)]) {
                    arg_max = i;
                }
                if (grid[static_cast<std::size_t>(i)] < grid[static_cast<std::size_t>(arg_min)]) {
                    arg_min = i;
                }
            }
            auto bracket = [&](int i) {
                const double step = width / (kGrid - 1);
                return std::pair{std::max(t0, t0 + step * (i - 1)), std::min(t1, t0 + step * (i + 1))};
            };
            auto [a, b] = bracket(arg_max);
            double t_max = golden_max(curve, a, b);
            double v_max = curve(t_max);
            const double grid_t = t0 + width * arg_max / (kGrid - 1);
            if (grid[static_cast<std::size_t>(arg_max)] > v_max) {
                t_max = grid_t;
                v_max = grid[static_cast<std::size_t>(arg_max)];
            }
            auto [a2, b2] = bracket(arg_min);
            const double t_min = golden_max([&](double t) { return -curve(t); }, a2, b2);
            out.maximum(c, k) = v_max;
            out.time_of_max(c, k) = t_max;
            out.minimum(c, k) = std::min(curve(t_min), grid[static_cast<std::size_t>(arg_min)]);
        }
    }
    return out;
}

AucMap auc_map(const TrajectoryFit& fit, Index factor, double t0, double t1)
{
    check_interval(fit, t0, t1);
    const auto& ft = fit.factors.at(static_cast<std::size_t>(factor));
    const Index nb = fit.basis.size();
    Vector basis_integral(nb);
    for (Index j = 0; j < nb; ++j) {
        basis_integral(j) = integrate([&](double t) { return fit.basis.evaluate(t)(j); }, t0, t1, 1e-12);
    }
    AucMap out;
    out.offset = basis_integral.dot(ft.population_coef);
    out.weights = ft.deviation_hat.transpose() * basis_integral;
    out.mean_scores = ft.mean_scores;
    return out;
}

}  // namespace glf
