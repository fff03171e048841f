#include "glf/error.hpp"
#include "glf/splines.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <functional>
#include <numbers>

using namespace glf;
using namespace glf::testing;

namespace {

/// Score series with g genotypes and one factor; value f(c, t).
ScoreSeries series_from(Index g, const std::vector<double>& times, const std::function<double(Index, double)>& f)
{
    ScoreSeries s;
    for (std::size_t l = 0; l < times.size(); ++l) {
        Matrix m(g, 1);
        for (Index c = 0; c < g; ++c) {
            m(c, 0) = f(c, times[l]);
        }
        s.genotype_scores.push_back(m);
        s.plot_scores.push_back(m);
        s.timepoint_labels.push_back("T" + std::to_string(l + 1));
    }
    s.aligned = true;
    return s;
}

std::vector<double> grid(double lo, double hi, Index n)
{
    std::vector<double> t;
    for (Index i = 0; i < n; ++i) {
        t.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
    }
    return t;
}

}  // namespace

TEST_CASE("basis sums to one and quadrature is accurate")
{
    const auto basis = BSplineBasis::uniform(0.0, 5.0, 4, 3);
    CHECK(basis.size() == 7);
    for (double t : grid(0.0, 5.0, 41)) {
        const Vector b = basis.evaluate(t);
        CHECK(b.sum() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(b.minCoeff() >= 0.0);
    }
    CHECK(integrate([](double t) { return std::sin(t); }, 0.0, std::numbers::pi) ==
          doctest::Approx(2.0).epsilon(1e-10));
    CHECK(integrate([](double t) { return std::exp(t); }, 0.0, 1.0) ==
          doctest::Approx(std::numbers::e - 1.0).epsilon(1e-10));
    CHECK_THROWS_AS(BSplineBasis({3.0, 1.0}, 1), DataError);
}

TEST_CASE("identical constant trajectories")
{
    const auto times = grid(1.0, 8.0, 8);
    const auto fit = fit_trajectories(series_from(4, times, [](Index, double) { return 2.5; }), times);
    for (double t : grid(1.0, 8.0, 15)) {
        CHECK(fit.population(0, t) == doctest::Approx(2.5).epsilon(1e-10));
        for (Index c = 0; c < 4; ++c) {
            CHECK(std::abs(fit.deviation(0, c, t)) < 1e-10);
        }
    }
    const auto ch = extract_characteristics(fit, 2.0, 6.0);
    CHECK(ch.auc(0, 0) == doctest::Approx(2.5 * 4.0).epsilon(1e-9));
}

TEST_CASE("linear trajectories are reproduced under any penalty")
{
    const auto times = grid(0.0, 2.0, 9);
    auto line = [](Index c, double t) { return 0.3 * static_cast<double>(c) - 1.0 + (1.0 + 0.5 * static_cast<double>(c)) * t; };
    for (std::optional<double> pen : {std::optional<double>{}, std::optional<double>{1e3}}) {
        TrajectoryOptions opts;
        opts.penalty = pen;
        const auto fit = fit_trajectories(series_from(3, times, line), times, opts);
        for (double t : grid(0.0, 2.0, 21)) {
            for (Index c = 0; c < 3; ++c) {
                CHECK(std::abs(fit.genotype(0, c, t) - line(c, t)) < 1e-6);
            }
        }
        // AUC of a + b t over [0, 2] is 2a + 2b.
        const auto ch = extract_characteristics(fit, 0.0, 2.0);
        for (Index c = 0; c < 3; ++c) {
            const double a = 0.3 * static_cast<double>(c) - 1.0;
            const double b = 1.0 + 0.5 * static_cast<double>(c);
            CHECK(std::abs(ch.auc(c, 0) - (2 * a + 2 * b)) < 1e-6);
            CHECK(std::abs(ch.mean_slope(c, 0) - b) < 1e-6);
            CHECK(ch.time_of_max(c, 0) == doctest::Approx(2.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("quadratic interpolation integrates exactly")
{
    const auto times = grid(0.0, 3.0, 7);
    TrajectoryOptions opts;
    opts.penalty = 0.0;
    const auto fit = fit_trajectories(series_from(2, times, [](Index, double t) { return t * t; }), times, opts);
    const auto ch = extract_characteristics(fit, 0.0, 3.0);
    CHECK(std::abs(ch.auc(0, 0) - 9.0) < 1e-4);
    CHECK(std::abs(ch.auc(1, 0) - 9.0) < 1e-4);
    CHECK(std::abs(ch.maximum(0, 0) - 9.0) < 1e-6);
    CHECK(std::abs(ch.minimum(0, 0)) < 1e-6);
}

TEST_CASE("noisy sinusoid is smoothed below the noise level")
{
    Rng rng(1);
    std::normal_distribution<double> noise(0.0, 0.3);
    const auto times = grid(0.0, 2.0 * std::numbers::pi, 40);
    const Index g = 6;
    auto truth = [](Index c, double t) { return std::sin(t) + 0.2 * static_cast<double>(c); };
    const auto fit = fit_trajectories(series_from(g, times, [&](Index c, double t) { return truth(c, t) + noise(rng); }), times);
    double sse = 0.0;
    int n = 0;
    for (double t : grid(0.0, 2.0 * std::numbers::pi, 200)) {
        for (Index c = 0; c < g; ++c) {
            sse += std::pow(fit.genotype(0, c, t) - truth(c, t), 2);
            ++n;
        }
    }
    const double rmse = std::sqrt(sse / n);
    MESSAGE("sinusoid RMSE ", rmse);
    CHECK(rmse < 0.3);
}

TEST_CASE("AUC is additive, linear and sign-symmetric")
{
    Rng rng(2);
    const auto times = grid(1.0, 10.0, 10);
    const Matrix raw = random_normal(5, 10, rng);
    auto value = [&](double a) {
        return [&raw, a](Index c, double t) { return a * raw(c, static_cast<Index>(std::lround(t)) - 1); };
    };
    const auto fit = fit_trajectories(series_from(5, times, value(1.0)), times);
    const auto whole = extract_characteristics(fit, 2.0, 9.0);
    const auto left = extract_characteristics(fit, 2.0, 5.5);
    const auto right = extract_characteristics(fit, 5.5, 9.0);
    CHECK((whole.auc - left.auc - right.auc).cwiseAbs().maxCoeff() < 1e-8);

    const auto scaled = extract_characteristics(fit_trajectories(series_from(5, times, value(3.0)), times), 2.0, 9.0);
    CHECK((scaled.auc - 3.0 * whole.auc).cwiseAbs().maxCoeff() < 1e-8);

    const auto flipped = extract_characteristics(fit_trajectories(series_from(5, times, value(-1.0)), times), 2.0, 9.0);
    CHECK(flipped.auc == -whole.auc);

    // Population curve is the mean of the genotype curves.
    for (double t : grid(1.0, 10.0, 19)) {
        double mean = 0.0;
        for (Index c = 0; c < 5; ++c) {
            mean += fit.genotype(0, c, t) / 5.0;
        }
        CHECK(std::abs(mean - fit.population(0, t)) < 1e-6);
    }

    // The linear AUC map reproduces the curve integral for every genotype.
    const AucMap map = auc_map(fit, 0, 2.0, 9.0);
    for (Index c = 0; c < 5; ++c) {
        CHECK(std::abs(map.apply(raw.row(c).transpose()) - whole.auc(c, 0)) < 1e-8);
    }
}

TEST_CASE("interval and timepoint errors")
{
    const auto times = grid(0.0, 1.0, 6);
    const auto fit = fit_trajectories(series_from(2, times, [](Index, double t) { return t; }), times);
    CHECK_THROWS_AS(extract_characteristics(fit, -0.5, 1.0), DataError);
    CHECK_THROWS_AS(extract_characteristics(fit, 0.0, 1.5), DataError);
    CHECK_THROWS_AS(extract_characteristics(fit, 0.8, 0.2), DataError);

    const auto one = grid(0.0, 1.0, 2);
    CHECK_THROWS_AS(fit_trajectories(series_from(2, {0.0}, [](Index, double t) { return t; }), {0.0}), DataError);
    CHECK_THROWS_AS(fit_trajectories(series_from(2, one, [](Index, double t) { return t; }), times), DataError);

    // Three timepoints fall back to piecewise-linear interpolation.
    const std::vector<double> three{0.0, 1.0, 3.0};
    const auto pl = fit_trajectories(series_from(2, three, [](Index c, double t) { return t * t + static_cast<double>(c); }), three);
    CHECK(pl.piecewise_linear);
    CHECK(pl.genotype(0, 1, 1.0) == doctest::Approx(2.0));
    CHECK(pl.genotype(0, 0, 2.0) == doctest::Approx(5.0));
}
