#include "glf/error.hpp"
#include "glf/selection.hpp"

#include "oracles.hpp"
#include "scenarios.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace glf;
using namespace glf::testing;

namespace {

double bic_formula(double rss, double g, double k)
{
    return g * std::log(std::max(rss, 1e-12) / g) + (k + 1.0) * std::log(g);
}

}  // namespace

TEST_CASE("empty subset is the intercept model")
{
    Rng rng(1);
    const Vector y = random_normal(30, 1, rng).col(0);
    const double tss = (y.array() - y.mean()).square().sum();
    CHECK(bic_of_subset(y, Matrix(30, 0)) == doctest::Approx(bic_formula(tss, 30, 0)).epsilon(1e-12));
    const auto res = best_subset(y, Matrix(30, 0));
    CHECK(res.selected.empty());
    CHECK(res.bic == res.null_bic);
}

TEST_CASE("perfect fit hits the RSS floor and wins")
{
    Rng rng(2);
    const Matrix cand = random_normal(40, 5, rng);
    const Vector y = cand.col(3);
    CHECK(bic_of_subset(y, cand.col(3)) == doctest::Approx(bic_formula(0.0, 40, 1)));
    const auto res = best_subset(y, cand);
    CHECK(res.selected == std::vector<Index>{3});
}

TEST_CASE("BIC matches a normal-equations solve")
{
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix x = random_normal(25, 2, rng);
        const Vector y = x * Vector::Constant(2, 0.7) + random_normal(25, 1, rng).col(0);
        Matrix design(25, 3);
        design << Vector::Ones(25), x;
        const Vector coef = (design.transpose() * design).ldlt().solve(design.transpose() * y);
        const double rss = (y - design * coef).squaredNorm();
        CHECK(std::abs(bic_of_subset(y, x) - bic_formula(rss, 25, 2)) < 1e-8);
    }
}

TEST_CASE("duplicated informative column resolves to the lower index")
{
    Rng rng(4);
    Matrix cand = random_normal(100, 9, rng);
    cand.col(7) = cand.col(2);
    const Vector y = cand.col(2) + random_normal(100, 1, rng).col(0) * 0.3;
    CHECK(best_subset(y, cand).selected == std::vector<Index>{2});
    CHECK(best_subset_with(y, cand, SearchMethod::forward).selected == std::vector<Index>{2});
}

TEST_CASE("collinear columns are dropped from the count")
{
    Rng rng(5);
    Matrix x = random_normal(30, 3, rng);
    x.col(2) = 2.0 * x.col(0) - x.col(1);
    const Vector y = random_normal(30, 1, rng).col(0);
    const double full = bic_of_subset(y, x);
    CHECK(full == doctest::Approx(bic_of_subset(y, x.leftCols(2))).epsilon(1e-10));
    CHECK_THROWS_AS(bic_of_subset(y.head(3), x.topRows(3)), DataError);
}

TEST_CASE("selection ignores positive column rescaling")
{
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix cand = random_normal(80, 8, rng);
        const Vector y = cand.col(1) * 0.5 - cand.col(5) * 0.4 + random_normal(80, 1, rng).col(0);
        const auto base = best_subset(y, cand);
        for (Index j = 0; j < 8; ++j) {
            cand.col(j) *= 0.1 + j;
        }
        CHECK(best_subset(y, cand).selected == base.selected);
    }
}

TEST_CASE("exhaustive and forward agree on well-separated signal")
{
    Rng rng(7);
    std::uniform_int_distribution<Index> width(3, 12);
    for (int trial = 0; trial < 50; ++trial) {
        const Index c = width(rng);
        const Matrix cand = random_normal(150, c, rng);
        std::vector<Index> truth;
        Vector y = random_normal(150, 1, rng).col(0) * 0.5;
        for (Index j = 0; j < c; j += 3) {
            truth.push_back(j);
            y += cand.col(j);
        }
        const auto ex = best_subset_with(y, cand, SearchMethod::exhaustive);
        const auto fw = best_subset_with(y, cand, SearchMethod::forward);
        CHECK(ex.method == SearchMethod::exhaustive);
        CHECK(fw.method == SearchMethod::forward);
        CHECK(ex.selected == fw.selected);
        CHECK(std::includes(ex.selected.begin(), ex.selected.end(), truth.begin(), truth.end()));
    }
}

TEST_CASE("search switches to forward above the limit and records a trace")
{
    Rng rng(8);
    const Matrix cand = random_normal(60, 16, rng);
    const Vector y = cand.col(0) + random_normal(60, 1, rng).col(0) * 0.2;
    CHECK(best_subset(y, cand).method == SearchMethod::forward);
    CHECK(best_subset(y, cand.leftCols(15)).method == SearchMethod::exhaustive);

    SelectionOptions opts;
    opts.record_trace = true;
    const auto traced = best_subset(y, cand.leftCols(4), opts);
    CHECK(traced.trace.size() == 16);
    for (const auto& entry : traced.trace) {
        CHECK(entry.bic >= traced.bic);
    }
}

TEST_CASE("power and size of BIC selection")
{
    // The chance that a noise column beats the ln g penalty is P(chi2_1 > ln g);
    // at g = 2000 about 0.6 % per column, so about 94 % of runs are clean.
    const auto rates = selection_rates(100, 2000, 10, 3, 5.0, 9);
    MESSAGE("exact ", rates.exact_hits, "/100, null empty ", rates.null_empty, "/100");
    CHECK(rates.exact_hits >= 90);
    CHECK(rates.null_empty >= 85);
}
