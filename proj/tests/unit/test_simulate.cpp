#include "glf/covest.hpp"
#include "glf/error.hpp"
#include "glf/simulate.hpp"

#include "oracles.hpp"

#include <doctest.h>

using namespace glf;
using namespace glf::testing;

namespace {

SimConfig base_config(std::uint64_t seed)
{
    SimConfig c;
    c.g = 60;
    c.s = 8;
    c.r = 3;
    c.tau = 4;
    c.p = 300;
    c.seed = seed;
    return c;
}

}  // namespace

TEST_CASE("no residual noise gives identical replicates")
{
    SimConfig c = base_config(1);
    c.h2_secondary = 1.0;
    c.h2_focal = 1.0;
    const auto sim = simulate_trial(c);
    const auto& d = sim.data.design;
    for (Index i = 0; i < d.n_plots(); ++i) {
        const Index gi = d.plots()[static_cast<std::size_t>(i)].genotype;
        for (Index l = 0; l < 4; ++l) {
            CHECK(sim.data.secondary[static_cast<std::size_t>(l)].row(i) ==
                  sim.truth.genetic_secondary[static_cast<std::size_t>(l)].row(gi));
        }
        CHECK(sim.data.focal(i) == doctest::Approx(5.0 + sim.truth.genetic_focal(gi)).epsilon(1e-14));
    }
}

TEST_CASE("BLUE covariance converges to Sigma_G + Sigma_E / r")
{
    SimConfig c = base_config(2);
    c.g = 2000;
    c.s = 5;
    c.tau = 2;
    c.identity_kinship = true;
    const auto sim = simulate_trial(c);
    const Matrix blues = genotype_blues(sim.data.secondary[0], sim.data.design);
    const Matrix centred = blues.rowwise() - blues.colwise().mean();
    const Matrix emp = centred.transpose() * centred / static_cast<double>(c.g - 1);
    const Matrix expected = sim.truth.sigma_g[0] + sim.truth.sigma_e / 3.0;
    CHECK((emp - expected).cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("same seed gives bitwise identical trials")
{
    const auto a = simulate_trial(base_config(3));
    const auto b = simulate_trial(base_config(3));
    CHECK(a.data.markers == b.data.markers);
    CHECK(a.data.focal == b.data.focal);
    for (std::size_t l = 0; l < a.data.secondary.size(); ++l) {
        CHECK(a.data.secondary[l] == b.data.secondary[l]);
        CHECK(a.truth.factor_scores[l] == b.truth.factor_scores[l]);
    }
    CHECK(a.truth.kinship == b.truth.kinship);
    const auto other = simulate_trial(base_config(4));
    CHECK(other.data.focal != a.data.focal);
}

TEST_CASE("focal trait correlates with the factors as configured")
{
    SimConfig c = base_config(5);
    c.g = 2000;
    c.tau = 2;
    c.identity_kinship = true;
    c.persistence = 1.0;
    c.h2_focal = 0.64;
    c.focal_factor_corr = {0.6, -0.3};
    const auto sim = simulate_trial(c);
    const Vector focal_blue = genotype_blues(sim.data.focal, sim.data.design).col(0);
    for (Index k = 0; k < 2; ++k) {
        const Vector xi = sim.truth.factor_scores[0].col(k);
        const double rho = c.focal_factor_corr[static_cast<std::size_t>(k)];
        CHECK(std::abs(pearson(sim.truth.genetic_focal, xi) - rho) < 0.05);
        // BLUEs carry noise: attenuation by the square root of the heritability.
        CHECK(std::abs(pearson(focal_blue, xi) - rho * std::sqrt(c.h2_focal)) < 0.05);
    }
}

TEST_CASE("planted switches are where noiseless loadings need realignment")
{
    SimConfig c = base_config(6);
    c.tau = 6;
    c.label_switches = {{2, SignedPermutation({1, 0}, {1, -1})}, {4, SignedPermutation({1, 0}, {1, 1})}};
    const auto sim = simulate_trial(c);
    const auto aligned = align_series(sim.truth.loadings, 0);
    for (std::size_t l = 0; l < 6; ++l) {
        CHECK(aligned.permutations[l].is_identity() == (l != 2 && l != 4));
        CHECK(aligned.permutations[l].to_matrix() == sim.truth.permutations[l].to_matrix().transpose());
        CHECK(aligned.aligned[l] == sim.truth.loadings[0]);
    }
    // Relabelling touches the truth only: Xi Lambda^T is unchanged.
    const Matrix common0 = sim.truth.factor_scores[2] * sim.truth.loadings[2].transpose();
    const Matrix p = sim.truth.permutations[2].to_matrix();
    CHECK((common0 - sim.truth.factor_scores[2] * p.transpose() * (sim.truth.loadings[2] * p.transpose()).transpose())
              .cwiseAbs()
              .maxCoeff() < 1e-12);
}

TEST_CASE("reference preset dimensions")
{
    const SimConfig c = preset_cimmyt_like();
    CHECK(c.g * c.r == 3099);
    const auto sim = simulate_trial(c);
    CHECK(sim.data.design.n_plots() == 3099);
    CHECK(sim.data.design.n_timepoints() == 10);
    CHECK(sim.data.secondary.size() == 10);
    CHECK(sim.data.secondary[0].cols() == 62);
    CHECK(sim.data.markers.cols() == 8519);
    CHECK(sim.data.trait_labels.front() == "385");
    CHECK(sim.data.trait_labels.back() == "842.5");
    CHECK_FALSE(sim.truth.permutations[8].is_identity());
    CHECK_FALSE(sim.truth.permutations[9].is_identity());
    CHECK(sim.truth.permutations[7].is_identity());
}

TEST_CASE("configuration errors")
{
    SimConfig c = base_config(7);
    c.seed.reset();
    CHECK_THROWS_AS(simulate_trial(c), ConfigError);
    c = base_config(7);
    c.h2_secondary = 1.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = base_config(7);
    c.focal_factor_corr = {0.9, 0.9};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = base_config(7);
    c.label_switches = {{9, SignedPermutation::identity(2)}};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = base_config(7);
    c.loadings = {Matrix::Constant(8, 2, 0.8)};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = base_config(7);
    c.g = 2;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}
