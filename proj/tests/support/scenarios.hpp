#pragma once

// Simulation scenarios shared by the unit and acceptance tests.

#include "glf/gblup.hpp"
#include "glf/kinship.hpp"
#include "glf/selection.hpp"

#include "oracles.hpp"

namespace glf::testing {

struct SelectionRates {
    int exact_hits = 0;      ///< selected set is exactly the informative column
    int included_hits = 0;   ///< informative column is among the selected
    int null_empty = 0;      ///< pure-noise response selects nothing
    int trials = 0;
};

/// One informative column at `informative` among `noise + 1` standard normal
/// candidates, y = signal + e with var(signal) / var(e) = snr.
inline SelectionRates selection_rates(int trials, Index g, Index noise, Index informative, double snr,
                                      std::uint64_t seed)
{
    Rng rng(seed);
    SelectionRates out;
    out.trials = trials;
    const std::vector<Index> expected{informative};
    for (int t = 0; t < trials; ++t) {
        const Matrix cand = random_normal(g, noise + 1, rng);
        const Vector e = random_normal(g, 1, rng).col(0) / std::sqrt(snr);
        const auto hit = best_subset(cand.col(informative) + e, cand);
        out.exact_hits += hit.selected == expected ? 1 : 0;
        out.included_hits +=
            std::find(hit.selected.begin(), hit.selected.end(), informative) != hit.selected.end() ? 1 : 0;
        const Vector null_y = random_normal(g, 1, rng).col(0);
        out.null_empty += best_subset(null_y, cand).selected.empty() ? 1 : 0;
    }
    return out;
}

struct ToyInstance {
    TrialDesign train_design;
    TrialDesign test_design;
    Matrix y_o;    ///< training plots, t columns (focal last)
    Matrix y_wu;   ///< test plots, first t - 1 columns
    Matrix sigma_g;
    Matrix sigma_e;
    Matrix kinship;
    std::vector<Index> train_ids;
    std::vector<Index> test_ids;
};

/// Random small instance: g <= 9 genotypes, t <= 3 traits, 1 to 3 plots per
/// genotype, random SPD covariances and kinship.
inline ToyInstance random_toy(Rng& rng, bool balanced)
{
    std::uniform_int_distribution<Index> pick_g(4, 9);
    std::uniform_int_distribution<Index> pick_t(1, 3);
    std::uniform_int_distribution<Index> pick_r(1, 3);
    const Index g = pick_g(rng);
    std::uniform_int_distribution<Index> pick_u(1, std::min<Index>(3, g - 2));
    const Index g_u = pick_u(rng);
    const Index g_o = g - g_u;
    const Index t = pick_t(rng);

    ToyInstance toy;
    std::vector<Index> ids(static_cast<std::size_t>(g));
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    toy.train_ids.assign(ids.begin(), ids.begin() + g_o);
    toy.test_ids.assign(ids.begin() + g_o, ids.end());

    const Index r_all = pick_r(rng);
    auto reps = [&](Index n) {
        std::vector<Index> out(static_cast<std::size_t>(n));
        for (auto& v : out) {
            v = balanced ? r_all : pick_r(rng);
        }
        return out;
    };
    toy.train_design = design_with_reps(reps(g_o), 2, "O");
    toy.test_design = design_with_reps(reps(g_u), 2, "U");
    toy.sigma_g = random_spd(t, rng);
    toy.sigma_e = random_spd(t, rng);
    toy.kinship = random_kinship(g, rng);
    toy.y_o = random_normal(toy.train_design.n_plots(), t, rng);
    toy.y_o.rowwise() += random_normal(1, t, rng).row(0) * 3.0;
    toy.y_wu = random_normal(toy.test_design.n_plots(), t - 1, rng);
    return toy;
}

struct ToyErrors {
    double uni_vs_mme = 0.0;
    double cv1_vs_dense = 0.0;
    double cv2_vs_dense = 0.0;
};

/// Largest absolute gap between the library BLUPs and the dense oracles.
inline ToyErrors toy_errors(const ToyInstance& toy)
{
    const SymMatrix k(toy.kinship, MatrixKind::kinship);
    const auto part = partition_kinship(k, toy.train_ids, toy.test_ids);
    const Matrix k_o = submatrix(toy.kinship, toy.train_ids, toy.train_ids);
    const Matrix k_uo = submatrix(toy.kinship, toy.test_ids, toy.train_ids);
    const Matrix k_u = submatrix(toy.kinship, toy.test_ids, toy.test_ids);
    const Index t = toy.sigma_g.rows();
    const Index f = t - 1;
    ToyErrors err;

    const Vector focal = toy.y_o.col(f);
    const auto uni = univariate_gblup(focal, toy.train_design, toy.sigma_g(f, f), toy.sigma_e(f, f), part);
    const auto mme = mme_univariate(focal, toy.train_design, toy.sigma_g(f, f), toy.sigma_e(f, f), k_o, k_uo);
    err.uni_vs_mme = std::max({(uni.train - mme.train).cwiseAbs().maxCoeff(),
                               (uni.test - mme.test).cwiseAbs().maxCoeff(), std::abs(uni.beta(0) - mme.beta)});

    const MultiTraitCov cov{SymMatrix(toy.sigma_g, MatrixKind::covariance),
                            SymMatrix(toy.sigma_e, MatrixKind::covariance)};
    const auto dense = dense_joint_normal(toy.y_o, toy.train_design, toy.y_wu, toy.test_design, toy.sigma_g,
                                          toy.sigma_e, k_o, k_uo, k_u);
    const auto cv1 = cv1_predict(toy.y_o, toy.train_design, cov, part);
    err.cv1_vs_dense = std::max({(cv1.train - dense.focal_train).cwiseAbs().maxCoeff(),
                                 (cv1.test - dense.cv1_test).cwiseAbs().maxCoeff(),
                                 (cv1.beta - dense.beta).cwiseAbs().maxCoeff()});
    const auto cv2 = cv2_predict(toy.y_o, toy.train_design, toy.y_wu, toy.test_design, cov, part);
    err.cv2_vs_dense = std::max((cv2.test - dense.cv2_test).cwiseAbs().maxCoeff(),
                                (cv2.train - dense.focal_train).cwiseAbs().maxCoeff());
    return err;
}

}  // namespace glf::testing
