#pragma once

#include "glf/core.hpp"
#include "glf/procrustes.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace glf {

/// Generator settings for a synthetic replicated trial. Secondary traits have
/// unit genetic variance and a planted factor structure; heritabilities are
/// on the genotype-mean scale.
struct SimConfig {
    Index g = 200;
    Index s = 20;
    Index r = 3;
    Index tau = 5;
    Index p = 1000;              ///< marker count; ignored with identity_kinship
    bool identity_kinship = false;
    std::optional<std::uint64_t> seed;

    Index n_factors = 2;
    /// Trait index where each factor block after the first starts. Empty means
    /// equal-width contiguous blocks.
    std::vector<Index> block_starts;
    double communality = 0.8;    ///< squared loading of a trait on its block factor
    /// Explicit loadings per timepoint (s x m); overrides the block generator.
    std::vector<Matrix> loadings;

    double h2_secondary = 0.8;
    double h2_focal = 0.3;
    /// Genetic correlation of the focal trait with each factor's base score.
    std::vector<double> focal_factor_corr{0.6, 0.3};
    double persistence = 0.9;    ///< correlation of a factor's scores between timepoints
    double residual_ar = 0.5;    ///< AR(1) residual correlation of adjacent traits

    std::vector<std::pair<Index, SignedPermutation>> label_switches;

    double wavelength_start = 400.0;
    double wavelength_step = 10.0;
    double day_start = 30.0;
    double day_step = 7.0;

    /// Throws ConfigError for out-of-range settings, a missing seed or an
    /// implied focal/factor genetic covariance that is not PSD.
    void validate() const;

    /// Loadings for one timepoint before any label switch.
    Matrix base_loadings() const;
};

struct SimTruth {
    std::vector<Matrix> genetic_secondary;  ///< g x s per timepoint
    Vector genetic_focal;
    std::vector<Matrix> factor_scores;      ///< g x m per timepoint, relabelled by the schedule
    std::vector<Matrix> loadings;           ///< s x m per timepoint, relabelled by the schedule
    Vector uniquenesses;
    std::vector<SignedPermutation> permutations;
    std::vector<Matrix> sigma_g;            ///< s x s per timepoint
    Matrix sigma_e;                         ///< s x s plot residual covariance
    double focal_sigma_g = 0.0;
    double focal_sigma_e = 0.0;
    Matrix kinship;
};

struct SimResult {
    TrialDataset data;
    SimTruth truth;
};

SimResult simulate_trial(const SimConfig& config);

/// Dimensions of the reference field trial: 1033 genotypes, 62 bands from
/// 385 nm in 7.5 nm steps, 3 replicates, 10 timepoints, 8519 markers, two
/// factors split at 700 nm, a label switch on the last two timepoints and a
/// focal heritability of 0.61.
SimConfig preset_cimmyt_like();

}  // namespace glf
