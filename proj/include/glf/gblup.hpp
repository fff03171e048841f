#pragma once

#include "glf/core.hpp"
#include "glf/kinship.hpp"

#include <string_view>

namespace glf {

/// Genetic and residual covariance of [selected factor scores, focal trait];
/// the focal trait is always the last index.
struct MultiTraitCov {
    SymMatrix sigma_g;
    SymMatrix sigma_e;

    Index n_traits() const noexcept { return sigma_g.dim(); }
    Index focal() const noexcept { return sigma_g.dim() - 1; }
};

/// Two-moment estimate on training plots (columns: secondary..., focal);
/// both matrices PSD-repaired. Throws DataError when traits >= genotypes.
MultiTraitCov estimate_multitrait_cov(const Matrix& plot_matrix, const TrialDesign& design);

enum class Scenario { uni, cv1, cv2 };
std::string_view to_string(Scenario scenario);

struct BlupResult {
    Vector train;        ///< focal BLUPs of the training genotypes
    Vector test;         ///< focal BLUPs of the test genotypes
    Scenario scenario = Scenario::uni;
    Vector beta;         ///< per-trait GLS intercepts
    Matrix train_all;    ///< all-trait training BLUPs (g_o x t)
};

/// Univariate gBLUP from plot-level focal values. Genotype c of `design`
/// corresponds to row c of the training kinship block.
/// Throws NumericalError when sigma_e <= 0 or the system is singular.
BlupResult univariate_gblup(const Vector& focal_train, const TrialDesign& design, double sigma_g,
                            double sigma_e, const KinshipPartition& partition);

/// Multi-trait BLUP with secondary traits observed only in training.
BlupResult cv1_predict(const Matrix& plot_matrix_train, const TrialDesign& design,
                       const MultiTraitCov& cov, const KinshipPartition& partition);

/// Two-step CV2: CV1 training BLUPs for every trait, then the Gaussian update
/// of the test focal values given the observed test secondary traits.
/// Matches the joint conditional expectation E(g_fu | Y_o, Y_wu).
/// Throws DataError when the test secondary data is missing or misshaped.
BlupResult cv2_predict(const Matrix& plot_matrix_train, const TrialDesign& design,
                       const Matrix& secondary_test, const TrialDesign& test_design,
                       const MultiTraitCov& cov, const KinshipPartition& partition);

/// Step-2 update written with V = Sigma_G (x) K_u^-1 + Sigma_E (x) I and the
/// (sigma^{fw} (x) K_u^-1) cross term. Kept for comparison with cv2_predict;
/// it is not the exact conditional expectation.
BlupResult cv2_predict_kinv_form(const Matrix& plot_matrix_train, const TrialDesign& design,
                                     const Matrix& secondary_test, const TrialDesign& test_design,
                                     const MultiTraitCov& cov, const KinshipPartition& partition);

}  // namespace glf
