#pragma once

#include "glf/linalg.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace glf {

enum class Stage { vegetative, heading, grain_filling };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view text);

/// First 40% of timepoints vegetative, next 30% heading, rest grain filling;
/// every stage gets at least one timepoint when tau >= 3.
std::vector<Stage> default_stage_labels(Index tau);

struct PlotAssignment {
    Index genotype = 0;
    Index replicate = 0;
};

/// Resolved trial layout: which genotype/replicate every plot holds and the
/// ordered observation timepoints with their growth stage.
class TrialDesign {
public:
    TrialDesign() = default;
    /// Throws DataError when a plot references an unknown genotype, a
    /// (genotype, replicate) pair repeats, timepoints are not strictly
    /// increasing, or labels and stages disagree in length.
    TrialDesign(std::vector<std::string> genotype_ids,
                std::vector<PlotAssignment> plots,
                std::vector<double> timepoints,
                std::vector<std::string> timepoint_labels,
                std::vector<Stage> stages);

    Index n_genotypes() const noexcept { return static_cast<Index>(genotype_ids_.size()); }
    Index n_plots() const noexcept { return static_cast<Index>(plots_.size()); }
    Index n_timepoints() const noexcept { return static_cast<Index>(timepoints_.size()); }

    const std::vector<std::string>& genotype_ids() const noexcept { return genotype_ids_; }
    const std::vector<PlotAssignment>& plots() const noexcept { return plots_; }
    const std::vector<double>& timepoints() const noexcept { return timepoints_; }
    const std::vector<std::string>& timepoint_labels() const noexcept { return timepoint_labels_; }
    const std::vector<Stage>& stages() const noexcept { return stages_; }

    /// Plot count per genotype (r_c).
    std::vector<Index> replicate_counts() const;
    bool balanced() const;
    /// Harmonic mean of the per-genotype replicate counts; equals r when
    /// the design is balanced. Throws DataError if some genotype has no plots.
    double effective_replicates() const;

    /// Index of the first heading-stage timepoint, or the middle timepoint
    /// when no heading stage is labelled.
    Index first_heading_timepoint() const;

private:
    std::vector<std::string> genotype_ids_;
    std::vector<PlotAssignment> plots_;
    std::vector<double> timepoints_;
    std::vector<std::string> timepoint_labels_;
    std::vector<Stage> stages_;
};

/// Plot-level secondary traits per timepoint, focal trait and markers.
struct TrialDataset {
    TrialDesign design;
    std::vector<Matrix> secondary;  ///< one n x s matrix per timepoint
    Vector focal;                   ///< n plot values
    std::vector<std::string> trait_labels;
    std::vector<std::string> plot_ids;
    Matrix markers;                 ///< g x p codes in {0,1,2}; may be empty
    Matrix kinship;                 ///< optional precomputed g x g kinship

    Index n_traits() const noexcept { return static_cast<Index>(trait_labels.size()); }

    /// Shape and content checks; throws DataError.
    void validate() const;

    /// Dataset holding only the plots of `genotypes` (indices into the
    /// current genotype list), renumbered 0..k-1 in the given order.
    /// Markers/kinship are restricted accordingly.
    TrialDataset restrict_genotypes(std::span<const Index> genotypes) const;
};

enum class MatrixKind { covariance, correlation, kinship };

/// Dense symmetric matrix tagged with what it represents. The constructor
/// averages the input with its transpose.
class SymMatrix {
public:
    SymMatrix() = default;
    /// Throws DataError on non-square input, a correlation diagonal off 1 by
    /// more than 1e-10, or a negative covariance/kinship diagonal.
    SymMatrix(const Matrix& values, MatrixKind kind);

    const Matrix& values() const noexcept { return values_; }
    MatrixKind kind() const noexcept { return kind_; }
    Index dim() const noexcept { return values_.rows(); }
    double operator()(Index i, Index j) const { return values_(i, j); }

private:
    Matrix values_;
    MatrixKind kind_ = MatrixKind::covariance;
};

/// n x g zero/one plot-to-genotype incidence matrix Z.
Matrix build_incidence(const TrialDesign& design);

/// Genotype means of an n x s plot matrix (BLUEs under a resolved design).
Matrix genotype_blues(const Matrix& plot_values, const TrialDesign& design);

/// Row i is the BLUE row of plot i's genotype.
Matrix expand_blues(const Matrix& blues, const TrialDesign& design);

/// Plot value minus the genotype BLUE.
Matrix plot_residuals(const Matrix& plot_values, const Matrix& blues, const TrialDesign& design);

/// D^-1/2 S D^-1/2 with D = diag(S). Throws NumericalError naming the first
/// trait with a non-positive variance.
SymMatrix cov_to_cor(const SymMatrix& cov);

/// Eigenvalue clipping at floor_rel * (largest eigenvalue). Inputs that are
/// already above the floor are returned unchanged.
SymMatrix nearest_psd(const Matrix& values, MatrixKind kind, double floor_rel = 1e-8);

}  // namespace glf
