#pragma once

#include "glf/gblup.hpp"
#include "glf/io.hpp"
#include "glf/procrustes.hpp"
#include "glf/scores.hpp"
#include "glf/selection.hpp"
#include "glf/splines.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace glf {

enum class ModelKind { gblup, concat_glf, varimax_glf, procrustes_glf, spline_glf };
std::string_view to_string(ModelKind model);
ModelKind parse_model(std::string_view text);

enum class StageSubset { vegetative, vegetative_heading, all };
std::string_view to_string(StageSubset stage);
StageSubset parse_stage_subset(std::string_view text);

/// Index of a timepoint label, or the first heading timepoint for
/// "auto-heading". Throws DataError for unknown labels.
Index resolve_timepoint(const TrialDesign& design, std::string_view label);

/// Timepoints whose stage label falls inside the subset.
std::vector<Index> stage_timepoints(const TrialDesign& design, StageSubset stage);

struct CvPlan {
    Index n_replicates = 100;
    double train_fraction = 2.0 / 3.0;
    std::vector<Scenario> scenarios{Scenario::cv1, Scenario::cv2};
    std::vector<StageSubset> stages{StageSubset::vegetative, StageSubset::vegetative_heading, StageSubset::all};
    std::vector<ModelKind> models{ModelKind::gblup, ModelKind::concat_glf, ModelKind::varimax_glf,
                                  ModelKind::procrustes_glf};
    std::uint64_t seed = 1;
    int threads = 1;
    std::string target_timepoint = "auto-heading";  ///< alignment target label
    double redundancy_threshold = 0.99;
    SelectionOptions selection;
    TrajectoryOptions spline;
    bool emit_trajectories = true;

    /// Throws ConfigError on an empty or inconsistent plan.
    void validate() const;
};

/// Plan from a key-value config; unknown keys are rejected.
CvPlan cv_plan_from(const KeyValueConfig& config);

/// Pearson correlation; nullopt when either vector has zero variance.
/// Throws DataError for fewer than 3 pairs or mismatched lengths.
std::optional<double> predictive_ability(const Vector& predicted, const Vector& observed);

struct GenotypeSplit {
    std::vector<Index> train;  ///< sorted
    std::vector<Index> test;   ///< sorted
};

/// Genotype split fully determined by (seed, replicate).
GenotypeSplit split_genotypes(Index n_genotypes, double train_fraction, std::uint64_t seed, Index replicate);

/// Per-timepoint factor pipeline fitted on one dataset: covariances,
/// dimension choice, refit at the modal m*, Varimax and Procrustes alignment.
struct TimepointFactorFits {
    std::vector<CovariancePair> covariances;
    std::vector<DimensionChoice> dimensions;
    Index common_m = 0;
    std::vector<FactorModel> models;       ///< unrotated fits at common_m
    std::vector<Matrix> varimax_loadings;
    AlignedLoadingsSeries alignment;       ///< built from the Varimax loadings
    std::vector<Matrix> centers;           ///< genotype-BLUE means per timepoint (1 x s)

    /// Scoring maps with Varimax or aligned loadings.
    std::vector<TimepointProjection> projections(bool aligned) const;
};

/// Throws DataError/NumericalError; `target` < 0 picks the first heading timepoint.
TimepointFactorFits fit_timepoint_factors(const TrialDataset& data, Index target = -1);

/// Concatenated-baseline factor model on stacked trait x timepoint columns.
struct ConcatenatedModel {
    std::vector<Index> kept_columns;  ///< indices into the stacked columns
    std::vector<Index> timepoints;
    CovariancePair covariance;
    DimensionChoice dimension;
    FactorModel model;               ///< Varimax-rotated loadings
    TimepointProjection projection;

    Matrix stack(const TrialDataset& data) const;  ///< n x kept plot matrix
};

/// Fits the baseline on training data restricted to `timepoints`. Throws
/// DataError ("baseline degenerate") when fewer than 3 columns survive the
/// |genetic correlation| filter.
ConcatenatedModel concatenated_baseline(const TrialDataset& train, const std::vector<Index>& timepoints,
                                        double redundancy_threshold = 0.99);

struct PaRecord {
    ModelKind model = ModelKind::gblup;
    Scenario scenario = Scenario::cv1;
    StageSubset stage = StageSubset::all;
    Index replicate = 0;
    std::optional<double> pa;
    std::string failure;
    bool operator==(const PaRecord&) const = default;
};

struct SelectionRecord {
    Index replicate = 0;
    ModelKind model = ModelKind::procrustes_glf;
    StageSubset stage = StageSubset::all;
    std::string timepoint;
    Index factor = 0;
    bool selected = false;
    bool operator==(const SelectionRecord&) const = default;
};

struct LoadingRecord {
    Index replicate = 0;
    std::string timepoint;
    std::string trait;
    Index factor = 0;
    double raw = 0.0;
    double aligned = 0.0;
    bool operator==(const LoadingRecord&) const = default;
};

/// Training-set genetic correlation proxy: correlation of a factor's
/// genotype scores with the focal genotype means.
struct FactorCorrelationRecord {
    Index replicate = 0;
    std::string timepoint;
    Index factor = 0;
    Index m_star = 0;
    Index common_m = 0;
    double correlation = 0.0;
    bool operator==(const FactorCorrelationRecord&) const = default;
};

struct TrajectoryRecord {
    Index replicate = 0;
    std::string genotype;  ///< "population" for the population curve
    Index factor = 0;
    double time = 0.0;
    double value = 0.0;
    bool operator==(const TrajectoryRecord&) const = default;
};

struct RuntimeRecord {
    Index replicate = 0;
    std::string phase;
    double seconds = 0.0;
    bool operator==(const RuntimeRecord&) const = default;
};

struct CvReport {
    Index n_replicates = 0;
    std::vector<PaRecord> pa;
    std::vector<SelectionRecord> selection;
    std::vector<LoadingRecord> loadings;
    std::vector<FactorCorrelationRecord> factor_correlations;
    std::vector<TrajectoryRecord> trajectories;
    std::vector<RuntimeRecord> runtime;

    /// Equality of everything except wall-clock runtime.
    bool same_results(const CvReport& other) const;
};

/// Test-set predictions of one replicate, kept for leakage and oracle checks.
struct ReplicatePredictions {
    ModelKind model;
    Scenario scenario;
    StageSubset stage;
    Vector test;
    std::vector<Index> selected;
    Vector beta;
};

struct ReplicateOutcome {
    CvReport report;  ///< records of this replicate only
    std::vector<ReplicatePredictions> predictions;
    Vector observed;  ///< test genotype focal means
    GenotypeSplit split;
};

/// Relationship matrix used by run_cv: the dataset's kinship when given,
/// otherwise VanRaden from its markers.
SymMatrix dataset_kinship(const TrialDataset& data, int threads = 1);

ReplicateOutcome run_replicate(const TrialDataset& data, const SymMatrix& kinship, const CvPlan& plan,
                               Index replicate);

/// Runs every replicate (worker pool over replicates) and merges in
/// replicate order. Model failures are recorded, never thrown.
CvReport run_cv(const TrialDataset& data, const CvPlan& plan);

struct PaSummary {
    ModelKind model;
    Scenario scenario;
    StageSubset stage;
    Index n = 0;
    Index failures = 0;
    double mean = 0.0;
    double q25 = 0.0;
    double median = 0.0;
    double q75 = 0.0;
};

std::vector<PaSummary> summarize(const CvReport& report);

/// pa_boxplot.csv, loadings_series.csv, selection_incidence.csv,
/// factor_correlations.csv, trajectories.csv and runtime.csv.
void emit_reports(const CvReport& report, const std::filesystem::path& out_dir);

/// Re-parses the files written by emit_reports.
CvReport read_reports(const std::filesystem::path& in_dir);

/// summary.csv with quantiles per (model, scenario, stage).
void write_summary(const std::vector<PaSummary>& summary, const std::filesystem::path& file);

}  // namespace glf
