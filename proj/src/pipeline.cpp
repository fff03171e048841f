#include "glf/pipeline.hpp"

#include "glf/covest.hpp"
#include "glf/error.hpp"
#include "glf/kinship.hpp"

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <thread>

namespace glf {
namespace fs = std::filesystem;

std::string_view to_string(ModelKind model)
{
    switch (model) {
    case ModelKind::gblup:
        return "gblup";
    case ModelKind::concat_glf:
        return "concat_glfblup";
    case ModelKind::varimax_glf:
        return "varimax_glfblup";
    case ModelKind::procrustes_glf:
        return "procrustes_glfblup";
    case ModelKind::spline_glf:
        return "spline_glfblup";
    }
    return "unknown";
}

ModelKind parse_model(std::string_view text)
{
    for (auto m : {ModelKind::gblup, ModelKind::concat_glf, ModelKind::varimax_glf, ModelKind::procrustes_glf,
                   ModelKind::spline_glf}) {
        if (text == to_string(m)) {
            return m;
        }
    }
    throw ConfigError(fmt::format("unknown model '{}'", text));
}

std::string_view to_string(StageSubset stage)
{
    switch (stage) {
    case StageSubset::vegetative:
        return "vegetative";
    case StageSubset::vegetative_heading:
        return "vegetative_heading";
    case StageSubset::all:
        return "all";
    }
    return "unknown";
}

StageSubset parse_stage_subset(std::string_view text)
{
    for (auto s : {StageSubset::vegetative, StageSubset::vegetative_heading, StageSubset::all}) {
        if (text == to_string(s)) {
            return s;
        }
    }
    throw ConfigError(fmt::format("unknown stage subset '{}'", text));
}

namespace {

Scenario parse_scenario(std::string_view text)
{
    for (auto s : {Scenario::uni, Scenario::cv1, Scenario::cv2}) {
        if (text == to_string(s)) {
            return s;
        }
    }
    std::string upper(text);
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    for (auto s : {Scenario::cv1, Scenario::cv2}) {
        if (upper == to_string(s)) {
            return s;
        }
    }
    throw ConfigError(fmt::format("unknown scenario '{}'", text));
}

double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Matrix as_column(const Vector& v)
{
    return Matrix(v);
}

}  // namespace

Index resolve_timepoint(const TrialDesign& design, std::string_view label)
{
    if (label.empty() || label == "auto-heading") {
        return design.first_heading_timepoint();
    }
    const auto& labels = design.timepoint_labels();
    const auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) {
        throw DataError(fmt::format("unknown timepoint '{}'", label));
    }
    return static_cast<Index>(it - labels.begin());
}

std::vector<Index> stage_timepoints(const TrialDesign& design, StageSubset stage)
{
    std::vector<Index> out;
    for (Index l = 0; l < design.n_timepoints(); ++l) {
        const Stage st = design.stages()[static_cast<std::size_t>(l)];
        const bool in = stage == StageSubset::all ||
                        st == Stage::vegetative ||
                        (stage == StageSubset::vegetative_heading && st == Stage::heading);
        if (in) {
            out.push_back(l);
        }
    }
    return out;
}

void CvPlan::validate() const
{
    if (n_replicates < 1) {
        throw ConfigError("plan: replicates must be at least 1");
    }
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("plan: train_fraction must lie in (0, 1)");
    }
    if (scenarios.empty() || stages.empty() || models.empty()) {
        throw ConfigError("plan: scenarios, stages and models must be non-empty");
    }
    for (auto s : scenarios) {
        if (s == Scenario::uni) {
            throw ConfigError("plan: scenarios are CV1 and/or CV2");
        }
    }
    if (threads < 1) {
        throw ConfigError("plan: threads must be at least 1");
    }
    if (!(redundancy_threshold > 0.0 && redundancy_threshold <= 1.0)) {
        throw ConfigError("plan: redundancy_threshold must lie in (0, 1]");
    }
}

CvPlan cv_plan_from(const KeyValueConfig& cfg)
{
    CvPlan plan;
    plan.n_replicates = cfg.get_int("replicates", plan.n_replicates);
    plan.train_fraction = cfg.get_double("train_fraction", plan.train_fraction);
    if (cfg.has("scenarios")) {
        plan.scenarios.clear();
        for (const auto& s : cfg.get_list("scenarios", {})) {
            plan.scenarios.push_back(parse_scenario(s));
        }
    }
    if (cfg.has("stages")) {
        plan.stages.clear();
        for (const auto& s : cfg.get_list("stages", {})) {
            plan.stages.push_back(parse_stage_subset(s));
        }
    }
    if (cfg.has("models")) {
        plan.models.clear();
        for (const auto& s : cfg.get_list("models", {})) {
            plan.models.push_back(parse_model(s));
        }
    }
    plan.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(plan.seed)));
    plan.threads = static_cast<int>(cfg.get_int("threads", plan.threads));
    plan.target_timepoint = cfg.get_string("target_timepoint", plan.target_timepoint);
    plan.redundancy_threshold = cfg.get_double("redundancy_threshold", plan.redundancy_threshold);
    plan.selection.exhaustive_limit = cfg.get_int("exhaustive_limit", plan.selection.exhaustive_limit);
    const std::string penalty = cfg.get_string("spline_penalty", "gcv");
    if (penalty != "gcv") {
        try {
            plan.spline.penalty = parse_double(penalty, "spline_penalty");
        } catch (const DataError& e) {
            throw ConfigError(e.what());
        }
    }
    plan.spline.segments = cfg.get_int("spline_segments", plan.spline.segments);
    plan.emit_trajectories = cfg.get_bool("emit_trajectories", plan.emit_trajectories);
    cfg.reject_unknown();
    plan.validate();
    return plan;
}

std::optional<double> predictive_ability(const Vector& predicted, const Vector& observed)
{
    if (predicted.size() != observed.size()) {
        throw DataError("predictive_ability: predicted and observed differ in length");
    }
    if (predicted.size() < 3) {
        throw DataError("predictive_ability: need at least 3 test genotypes");
    }
    const Vector a = predicted.array() - predicted.mean();
    const Vector b = observed.array() - observed.mean();
    const double na = a.norm();
    const double nb = b.norm();
    const double tiny = 1e-14;
    if (!(na > tiny * std::max(1.0, predicted.cwiseAbs().maxCoeff())) ||
        !(nb > tiny * std::max(1.0, observed.cwiseAbs().maxCoeff()))) {
        return std::nullopt;
    }
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

GenotypeSplit split_genotypes(Index n_genotypes, double train_fraction, std::uint64_t seed, Index replicate)
{
    if (n_genotypes < 6) {
        throw DataError("split_genotypes: need at least 6 genotypes");
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffU), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(replicate)};
    std::mt19937_64 engine(seq);
    std::vector<Index> ids(static_cast<std::size_t>(n_genotypes));
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), engine);
    const auto n_train = std::clamp<Index>(static_cast<Index>(std::llround(train_fraction * n_genotypes)), 3,
                                           n_genotypes - 3);
    GenotypeSplit out;
    out.train.assign(ids.begin(), ids.begin() + n_train);
    out.test.assign(ids.begin() + n_train, ids.end());
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

// ---------------------------------------------------------------- factor fits

std::vector<TimepointProjection> TimepointFactorFits::projections(bool aligned) const
{
    std::vector<TimepointProjection> out;
    for (std::size_t l = 0; l < models.size(); ++l) {
        FactorModel m = models[l];
        m.loadings = aligned ? alignment.aligned[l] : varimax_loadings[l];
        out.push_back(make_projection(m, covariances[l], centers[l].row(0).transpose()));
    }
    return out;
}

TimepointFactorFits fit_timepoint_factors(const TrialDataset& data, Index target)
{
    const Index tau = data.design.n_timepoints();
    if (target < 0) {
        target = data.design.first_heading_timepoint();
    }
    if (target >= tau) {
        throw DataError("alignment target outside the timepoints");
    }
    TimepointFactorFits fits;
    std::vector<SymMatrix> correlations;
    for (Index l = 0; l < tau; ++l) {
        const Matrix& y = data.secondary[static_cast<std::size_t>(l)];
        try {
            fits.covariances.push_back(estimate_covariances(y, data.design));
            correlations.push_back(cov_to_cor(fits.covariances.back().sigma_g));
            fits.dimensions.push_back(select_dimension(correlations.back()));
        } catch (const Error& e) {
            throw NumericalError(fmt::format("timepoint {}: {}", data.design.timepoint_labels()[static_cast<std::size_t>(l)],
                                             e.what()));
        }
        fits.centers.push_back(genotype_blues(y, data.design).colwise().mean());
    }
    std::map<Index, Index> counts;
    for (const auto& d : fits.dimensions) {
        ++counts[d.m_star];
    }
    Index best_count = 0;
    for (const auto& [m, count] : counts) {
        if (count > best_count) {
            best_count = count;
            fits.common_m = m;
        }
    }
    for (Index l = 0; l < tau; ++l) {
        auto model = fit_factor_model(correlations[static_cast<std::size_t>(l)], fits.common_m);
        if (!model.converged) {
            spdlog::debug("factor fit at timepoint {} did not converge", l);
        }
        fits.varimax_loadings.push_back(varimax(model.loadings).loadings);
        fits.models.push_back(std::move(model));
    }
    fits.alignment = align_series(fits.varimax_loadings, target);
    return fits;
}

// ---------------------------------------------------------------- concatenated baseline

Matrix ConcatenatedModel::stack(const TrialDataset& data) const
{
    const Index s = data.n_traits();
    Matrix out(data.design.n_plots(), static_cast<Index>(kept_columns.size()));
    for (std::size_t k = 0; k < kept_columns.size(); ++k) {
        const Index c = kept_columns[k];
        const Index tp = timepoints[static_cast<std::size_t>(c / s)];
        out.col(static_cast<Index>(k)) = data.secondary[static_cast<std::size_t>(tp)].col(c % s);
    }
    return out;
}

ConcatenatedModel concatenated_baseline(const TrialDataset& train, const std::vector<Index>& timepoints,
                                        double redundancy_threshold)
{
    if (timepoints.empty()) {
        throw DataError("concatenated baseline: no timepoints");
    }
    const Index s = train.n_traits();
    ConcatenatedModel out;
    out.timepoints = timepoints;
    const auto total = static_cast<Index>(timepoints.size()) * s;
    out.kept_columns.resize(static_cast<std::size_t>(total));
    std::iota(out.kept_columns.begin(), out.kept_columns.end(), 0);
    const Matrix full = out.stack(train);

    const auto cov_all = estimate_covariances(full, train.design);
    const Vector var = cov_all.sigma_g.values().diagonal();
    const Matrix& sg = cov_all.sigma_g.values();
    std::vector<Index> kept;
    for (Index c = 0; c < total; ++c) {
        if (!(var(c) > 0.0)) {
            continue;
        }
        bool redundant = false;
        for (Index k : kept) {
            const double rho = sg(c, k) / std::sqrt(var(c) * var(k));
            if (std::abs(rho) > redundancy_threshold) {
                redundant = true;
                break;
            }
        }
        if (!redundant) {
            kept.push_back(c);
        }
    }
    if (kept.size() < 3) {
        throw DataError(fmt::format("concatenated baseline degenerate: {} column(s) survive the redundancy filter",
                                    kept.size()));
    }
    out.kept_columns = kept;
    const Matrix stacked = out.stack(train);
    out.covariance = estimate_covariances(stacked, train.design);
    const SymMatrix cor = cov_to_cor(out.covariance.sigma_g);
    out.dimension = select_dimension(cor);
    out.model = fit_factor_model(cor, out.dimension.m_star);
    out.model.loadings = varimax(out.model.loadings).loadings;
    const Vector center = genotype_blues(stacked, train.design).colwise().mean().transpose();
    out.projection = make_projection(out.model, out.covariance, center);
    return out;
}

// ---------------------------------------------------------------- CV

SymMatrix dataset_kinship(const TrialDataset& data, int threads)
{
    if (data.kinship.size() > 0) {
        return SymMatrix(data.kinship, MatrixKind::kinship);
    }
    if (data.markers.size() == 0) {
        throw DataError("dataset has neither markers nor a kinship matrix");
    }
    KinshipOptions opts;
    opts.threads = threads;
    return genomic_relationship(data.markers, opts);
}

namespace {

struct CandidateSet {
    Matrix genotype_train;  ///< g_o x c
    Matrix plot_train;      ///< n_o x c
    Matrix plot_test;       ///< n_u x c
    std::vector<std::pair<std::string, Index>> labels;  ///< (timepoint, factor) per column
};

struct GlfPrediction {
    std::vector<Index> selected;
    std::map<Scenario, BlupResult> results;
};

Matrix pick_columns(const Matrix& m, const std::vector<Index>& cols)
{
    Matrix out(m.rows(), static_cast<Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
        out.col(static_cast<Index>(k)) = m.col(cols[k]);
    }
    return out;
}

GlfPrediction predict_with_candidates(const CandidateSet& cand, const TrialDataset& train, const TrialDataset& test,
                                      const KinshipPartition& part, const Vector& focal_means,
                                      const CvPlan& plan)
{
    GlfPrediction out;
    out.selected = best_subset(focal_means, cand.genotype_train, plan.selection).selected;
    Matrix plot_matrix(train.design.n_plots(), static_cast<Index>(out.selected.size()) + 1);
    plot_matrix.leftCols(static_cast<Index>(out.selected.size())) = pick_columns(cand.plot_train, out.selected);
    plot_matrix.col(plot_matrix.cols() - 1) = train.focal;
    const auto cov = estimate_multitrait_cov(plot_matrix, train.design);
    for (auto sc : plan.scenarios) {
        if (sc == Scenario::cv1) {
            out.results.emplace(sc, cv1_predict(plot_matrix, train.design, cov, part));
        } else {
            out.results.emplace(sc, cv2_predict(plot_matrix, train.design, pick_columns(cand.plot_test, out.selected),
                                                test.design, cov, part));
        }
    }
    return out;
}

CandidateSet scores_to_candidates(const ScoreSeries& train_scores, const ScoreSeries& test_scores,
                                  const std::vector<Index>& tps, const std::vector<std::string>& tp_labels)
{
    const Index m = train_scores.genotype_scores.front().cols();
    const auto c = static_cast<Index>(tps.size()) * m;
    CandidateSet cand;
    cand.genotype_train.resize(train_scores.genotype_scores.front().rows(), c);
    cand.plot_train.resize(train_scores.plot_scores.front().rows(), c);
    cand.plot_test.resize(test_scores.plot_scores.front().rows(), c);
    Index col = 0;
    for (Index l : tps) {
        for (Index k = 0; k < m; ++k, ++col) {
            cand.genotype_train.col(col) = train_scores.genotype_scores[static_cast<std::size_t>(l)].col(k);
            cand.plot_train.col(col) = train_scores.plot_scores[static_cast<std::size_t>(l)].col(k);
            cand.plot_test.col(col) = test_scores.plot_scores[static_cast<std::size_t>(l)].col(k);
            cand.labels.emplace_back(tp_labels[static_cast<std::size_t>(l)], k);
        }
    }
    return cand;
}

ScoreSeries subset_series(const ScoreSeries& s, const std::vector<Index>& tps)
{
    ScoreSeries out;
    out.aligned = s.aligned;
    for (Index l : tps) {
        out.genotype_scores.push_back(s.genotype_scores[static_cast<std::size_t>(l)]);
        out.plot_scores.push_back(s.plot_scores[static_cast<std::size_t>(l)]);
        out.timepoint_labels.push_back(s.timepoint_labels[static_cast<std::size_t>(l)]);
    }
    return out;
}

/// AUC characteristics of the aligned trajectories as candidate traits.
CandidateSet spline_candidates(const ScoreSeries& train_scores, const ScoreSeries& test_scores,
                               const std::vector<Index>& tps, const TrialDesign& design,
                               const TrajectoryOptions& options)
{
    if (tps.size() < 2) {
        throw DataError("spline model needs at least 2 timepoints in the stage subset");
    }
    std::vector<double> times;
    for (Index l : tps) {
        times.push_back(design.timepoints()[static_cast<std::size_t>(l)]);
    }
    const auto train_sub = subset_series(train_scores, tps);
    const auto test_sub = subset_series(test_scores, tps);
    const TrajectoryFit fit = fit_trajectories(train_sub, times, options);
    double t0 = times.front();
    for (std::size_t k = 0; k < tps.size(); ++k) {
        if (design.stages()[static_cast<std::size_t>(tps[k])] == Stage::heading) {
            t0 = times[k];
            break;
        }
    }
    const double t1 = times.back();
    if (!(t0 < t1)) {
        t0 = times.front();
    }
    const Index m = train_scores.genotype_scores.front().cols();
    const auto tau = static_cast<Index>(tps.size());
    auto series_matrix = [&](const std::vector<Matrix>& per_tp, Index k) {
        Matrix out(per_tp.front().rows(), tau);
        for (Index l = 0; l < tau; ++l) {
            out.col(l) = per_tp[static_cast<std::size_t>(l)].col(k);
        }
        return out;
    };
    CandidateSet cand;
    cand.genotype_train.resize(train_sub.genotype_scores.front().rows(), m);
    cand.plot_train.resize(train_sub.plot_scores.front().rows(), m);
    cand.plot_test.resize(test_sub.plot_scores.front().rows(), m);
    for (Index k = 0; k < m; ++k) {
        const AucMap map = auc_map(fit, k, t0, t1);
        auto apply_rows = [&](const Matrix& series) {
            const Matrix centred = series.rowwise() - map.mean_scores.transpose();
            return Vector((centred * map.weights).array() + map.offset);
        };
        cand.genotype_train.col(k) = apply_rows(series_matrix(train_sub.genotype_scores, k));
        cand.plot_train.col(k) = apply_rows(series_matrix(train_sub.plot_scores, k));
        cand.plot_test.col(k) = apply_rows(series_matrix(test_sub.plot_scores, k));
        cand.labels.emplace_back("auc", k);
    }
    return cand;
}

double correlation(const Vector& a, const Vector& b)
{
    const Vector x = a.array() - a.mean();
    const Vector y = b.array() - b.mean();
    const double d = x.norm() * y.norm();
    return d > 0.0 ? x.dot(y) / d : 0.0;
}

}  // namespace

ReplicateOutcome run_replicate(const TrialDataset& data, const SymMatrix& kinship, const CvPlan& plan,
                               Index replicate)
{
    const auto t_start = std::chrono::steady_clock::now();
    ReplicateOutcome out;
    auto& rep = out.report;
    rep.n_replicates = 1;

    // Results keyed by (model, scenario, stage); filled in below.
    std::map<std::tuple<ModelKind, Scenario, StageSubset>, PaRecord> table;
    auto record = [&](ModelKind model, Scenario sc, StageSubset st, const Vector* pred, const std::string& failure,
                      const std::vector<Index>& selected = {}, const Vector& beta = {}) {
        PaRecord r{model, sc, st, replicate, std::nullopt, failure};
        if (pred != nullptr) {
            try {
                r.pa = predictive_ability(*pred, out.observed);
                if (!r.pa) {
                    r.failure = "undefined PA (zero variance)";
                }
            } catch (const Error& e) {
                r.failure = e.what();
            }
            out.predictions.push_back({model, sc, st, *pred, selected, beta});
        }
        table[{model, sc, st}] = r;
    };
    auto record_all = [&](ModelKind model, const std::string& failure) {
        for (auto sc : plan.scenarios) {
            for (auto st : plan.stages) {
                if (!table.count({model, sc, st})) {
                    record(model, sc, st, nullptr, failure);
                }
            }
        }
    };
    auto has_model = [&](ModelKind m) { return std::find(plan.models.begin(), plan.models.end(), m) != plan.models.end(); };
    const auto& tp_labels = data.design.timepoint_labels();

    try {
        out.split = split_genotypes(data.design.n_genotypes(), plan.train_fraction, plan.seed, replicate);
        const TrialDataset train = data.restrict_genotypes(out.split.train);
        const TrialDataset test = data.restrict_genotypes(out.split.test);
        const KinshipPartition part = partition_kinship(kinship, out.split.train, out.split.test);
        out.observed = genotype_blues(as_column(test.focal), test.design).col(0);
        const Vector focal_means = genotype_blues(as_column(train.focal), train.design).col(0);
        rep.runtime.push_back({replicate, "split", seconds_since(t_start)});

        if (has_model(ModelKind::gblup)) {
            const auto t0 = std::chrono::steady_clock::now();
            try {
                const auto cov = estimate_covariances(as_column(train.focal), train.design);
                const auto res = univariate_gblup(train.focal, train.design, cov.sigma_g(0, 0), cov.sigma_e(0, 0), part);
                for (auto sc : plan.scenarios) {
                    for (auto st : plan.stages) {
                        record(ModelKind::gblup, sc, st, &res.test, "", {}, res.beta);
                    }
                }
            } catch (const Error& e) {
                record_all(ModelKind::gblup, e.what());
            }
            rep.runtime.push_back({replicate, "gblup", seconds_since(t0)});
        }

        const bool per_timepoint = has_model(ModelKind::varimax_glf) || has_model(ModelKind::procrustes_glf) ||
                                   has_model(ModelKind::spline_glf);
        if (per_timepoint) {
            auto t0 = std::chrono::steady_clock::now();
            std::optional<TimepointFactorFits> fits;
            try {
                fits = fit_timepoint_factors(train, resolve_timepoint(train.design, plan.target_timepoint));
            } catch (const Error& e) {
                for (auto m : {ModelKind::varimax_glf, ModelKind::procrustes_glf, ModelKind::spline_glf}) {
                    if (has_model(m)) {
                        record_all(m, e.what());
                    }
                }
            }
            rep.runtime.push_back({replicate, "factor_fits", seconds_since(t0)});
            if (fits) {
                t0 = std::chrono::steady_clock::now();
                const Index tau = data.design.n_timepoints();
                const Index m = fits->common_m;
                std::map<bool, std::pair<ScoreSeries, ScoreSeries>> scores;
                for (bool aligned : {false, true}) {
                    const auto proj = fits->projections(aligned);
                    scores.emplace(aligned, std::pair{apply_projections(train, proj, aligned),
                                                      apply_projections(test, proj, aligned)});
                }
                const auto& aligned_train = scores.at(true).first;
                for (Index l = 0; l < tau; ++l) {
                    const auto lu = static_cast<std::size_t>(l);
                    for (Index k = 0; k < m; ++k) {
                        rep.factor_correlations.push_back(
                            {replicate, tp_labels[lu], k, fits->dimensions[lu].m_star, m,
                             correlation(aligned_train.genotype_scores[lu].col(k), focal_means)});
                        for (Index j = 0; j < data.n_traits(); ++j) {
                            rep.loadings.push_back({replicate, tp_labels[lu], data.trait_labels[static_cast<std::size_t>(j)], k,
                                                    fits->varimax_loadings[lu](j, k), fits->alignment.aligned[lu](j, k)});
                        }
                    }
                }
                for (auto model : {ModelKind::varimax_glf, ModelKind::procrustes_glf, ModelKind::spline_glf}) {
                    if (!has_model(model)) {
                        continue;
                    }
                    const bool aligned = model != ModelKind::varimax_glf;
                    const auto& [tr_scores, te_scores] = scores.at(aligned);
                    for (auto st : plan.stages) {
                        try {
                            const auto tps = stage_timepoints(data.design, st);
                            if (tps.empty()) {
                                throw DataError(fmt::format("no timepoints in stage subset '{}'", to_string(st)));
                            }
                            const CandidateSet cand =
                                model == ModelKind::spline_glf
                                    ? spline_candidates(tr_scores, te_scores, tps, data.design, plan.spline)
                                    : scores_to_candidates(tr_scores, te_scores, tps, tp_labels);
                            const auto pred = predict_with_candidates(cand, train, test, part, focal_means, plan);
                            for (std::size_t c = 0; c < cand.labels.size(); ++c) {
                                const bool sel = std::binary_search(pred.selected.begin(), pred.selected.end(),
                                                                    static_cast<Index>(c));
                                rep.selection.push_back({replicate, model, st, cand.labels[c].first,
                                                         cand.labels[c].second, sel});
                            }
                            for (const auto& [sc, res] : pred.results) {
                                record(model, sc, st, &res.test, "", pred.selected, res.beta);
                            }
                        } catch (const Error& e) {
                            for (auto sc : plan.scenarios) {
                                record(model, sc, st, nullptr, e.what());
                            }
                        }
                    }
                }
                if (plan.emit_trajectories && replicate == 0) {
                    try {
                        const auto fit = fit_trajectories(aligned_train, data.design.timepoints(), plan.spline);
                        const auto& ids = train.design.genotype_ids();
                        for (Index k = 0; k < m; ++k) {
                            for (double t : data.design.timepoints()) {
                                rep.trajectories.push_back({replicate, "population", k, t, fit.population(k, t)});
                            }
                            for (Index c = 0; c < fit.n_genotypes(); ++c) {
                                for (double t : data.design.timepoints()) {
                                    rep.trajectories.push_back(
                                        {replicate, ids[static_cast<std::size_t>(c)], k, t, fit.genotype(k, c, t)});
                                }
                            }
                        }
                    } catch (const Error& e) {
                        spdlog::warn("replicate {}: trajectories skipped: {}", replicate, e.what());
                    }
                }
                rep.runtime.push_back({replicate, "glf_models", seconds_since(t0)});
            }
        }

        if (has_model(ModelKind::concat_glf)) {
            const auto t0 = std::chrono::steady_clock::now();
            for (auto st : plan.stages) {
                try {
                    const auto tps = stage_timepoints(data.design, st);
                    if (tps.empty()) {
                        throw DataError(fmt::format("no timepoints in stage subset '{}'", to_string(st)));
                    }
                    const auto base = concatenated_baseline(train, tps, plan.redundancy_threshold);
                    const Matrix train_plot = base.stack(train);
                    CandidateSet cand;
                    cand.genotype_train = base.projection.apply(genotype_blues(train_plot, train.design));
                    cand.plot_train = base.projection.apply(train_plot);
                    cand.plot_test = base.projection.apply(base.stack(test));
                    for (Index k = 0; k < cand.genotype_train.cols(); ++k) {
                        cand.labels.emplace_back("concatenated", k);
                    }
                    const auto pred = predict_with_candidates(cand, train, test, part, focal_means, plan);
                    for (std::size_t c = 0; c < cand.labels.size(); ++c) {
                        const bool sel =
                            std::binary_search(pred.selected.begin(), pred.selected.end(), static_cast<Index>(c));
                        rep.selection.push_back({replicate, ModelKind::concat_glf, st, cand.labels[c].first,
                                                 cand.labels[c].second, sel});
                    }
                    for (const auto& [sc, res] : pred.results) {
                        record(ModelKind::concat_glf, sc, st, &res.test, "", pred.selected, res.beta);
                    }
                } catch (const Error& e) {
                    for (auto sc : plan.scenarios) {
                        record(ModelKind::concat_glf, sc, st, nullptr, e.what());
                    }
                }
            }
            rep.runtime.push_back({replicate, "concat", seconds_since(t0)});
        }
    } catch (const Error& e) {
        spdlog::warn("replicate {} failed: {}", replicate, e.what());
        for (auto m : plan.models) {
            record_all(m, e.what());
        }
    }

    for (auto m : plan.models) {
        record_all(m, "not run");
        for (auto sc : plan.scenarios) {
            for (auto st : plan.stages) {
                rep.pa.push_back(table.at({m, sc, st}));
            }
        }
    }
    rep.runtime.push_back({replicate, "total", seconds_since(t_start)});
    return out;
}

CvReport run_cv(const TrialDataset& data, const CvPlan& plan)
{
    plan.validate();
    data.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const SymMatrix kinship = dataset_kinship(data, plan.threads);
    const double kinship_seconds = seconds_since(t0);
    spdlog::info("kinship ready ({:.2f} s)", kinship_seconds);

    const auto n = static_cast<std::size_t>(plan.n_replicates);
    std::vector<CvReport> parts(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            parts[i] = run_replicate(data, kinship, plan, static_cast<Index>(i)).report;
            spdlog::info("replicate {}/{} done", i + 1, n);
        }
    };
    const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(plan.threads), n);
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < n_workers; ++w) {
            pool.emplace_back(worker);
        }
    }

    CvReport report;
    report.n_replicates = plan.n_replicates;
    report.runtime.push_back({-1, "kinship", kinship_seconds});
    for (auto& p : parts) {
        auto append = [](auto& dst, auto& src) { dst.insert(dst.end(), src.begin(), src.end()); };
        append(report.pa, p.pa);
        append(report.selection, p.selection);
        append(report.loadings, p.loadings);
        append(report.factor_correlations, p.factor_correlations);
        append(report.trajectories, p.trajectories);
        append(report.runtime, p.runtime);
    }
    return report;
}

bool CvReport::same_results(const CvReport& o) const
{
    return n_replicates == o.n_replicates && pa == o.pa && selection == o.selection && loadings == o.loadings &&
           factor_correlations == o.factor_correlations && trajectories == o.trajectories;
}

// ---------------------------------------------------------------- summaries and files

namespace {

double quantile(std::vector<double> v, double p)
{
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::string quote(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += "\"\"";
        } else if (c == '\n') {
            out += ' ';
        } else {
            out += c;
        }
    }
    return out + "\"";
}

class CsvOut {
public:
    CsvOut(const fs::path& file, std::string_view header) : out_(file, std::ios::binary)
    {
        if (!out_) {
            throw DataError("cannot write " + file.string());
        }
        out_ << header << '\n';
    }
    std::ofstream& stream() { return out_; }

private:
    std::ofstream out_;
};

std::vector<std::vector<std::string>> read_rows(const fs::path& file, std::string_view expected_header)
{
    std::ifstream in(file);
    if (!in) {
        throw DataError("cannot read " + file.string());
    }
    std::string line;
    if (!std::getline(in, line) || line != expected_header) {
        throw DataError(file.string() + ": unexpected header");
    }
    std::vector<std::vector<std::string>> rows;
    const auto width = split_csv_line(expected_header).size();
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        rows.push_back(split_csv_line(line));
        if (rows.back().size() != width) {
            throw DataError(file.string() + ": malformed row '" + line + "'");
        }
    }
    return rows;
}

Index parse_index(const std::string& s, std::string_view what)
{
    return static_cast<Index>(parse_double(s, what));
}

constexpr std::string_view kPaHeader = "model,scenario,stage,replicate,pa,failure";
constexpr std::string_view kSelHeader = "replicate,model,stage,timepoint,factor,selected";
constexpr std::string_view kLoadHeader = "replicate,timepoint,trait,factor,raw_loading,aligned_loading";
constexpr std::string_view kCorHeader = "replicate,timepoint,factor,m_star,common_m,correlation";
constexpr std::string_view kTrajHeader = "replicate,genotype,factor,time,value";
constexpr std::string_view kRunHeader = "replicate,phase,seconds";

}  // namespace

std::vector<PaSummary> summarize(const CvReport& report)
{
    std::vector<PaSummary> out;
    std::vector<std::vector<double>> values;
    for (const auto& r : report.pa) {
        auto it = std::find_if(out.begin(), out.end(), [&](const PaSummary& s) {
            return s.model == r.model && s.scenario == r.scenario && s.stage == r.stage;
        });
        if (it == out.end()) {
            out.push_back({r.model, r.scenario, r.stage});
            values.emplace_back();
            it = out.end() - 1;
        }
        const auto k = static_cast<std::size_t>(it - out.begin());
        if (r.pa) {
            values[k].push_back(*r.pa);
        } else {
            ++it->failures;
        }
    }
    for (std::size_t k = 0; k < out.size(); ++k) {
        auto& s = out[k];
        s.n = static_cast<Index>(values[k].size());
        if (values[k].empty()) {
            s.mean = s.q25 = s.median = s.q75 = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        s.mean = std::accumulate(values[k].begin(), values[k].end(), 0.0) / static_cast<double>(s.n);
        s.q25 = quantile(values[k], 0.25);
        s.median = quantile(values[k], 0.5);
        s.q75 = quantile(values[k], 0.75);
    }
    return out;
}

void emit_reports(const CvReport& report, const fs::path& out_dir)
{
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw DataError("cannot create " + out_dir.string() + ": " + ec.message());
    }
    {
        CsvOut f(out_dir / "pa_boxplot.csv", kPaHeader);
        for (const auto& r : report.pa) {
            f.stream() << to_string(r.model) << ',' << to_string(r.scenario) << ',' << to_string(r.stage) << ','
                       << r.replicate + 1 << ',' << (r.pa ? format_double(*r.pa) : "") << ',' << quote(r.failure)
                       << '\n';
        }
    }
    {
        CsvOut f(out_dir / "selection_incidence.csv", kSelHeader);
        for (const auto& r : report.selection) {
            f.stream() << r.replicate + 1 << ',' << to_string(r.model) << ',' << to_string(r.stage) << ','
                       << quote(r.timepoint) << ',' << r.factor + 1 << ',' << (r.selected ? 1 : 0) << '\n';
        }
    }
    {
        CsvOut f(out_dir / "loadings_series.csv", kLoadHeader);
        for (const auto& r : report.loadings) {
            f.stream() << r.replicate + 1 << ',' << quote(r.timepoint) << ',' << quote(r.trait) << ',' << r.factor + 1
                       << ',' << format_double(r.raw) << ',' << format_double(r.aligned) << '\n';
        }
    }
    {
        CsvOut f(out_dir / "factor_correlations.csv", kCorHeader);
        for (const auto& r : report.factor_correlations) {
            f.stream() << r.replicate + 1 << ',' << quote(r.timepoint) << ',' << r.factor + 1 << ',' << r.m_star << ','
                       << r.common_m << ',' << format_double(r.correlation) << '\n';
        }
    }
    {
        CsvOut f(out_dir / "trajectories.csv", kTrajHeader);
        for (const auto& r : report.trajectories) {
            f.stream() << r.replicate + 1 << ',' << quote(r.genotype) << ',' << r.factor + 1 << ','
                       << format_double(r.time) << ',' << format_double(r.value) << '\n';
        }
    }
    {
        CsvOut f(out_dir / "runtime.csv", kRunHeader);
        for (const auto& r : report.runtime) {
            f.stream() << r.replicate + 1 << ',' << quote(r.phase) << ',' << format_double(r.seconds) << '\n';
        }
    }
}

CvReport read_reports(const fs::path& in_dir)
{
    CvReport report;
    Index max_rep = -1;
    for (const auto& row : read_rows(in_dir / "pa_boxplot.csv", kPaHeader)) {
        PaRecord r;
        r.model = parse_model(row[0]);
        r.scenario = parse_scenario(row[1]);
        r.stage = parse_stage_subset(row[2]);
        r.replicate = parse_index(row[3], "replicate") - 1;
        if (!row[4].empty()) {
            r.pa = parse_double(row[4], "pa");
        }
        r.failure = row[5];
        max_rep = std::max(max_rep, r.replicate);
        report.pa.push_back(std::move(r));
    }
    report.n_replicates = max_rep + 1;
    for (const auto& row : read_rows(in_dir / "selection_incidence.csv", kSelHeader)) {
        report.selection.push_back({parse_index(row[0], "replicate") - 1, parse_model(row[1]),
                                    parse_stage_subset(row[2]), row[3], parse_index(row[4], "factor") - 1,
                                    row[5] == "1"});
    }
    for (const auto& row : read_rows(in_dir / "loadings_series.csv", kLoadHeader)) {
        report.loadings.push_back({parse_index(row[0], "replicate") - 1, row[1], row[2],
                                   parse_index(row[3], "factor") - 1, parse_double(row[4], "raw_loading"),
                                   parse_double(row[5], "aligned_loading")});
    }
    for (const auto& row : read_rows(in_dir / "factor_correlations.csv", kCorHeader)) {
        report.factor_correlations.push_back({parse_index(row[0], "replicate") - 1, row[1],
                                              parse_index(row[2], "factor") - 1, parse_index(row[3], "m_star"),
                                              parse_index(row[4], "common_m"), parse_double(row[5], "correlation")});
    }
    for (const auto& row : read_rows(in_dir / "trajectories.csv", kTrajHeader)) {
        report.trajectories.push_back({parse_index(row[0], "replicate") - 1, row[1], parse_index(row[2], "factor") - 1,
                                       parse_double(row[3], "time"), parse_double(row[4], "value")});
    }
    if (fs::exists(in_dir / "runtime.csv")) {
        for (const auto& row : read_rows(in_dir / "runtime.csv", kRunHeader)) {
            report.runtime.push_back({parse_index(row[0], "replicate") - 1, row[1], parse_double(row[2], "seconds")});
        }
    }
    return report;
}

void write_summary(const std::vector<PaSummary>& summary, const fs::path& file)
{
    CsvOut f(file, "model,scenario,stage,n,failures,mean,q25,median,q75");
    for (const auto& s : summary) {
        f.stream() << to_string(s.model) << ',' << to_string(s.scenario) << ',' << to_string(s.stage) << ',' << s.n
                   << ',' << s.failures << ',' << format_double(s.mean) << ',' << format_double(s.q25) << ','
                   << format_double(s.median) << ',' << format_double(s.q75) << '\n';
    }
}

}  // namespace glf
