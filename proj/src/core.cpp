#include "glf/core.hpp"

#include "glf/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <utility>

namespace glf {

std::string_view to_string(Stage stage)
{
    switch (stage) {
    case Stage::vegetative:
        return "vegetative";
    case Stage::heading:
        return "heading";
    case Stage::grain_filling:
        return "grain-filling";
    }
    return "unknown";
}

Stage parse_stage(std::string_view text)
{
    if (text == "vegetative") {
        return Stage::vegetative;
    }
    if (text == "heading") {
        return Stage::heading;
    }
    if (text == "grain-filling" || text == "grain_filling") {
        return Stage::grain_filling;
    }
    throw DataError("unknown growth stage '" + std::string(text) + "'");
}

std::vector<Stage> default_stage_labels(Index tau)
{
    std::vector<Stage> out(static_cast<std::size_t>(tau), Stage::grain_filling);
    if (tau <= 0) {
        return out;
    }
    Index veg = static_cast<Index>(std::lround(0.4 * static_cast<double>(tau)));
    Index head = static_cast<Index>(std::lround(0.3 * static_cast<double>(tau)));
    if (tau >= 3) {
        veg = std::clamp<Index>(veg, 1, tau - 2);
        head = std::clamp<Index>(head, 1, tau - 1 - veg);
    } else {
        veg = std::min<Index>(std::max<Index>(veg, 1), tau);
        head = std::min<Index>(head, tau - veg);
    }
    for (Index l = 0; l < tau; ++l) {
        if (l < veg) {
            out[static_cast<std::size_t>(l)] = Stage::vegetative;
        } else if (l < veg + head) {
            out[static_cast<std::size_t>(l)] = Stage::heading;
        }
    }
    return out;
}

TrialDesign::TrialDesign(std::vector<std::string> genotype_ids,
                         std::vector<PlotAssignment> plots,
                         std::vector<double> timepoints,
                         std::vector<std::string> timepoint_labels,
                         std::vector<Stage> stages)
    : genotype_ids_(std::move(genotype_ids)),
      plots_(std::move(plots)),
      timepoints_(std::move(timepoints)),
      timepoint_labels_(std::move(timepoint_labels)),
      stages_(std::move(stages))
{
    if (timepoint_labels_.empty()) {
        for (double t : timepoints_) {
            timepoint_labels_.push_back(std::to_string(t));
        }
    }
    if (timepoint_labels_.size() != timepoints_.size() || stages_.size() != timepoints_.size()) {
        throw DataError("design: timepoints, labels and stages must have equal length");
    }
    for (std::size_t l = 1; l < timepoints_.size(); ++l) {
        if (!(timepoints_[l] > timepoints_[l - 1])) {
            throw DataError("design: timepoints must be strictly increasing");
        }
    }
    std::set<std::pair<Index, Index>> seen;
    for (std::size_t i = 0; i < plots_.size(); ++i) {
        const auto& p = plots_[i];
        if (p.genotype < 0 || p.genotype >= n_genotypes()) {
            throw DataError("design: plot " + std::to_string(i) + " mapped to unknown genotype " +
                            std::to_string(p.genotype));
        }
        if (!seen.emplace(p.genotype, p.replicate).second) {
            throw DataError("design: plot " + std::to_string(i) + " repeats genotype '" +
                            genotype_ids_[static_cast<std::size_t>(p.genotype)] + "' replicate " +
                            std::to_string(p.replicate));
        }
    }
}

std::vector<Index> TrialDesign::replicate_counts() const
{
    std::vector<Index> counts(genotype_ids_.size(), 0);
    for (const auto& p : plots_) {
        ++counts[static_cast<std::size_t>(p.genotype)];
    }
    return counts;
}

bool TrialDesign::balanced() const
{
    const auto counts = replicate_counts();
    return std::adjacent_find(counts.begin(), counts.end(), std::not_equal_to<>()) == counts.end();
}

double TrialDesign::effective_replicates() const
{
    const auto counts = replicate_counts();
    if (counts.empty()) {
        throw DataError("design has no genotypes");
    }
    double inv_sum = 0.0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) {
            throw DataError("genotype '" + genotype_ids_[c] + "' has no plots");
        }
        inv_sum += 1.0 / static_cast<double>(counts[c]);
    }
    return static_cast<double>(counts.size()) / inv_sum;
}

Index TrialDesign::first_heading_timepoint() const
{
    for (std::size_t l = 0; l < stages_.size(); ++l) {
        if (stages_[l] == Stage::heading) {
            return static_cast<Index>(l);
        }
    }
    return n_timepoints() / 2;
}

void TrialDataset::validate() const
{
    const Index n = design.n_plots();
    const Index s = n_traits();
    if (s < 2) {
        throw DataError("dataset needs at least 2 secondary traits, got " + std::to_string(s));
    }
    if (design.n_timepoints() < 2) {
        throw DataError("dataset needs at least 2 timepoints");
    }
    if (static_cast<Index>(secondary.size()) != design.n_timepoints()) {
        throw DataError("secondary data has " + std::to_string(secondary.size()) +
                        " timepoint slices, design has " + std::to_string(design.n_timepoints()));
    }
    for (std::size_t l = 0; l < secondary.size(); ++l) {
        if (secondary[l].rows() != n || secondary[l].cols() != s) {
            throw DataError("secondary slice " + std::to_string(l) + " has wrong shape");
        }
        if (!secondary[l].allFinite()) {
            throw DataError("secondary slice " + std::to_string(l) + " has missing or non-finite cells");
        }
    }
    if (focal.size() != n || !focal.allFinite()) {
        throw DataError("focal trait must have one finite value per plot");
    }
    if (!plot_ids.empty() && static_cast<Index>(plot_ids.size()) != n) {
        throw DataError("plot id count does not match plots");
    }
    if (markers.size() > 0) {
        if (markers.rows() != design.n_genotypes()) {
            throw DataError("marker matrix rows must equal genotype count");
        }
        for (Index i = 0; i < markers.rows(); ++i) {
            for (Index k = 0; k < markers.cols(); ++k) {
                const double v = markers(i, k);
                if (v != 0.0 && v != 1.0 && v != 2.0) {
                    throw DataError("marker codes must be 0, 1 or 2");
                }
            }
        }
    }
    if (kinship.size() > 0 &&
        (kinship.rows() != design.n_genotypes() || kinship.cols() != design.n_genotypes())) {
        throw DataError("kinship must be g x g");
    }
    for (Index c : design.replicate_counts()) {
        if (c == 0) {
            throw DataError("every genotype needs at least one plot");
        }
    }
}

TrialDataset TrialDataset::restrict_genotypes(std::span<const Index> genotypes) const
{
    const Index g = design.n_genotypes();
    std::vector<Index> new_index(static_cast<std::size_t>(g), -1);
    std::vector<std::string> ids;
    for (std::size_t k = 0; k < genotypes.size(); ++k) {
        const Index c = genotypes[k];
        if (c < 0 || c >= g || new_index[static_cast<std::size_t>(c)] >= 0) {
            throw DataError("restrict_genotypes: unknown or repeated genotype index");
        }
        new_index[static_cast<std::size_t>(c)] = static_cast<Index>(k);
        ids.push_back(design.genotype_ids()[static_cast<std::size_t>(c)]);
    }
    // Plots ordered by new genotype index, then by original plot order.
    std::vector<std::vector<Index>> rows_by_geno(genotypes.size());
    for (Index i = 0; i < design.n_plots(); ++i) {
        const Index c = design.plots()[static_cast<std::size_t>(i)].genotype;
        const Index k = new_index[static_cast<std::size_t>(c)];
        if (k >= 0) {
            rows_by_geno[static_cast<std::size_t>(k)].push_back(i);
        }
    }
    std::vector<Index> rows;
    std::vector<PlotAssignment> plots;
    for (std::size_t k = 0; k < rows_by_geno.size(); ++k) {
        for (Index i : rows_by_geno[k]) {
            rows.push_back(i);
            plots.push_back({static_cast<Index>(k), design.plots()[static_cast<std::size_t>(i)].replicate});
        }
    }

    TrialDataset out;
    out.design = TrialDesign(std::move(ids), std::move(plots), design.timepoints(),
                             design.timepoint_labels(), design.stages());
    out.trait_labels = trait_labels;
    const auto n_new = static_cast<Index>(rows.size());
    for (const auto& slice : secondary) {
        Matrix m(n_new, slice.cols());
        for (Index i = 0; i < n_new; ++i) {
            m.row(i) = slice.row(rows[static_cast<std::size_t>(i)]);
        }
        out.secondary.push_back(std::move(m));
    }
    out.focal.resize(n_new);
    for (Index i = 0; i < n_new; ++i) {
        out.focal(i) = focal(rows[static_cast<std::size_t>(i)]);
        if (!plot_ids.empty()) {
            out.plot_ids.push_back(plot_ids[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])]);
        }
    }
    const auto k = static_cast<Index>(genotypes.size());
    if (markers.size() > 0) {
        out.markers.resize(k, markers.cols());
        for (Index a = 0; a < k; ++a) {
            out.markers.row(a) = markers.row(genotypes[static_cast<std::size_t>(a)]);
        }
    }
    if (kinship.size() > 0) {
        out.kinship.resize(k, k);
        for (Index a = 0; a < k; ++a) {
            for (Index b = 0; b < k; ++b) {
                out.kinship(a, b) = kinship(genotypes[static_cast<std::size_t>(a)],
                                            genotypes[static_cast<std::size_t>(b)]);
            }
        }
    }
    return out;
}

SymMatrix::SymMatrix(const Matrix& values, MatrixKind kind) : kind_(kind)
{
    if (values.rows() != values.cols()) {
        throw DataError("symmetric matrix must be square");
    }
    values_ = linalg::symmetrize(values);
    for (Index j = 0; j < values_.rows(); ++j) {
        const double d = values_(j, j);
        if (kind_ == MatrixKind::correlation && std::abs(d - 1.0) > 1e-10) {
            throw DataError("correlation matrix diagonal entry " + std::to_string(j) + " is not 1");
        }
        if (kind_ != MatrixKind::correlation && d < 0.0) {
            throw DataError("covariance diagonal entry " + std::to_string(j) + " is negative");
        }
    }
}

Matrix build_incidence(const TrialDesign& design)
{
    Matrix z = Matrix::Zero(design.n_plots(), design.n_genotypes());
    for (Index i = 0; i < design.n_plots(); ++i) {
        const Index c = design.plots()[static_cast<std::size_t>(i)].genotype;
        if (c < 0 || c >= design.n_genotypes()) {
            throw DataError("plot " + std::to_string(i) + " mapped to unknown genotype");
        }
        z(i, c) = 1.0;
    }
    return z;
}

Matrix genotype_blues(const Matrix& plot_values, const TrialDesign& design)
{
    if (plot_values.rows() != design.n_plots()) {
        throw DataError("genotype_blues: row count does not match plots");
    }
    Matrix sums = Matrix::Zero(design.n_genotypes(), plot_values.cols());
    for (Index i = 0; i < design.n_plots(); ++i) {
        sums.row(design.plots()[static_cast<std::size_t>(i)].genotype) += plot_values.row(i);
    }
    const auto counts = design.replicate_counts();
    for (Index c = 0; c < design.n_genotypes(); ++c) {
        const Index rc = counts[static_cast<std::size_t>(c)];
        if (rc == 0) {
            throw DataError("genotype '" + design.genotype_ids()[static_cast<std::size_t>(c)] +
                            "' has no plots");
        }
        sums.row(c) /= static_cast<double>(rc);
    }
    return sums;
}

Matrix expand_blues(const Matrix& blues, const TrialDesign& design)
{
    if (blues.rows() != design.n_genotypes()) {
        throw DataError("expand_blues: row count does not match genotypes");
    }
    Matrix out(design.n_plots(), blues.cols());
    for (Index i = 0; i < design.n_plots(); ++i) {
        out.row(i) = blues.row(design.plots()[static_cast<std::size_t>(i)].genotype);
    }
    return out;
}

Matrix plot_residuals(const Matrix& plot_values, const Matrix& blues, const TrialDesign& design)
{
    if (plot_values.rows() != design.n_plots() || blues.rows() != design.n_genotypes() ||
        plot_values.cols() != blues.cols()) {
        throw DataError("plot_residuals: dimension mismatch");
    }
    return plot_values - expand_blues(blues, design);
}

SymMatrix cov_to_cor(const SymMatrix& cov)
{
    const Matrix& s = cov.values();
    const Index n = s.rows();
    Vector inv_sd(n);
    for (Index j = 0; j < n; ++j) {
        if (!(s(j, j) > 0.0)) {
            throw NumericalError("cov_to_cor: trait " + std::to_string(j) +
                                 " has zero or negative variance");
        }
        inv_sd(j) = 1.0 / std::sqrt(s(j, j));
    }
    Matrix r = inv_sd.asDiagonal() * s * inv_sd.asDiagonal();
    r.diagonal().setOnes();
    return SymMatrix(r, MatrixKind::correlation);
}

SymMatrix nearest_psd(const Matrix& values, MatrixKind kind, double floor_rel)
{
    if (values.rows() != values.cols()) {
        throw DataError("nearest_psd: matrix must be square");
    }
    if (!values.allFinite()) {
        throw NumericalError("nearest_psd: non-finite entries");
    }
    const Matrix sym = linalg::symmetrize(values);
    if (sym.rows() == 0) {
        return SymMatrix(sym, kind);
    }
    const auto eig = linalg::sym_eigen_desc(sym);
    const double largest = eig.values(0);
    const double floor = largest > 0.0 ? floor_rel * largest : floor_rel;
    if (eig.values.minCoeff() >= floor) {
        return SymMatrix(sym, kind);
    }
    const Vector clipped = eig.values.cwiseMax(floor);
    Matrix repaired = eig.vectors * clipped.asDiagonal() * eig.vectors.transpose();
    repaired = linalg::symmetrize(repaired);
    if (kind == MatrixKind::correlation) {
        // Clipping perturbs the unit diagonal; rescale back to a correlation.
        const Vector inv_sd = repaired.diagonal().cwiseSqrt().cwiseInverse();
        repaired = inv_sd.asDiagonal() * repaired * inv_sd.asDiagonal();
        repaired.diagonal().setOnes();
    }
    return SymMatrix(repaired, kind);
}

}  // namespace glf
