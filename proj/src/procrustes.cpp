#include "glf/procrustes.hpp"

#include "glf/error.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

namespace glf {

SignedPermutation::SignedPermutation(std::vector<Index> columns, std::vector<int> signs)
    : columns_(std::move(columns)), signs_(std::move(signs))
{
    const auto m = columns_.size();
    if (signs_.size() != m) {
        throw DataError("signed permutation: columns and signs differ in length");
    }
    std::vector<bool> hit(m, false);
    for (std::size_t i = 0; i < m; ++i) {
        const Index c = columns_[i];
        if (c < 0 || static_cast<std::size_t>(c) >= m || hit[static_cast<std::size_t>(c)]) {
            throw DataError("signed permutation: columns are not a permutation");
        }
        hit[static_cast<std::size_t>(c)] = true;
        if (signs_[i] != 1 && signs_[i] != -1) {
            throw DataError("signed permutation: signs must be +1 or -1");
        }
    }
}

SignedPermutation SignedPermutation::identity(Index m)
{
    std::vector<Index> cols(static_cast<std::size_t>(m));
    std::iota(cols.begin(), cols.end(), Index{0});
    return SignedPermutation(std::move(cols), std::vector<int>(static_cast<std::size_t>(m), 1));
}

bool SignedPermutation::is_identity() const noexcept
{
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        if (columns_[i] != static_cast<Index>(i) || signs_[i] != 1) {
            return false;
        }
    }
    return true;
}

Matrix SignedPermutation::to_matrix() const
{
    const Index m = size();
    Matrix p = Matrix::Zero(m, m);
    for (Index i = 0; i < m; ++i) {
        p(i, columns_[static_cast<std::size_t>(i)]) = signs_[static_cast<std::size_t>(i)];
    }
    return p;
}

SignedPermutation SignedPermutation::transpose() const
{
    std::vector<Index> cols(columns_.size());
    std::vector<int> signs(signs_.size());
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        const auto c = static_cast<std::size_t>(columns_[i]);
        cols[c] = static_cast<Index>(i);
        signs[c] = signs_[i];
    }
    return SignedPermutation(std::move(cols), std::move(signs));
}

ProcrustesResult orthogonal_procrustes(const Matrix& source, const Matrix& target)
{
    if (source.rows() != target.rows() || source.cols() != target.cols()) {
        throw DataError("orthogonal_procrustes: source and target shapes differ");
    }
    if (source.cols() < 1) {
        throw DataError("orthogonal_procrustes: need at least one column");
    }
    const Matrix cross = source.transpose() * target;
    Eigen::JacobiSVD<Matrix> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    ProcrustesResult out;
    out.rotation = svd.matrixU() * svd.matrixV().transpose();
    const Vector& sv = svd.singularValues();
    out.rank_deficient = sv(sv.size() - 1) <= 1e-12 * std::max(sv(0), 1e-300);
    return out;
}

std::vector<Index> max_weight_assignment(const Matrix& weights)
{
    const Index n = weights.rows();
    if (weights.cols() != n) {
        throw DataError("max_weight_assignment: weight matrix must be square");
    }
    // Shortest augmenting path with row/column potentials, minimising
    // cost = -weight. Arrays are 1-based with a sentinel at 0.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0);
    std::vector<double> v(static_cast<std::size_t>(n + 1), 0.0);
    std::vector<Index> match(static_cast<std::size_t>(n + 1), 0);  // column -> row
    std::vector<Index> way(static_cast<std::size_t>(n + 1), 0);
    auto cost = [&](Index i, Index j) { return -weights(i - 1, j - 1); };

    for (Index i = 1; i <= n; ++i) {
        match[0] = i;
        Index j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
        std::vector<bool> used(static_cast<std::size_t>(n + 1), false);
        do {
            used[static_cast<std::size_t>(j0)] = true;
            const Index i0 = match[static_cast<std::size_t>(j0)];
            double delta = inf;
            Index j1 = 0;
            for (Index j = 1; j <= n; ++j) {
                const auto ju = static_cast<std::size_t>(j);
                if (used[ju]) {
                    continue;
                }
                const double cur = cost(i0, j) - u[static_cast<std::size_t>(i0)] - v[ju];
                if (cur < minv[ju]) {
                    minv[ju] = cur;
                    way[ju] = j0;
                }
                if (minv[ju] < delta) {
                    delta = minv[ju];
                    j1 = j;
                }
            }
            for (Index j = 0; j <= n; ++j) {
                const auto ju = static_cast<std::size_t>(j);
                if (used[ju]) {
                    u[static_cast<std::size_t>(match[ju])] += delta;
                    v[ju] -= delta;
                } else {
                    minv[ju] -= delta;
                }
            }
            j0 = j1;
        } while (match[static_cast<std::size_t>(j0)] != 0);
        do {
            const Index j1 = way[static_cast<std::size_t>(j0)];
            match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<Index> row_to_col(static_cast<std::size_t>(n), 0);
    for (Index j = 1; j <= n; ++j) {
        row_to_col[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)] = j - 1;
    }
    return row_to_col;
}

SignedPermutation smooth_to_signed_permutation(const Matrix& rotation)
{
    const Index m = rotation.rows();
    if (rotation.cols() != m || m < 1) {
        throw DataError("smooth_to_signed_permutation: rotation must be square and non-empty");
    }
    const Matrix weights = rotation.cwiseAbs();
    for (Index i = 0; i < m; ++i) {
        if (weights.row(i).maxCoeff() == 0.0 || weights.col(i).maxCoeff() == 0.0) {
            throw NumericalError("smooth_to_signed_permutation: zero row or column makes the assignment ambiguous");
        }
    }
    auto cols = max_weight_assignment(weights);
    std::vector<int> signs(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i) {
        signs[static_cast<std::size_t>(i)] = rotation(i, cols[static_cast<std::size_t>(i)]) < 0.0 ? -1 : 1;
    }
    return SignedPermutation(std::move(cols), std::move(signs));
}

AlignedLoadingsSeries align_series(const std::vector<Matrix>& loadings, Index target_index)
{
    if (loadings.empty()) {
        throw DataError("align_series: no timepoints");
    }
    if (target_index < 0 || target_index >= static_cast<Index>(loadings.size())) {
        throw DataError("align_series: target timepoint " + std::to_string(target_index) + " out of range");
    }
    const Matrix& target = loadings[static_cast<std::size_t>(target_index)];
    for (std::size_t l = 0; l < loadings.size(); ++l) {
        if (loadings[l].cols() != target.cols() || loadings[l].rows() != target.rows()) {
            throw DataError("align_series: timepoint " + std::to_string(l) + " has " +
                            std::to_string(loadings[l].cols()) + " factors, target has " +
                            std::to_string(target.cols()) + "; refit all timepoints at a common m*");
        }
    }
    AlignedLoadingsSeries out;
    out.target = target_index;
    out.raw = loadings;
    for (std::size_t l = 0; l < loadings.size(); ++l) {
        Matrix rot;
        SignedPermutation perm;
        if (static_cast<Index>(l) == target_index) {
            rot = Matrix::Identity(target.cols(), target.cols());
            perm = SignedPermutation::identity(target.cols());
        } else {
            rot = orthogonal_procrustes(loadings[l], target).rotation;
            perm = smooth_to_signed_permutation(rot);
        }
        out.aligned.push_back(loadings[l] * perm.to_matrix());
        out.rotations.push_back(std::move(rot));
        out.permutations.push_back(std::move(perm));
    }
    return out;
}

AlignedLoadingsSeries align_series(const std::vector<FactorModel>& models, Index target_index)
{
    std::vector<Matrix> loadings;
    loadings.reserve(models.size());
    for (const auto& m : models) {
        loadings.push_back(m.loadings);
    }
    return align_series(loadings, target_index);
}

}  // namespace glf
