#include "glf/selection.hpp"

#include "glf/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace glf {
namespace {

constexpr double kRssFloor = 1e-12;
constexpr double kCollinearTol = 1e-10;

/// Centred cross-products of y and the candidates; every subset's RSS
/// follows from a small Cholesky on the Gram sub-block.
class GramRegression {
public:
    GramRegression(const Vector& y, const Matrix& x)
    {
        if (x.rows() != y.size()) {
            throw DataError("subset selection: candidate rows do not match y");
        }
        if (!x.allFinite() || !y.allFinite()) {
            throw NumericalError("subset selection: non-finite input");
        }
        n_ = y.size();
        const Vector yc = y.array() - y.mean();
        const Matrix xc = x.rowwise() - x.colwise().mean();
        gram_ = xc.transpose() * xc;
        xty_ = xc.transpose() * yc;
        tss_ = yc.squaredNorm();
    }

    Index n() const { return n_; }

    /// BIC for the subset; collinear columns are skipped in index order.
    double bic(const std::vector<Index>& subset, Index* kept_out = nullptr) const
    {
        const auto k_max = static_cast<Index>(subset.size());
        Matrix l = Matrix::Zero(k_max, k_max);
        Vector z(k_max);
        std::vector<Index> kept;
        kept.reserve(subset.size());
        double explained = 0.0;
        for (Index col : subset) {
            const double diag = gram_(col, col);
            const auto k = static_cast<Index>(kept.size());
            Vector row(k);
            for (Index a = 0; a < k; ++a) {
                double v = gram_(col, kept[static_cast<std::size_t>(a)]);
                for (Index b = 0; b < a; ++b) {
                    v -= row(b) * l(a, b);
                }
                row(a) = v / l(a, a);
            }
            const double pivot = diag - row.squaredNorm();
            if (!(diag > 0.0) || pivot <= kCollinearTol * diag) {
                spdlog::debug("subset selection: dropping collinear column {}", col);
                continue;
            }
            l.row(k).head(k) = row;
            l(k, k) = std::sqrt(pivot);
            double zv = xty_(col);
            for (Index b = 0; b < k; ++b) {
                zv -= l(k, b) * z(b);
            }
            z(k) = zv / l(k, k);
            explained += z(k) * z(k);
            kept.push_back(col);
        }
        const auto k = static_cast<Index>(kept.size());
        if (kept_out != nullptr) {
            *kept_out = k;
        }
        if (k + 1 >= n_) {
            return std::numeric_limits<double>::infinity();
        }
        const double rss = std::max(tss_ - explained, kRssFloor);
        const double g = static_cast<double>(n_);
        return g * std::log(rss / g) + static_cast<double>(k + 1) * std::log(g);
    }

private:
    Index n_ = 0;
    Matrix gram_;
    Vector xty_;
    double tss_ = 0.0;
};

bool better(double bic, const std::vector<Index>& subset, double best_bic, const std::vector<Index>& best)
{
    if (bic < best_bic) {
        return true;
    }
    if (bic > best_bic) {
        return false;
    }
    return std::lexicographical_compare(subset.begin(), subset.end(), best.begin(), best.end());
}

SubsetResult exhaustive(const GramRegression& reg, Index c, bool record)
{
    if (c > 30) {
        throw DataError("exhaustive subset search limited to 30 candidates");
    }
    SubsetResult res;
    res.method = SearchMethod::exhaustive;
    res.null_bic = reg.bic({});
    res.bic = res.null_bic;
    const std::uint64_t total = std::uint64_t{1} << c;
    std::vector<Index> subset;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
        subset.clear();
        for (Index j = 0; j < c; ++j) {
            if ((mask >> j) & 1U) {
                subset.push_back(j);
            }
        }
        const double b = reg.bic(subset);
        if (record) {
            res.trace.push_back({subset, b});
        }
        if (better(b, subset, res.bic, res.selected)) {
            res.bic = b;
            res.selected = subset;
        }
    }
    return res;
}

SubsetResult forward(const GramRegression& reg, Index c, bool record)
{
    SubsetResult res;
    res.method = SearchMethod::forward;
    res.null_bic = reg.bic({});
    res.bic = res.null_bic;
    if (record) {
        res.trace.push_back({{}, res.null_bic});
    }
    std::vector<bool> used(static_cast<std::size_t>(c), false);
    while (true) {
        double step_bic = std::numeric_limits<double>::infinity();
        Index step_col = -1;
        for (Index j = 0; j < c; ++j) {
            if (used[static_cast<std::size_t>(j)]) {
                continue;
            }
            auto trial = res.selected;
            trial.insert(std::upper_bound(trial.begin(), trial.end(), j), j);
            const double b = reg.bic(trial);
            if (record) {
                res.trace.push_back({trial, b});
            }
            if (b < step_bic) {
                step_bic = b;
                step_col = j;
            }
        }
        if (step_col < 0 || !(step_bic < res.bic)) {
            break;
        }
        used[static_cast<std::size_t>(step_col)] = true;
        res.selected.insert(std::upper_bound(res.selected.begin(), res.selected.end(), step_col), step_col);
        res.bic = step_bic;
    }
    return res;
}

}  // namespace

double bic_of_subset(const Vector& y, const Matrix& x)
{
    const GramRegression reg(y, x);
    if (x.cols() + 1 >= y.size()) {
        throw DataError("bic_of_subset: need more observations than columns + 1");
    }
    std::vector<Index> all(static_cast<std::size_t>(x.cols()));
    for (Index j = 0; j < x.cols(); ++j) {
        all[static_cast<std::size_t>(j)] = j;
    }
    Index kept = 0;
    const double b = reg.bic(all, &kept);
    if (kept < x.cols()) {
        spdlog::warn("bic_of_subset: dropped {} collinear column(s)", x.cols() - kept);
    }
    return b;
}

SubsetResult best_subset_with(const Vector& y, const Matrix& candidates, SearchMethod method,
                              bool record_trace)
{
    const GramRegression reg(y, candidates);
    return method == SearchMethod::exhaustive ? exhaustive(reg, candidates.cols(), record_trace)
                                              : forward(reg, candidates.cols(), record_trace);
}

SubsetResult best_subset(const Vector& y, const Matrix& candidates, const SelectionOptions& options)
{
    const auto method = candidates.cols() <= options.exhaustive_limit ? SearchMethod::exhaustive
                                                                      : SearchMethod::forward;
    return best_subset_with(y, candidates, method, options.record_trace);
}

}  // namespace glf
