#include "glf/kinship.hpp"

#include "glf/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>
#include <thread>

namespace glf {
namespace {

constexpr Index kRowTile = 64;
constexpr Index kMarkerBlock = 512;

Matrix centered_codes(const Matrix& markers, double maf_min, double& scale)
{
    const Index g = markers.rows();
    if (g == 0 || markers.cols() == 0) {
        throw DataError("genomic_relationship: empty marker matrix");
    }
    std::vector<Index> keep;
    std::vector<double> freq;
    for (Index k = 0; k < markers.cols(); ++k) {
        const auto col = markers.col(k);
        const double p = col.mean() / 2.0;
        const double maf = std::min(p, 1.0 - p);
        const bool constant = (col.array() == col(0)).all();
        if (constant || maf < maf_min) {
            continue;
        }
        keep.push_back(k);
        freq.push_back(p);
    }
    if (keep.empty()) {
        throw DataError("genomic_relationship: all markers removed by the MAF/variance filter");
    }
    Matrix w(g, static_cast<Index>(keep.size()));
    scale = 0.0;
    for (std::size_t j = 0; j < keep.size(); ++j) {
        const double p = freq[j];
        w.col(static_cast<Index>(j)) = markers.col(keep[j]).array() - 2.0 * p;
        scale += 2.0 * p * (1.0 - p);
    }
    spdlog::debug("kinship: kept {} of {} markers", keep.size(), markers.cols());
    return w;
}

}  // namespace

Matrix genomic_relationship_raw(const Matrix& markers, const KinshipOptions& options)
{
    double scale = 0.0;
    const Matrix w = centered_codes(markers, options.maf_min, scale);
    const Index g = w.rows();
    const Index p = w.cols();
    Matrix k(g, g);

    const Index n_tiles = (g + kRowTile - 1) / kRowTile;
    std::atomic<Index> next{0};
    auto worker = [&] {
        for (Index tile = next++; tile < n_tiles; tile = next++) {
            const Index r0 = tile * kRowTile;
            const Index rows = std::min(kRowTile, g - r0);
            Matrix acc = Matrix::Zero(rows, g);
            for (Index b0 = 0; b0 < p; b0 += kMarkerBlock) {
                const Index cols = std::min(kMarkerBlock, p - b0);
                acc.noalias() += w.block(r0, b0, rows, cols) * w.middleCols(b0, cols).transpose();
            }
            k.middleRows(r0, rows) = acc;
        }
    };
    const int threads = std::max(1, options.threads);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
    }
    k /= scale;
    return linalg::symmetrize(k);
}

SymMatrix genomic_relationship(const Matrix& markers, const KinshipOptions& options)
{
    Matrix k = genomic_relationship_raw(markers, options);
    k.diagonal().array() += options.ridge;
    return SymMatrix(k, MatrixKind::kinship);
}

Matrix KinshipPartition::solve_train(const Matrix& b) const
{
    return train_eigenvectors *
           (train_eigenvalues.cwiseInverse().asDiagonal() * (train_eigenvectors.transpose() * b));
}

KinshipPartition partition_kinship(const SymMatrix& kinship,
                                   std::span<const Index> train_ids,
                                   std::span<const Index> test_ids)
{
    const Index g = kinship.dim();
    std::vector<int> seen(static_cast<std::size_t>(g), 0);
    auto check = [&](std::span<const Index> ids, int tag) {
        for (Index id : ids) {
            if (id < 0 || id >= g) {
                throw DataError("partition_kinship: unknown genotype index " + std::to_string(id));
            }
            if (seen[static_cast<std::size_t>(id)] != 0) {
                throw DataError("partition_kinship: genotype index " + std::to_string(id) +
                                " appears more than once across train/test");
            }
            seen[static_cast<std::size_t>(id)] = tag;
        }
    };
    check(train_ids, 1);
    check(test_ids, 2);

    const Matrix& k = kinship.values();
    const auto n_o = static_cast<Index>(train_ids.size());
    const auto n_u = static_cast<Index>(test_ids.size());
    KinshipPartition out;
    out.train_ids.assign(train_ids.begin(), train_ids.end());
    out.test_ids.assign(test_ids.begin(), test_ids.end());
    out.train.resize(n_o, n_o);
    out.test_train.resize(n_u, n_o);
    out.test.resize(n_u, n_u);
    for (Index a = 0; a < n_o; ++a) {
        for (Index b = 0; b < n_o; ++b) {
            out.train(a, b) = k(train_ids[static_cast<std::size_t>(a)], train_ids[static_cast<std::size_t>(b)]);
        }
    }
    for (Index a = 0; a < n_u; ++a) {
        for (Index b = 0; b < n_o; ++b) {
            out.test_train(a, b) = k(test_ids[static_cast<std::size_t>(a)], train_ids[static_cast<std::size_t>(b)]);
        }
        for (Index b = 0; b < n_u; ++b) {
            out.test(a, b) = k(test_ids[static_cast<std::size_t>(a)], test_ids[static_cast<std::size_t>(b)]);
        }
    }
    if (n_o > 0) {
        auto eig = linalg::sym_eigen_desc(out.train);
        if (eig.values(n_o - 1) <= 0.0) {
            throw NumericalError("partition_kinship: training kinship block is not positive definite; "
                                 "increase the kinship ridge");
        }
        out.train_condition = eig.values(0) / eig.values(n_o - 1);
        out.train_eigenvalues = std::move(eig.values);
        out.train_eigenvectors = std::move(eig.vectors);
        spdlog::debug("kinship: training block condition number {:.3g}", out.train_condition);
    }
    return out;
}

}  // namespace glf
