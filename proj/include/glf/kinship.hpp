#pragma once

#include "glf/core.hpp"

#include <span>
#include <vector>

namespace glf {

struct KinshipOptions {
    double maf_min = 0.01;
    double ridge = 1e-6;
    int threads = 1;
};

/// VanRaden (method 1) relationship matrix K = W W^T / (2 sum p_k (1 - p_k))
/// from g x p marker codes, W centred by 2 p_k. Markers below `maf_min` or
/// without variance are dropped; `ridge` * I is added. The product is tiled
/// over fixed row blocks, so the result does not depend on `threads`.
SymMatrix genomic_relationship(const Matrix& markers, const KinshipOptions& options = {});

/// Same as above but without the ridge; exposed for the centring identity.
Matrix genomic_relationship_raw(const Matrix& markers, const KinshipOptions& options = {});

/// Training/test sub-blocks of K together with the eigendecomposition of the
/// training block used by the BLUP solvers.
struct KinshipPartition {
    Matrix train;        ///< K_o, g_o x g_o
    Matrix test_train;   ///< K_uo, g_u x g_o
    Matrix test;         ///< K_u, g_u x g_u
    std::vector<Index> train_ids;
    std::vector<Index> test_ids;
    Vector train_eigenvalues;   ///< descending
    Matrix train_eigenvectors;
    double train_condition = 0.0;

    Index n_train() const noexcept { return train.rows(); }
    Index n_test() const noexcept { return test.rows(); }

    /// K_o^-1 b through the stored eigendecomposition.
    Matrix solve_train(const Matrix& b) const;
};

/// Throws DataError for overlapping, repeated or out-of-range ids.
KinshipPartition partition_kinship(const SymMatrix& kinship,
                                   std::span<const Index> train_ids,
                                   std::span<const Index> test_ids);

}  // namespace glf
