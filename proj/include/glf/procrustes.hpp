#pragma once

#include "glf/factor.hpp"

#include <vector>

namespace glf {

/// m x m matrix with exactly one +-1 in every row and column, stored as the
/// column hit by each row plus that entry's sign.
class SignedPermutation {
public:
    SignedPermutation() = default;
    /// Throws DataError unless `columns` is a permutation of 0..m-1 and every
    /// sign is +-1.
    SignedPermutation(std::vector<Index> columns, std::vector<int> signs);

    static SignedPermutation identity(Index m);

    Index size() const noexcept { return static_cast<Index>(columns_.size()); }
    const std::vector<Index>& columns() const noexcept { return columns_; }
    const std::vector<int>& signs() const noexcept { return signs_; }
    bool is_identity() const noexcept;
    Matrix to_matrix() const;
    SignedPermutation transpose() const;

    bool operator==(const SignedPermutation&) const = default;

private:
    std::vector<Index> columns_;
    std::vector<int> signs_;
};

struct ProcrustesResult {
    Matrix rotation;  ///< orthogonal T minimising |source T - target|_F
    bool rank_deficient = false;
};

/// T = U V^T from the SVD source^T target = U D V^T.
ProcrustesResult orthogonal_procrustes(const Matrix& source, const Matrix& target);

/// Maximum-weight perfect assignment on a square weight matrix (Hungarian
/// method). Returns the column assigned to each row.
std::vector<Index> max_weight_assignment(const Matrix& weights);

/// Signed permutation maximising sum |T_ij| over its support, each entry
/// carrying sign(T_ij). Throws NumericalError when a row or column of T is
/// entirely zero.
SignedPermutation smooth_to_signed_permutation(const Matrix& rotation);

struct AlignedLoadingsSeries {
    std::vector<Matrix> raw;
    std::vector<Matrix> rotations;
    std::vector<SignedPermutation> permutations;
    std::vector<Matrix> aligned;
    Index target = 0;
};

/// Rotate every timepoint's loadings towards the target timepoint and keep
/// only the signed permutation contained in each Procrustes rotation.
/// Throws DataError when the loadings do not share one dimension.
AlignedLoadingsSeries align_series(const std::vector<Matrix>& loadings, Index target_index);
AlignedLoadingsSeries align_series(const std::vector<FactorModel>& models, Index target_index);

}  // namespace glf
