#pragma once

#include "glf/linalg.hpp"

#include <vector>

namespace glf {

enum class SearchMethod { exhaustive, forward };

struct SubsetTraceEntry {
    std::vector<Index> subset;
    double bic = 0.0;
};

struct SubsetResult {
    std::vector<Index> selected;  ///< sorted candidate column indices
    double bic = 0.0;
    double null_bic = 0.0;        ///< intercept-only model
    SearchMethod method = SearchMethod::exhaustive;
    std::vector<SubsetTraceEntry> trace;
};

struct SelectionOptions {
    Index exhaustive_limit = 15;  ///< exhaustive search up to this many candidates
    bool record_trace = false;
};

/// g ln(RSS/g) + (k+1) ln g for the OLS fit of y on [1, X]. Collinear
/// columns are dropped (lowest index kept) and k counts the kept ones;
/// RSS is floored at 1e-12.
double bic_of_subset(const Vector& y, const Matrix& x);

/// Best BIC subset of the candidate columns: exhaustive when there are at most
/// `exhaustive_limit` candidates, otherwise forward stepwise while BIC strictly
/// decreases. Ties go to the lexicographically smallest subset.
SubsetResult best_subset(const Vector& y, const Matrix& candidates, const SelectionOptions& options = {});

/// Forces one search method regardless of the candidate count.
SubsetResult best_subset_with(const Vector& y, const Matrix& candidates, SearchMethod method,
                              bool record_trace = false);

}  // namespace glf
