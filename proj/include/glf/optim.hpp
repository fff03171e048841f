#pragma once

#include "glf/linalg.hpp"

#include <functional>

namespace glf::optim {

struct BfgsOptions {
    double grad_tol = 1e-6;
    int max_iter = 500;
    double max_step = 5.0;  ///< infinity-norm cap on a single step
};

struct BfgsResult {
    Vector x;
    double value = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Objective returning f(x) and writing the gradient into `grad`.
using Objective = std::function<double(const Vector& x, Vector& grad)>;

/// Quasi-Newton minimisation (inverse-Hessian BFGS, Armijo backtracking).
/// Converged when the gradient 2-norm drops below grad_tol * max(1, |f|);
/// stops early after 20 iterations without relative progress.
BfgsResult minimize_bfgs(const Objective& objective, Vector x0, const BfgsOptions& options = {});

}  // namespace glf::optim
