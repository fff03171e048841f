#include "glf/factor.hpp"

#include "glf/error.hpp"
#include "glf/optim.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace glf {

DimensionChoice select_dimension(const SymMatrix& genetic_correlation)
{
    const Index s = genetic_correlation.dim();
    if (s < 3) {
        throw DataError("select_dimension: need at least 3 traits, got " + std::to_string(s));
    }
    DimensionChoice out;
    ScreeProfile& prof = out.profile;
    Eigen::SelfAdjointEigenSolver<Matrix> solver(genetic_correlation.values(), Eigen::EigenvaluesOnly);
    prof.eigenvalues = solver.eigenvalues().reverse();
    const double lo = prof.eigenvalues(s - 1);
    prof.condition_number = lo > 0.0 ? prof.eigenvalues(0) / lo : std::numeric_limits<double>::infinity();

    // delta(j) with 1-based j
    auto delta = [&](Index j) { return prof.eigenvalues(j - 1); };

    prof.acceleration.resize(s - 2);
    Index best_j = 2;
    double best_af = -std::numeric_limits<double>::infinity();
    for (Index j = 2; j <= s - 1; ++j) {
        const double af = delta(j + 1) - 2.0 * delta(j) + delta(j - 1);
        prof.acceleration(j - 2) = af;
        if (af > best_af) {
            best_af = af;
            best_j = j;
        }
    }
    prof.elbow = best_j;

    prof.intercepts.resize(s - 2);
    prof.slopes.resize(s - 2);
    for (Index j = 1; j <= s - 2; ++j) {
        const double b = (delta(s) - delta(j + 1)) / static_cast<double>(s - j - 1);
        prof.slopes(j - 1) = b;
        prof.intercepts(j - 1) = delta(j + 1) - b * static_cast<double>(j + 1);
    }

    Index m = 0;
    for (Index j = 1; j <= s; ++j) {
        if (delta(j) >= 1.0 && j < prof.elbow) {
            ++m;
        }
    }
    out.m_star = std::max<Index>(m, 1);
    return out;
}

Matrix FactorModel::implied() const
{
    Matrix out = loadings * loadings.transpose();
    out.diagonal() += uniquenesses;
    return out;
}

double ml_discrepancy(const Matrix& r, const Matrix& loadings, const Vector& psi)
{
    Matrix sigma = loadings * loadings.transpose();
    sigma.diagonal() += psi;
    Eigen::LLT<Matrix> ls(sigma);
    Eigen::LLT<Matrix> lr(r);
    if (ls.info() != Eigen::Success || lr.info() != Eigen::Success) {
        throw NumericalError("ml_discrepancy: matrix not positive definite");
    }
    const double logdet_s = 2.0 * ls.matrixLLT().diagonal().array().log().sum();
    const double logdet_r = 2.0 * lr.matrixLLT().diagonal().array().log().sum();
    const double trace = ls.solve(r).trace();
    return logdet_s + trace - logdet_r - static_cast<double>(r.rows());
}

namespace {

struct ScaledEigen {
    Vector theta;  // descending eigenvalues of Psi^-1/2 R Psi^-1/2
    Matrix omega;
};

ScaledEigen scaled_eigen(const Matrix& r, const Vector& psi)
{
    const Vector inv_sqrt = psi.cwiseSqrt().cwiseInverse();
    const Matrix scaled = inv_sqrt.asDiagonal() * r * inv_sqrt.asDiagonal();
    auto eig = linalg::sym_eigen_desc(scaled);
    return {std::move(eig.values), std::move(eig.vectors)};
}

// Closed form of the discrepancy at the profiled loadings in terms of the
// scaled eigenvalues: factors with theta > 1 contribute 1, the rest
// theta - ln(theta).
double profiled_value(const Vector& theta, Index m)
{
    const Index s = theta.size();
    double f = 0.0;
    for (Index j = 0; j < s; ++j) {
        const double t = theta(j);
        if (j < m && t > 1.0) {
            f += 1.0;
        } else {
            f += t - std::log(t);
        }
    }
    return f - static_cast<double>(s);
}

Vector profiled_gradient_log_psi(const ScaledEigen& e, Index m)
{
    const Index s = e.theta.size();
    Vector g = Vector::Zero(s);
    for (Index j = 0; j < s; ++j) {
        if (j < m && e.theta(j) > 1.0) {
            continue;
        }
        g += (1.0 - e.theta(j)) * e.omega.col(j).cwiseAbs2();
    }
    return g;
}

}  // namespace

Matrix profile_loadings(const Matrix& r, const Vector& psi, Index m)
{
    const auto e = scaled_eigen(r, psi);
    Matrix lambda(r.rows(), m);
    for (Index k = 0; k < m; ++k) {
        lambda.col(k) = e.omega.col(k) * std::sqrt(std::max(e.theta(k) - 1.0, 0.0));
    }
    return psi.cwiseSqrt().asDiagonal() * lambda;
}

double profile_discrepancy(const Matrix& r, const Vector& psi, Index m)
{
    const auto e = scaled_eigen(r, psi);
    if (e.theta.minCoeff() <= 0.0) {
        throw NumericalError("profile_discrepancy: correlation matrix not positive definite");
    }
    return profiled_value(e.theta, m);
}

Vector profile_gradient_log_psi(const Matrix& r, const Vector& psi, Index m)
{
    return profiled_gradient_log_psi(scaled_eigen(r, psi), m);
}

FactorModel fit_factor_model(const SymMatrix& genetic_correlation, Index m_star,
                             const FactorFitOptions& options)
{
    const Matrix& r = genetic_correlation.values();
    const Index s = r.rows();
    if (m_star < 1 || m_star >= s) {
        throw DataError("fit_factor_model: need 1 <= m < s (m = " + std::to_string(m_star) +
                        ", s = " + std::to_string(s) + ")");
    }
    Eigen::LLT<Matrix> llt(r);
    if (llt.info() != Eigen::Success || !r.allFinite()) {
        throw NumericalError("fit_factor_model: input correlation matrix is not positive definite");
    }
    const double floor = options.psi_floor;
    const Matrix r_inv = llt.solve(Matrix::Identity(s, s));
    Vector eta(s);
    for (Index j = 0; j < s; ++j) {
        const double psi0 = std::clamp(1.0 / r_inv(j, j), floor + 1e-3, 1.0);
        eta(j) = std::log(psi0 - floor);
    }

    // Uniquenesses that run into the floor are pinned there (a flat direction
    // in eta otherwise stalls BFGS) and released when the gradient pulls them up.
    constexpr double kPinned = 1e-7;
    std::vector<bool> pinned(static_cast<std::size_t>(s), false);
    auto full_psi = [&](const Vector& sub, const std::vector<Index>& free) {
        Vector psi = Vector::Constant(s, floor);
        for (std::size_t k = 0; k < free.size(); ++k) {
            psi(free[k]) = floor + std::exp(sub(static_cast<Index>(k)));
        }
        return psi;
    };

    optim::BfgsOptions bo;
    bo.grad_tol = options.grad_tol;
    bo.max_iter = options.max_iter;
    optim::BfgsResult res;
    int total_iter = 0;
    Vector psi_hat;
    for (int round = 0; round < 20; ++round) {
        std::vector<Index> free;
        for (Index j = 0; j < s; ++j) {
            if (!pinned[static_cast<std::size_t>(j)]) {
                free.push_back(j);
            }
        }
        Vector x0(static_cast<Index>(free.size()));
        for (std::size_t k = 0; k < free.size(); ++k) {
            x0(static_cast<Index>(k)) = eta(free[k]);
        }
        auto objective = [&](const Vector& x, Vector& grad) {
            const Vector psi = full_psi(x, free);
            const auto e = scaled_eigen(r, psi);
            grad.setZero(x.size());
            if (e.theta.minCoeff() <= 0.0) {
                return std::numeric_limits<double>::infinity();
            }
            // d/d eta = d/d ln(psi) * (psi - floor) / psi
            const Vector g = profiled_gradient_log_psi(e, m_star);
            for (std::size_t k = 0; k < free.size(); ++k) {
                const double excess = psi(free[k]) - floor;
                grad(static_cast<Index>(k)) = g(free[k]) * excess / psi(free[k]);
            }
            return profiled_value(e.theta, m_star);
        };
        res = free.empty() ? optim::BfgsResult{x0, 0.0, 0.0, 0, true} : optim::minimize_bfgs(objective, x0, bo);
        total_iter += res.iterations;
        for (std::size_t k = 0; k < free.size(); ++k) {
            eta(free[k]) = res.x(static_cast<Index>(k));
        }
        psi_hat = full_psi(res.x, free);
        const Vector g = profiled_gradient_log_psi(scaled_eigen(r, psi_hat), m_star);
        bool changed = false;
        for (Index j = 0; j < s; ++j) {
            const auto ju = static_cast<std::size_t>(j);
            if (!pinned[ju] && psi_hat(j) - floor < kPinned) {
                pinned[ju] = true;
                changed = true;
            } else if (pinned[ju] && g(j) < -options.grad_tol) {
                pinned[ju] = false;
                eta(j) = std::log(1e-3);
                changed = true;
            }
        }
        if (!changed) {
            break;
        }
    }
    res.iterations = total_iter;

    FactorModel model;
    model.m_star = m_star;
    model.uniquenesses = psi_hat;
    model.loadings = profile_loadings(r, model.uniquenesses, m_star);
    model.fit_value = ml_discrepancy(r, model.loadings, model.uniquenesses);
    model.converged = res.converged;
    model.iterations = res.iterations;
    model.heywood = std::any_of(pinned.begin(), pinned.end(), [](bool b) { return b; });
    if (!model.converged) {
        spdlog::warn("fit_factor_model: no convergence after {} iterations (|grad| = {:.3g})",
                     res.iterations, res.grad_norm);
    }
    if (model.heywood) {
        spdlog::debug("fit_factor_model: Heywood case, uniqueness at floor {}", floor);
    }
    return model;
}

namespace {

Vector row_norms(const Matrix& x)
{
    Vector h = x.rowwise().norm();
    for (Index i = 0; i < h.size(); ++i) {
        if (h(i) == 0.0) {
            h(i) = 1.0;
        }
    }
    return h;
}

}  // namespace

double varimax_criterion(const Matrix& loadings, bool normalize)
{
    Matrix z = loadings;
    if (normalize) {
        z = row_norms(loadings).cwiseInverse().asDiagonal() * loadings;
    }
    const double p = static_cast<double>(z.rows());
    const Matrix sq = z.cwiseAbs2();
    double v = 0.0;
    for (Index j = 0; j < z.cols(); ++j) {
        const double m2 = sq.col(j).sum() / p;
        const double m4 = sq.col(j).cwiseAbs2().sum() / p;
        v += m4 - m2 * m2;
    }
    return v;
}

VarimaxResult varimax(const Matrix& loadings, bool normalize, double tol, int max_iter)
{
    const Index m = loadings.cols();
    if (m < 1 || loadings.rows() < 1) {
        throw DataError("varimax: loadings must be non-empty");
    }
    VarimaxResult out{loadings, Matrix::Identity(m, m), 0};
    if (m == 1) {
        return out;
    }
    const Vector h = normalize ? row_norms(loadings) : Vector::Ones(loadings.rows());
    Matrix z = h.cwiseInverse().asDiagonal() * loadings;
    const double p = static_cast<double>(z.rows());

    // Kaiser's pairwise sweeps: each factor pair is turned by the angle that
    // maximises the criterion in its plane (closed form), until a full sweep
    // moves no pair by more than tol radians.
    Matrix rot = Matrix::Identity(m, m);
    for (out.iterations = 1; out.iterations <= max_iter; ++out.iterations) {
        double largest = 0.0;
        for (Index j = 0; j < m - 1; ++j) {
            for (Index k = j + 1; k < m; ++k) {
                const Vector u = z.col(j).cwiseAbs2() - z.col(k).cwiseAbs2();
                const Vector v = 2.0 * z.col(j).cwiseProduct(z.col(k));
                const double a = u.sum();
                const double b = v.sum();
                const double c = u.squaredNorm() - v.squaredNorm();
                const double d = 2.0 * u.dot(v);
                const double phi = 0.25 * std::atan2(d - 2.0 * a * b / p, c - (a * a - b * b) / p);
                largest = std::max(largest, std::abs(phi));
                const double cs = std::cos(phi);
                const double sn = std::sin(phi);
                for (Matrix* target : {&z, &rot}) {
                    const Vector cj = target->col(j);
                    const Vector ck = target->col(k);
                    target->col(j) = cs * cj + sn * ck;
                    target->col(k) = -sn * cj + cs * ck;
                }
            }
        }
        if (largest < tol) {
            break;
        }
    }
    out.iterations = std::min(out.iterations, max_iter);
    out.rotation = rot;
    out.loadings = loadings * rot;
    return out;
}

}  // namespace glf
