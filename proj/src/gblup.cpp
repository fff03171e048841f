#include "glf/gblup.hpp"

#include "glf/covest.hpp"
#include "glf/error.hpp"

#include <optional>
#include <string>

namespace glf {

std::string_view to_string(Scenario scenario)
{
    switch (scenario) {
    case Scenario::uni:
        return "UNI";
    case Scenario::cv1:
        return "CV1";
    case Scenario::cv2:
        return "CV2";
    }
    return "unknown";
}

MultiTraitCov estimate_multitrait_cov(const Matrix& plot_matrix, const TrialDesign& design)
{
    if (plot_matrix.cols() >= design.n_genotypes()) {
        throw DataError("estimate_multitrait_cov: " + std::to_string(plot_matrix.cols()) +
                        " traits need more than that many training genotypes");
    }
    const auto pair = estimate_covariances(plot_matrix, design);
    return MultiTraitCov{pair.sigma_g, nearest_psd(pair.sigma_e.values(), MatrixKind::covariance)};
}

namespace {

struct MeanData {
    Matrix means;  // g x t genotype means
    Vector reps;   // r_c
};

MeanData to_means(const Matrix& plot_matrix, const TrialDesign& design)
{
    MeanData out{genotype_blues(plot_matrix, design), Vector(design.n_genotypes())};
    const auto counts = design.replicate_counts();
    for (Index c = 0; c < design.n_genotypes(); ++c) {
        out.reps(c) = static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }
    return out;
}

/// V = Sigma_G (x) K_o + blockdiag_c(Sigma_E / r_c) on genotype means, with
/// vec() stacking trait columns. Balanced designs use the simultaneous
/// diagonalisation of (Sigma_G, Sigma_E / r) and the eigenbasis of K_o, so
/// V^-1 never gets formed; unbalanced designs fall back to a dense Cholesky.
class MeanModelSolver {
public:
    MeanModelSolver(const Matrix& sigma_g, const Matrix& sigma_e, const Vector& reps,
                    const KinshipPartition& part)
        : part_(part), t_(sigma_g.rows()), g_(part.n_train())
    {
        if (reps.size() != g_) {
            throw DataError("BLUP: training design has " + std::to_string(reps.size()) +
                            " genotypes, kinship block has " + std::to_string(g_));
        }
        kronecker_ = (reps.array() == reps(0)).all();
        if (kronecker_) {
            const Matrix sigma_e_mean = sigma_e / reps(0);
            const linalg::RobustCholesky chol(sigma_e_mean, "BLUP residual covariance");
            const Matrix l = chol.matrix_l();
            const Matrix l_inv = l.triangularView<Eigen::Lower>().solve(Matrix::Identity(t_, t_));
            const Matrix whitened = linalg::symmetrize(l_inv * sigma_g * l_inv.transpose());
            auto eig = linalg::sym_eigen_desc(whitened);
            lambda_ = eig.values.cwiseMax(0.0);
            a_ = l_inv.transpose() * eig.vectors;
            denom_.resize(g_, t_);
            for (Index i = 0; i < g_; ++i) {
                for (Index k = 0; k < t_; ++k) {
                    denom_(i, k) = part.train_eigenvalues(i) * lambda_(k) + 1.0;
                }
            }
        } else {
            const Index dim = t_ * g_;
            Matrix v(dim, dim);
            for (Index a = 0; a < t_; ++a) {
                for (Index b = 0; b < t_; ++b) {
                    v.block(a * g_, b * g_, g_, g_) = sigma_g(a, b) * part.train;
                    for (Index i = 0; i < g_; ++i) {
                        v(a * g_ + i, b * g_ + i) += sigma_e(a, b) / reps(i);
                    }
                }
            }
            dense_.emplace(v, "BLUP phenotypic covariance");
        }
    }

    bool kronecker() const { return kronecker_; }

    /// vec^-1(V^-1 vec(r)) for a g x t matrix r.
    Matrix apply_vinv(const Matrix& r) const
    {
        if (kronecker_) {
            const Matrix& u = part_.train_eigenvectors;
            Matrix x = u.transpose() * r * a_;
            x.array() /= denom_.array();
            return u * x * a_.transpose();
        }
        const Eigen::Map<const Vector> vec_r(r.data(), r.size());
        const Vector sol = dense_->solve(Vector(vec_r));
        return Eigen::Map<const Matrix>(sol.data(), g_, t_);
    }

    /// Conditional covariance of vec(G_u) given the training data:
    /// Sigma_G (x) K_u - (Sigma_G (x) K_uo) V^-1 (Sigma_G (x) K_ou).
    Matrix conditional_test_cov(const Matrix& sigma_g) const
    {
        const Index gu = part_.n_test();
        Matrix c(t_ * gu, t_ * gu);
        for (Index a = 0; a < t_; ++a) {
            for (Index b = 0; b < t_; ++b) {
                c.block(a * gu, b * gu, gu, gu) = sigma_g(a, b) * part_.test;
            }
        }
        if (kronecker_) {
            const Matrix p = sigma_g * a_;
            const Matrix q = part_.test_train * part_.train_eigenvectors;
            for (Index k = 0; k < t_; ++k) {
                const Vector d = denom_.col(k).cwiseInverse();
                const Matrix h = q * d.asDiagonal() * q.transpose();
                for (Index a = 0; a < t_; ++a) {
                    for (Index b = 0; b < t_; ++b) {
                        c.block(a * gu, b * gu, gu, gu) -= (p(a, k) * p(b, k)) * h;
                    }
                }
            }
        } else {
            Matrix cross = Matrix::Zero(t_ * g_, t_ * gu);
            const Matrix k_ou = part_.test_train.transpose();
            for (Index a = 0; a < t_; ++a) {
                for (Index b = 0; b < t_; ++b) {
                    cross.block(a * g_, b * gu, g_, gu) = sigma_g(a, b) * k_ou;
                }
            }
            c -= cross.transpose() * dense_->solve(cross);
        }
        return linalg::symmetrize(c);
    }

private:
    const KinshipPartition& part_;
    Index t_;
    Index g_;
    bool kronecker_ = true;
    Matrix a_;
    Vector lambda_;
    Matrix denom_;
    std::optional<linalg::RobustCholesky> dense_;
};

struct TrainingFit {
    Vector beta;
    Matrix vinv_resid;  // vec^-1(V^-1 vec(Y - 1 beta^T))
    Matrix g_all;       // K_o vinv_resid Sigma_G
};

TrainingFit fit_training(const MeanModelSolver& solver, const Matrix& means, const Matrix& sigma_g,
                         const KinshipPartition& part)
{
    const Index g = means.rows();
    const Index t = means.cols();
    Matrix xtvx(t, t);
    for (Index k = 0; k < t; ++k) {
        Matrix unit = Matrix::Zero(g, t);
        unit.col(k).setOnes();
        xtvx.col(k) = solver.apply_vinv(unit).colwise().sum().transpose();
    }
    const Vector xtvy = solver.apply_vinv(means).colwise().sum().transpose();
    TrainingFit fit;
    fit.beta = linalg::RobustCholesky(linalg::symmetrize(xtvx), "GLS intercepts").solve(xtvy);
    const Matrix resid = means.rowwise() - fit.beta.transpose();
    fit.vinv_resid = solver.apply_vinv(resid);
    fit.g_all = part.train * fit.vinv_resid * sigma_g;
    return fit;
}

void check_finite(const BlupResult& r)
{
    if (!r.train.allFinite() || !r.test.allFinite()) {
        throw NumericalError("BLUP produced non-finite predictions");
    }
}

struct CvState {
    MeanData train;
    MeanModelSolver solver;
    TrainingFit fit;
    Matrix test_mean;  // K_uo K_o^-1 G_o, all traits
};

CvState run_training(const Matrix& plot_matrix_train, const TrialDesign& design,
                     const MultiTraitCov& cov, const KinshipPartition& partition)
{
    if (plot_matrix_train.cols() != cov.n_traits()) {
        throw DataError("BLUP: plot matrix has " + std::to_string(plot_matrix_train.cols()) +
                        " columns, covariance has " + std::to_string(cov.n_traits()));
    }
    MeanData train = to_means(plot_matrix_train, design);
    MeanModelSolver solver(cov.sigma_g.values(), cov.sigma_e.values(), train.reps, partition);
    TrainingFit fit = fit_training(solver, train.means, cov.sigma_g.values(), partition);
    Matrix test_mean = partition.test_train * fit.vinv_resid * cov.sigma_g.values();
    return CvState{std::move(train), std::move(solver), std::move(fit), std::move(test_mean)};
}

MeanData test_secondary_means(const Matrix& secondary_test, const TrialDesign& test_design,
                              const KinshipPartition& partition, Index n_secondary)
{
    if (secondary_test.rows() == 0) {
        throw DataError("cv2_predict: no test secondary data; use cv1_predict");
    }
    if (secondary_test.cols() != n_secondary) {
        throw DataError("cv2_predict: test secondary data has " + std::to_string(secondary_test.cols()) +
                        " columns, expected " + std::to_string(n_secondary));
    }
    if (test_design.n_genotypes() != partition.n_test()) {
        throw DataError("cv2_predict: test design genotypes do not match the kinship test block");
    }
    return to_means(secondary_test, test_design);
}

}  // namespace

BlupResult univariate_gblup(const Vector& focal_train, const TrialDesign& design, double sigma_g,
                            double sigma_e, const KinshipPartition& partition)
{
    if (sigma_g < 0.0 || !(sigma_e > 0.0)) {
        throw NumericalError("univariate_gblup: need sigma_g >= 0 and sigma_e > 0");
    }
    const MultiTraitCov cov{SymMatrix(Matrix::Constant(1, 1, sigma_g), MatrixKind::covariance),
                            SymMatrix(Matrix::Constant(1, 1, sigma_e), MatrixKind::covariance)};
    auto state = run_training(focal_train, design, cov, partition);
    BlupResult out;
    out.scenario = Scenario::uni;
    out.beta = state.fit.beta;
    out.train = state.fit.g_all.col(0);
    out.test = state.test_mean.col(0);
    out.train_all = std::move(state.fit.g_all);
    check_finite(out);
    return out;
}

BlupResult cv1_predict(const Matrix& plot_matrix_train, const TrialDesign& design,
                       const MultiTraitCov& cov, const KinshipPartition& partition)
{
    auto state = run_training(plot_matrix_train, design, cov, partition);
    const Index f = cov.focal();
    BlupResult out;
    out.scenario = Scenario::cv1;
    out.beta = state.fit.beta;
    out.train = state.fit.g_all.col(f);
    out.test = state.test_mean.col(f);
    out.train_all = std::move(state.fit.g_all);
    check_finite(out);
    return out;
}

BlupResult cv2_predict(const Matrix& plot_matrix_train, const TrialDesign& design,
                       const Matrix& secondary_test, const TrialDesign& test_design,
                       const MultiTraitCov& cov, const KinshipPartition& partition)
{
    const Index w = cov.n_traits() - 1;
    const Index f = cov.focal();
    auto state = run_training(plot_matrix_train, design, cov, partition);
    BlupResult out;
    out.scenario = Scenario::cv2;
    out.beta = state.fit.beta;
    out.train = state.fit.g_all.col(f);
    out.test = state.test_mean.col(f);
    if (w == 0) {
        out.train_all = std::move(state.fit.g_all);
        return out;
    }
    const MeanData test = test_secondary_means(secondary_test, test_design, partition, w);
    const Index gu = partition.n_test();
    const Matrix cond = state.solver.conditional_test_cov(cov.sigma_g.values());
    const Matrix& sigma_e = cov.sigma_e.values();

    Matrix system = cond.topLeftCorner(w * gu, w * gu);
    Vector rhs(w * gu);
    for (Index a = 0; a < w; ++a) {
        for (Index i = 0; i < gu; ++i) {
            rhs(a * gu + i) = test.means(i, a) - out.beta(a) - state.test_mean(i, a);
            for (Index b = 0; b < w; ++b) {
                system(a * gu + i, b * gu + i) += sigma_e(a, b) / test.reps(i);
            }
        }
    }
    const linalg::RobustCholesky chol(system, "CV2 test covariance");
    out.test += cond.block(f * gu, 0, gu, w * gu) * chol.solve(rhs);
    out.train_all = std::move(state.fit.g_all);
    check_finite(out);
    return out;
}

BlupResult cv2_predict_kinv_form(const Matrix& plot_matrix_train, const TrialDesign& design,
                                     const Matrix& secondary_test, const TrialDesign& test_design,
                                     const MultiTraitCov& cov, const KinshipPartition& partition)
{
    const Index w = cov.n_traits() - 1;
    const Index f = cov.focal();
    auto state = run_training(plot_matrix_train, design, cov, partition);
    BlupResult out;
    out.scenario = Scenario::cv2;
    out.beta = state.fit.beta;
    out.train = state.fit.g_all.col(f);
    out.test = state.test_mean.col(f);
    if (w == 0) {
        return out;
    }
    const MeanData test = test_secondary_means(secondary_test, test_design, partition, w);
    const Index gu = partition.n_test();
    const Matrix ku_inv = linalg::RobustCholesky(partition.test, "K_u").solve(Matrix(Matrix::Identity(gu, gu)));
    const Matrix& sg = cov.sigma_g.values();
    const Matrix& se = cov.sigma_e.values();

    Matrix v(w * gu, w * gu);
    Matrix cross(gu, w * gu);
    Vector rhs(w * gu);
    for (Index a = 0; a < w; ++a) {
        for (Index b = 0; b < w; ++b) {
            v.block(a * gu, b * gu, gu, gu) = sg(a, b) * ku_inv;
            v.block(a * gu, b * gu, gu, gu).diagonal().array() += se(a, b);
        }
        cross.middleCols(a * gu, gu) = sg(f, a) * ku_inv;
        for (Index i = 0; i < gu; ++i) {
            rhs(a * gu + i) = test.means(i, a) - out.beta(a) - state.test_mean(i, a);
        }
    }
    out.test += cross * linalg::RobustCholesky(v, "K_u^-1 form CV2 covariance").solve(rhs);
    out.train_all = std::move(state.fit.g_all);
    return out;
}

}  // namespace glf
