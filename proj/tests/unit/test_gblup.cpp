#include "glf/error.hpp"
#include "glf/gblup.hpp"

#include "oracles.hpp"
#include "scenarios.hpp"

#include <doctest.h>

using namespace glf;
using namespace glf::testing;

namespace {

KinshipPartition identity_partition(Index g_o, Index g_u)
{
    std::vector<Index> tr(static_cast<std::size_t>(g_o));
    std::vector<Index> te(static_cast<std::size_t>(g_u));
    std::iota(tr.begin(), tr.end(), 0);
    std::iota(te.begin(), te.end(), g_o);
    return partition_kinship(SymMatrix(Matrix::Identity(g_o + g_u, g_o + g_u), MatrixKind::kinship), tr, te);
}

MultiTraitCov make_cov(const Matrix& sg, const Matrix& se)
{
    return {SymMatrix(sg, MatrixKind::covariance), SymMatrix(se, MatrixKind::covariance)};
}

struct Fixture {
    ToyInstance toy;
    KinshipPartition part;
    MultiTraitCov cov;
};

Fixture fixture_with_traits(Index t, std::uint64_t seed, bool balanced)
{
    Rng rng(seed);
    ToyInstance toy;
    do {
        toy = random_toy(rng, balanced);
    } while (toy.sigma_g.rows() != t);
    auto part = partition_kinship(SymMatrix(toy.kinship, MatrixKind::kinship), toy.train_ids, toy.test_ids);
    auto cov = make_cov(toy.sigma_g, toy.sigma_e);
    return {std::move(toy), std::move(part), std::move(cov)};
}

}  // namespace

TEST_CASE("univariate gBLUP with identity kinship shrinks towards the mean")
{
    const auto d = balanced_design(5, 1);
    const auto part = identity_partition(5, 2);
    Vector y(5);
    y << 1.0, 3.0, -2.0, 0.5, 7.5;
    const auto res = univariate_gblup(y, d, 1.0, 1.0, part);
    const Vector expected = 0.5 * (y.array() - y.mean());
    CHECK((res.train - expected).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(res.beta(0) == doctest::Approx(y.mean()));
    CHECK(res.test.isZero(1e-12));

    const auto zero = univariate_gblup(y, d, 0.0, 1.0, part);
    CHECK(zero.train.isZero(0.0));
    CHECK(zero.test.isZero(0.0));

    CHECK_THROWS_AS(univariate_gblup(y, d, 1.0, 0.0, part), NumericalError);
    CHECK_THROWS_AS(univariate_gblup(y, d, 1.0, 1.0, identity_partition(4, 2)), DataError);
}

TEST_CASE("BLUPs match the dense oracles on random toy instances")
{
    Rng rng(1);
    for (int trial = 0; trial < 60; ++trial) {
        const bool balanced = trial % 2 == 0;
        const ToyInstance toy = random_toy(rng, balanced);
        const auto err = toy_errors(toy);
        CAPTURE(trial);
        CHECK(err.uni_vs_mme < 1e-8);
        CHECK(err.cv1_vs_dense < 1e-8);
        CHECK(err.cv2_vs_dense < 1e-8);
    }
}

TEST_CASE("test predictions are K_uo K_o^-1 times training BLUPs")
{
    const Fixture fx = fixture_with_traits(3, 2, false);
    const auto cv1 = cv1_predict(fx.toy.y_o, fx.toy.train_design, fx.cov, fx.part);
    const Matrix k_o = submatrix(fx.toy.kinship, fx.toy.train_ids, fx.toy.train_ids);
    const Matrix k_uo = submatrix(fx.toy.kinship, fx.toy.test_ids, fx.toy.train_ids);
    CHECK((cv1.test - k_uo * k_o.inverse() * cv1.train).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(cv1.train_all.rows() == fx.part.n_train());
    CHECK(cv1.train_all.cols() == 3);
    CHECK((cv1.train_all.col(2) - cv1.train).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("uncorrelated traits reduce to the univariate model")
{
    for (std::uint64_t seed = 3; seed < 8; ++seed) {
        const Fixture fx = fixture_with_traits(3, seed, seed % 2 == 0);
        const Matrix sg = fx.toy.sigma_g.diagonal().asDiagonal();
        const Matrix se = fx.toy.sigma_e.diagonal().asDiagonal();
        const auto cov = make_cov(sg, se);
        const Vector focal = fx.toy.y_o.col(2);
        const auto uni = univariate_gblup(focal, fx.toy.train_design, sg(2, 2), se(2, 2), fx.part);
        const auto cv1 = cv1_predict(fx.toy.y_o, fx.toy.train_design, cov, fx.part);
        const auto cv2 = cv2_predict(fx.toy.y_o, fx.toy.train_design, fx.toy.y_wu, fx.toy.test_design, cov, fx.part);
        CHECK((cv1.train - uni.train).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((cv1.test - uni.test).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((cv2.test - uni.test).cwiseAbs().maxCoeff() < 1e-10);

        // No genetic link from the secondary traits to the focal trait: CV2 adds nothing.
        Matrix sg_split = fx.toy.sigma_g;
        sg_split.row(2).head(2).setZero();
        sg_split.col(2).head(2).setZero();
        Matrix se_split = fx.toy.sigma_e;
        se_split.row(2).head(2).setZero();
        se_split.col(2).head(2).setZero();
        const auto split = make_cov(sg_split, se_split);
        const auto a = cv1_predict(fx.toy.y_o, fx.toy.train_design, split, fx.part);
        const auto b = cv2_predict(fx.toy.y_o, fx.toy.train_design, fx.toy.y_wu, fx.toy.test_design, split, fx.part);
        CHECK((a.test - b.test).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("shift invariance, scale equivariance and linearity")
{
    const Fixture fx = fixture_with_traits(3, 9, false);
    const auto& toy = fx.toy;
    auto cv2 = [&](const Matrix& y_o, const Matrix& y_wu, const MultiTraitCov& cov) {
        return cv2_predict(y_o, toy.train_design, y_wu, toy.test_design, cov, fx.part);
    };
    const auto base = cv2(toy.y_o, toy.y_wu, fx.cov);

    Vector shift(3);
    shift << 4.0, -2.5, 10.0;
    const Matrix y_o_shift = toy.y_o.rowwise() + shift.transpose();
    const Matrix y_wu_shift = toy.y_wu.rowwise() + shift.head(2).transpose();
    const auto shifted = cv2(y_o_shift, y_wu_shift, fx.cov);
    CHECK((shifted.test - base.test).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((shifted.train - base.train).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((shifted.beta - base.beta - shift).cwiseAbs().maxCoeff() < 1e-9);

    const double c = 3.0;
    const auto scaled = cv2(c * toy.y_o, c * toy.y_wu, make_cov(c * c * toy.sigma_g, c * c * toy.sigma_e));
    CHECK((scaled.test - c * base.test).cwiseAbs().maxCoeff() < 1e-9);

    Rng rng(10);
    const Matrix y2_o = random_normal(toy.y_o.rows(), 3, rng);
    const Matrix y2_wu = random_normal(toy.y_wu.rows(), 2, rng);
    const auto other = cv2(y2_o, y2_wu, fx.cov);
    const auto sum = cv2(toy.y_o + 2.0 * y2_o, toy.y_wu + 2.0 * y2_wu, fx.cov);
    CHECK((sum.test - base.test - 2.0 * other.test).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((sum.train - base.train - 2.0 * other.train).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("CV2 input validation")
{
    const Fixture fx = fixture_with_traits(3, 11, true);
    const auto& toy = fx.toy;
    CHECK_THROWS_AS(cv2_predict(toy.y_o, toy.train_design, Matrix(0, 2), toy.test_design, fx.cov, fx.part),
                    DataError);
    CHECK_THROWS_AS(cv2_predict(toy.y_o, toy.train_design, toy.y_wu.leftCols(1), toy.test_design, fx.cov, fx.part),
                    DataError);
    CHECK_THROWS_AS(cv1_predict(toy.y_o.leftCols(2), toy.train_design, fx.cov, fx.part), DataError);
    CHECK(to_string(Scenario::cv2) == "CV2");
}

TEST_CASE("K_u^-1 form update differs from the exact conditional mean")
{
    Rng rng(12);
    double worst = 0.0;
    double typical = 0.0;
    int count = 0;
    for (int trial = 0; trial < 20; ++trial) {
        ToyInstance toy;
        do {
            toy = random_toy(rng, true);
        } while (toy.sigma_g.rows() < 2);
        const auto part = partition_kinship(SymMatrix(toy.kinship, MatrixKind::kinship), toy.train_ids, toy.test_ids);
        const auto cov = make_cov(toy.sigma_g, toy.sigma_e);
        const auto exact = cv2_predict(toy.y_o, toy.train_design, toy.y_wu, toy.test_design, cov, part);
        const auto kinv =
            cv2_predict_kinv_form(toy.y_o, toy.train_design, toy.y_wu, toy.test_design, cov, part);
        CHECK(kinv.train == exact.train);
        const double gap = (kinv.test - exact.test).cwiseAbs().maxCoeff();
        worst = std::max(worst, gap);
        typical += gap / std::max(1e-12, exact.test.cwiseAbs().maxCoeff());
        ++count;
    }
    MESSAGE("K_u^-1 form vs exact CV2: max abs gap ", worst, ", mean relative gap ", typical / count);
    CHECK(worst > 1e-6);
}

TEST_CASE("multi-trait covariance estimation")
{
    Rng rng(13);
    const auto d = balanced_design(200, 3);
    const Matrix y = random_normal(600, 3, rng);
    const auto cov = estimate_multitrait_cov(y, d);
    CHECK(cov.n_traits() == 3);
    CHECK(cov.focal() == 2);
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(cov.sigma_e.values()).eigenvalues().minCoeff() >= 0.0);
    CHECK((cov.sigma_e.values() - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 0.15);
    CHECK_THROWS_AS(estimate_multitrait_cov(random_normal(9, 3, rng), balanced_design(3, 3)), DataError);
}
