#include "glf/error.hpp"
#include "glf/kinship.hpp"

#include "oracles.hpp"

#include <doctest.h>

using namespace glf;
using namespace glf::testing;

namespace {

Matrix hardy_weinberg_markers(Index g, Index p, Rng& rng)
{
    std::uniform_real_distribution<double> freq(0.05, 0.5);
    Matrix m(g, p);
    for (Index k = 0; k < p; ++k) {
        std::binomial_distribution<int> b(2, freq(rng));
        for (Index c = 0; c < g; ++c) {
            m(c, k) = b(rng);
        }
    }
    return m;
}

}  // namespace

TEST_CASE("clones share kinship rows")
{
    Rng rng(1);
    Matrix m = hardy_weinberg_markers(10, 300, rng);
    m.row(7) = m.row(2);
    const Matrix raw = genomic_relationship_raw(m);
    CHECK((raw.row(7) - raw.row(2)).cwiseAbs().maxCoeff() < 1e-12);
    const Matrix k = genomic_relationship(m).values();
    CHECK(k(2, 2) == doctest::Approx(k(7, 7)));
    CHECK(k(2, 7) == doctest::Approx(k(2, 2) - 1e-6));
}

TEST_CASE("Hardy-Weinberg markers give unit mean self-relationship")
{
    Rng rng(2);
    const Matrix m = hardy_weinberg_markers(200, 2000, rng);
    const Matrix k = genomic_relationship(m).values();
    CHECK(std::abs(k.diagonal().mean() - 1.0) < 0.1);
    CHECK((k - k.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(k).eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("centring identity and VanRaden oracle")
{
    Rng rng(3);
    const Matrix m = hardy_weinberg_markers(30, 400, rng);
    const Matrix raw = genomic_relationship_raw(m);
    CHECK((raw * Vector::Ones(30)).cwiseAbs().maxCoeff() < 1e-10);

    // Direct formula with the same marker filter.
    std::vector<Index> kept;
    for (Index k = 0; k < m.cols(); ++k) {
        const double p = m.col(k).mean() / 2.0;
        if (std::min(p, 1.0 - p) >= 0.01 && m.col(k).maxCoeff() > m.col(k).minCoeff()) {
            kept.push_back(k);
        }
    }
    Matrix w(30, static_cast<Index>(kept.size()));
    double denom = 0.0;
    for (std::size_t j = 0; j < kept.size(); ++j) {
        const double p = m.col(kept[j]).mean() / 2.0;
        w.col(static_cast<Index>(j)) = m.col(kept[j]).array() - 2.0 * p;
        denom += 2.0 * p * (1.0 - p);
    }
    const Matrix oracle = w * w.transpose() / denom;
    CHECK((raw - oracle).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("marker order, allele coding and thread count do not change K")
{
    Rng rng(4);
    const Matrix m = hardy_weinberg_markers(40, 500, rng);
    const Matrix k = genomic_relationship(m).values();

    std::vector<Index> order(500);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Matrix permuted(40, 500);
    Matrix flipped = m;
    for (Index j = 0; j < 500; ++j) {
        permuted.col(j) = m.col(order[static_cast<std::size_t>(j)]);
        if (j % 2 == 0) {
            flipped.col(j) = 2.0 - m.col(j).array();
        }
    }
    CHECK((genomic_relationship(permuted).values() - k).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((genomic_relationship(flipped).values() - k).cwiseAbs().maxCoeff() < 1e-10);

    KinshipOptions opts;
    opts.threads = 3;
    CHECK(genomic_relationship(m, opts).values() == k);
}

TEST_CASE("monomorphic and rare markers are filtered")
{
    Matrix m(4, 3);
    m << 0, 1, 2, 0, 2, 2, 0, 0, 2, 0, 1, 2;
    const Matrix only_middle = genomic_relationship_raw(m.middleCols(1, 1));
    CHECK((genomic_relationship_raw(m) - only_middle).cwiseAbs().maxCoeff() < 1e-14);
    CHECK_THROWS_AS(genomic_relationship(Matrix::Zero(4, 3)), DataError);
}

TEST_CASE("partition of an identity kinship")
{
    const SymMatrix k(Matrix::Identity(6, 6), MatrixKind::kinship);
    const std::vector<Index> tr{0, 2, 5};
    const std::vector<Index> te{1, 3};
    const auto p = partition_kinship(k, tr, te);
    CHECK(p.train == Matrix::Identity(3, 3));
    CHECK(p.test_train == Matrix::Zero(2, 3));
    CHECK(p.test == Matrix::Identity(2, 2));
}

TEST_CASE("partition blocks match brute-force indexing and reassemble K")
{
    Rng rng(5);
    const Matrix kmat = random_kinship(9, rng);
    const SymMatrix k(kmat, MatrixKind::kinship);
    std::vector<Index> ids(9);
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::vector<Index> tr(ids.begin(), ids.begin() + 6);
    const std::vector<Index> te(ids.begin() + 6, ids.end());
    const auto p = partition_kinship(k, tr, te);
    CHECK(p.train == submatrix(kmat, tr, tr));
    CHECK(p.test_train == submatrix(kmat, te, tr));
    CHECK(p.test == submatrix(kmat, te, te));

    Matrix joined(9, 9);
    joined << p.train, p.test_train.transpose(), p.test_train, p.test;
    CHECK(joined == submatrix(kmat, ids, ids));

    const Matrix b = random_normal(6, 2, rng);
    CHECK((p.train * p.solve_train(b) - b).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(p.train_condition > 1.0);
    CHECK(std::is_sorted(p.train_eigenvalues.data(), p.train_eigenvalues.data() + 6, std::greater<>()));
}

TEST_CASE("partition errors")
{
    const SymMatrix k(Matrix::Identity(4, 4), MatrixKind::kinship);
    const std::vector<Index> a{0, 1};
    const std::vector<Index> overlap{1, 2};
    const std::vector<Index> outside{2, 4};
    const std::vector<Index> repeated{2, 2};
    CHECK_THROWS_AS(partition_kinship(k, a, overlap), DataError);
    CHECK_THROWS_AS(partition_kinship(k, a, outside), DataError);
    CHECK_THROWS_AS(partition_kinship(k, a, repeated), DataError);
}
