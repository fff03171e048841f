#include "glf/error.hpp"
#include "glf/procrustes.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <numbers>

using namespace glf;
using namespace glf::testing;

namespace {

SignedPermutation random_signed_permutation(Index m, Rng& rng)
{
    std::vector<Index> cols(static_cast<std::size_t>(m));
    std::iota(cols.begin(), cols.end(), 0);
    std::shuffle(cols.begin(), cols.end(), rng);
    std::bernoulli_distribution coin(0.5);
    std::vector<int> signs;
    for (Index k = 0; k < m; ++k) {
        signs.push_back(coin(rng) ? 1 : -1);
    }
    return SignedPermutation(cols, signs);
}

/// Best assignment by enumerating every permutation.
double brute_force_assignment(const Matrix& w)
{
    std::vector<Index> perm(static_cast<std::size_t>(w.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    double best = -std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (Index i = 0; i < w.rows(); ++i) {
            total += w(i, perm[static_cast<std::size_t>(i)]);
        }
        best = std::max(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace

TEST_CASE("signed permutation basics")
{
    const SignedPermutation p({1, 0, 2}, {1, -1, 1});
    const Matrix pm = p.to_matrix();
    CHECK((pm.transpose() * pm - Matrix::Identity(3, 3)).isZero(0.0));
    CHECK(p.transpose().to_matrix() == pm.transpose());
    CHECK_FALSE(p.is_identity());
    CHECK(SignedPermutation::identity(3).is_identity());
    CHECK_THROWS_AS(SignedPermutation({0, 0}, {1, 1}), DataError);
    CHECK_THROWS_AS(SignedPermutation({0, 1}, {1, 2}), DataError);
    CHECK_THROWS_AS(SignedPermutation({0, 2}, {1, 1}), DataError);
}

TEST_CASE("procrustes examples")
{
    Rng rng(1);
    const Matrix target = random_normal(10, 3, rng);
    CHECK((orthogonal_procrustes(target, target).rotation - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);

    const Matrix q = random_orthogonal(3, rng);
    const Matrix source = target * q.transpose();
    CHECK((orthogonal_procrustes(source, target).rotation - q).cwiseAbs().maxCoeff() < 1e-8);

    const Matrix col = random_normal(6, 1, rng);
    CHECK(orthogonal_procrustes(-col, col).rotation(0, 0) == doctest::Approx(-1.0));

    const auto degenerate = orthogonal_procrustes(Matrix::Zero(5, 2), random_normal(5, 2, rng));
    CHECK(degenerate.rank_deficient);
}

TEST_CASE("procrustes rotation is globally optimal")
{
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix s = random_normal(8, 3, rng);
        const Matrix t = random_normal(8, 3, rng);
        const Matrix rot = orthogonal_procrustes(s, t).rotation;
        CHECK((rot.transpose() * rot - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
        const double best = (s * rot - t).norm();
        for (int k = 0; k < 50; ++k) {
            CHECK(best <= (s * random_orthogonal(3, rng) - t).norm() + 1e-12);
        }
    }
}

TEST_CASE("hungarian assignment matches enumeration")
{
    Rng rng(3);
    for (Index m = 1; m <= 6; ++m) {
        for (int trial = 0; trial < 30; ++trial) {
            const Matrix w = random_normal(m, m, rng);
            const auto assign = max_weight_assignment(w);
            std::vector<Index> sorted = assign;
            std::sort(sorted.begin(), sorted.end());
            for (Index k = 0; k < m; ++k) {
                CHECK(sorted[static_cast<std::size_t>(k)] == k);
            }
            double total = 0.0;
            for (Index i = 0; i < m; ++i) {
                total += w(i, assign[static_cast<std::size_t>(i)]);
            }
            CHECK(total == doctest::Approx(brute_force_assignment(w)).epsilon(1e-12));
        }
    }
}

TEST_CASE("smoothing examples")
{
    Rng rng(4);
    const SignedPermutation p = random_signed_permutation(4, rng);
    CHECK(smooth_to_signed_permutation(p.to_matrix()) == p);

    const double th = std::numbers::pi / 6.0;
    Matrix rot(2, 2);
    rot << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    const SignedPermutation got = smooth_to_signed_permutation(rot);
    CHECK(got.is_identity());
    // Exhaustive: the identity carries the largest sum of |T| over all 8 candidates.
    double best = -1.0;
    Matrix best_p;
    for (const Matrix& cand : all_signed_permutations(2)) {
        double w = 0.0;
        for (Index i = 0; i < 2; ++i) {
            for (Index j = 0; j < 2; ++j) {
                if (cand(i, j) != 0.0 && cand(i, j) * rot(i, j) > 0.0) {
                    w += std::abs(rot(i, j));
                } else if (cand(i, j) != 0.0) {
                    w -= std::abs(rot(i, j));
                }
            }
        }
        if (w > best) {
            best = w;
            best_p = cand;
        }
    }
    CHECK(best_p == got.to_matrix());

    Matrix zero_row = Matrix::Identity(3, 3);
    zero_row.row(1).setZero();
    CHECK_THROWS_AS(smooth_to_signed_permutation(zero_row), NumericalError);
}

TEST_CASE("noisy signed permutations are recovered")
{
    Rng rng(5);
    std::uniform_real_distribution<double> noise(-0.1, 0.1);
    int hits = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const SignedPermutation p0 = random_signed_permutation(4, rng);
        Matrix t = p0.to_matrix();
        for (Index i = 0; i < 4; ++i) {
            for (Index j = 0; j < 4; ++j) {
                t(i, j) += noise(rng);
            }
        }
        hits += smooth_to_signed_permutation(t) == p0 ? 1 : 0;
    }
    CHECK(hits >= 99);
}

TEST_CASE("hungarian smoothing dominates greedy row argmax")
{
    Rng rng(6);
    for (int trial = 0; trial < 1000; ++trial) {
        const Matrix t = random_orthogonal(4, rng);
        const SignedPermutation p = smooth_to_signed_permutation(t);
        double hung = 0.0;
        for (Index i = 0; i < 4; ++i) {
            hung += std::abs(t(i, p.columns()[static_cast<std::size_t>(i)]));
        }
        std::vector<bool> used(4, false);
        double greedy = 0.0;
        for (Index i = 0; i < 4; ++i) {
            Index best = -1;
            for (Index j = 0; j < 4; ++j) {
                if (!used[static_cast<std::size_t>(j)] && (best < 0 || std::abs(t(i, j)) > std::abs(t(i, best)))) {
                    best = j;
                }
            }
            used[static_cast<std::size_t>(best)] = true;
            greedy += std::abs(t(i, best));
        }
        CHECK(hung >= greedy - 1e-12);
    }
}

TEST_CASE("align series examples")
{
    Rng rng(7);
    const Matrix target = random_normal(12, 3, rng);

    const auto same = align_series(std::vector<Matrix>(4, target), 2);
    for (const auto& p : same.permutations) {
        CHECK(p.is_identity());
    }

    std::vector<Matrix> series;
    std::vector<SignedPermutation> planted;
    for (int l = 0; l < 5; ++l) {
        planted.push_back(l == 1 ? SignedPermutation::identity(3) : random_signed_permutation(3, rng));
        series.push_back(target * planted.back().to_matrix().transpose());
    }
    series[1] = target;
    const auto aligned = align_series(series, 1);
    CHECK(aligned.target == 1);
    for (std::size_t l = 0; l < series.size(); ++l) {
        CHECK(aligned.aligned[l] == target);
        CHECK(aligned.permutations[l].to_matrix() == planted[l].to_matrix());
        // Communalities and Lambda Lambda^T are unchanged.
        CHECK((aligned.aligned[l] * aligned.aligned[l].transpose() - series[l] * series[l].transpose())
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
        CHECK((aligned.aligned[l] - target).norm() <= (series[l] - target).norm() + 1e-12);
    }

    // Re-aligning an aligned series changes nothing.
    const auto again = align_series(aligned.aligned, 1);
    for (const auto& p : again.permutations) {
        CHECK(p.is_identity());
    }

    CHECK_THROWS_AS(align_series(std::vector<Matrix>{target, target.leftCols(2)}, 0), DataError);
    CHECK_THROWS_AS(align_series(std::vector<Matrix>{target}, 3), DataError);
}

TEST_CASE("drifting series with one label switch")
{
    Rng rng(8);
    Matrix base = Matrix::Zero(20, 2);
    base.topRows(10).col(0).setConstant(0.8);
    base.bottomRows(10).col(1).setConstant(0.7);
    const SignedPermutation swap({1, 0}, {1, 1});
    std::vector<Matrix> series;
    for (int l = 0; l < 6; ++l) {
        Matrix lam = base + random_normal(20, 2, rng) * 0.05;
        if (l == 4) {
            lam = lam * swap.to_matrix();
        }
        series.push_back(lam);
    }
    const auto aligned = align_series(series, 2);
    for (std::size_t l = 0; l < series.size(); ++l) {
        CHECK(aligned.permutations[l].is_identity() == (l != 4));
    }
}
