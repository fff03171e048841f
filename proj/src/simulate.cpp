#include "glf/simulate.hpp"

#include "glf/error.hpp"
#include "glf/kinship.hpp"

#include <spdlog/fmt/fmt.h>

#include <cmath>
#include <random>
#include <string>

namespace glf {

void SimConfig::validate() const
{
    if (!seed) {
        throw ConfigError("simulation: seed is required");
    }
    if (g < 3 || s < 2 || r < 1 || tau < 2) {
        throw ConfigError(fmt::format("simulation: need g >= 3, s >= 2, r >= 1, tau >= 2 (got {}, {}, {}, {})",
                                      g, s, r, tau));
    }
    if (!identity_kinship && p < 1) {
        throw ConfigError("simulation: marker count must be positive");
    }
    if (n_factors < 1 || n_factors > s) {
        throw ConfigError("simulation: n_factors must lie in [1, s]");
    }
    if (!(h2_secondary > 0.0 && h2_secondary <= 1.0)) {
        throw ConfigError("simulation: h2_secondary must lie in (0, 1]");
    }
    if (!(h2_focal >= 0.0 && h2_focal <= 1.0)) {
        throw ConfigError("simulation: h2_focal must lie in [0, 1]");
    }
    if (!(communality >= 0.0 && communality < 1.0)) {
        throw ConfigError("simulation: communality must lie in [0, 1)");
    }
    if (!(persistence >= -1.0 && persistence <= 1.0) || !(std::abs(residual_ar) < 1.0)) {
        throw ConfigError("simulation: persistence in [-1, 1] and |residual_ar| < 1 required");
    }
    if (static_cast<Index>(focal_factor_corr.size()) != n_factors) {
        throw ConfigError("simulation: one focal correlation per factor required");
    }
    double explained = 0.0;
    for (double rho : focal_factor_corr) {
        explained += rho * rho;
    }
    if (explained > 1.0 + 1e-12) {
        throw ConfigError("simulation: focal/factor genetic correlations imply a covariance that is not PSD");
    }
    if (!block_starts.empty()) {
        if (static_cast<Index>(block_starts.size()) != n_factors - 1) {
            throw ConfigError("simulation: block_starts needs n_factors - 1 entries");
        }
        Index prev = 0;
        for (Index b : block_starts) {
            if (b <= prev || b >= s) {
                throw ConfigError("simulation: block_starts must increase strictly inside (0, s)");
            }
            prev = b;
        }
    }
    if (!loadings.empty()) {
        if (static_cast<Index>(loadings.size()) != tau) {
            throw ConfigError("simulation: explicit loadings need one matrix per timepoint");
        }
        for (const auto& l : loadings) {
            if (l.rows() != s || l.cols() != n_factors) {
                throw ConfigError("simulation: explicit loadings must be s x n_factors");
            }
            if ((l.rowwise().squaredNorm().array() >= 1.0).any()) {
                throw ConfigError("simulation: explicit loadings leave no positive uniqueness");
            }
        }
    }
    for (const auto& [tp, perm] : label_switches) {
        if (tp < 0 || tp >= tau || perm.size() != n_factors) {
            throw ConfigError("simulation: label switch outside the timepoints or of the wrong size");
        }
    }
}

Matrix SimConfig::base_loadings() const
{
    std::vector<Index> starts{0};
    if (block_starts.empty()) {
        for (Index k = 1; k < n_factors; ++k) {
            starts.push_back(k * s / n_factors);
        }
    } else {
        starts.insert(starts.end(), block_starts.begin(), block_starts.end());
    }
    starts.push_back(s);
    Matrix l = Matrix::Zero(s, n_factors);
    const double value = std::sqrt(communality);
    for (Index k = 0; k < n_factors; ++k) {
        for (Index j = starts[static_cast<std::size_t>(k)]; j < starts[static_cast<std::size_t>(k + 1)]; ++j) {
            l(j, k) = value;
        }
    }
    return l;
}

namespace {

class Sampler {
public:
    explicit Sampler(std::uint64_t seed) : engine_(seed) {}

    Matrix normal(Index rows, Index cols)
    {
        Matrix out(rows, cols);
        for (Index j = 0; j < cols; ++j) {
            for (Index i = 0; i < rows; ++i) {
                out(i, j) = dist_(engine_);
            }
        }
        return out;
    }

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }

    int binomial2(double freq) { return std::binomial_distribution<int>(2, freq)(engine_); }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> dist_;
};

std::string number_label(double v)
{
    return fmt::format("{}", v);
}

}  // namespace

SimResult simulate_trial(const SimConfig& config)
{
    config.validate();
    Sampler rng(*config.seed);
    const Index g = config.g;
    const Index s = config.s;
    const Index r = config.r;
    const Index tau = config.tau;
    const Index m = config.n_factors;

    SimResult out;
    auto& truth = out.truth;
    auto& data = out.data;

    // Markers and kinship.
    if (config.identity_kinship) {
        truth.kinship = Matrix::Identity(g, g);
    } else {
        data.markers.resize(g, config.p);
        for (Index k = 0; k < config.p; ++k) {
            const double freq = rng.uniform(0.05, 0.5);
            for (Index c = 0; c < g; ++c) {
                data.markers(c, k) = rng.binomial2(freq);
            }
        }
        truth.kinship = genomic_relationship(data.markers).values();
    }
    const Matrix lk = linalg::RobustCholesky(truth.kinship, "simulated kinship").matrix_l();
    auto draw_genetic = [&](Index cols) -> Matrix { return lk * rng.normal(g, cols); };

    // Genetic values.
    const Matrix xi_base = draw_genetic(m);
    const double a = config.persistence;
    const double innov = std::sqrt(std::max(0.0, 1.0 - a * a));
    truth.permutations.assign(static_cast<std::size_t>(tau), SignedPermutation::identity(m));
    for (const auto& [tp, perm] : config.label_switches) {
        truth.permutations[static_cast<std::size_t>(tp)] = perm;
    }
    const Matrix base_l = config.base_loadings();
    for (Index l = 0; l < tau; ++l) {
        const Matrix lambda = config.loadings.empty() ? base_l : config.loadings[static_cast<std::size_t>(l)];
        const Vector psi = (1.0 - lambda.rowwise().squaredNorm().array()).matrix();
        if (l == 0) {
            truth.uniquenesses = psi;
        }
        const Matrix xi = a * xi_base + innov * draw_genetic(m);
        Matrix unique = draw_genetic(s);
        for (Index j = 0; j < s; ++j) {
            unique.col(j) *= std::sqrt(psi(j));
        }
        truth.genetic_secondary.push_back(xi * lambda.transpose() + unique);
        truth.sigma_g.push_back(lambda * lambda.transpose() + Matrix(psi.asDiagonal()));
        const Matrix p_mat = truth.permutations[static_cast<std::size_t>(l)].to_matrix();
        truth.loadings.push_back(lambda * p_mat);
        truth.factor_scores.push_back(xi * p_mat);
    }
    double explained = 0.0;
    Vector focal_g = Vector::Zero(g);
    for (Index k = 0; k < m; ++k) {
        const double rho = config.focal_factor_corr[static_cast<std::size_t>(k)];
        focal_g += rho * xi_base.col(k);
        explained += rho * rho;
    }
    focal_g += std::sqrt(std::max(0.0, 1.0 - explained)) * draw_genetic(1).col(0);
    truth.focal_sigma_g = config.h2_focal;
    truth.focal_sigma_e = static_cast<double>(r) * (1.0 - config.h2_focal);
    truth.genetic_focal = std::sqrt(truth.focal_sigma_g) * focal_g;

    // Residuals: AR(1) across adjacent traits, sized for the target H^2.
    const double sigma_e2 = static_cast<double>(r) * (1.0 - config.h2_secondary) / config.h2_secondary;
    truth.sigma_e.resize(s, s);
    for (Index i = 0; i < s; ++i) {
        for (Index j = 0; j < s; ++j) {
            truth.sigma_e(i, j) = sigma_e2 * std::pow(config.residual_ar, static_cast<double>(std::abs(i - j)));
        }
    }
    Matrix le = Matrix::Zero(s, s);
    if (sigma_e2 > 0.0) {
        le = Eigen::LLT<Matrix>(truth.sigma_e).matrixL();
    }

    // Design and plot data, genotype-major.
    std::vector<std::string> genotype_ids;
    for (Index c = 0; c < g; ++c) {
        genotype_ids.push_back(fmt::format("G{:04d}", c + 1));
    }
    std::vector<PlotAssignment> plots;
    for (Index c = 0; c < g; ++c) {
        for (Index q = 0; q < r; ++q) {
            plots.push_back({c, q});
            data.plot_ids.push_back(fmt::format("P{:05d}", c * r + q + 1));
        }
    }
    std::vector<double> days;
    std::vector<std::string> tp_labels;
    for (Index l = 0; l < tau; ++l) {
        days.push_back(config.day_start + config.day_step * static_cast<double>(l));
        tp_labels.push_back(fmt::format("T{:02d}", l + 1));
    }
    for (Index j = 0; j < s; ++j) {
        data.trait_labels.push_back(number_label(config.wavelength_start + config.wavelength_step * static_cast<double>(j)));
    }
    data.design = TrialDesign(std::move(genotype_ids), plots, std::move(days), std::move(tp_labels),
                              default_stage_labels(tau));
    const Index n = g * r;
    for (Index l = 0; l < tau; ++l) {
        Matrix y = rng.normal(n, s) * le.transpose();
        const Matrix& gl = truth.genetic_secondary[static_cast<std::size_t>(l)];
        for (Index i = 0; i < n; ++i) {
            y.row(i) += gl.row(plots[static_cast<std::size_t>(i)].genotype);
        }
        data.secondary.push_back(std::move(y));
    }
    const Vector focal_noise = rng.normal(n, 1).col(0) * std::sqrt(truth.focal_sigma_e);
    data.focal.resize(n);
    for (Index i = 0; i < n; ++i) {
        data.focal(i) = 5.0 + truth.genetic_focal(plots[static_cast<std::size_t>(i)].genotype) + focal_noise(i);
    }
    if (config.identity_kinship) {
        data.kinship = truth.kinship;
    }
    data.validate();
    return out;
}

SimConfig preset_cimmyt_like()
{
    SimConfig c;
    c.g = 1033;
    c.s = 62;
    c.r = 3;
    c.tau = 10;
    c.p = 8519;
    c.seed = 20240611;
    c.n_factors = 2;
    c.wavelength_start = 385.0;
    c.wavelength_step = 7.5;
    c.block_starts = {42};  // first band at or above 700 nm
    c.communality = 0.8;
    c.h2_secondary = 0.7;
    c.h2_focal = 0.61;
    c.focal_factor_corr = {0.5, 0.3};
    const SignedPermutation swap({1, 0}, {1, 1});
    c.label_switches = {{8, swap}, {9, swap}};
    return c;
}

}  // namespace glf
