#include "glf/error.hpp"
#include "glf/io.hpp"
#include "glf/pipeline.hpp"
#include "glf/simulate.hpp"

#include <CLI11.hpp>
#include <spdlog/fmt/fmt.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <optional>

namespace fs = std::filesystem;
using namespace glf;

namespace {

struct GlobalOptions {
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string log_level = "info";
};

int cmd_simulate(const GlobalOptions& g, const fs::path& config_file, const fs::path& out)
{
    const auto cfg = KeyValueConfig::load(config_file);
    SimConfig sim = sim_config_from(cfg);
    cfg.reject_unknown();
    if (g.seed) {
        sim.seed = *g.seed;
    }
    const auto result = simulate_trial(sim);
    write_dataset(result.data, out);

    const auto& truth = result.truth;
    const auto& ids = result.data.design.genotype_ids();
    fs::create_directories(out / "truth");
    {
        std::FILE* f = std::fopen((out / "truth" / "genetic_focal.csv").c_str(), "w");
        if (f == nullptr) {
            throw DataError("cannot write truth files under " + out.string());
        }
        std::fputs("genotype,genetic_value\n", f);
        for (std::size_t c = 0; c < ids.size(); ++c) {
            std::fputs(fmt::format("{},{}\n", ids[c], truth.genetic_focal(static_cast<Index>(c))).c_str(), f);
        }
        std::fclose(f);
    }
    {
        std::FILE* f = std::fopen((out / "truth" / "loadings.csv").c_str(), "w");
        if (f == nullptr) {
            throw DataError("cannot write truth files under " + out.string());
        }
        std::fputs("timepoint,trait,factor,loading,switched\n", f);
        const auto& labels = result.data.design.timepoint_labels();
        for (std::size_t l = 0; l < truth.loadings.size(); ++l) {
            const Matrix& lam = truth.loadings[l];
            for (Index j = 0; j < lam.rows(); ++j) {
                for (Index k = 0; k < lam.cols(); ++k) {
                    std::fputs(fmt::format("{},{},{},{},{}\n", labels[l], result.data.trait_labels[static_cast<std::size_t>(j)],
                                           k + 1, lam(j, k), truth.permutations[l].is_identity() ? 0 : 1)
                                   .c_str(),
                               f);
                }
            }
        }
        std::fclose(f);
    }
    fmt::print("simulated {} genotypes x {} replicates, {} traits, {} timepoints -> {}\n",
               result.data.design.n_genotypes(), sim.r, sim.s, sim.tau, out.string());
    return 0;
}

int cmd_fit(const fs::path& data_dir, const std::string& target_label,
            const std::optional<fs::path>& out)
{
    const TrialDataset data = read_dataset(data_dir);
    const Index target = resolve_timepoint(data.design, target_label);
    const auto fits = fit_timepoint_factors(data, target);
    const auto proj = fits.projections(true);
    const ScoreSeries scores = apply_projections(data, proj, true);
    const Vector focal_means = genotype_blues(Matrix(data.focal), data.design).col(0);

    const Index m = fits.common_m;
    Matrix candidates(data.design.n_genotypes(), data.design.n_timepoints() * m);
    for (Index l = 0; l < data.design.n_timepoints(); ++l) {
        candidates.middleCols(l * m, m) = scores.genotype_scores[static_cast<std::size_t>(l)];
    }
    SelectionOptions sel_opts;
    const auto sel = best_subset(focal_means, candidates, sel_opts);

    const auto& labels = data.design.timepoint_labels();
    fmt::print("target timepoint: {}\ncommon m*: {}\n", labels[static_cast<std::size_t>(target)], m);
    fmt::print("{:<12} {:<14} {:>4}  {:<16} {}\n", "timepoint", "stage", "m*", "permutation", "selected");
    for (Index l = 0; l < data.design.n_timepoints(); ++l) {
        const auto& perm = fits.alignment.permutations[static_cast<std::size_t>(l)];
        std::string p;
        for (Index k = 0; k < perm.size(); ++k) {
            p += fmt::format("{}{}{}", k ? " " : "", perm.signs()[static_cast<std::size_t>(k)] < 0 ? "-" : "+",
                             perm.columns()[static_cast<std::size_t>(k)] + 1);
        }
        std::string chosen;
        for (Index c : sel.selected) {
            if (c / m == l) {
                chosen += fmt::format("{}f{}", chosen.empty() ? "" : ",", c % m + 1);
            }
        }
        fmt::print("{:<12} {:<14} {:>4}  {:<16} {}\n", labels[static_cast<std::size_t>(l)],
                   to_string(data.design.stages()[static_cast<std::size_t>(l)]),
                   fits.dimensions[static_cast<std::size_t>(l)].m_star, p, chosen.empty() ? "-" : chosen);
    }

    if (out) {
        CvReport rep;
        rep.n_replicates = 1;
        for (Index l = 0; l < data.design.n_timepoints(); ++l) {
            const auto lu = static_cast<std::size_t>(l);
            for (Index k = 0; k < m; ++k) {
                const Vector sc = scores.genotype_scores[lu].col(k);
                const Vector a = sc.array() - sc.mean();
                const Vector b = focal_means.array() - focal_means.mean();
                rep.factor_correlations.push_back(
                    {0, labels[lu], k, fits.dimensions[lu].m_star, m, a.dot(b) / (a.norm() * b.norm())});
                rep.selection.push_back({0, ModelKind::procrustes_glf, StageSubset::all, labels[lu], k,
                                         std::binary_search(sel.selected.begin(), sel.selected.end(), l * m + k)});
                for (Index j = 0; j < data.n_traits(); ++j) {
                    rep.loadings.push_back({0, labels[lu], data.trait_labels[static_cast<std::size_t>(j)], k,
                                            fits.varimax_loadings[lu](j, k), fits.alignment.aligned[lu](j, k)});
                }
            }
        }
        emit_reports(rep, *out);
        std::vector<std::string> header{"genotype"};
        Matrix flat(data.design.n_genotypes(), data.design.n_timepoints() * m);
        for (Index l = 0; l < data.design.n_timepoints(); ++l) {
            for (Index k = 0; k < m; ++k) {
                header.push_back(fmt::format("{}_f{}", labels[static_cast<std::size_t>(l)], k + 1));
            }
        }
        flat = candidates;
        std::FILE* f = std::fopen((*out / "scores.csv").c_str(), "w");
        if (f == nullptr) {
            throw DataError("cannot write " + (*out / "scores.csv").string());
        }
        std::fputs(fmt::format("{}\n", fmt::join(header, ",")).c_str(), f);
        for (Index c = 0; c < flat.rows(); ++c) {
            std::string line = data.design.genotype_ids()[static_cast<std::size_t>(c)];
            for (Index j = 0; j < flat.cols(); ++j) {
                line += fmt::format(",{}", flat(c, j));
            }
            line += '\n';
            std::fputs(line.c_str(), f);
        }
        std::fclose(f);
        fmt::print("wrote {}\n", out->string());
    }
    return 0;
}

void print_summary(const std::vector<PaSummary>& summary)
{
    fmt::print("{:<20} {:<4} {:<20} {:>4} {:>5} {:>8} {:>8}\n", "model", "scen", "stage", "n", "fail", "mean",
               "median");
    for (const auto& s : summary) {
        fmt::print("{:<20} {:<4} {:<20} {:>4} {:>5} {:>8.4f} {:>8.4f}\n", to_string(s.model), to_string(s.scenario),
                   to_string(s.stage), s.n, s.failures, s.mean, s.median);
    }
}

int cmd_cv(const GlobalOptions& g, const fs::path& data_dir, const fs::path& plan_file, const fs::path& out)
{
    CvPlan plan = cv_plan_from(KeyValueConfig::load(plan_file));
    if (g.seed) {
        plan.seed = *g.seed;
    }
    if (g.threads) {
        plan.threads = *g.threads;
    }
    plan.validate();
    const TrialDataset data = read_dataset(data_dir);
    const CvReport report = run_cv(data, plan);
    emit_reports(report, out);
    const auto summary = summarize(report);
    write_summary(summary, out / "summary.csv");
    print_summary(summary);
    return 0;
}

int cmd_report(const fs::path& in, const fs::path& out)
{
    const CvReport report = read_reports(in);
    fs::create_directories(out);
    const auto summary = summarize(report);
    write_summary(summary, out / "summary.csv");
    print_summary(summary);
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    auto logger = spdlog::stderr_color_mt("glfblup");
    spdlog::set_default_logger(logger);

    CLI::App app{"Genomic prediction with factor-analytic secondary phenotypes"};
    app.require_subcommand(1);
    GlobalOptions g;
    std::uint64_t seed_value = 0;
    int threads_value = 1;
    auto* seed_opt = app.add_option("--seed", seed_value, "Random seed (overrides config files)");
    auto* threads_opt =
        app.add_option("--threads", threads_value, "Worker threads (overrides the plan)")->check(CLI::PositiveNumber);
    app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));

    fs::path sim_config;
    fs::path sim_out;
    auto* sim = app.add_subcommand("simulate", "Write a synthetic trial dataset");
    sim->add_option("--config", sim_config, "Key-value simulation config")->required();
    sim->add_option("--out", sim_out, "Output directory")->required();

    fs::path fit_data;
    std::string fit_target = "auto-heading";
    std::optional<fs::path> fit_out;
    auto* fit = app.add_subcommand("fit", "Fit per-timepoint factor models on a full dataset");
    fit->add_option("--data", fit_data, "Dataset directory")->required();
    fit->add_option("--target-timepoint", fit_target, "Alignment target label or auto-heading");
    fit->add_option("--out", fit_out, "Optional output directory for loadings and scores");

    fs::path cv_data;
    fs::path cv_plan;
    fs::path cv_out;
    auto* cv = app.add_subcommand("cv", "Cross-validate the model suite");
    cv->add_option("--data", cv_data, "Dataset directory")->required();
    cv->add_option("--plan", cv_plan, "Key-value CV plan")->required();
    cv->add_option("--out", cv_out, "Report directory")->required();

    fs::path rep_in;
    fs::path rep_out;
    auto* report = app.add_subcommand("report", "Summarise an existing CV report directory");
    report->add_option("--in", rep_in, "Report directory written by cv")->required();
    report->add_option("--out", rep_out, "Summary output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    if (*seed_opt) {
        g.seed = seed_value;
    }
    if (*threads_opt) {
        g.threads = threads_value;
    }
    spdlog::set_level(spdlog::level::from_str(g.log_level));

    try {
        if (*sim) {
            return cmd_simulate(g, sim_config, sim_out);
        }
        if (*fit) {
            return cmd_fit(fit_data, fit_target, fit_out);
        }
        if (*cv) {
            return cmd_cv(g, cv_data, cv_plan, cv_out);
        }
        return cmd_report(rep_in, rep_out);
    } catch (const ConfigError& e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const DataError& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const NumericalError& e) {
        spdlog::error("{}", e.what());
        return 3;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 3;
    }
}
