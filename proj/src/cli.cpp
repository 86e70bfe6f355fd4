#include "mvfbsde/cli.hpp"

#include "mvfbsde/io.hpp"
#include "mvfbsde/parallel.hpp"

#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace mvfbsde {

namespace fs = std::filesystem;

namespace {

fs::path resolve_out_dir(const std::string& flag_value, const std::string& config_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("MVFBSDE_OUT"); env && *env) return env;
    return config_value;
}

void write_run_artifacts(const fs::path& dir, const RunConfig& config, const RunResult& result) {
    fs::create_directories(dir);
    std::ofstream cfg(dir / "config.json");
    cfg << serialize_config(config);
    write_metrics(dir / "metrics.json", result.report);
    write_timings(dir / "timings.txt", result.report);
    CheckpointMeta meta{config.model_name, result.state.iteration, config.seed,
                        activation_name(result.nets.u.activation())};
    save_checkpoint(dir / "checkpoint.json", result.nets, config, meta);
    write_paths_csv(dir / "paths.csv", result.state, result.noise);
}

int cmd_solve(const std::string& config_file, std::int64_t seed_override,
              const std::string& out_override) {
    RunConfig config = load_config_file(config_file);
    if (seed_override >= 0) config.seed = static_cast<std::uint64_t>(seed_override);
    const fs::path dir = resolve_out_dir(out_override, config.output_dir);
    config.output_dir = dir.string();
    fs::create_directories(dir);

    IterationHook hook = [&](std::size_t k, const SolverState&, const TrainedNets& nets,
                             const ConvergenceReport&) {
        if (config.checkpoint_every == 0 || k % config.checkpoint_every != 0) return;
        CheckpointMeta meta{config.model_name, k, config.seed,
                            activation_name(nets.u.activation())};
        save_checkpoint(dir / ("checkpoint_iter" + std::to_string(k) + ".json"), nets, config,
                        meta);
    };

    const RunResult result = run_solver(config, nullptr, &hook);
    write_run_artifacts(dir, config, result);
    if (result.report.aborted) {
        std::cerr << "solve aborted: " << result.report.abort_reason << "\n";
        return 1;
    }
    std::cout << "solve finished: " << result.report.iterations.size() << " outer iterations"
              << (result.report.stopped_early ? " (stopped early)" : "") << ", artifacts in "
              << dir.string() << "\n";
    return 0;
}

int cmd_sample(const std::string& checkpoint_file, std::uint64_t seed, std::int64_t paths_flag,
               const std::string& out_override) {
    const Checkpoint cp = load_checkpoint(checkpoint_file);
    const ModelSpec model = build_model(cp.config);
    const TimeGrid grid(cp.config.horizon, cp.config.steps);
    const std::size_t paths =
        paths_flag > 0 ? static_cast<std::size_t>(paths_flag) : cp.config.paths;

    const NoisePair noise = sample_noise(grid, paths, 1, mix_seed(seed, 1));
    const auto xi = sample_initial_batch(model, paths, mix_seed(seed, 2));
    const SolverState state = sample_after_training(model, cp.nets, noise, xi);

    const fs::path dir = resolve_out_dir(out_override, cp.config.output_dir);
    fs::create_directories(dir);
    write_paths_csv(dir / "sample_paths.csv", state, noise);
    std::cout << "sampled " << paths << " fresh paths to "
              << (dir / "sample_paths.csv").string() << "\n";
    return 0;
}

int cmd_validate(const std::string& checkpoint_file, const std::string& expect_model,
                 const std::string& out_override, std::size_t m_idio,
                 std::size_t common_paths) {
    const Checkpoint cp = load_checkpoint(checkpoint_file, expect_model);
    const ModelSpec model = build_model(cp.config);
    const TimeGrid grid(cp.config.horizon, cp.config.steps);

    // Reconstruct the exact training noise and initial cohort from the
    // embedded seed.
    const NoisePair noise = sample_noise(grid, cp.config.paths, 1, mix_seed(cp.config.seed, 1));
    const auto xi = sample_initial_batch(model, cp.config.paths, mix_seed(cp.config.seed, 2));
    const SolverState approx = sample_after_training(model, cp.nets, noise, xi);

    const fs::path dir = resolve_out_dir(out_override, cp.config.output_dir);
    fs::create_directories(dir);

    if (cp.config.model_name == "systemic_risk") {
        SystemicRiskParams params = cp.config.systemic;
        params.horizon = cp.config.horizon;
        SystemicRiskAnalytic analytic(params, grid);
        const SolverState reference = analytic.evaluate(xi, noise);
        const ErrorReport report = compare_to_reference(approx, reference);

        // Which Z candidate does the trained integrand track?
        double sq_printed = 0.0, sq_decomposed = 0.0;
        for (std::size_t i = 0; i < approx.z.paths(); ++i)
            for (std::size_t j = 0; j < approx.z.nodes(); ++j) {
                const double dp = approx.z.at(i, j) - analytic.z_printed(j);
                const double dd = approx.z.at(i, j) - analytic.z_decomposed(j);
                sq_printed += dp * dp;
                sq_decomposed += dd * dd;
            }
        const double n = static_cast<double>(approx.z.paths() * approx.z.nodes());
        const double rmse_printed = std::sqrt(sq_printed / n);
        const double rmse_decomposed = std::sqrt(sq_decomposed / n);
        char extra[512];
        std::snprintf(extra, sizeof(extra),
                      "{\"z_candidates\": {\"rmse_vs_sigma_eta\": %.9g, "
                      "\"rmse_vs_sigma_sqrt1mrho2_eta\": %.9g, \"closer\": \"%s\"}}",
                      rmse_printed, rmse_decomposed,
                      rmse_decomposed <= rmse_printed ? "sigma_sqrt1mrho2_eta" : "sigma_eta");
        write_error_report(dir, report, grid, extra);
        std::cout << "trained Z tracks "
                  << (rmse_decomposed <= rmse_printed ? "sigma*sqrt(1-rho^2)*eta(t)"
                                                      : "sigma*eta(t)")
                  << " more closely (rmse " << std::min(rmse_decomposed, rmse_printed) << " vs "
                  << std::max(rmse_decomposed, rmse_printed) << ")\n";
    }

    if (common_paths > 0) {
        // Nested Monte Carlo consistency of the trained statistic net on a
        // few training common paths, bootstrap-resampling the training
        // cohort as initial conditions.
        std::ofstream out(dir / "oracle_report.txt");
        double worst = 0.0;
        for (std::size_t p = 0; p < common_paths; ++p) {
            std::vector<double> w0(grid.nodes());
            for (std::size_t j = 0; j < grid.nodes(); ++j) w0[j] = noise.w0.at(p, j);
            NestedOracleSpec spec;
            spec.m_idio = m_idio;
            spec.seed = mix_seed(cp.config.seed, 7000 + p);
            spec.cohort = std::vector<double>(xi.begin(), xi.end());
            const auto oracle = nested_conditional_oracle(model, cp.nets, w0, grid, spec);

            PathBatch w0_batch("W0", 1, grid);
            for (std::size_t j = 0; j < grid.nodes(); ++j) w0_batch.at(0, j) = w0[j];
            const PathBatch s_net_path = eval_statistic_paths(cp.nets.s, w0_batch, grid);
            double dev = 0.0;
            for (std::size_t j = 0; j < grid.nodes(); ++j)
                dev = std::max(dev, std::abs(oracle[j] - s_net_path.at(0, j)));
            out << "common path " << p << ": max |S_net - nested| = " << dev << "\n";
            worst = std::max(worst, dev);
        }
        out << "worst deviation: " << worst << "\n";
        std::cout << "nested-oracle worst deviation over " << common_paths
                  << " common paths: " << worst << "\n";
    }
    return 0;
}

int cmd_report(const std::string& run_dir) {
    const fs::path dir = run_dir;
    const ConvergenceReport report = load_metrics(dir / "metrics.json");

    std::FILE* f = std::fopen((dir / "summary.csv").string().c_str(), "w");
    if (!f) throw IoError("cannot write summary.csv in " + dir.string());
    std::fputs("iteration,dist_x,dist_y,dist_z,dist_z0,loss_s,loss_y,loss_z0,clamps\n", f);
    std::printf("%10s %12s %12s %12s %12s\n", "iteration", "dist_x", "dist_y", "dist_z",
                "dist_z0");
    for (const auto& rec : report.iterations) {
        std::fprintf(f, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%" PRIu64 "\n", rec.iteration,
                     rec.dist_x, rec.dist_y, rec.dist_z, rec.dist_z0,
                     rec.loss_s.empty() ? 0.0 : rec.loss_s.back(),
                     rec.loss_y.empty() ? 0.0 : rec.loss_y.back(),
                     rec.loss_z0.empty() ? 0.0 : rec.loss_z0.back(),
                     rec.clamp_picard + rec.clamp_backward + rec.clamp_z0);
        std::printf("%10zu %12.5g %12.5g %12.5g %12.5g\n", rec.iteration, rec.dist_x, rec.dist_y,
                    rec.dist_z, rec.dist_z0);
    }
    std::fclose(f);
    if (report.aborted) std::printf("run aborted: %s\n", report.abort_reason.c_str());
    if (report.stopped_early) std::printf("stopped early (all distances below tolerance)\n");
    return 0;
}

} // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"Picard-iteration + elicitability solver for McKean-Vlasov FBSDEs "
                 "with common noise"};
    app.require_subcommand(1);

    std::string config_file, checkpoint_file, out_dir, expect_model, run_dir;
    std::int64_t seed_override = -1, paths_flag = -1;
    std::uint64_t sample_seed = 1;
    std::size_t m_idio = 10000, common_paths = 3, threads = 0;

    auto* solve = app.add_subcommand("solve", "run the outer Picard loop end to end");
    solve->add_option("--config", config_file, "config JSON file")->required();
    solve->add_option("--seed", seed_override, "override sampling.seed");
    solve->add_option("--out", out_dir, "override output directory");
    solve->add_option("--threads", threads, "worker threads (0 = auto)");

    auto* sample = app.add_subcommand("sample", "simulate fresh paths from a checkpoint");
    sample->add_option("--checkpoint", checkpoint_file, "checkpoint file")->required();
    sample->add_option("--seed", sample_seed, "fresh-noise seed")->required();
    sample->add_option("--paths", paths_flag, "number of fresh paths");
    sample->add_option("--out", out_dir, "output directory");
    sample->add_option("--threads", threads, "worker threads (0 = auto)");

    auto* validate = app.add_subcommand("validate", "compare a checkpoint against references");
    validate->add_option("--checkpoint", checkpoint_file, "checkpoint file")->required();
    validate->add_option("--model", expect_model, "expected model name");
    validate->add_option("--out", out_dir, "output directory");
    validate->add_option("--midio", m_idio, "nested-oracle ensemble size");
    validate->add_option("--common-paths", common_paths,
                         "number of common paths for the nested oracle (0 = skip)");
    validate->add_option("--threads", threads, "worker threads (0 = auto)");

    auto* report = app.add_subcommand("report", "regenerate tables from saved artifacts");
    report->add_option("--run", run_dir, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    if (threads > 0) set_worker_count(threads);

    try {
        if (solve->parsed()) return cmd_solve(config_file, seed_override, out_dir);
        if (sample->parsed()) return cmd_sample(checkpoint_file, sample_seed, paths_flag, out_dir);
        if (validate->parsed())
            return cmd_validate(checkpoint_file, expect_model, out_dir, m_idio, common_paths);
        if (report->parsed()) return cmd_report(run_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

} // namespace mvfbsde
