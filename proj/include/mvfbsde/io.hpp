#pragma once

#include "mvfbsde/orchestrator.hpp"
#include "mvfbsde/validation.hpp"

#include <filesystem>
#include <string>

namespace mvfbsde {

/// Strict config parsing: unknown or misspelled keys anywhere in the
/// document are rejected, missing required keys and out-of-range values
/// raise ConfigError naming the offending key. Omitted optional keys take
/// the benchmark defaults (M=10000, N=101, I=2048, K=20, delta=0.5,
/// lr=0.005, decay 0.9997 every 5 steps, ...).
RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::filesystem::path& file);

/// Canonical serialization; parse(serialize(c)) == c.
std::string serialize_config(const RunConfig& config);

bool operator==(const RunConfig& a, const RunConfig& b);

/// Checkpoint metadata stored alongside the weights.
struct CheckpointMeta {
    std::string model_name;
    std::size_t iteration = 0;
    std::uint64_t seed = 0;
    std::string activation = "tanh";
};

/// Self-describing checkpoint: metadata, full config snapshot, and per
/// network the layer shapes plus row-major weight arrays. Doubles survive
/// the round trip bit-exactly.
void save_checkpoint(const std::filesystem::path& file, const TrainedNets& nets,
                     const RunConfig& config, const CheckpointMeta& meta);

struct Checkpoint {
    TrainedNets nets;
    RunConfig config;
    CheckpointMeta meta;
};
/// Throws IoError on unreadable/truncated files or when the stored shapes
/// disagree with the declared layout; `expect_model` (when non-empty) must
/// match the stored model name.
Checkpoint load_checkpoint(const std::filesystem::path& file,
                           const std::string& expect_model = "");

/// paths CSV: header path_id,t,W,W0,X,Y,Z,Z0,S; one row per (path, node),
/// sorted by (path_id, t); 9 significant digits.
void write_paths_csv(const std::filesystem::path& file, const SolverState& state,
                     const NoisePair& noise);

/// Convergence metrics as deterministic JSON (wall times excluded); the
/// timing side file carries per-iteration wall seconds.
void write_metrics(const std::filesystem::path& file, const ConvergenceReport& report);
void write_timings(const std::filesystem::path& file, const ConvergenceReport& report);
ConvergenceReport load_metrics(const std::filesystem::path& file);

/// Error report as JSON plus plot-ready quantile-band CSVs
/// (t,q05,q25,q50,q75,q95) per process.
void write_error_report(const std::filesystem::path& dir, const ErrorReport& report,
                        const TimeGrid& grid);
/// Extra fields merged into the error-report JSON (e.g. the Z-candidate
/// comparison); values must already be JSON-encoded.
void write_error_report(const std::filesystem::path& dir, const ErrorReport& report,
                        const TimeGrid& grid, const std::string& extra_json_object);

} // namespace mvfbsde
