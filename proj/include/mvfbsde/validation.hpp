#pragma once

#include "mvfbsde/orchestrator.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace mvfbsde {

/// Error metrics of one process against a reference, pooled over
/// paths × grid and resolved per grid node. R² is suppressed (r2_defined =
/// false) when the reference is degenerate (zero pooled variance).
struct ProcessErrorReport {
    std::string name;
    double bias = 0.0;
    double rmse = 0.0;
    double r2 = 0.0;
    bool r2_defined = false;
    std::vector<double> node_bias;
    std::vector<double> node_rmse;
    /// Error quantiles over paths per node: q05, q25, q50, q75, q95.
    std::array<std::vector<double>, 5> bands;
};

struct ErrorReport {
    std::vector<ProcessErrorReport> processes; // X, Y, Z, Z0, S
    const ProcessErrorReport& process(const std::string& name) const;
};

/// Compares two states sharing noise, grid and path count.
ErrorReport compare_to_reference(const SolverState& approx, const SolverState& reference);

/// Initial-condition source for the nested oracle: fresh draws from the
/// model law, or bootstrap resampling of a given cohort (used to validate a
/// solver trained on that cohort without the initial-sampling offset).
struct NestedOracleSpec {
    std::size_t m_idio = 10000;
    std::uint64_t seed = 1;
    std::optional<std::vector<double>> cohort;
};

/// Brute-force conditional statistic: simulates m_idio idiosyncratic copies
/// sharing the fixed common path and returns the empirical statistic of X
/// per grid node. Dynamics come from the trained feedback maps.
std::vector<double> nested_conditional_oracle(const ModelSpec& model, const TrainedNets& nets,
                                              std::span<const double> common_path,
                                              const TimeGrid& grid,
                                              const NestedOracleSpec& spec);

/// Same oracle driven by the closed-form systemic-risk maps (validates the
/// oracle itself against the known statistic).
std::vector<double> nested_conditional_oracle_analytic(const SystemicRiskAnalytic& analytic,
                                                       const ScoreFunction& statistic,
                                                       std::span<const double> common_path,
                                                       const NestedOracleSpec& spec);

/// Discrete backward-dynamics residual r_j = ΔY_j + f_j dt − Z_j ΔW_j −
/// Z0_j ΔW0_j per path and step.
struct ResidualStats {
    double rms_residual = 0.0;
    double rms_dy = 0.0;
    double relative = 0.0; // rms_residual / rms_dy
    std::vector<double> node_rms;
};

ResidualStats bsde_residual(const SolverState& state, const ModelSpec& model,
                            const NoisePair& noise);

/// Empirical statistic of a sample under a score descriptor: mean for the
/// quadratic score, the alpha order statistic for the pinball score.
double empirical_statistic(std::vector<double> values, const ScoreFunction& score);

} // namespace mvfbsde
