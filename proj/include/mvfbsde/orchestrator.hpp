#pragma once

#include "mvfbsde/models.hpp"
#include "mvfbsde/solvers.hpp"

#include <functional>
#include <optional>
#include <string>

namespace mvfbsde {

/// Full run description. The model section keeps typed parameter sets for
/// every shipped benchmark; `model_name` selects which one is built.
struct RunConfig {
    std::string model_name = "systemic_risk";
    SystemicRiskParams systemic;
    GrowthModelParams growth;
    double quantile_alpha = 0.6;

    double horizon = 1.0;
    std::size_t steps = 101;  // N
    std::size_t paths = 10000; // M
    std::uint64_t seed = 1;

    std::size_t outer_iterations = 20; // K
    double damping = 0.5;              // delta in the soft update
    double tolerance = 1e-4;           // successive-iterate L2 stop rule
    bool warm_start = true;

    TrainingPlan plan;

    std::string output_dir = "out";
    std::size_t checkpoint_every = 0; // 0 = final checkpoint only

    void validate() const;
};

/// Builds the benchmark ModelSpec selected by the config, with the grid
/// horizon applied.
ModelSpec build_model(const RunConfig& config);

/// Elementwise convex combination delta·prev + (1-delta)·proposal.
PathBatch soft_update(const PathBatch& prev, const PathBatch& proposal, double damping);

/// The three trained networks produced by a run.
struct TrainedNets {
    FeedForwardNet u; // decoupling field (t, x, s) -> y
    GruNet s;         // statistic net over the common-noise path
    GruNet v;         // common-noise integrand net
};

/// Per-outer-iteration diagnostics. Wall time is reported separately from
/// the persisted metrics so fixed-seed runs stay byte-identical.
struct IterationRecord {
    std::size_t iteration = 0;
    double dist_x = 0, dist_y = 0, dist_z = 0, dist_z0 = 0;
    std::vector<double> picard_errors;
    bool picard_converged = false;
    std::vector<double> loss_s, loss_y, loss_z0;
    std::uint64_t clamp_picard = 0, clamp_backward = 0, clamp_z0 = 0;
    double wall_seconds = 0;
};

struct ConvergenceReport {
    std::vector<IterationRecord> iterations;
    bool stopped_early = false;
    bool aborted = false;
    std::string abort_reason;
};

/// Dataflow trace event emitted per solver stage: which versioned
/// quantities the stage consumed and produced (e.g. "Y@2" for the damped
/// iterate of outer iteration 2).
struct StageEvent {
    std::string stage;
    std::vector<std::string> consumed;
    std::vector<std::string> produced;
};
using TraceSink = std::function<void(const StageEvent&)>;

struct RunResult {
    SolverState state; // final damped iterate
    TrainedNets nets;
    ConvergenceReport report;
    NoisePair noise;        // training noise
    std::vector<double> xi; // initial draws
};

/// Callback fired after every completed outer iteration (checkpointing).
using IterationHook =
    std::function<void(std::size_t iteration, const SolverState&, const TrainedNets&,
                       const ConvergenceReport&)>;

/// Runs the outer Picard loop: forward resimulation, statistic fit,
/// backward fit with integrand extraction, and common-noise integrand fit,
/// damping X, Y, Z, Z0 after each sub-step (S replaces its predecessor
/// outright). Stops early once every successive-iterate distance falls
/// below the tolerance. A sub-step failure aborts the run and returns the
/// partial report with `aborted` set.
RunResult run_solver(const RunConfig& config, const TraceSink* trace = nullptr,
                     const IterationHook* on_iteration = nullptr);

/// Same loop with an injected model (tests, custom systems) and optionally
/// a starting iterate replacing the default flat-initial-condition state.
RunResult run_solver_with(const ModelSpec& model, const RunConfig& config,
                          const SolverState* initial_state = nullptr,
                          const TraceSink* trace = nullptr,
                          const IterationHook* on_iteration = nullptr);

/// Closed-loop simulation with the trained feedback maps on the supplied
/// noise: X steps forward with Y = U(t,X,S), Z = sigma·d_x U, Z0 = v(...),
/// S = s(t, W0 path). Returns all five processes.
SolverState sample_after_training(const ModelSpec& model, const TrainedNets& nets,
                                  const NoisePair& noise, std::span<const double> xi);

} // namespace mvfbsde
