#pragma once

#include "mvfbsde/euler.hpp"
#include "mvfbsde/model_spec.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace mvfbsde {

/// Diagnostics of one training fit: per-epoch losses and the number of
/// driver-safety clamps applied while building regression targets.
struct FitResult {
    std::vector<double> losses;
    std::uint64_t clamp_count = 0;
};

/// Result of the inner forward Picard iteration: the converged iterate, the
/// successive-iterate error sequence, and clamp diagnostics.
struct PicardForwardResult {
    PathBatch x;
    std::vector<double> errors;
    std::uint64_t clamp_count = 0;
    bool converged = false;
};

/// Repeated Euler-Maruyama resimulation of the forward SDE with drift and
/// diffusions evaluated along the previous inner iterate and the backward
/// quantities of `state` held fixed. Starts from state.x, stops once the
/// successive-iterate L2 error drops below tol or max_inner is reached.
/// Sustained error growth (three consecutive increases to at least twice the
/// level where the growth started) raises SimulationError with the error
/// history in the message.
PicardForwardResult picard_forward(const ModelSpec& model, const SolverState& state,
                                   std::span<const double> xi, const NoisePair& noise,
                                   double tol, std::size_t max_inner);

/// Per-step GRU features encoding the common-noise path on a uniform grid:
/// (t_j, ΔW0 ending at t_j), with a zero increment at j = 0. `indices`
/// selects the paths (one feature row per index, per step).
std::vector<Mat> common_noise_features(const PathBatch& w0, const TimeGrid& grid,
                                       std::span<const std::size_t> indices);

/// Feature layout of the decoupling-field net: (t, x − s, s). The rotation
/// is bijective, so the composite is still a map of (t, x, s); feeding the
/// centered coordinate decorrelates the inputs and lets the net zero its
/// direct statistic dependence where the field only moves with x − s.
/// Note d(x − s)/dx = 1, so the x-gradient of the field is the gradient in
/// the second feature.
inline void decoupling_features(double t, double x, double s, double* row) {
    row[0] = t;
    row[1] = x - s;
    row[2] = s;
}

/// Trains the statistic net on the score loss over minibatches of paths and
/// evaluates it on every path. The net is trained in place (warm start is
/// the caller's choice of initial weights).
std::pair<PathBatch, FitResult> fit_mean_field(const ScoreFunction& score, const PathBatch& x,
                                               const PathBatch& w0, const TimeGrid& grid,
                                               const TrainingPlan& plan, GruNet& s_net,
                                               std::uint64_t batch_seed);

/// Regression targets for the backward fit: per path and node,
/// G(X_T, S_T) + Σ_{u in grid, u >= t, u < T} f(u, X_u, Y_u, Z_u, Z0_u, S_u) dt
/// (left-point quadrature; the sum is empty at t = T). Driver arguments come
/// from the previous iterate's Y, Z, Z0 and the new X, S. Returns the
/// (paths × nodes) panel and the clamp count.
std::pair<Mat, std::uint64_t> backward_targets(const ModelSpec& model, const PathBatch& x,
                                               const PathBatch& s, const PathBatch& y_prev,
                                               const PathBatch& z_prev,
                                               const PathBatch& z0_prev, const TimeGrid& grid);

/// Trains the decoupling-field net against the precomputed targets with the
/// node weights p (terminal weight from the plan), then evaluates
/// Y = U(t, X, S) and Z = sigma(t, X)·d_x U on every path and node.
struct BackwardFitOutput {
    PathBatch y;
    PathBatch z;
    FitResult fit;
};
BackwardFitOutput fit_backward_y(const ModelSpec& model, const PathBatch& x, const PathBatch& s,
                                 const PathBatch& y_prev, const PathBatch& z_prev,
                                 const PathBatch& z0_prev, const TimeGrid& grid,
                                 const TrainingPlan& plan, FeedForwardNet& u_net,
                                 std::uint64_t batch_seed);

/// Regression targets for the common-noise integrand: per path and node
/// j < N, (ΔY_j/dt + f_j)·ΔW0_j with f evaluated at the new-iterate
/// quantities and the previous Z0. Returns (paths × steps) and clamps.
std::pair<Mat, std::uint64_t> z0_targets(const ModelSpec& model, const PathBatch& x,
                                         const PathBatch& s, const PathBatch& y,
                                         const PathBatch& z, const PathBatch& z0_prev,
                                         const NoisePair& noise);

/// Trains the common-noise integrand net (GRU over W0 features with X at the
/// head) on grid nodes except T, then evaluates it on all nodes, defining
/// Z0_T by evaluating the head at the terminal hidden state.
std::pair<PathBatch, FitResult> fit_z0(const ModelSpec& model, const PathBatch& x,
                                       const PathBatch& s, const PathBatch& y,
                                       const PathBatch& z, const PathBatch& z0_prev,
                                       const NoisePair& noise, const TrainingPlan& plan,
                                       GruNet& v_net, std::uint64_t batch_seed);

// --- batched network evaluation over whole path panels (chunked) ---

/// S_t = net(t, W0 path) on every path and node.
PathBatch eval_statistic_paths(const GruNet& s_net, const PathBatch& w0, const TimeGrid& grid);

/// Y_t = net(t, X_t, S_t) on every path and node.
PathBatch eval_decoupling_field(const FeedForwardNet& u_net, const PathBatch& x,
                                const PathBatch& s, const TimeGrid& grid);

/// Z_t = sigma(t, X_t) · d_x net(t, X_t, S_t) via tape input gradients.
PathBatch eval_z_from_field(const FeedForwardNet& u_net,
                            const std::function<double(double, double)>& sigma,
                            const PathBatch& x, const PathBatch& s, const TimeGrid& grid);

/// Z0_t = net(t, X_t, W0 path) on every path and node.
PathBatch eval_z0_net(const GruNet& v_net, const PathBatch& w0, const PathBatch& x,
                      const TimeGrid& grid);

/// Applies the model's driver-safety floor to a Y argument, bumping the
/// counter when it bites.
double clamp_backward_arg(const ModelSpec& model, double y, std::uint64_t& clamps);

} // namespace mvfbsde
