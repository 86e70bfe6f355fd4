#include "mvfbsde/solvers.hpp"

#include "mvfbsde/parallel.hpp"
#include "mvfbsde/rng.hpp"
#include "mvfbsde/tape.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <utility>

namespace mvfbsde {

namespace {

constexpr std::size_t kEvalChunk = 1024;

std::vector<std::size_t> draw_indices(Rng& rng, std::size_t count, std::size_t population) {
    std::vector<std::size_t> idx(count);
    for (std::size_t k = 0; k < count; ++k) idx[k] = rng.index(population);
    return idx;
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

void check_panel_shapes(std::initializer_list<const PathBatch*> batches, const TimeGrid& grid,
                        const char* where) {
    const PathBatch* first = *batches.begin();
    for (const PathBatch* b : batches) {
        if (!b->same_shape(*first)) throw ConfigError(std::string(where) + ": shape mismatch");
        if (b->nodes() != grid.nodes())
            throw ConfigError(std::string(where) + ": grid/node-count mismatch");
        if (b->dim() != 1)
            throw ConfigError(std::string(where) + ": scalar processes expected");
    }
}

double clamp_y(double y, double floor_abs, std::uint64_t& clamps) {
    if (std::abs(y) >= floor_abs) return y;
    ++clamps;
    return y >= 0.0 ? floor_abs : -floor_abs;
}

void check_loss_finite(double loss, const char* where, std::size_t epoch) {
    if (!std::isfinite(loss))
        throw TrainingError(std::string(where) + ": non-finite loss at epoch " +
                            std::to_string(epoch));
}

std::vector<const Mat*> collect_grads(const ad::Tape& tape, const std::vector<ad::NodeId>& ids) {
    std::vector<const Mat*> grads;
    grads.reserve(ids.size());
    for (ad::NodeId id : ids) grads.push_back(&tape.grad(id));
    return grads;
}

template <typename Net> std::vector<const Mat*> const_params(const Net& net) {
    return net.params();
}

} // namespace

double clamp_backward_arg(const ModelSpec& model, double y, std::uint64_t& clamps) {
    if (!model.y_clamp_abs) return y;
    return clamp_y(y, *model.y_clamp_abs, clamps);
}

PicardForwardResult picard_forward(const ModelSpec& model, const SolverState& state,
                                   std::span<const double> xi, const NoisePair& noise,
                                   double tol, std::size_t max_inner) {
    model.validate();
    const TimeGrid& grid = noise.grid;
    check_panel_shapes({&state.x, &state.y, &state.z, &state.z0, &state.s}, grid,
                       "picard_forward");
    if (!(tol > 0.0)) throw ConfigError("picard_forward: tolerance must be positive");
    if (max_inner == 0) throw ConfigError("picard_forward: need at least one inner iteration");

    const double clamp_floor = model.y_clamp_abs.value_or(0.0);
    std::atomic<std::uint64_t> clamps{0};

    PicardForwardResult res;
    PathBatch prev = state.x;
    prev.set_name("X");

    std::size_t growth_streak = 0;
    double growth_base = 0.0;

    for (std::size_t n = 0; n < max_inner; ++n) {
        // Coefficients frozen along the previous inner iterate; the running
        // state of the stepper is ignored on purpose (Picard integral map).
        DriftFn drift = [&](std::size_t j, std::size_t i, std::span<const double>,
                            std::span<double> out) {
            const double t = grid.node(j);
            double y = state.y.at(i, j);
            if (clamp_floor > 0.0) {
                std::uint64_t local = 0;
                y = clamp_y(y, clamp_floor, local);
                if (local) clamps.fetch_add(local, std::memory_order_relaxed);
            }
            out[0] = model.drift(t, prev.at(i, j), y, state.z.at(i, j), state.z0.at(i, j),
                                 state.s.at(i, j));
        };
        DiffusionFn diff = [&](std::size_t j, std::size_t i, std::span<const double>,
                               std::span<double> out) {
            out[0] = model.sigma(grid.node(j), prev.at(i, j));
        };
        DiffusionFn diff0 = [&](std::size_t j, std::size_t i, std::span<const double>,
                                std::span<double> out) {
            out[0] = model.sigma0(grid.node(j), prev.at(i, j));
        };

        PathBatch next = euler_maruyama(grid, xi, 1, drift, diff, diff0, noise, "X");
        const double err = l2_path_distance(next, prev);
        if (!std::isfinite(err))
            throw SimulationError("picard_forward: non-finite iterate error");

        if (!res.errors.empty() && err > res.errors.back()) {
            if (growth_streak == 0) growth_base = res.errors.back();
            ++growth_streak;
        } else {
            growth_streak = 0;
        }
        res.errors.push_back(err);
        prev = std::move(next);

        if (growth_streak >= 3 && err >= 2.0 * growth_base) {
            std::ostringstream msg;
            msg << "picard_forward: diverging inner iteration, error history:";
            for (double e : res.errors) msg << ' ' << e;
            throw SimulationError(msg.str());
        }
        if (err < tol) {
            res.converged = true;
            break;
        }
    }

    res.x = std::move(prev);
    res.clamp_count = clamps.load();
    return res;
}

std::vector<Mat> common_noise_features(const PathBatch& w0, const TimeGrid& grid,
                                       std::span<const std::size_t> indices) {
    if (w0.nodes() != grid.nodes()) throw ConfigError("common_noise_features: grid mismatch");
    std::vector<Mat> features(grid.nodes());
    for (std::size_t j = 0; j < grid.nodes(); ++j) {
        Mat& f = features[j];
        f.ensure_shape(indices.size(), 2);
        const double t = grid.node(j);
        for (std::size_t r = 0; r < indices.size(); ++r) {
            const std::size_t i = indices[r];
            f(r, 0) = t;
            f(r, 1) = j == 0 ? 0.0 : w0.at(i, j) - w0.at(i, j - 1);
        }
    }
    return features;
}

std::pair<PathBatch, FitResult> fit_mean_field(const ScoreFunction& score, const PathBatch& x,
                                               const PathBatch& w0, const TimeGrid& grid,
                                               const TrainingPlan& plan, GruNet& s_net,
                                               std::uint64_t batch_seed) {
    plan.validate();
    check_panel_shapes({&x, &w0}, grid, "fit_mean_field");
    if (!x.all_finite()) throw TrainingError("fit_mean_field: non-finite X batch");
    if (s_net.input_dim() != 2 || s_net.extra_dim() != 0 || s_net.output_dim() != 1)
        throw ConfigError("fit_mean_field: statistic net must map (t, dW0) to a scalar");

    const std::size_t paths = x.paths();
    const std::size_t nodes = grid.nodes();
    const std::size_t batch = plan.batch;
    const double norm = static_cast<double>(batch) * static_cast<double>(nodes);

    Rng brng(mix_seed(batch_seed, 0x51));
    AdamState adam(const_params(s_net), plan.adam);
    FitResult fit;
    fit.losses.reserve(plan.epochs_s);

    ad::Tape tape;
    const Mat ones(batch, 1, 1.0);
    Mat realized(batch, 1);

    for (std::size_t epoch = 0; epoch < plan.epochs_s; ++epoch) {
        const auto idx = draw_indices(brng, batch, paths);
        const auto features = common_noise_features(w0, grid, idx);

        tape.reset();
        auto ev = s_net.forward_on_tape(tape, features);
        ad::NodeId loss = ad::kNoNode;
        for (std::size_t j = 0; j < nodes; ++j) {
            for (std::size_t r = 0; r < batch; ++r)
                realized(r, 0) = score.transform(x.at(idx[r], j));
            ad::NodeId term;
            if (score.kind == ScoreKind::Quantile)
                term = tape.pinball_loss(ev.outputs[j], realized, score.alpha, ones, norm);
            else
                term = tape.sq_loss(ev.outputs[j], realized, ones, norm);
            loss = (loss == ad::kNoNode) ? term : tape.add(loss, term);
        }
        const double loss_value = tape.value(loss)(0, 0);
        check_loss_finite(loss_value, "fit_mean_field", epoch);
        fit.losses.push_back(loss_value);

        tape.backward(loss);
        adam.update(s_net.params(), collect_grads(tape, ev.params));
    }

    return {eval_statistic_paths(s_net, w0, grid), std::move(fit)};
}

std::pair<Mat, std::uint64_t> backward_targets(const ModelSpec& model, const PathBatch& x,
                                               const PathBatch& s, const PathBatch& y_prev,
                                               const PathBatch& z_prev,
                                               const PathBatch& z0_prev, const TimeGrid& grid) {
    check_panel_shapes({&x, &s, &y_prev, &z_prev, &z0_prev}, grid, "backward_targets");
    const std::size_t paths = x.paths();
    const std::size_t nodes = grid.nodes();
    const double dt = grid.dt();
    const double clamp_floor = model.y_clamp_abs.value_or(0.0);

    Mat targets(paths, nodes);
    std::atomic<std::uint64_t> clamps{0};
    std::atomic<bool> bad{false};

    parallel_for(paths, [&](std::size_t i) {
        std::uint64_t local_clamps = 0;
        const double terminal = model.terminal(x.at(i, nodes - 1), s.at(i, nodes - 1));
        targets(i, nodes - 1) = terminal;
        double suffix = 0.0;
        for (std::size_t j = nodes - 1; j-- > 0;) {
            double y = y_prev.at(i, j);
            if (clamp_floor > 0.0) y = clamp_y(y, clamp_floor, local_clamps);
            const double f = model.driver(grid.node(j), x.at(i, j), y, z_prev.at(i, j),
                                          z0_prev.at(i, j), s.at(i, j));
            suffix += f * dt;
            targets(i, j) = terminal + suffix;
        }
        for (std::size_t j = 0; j < nodes; ++j)
            if (!std::isfinite(targets(i, j))) bad.store(true, std::memory_order_relaxed);
        if (local_clamps) clamps.fetch_add(local_clamps, std::memory_order_relaxed);
    });

    if (bad.load())
        throw TrainingError("backward_targets: non-finite regression target (driver blow-up)");
    return {std::move(targets), clamps.load()};
}

BackwardFitOutput fit_backward_y(const ModelSpec& model, const PathBatch& x, const PathBatch& s,
                                 const PathBatch& y_prev, const PathBatch& z_prev,
                                 const PathBatch& z0_prev, const TimeGrid& grid,
                                 const TrainingPlan& plan, FeedForwardNet& u_net,
                                 std::uint64_t batch_seed) {
    plan.validate();
    if (u_net.input_dim() != 3 || u_net.output_dim() != 1)
        throw ConfigError("fit_backward_y: decoupling-field net must map (t,x,s) to a scalar");

    auto [targets, clamp_count] = backward_targets(model, x, s, y_prev, z_prev, z0_prev, grid);

    const std::size_t paths = x.paths();
    const std::size_t nodes = grid.nodes();
    const std::size_t batch = plan.batch;
    const double p_terminal = plan.resolved_terminal_weight(grid);
    const double weight_sum = static_cast<double>(nodes - 1) + p_terminal;
    const double norm = static_cast<double>(batch) * weight_sum;

    Rng brng(mix_seed(batch_seed, 0x52));
    AdamState adam(const_params(u_net), plan.adam);
    FitResult fit;
    fit.clamp_count = clamp_count;
    fit.losses.reserve(plan.epochs_y);

    ad::Tape tape;
    Mat inputs(batch * nodes, 3);
    Mat target_rows(batch * nodes, 1);
    Mat weight_rows(batch * nodes, 1);

    for (std::size_t epoch = 0; epoch < plan.epochs_y; ++epoch) {
        const auto idx = draw_indices(brng, batch, paths);
        for (std::size_t r = 0; r < batch; ++r) {
            const std::size_t i = idx[r];
            for (std::size_t j = 0; j < nodes; ++j) {
                const std::size_t row = r * nodes + j;
                decoupling_features(grid.node(j), x.at(i, j), s.at(i, j), &inputs(row, 0));
                target_rows(row, 0) = targets(i, j);
                weight_rows(row, 0) = (j + 1 == nodes) ? p_terminal : 1.0;
            }
        }

        tape.reset();
        auto ev = u_net.forward_on_tape(tape, inputs, false);
        const ad::NodeId loss = tape.sq_loss(ev.output, target_rows, weight_rows, norm);
        const double loss_value = tape.value(loss)(0, 0);
        check_loss_finite(loss_value, "fit_backward_y", epoch);
        fit.losses.push_back(loss_value);

        tape.backward(loss);
        adam.update(u_net.params(), collect_grads(tape, ev.params));
    }

    BackwardFitOutput out;
    out.y = eval_decoupling_field(u_net, x, s, grid);
    out.z = eval_z_from_field(u_net, model.sigma, x, s, grid);
    out.fit = std::move(fit);
    return out;
}

std::pair<Mat, std::uint64_t> z0_targets(const ModelSpec& model, const PathBatch& x,
                                         const PathBatch& s, const PathBatch& y,
                                         const PathBatch& z, const PathBatch& z0_prev,
                                         const NoisePair& noise) {
    const TimeGrid& grid = noise.grid;
    check_panel_shapes({&x, &s, &y, &z, &z0_prev}, grid, "z0_targets");
    const std::size_t paths = x.paths();
    const std::size_t steps = grid.steps();
    const double dt = grid.dt();
    const double clamp_floor = model.y_clamp_abs.value_or(0.0);

    Mat targets(paths, steps);
    std::atomic<std::uint64_t> clamps{0};
    std::atomic<bool> bad{false};

    parallel_for(paths, [&](std::size_t i) {
        std::uint64_t local_clamps = 0;
        for (std::size_t j = 0; j < steps; ++j) {
            double yv = y.at(i, j);
            if (clamp_floor > 0.0) yv = clamp_y(yv, clamp_floor, local_clamps);
            const double f = model.driver(grid.node(j), x.at(i, j), yv, z.at(i, j),
                                          z0_prev.at(i, j), s.at(i, j));
            const double dy = y.at(i, j + 1) - y.at(i, j);
            const double dw0 = noise.w0.at(i, j + 1) - noise.w0.at(i, j);
            const double v = (dy / dt + f) * dw0;
            targets(i, j) = v;
            if (!std::isfinite(v)) bad.store(true, std::memory_order_relaxed);
        }
        if (local_clamps) clamps.fetch_add(local_clamps, std::memory_order_relaxed);
    });

    if (bad.load()) throw TrainingError("z0_targets: non-finite regression target");
    return {std::move(targets), clamps.load()};
}

std::pair<PathBatch, FitResult> fit_z0(const ModelSpec& model, const PathBatch& x,
                                       const PathBatch& s, const PathBatch& y,
                                       const PathBatch& z, const PathBatch& z0_prev,
                                       const NoisePair& noise, const TrainingPlan& plan,
                                       GruNet& v_net, std::uint64_t batch_seed) {
    plan.validate();
    const TimeGrid& grid = noise.grid;
    if (v_net.input_dim() != 2 || v_net.extra_dim() != 1 || v_net.output_dim() != 1)
        throw ConfigError("fit_z0: integrand net must map (t, dW0 | x) to a scalar");

    auto [targets, clamp_count] = z0_targets(model, x, s, y, z, z0_prev, noise);

    const std::size_t paths = x.paths();
    const std::size_t steps = grid.steps();
    const std::size_t batch = plan.batch;
    const double norm = static_cast<double>(batch) * static_cast<double>(steps);

    Rng brng(mix_seed(batch_seed, 0x53));
    AdamState adam(const_params(v_net), plan.adam);
    FitResult fit;
    fit.clamp_count = clamp_count;
    fit.losses.reserve(plan.epochs_z0);

    ad::Tape tape;
    const Mat ones(batch, 1, 1.0);
    Mat realized(batch, 1);

    for (std::size_t epoch = 0; epoch < plan.epochs_z0; ++epoch) {
        const auto idx = draw_indices(brng, batch, paths);
        // Training covers grid nodes 0..N-1; the feature sequence stops there.
        auto features = common_noise_features(noise.w0, grid, idx);
        features.resize(steps);
        std::vector<Mat> extras(steps);
        for (std::size_t j = 0; j < steps; ++j) {
            extras[j].ensure_shape(batch, 1);
            for (std::size_t r = 0; r < batch; ++r) extras[j](r, 0) = x.at(idx[r], j);
        }

        tape.reset();
        auto ev = v_net.forward_on_tape(tape, features, &extras);
        ad::NodeId loss = ad::kNoNode;
        for (std::size_t j = 0; j < steps; ++j) {
            for (std::size_t r = 0; r < batch; ++r) realized(r, 0) = targets(idx[r], j);
            const ad::NodeId term = tape.sq_loss(ev.outputs[j], realized, ones, norm);
            loss = (loss == ad::kNoNode) ? term : tape.add(loss, term);
        }
        const double loss_value = tape.value(loss)(0, 0);
        check_loss_finite(loss_value, "fit_z0", epoch);
        fit.losses.push_back(loss_value);

        tape.backward(loss);
        adam.update(v_net.params(), collect_grads(tape, ev.params));
    }

    return {eval_z0_net(v_net, noise.w0, x, grid), std::move(fit)};
}

PathBatch eval_statistic_paths(const GruNet& s_net, const PathBatch& w0, const TimeGrid& grid) {
    const std::size_t paths = w0.paths();
    PathBatch out("S", paths, grid);
    const auto idx = all_indices(paths);
    for (std::size_t begin = 0; begin < paths; begin += kEvalChunk) {
        const std::size_t end = std::min(paths, begin + kEvalChunk);
        const std::span<const std::size_t> chunk(idx.data() + begin, end - begin);
        const auto features = common_noise_features(w0, grid, chunk);
        const auto outputs = s_net.eval_sequence(features);
        for (std::size_t j = 0; j < grid.nodes(); ++j)
            for (std::size_t r = 0; r < chunk.size(); ++r)
                out.at(chunk[r], j) = outputs[j](r, 0);
    }
    return out;
}

PathBatch eval_decoupling_field(const FeedForwardNet& u_net, const PathBatch& x,
                                const PathBatch& s, const TimeGrid& grid) {
    check_panel_shapes({&x, &s}, grid, "eval_decoupling_field");
    const std::size_t paths = x.paths();
    const std::size_t nodes = grid.nodes();
    PathBatch out("Y", paths, grid);
    for (std::size_t begin = 0; begin < paths; begin += kEvalChunk) {
        const std::size_t end = std::min(paths, begin + kEvalChunk);
        Mat inputs((end - begin) * nodes, 3);
        for (std::size_t i = begin; i < end; ++i)
            for (std::size_t j = 0; j < nodes; ++j) {
                const std::size_t row = (i - begin) * nodes + j;
                decoupling_features(grid.node(j), x.at(i, j), s.at(i, j), &inputs(row, 0));
            }
        const Mat y = u_net.eval(inputs);
        for (std::size_t i = begin; i < end; ++i)
            for (std::size_t j = 0; j < nodes; ++j) out.at(i, j) = y((i - begin) * nodes + j, 0);
    }
    return out;
}

PathBatch eval_z_from_field(const FeedForwardNet& u_net,
                            const std::function<double(double, double)>& sigma,
                            const PathBatch& x, const PathBatch& s, const TimeGrid& grid) {
    check_panel_shapes({&x, &s}, grid, "eval_z_from_field");
    const std::size_t paths = x.paths();
    const std::size_t nodes = grid.nodes();
    PathBatch out("Z", paths, grid);
    ad::Tape tape;
    for (std::size_t begin = 0; begin < paths; begin += kEvalChunk) {
        const std::size_t end = std::min(paths, begin + kEvalChunk);
        Mat inputs((end - begin) * nodes, 3);
        for (std::size_t i = begin; i < end; ++i)
            for (std::size_t j = 0; j < nodes; ++j) {
                const std::size_t row = (i - begin) * nodes + j;
                decoupling_features(grid.node(j), x.at(i, j), s.at(i, j), &inputs(row, 0));
            }
        tape.reset();
        auto ev = u_net.forward_on_tape(tape, inputs, true);
        tape.backward(tape.sum_all(ev.output));
        const Mat& gin = tape.grad(ev.input);
        for (std::size_t i = begin; i < end; ++i)
            for (std::size_t j = 0; j < nodes; ++j) {
                const std::size_t row = (i - begin) * nodes + j;
                out.at(i, j) = sigma(grid.node(j), x.at(i, j)) * gin(row, 1);
            }
    }
    return out;
}

PathBatch eval_z0_net(const GruNet& v_net, const PathBatch& w0, const PathBatch& x,
                      const TimeGrid& grid) {
    check_panel_shapes({&w0, &x}, grid, "eval_z0_net");
    const std::size_t paths = w0.paths();
    PathBatch out("Z0", paths, grid);
    const auto idx = all_indices(paths);
    for (std::size_t begin = 0; begin < paths; begin += kEvalChunk) {
        const std::size_t end = std::min(paths, begin + kEvalChunk);
        const std::span<const std::size_t> chunk(idx.data() + begin, end - begin);
        const auto features = common_noise_features(w0, grid, chunk);
        std::vector<Mat> extras(grid.nodes());
        for (std::size_t j = 0; j < grid.nodes(); ++j) {
            extras[j].ensure_shape(chunk.size(), 1);
            for (std::size_t r = 0; r < chunk.size(); ++r) extras[j](r, 0) = x.at(chunk[r], j);
        }
        const auto outputs = v_net.eval_sequence(features, &extras);
        for (std::size_t j = 0; j < grid.nodes(); ++j)
            for (std::size_t r = 0; r < chunk.size(); ++r)
                out.at(chunk[r], j) = outputs[j](r, 0);
    }
    return out;
}

} // namespace mvfbsde
