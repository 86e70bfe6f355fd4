#include "mvfbsde/orchestrator.hpp"

#include "mvfbsde/parallel.hpp"
#include "mvfbsde/tape.hpp"

#include <chrono>
#include <cmath>

namespace mvfbsde {

void RunConfig::validate() const {
    if (model_name != "systemic_risk" && model_name != "quantile_interaction" &&
        model_name != "growth")
        throw ConfigError("unknown model: " + model_name);
    if (!(horizon > 0.0)) throw ConfigError("grid horizon must be positive");
    if (steps < 2) throw ConfigError("grid needs at least 2 steps");
    if (paths < 1) throw ConfigError("need at least one path");
    if (outer_iterations < 1) throw ConfigError("need at least one outer iteration");
    if (!(damping >= 0.0 && damping < 1.0)) throw ConfigError("damping must lie in [0,1)");
    if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
    if (!(quantile_alpha > 0.0 && quantile_alpha < 1.0))
        throw ConfigError("quantile alpha must lie in (0,1)");
    plan.validate();
}

ModelSpec build_model(const RunConfig& config) {
    config.validate();
    if (config.model_name == "systemic_risk") {
        SystemicRiskParams p = config.systemic;
        p.horizon = config.horizon;
        return systemic_risk_model(p);
    }
    if (config.model_name == "quantile_interaction") {
        SystemicRiskParams p = config.systemic;
        p.horizon = config.horizon;
        return quantile_interaction_model(p, config.quantile_alpha);
    }
    GrowthModelParams p = config.growth;
    p.horizon = config.horizon;
    return growth_model(p);
}

PathBatch soft_update(const PathBatch& prev, const PathBatch& proposal, double damping) {
    if (!prev.same_shape(proposal)) throw ConfigError("soft_update: shape mismatch");
    if (!(damping >= 0.0 && damping <= 1.0))
        throw ConfigError("soft_update: damping must lie in [0,1]");
    PathBatch out = proposal;
    auto o = out.flat();
    const auto p = prev.flat();
    for (std::size_t e = 0; e < o.size(); ++e) o[e] = damping * p[e] + (1.0 - damping) * o[e];
    return out;
}

namespace {

std::string tag(const char* name, std::size_t version) {
    return std::string(name) + "@" + std::to_string(version);
}

void emit(const TraceSink* trace, StageEvent ev) {
    if (trace && *trace) (*trace)(ev);
}

TrainedNets fresh_nets(std::uint64_t seed) {
    TrainedNets nets;
    nets.u = FeedForwardNet({3, 18, 18, 1}, Activation::Tanh, mix_seed(seed, 3));
    nets.s = GruNet(2, 2, 0, 1, mix_seed(seed, 4));
    nets.v = GruNet(2, 2, 1, 1, mix_seed(seed, 5));
    return nets;
}

} // namespace

RunResult run_solver(const RunConfig& config, const TraceSink* trace,
                     const IterationHook* on_iteration) {
    return run_solver_with(build_model(config), config, nullptr, trace, on_iteration);
}

RunResult run_solver_with(const ModelSpec& model, const RunConfig& config,
                          const SolverState* initial_state, const TraceSink* trace,
                          const IterationHook* on_iteration) {
    config.validate();
    model.validate();
    const TimeGrid grid(config.horizon, config.steps);

    RunResult result;
    result.noise = sample_noise(grid, config.paths, 1, mix_seed(config.seed, 1));
    result.xi = sample_initial_batch(model, config.paths, mix_seed(config.seed, 2));
    result.nets = fresh_nets(config.seed);

    // Initial iterate: X flat at the initial condition, backward quantities
    // zero unless the model supplies a starting guess for Y.
    SolverState state = SolverState::zeros(config.paths, grid);
    for (std::size_t i = 0; i < config.paths; ++i)
        for (std::size_t j = 0; j <= grid.steps(); ++j) state.x.at(i, j) = result.xi[i];
    if (model.initial_y_guess) {
        for (double& v : state.y.flat()) v = *model.initial_y_guess;
    }
    if (initial_state) {
        if (!initial_state->x.same_shape(state.x))
            throw ConfigError("run_solver_with: initial state shape mismatch");
        state = *initial_state;
    }

    for (std::size_t k = 1; k <= config.outer_iterations; ++k) {
        IterationRecord rec;
        rec.iteration = k;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            if (!config.warm_start && k > 1) result.nets = fresh_nets(mix_seed(config.seed, k));

            // Forward resimulation, then damping against the previous X.
            auto picard = picard_forward(model, state, result.xi, result.noise,
                                         config.plan.picard_tol, config.plan.picard_max_inner);
            rec.picard_errors = picard.errors;
            rec.picard_converged = picard.converged;
            rec.clamp_picard = picard.clamp_count;
            PathBatch x_new = soft_update(state.x, picard.x, config.damping);
            emit(trace, {"picard_forward",
                         {tag("X", k - 1), tag("Y", k - 1), tag("Z", k - 1), tag("Z0", k - 1),
                          tag("S", k - 1)},
                         {tag("X", k)}});

            // Statistic fit on the damped forward paths; no damping on S.
            auto [s_new, s_fit] =
                fit_mean_field(model.score, x_new, result.noise.w0, grid, config.plan,
                               result.nets.s, mix_seed(config.seed, 1000 + k));
            rec.loss_s = std::move(s_fit.losses);
            emit(trace, {"fit_mean_field", {tag("X", k)}, {tag("S", k)}});

            // Backward fit: driver uses the previous iterate's Y, Z, Z0.
            auto backward = fit_backward_y(model, x_new, s_new, state.y, state.z, state.z0,
                                           grid, config.plan, result.nets.u,
                                           mix_seed(config.seed, 2000 + k));
            rec.loss_y = std::move(backward.fit.losses);
            rec.clamp_backward = backward.fit.clamp_count;
            PathBatch y_new = soft_update(state.y, backward.y, config.damping);
            PathBatch z_new = soft_update(state.z, backward.z, config.damping);
            emit(trace, {"fit_backward_y",
                         {tag("X", k), tag("S", k), tag("Y", k - 1), tag("Z", k - 1),
                          tag("Z0", k - 1)},
                         {tag("Y", k), tag("Z", k)}});

            // Common-noise integrand fit: consumes the damped new iterates.
            auto [z0_prop, z0_fit] =
                fit_z0(model, x_new, s_new, y_new, z_new, state.z0, result.noise, config.plan,
                       result.nets.v, mix_seed(config.seed, 3000 + k));
            rec.loss_z0 = std::move(z0_fit.losses);
            rec.clamp_z0 = z0_fit.clamp_count;
            PathBatch z0_new = soft_update(state.z0, z0_prop, config.damping);
            emit(trace, {"fit_z0",
                         {tag("X", k), tag("S", k), tag("Y", k), tag("Z", k), tag("Z0", k - 1)},
                         {tag("Z0", k)}});

            rec.dist_x = l2_path_distance(x_new, state.x);
            rec.dist_y = l2_path_distance(y_new, state.y);
            rec.dist_z = l2_path_distance(z_new, state.z);
            rec.dist_z0 = l2_path_distance(z0_new, state.z0);

            state.x = std::move(x_new);
            state.y = std::move(y_new);
            state.z = std::move(z_new);
            state.z0 = std::move(z0_new);
            state.s = std::move(s_new);
            state.iteration = k;
        } catch (const std::exception& e) {
            result.report.aborted = true;
            result.report.abort_reason =
                "iteration " + std::to_string(k) + ": " + e.what();
            result.state = std::move(state);
            return result;
        }
        rec.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.report.iterations.push_back(std::move(rec));

        if (on_iteration && *on_iteration)
            (*on_iteration)(k, state, result.nets, result.report);

        const IterationRecord& r = result.report.iterations.back();
        const double worst = std::max(std::max(r.dist_x, r.dist_y), std::max(r.dist_z, r.dist_z0));
        if (worst < config.tolerance) {
            result.report.stopped_early = true;
            break;
        }
    }

    result.state = std::move(state);
    return result;
}

SolverState sample_after_training(const ModelSpec& model, const TrainedNets& nets,
                                  const NoisePair& noise, std::span<const double> xi) {
    model.validate();
    const TimeGrid& grid = noise.grid;
    const std::size_t paths = noise.w.paths();
    if (xi.size() != paths) throw ConfigError("sample_after_training: xi size mismatch");
    if (nets.u.input_dim() != 3 || nets.s.input_dim() != 2 || nets.v.extra_dim() != 1)
        throw ConfigError("sample_after_training: network shapes do not match the solver layout");

    SolverState st = SolverState::zeros(paths, grid);
    st.s = eval_statistic_paths(nets.s, noise.w0, grid);

    // GRU hidden states depend only on the common noise; precompute them and
    // apply the head with the running X during stepping.
    std::vector<std::size_t> idx(paths);
    for (std::size_t i = 0; i < paths; ++i) idx[i] = i;
    const auto features = common_noise_features(noise.w0, grid, idx);
    const auto hidden = nets.v.hidden_sequence(features);

    for (std::size_t i = 0; i < paths; ++i) st.x.at(i, 0) = xi[i];

    const double dt = grid.dt();
    std::uint64_t clamp_count = 0;
    ad::Tape tape;
    Mat inputs(paths, 3);
    Mat xcol(paths, 1);

    for (std::size_t j = 0; j <= grid.steps(); ++j) {
        const double t = grid.node(j);
        for (std::size_t i = 0; i < paths; ++i) {
            decoupling_features(t, st.x.at(i, j), st.s.at(i, j), &inputs(i, 0));
            xcol(i, 0) = st.x.at(i, j);
        }
        tape.reset();
        auto ev = nets.u.forward_on_tape(tape, inputs, true);
        tape.backward(tape.sum_all(ev.output));
        const Mat& y = tape.value(ev.output);
        const Mat& gin = tape.grad(ev.input);
        const Mat z0 = nets.v.head(hidden[j], &xcol);

        for (std::size_t i = 0; i < paths; ++i) {
            st.y.at(i, j) = y(i, 0);
            st.z.at(i, j) = model.sigma(t, st.x.at(i, j)) * gin(i, 1);
            st.z0.at(i, j) = z0(i, 0);
        }

        if (j == grid.steps()) break;
        for (std::size_t i = 0; i < paths; ++i) {
            const double x = st.x.at(i, j);
            const double yv = clamp_backward_arg(model, st.y.at(i, j), clamp_count);
            const double mu = model.drift(t, x, yv, st.z.at(i, j), st.z0.at(i, j),
                                          st.s.at(i, j));
            const double dw = noise.w.at(i, j + 1) - noise.w.at(i, j);
            const double dw0 = noise.w0.at(i, j + 1) - noise.w0.at(i, j);
            const double next =
                x + mu * dt + model.sigma(t, x) * dw + model.sigma0(t, x) * dw0;
            if (!std::isfinite(next))
                throw SimulationError("sample_after_training: non-finite state on path " +
                                      std::to_string(i) + " at step " + std::to_string(j + 1));
            st.x.at(i, j + 1) = next;
        }
    }
    return st;
}

} // namespace mvfbsde
