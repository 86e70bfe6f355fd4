#include "mvfbsde/validation.hpp"

#include "mvfbsde/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace mvfbsde {

const ProcessErrorReport& ErrorReport::process(const std::string& name) const {
    for (const auto& p : processes)
        if (p.name == name) return p;
    throw UsageError("ErrorReport: unknown process " + name);
}

namespace {

ProcessErrorReport process_errors(const PathBatch& approx, const PathBatch& reference) {
    const std::size_t paths = approx.paths(), nodes = approx.nodes();
    ProcessErrorReport rep;
    rep.name = reference.name().empty() ? approx.name() : reference.name();
    rep.node_bias.resize(nodes);
    rep.node_rmse.resize(nodes);
    for (auto& band : rep.bands) band.resize(nodes);

    double sum_err = 0.0, sum_sq = 0.0, sum_ref = 0.0, sum_ref_sq = 0.0;
    std::vector<double> errs(paths);
    const std::array<double, 5> qs{0.05, 0.25, 0.50, 0.75, 0.95};
    for (std::size_t j = 0; j < nodes; ++j) {
        double nb = 0.0, ns = 0.0;
        for (std::size_t i = 0; i < paths; ++i) {
            const double e = approx.at(i, j) - reference.at(i, j);
            errs[i] = e;
            nb += e;
            ns += e * e;
            const double r = reference.at(i, j);
            sum_ref += r;
            sum_ref_sq += r * r;
        }
        sum_err += nb;
        sum_sq += ns;
        rep.node_bias[j] = nb / static_cast<double>(paths);
        rep.node_rmse[j] = std::sqrt(ns / static_cast<double>(paths));
        std::sort(errs.begin(), errs.end());
        for (std::size_t b = 0; b < qs.size(); ++b) {
            const std::size_t pos = std::min(
                paths - 1, static_cast<std::size_t>(qs[b] * static_cast<double>(paths)));
            rep.bands[b][j] = errs[pos];
        }
    }
    const double n = static_cast<double>(paths * nodes);
    rep.bias = sum_err / n;
    rep.rmse = std::sqrt(sum_sq / n);
    const double ref_mean = sum_ref / n;
    const double sst = sum_ref_sq - n * ref_mean * ref_mean;
    if (sst > 1e-12 * n) {
        rep.r2 = 1.0 - sum_sq / sst;
        rep.r2_defined = true;
    }
    return rep;
}

} // namespace

ErrorReport compare_to_reference(const SolverState& approx, const SolverState& reference) {
    if (!approx.x.same_shape(reference.x)) throw ConfigError("compare_to_reference: shape mismatch");
    ErrorReport rep;
    rep.processes.push_back(process_errors(approx.x, reference.x));
    rep.processes.push_back(process_errors(approx.y, reference.y));
    rep.processes.push_back(process_errors(approx.z, reference.z));
    rep.processes.push_back(process_errors(approx.z0, reference.z0));
    rep.processes.push_back(process_errors(approx.s, reference.s));
    return rep;
}

double empirical_statistic(std::vector<double> values, const ScoreFunction& score) {
    if (values.empty()) throw UsageError("empirical_statistic: empty sample");
    if (score.kind == ScoreKind::Quantile) {
        std::sort(values.begin(), values.end());
        const std::size_t pos = std::min(
            values.size() - 1,
            static_cast<std::size_t>(score.alpha * static_cast<double>(values.size())));
        return values[pos];
    }
    double acc = 0.0;
    for (double v : values) acc += score.transform(v);
    return acc / static_cast<double>(values.size());
}

namespace {

// Builds the nested ensemble: fresh idiosyncratic noise, the fixed common
// path broadcast to every copy, and initial draws per spec.
struct NestedEnsemble {
    NoisePair noise;
    std::vector<double> xi;
};

NestedEnsemble build_ensemble(const ModelSpec& model, std::span<const double> common_path,
                              const TimeGrid& grid, const NestedOracleSpec& spec) {
    if (common_path.size() != grid.nodes())
        throw ConfigError("nested oracle: common path must have one value per grid node");
    if (spec.m_idio < 1000) throw ConfigError("nested oracle: m_idio must be at least 1000");
    NestedEnsemble ens;
    ens.noise = sample_noise(grid, spec.m_idio, 1, mix_seed(spec.seed, 0xA));
    for (std::size_t i = 0; i < spec.m_idio; ++i)
        for (std::size_t j = 0; j < grid.nodes(); ++j)
            ens.noise.w0.at(i, j) = common_path[j];

    ens.xi.resize(spec.m_idio);
    if (spec.cohort) {
        if (spec.cohort->empty()) throw ConfigError("nested oracle: empty cohort");
        Rng rng(mix_seed(spec.seed, 0xB));
        for (double& v : ens.xi) v = (*spec.cohort)[rng.index(spec.cohort->size())];
    } else {
        ens.xi = sample_initial_batch(model, spec.m_idio, mix_seed(spec.seed, 0xB));
    }
    return ens;
}

std::vector<double> statistic_per_node(const PathBatch& x, const ScoreFunction& score) {
    const std::size_t nodes = x.nodes();
    std::vector<double> out(nodes);
    parallel_for(nodes, [&](std::size_t j) {
        std::vector<double> col(x.paths());
        for (std::size_t i = 0; i < x.paths(); ++i) col[i] = x.at(i, j);
        out[j] = empirical_statistic(std::move(col), score);
    });
    return out;
}

} // namespace

std::vector<double> nested_conditional_oracle(const ModelSpec& model, const TrainedNets& nets,
                                              std::span<const double> common_path,
                                              const TimeGrid& grid,
                                              const NestedOracleSpec& spec) {
    const auto ens = build_ensemble(model, common_path, grid, spec);
    const SolverState st = sample_after_training(model, nets, ens.noise, ens.xi);
    return statistic_per_node(st.x, model.score);
}

std::vector<double> nested_conditional_oracle_analytic(const SystemicRiskAnalytic& analytic,
                                                       const ScoreFunction& statistic,
                                                       std::span<const double> common_path,
                                                       const NestedOracleSpec& spec) {
    const ModelSpec model = systemic_risk_model(analytic.params());
    const auto ens = build_ensemble(model, common_path, analytic.grid(), spec);
    const SolverState st = analytic.evaluate(ens.xi, ens.noise);
    return statistic_per_node(st.x, statistic);
}

ResidualStats bsde_residual(const SolverState& state, const ModelSpec& model,
                            const NoisePair& noise) {
    const TimeGrid& grid = noise.grid;
    if (state.x.nodes() != grid.nodes() || state.x.paths() != noise.w.paths())
        throw ConfigError("bsde_residual: state/noise shape mismatch");
    const std::size_t paths = state.x.paths();
    const std::size_t steps = grid.steps();
    const double dt = grid.dt();

    ResidualStats stats;
    stats.node_rms.assign(steps, 0.0);
    double sum_r = 0.0, sum_dy = 0.0;
    std::uint64_t clamps = 0;
    for (std::size_t j = 0; j < steps; ++j) {
        double node_sum = 0.0;
        for (std::size_t i = 0; i < paths; ++i) {
            const double y = clamp_backward_arg(model, state.y.at(i, j), clamps);
            const double f = model.driver(grid.node(j), state.x.at(i, j), y, state.z.at(i, j),
                                          state.z0.at(i, j), state.s.at(i, j));
            const double dy = state.y.at(i, j + 1) - state.y.at(i, j);
            const double dw = noise.w.at(i, j + 1) - noise.w.at(i, j);
            const double dw0 = noise.w0.at(i, j + 1) - noise.w0.at(i, j);
            const double r = dy + f * dt - state.z.at(i, j) * dw - state.z0.at(i, j) * dw0;
            node_sum += r * r;
            sum_r += r * r;
            sum_dy += dy * dy;
        }
        stats.node_rms[j] = std::sqrt(node_sum / static_cast<double>(paths));
    }
    const double n = static_cast<double>(paths * steps);
    stats.rms_residual = std::sqrt(sum_r / n);
    stats.rms_dy = std::sqrt(sum_dy / n);
    stats.relative = stats.rms_dy > 0.0 ? stats.rms_residual / stats.rms_dy : 0.0;
    return stats;
}

} // namespace mvfbsde
