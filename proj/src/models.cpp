#include "mvfbsde/models.hpp"

#include "mvfbsde/parallel.hpp"
#include "mvfbsde/solvers.hpp"
#include "mvfbsde/tape.hpp"

#include <cmath>

namespace mvfbsde {

void SystemicRiskParams::validate() const {
    if (!(sigma > 0.0)) throw ConfigError("systemic_risk: sigma must be positive");
    if (!(rho >= -1.0 && rho <= 1.0)) throw ConfigError("systemic_risk: rho must be in [-1,1]");
    if (!(horizon > 0.0)) throw ConfigError("systemic_risk: horizon must be positive");
    if (!(xi_var >= 0.0)) throw ConfigError("systemic_risk: xi variance must be nonnegative");
    const double disc = (a + q) * (a + q) + (epsilon - q * q);
    if (!(disc > 0.0)) throw ConfigError("systemic_risk: (a+q)^2 + (epsilon - q^2) must be > 0");
}

std::pair<double, double> riccati_roots(const SystemicRiskParams& p) {
    const double b = p.a + p.q;
    const double disc = b * b + (p.epsilon - p.q * p.q);
    if (disc < 0.0) throw ConfigError("riccati_roots: negative discriminant");
    const double root = std::sqrt(disc);
    return {-b + root, -b - root};
}

double riccati_eta(double t, const SystemicRiskParams& p, bool printed_form) {
    const auto [dp, dm] = riccati_roots(p);
    const double gamma = p.epsilon - p.q * p.q;
    const double e = std::exp((dp - dm) * (p.horizon - t));
    const double shift = printed_form ? 2.0 : 1.0;
    const double num = -gamma * (e - shift) - p.c * (dp * e - dm);
    const double den = (dm * e - dp) - p.c * (e - 1.0);
    return num / den;
}

SystemicRiskAnalytic::SystemicRiskAnalytic(const SystemicRiskParams& params, const TimeGrid& grid)
    : params_(params), grid_(grid) {
    params_.validate();
    const std::size_t nodes = grid.nodes();
    eta_.resize(nodes);
    theta_.resize(nodes);
    big_theta_.resize(nodes);
    for (std::size_t j = 0; j < nodes; ++j) {
        eta_[j] = riccati_eta(grid.node(j), params_);
        theta_[j] = params_.a + params_.q + eta_[j];
    }
    big_theta_[0] = 0.0;
    const double dt = grid.dt();
    for (std::size_t j = 1; j < nodes; ++j)
        big_theta_[j] = big_theta_[j - 1] + 0.5 * dt * (theta_[j - 1] + theta_[j]);
}

double SystemicRiskAnalytic::z_decomposed(std::size_t node) const {
    return params_.sigma * std::sqrt(1.0 - params_.rho * params_.rho) * eta_[node];
}

double SystemicRiskAnalytic::z_printed(std::size_t node) const {
    return params_.sigma * eta_[node];
}

SolverState SystemicRiskAnalytic::evaluate(std::span<const double> xi,
                                           const NoisePair& noise) const {
    if (!(noise.grid == grid_)) throw ConfigError("SystemicRiskAnalytic: grid mismatch");
    const std::size_t paths = noise.w.paths();
    if (xi.size() != paths) throw ConfigError("SystemicRiskAnalytic: xi size mismatch");

    double xi_mean = 0.0;
    for (double v : xi) xi_mean += v;
    xi_mean /= static_cast<double>(paths);

    SolverState st = SolverState::zeros(paths, grid_);
    const double rho = params_.rho;
    const double sig = params_.sigma;
    const double rho_c = std::sqrt(1.0 - rho * rho);
    const std::size_t nodes = grid_.nodes();
    const double dt = grid_.dt();

    parallel_for(paths, [&](std::size_t i) {
        double drift_int = 0.0; // trapezoid of theta(u) S_u e^{Theta(u)}
        double stoch_int = 0.0; // left-point sum of e^{Theta(u)} dB_u
        double prev_g = 0.0;
        for (std::size_t j = 0; j < nodes; ++j) {
            const double s = xi_mean + rho * sig * noise.w0.at(i, j);
            const double g = theta_[j] * s * std::exp(big_theta_[j]);
            if (j > 0) {
                drift_int += 0.5 * dt * (prev_g + g);
                const double db = rho * (noise.w0.at(i, j) - noise.w0.at(i, j - 1)) +
                                  rho_c * (noise.w.at(i, j) - noise.w.at(i, j - 1));
                stoch_int += std::exp(big_theta_[j - 1]) * db;
            }
            prev_g = g;
            const double x =
                std::exp(-big_theta_[j]) * (xi[i] + drift_int + sig * stoch_int);
            st.x.at(i, j) = x;
            st.s.at(i, j) = s;
            st.y.at(i, j) = -eta_[j] * (s - x);
            st.z.at(i, j) = z_decomposed(j);
            st.z0.at(i, j) = 0.0;
        }
    });
    st.iteration = 0;
    return st;
}

ModelSpec systemic_risk_model(const SystemicRiskParams& p) {
    p.validate();
    ModelSpec m;
    m.name = "systemic_risk";
    m.horizon = p.horizon;
    const double aq = p.a + p.q;
    const double eq = p.epsilon - p.q * p.q;
    m.drift = [aq](double, double x, double y, double, double, double s) {
        return aq * (s - x) - y;
    };
    // The benchmark displays dY = +[(a+q)Y + (eps-q^2)(S-X)]dt + Z dW + ...,
    // while the general backward equation carries -f dt; the driver is the
    // negated bracket. (Only this sign makes Y = -eta(t)(S-X) solve the
    // Riccati equation.)
    m.driver = [aq, eq](double, double x, double y, double, double, double s) {
        return -(aq * y + eq * (s - x));
    };
    const double sig_idio = p.sigma * std::sqrt(1.0 - p.rho * p.rho);
    const double sig_common = p.sigma * p.rho;
    m.sigma = [sig_idio](double, double) { return sig_idio; };
    m.sigma0 = [sig_common](double, double) { return sig_common; };
    const double c = p.c;
    m.terminal = [c](double x, double s) { return c * (x - s); };
    m.score = ScoreFunction::mean();
    const double mean = p.xi_mean, sd = std::sqrt(p.xi_var);
    m.sample_initial = [mean, sd](Rng& rng) { return mean + sd * rng.normal(); };
    return m;
}

ModelSpec quantile_interaction_model(const SystemicRiskParams& p, double alpha) {
    ModelSpec m = systemic_risk_model(p);
    m.name = "quantile_interaction";
    m.score = ScoreFunction::quantile(alpha);
    return m;
}

void GrowthModelParams::validate() const {
    if (!(curvature > 0.0)) throw ConfigError("growth: curvature C must be positive");
    if (!(sigma > 0.0)) throw ConfigError("growth: sigma must be positive");
    if (!(rho >= -1.0 && rho <= 1.0)) throw ConfigError("growth: rho must be in [-1,1]");
    if (!(horizon > 0.0)) throw ConfigError("growth: horizon must be positive");
    if (!(k0_sd >= 0.0)) throw ConfigError("growth: initial sd must be nonnegative");
    if (!(y_clamp > 0.0)) throw ConfigError("growth: y clamp must be positive");
}

double growth_optimal_consumption(double y) { return 1.0 / y; }

ModelSpec growth_model(const GrowthModelParams& p) {
    p.validate();
    ModelSpec m;
    m.name = "growth";
    m.horizon = p.horizon;
    const double C = p.curvature, dep = p.depreciation;
    m.drift = [C, dep](double, double k, double y, double, double, double s) {
        const double r = C * s;
        return (r - dep) * k - 1.0 / y;
    };
    m.driver = [C, dep](double, double, double y, double, double, double s) {
        const double r = C * s;
        return (r - dep) * y;
    };
    const double sig_idio = p.sigma * std::sqrt(1.0 - p.rho * p.rho);
    const double sig_common = p.sigma * p.rho;
    m.sigma = [sig_idio](double, double) { return sig_idio; };
    m.sigma0 = [sig_common](double, double) { return sig_common; };
    m.terminal = [](double k, double) { return -k; };
    m.score = ScoreFunction::mean();
    const double mean = p.k0_mean, sd = p.k0_sd;
    m.sample_initial = [mean, sd](Rng& rng) { return mean + sd * rng.normal(); };
    m.y_clamp_abs = p.y_clamp;
    // Y solves a linear BSDE with Y_T = -K_T; starting the iteration at the
    // negated mean initial capital keeps 1/Y finite from iteration one.
    m.initial_y_guess = -p.k0_mean;
    return m;
}

std::vector<MpcPoint> mpc_surface(const FeedForwardNet& u_net, const GrowthModelParams& p,
                                  std::span<const double> capital_grid,
                                  std::span<const double> rate_grid, double t) {
    p.validate();
    if (u_net.input_dim() != 3 || u_net.output_dim() != 1)
        throw ConfigError("mpc_surface: decoupling-field net must be (t,K,S) -> Y");
    const std::size_t nk = capital_grid.size(), nr = rate_grid.size();
    if (nk == 0 || nr == 0) throw ConfigError("mpc_surface: empty query grid");

    Mat inputs(nk * nr, 3);
    for (std::size_t ik = 0; ik < nk; ++ik)
        for (std::size_t ir = 0; ir < nr; ++ir) {
            const std::size_t row = ik * nr + ir;
            // S = r / C inverts the interest-rate map.
            decoupling_features(t, capital_grid[ik], rate_grid[ir] / p.curvature,
                                &inputs(row, 0));
        }

    ad::Tape tape;
    auto ev = u_net.forward_on_tape(tape, inputs, true);
    tape.backward(tape.sum_all(ev.output));
    const Mat& y = tape.value(ev.output);
    const Mat& gin = tape.grad(ev.input);

    const double sig_idio = p.sigma * std::sqrt(1.0 - p.rho * p.rho);
    std::vector<MpcPoint> out(nk * nr);
    for (std::size_t ik = 0; ik < nk; ++ik)
        for (std::size_t ir = 0; ir < nr; ++ir) {
            const std::size_t row = ik * nr + ir;
            MpcPoint& pt = out[row];
            pt.capital = capital_grid[ik];
            pt.rate = rate_grid[ir];
            const double yv = y(row, 0);
            if (std::abs(yv) < p.y_clamp) {
                pt.flagged = true;
                continue;
            }
            const double z = sig_idio * gin(row, 1); // Z = sigma(t,x)·d_x U
            pt.mpc = -z / (p.sigma * yv * yv);
        }
    return out;
}

std::vector<double> sample_initial_batch(const ModelSpec& model, std::size_t paths,
                                         std::uint64_t seed) {
    std::vector<double> xi(paths);
    parallel_for(paths, [&](std::size_t i) {
        Rng rng(mix_seed(seed, i));
        xi[i] = model.sample_initial(rng);
    });
    return xi;
}

} // namespace mvfbsde
