#pragma once

#include "mvfbsde/model_spec.hpp"
#include "mvfbsde/nets.hpp"

#include <span>
#include <utility>
#include <vector>

namespace mvfbsde {

/// Interbank borrowing/lending benchmark. The combined driving noise is
/// B = rho·W0 + sqrt(1-rho²)·W, split across the two diffusion slots as
/// sigma(t,x) = sigma·sqrt(1-rho²) and sigma0(t,x) = sigma·rho.
struct SystemicRiskParams {
    double a = 1.0;
    double q = 1.0;
    double c = 1.0;
    double sigma = 1.0;
    double epsilon = 10.0;
    double rho = 0.3;
    double horizon = 1.0;
    double xi_mean = 0.0;
    double xi_var = 4.0;

    void validate() const;
};

/// Roots delta± = -(a+q) ± sqrt((a+q)² + (epsilon - q²)) of the Riccati
/// characteristic polynomial. Throws on a negative discriminant.
std::pair<double, double> riccati_roots(const SystemicRiskParams& p);

/// Closed-form Riccati solution with eta(T) = c. The published display
/// carries "e^{(d+-d-)(T-t)} - 2" in the numerator, which violates the
/// terminal condition (eta(T) != c at the benchmark parameters); pass
/// printed_form = true to evaluate that variant for documentation.
double riccati_eta(double t, const SystemicRiskParams& p, bool printed_form = false);

/// Grid-sampled closed-form machinery: eta, theta = a+q+eta, and the
/// integrating factor Theta(t) = ∫theta (trapezoid on the grid).
class SystemicRiskAnalytic {
public:
    SystemicRiskAnalytic(const SystemicRiskParams& params, const TimeGrid& grid);

    const SystemicRiskParams& params() const { return params_; }
    const TimeGrid& grid() const { return grid_; }
    double eta(std::size_t node) const { return eta_[node]; }
    double big_theta(std::size_t node) const { return big_theta_[node]; }

    /// Z consistent with the two-noise decomposition: sigma·sqrt(1-rho²)·eta.
    double z_decomposed(std::size_t node) const;
    /// Z as printed in the closed-form table: sigma·eta.
    double z_printed(std::size_t node) const;

    /// Evaluates the closed forms per path on the supplied noise. S uses the
    /// empirical mean of the xi samples (the statistic of the realized
    /// cohort); stochastic integrals use the left-point rule; the drift
    /// integral uses the trapezoid rule. SolverState.z carries the
    /// decomposition-consistent candidate.
    SolverState evaluate(std::span<const double> xi, const NoisePair& noise) const;

private:
    SystemicRiskParams params_;
    TimeGrid grid_;
    std::vector<double> eta_;
    std::vector<double> theta_;
    std::vector<double> big_theta_;
};

ModelSpec systemic_risk_model(const SystemicRiskParams& p);

/// Same coefficients as the systemic-risk model; the interaction statistic
/// is the alpha-quantile instead of the mean.
ModelSpec quantile_interaction_model(const SystemicRiskParams& p, double alpha);

/// Consumption-savings game with endogenous interest rate r = C·S.
struct GrowthModelParams {
    double curvature = 1.5;    // C in F(K) = (C/2)K²
    double depreciation = 0.1; // delta
    double sigma = 0.1;
    double rho = 0.0;
    double horizon = 1.0;
    double k0_mean = 0.5;
    double k0_sd = 0.5;
    double y_clamp = 1e-3; // |Y| floor inside 1/Y terms

    void validate() const;
};

ModelSpec growth_model(const GrowthModelParams& p);

/// Optimal consumption c* = 1/Y of the growth model.
double growth_optimal_consumption(double y);

/// One marginal-propensity-to-consume sample: -Z/(sigma·Y²) evaluated from
/// the trained decoupling field at (t, K, r). Points where |Y| falls below
/// the clamp are flagged and carry no value.
struct MpcPoint {
    double capital = 0.0;
    double rate = 0.0;
    double mpc = 0.0;
    bool flagged = false;
};

std::vector<MpcPoint> mpc_surface(const FeedForwardNet& u_net, const GrowthModelParams& p,
                                  std::span<const double> capital_grid,
                                  std::span<const double> rate_grid, double t);

/// Draws one initial value per path from the model's initial law, using
/// per-path substreams of `seed`.
std::vector<double> sample_initial_batch(const ModelSpec& model, std::size_t paths,
                                         std::uint64_t seed);

} // namespace mvfbsde
