#pragma once

#include "mvfbsde/errors.hpp"
#include "mvfbsde/mat.hpp"

#include <functional>
#include <span>
#include <string>

namespace mvfbsde {

/// (phi(x) − s)²; elicits the conditional mean of phi(X).
double quadratic_score(double statistic, double realization,
                       const std::function<double(double)>& phi = {});

/// Check loss (1_{x≥s} − (1−alpha))(x − s); elicits the conditional
/// alpha-quantile. The indicator uses ≥, so the kink at x = s scores zero
/// from either side.
double pinball_score(double statistic, double realization, double alpha);

enum class ScoreKind { Mean, Quantile };

/// Evaluation rule for an elicitable statistic: the statistic is the
/// minimizer of the expected score. Mean uses the quadratic rule with an
/// optional transform phi; Quantile uses the pinball rule at level alpha.
struct ScoreFunction {
    ScoreKind kind = ScoreKind::Mean;
    double alpha = 0.5;
    std::function<double(double)> phi; // identity when empty (Mean only)

    static ScoreFunction mean() { return {ScoreKind::Mean, 0.5, {}}; }
    static ScoreFunction mean_of(std::function<double(double)> transform) {
        return {ScoreKind::Mean, 0.5, std::move(transform)};
    }
    static ScoreFunction quantile(double alpha) {
        if (!(alpha > 0.0 && alpha < 1.0))
            throw ConfigError("quantile score: alpha must be in (0,1)");
        return {ScoreKind::Quantile, alpha, {}};
    }

    double operator()(double statistic, double realization) const {
        if (kind == ScoreKind::Mean) return quadratic_score(statistic, realization, phi);
        return pinball_score(statistic, realization, alpha);
    }

    /// Applies phi to a realization (identity for quantile scores).
    double transform(double realization) const {
        if (kind == ScoreKind::Mean && phi) return phi(realization);
        return realization;
    }

    bool differentiable_in_statistic() const { return kind == ScoreKind::Mean; }
    std::string kind_name() const { return kind == ScoreKind::Mean ? "mean" : "quantile"; }
};

/// Weighted mean of pointwise scores over a (paths × nodes) panel; weights
/// are per node and broadcast across paths.
double score_batch_loss(const ScoreFunction& score, const Mat& statistics,
                        const Mat& realizations, std::span<const double> node_weights);

} // namespace mvfbsde
