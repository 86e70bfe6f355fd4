#include "mvfbsde/scores.hpp"

namespace mvfbsde {

double quadratic_score(double statistic, double realization,
                       const std::function<double(double)>& phi) {
    const double v = phi ? phi(realization) : realization;
    const double d = v - statistic;
    return d * d;
}

double pinball_score(double statistic, double realization, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("pinball_score: alpha must be in (0,1)");
    // Classic check loss: undershoot (x >= s) penalized by alpha, overshoot
    // by 1 - alpha, so the expected score is minimized at the alpha-quantile.
    const double ind = (realization >= statistic) ? 1.0 : 0.0;
    return (ind - (1.0 - alpha)) * (realization - statistic);
}

double score_batch_loss(const ScoreFunction& score, const Mat& statistics,
                        const Mat& realizations, std::span<const double> node_weights) {
    require_same_shape(statistics, realizations, "score_batch_loss");
    if (node_weights.size() != statistics.cols())
        throw ConfigError("score_batch_loss: one weight per grid node required");
    double acc = 0.0;
    double wsum = 0.0;
    for (double w : node_weights) {
        if (!(w > 0.0)) throw ConfigError("score_batch_loss: weights must be positive");
        wsum += w;
    }
    for (std::size_t i = 0; i < statistics.rows(); ++i)
        for (std::size_t j = 0; j < statistics.cols(); ++j)
            acc += node_weights[j] * score(statistics(i, j), realizations(i, j));
    return acc / (wsum * static_cast<double>(statistics.rows()));
}

} // namespace mvfbsde
