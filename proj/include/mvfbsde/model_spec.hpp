#pragma once

#include "mvfbsde/nets.hpp"
#include "mvfbsde/path_batch.hpp"
#include "mvfbsde/rng.hpp"
#include "mvfbsde/scores.hpp"

#include <functional>
#include <optional>
#include <string>

namespace mvfbsde {

/// Problem definition: coefficients of the forward/backward pair, terminal
/// map, score for the mean-field statistic, and the initial-law sampler.
/// All shipped models are scalar in state, backward process and statistic.
struct ModelSpec {
    std::string name;
    double horizon = 1.0;

    std::function<double(double t, double x, double y, double z, double z0, double s)> drift;
    std::function<double(double t, double x)> sigma;
    std::function<double(double t, double x)> sigma0;
    std::function<double(double t, double x, double y, double z, double z0, double s)> driver;
    std::function<double(double x, double s)> terminal;
    ScoreFunction score;
    std::function<double(Rng&)> sample_initial;

    /// Driver-safety clamp: |y| is raised to this floor inside drift/driver
    /// evaluations (models with 1/Y singularities). Clamp events are counted
    /// by the fits and reported.
    std::optional<double> y_clamp_abs;

    /// Constant starting guess for the Y paths; zero paths when absent.
    std::optional<double> initial_y_guess;

    void validate() const {
        if (name.empty()) throw ConfigError("ModelSpec: name required");
        if (!(horizon > 0.0)) throw ConfigError("ModelSpec: horizon must be positive");
        if (!drift || !sigma || !sigma0 || !driver || !terminal || !sample_initial)
            throw ConfigError("ModelSpec '" + name + "': incomplete coefficient set");
    }
};

/// The five process batches of one outer Picard iterate on a shared grid.
struct SolverState {
    std::size_t iteration = 0;
    PathBatch x, y, z, z0, s;

    static SolverState zeros(std::size_t paths, const TimeGrid& grid) {
        SolverState st;
        st.x = PathBatch("X", paths, grid);
        st.y = PathBatch("Y", paths, grid);
        st.z = PathBatch("Z", paths, grid);
        st.z0 = PathBatch("Z0", paths, grid);
        st.s = PathBatch("S", paths, grid);
        return st;
    }

    void validate() const {
        if (!x.same_shape(y) || !x.same_shape(z) || !x.same_shape(z0) || !x.same_shape(s))
            throw ConfigError("SolverState: batch shapes disagree");
        if (!x.all_finite() || !y.all_finite() || !z.all_finite() || !z0.all_finite() ||
            !s.all_finite())
            throw SimulationError("SolverState: non-finite values");
    }
};

/// Inner-loop budgets for one outer iteration.
struct TrainingPlan {
    std::size_t epochs_y = 1000;
    std::size_t epochs_z0 = 500;
    std::size_t epochs_s = 1000;
    std::size_t batch = 2048;
    /// Terminal-node loss weight p_T; interior nodes weigh 1. Defaults to
    /// N/2 for an N-step grid when unset.
    std::optional<double> terminal_weight;
    double picard_tol = 1e-6;
    std::size_t picard_max_inner = 80;
    AdamConfig adam;

    double resolved_terminal_weight(const TimeGrid& grid) const {
        return terminal_weight ? *terminal_weight : static_cast<double>(grid.steps()) / 2.0;
    }

    void validate() const {
        if (epochs_y == 0 || epochs_z0 == 0 || epochs_s == 0 || batch == 0)
            throw ConfigError("TrainingPlan: counts must be positive");
        if (terminal_weight && !(*terminal_weight > 0.0))
            throw ConfigError("TrainingPlan: terminal weight must be positive");
        if (!(picard_tol > 0.0)) throw ConfigError("TrainingPlan: picard_tol must be positive");
    }
};

} // namespace mvfbsde
