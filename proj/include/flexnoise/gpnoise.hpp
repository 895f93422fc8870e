#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flexnoise/fitting.hpp"
#include "flexnoise/kernels.hpp"
#include "flexnoise/likelihood.hpp"
#include "flexnoise/noise_models.hpp"

namespace flexnoise {

/// GP priors on log L(t) and log sigma(t).
struct GpHyper {
    SeHyper length;
    SeHyper sigma;
};

/// beta such that exp(-(n_c dt)^2 / (2 beta^2)) = zeta.
double set_beta(double n_c, double dt, double zeta = 0.01);

/// mu = 0, alpha = 1 and beta from set_beta for both processes.
GpHyper default_gp_hyper(double dt, double n_c = 200.0, double zeta = 0.01);

struct WindowStats {
    VectorXd variance;
    VectorXd lag1;
};

/// Centered windows truncated at the ends. Variance uses the window mean with divisor
/// (n - 1); lag1 is the sample correlation of consecutive pairs inside the window, 0 when
/// either side has zero variance.
WindowStats sliding_window_stats(const VectorXd& residuals, Eigen::Index window);

/// Adaptive local-statistics Wiener filter.
VectorXd wiener_smooth(const VectorXd& series, Eigen::Index window);

struct InitOptions {
    Eigen::Index window_sd = 51;
    Eigen::Index window_rho = 51;
    Eigen::Index wiener_window = 11;
    Eigen::Index coarse_stride = 5;
};

/// Steps 3-5 of the initialization from given residuals on a uniform grid.
NonStationaryState init_from_residuals(const VectorXd& residuals, const VectorXd& times, const InitOptions& options);

/// Full initialization: IID fit, residuals, windowed statistics, smoothing.
NonStationaryState init_nonstationary(const Dataset& data, std::shared_ptr<const ForwardModel> model,
                                      const InitOptions& options, VectorXd* theta_iid = nullptr);

struct GpOptions {
    double n_c = 200.0;
    double zeta = 0.01;
    Eigen::Index coarse_stride = 5;
    Eigen::Index wiener_window = 11;
    /// Restart k uses windows[k % size] for both statistics.
    std::vector<Eigen::Index> windows = {51, 31, 101};
    int restarts = 3;
    double threshold = kDefaultTruncation;
    OptimizeOptions optimizer = {400, 1e-6, 10, 1e-6};
    SamplerOptions sampler;
};

struct GpStart {
    VectorXd theta;
    NonStationaryState state;
};

struct GpMapResult {
    VectorXd theta;
    NonStationaryState state;
    double log_posterior = 0.0;
    bool converged = false;
    std::vector<double> restart_scores;
    std::vector<std::string> restart_messages;
    std::size_t best_restart = 0;
};

/// Joint MAP of (theta, log L grid, log sigma grid) from each start; the best one wins.
GpMapResult fit_map(const Dataset& data, std::shared_ptr<const ForwardModel> model, const std::vector<GpStart>& starts,
                    const GpHyper& hyper, const GpOptions& options);

/// Starts generated from the initialization with the configured window widths.
GpMapResult fit_map(const Dataset& data, std::shared_ptr<const ForwardModel> model, const GpHyper& hyper,
                    const GpOptions& options);

/// Joint log posterior at (theta, state), in the same units the optimizer uses.
double gp_joint_log_posterior(const Dataset& data, const ForwardModel& model, const VectorXd& theta,
                              const NonStationaryState& state, const GpHyper& hyper,
                              double threshold = kDefaultTruncation);

struct GpFitResult {
    GpMapResult map;
    std::shared_ptr<const SparseCovariance> covariance;
    PosteriorSample posterior;
};

/// MAP of the kernel process, then MCMC over theta with the covariance fixed at the MAP.
GpFitResult run_algorithm1(const Dataset& data, std::shared_ptr<const ForwardModel> model, const GpOptions& options);

} // namespace flexnoise
