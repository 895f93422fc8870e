#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "flexnoise/likelihood.hpp"
#include "flexnoise/mcmc.hpp"
#include "flexnoise/optimize.hpp"

namespace flexnoise {

struct SamplerOptions {
    int chains = 3;
    long iterations = 20000;
    double warmup_fraction = 0.5;
    std::uint64_t seed = 1;
    bool parallel = true;
    double rhat_threshold = 1.05;
};

/// Maximizes the posterior from a constrained starting point; result.x is unconstrained.
OptimizeResult map_estimate(const LogPosterior& posterior, const VectorXd& theta0, OptimizeOptions options = {});

/// Central-difference Hessian of f.
MatrixXd fd_hessian(const Objective& f, const VectorXd& x, double rel_step = 1e-4);

/// Inverse of the negative Hessian at a mode, or a diagonal fallback when that is not
/// positive definite.
MatrixXd laplace_covariance(const Objective& log_target, const VectorXd& mode);

struct PosteriorSample {
    VectorXd map_phi;
    VectorXd map_theta;
    double map_log_posterior = 0.0;
    /// Constrained draws.
    ChainStore chains;
    std::vector<double> rhat;
    std::vector<double> acceptance;
    bool converged = false;
};

bool all_below(const std::vector<double>& rhat, double threshold);

/// Starts chains around the mode (one draw from its Laplace approximation each) and runs
/// the adaptive sampler. R-hat is computed on the unconstrained draws of every parameter.
PosteriorSample sample_posterior(const LogPosterior& posterior, const VectorXd& map_phi,
                                 const SamplerOptions& options);

/// MAP fit followed by sampling.
PosteriorSample fit_posterior(const LogPosterior& posterior, const VectorXd& theta0, const SamplerOptions& options);

/// Runs a preliminary IID fit of the model and returns (model theta, sigma), constrained.
VectorXd fit_iid_map(const Dataset& data, std::shared_ptr<const ForwardModel> model);

} // namespace flexnoise
