#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flexnoise/dataset.hpp"
#include "flexnoise/models.hpp"
#include "flexnoise/sparse_covariance.hpp"

namespace flexnoise {

class NoiseModel;

/// -1/2 [N ln 2pi + ln det Sigma + r^T Sigma^-1 r] with r = y - mean, via the cached factor.
double mvn_logpdf(const VectorXd& y, const VectorXd& mean, const SparseCovariance& cov);

/// Same density through a dense Cholesky of the full matrix (no truncation, no jitter).
double mvn_logpdf_dense(const VectorXd& y, const VectorXd& mean, const MatrixXd& cov);

double normal_logpdf(double x, double mean, double sd);

/// Squared-exponential GP prior: constant mean mu, covariance alpha^2 exp(-dt^2 / 2 beta^2).
struct SeHyper {
    double mu = 0.0;
    double alpha = 1.0;
    double beta = 1.0;

    void validate() const;
};

MatrixXd se_covariance(const VectorXd& grid, const SeHyper& hyper);

/// Factorized GP prior on a fixed grid, reused across evaluations.
class GpPrior {
public:
    GpPrior(VectorXd grid, SeHyper hyper);

    double log_density(const VectorXd& values) const;
    /// mu + L w for the Cholesky factor L (whitened parameterization).
    VectorXd from_whitened(const VectorXd& w) const;
    VectorXd to_whitened(const VectorXd& values) const;
    /// Whitened coordinates of the GP regression mean of noisy `values` (noise variance
    /// `noise_var`): a smooth point of the prior close to rough input.
    VectorXd smooth_whitened(const VectorXd& values, double noise_var) const;
    const SparseCovariance& covariance() const { return cov_; }
    const SeHyper& hyper() const { return hyper_; }

private:
    VectorXd grid_;
    SeHyper hyper_;
    SparseCovariance cov_;
    MatrixXd factor_;
};

double gp_log_prior(const VectorXd& values, const VectorXd& grid, const SeHyper& hyper);

/// Posterior over the stacked unconstrained vector (model phi, noise phi).
class LogPosterior {
public:
    LogPosterior(const Dataset& data, std::shared_ptr<const ForwardModel> model,
                 std::shared_ptr<const NoiseModel> noise);

    /// log likelihood + priors + log-Jacobian; -inf for out-of-support or failed simulation.
    double operator()(const VectorXd& phi) const;
    double log_likelihood_constrained(const VectorXd& theta) const;

    std::size_t n_model() const { return n_model_; }
    std::size_t dimension() const { return specs_.size(); }
    const std::vector<ParameterSpec>& parameters() const { return specs_; }
    std::vector<std::string> names() const;

    VectorXd to_constrained(const VectorXd& phi) const;
    VectorXd to_unconstrained(const VectorXd& theta) const;

    const Dataset& data() const { return data_; }
    const ForwardModel& model() const { return *model_; }
    const NoiseModel& noise() const { return *noise_; }

    /// Number of evaluations that failed in simulation or factorization.
    long failures() const { return failures_.load(); }

private:
    Dataset data_;
    std::shared_ptr<const ForwardModel> model_;
    std::shared_ptr<const NoiseModel> noise_;
    std::vector<ParameterSpec> specs_;
    std::size_t n_model_;
    mutable std::atomic<long> failures_{0};
};

} // namespace flexnoise
