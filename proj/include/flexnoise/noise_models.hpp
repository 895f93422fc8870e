#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flexnoise/dataset.hpp"
#include "flexnoise/kernels.hpp"
#include "flexnoise/priors.hpp"
#include "flexnoise/sparse_covariance.hpp"

namespace flexnoise {

/// Marginal standard deviation and lag-1 autocorrelation of a noise process per time point.
/// `lag1[i]` is the correlation between points i and i+1 (last entry NaN).
struct NoiseProfile {
    VectorXd sd;
    VectorXd lag1;
};

/// Likelihood of residuals y - f under a parametric noise process.
class NoiseModel {
public:
    virtual ~NoiseModel() = default;

    virtual std::string label() const = 0;
    virtual std::vector<ParameterSpec> parameters() const = 0;

    /// `theta` is in the constrained space; `mean` is the model trajectory.
    virtual double log_likelihood(const VectorXd& residual, const VectorXd& mean, const VectorXd& times,
                                  const VectorXd& theta) const = 0;

    /// Constrained starting values from residuals of a preliminary fit.
    virtual VectorXd initial_guess(const VectorXd& residual, const VectorXd& mean,
                                   const VectorXd& times) const = 0;

    virtual NoiseProfile profile(const VectorXd& mean, const VectorXd& times, const VectorXd& theta) const = 0;

    std::size_t n_params() const { return parameters().size(); }
};

/// Diffuse default priors for noise parameters.
PriorSpec default_log_sigma_prior();
PriorSpec default_log_length_prior();

class IidNoise final : public NoiseModel {
public:
    std::string label() const override { return "iid"; }
    std::vector<ParameterSpec> parameters() const override;
    double log_likelihood(const VectorXd& residual, const VectorXd& mean, const VectorXd& times,
                          const VectorXd& theta) const override;
    VectorXd initial_guess(const VectorXd& residual, const VectorXd& mean, const VectorXd& times) const override;
    NoiseProfile profile(const VectorXd& mean, const VectorXd& times, const VectorXd& theta) const override;
};

/// Stationary AR(1) with marginal sd sigma, evaluated exactly in O(N). theta = (rho, sigma).
class Ar1Noise final : public NoiseModel {
public:
    std::string label() const override { return "ar1"; }
    std::vector<ParameterSpec> parameters() const override;
    double log_likelihood(const VectorXd& residual, const VectorXd& mean, const VectorXd& times,
                          const VectorXd& theta) const override;
    VectorXd initial_guess(const VectorXd& residual, const VectorXd& mean, const VectorXd& times) const override;
    NoiseProfile profile(const VectorXd& mean, const VectorXd& times, const VectorXd& theta) const override;
};

double ar1_logpdf(const VectorXd& residual, double rho, double sigma);

/// Multivariate normal with a stationary kernel covariance. theta = (sigma, L).
class KernelNoise final : public NoiseModel {
public:
    explicit KernelNoise(KernelKind kind = KernelKind::Laplacian, double nu = 0.5,
                         double threshold = kDefaultTruncation);

    std::string label() const override { return to_string(kind_); }
    std::vector<ParameterSpec> parameters() const override;
    double log_likelihood(const VectorXd& residual, const VectorXd& mean, const VectorXd& times,
                          const VectorXd& theta) const override;
    VectorXd initial_guess(const VectorXd& residual, const VectorXd& mean, const VectorXd& times) const override;
    NoiseProfile profile(const VectorXd& mean, const VectorXd& times, const VectorXd& theta) const override;

private:
    KernelKind kind_;
    double nu_;
    double threshold_;
};

/// y = f + f^eta v, v ~ N(0, sigma^2). theta = (eta, sigma).
class MultiplicativeNoise final : public NoiseModel {
public:
    std::string label() const override { return "multiplicative"; }
    std::vector<ParameterSpec> parameters() const override;
    double log_likelihood(const VectorXd& residual, const VectorXd& mean, const VectorXd& times,
                          const VectorXd& theta) const override;
    VectorXd initial_guess(const VectorXd& residual, const VectorXd& mean, const VectorXd& times) const override;
    NoiseProfile profile(const VectorXd& mean, const VectorXd& times, const VectorXd& theta) const override;
};

/// Parameter-free likelihood with a fixed covariance matrix.
class FixedCovarianceNoise final : public NoiseModel {
public:
    explicit FixedCovarianceNoise(SparseCovariance cov, std::string label = "fixed");

    std::string label() const override { return label_; }
    std::vector<ParameterSpec> parameters() const override { return {}; }
    double log_likelihood(const VectorXd& residual, const VectorXd& mean, const VectorXd& times,
                          const VectorXd& theta) const override;
    VectorXd initial_guess(const VectorXd&, const VectorXd&, const VectorXd&) const override { return {}; }
    NoiseProfile profile(const VectorXd& mean, const VectorXd& times, const VectorXd& theta) const override;

    const SparseCovariance& covariance() const { return cov_; }

private:
    SparseCovariance cov_;
    std::string label_;
};

/// Block-diagonal stationary kernels on fixed consecutive blocks.
/// theta = (L_1, sigma_1, L_2, sigma_2, ...), priors normal on the logs.
class FixedBlockNoise final : public NoiseModel {
public:
    FixedBlockNoise(std::vector<Eigen::Index> sizes, KernelKind kind = KernelKind::Laplacian,
                    NormalPrior log_length_prior = {-4.0, 4.0}, NormalPrior log_sigma_prior = {0.0, 4.0});

    std::string label() const override { return "block_fixed"; }
    std::vector<ParameterSpec> parameters() const override;
    double log_likelihood(const VectorXd& residual, const VectorXd& mean, const VectorXd& times,
                          const VectorXd& theta) const override;
    VectorXd initial_guess(const VectorXd& residual, const VectorXd& mean, const VectorXd& times) const override;
    NoiseProfile profile(const VectorXd& mean, const VectorXd& times, const VectorXd& theta) const override;

    const std::vector<Eigen::Index>& sizes() const { return sizes_; }

private:
    std::vector<Eigen::Index> sizes_;
    KernelKind kind_;
    NormalPrior log_length_prior_;
    NormalPrior log_sigma_prior_;
};

/// Lag-1 autocorrelation C(i,i+1)/sqrt(C(i,i) C(i+1,i+1)) of any covariance.
NoiseProfile covariance_profile(const SparseCovariance& cov);

} // namespace flexnoise
