#include "flexnoise/likelihood.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>

#include "flexnoise/error.hpp"
#include "flexnoise/noise_models.hpp"

namespace flexnoise {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_dims(const VectorXd& y, const VectorXd& mean, Eigen::Index n)
{
    if (y.size() != mean.size() || y.size() != n) {
        throw InputError("mvn_logpdf: dimension mismatch (y " + std::to_string(y.size()) + ", mean " +
                         std::to_string(mean.size()) + ", covariance " + std::to_string(n) + ")");
    }
}

} // namespace

double mvn_logpdf(const VectorXd& y, const VectorXd& mean, const SparseCovariance& cov)
{
    check_dims(y, mean, cov.size());
    const VectorXd r = y - mean;
    const double n = static_cast<double>(y.size());
    return -0.5 * (n * kLog2Pi + cov.log_det() + cov.quad_form(r));
}

double mvn_logpdf_dense(const VectorXd& y, const VectorXd& mean, const MatrixXd& cov)
{
    check_dims(y, mean, cov.rows());
    Eigen::LLT<MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("mvn_logpdf_dense: covariance is not positive definite");
    }
    const VectorXd z = llt.matrixL().solve(y - mean);
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return -0.5 * (static_cast<double>(y.size()) * kLog2Pi + log_det + z.squaredNorm());
}

double normal_logpdf(double x, double mean, double sd)
{
    const double z = (x - mean) / sd;
    return -0.5 * z * z - std::log(sd) - 0.5 * kLog2Pi;
}

void SeHyper::validate() const
{
    if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(mu)) {
        throw InputError("GP hyperparameters: need alpha > 0, beta > 0 and finite mu");
    }
}

MatrixXd se_covariance(const VectorXd& grid, const SeHyper& hyper)
{
    hyper.validate();
    const auto n = grid.size();
    MatrixXd k(n, n);
    const double a2 = hyper.alpha * hyper.alpha;
    const double inv = 1.0 / (2.0 * hyper.beta * hyper.beta);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double d = grid[i] - grid[j];
            k(i, j) = a2 * std::exp(-d * d * inv);
            k(j, i) = k(i, j);
        }
    }
    return k;
}

GpPrior::GpPrior(VectorXd grid, SeHyper hyper)
    : grid_(std::move(grid)),
      hyper_(hyper),
      cov_(SparseCovariance::from_dense(se_covariance(grid_, hyper_), 0.0)),
      factor_(cov_.factor_dense())
{
    require_increasing(grid_, "GpPrior");
}

double GpPrior::log_density(const VectorXd& values) const
{
    return mvn_logpdf(values, VectorXd::Constant(values.size(), hyper_.mu), cov_);
}

VectorXd GpPrior::from_whitened(const VectorXd& w) const
{
    return (factor_.triangularView<Eigen::Lower>() * w).array() + hyper_.mu;
}

VectorXd GpPrior::to_whitened(const VectorXd& values) const
{
    return cov_.solve_lower((values.array() - hyper_.mu).matrix());
}

VectorXd GpPrior::smooth_whitened(const VectorXd& values, double noise_var) const
{
    const auto n = values.size();
    const MatrixXd l = factor_.triangularView<Eigen::Lower>();
    MatrixXd k = l * l.transpose();
    k.diagonal().array() += noise_var;
    const VectorXd alpha = k.llt().solve((values.array() - hyper_.mu).matrix());
    return l.transpose() * alpha.head(n);
}

double gp_log_prior(const VectorXd& values, const VectorXd& grid, const SeHyper& hyper)
{
    if (values.size() != grid.size()) {
        throw InputError("gp_log_prior: values must match the grid");
    }
    return GpPrior(grid, hyper).log_density(values);
}

// ---------------------------------------------------------------------------

LogPosterior::LogPosterior(const Dataset& data, std::shared_ptr<const ForwardModel> model,
                           std::shared_ptr<const NoiseModel> noise)
    : data_(data), model_(std::move(model)), noise_(std::move(noise))
{
    specs_ = model_->parameters();
    n_model_ = specs_.size();
    for (auto& p : noise_->parameters()) {
        specs_.push_back(std::move(p));
    }
    for (const auto& p : specs_) {
        validate_prior(p.prior);
    }
}

std::vector<std::string> LogPosterior::names() const
{
    std::vector<std::string> out;
    for (const auto& p : specs_) {
        out.push_back(p.name);
    }
    return out;
}

VectorXd LogPosterior::to_constrained(const VectorXd& phi) const
{
    return transform_to_constrained(specs_, phi);
}

VectorXd LogPosterior::to_unconstrained(const VectorXd& theta) const
{
    return transform_to_unconstrained(specs_, theta);
}

double LogPosterior::log_likelihood_constrained(const VectorXd& theta) const
{
    const auto nm = static_cast<Eigen::Index>(n_model_);
    const VectorXd mean = model_->simulate(theta.head(nm), data_.times());
    const VectorXd residual = data_.values() - mean;
    return noise_->log_likelihood(residual, mean, data_.times(), theta.tail(theta.size() - nm));
}

double LogPosterior::operator()(const VectorXd& phi) const
{
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    if (phi.size() != static_cast<Eigen::Index>(specs_.size())) {
        throw InputError("LogPosterior: expected " + std::to_string(specs_.size()) + " parameters");
    }
    if (!phi.allFinite()) {
        return kNegInf;
    }
    const double prior = log_prior_unconstrained(specs_, phi);
    if (!std::isfinite(prior)) {
        return kNegInf;
    }
    try {
        const double ll = log_likelihood_constrained(to_constrained(phi));
        if (!std::isfinite(ll)) {
            return kNegInf;
        }
        return ll + prior;
    } catch (const Error& e) {
        if (failures_.fetch_add(1) == 0) {
            std::clog << "flexnoise: rejected point (" << e.what() << ")\n";
        }
        return kNegInf;
    }
}

} // namespace flexnoise
