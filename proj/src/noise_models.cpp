#include "flexnoise/noise_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "flexnoise/error.hpp"
#include "flexnoise/likelihood.hpp"

namespace flexnoise {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double sample_sd(const VectorXd& x)
{
    if (x.size() < 2) {
        return std::abs(x.size() == 1 ? x[0] : 0.0);
    }
    const double m = x.mean();
    return std::sqrt((x.array() - m).square().sum() / static_cast<double>(x.size() - 1));
}

double lag1_correlation(const VectorXd& x)
{
    const auto n = x.size();
    if (n < 3) {
        return 0.0;
    }
    const VectorXd a = x.head(n - 1);
    const VectorXd b = x.tail(n - 1);
    const double ma = a.mean();
    const double mb = b.mean();
    const double sab = ((a.array() - ma) * (b.array() - mb)).sum();
    const double saa = (a.array() - ma).square().sum();
    const double sbb = (b.array() - mb).square().sum();
    if (saa <= 0.0 || sbb <= 0.0) {
        return 0.0;
    }
    return sab / std::sqrt(saa * sbb);
}

double mean_spacing(const VectorXd& times)
{
    if (times.size() < 2) {
        return 1.0;
    }
    return (times[times.size() - 1] - times[0]) / static_cast<double>(times.size() - 1);
}

double length_from_rho(double rho, double dt)
{
    const double a = std::clamp(std::abs(rho), 1e-3, 0.999);
    return -dt / std::log(a);
}

double positive_or(double x, double fallback)
{
    return (x > 0.0 && std::isfinite(x)) ? x : fallback;
}

void check_sizes(const VectorXd& residual, const VectorXd& times, const VectorXd& theta, std::size_t expected)
{
    if (residual.size() != times.size()) {
        throw InputError("noise model: residual and time grid differ in length");
    }
    if (theta.size() != static_cast<Eigen::Index>(expected)) {
        throw InputError("noise model: expected " + std::to_string(expected) + " parameters");
    }
}

} // namespace

PriorSpec default_log_sigma_prior()
{
    return NormalPrior{0.0, 5.0};
}

PriorSpec default_log_length_prior()
{
    return NormalPrior{0.0, 5.0};
}

// ---------------------------------------------------------------------------

std::vector<ParameterSpec> IidNoise::parameters() const
{
    return {{"sigma", Transform::Log, default_log_sigma_prior(), PriorSpace::Unconstrained}};
}

double IidNoise::log_likelihood(const VectorXd& residual, const VectorXd&, const VectorXd& times,
                                const VectorXd& theta) const
{
    check_sizes(residual, times, theta, 1);
    const double sigma = theta[0];
    if (!(sigma > 0.0)) {
        return -std::numeric_limits<double>::infinity();
    }
    const double n = static_cast<double>(residual.size());
    return -0.5 * n * kLog2Pi - n * std::log(sigma) - 0.5 * residual.squaredNorm() / (sigma * sigma);
}

VectorXd IidNoise::initial_guess(const VectorXd& residual, const VectorXd&, const VectorXd&) const
{
    VectorXd out(1);
    out << positive_or(sample_sd(residual), 1.0);
    return out;
}

NoiseProfile IidNoise::profile(const VectorXd&, const VectorXd& times, const VectorXd& theta) const
{
    NoiseProfile p{VectorXd::Constant(times.size(), theta[0]), VectorXd::Zero(times.size())};
    p.lag1[times.size() - 1] = kNaN;
    return p;
}

// ---------------------------------------------------------------------------

double ar1_logpdf(const VectorXd& residual, double rho, double sigma)
{
    if (!(sigma > 0.0) || !(std::abs(rho) < 1.0)) {
        return -std::numeric_limits<double>::infinity();
    }
    const auto n = residual.size();
    double total = normal_logpdf(residual[0], 0.0, sigma);
    const double innov = sigma * std::sqrt(1.0 - rho * rho);
    const double log_norm = -std::log(innov) - 0.5 * kLog2Pi;
    double ss = 0.0;
    for (Eigen::Index i = 1; i < n; ++i) {
        const double e = residual[i] - rho * residual[i - 1];
        ss += e * e;
    }
    total += static_cast<double>(n - 1) * log_norm - 0.5 * ss / (innov * innov);
    return total;
}

std::vector<ParameterSpec> Ar1Noise::parameters() const
{
    return {{"rho", Transform::Identity, UniformPrior{-1.0, 1.0}, PriorSpace::Constrained},
            {"sigma", Transform::Log, default_log_sigma_prior(), PriorSpace::Unconstrained}};
}

double Ar1Noise::log_likelihood(const VectorXd& residual, const VectorXd&, const VectorXd& times,
                                const VectorXd& theta) const
{
    check_sizes(residual, times, theta, 2);
    return ar1_logpdf(residual, theta[0], theta[1]);
}

VectorXd Ar1Noise::initial_guess(const VectorXd& residual, const VectorXd&, const VectorXd&) const
{
    VectorXd out(2);
    out << std::clamp(lag1_correlation(residual), -0.95, 0.95), positive_or(sample_sd(residual), 1.0);
    return out;
}

NoiseProfile Ar1Noise::profile(const VectorXd&, const VectorXd& times, const VectorXd& theta) const
{
    NoiseProfile p{VectorXd::Constant(times.size(), theta[1]), VectorXd::Constant(times.size(), theta[0])};
    p.lag1[times.size() - 1] = kNaN;
    return p;
}

// ---------------------------------------------------------------------------

KernelNoise::KernelNoise(KernelKind kind, double nu, double threshold)
    : kind_(kind), nu_(nu), threshold_(threshold)
{
}

std::vector<ParameterSpec> KernelNoise::parameters() const
{
    return {{"sigma", Transform::Log, default_log_sigma_prior(), PriorSpace::Unconstrained},
            {"L", Transform::Log, default_log_length_prior(), PriorSpace::Unconstrained}};
}

double KernelNoise::log_likelihood(const VectorXd& residual, const VectorXd&, const VectorXd& times,
                                   const VectorXd& theta) const
{
    check_sizes(residual, times, theta, 2);
    const StationaryKernelSpec spec{kind_, theta[0], theta[1], nu_};
    const auto cov = build_covariance(spec, times, threshold_);
    return mvn_logpdf(residual, VectorXd::Zero(residual.size()), cov);
}

VectorXd KernelNoise::initial_guess(const VectorXd& residual, const VectorXd&, const VectorXd& times) const
{
    VectorXd out(2);
    out << positive_or(sample_sd(residual), 1.0), length_from_rho(lag1_correlation(residual), mean_spacing(times));
    return out;
}

NoiseProfile KernelNoise::profile(const VectorXd&, const VectorXd& times, const VectorXd& theta) const
{
    const auto n = times.size();
    const StationaryKernelSpec spec{kind_, theta[0], theta[1], nu_};
    NoiseProfile p{VectorXd::Constant(n, theta[0]), VectorXd(n)};
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        p.lag1[i] = kernel_eval(spec, times[i], times[i + 1]) / (theta[0] * theta[0]);
    }
    p.lag1[n - 1] = kNaN;
    return p;
}

// ---------------------------------------------------------------------------

std::vector<ParameterSpec> MultiplicativeNoise::parameters() const
{
    return {{"eta", Transform::Identity, UniformPrior{-5.0, 5.0}, PriorSpace::Constrained},
            {"sigma", Transform::Log, default_log_sigma_prior(), PriorSpace::Unconstrained}};
}

double MultiplicativeNoise::log_likelihood(const VectorXd& residual, const VectorXd& mean,
                                           const VectorXd& times, const VectorXd& theta) const
{
    check_sizes(residual, times, theta, 2);
    if (mean.size() != residual.size()) {
        throw InputError("MultiplicativeNoise: trajectory length mismatch");
    }
    const double eta = theta[0];
    const double sigma = theta[1];
    double total = 0.0;
    for (Eigen::Index i = 0; i < residual.size(); ++i) {
        const double sd = sigma * std::pow(std::abs(mean[i]), eta);
        if (!(sd > 0.0) || !std::isfinite(sd)) {
            return -std::numeric_limits<double>::infinity();
        }
        total += normal_logpdf(residual[i], 0.0, sd);
    }
    return total;
}

VectorXd MultiplicativeNoise::initial_guess(const VectorXd& residual, const VectorXd& mean,
                                            const VectorXd&) const
{
    // least squares of log|r| on log|f|; E log|Z| = -0.635 for a standard normal
    std::vector<double> xs;
    std::vector<double> ys;
    for (Eigen::Index i = 0; i < residual.size(); ++i) {
        if (std::abs(residual[i]) > 0.0 && std::abs(mean[i]) > 0.0) {
            xs.push_back(std::log(std::abs(mean[i])));
            ys.push_back(std::log(std::abs(residual[i])));
        }
    }
    double eta = 0.0;
    double log_sigma = 0.0;
    if (xs.size() >= 3) {
        const double n = static_cast<double>(xs.size());
        const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
        const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
        double sxy = 0.0;
        double sxx = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sxy += (xs[i] - mx) * (ys[i] - my);
            sxx += (xs[i] - mx) * (xs[i] - mx);
        }
        eta = sxx > 0.0 ? std::clamp(sxy / sxx, -4.5, 4.5) : 0.0;
        log_sigma = my - eta * mx + 0.635;
    }
    VectorXd out(2);
    out << eta, std::exp(log_sigma);
    return out;
}

NoiseProfile MultiplicativeNoise::profile(const VectorXd& mean, const VectorXd& times, const VectorXd& theta) const
{
    const auto n = times.size();
    NoiseProfile p{VectorXd(n), VectorXd::Zero(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        p.sd[i] = theta[1] * std::pow(std::abs(mean[i]), theta[0]);
    }
    p.lag1[n - 1] = kNaN;
    return p;
}

// ---------------------------------------------------------------------------

FixedCovarianceNoise::FixedCovarianceNoise(SparseCovariance cov, std::string label)
    : cov_(std::move(cov)), label_(std::move(label))
{
}

double FixedCovarianceNoise::log_likelihood(const VectorXd& residual, const VectorXd&, const VectorXd& times,
                                            const VectorXd& theta) const
{
    check_sizes(residual, times, theta, 0);
    return mvn_logpdf(residual, VectorXd::Zero(residual.size()), cov_);
}

NoiseProfile FixedCovarianceNoise::profile(const VectorXd&, const VectorXd&, const VectorXd&) const
{
    return covariance_profile(cov_);
}

NoiseProfile covariance_profile(const SparseCovariance& cov)
{
    const auto n = cov.size();
    NoiseProfile p{VectorXd(n), VectorXd(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        p.sd[i] = std::sqrt(cov(i, i));
    }
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        p.lag1[i] = cov(i + 1, i) / (p.sd[i] * p.sd[i + 1]);
    }
    p.lag1[n - 1] = kNaN;
    return p;
}

// ---------------------------------------------------------------------------

FixedBlockNoise::FixedBlockNoise(std::vector<Eigen::Index> sizes, KernelKind kind, NormalPrior log_length_prior,
                                 NormalPrior log_sigma_prior)
    : sizes_(std::move(sizes)), kind_(kind), log_length_prior_(log_length_prior), log_sigma_prior_(log_sigma_prior)
{
    if (sizes_.empty()) {
        throw InputError("FixedBlockNoise: need at least one block");
    }
    for (auto s : sizes_) {
        if (s < 1) {
            throw InputError("FixedBlockNoise: block sizes must be positive");
        }
    }
}

std::vector<ParameterSpec> FixedBlockNoise::parameters() const
{
    std::vector<ParameterSpec> out;
    for (std::size_t j = 0; j < sizes_.size(); ++j) {
        const auto tag = std::to_string(j + 1);
        out.push_back({"L_" + tag, Transform::Log, log_length_prior_, PriorSpace::Unconstrained});
        out.push_back({"sigma_" + tag, Transform::Log, log_sigma_prior_, PriorSpace::Unconstrained});
    }
    return out;
}

double FixedBlockNoise::log_likelihood(const VectorXd& residual, const VectorXd&, const VectorXd& times,
                                       const VectorXd& theta) const
{
    check_sizes(residual, times, theta, 2 * sizes_.size());
    const auto total = std::accumulate(sizes_.begin(), sizes_.end(), Eigen::Index{0});
    if (total != residual.size()) {
        throw InputError("FixedBlockNoise: block sizes do not sum to the series length");
    }
    double ll = 0.0;
    Eigen::Index start = 0;
    for (std::size_t j = 0; j < sizes_.size(); ++j) {
        const auto n = sizes_[j];
        const StationaryKernelSpec spec{kind_, theta[static_cast<Eigen::Index>(2 * j + 1)],
                                        theta[static_cast<Eigen::Index>(2 * j)], 0.5};
        const auto cov = build_covariance(spec, times.segment(start, n));
        ll += mvn_logpdf(residual.segment(start, n), VectorXd::Zero(n), cov);
        start += n;
    }
    return ll;
}

VectorXd FixedBlockNoise::initial_guess(const VectorXd& residual, const VectorXd&, const VectorXd& times) const
{
    VectorXd out(static_cast<Eigen::Index>(2 * sizes_.size()));
    Eigen::Index start = 0;
    const double dt = mean_spacing(times);
    for (std::size_t j = 0; j < sizes_.size(); ++j) {
        const VectorXd seg = residual.segment(start, sizes_[j]);
        out[static_cast<Eigen::Index>(2 * j)] = length_from_rho(lag1_correlation(seg), dt);
        out[static_cast<Eigen::Index>(2 * j + 1)] = positive_or(sample_sd(seg), 1.0);
        start += sizes_[j];
    }
    return out;
}

NoiseProfile FixedBlockNoise::profile(const VectorXd&, const VectorXd& times, const VectorXd& theta) const
{
    const auto n = times.size();
    NoiseProfile p{VectorXd(n), VectorXd::Zero(n)};
    Eigen::Index start = 0;
    for (std::size_t j = 0; j < sizes_.size(); ++j) {
        const double length = theta[static_cast<Eigen::Index>(2 * j)];
        const double sigma = theta[static_cast<Eigen::Index>(2 * j + 1)];
        const StationaryKernelSpec spec{kind_, sigma, length, 0.5};
        for (Eigen::Index i = start; i < start + sizes_[j]; ++i) {
            p.sd[i] = sigma;
            if (i + 1 < start + sizes_[j]) {
                p.lag1[i] = kernel_eval(spec, times[i], times[i + 1]) / (sigma * sigma);
            }
        }
        start += sizes_[j];
    }
    p.lag1[n - 1] = kNaN;
    return p;
}

} // namespace flexnoise
