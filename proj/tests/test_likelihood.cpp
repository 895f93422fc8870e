#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "flexnoise/dataset.hpp"
#include "flexnoise/error.hpp"
#include "flexnoise/likelihood.hpp"
#include "flexnoise/noise_models.hpp"
#include "flexnoise/priors.hpp"

using namespace flexnoise;

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// explicit inverse and determinant, no factorization shared with the library
double dense_oracle(const VectorXd& y, const VectorXd& mean, const MatrixXd& cov)
{
    const VectorXd r = y - mean;
    const MatrixXd inv = cov.inverse();
    const double logdet = std::log(cov.determinant());
    return -0.5 * (static_cast<double>(y.size()) * kLog2Pi + logdet + r.dot(inv * r));
}

double dense_oracle_lu(const VectorXd& y, const VectorXd& mean, const MatrixXd& cov)
{
    const VectorXd r = y - mean;
    Eigen::FullPivLU<MatrixXd> lu(cov);
    const MatrixXd inv = lu.inverse();
    const double logdet = lu.matrixLU().diagonal().array().abs().log().sum();
    return -0.5 * (static_cast<double>(y.size()) * kLog2Pi + logdet + r.dot(inv * r));
}

double univariate(double x, double m, double s)
{
    const double z = (x - m) / s;
    return -0.5 * z * z - std::log(s) - 0.5 * std::log(2.0 * std::numbers::pi);
}

VectorXd randn(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0)
{
    std::normal_distribution<double> n01;
    VectorXd v(n);
    for (auto& x : v) {
        x = scale * n01(rng);
    }
    return v;
}

// f(t) = c, one identity-transformed flat parameter
class ConstantModel final : public ForwardModel {
public:
    std::vector<ParameterSpec> parameters() const override { return {{"c", Transform::Identity, FlatPrior{}}}; }
    VectorXd simulate(const VectorXd& theta, const VectorXd& times) const override
    {
        return VectorXd::Constant(times.size(), theta[0]);
    }
    VectorXd initial_guess(const Dataset&) const override { return VectorXd::Zero(1); }
};

} // namespace

TEST_CASE("mvn_logpdf examples")
{
    const VectorXd one = VectorXd::Constant(1, 0.7);
    CHECK(mvn_logpdf(one, one, SparseCovariance::from_diagonal(VectorXd::Ones(1))) ==
          doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-15));
    CHECK(mvn_logpdf(one, one, SparseCovariance::from_diagonal(VectorXd::Ones(1))) == doctest::Approx(-0.9189385));
    const VectorXd two = VectorXd::Zero(2);
    CHECK(mvn_logpdf(two, two, SparseCovariance::from_diagonal(VectorXd::Ones(2))) == doctest::Approx(-1.8378771));

    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        MatrixXd a(5, 5);
        for (int i = 0; i < 5; ++i) {
            a.row(i) = randn(rng, 5).transpose();
        }
        const MatrixXd cov = a.transpose() * a + MatrixXd::Identity(5, 5);
        const VectorXd y = randn(rng, 5, 2.0);
        const VectorXd m = randn(rng, 5);
        const double ref = dense_oracle(y, m, cov);
        CHECK(std::abs(mvn_logpdf(y, m, SparseCovariance::from_dense(cov)) - ref) / std::abs(ref) < 1e-8);
        CHECK(std::abs(mvn_logpdf_dense(y, m, cov) - ref) / std::abs(ref) < 1e-8);
    }

    CHECK_THROWS_AS(mvn_logpdf(VectorXd::Zero(3), VectorXd::Zero(2), SparseCovariance::from_diagonal(VectorXd::Ones(3))),
                    InputError);
    CHECK_THROWS_AS(mvn_logpdf(VectorXd::Zero(3), VectorXd::Zero(3), SparseCovariance::from_diagonal(VectorXd::Ones(2))),
                    InputError);
}

TEST_CASE("diagonal covariance equals a sum of univariate densities")
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.1, 3.0);
    for (Eigen::Index n : {1, 10, 100, 1000}) {
        VectorXd sd(n);
        for (auto& s : sd) {
            s = u(rng);
        }
        const VectorXd y = randn(rng, n, 2.0);
        const VectorXd m = randn(rng, n);
        double ref = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            ref += univariate(y[i], m[i], sd[i]);
        }
        const double got = mvn_logpdf(y, m, SparseCovariance::from_diagonal(sd.array().square().matrix()));
        CHECK(std::abs(got - ref) <= 1e-10 * std::abs(ref));
    }
}

TEST_CASE("sparse and dense paths agree without truncation")
{
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index n = 30 + static_cast<Eigen::Index>(100 * u(rng));
        const auto t = linspace(0.0, 10.0, n);
        const StationaryKernelSpec spec{KernelKind::Laplacian, 0.5 + u(rng), 0.5 + 3.0 * u(rng)};
        const auto cov = build_covariance(spec, t, 0.0);
        const VectorXd y = randn(rng, n);
        const VectorXd m = VectorXd::Zero(n);
        const double dense = mvn_logpdf_dense(y, m, dense_covariance(spec, t));
        CHECK(std::abs(mvn_logpdf(y, m, cov) - dense) / std::abs(dense) < 1e-8);
        CHECK(std::abs(dense - dense_oracle_lu(y, m, dense_covariance(spec, t))) / std::abs(dense) < 1e-8);
    }
}

TEST_CASE("gp_log_prior")
{
    VectorXd g1 = VectorXd::Constant(1, 3.0);
    const SeHyper h{0.4, 1.0, 2.0};
    CHECK(gp_log_prior(VectorXd::Constant(1, 0.4), g1, h) ==
          doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-12));

    VectorXd far(2);
    far << 0.0, 1000.0;
    VectorXd v(2);
    v << 0.9, -0.3;
    const SeHyper h2{0.1, 1.5, 1.0};
    CHECK(std::abs(gp_log_prior(v, far, h2) - (univariate(0.9, 0.1, 1.5) + univariate(-0.3, 0.1, 1.5))) < 1e-6);

    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        VectorXd grid(10);
        double t = 0.0;
        for (auto& x : grid) {
            t += 0.5 + u(rng);
            // dyadic points so the shifted differences are exact
            x = std::round(t * 1024.0) / 1024.0;
        }
        const SeHyper hh{u(rng) - 0.5, 0.5 + u(rng), 0.8 + u(rng)};
        MatrixXd k(10, 10);
        for (int i = 0; i < 10; ++i) {
            for (int j = 0; j < 10; ++j) {
                const double d = grid[i] - grid[j];
                k(i, j) = hh.alpha * hh.alpha * std::exp(-d * d / (2.0 * hh.beta * hh.beta));
            }
        }
        const VectorXd vals = randn(rng, 10);
        const double ref = dense_oracle_lu(vals, VectorXd::Constant(10, hh.mu), k);
        CHECK(gp_log_prior(vals, grid, hh) == doctest::Approx(ref).epsilon(1e-8));
        // time translation
        const VectorXd shifted = (grid.array() + 1024.0).matrix();
        CHECK(gp_log_prior(vals, shifted, hh) == doctest::Approx(gp_log_prior(vals, grid, hh)).epsilon(1e-10));
    }
}

TEST_CASE("GpPrior whitening round trip")
{
    const auto grid = linspace(0.0, 50.0, 30);
    const GpPrior prior(grid, SeHyper{0.5, 1.0, 8.0});
    std::mt19937_64 rng(12);
    const VectorXd w = randn(rng, 30);
    const VectorXd v = prior.from_whitened(w);
    CHECK((prior.to_whitened(v) - w).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(prior.log_density(v) == doctest::Approx(gp_log_prior(v, grid, prior.hyper())).epsilon(1e-10));
    // the smoothed start is a prior draw's whitening, finite and not wild
    const VectorXd rough = randn(rng, 30, 3.0);
    const VectorXd ws = prior.smooth_whitened(rough, 0.1);
    CHECK(ws.allFinite());
    CHECK(ws.norm() < prior.to_whitened(rough).norm());
}

TEST_CASE("log_prior_density examples")
{
    CHECK(log_prior_density(BetaPrior{1.0, 1.0}, 0.3) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(log_prior_density(NormalPrior{0.0, 4.0}, 0.0) ==
          doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi * 16.0)).epsilon(1e-15));
    CHECK(log_prior_density(UniformPrior{1.0, 3.0}, 2.0) == doctest::Approx(-std::log(2.0)));
    CHECK(log_prior_density(UniformPrior{1.0, 3.0}, 3.5) == -INFINITY);
    CHECK(log_prior_density(BetaPrior{2.0, 2.0}, 1.5) == -INFINITY);
    CHECK(log_prior_density(FlatPrior{}, 1e300) == 0.0);
    CHECK(log_prior_density(BetaPrior{2.0, 3.0}, 0.4) == doctest::Approx(std::log(12.0 * 0.4 * 0.36)));

    CHECK(make_normal_prior(1.0, 4.0, PriorScale::Variance).sd == doctest::Approx(2.0));
    CHECK(make_normal_prior(1.0, 4.0).sd == 4.0);

    CHECK_THROWS_AS(validate_prior(NormalPrior{0.0, 0.0}), InputError);
    CHECK_THROWS_AS(validate_prior(BetaPrior{0.0, 1.0}), InputError);
    CHECK_THROWS_AS(validate_prior(ShiftedGammaPrior{1.0, -1.0, 0.0}), InputError);
    CHECK_THROWS_AS(validate_prior(UniformPrior{2.0, 1.0}), InputError);
}

TEST_CASE("shifted gamma against a quadrature-normalized density")
{
    const double a = 0.01;
    const double b = 100.0;
    const double s = 0.3;
    const ShiftedGammaPrior spec{a, b, -s};
    // integral of u^(a-1) exp(-b u) over u > 0, with x = u^a to remove the singularity
    auto integrand = [&](double x) { return std::exp(-b * std::pow(x, 1.0 / a)) / a; };
    double err = 0.0;
    const double z = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, 0.0, 1.2, 25, 1e-13, &err);
    for (double phi : {-0.29, -0.2, 0.5}) {
        const double u = phi + s;
        const double ref = (a - 1.0) * std::log(u) - b * u - std::log(z);
        CHECK(std::abs(log_prior_density(spec, phi) - ref) < 1e-6);
    }
    CHECK(log_prior_density(spec, -0.31) == -INFINITY);
}

TEST_CASE("log posterior: flat priors and identity transform give the likelihood")
{
    std::mt19937_64 rng(15);
    const auto t = linspace(0.0, 5.0, 40);
    const VectorXd y = (randn(rng, 40).array() + 1.5).matrix();
    const auto cov = build_covariance(StationaryKernelSpec{KernelKind::Laplacian, 1.2, 0.4}, t);
    auto model = std::make_shared<ConstantModel>();
    auto noise = std::make_shared<FixedCovarianceNoise>(cov);
    const LogPosterior post(Dataset(t, y), model, noise);
    for (double c : {-1.0, 0.0, 1.5, 4.0}) {
        const VectorXd phi = VectorXd::Constant(1, c);
        CHECK(post(phi) == doctest::Approx(mvn_logpdf(y, VectorXd::Constant(40, c), cov)).epsilon(1e-14));
    }
}

TEST_CASE("log posterior: logistic with IID noise")
{
    std::mt19937_64 rng(16);
    const auto t = linspace(0.0, 100.0, 60);
    const auto f = logistic_solve({0.08, 50.0, 2.0}, t);
    const VectorXd y = f + randn(rng, 60, 3.0);
    auto model = std::make_shared<LogisticModel>(2.0);
    const LogPosterior post(Dataset(t, y), model, std::make_shared<IidNoise>());
    VectorXd theta(3);
    theta << 0.08, 50.0, 3.0;
    double ref = 0.0;
    for (Eigen::Index i = 0; i < 60; ++i) {
        ref += univariate(y[i], f[i], 3.0);
    }
    CHECK(post.log_likelihood_constrained(theta) == doctest::Approx(ref).epsilon(1e-12));

    // round trip through the unconstrained space
    const VectorXd phi = post.to_unconstrained(theta);
    CHECK((post.to_constrained(phi) - theta).cwiseAbs().maxCoeff() < 1e-12 * 50.0);
    const double expected = ref + log_prior_unconstrained(post.parameters(), phi);
    CHECK(post(phi) == doctest::Approx(expected).epsilon(1e-12));
    // Jacobian: uniform priors on r and K add log r + log K
    const double pri = -std::log(10.0) - std::log(1e4) + phi[0] + phi[1] + log_prior_density(NormalPrior{0.0, 5.0}, phi[2]);
    CHECK(log_prior_unconstrained(post.parameters(), phi) == doctest::Approx(pri).epsilon(1e-12));

    // outside the uniform prior on r
    VectorXd out = phi;
    out[0] = std::log(20.0);
    CHECK(post(out) == -INFINITY);
    VectorXd nan_phi = phi;
    nan_phi[1] = NAN;
    CHECK(post(nan_phi) == -INFINITY);
    CHECK(post.names() == std::vector<std::string>{"r", "K", "sigma"});
}

TEST_CASE("AR(1) likelihood equals the dense kernel form")
{
    std::mt19937_64 rng(20);
    for (double rho : {-0.6, 0.0, 0.5, 0.8, 0.95}) {
        const Eigen::Index n = 80;
        const double sigma = 2.3;
        MatrixXd cov(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                cov(i, j) = sigma * sigma * std::pow(rho, static_cast<double>(std::abs(i - j)));
            }
        }
        const VectorXd r = randn(rng, n, 2.0);
        const double ref = dense_oracle_lu(r, VectorXd::Zero(n), cov);
        CHECK(ar1_logpdf(r, rho, sigma) == doctest::Approx(ref).epsilon(1e-10));
        VectorXd th(2);
        th << rho, sigma;
        const auto t = linspace(0.0, 1.0, n);
        CHECK(Ar1Noise().log_likelihood(r, VectorXd::Zero(n), t, th) == doctest::Approx(ref).epsilon(1e-10));
    }
}

TEST_CASE("kernel, multiplicative and fixed-block likelihoods")
{
    std::mt19937_64 rng(21);
    const Eigen::Index n = 60;
    const auto t = linspace(0.0, 30.0, n);
    const VectorXd r = randn(rng, n, 1.5);

    VectorXd th(2);
    th << 1.4, 2.2;
    const StationaryKernelSpec spec{KernelKind::Laplacian, 1.4, 2.2};
    CHECK(KernelNoise().log_likelihood(r, VectorXd::Zero(n), t, th) ==
          doctest::Approx(dense_oracle_lu(r, VectorXd::Zero(n), dense_covariance(spec, t))).epsilon(1e-9));

    const VectorXd f = logistic_solve({0.08, 50.0, 2.0}, t);
    th << 2.0, 0.0075;
    double ref = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        ref += univariate(r[i], 0.0, 0.0075 * f[i] * f[i]);
    }
    CHECK(MultiplicativeNoise().log_likelihood(r, f, t, th) == doctest::Approx(ref).epsilon(1e-12));

    const FixedBlockNoise blocks({20, 25, 15});
    VectorXd tb(6);
    tb << 0.5, 1.0, 3.0, 2.0, 1.2, 0.7;
    double sum = 0.0;
    Eigen::Index start = 0;
    const std::array<Eigen::Index, 3> sizes{20, 25, 15};
    for (int j = 0; j < 3; ++j) {
        const StationaryKernelSpec bs{KernelKind::Laplacian, tb[2 * j + 1], tb[2 * j]};
        const auto seg = t.segment(start, sizes[static_cast<std::size_t>(j)]);
        sum += dense_oracle_lu(r.segment(start, sizes[static_cast<std::size_t>(j)]),
                               VectorXd::Zero(sizes[static_cast<std::size_t>(j)]), dense_covariance(bs, seg));
        start += sizes[static_cast<std::size_t>(j)];
    }
    CHECK(blocks.log_likelihood(r, VectorXd::Zero(n), t, tb) == doctest::Approx(sum).epsilon(1e-9));
    CHECK(blocks.n_params() == 6);
}

TEST_CASE("covariance profile")
{
    const auto t = linspace(0.0, 9.0, 10);
    const double L = -1.0 / std::log(0.8);
    const auto prof = covariance_profile(build_covariance(StationaryKernelSpec{KernelKind::Laplacian, 3.0, L}, t));
    CHECK((prof.sd.array() - 3.0).abs().maxCoeff() < 1e-12);
    CHECK((prof.lag1.head(9).array() - 0.8).abs().maxCoeff() < 1e-12);
    CHECK(std::isnan(prof.lag1[9]));

    VectorXd th(2);
    th << 0.8, 3.0;
    const auto ar = Ar1Noise().profile(VectorXd::Zero(10), t, th);
    CHECK((ar.sd.array() - 3.0).abs().maxCoeff() < 1e-12);
    CHECK((ar.lag1.head(9).array() - 0.8).abs().maxCoeff() < 1e-12);
}
