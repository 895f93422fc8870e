#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "flexnoise/dataset.hpp"
#include "flexnoise/error.hpp"
#include "flexnoise/kernels.hpp"
#include "flexnoise/likelihood.hpp"
#include "flexnoise/sparse_covariance.hpp"

using namespace flexnoise;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double laplacian(double s, double L, double d)
{
    return s * s * std::exp(-std::abs(d) / L);
}

NonStationaryState random_state(std::mt19937_64& rng, double t0, double t1, int g)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    NonStationaryState s;
    s.grid_times = linspace(t0, t1, g);
    s.log_length = VectorXd(g);
    s.log_sigma = VectorXd(g);
    for (int k = 0; k < g; ++k) {
        s.log_length[k] = -1.0 + 3.0 * u(rng);
        s.log_sigma[k] = -2.0 + 4.0 * u(rng);
    }
    return s;
}

} // namespace

TEST_CASE("kernel_eval examples")
{
    const StationaryKernelSpec lap{KernelKind::Laplacian, 3.0, 2.0};
    CHECK(kernel_eval(lap, 1.7, 1.7) == doctest::Approx(9.0).epsilon(1e-15));
    CHECK(kernel_eval(lap, 0.0, 2.0) == doctest::Approx(9.0 * std::exp(-1.0)).epsilon(1e-15));
    CHECK(kernel_eval(lap, 0.0, 2.0) == doctest::Approx(3.310914).epsilon(1e-6));

    const StationaryKernelSpec rbf{KernelKind::RBF, 2.0, 0.5};
    CHECK(kernel_eval(rbf, 0.0, 0.3) == doctest::Approx(4.0 * std::exp(-0.09 / 0.5)).epsilon(1e-14));

    CHECK_THROWS_AS((StationaryKernelSpec{KernelKind::Laplacian, 0.0, 1.0}).validate(), InputError);
    CHECK_THROWS_AS((StationaryKernelSpec{KernelKind::Laplacian, 1.0, -1.0}).validate(), InputError);
    CHECK_THROWS_AS((StationaryKernelSpec{KernelKind::Matern, 1.0, 1.0, 0.0}).validate(), InputError);
    CHECK(parse_kernel_kind(to_string(KernelKind::Matern)) == KernelKind::Matern);
    CHECK_THROWS(parse_kernel_kind("cubic"));
}

TEST_CASE("matern with nu = 1/2 is the laplacian")
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 100; ++k) {
        const double s = 0.1 + 5.0 * u(rng);
        const double L = 0.05 + 10.0 * u(rng);
        const double d = 20.0 * u(rng);
        const double ref = laplacian(s, L, d);
        const StationaryKernelSpec m{KernelKind::Matern, s, L, 0.5};
        CHECK(std::abs(kernel_eval(m, 0.0, d) - ref) <= 1e-10 * std::max(ref, 1e-300) + 1e-300);
        CHECK(std::abs(matern_bessel(s, L, 0.5, d) - ref) <= 1e-10 * ref + 1e-300);
    }
}

TEST_CASE("matern against an independent bessel formula")
{
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 50; ++k) {
        const double s = 0.5 + u(rng);
        const double L = 0.5 + 2.0 * u(rng);
        const double nu = 0.3 + 3.0 * u(rng);
        const double d = 0.01 + 5.0 * u(rng);
        const double x = std::sqrt(2.0 * nu) * d / L;
        const double ref = s * s * std::pow(2.0, 1.0 - nu) / boost::math::tgamma(nu) * std::pow(x, nu) *
                           boost::math::cyl_bessel_k(nu, x);
        const StationaryKernelSpec m{KernelKind::Matern, s, L, nu};
        CHECK(kernel_eval(m, 1.0, 1.0 + d) == doctest::Approx(ref).epsilon(1e-10));
        CHECK(kernel_eval(m, 2.0, 2.0) == doctest::Approx(s * s).epsilon(1e-12));
    }
    // 3/2 closed form
    const double d = 0.7;
    const double L = 1.3;
    const double r = std::sqrt(3.0) * d / L;
    CHECK(matern_bessel(1.0, L, 1.5, d) == doctest::Approx((1.0 + r) * std::exp(-r)).epsilon(1e-10));
}

TEST_CASE("kernels are symmetric")
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (auto kind : {KernelKind::RBF, KernelKind::Laplacian, KernelKind::Matern}) {
        const StationaryKernelSpec spec{kind, 1.3, 2.1, 1.7};
        for (int k = 0; k < 100; ++k) {
            const double a = u(rng);
            const double b = u(rng);
            REQUIRE(kernel_eval(spec, a, b) == kernel_eval(spec, b, a));
        }
    }
    std::mt19937_64 rng2(3);
    const auto st = random_state(rng2, -10.0, 10.0, 9);
    for (int k = 0; k < 100; ++k) {
        const double a = u(rng);
        const double b = u(rng);
        REQUIRE(nonstationary_laplacian_eval(st, a, b) == nonstationary_laplacian_eval(st, b, a));
    }
}

TEST_CASE("non-stationary laplacian examples")
{
    std::mt19937_64 rng(7);
    const auto st = random_state(rng, 0.0, 10.0, 6);
    const auto at = interpolate_params(st, VectorXd::Constant(1, 4.2));
    CHECK(nonstationary_laplacian_eval(st, 4.2, 4.2) == doctest::Approx(std::exp(2.0 * at.log_sigma[0])).epsilon(1e-14));

    NonStationaryState c;
    c.grid_times = linspace(0.0, 10.0, 3);
    c.log_length = VectorXd::Constant(3, std::log(1.7));
    c.log_sigma = VectorXd::Constant(3, std::log(2.5));
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int k = 0; k < 100; ++k) {
        const double a = u(rng);
        const double b = u(rng);
        const double ref = laplacian(2.5, std::sqrt(2.0) * 1.7, a - b);
        REQUIRE(std::abs(nonstationary_laplacian_eval(c, a, b) - ref) < 1e-12);
    }
}

TEST_CASE("non-stationary laplacian is positive semi-definite on random states")
{
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        const auto st = random_state(rng, 0.0, 5.0, 4);
        VectorXd t(5);
        for (auto& v : t) {
            v = u(rng);
        }
        std::sort(t.begin(), t.end());
        MatrixXd m(5, 5);
        for (int i = 0; i < 5; ++i) {
            for (int j = 0; j < 5; ++j) {
                m(i, j) = nonstationary_laplacian_eval(st, t[i], t[j]);
            }
        }
        REQUIRE((m - m.transpose()).cwiseAbs().maxCoeff() == 0.0);
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
        REQUIRE(es.eigenvalues().minCoeff() >= -1e-10 * es.eigenvalues().maxCoeff());
    }
}

TEST_CASE("interpolate_params")
{
    NonStationaryState s;
    s.grid_times = VectorXd(2);
    s.grid_times << 0.0, 2.0;
    s.log_length = VectorXd(2);
    s.log_length << 0.0, 2.0;
    s.log_sigma = VectorXd(2);
    s.log_sigma << 1.0, -1.0;
    const auto mid = interpolate_params(s, VectorXd::Constant(1, 1.0));
    CHECK(mid.log_length[0] == doctest::Approx(1.0));
    CHECK(mid.log_sigma[0] == doctest::Approx(0.0));
    CHECK_THROWS_AS(interpolate_params(s, VectorXd::Constant(1, 2.5)), InputError);
    CHECK_THROWS_AS(interpolate_params(s, VectorXd::Constant(1, -0.1)), InputError);

    std::mt19937_64 rng(5);
    const auto st = random_state(rng, 0.0, 9.0, 13);
    const auto same = interpolate_params(st, st.grid_times);
    CHECK(same.log_length == st.log_length);
    CHECK(same.log_sigma == st.log_sigma);

    std::uniform_real_distribution<double> u(0.0, 9.0);
    VectorXd q(200);
    for (auto& v : q) {
        v = u(rng);
    }
    const auto got = interpolate_params(st, q);
    for (Eigen::Index i = 0; i < q.size(); ++i) {
        // straightforward search for the bracketing interval
        Eigen::Index k = 0;
        while (k + 2 < st.grid_size() && st.grid_times[k + 1] < q[i]) {
            ++k;
        }
        const double w = (q[i] - st.grid_times[k]) / (st.grid_times[k + 1] - st.grid_times[k]);
        const double ll = (1 - w) * st.log_length[k] + w * st.log_length[k + 1];
        const double ls = (1 - w) * st.log_sigma[k] + w * st.log_sigma[k + 1];
        REQUIRE(std::abs(got.log_length[i] - ll) < 1e-12);
        REQUIRE(std::abs(got.log_sigma[i] - ls) < 1e-12);
    }
}

TEST_CASE("coarse grid keeps every k-th point and the last one")
{
    const auto t = linspace(0.0, 1.0, 12);
    const auto g = coarse_grid(t, 5);
    REQUIRE(g.size() == 4);
    CHECK(g[0] == t[0]);
    CHECK(g[1] == t[5]);
    CHECK(g[2] == t[10]);
    CHECK(g[3] == t[11]);
    CHECK(coarse_grid(t, 1) == t);
}

TEST_CASE("build_covariance examples")
{
    const auto t = linspace(0.0, 9.0, 10);
    const auto tiny = build_covariance(StationaryKernelSpec{KernelKind::Laplacian, 2.0, 1e-3}, t);
    CHECK(bandwidth(tiny) == 0);
    CHECK(tiny.to_dense() == MatrixXd(4.0 * MatrixXd::Identity(10, 10)));

    const double L = -1.0 / std::log(0.8);
    const auto ar = build_covariance(StationaryKernelSpec{KernelKind::Laplacian, 3.0, L}, linspace(0.0, 3.0, 4));
    const MatrixXd d = ar.to_dense();
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            CHECK(std::abs(d(i, j) - 9.0 * std::pow(0.8, std::abs(i - j))) < 1e-12);
        }
    }

    for (auto kind : {KernelKind::RBF, KernelKind::Laplacian, KernelKind::Matern}) {
        const auto one = build_covariance(StationaryKernelSpec{kind, 1.5, 2.0, 2.5}, VectorXd::Constant(1, 3.0));
        CHECK(one.size() == 1);
        CHECK(one(0, 0) == doctest::Approx(2.25).epsilon(1e-14));
    }
}

TEST_CASE("build_covariance matches the dense construction above the threshold")
{
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 12; ++trial) {
        const Eigen::Index n = 20 + static_cast<Eigen::Index>(180 * u(rng));
        const auto t = linspace(0.0, 0.5 * static_cast<double>(n), n);
        const auto kind = std::array{KernelKind::RBF, KernelKind::Laplacian, KernelKind::Matern}[trial % 3];
        const StationaryKernelSpec spec{kind, 0.2 + 3.0 * u(rng), 0.2 + 4.0 * u(rng), 1.5};
        const auto sp = build_covariance(spec, t);
        std::size_t kept = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                const double ref = kernel_eval(spec, t[i], t[j]);
                if (std::abs(ref) >= kDefaultTruncation) {
                    REQUIRE(sp(i, j) == doctest::Approx(ref).epsilon(1e-14));
                    ++kept;
                } else {
                    REQUIRE((sp(i, j) == 0.0 || std::abs(sp(i, j) - ref) < 1e-14 * ref + 1e-300));
                }
            }
        }
        CHECK(kept >= static_cast<std::size_t>(n));
        if (kind == KernelKind::Laplacian) {
            CHECK(sp.jitter() == 0.0);
        }
    }
    // non-stationary assembly
    const auto st = random_state(rng, 0.0, 50.0, 11);
    const auto t = linspace(0.0, 50.0, 101);
    const auto sp = build_covariance(st, t);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        for (Eigen::Index j = 0; j < t.size(); ++j) {
            const double ref = nonstationary_laplacian_eval(st, t[i], t[j]);
            if (ref >= kDefaultTruncation) {
                REQUIRE(sp(i, j) == doctest::Approx(ref).epsilon(1e-13));
            }
        }
    }
}

TEST_CASE("non-stationary covariance factorizes within the jitter policy")
{
    std::mt19937_64 rng(44);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index n = 2 + static_cast<Eigen::Index>(98 * u(rng));
        NonStationaryState st;
        const Eigen::Index g = 2 + static_cast<Eigen::Index>(8 * u(rng));
        st.grid_times = linspace(0.0, 1.0, g);
        st.log_length = VectorXd(g);
        st.log_sigma = VectorXd(g);
        for (Eigen::Index k = 0; k < g; ++k) {
            st.log_length[k] = -8.0 + 10.0 * u(rng);
            st.log_sigma[k] = -6.0 + 12.0 * u(rng);
        }
        const auto t = linspace(0.0, 1.0, n);
        const auto dense = dense_covariance(st, t);
        const SparseCovariance cov = build_covariance(st, t);
        REQUIRE(cov.jitter() <= 1e-6 * dense.diagonal().maxCoeff());
        REQUIRE(std::isfinite(cov.log_det()));
    }
}

TEST_CASE("truncation barely moves the laplacian likelihood")
{
    std::mt19937_64 rng(51);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n01;
    for (Eigen::Index n : {50, 200, 500}) {
        for (int trial = 0; trial < 3; ++trial) {
            const double dt = 0.1 + u(rng);
            const auto t = linspace(0.0, dt * static_cast<double>(n - 1), n);
            const StationaryKernelSpec spec{KernelKind::Laplacian, 0.5 + 3.0 * u(rng), dt * (0.2 + 9.8 * u(rng))};
            VectorXd y(n);
            for (auto& v : y) {
                v = spec.sigma * n01(rng);
            }
            const VectorXd mean = VectorXd::Zero(n);
            const double sparse = mvn_logpdf(y, mean, build_covariance(spec, t));
            const double dense = mvn_logpdf_dense(y, mean, dense_covariance(spec, t));
            REQUIRE(std::abs(sparse - dense) / std::abs(dense) < 1e-6);
        }
    }
}

TEST_CASE("bandwidth")
{
    CHECK(bandwidth(SparseCovariance::from_diagonal(VectorXd::Ones(6))) == 0);

    MatrixXd tri = 2.0 * MatrixXd::Identity(6, 6);
    for (int i = 0; i + 1 < 6; ++i) {
        tri(i, i + 1) = tri(i + 1, i) = -0.5;
    }
    CHECK(bandwidth(SparseCovariance::from_dense(tri)) == 1);

    // sigma = 1, L = 1, unit spacing: largest lag with exp(-d) >= 1e-9, found by scan
    const auto t = linspace(0.0, 99.0, 100);
    const auto cov = build_covariance(StationaryKernelSpec{KernelKind::Laplacian, 1.0, 1.0}, t);
    Eigen::Index scan = 0;
    for (Eigen::Index d = 0; d < 100; ++d) {
        if (std::exp(-static_cast<double>(d)) >= 1e-9) {
            scan = d;
        }
    }
    CHECK(scan == 20);
    CHECK(bandwidth(cov) == scan);
    CHECK(cov.bandwidth() == static_cast<Eigen::Index>(std::floor(-std::log(1e-9))));
}

TEST_CASE("sparse cholesky against dense linear algebra")
{
    std::mt19937_64 rng(60);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 12;
        MatrixXd a(n, n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                a(i, j) = n01(rng);
            }
        }
        const MatrixXd m = a.transpose() * a + MatrixXd::Identity(n, n);
        const auto sp = SparseCovariance::from_dense(m, 0.0);
        const MatrixXd l = sp.factor_dense();
        CHECK((l * l.transpose() - m).cwiseAbs().maxCoeff() < 1e-10 * m.cwiseAbs().maxCoeff());
        VectorXd r(n);
        for (auto& v : r) {
            v = n01(rng);
        }
        const double q = r.dot(m.inverse() * r);
        CHECK(sp.quad_form(r) == doctest::Approx(q).epsilon(1e-10));
        CHECK(sp.log_det() == doctest::Approx(std::log(m.determinant())).epsilon(1e-10));
        CHECK(sp.to_dense() == m);
        CHECK(sp.jitter() == 0.0);
    }
}

TEST_CASE("jitter rescues a singular matrix and gives up on an indefinite one")
{
    const MatrixXd ones = MatrixXd::Ones(3, 3);
    const auto sp = SparseCovariance::from_dense(ones, 0.0);
    CHECK(sp.jitter() > 0.0);
    CHECK(sp.jitter() <= 1e-6);

    MatrixXd bad = MatrixXd::Identity(3, 3);
    bad(0, 1) = bad(1, 0) = 2.0;
    CHECK_THROWS_AS(SparseCovariance::from_dense(bad, 0.0), NumericalError);
    CHECK_THROWS_AS(SparseCovariance::from_diagonal(VectorXd::Zero(3)), NumericalError);
}
