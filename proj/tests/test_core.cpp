#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <random>

#include "flexnoise/dataset.hpp"
#include "flexnoise/error.hpp"
#include "flexnoise/io.hpp"
#include "flexnoise/models.hpp"
#include "flexnoise/ode.hpp"

using namespace flexnoise;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name)
{
    auto dir = fs::temp_directory_path() / ("flexnoise_core_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// dy/dt = r y (1 - y/K), integrated with the library integrator
double logistic_numeric(double r, double K, double y0, double t, double rtol)
{
    OdeRhs rhs = [r, K](double, const std::vector<double>& y, std::vector<double>& dy) {
        dy[0] = r * y[0] * (1.0 - y[0] / K);
    };
    VectorXd y(1);
    y << y0;
    VectorXd times(2);
    times << 0.0, t;
    const MatrixXd out = ode_integrate(rhs, y, times, {rtol, rtol * 1e-4});
    return out(1, 0);
}

} // namespace

TEST_CASE("dataset invariants")
{
    VectorXd t(3), y(3);
    t << 0.0, 1.0, 2.0;
    y << 1.0, 2.0, 3.0;
    Dataset d(t, y);
    REQUIRE(d.dt());
    CHECK(*d.dt() == doctest::Approx(1.0));

    VectorXd bad(3);
    bad << 0.0, 2.0, 1.0;
    CHECK_THROWS_AS(Dataset(bad, y), InputError);
    CHECK_THROWS_AS(Dataset(t, VectorXd::Zero(2)), InputError);

    VectorXd uneven(3);
    uneven << 0.0, 1.0, 3.0;
    CHECK_FALSE(Dataset(uneven, y).dt());

    // spacing within 1e-6 relative still counts as uniform
    VectorXd near(3);
    near << 0.0, 1.0, 2.0 + 1e-8;
    CHECK(Dataset(near, y).dt());
}

TEST_CASE("dataset csv round trip is exact")
{
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n01;
    const auto t = linspace(0.0, 7.3, 40);
    VectorXd y(40);
    for (auto& v : y) {
        v = n01(rng) * 1e3;
    }
    const auto dir = temp_dir("csv");
    Dataset(t, y).save_csv(dir / "d.csv");
    const auto back = Dataset::load_csv(dir / "d.csv");
    CHECK(back.times() == t);
    CHECK(back.values() == y);
}

TEST_CASE("format_double round-trips")
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> e(-300, 300);
    std::uniform_real_distribution<double> m(-1, 1);
    for (int i = 0; i < 2000; ++i) {
        const double x = m(rng) * std::pow(10.0, e(rng));
        const auto s = io::format_double(x);
        CHECK(io::parse_double(s) == x);
    }
    CHECK(io::format_double(0.1) == "0.1");
    CHECK(io::parse_double(io::format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("logistic_solve examples")
{
    const LogisticParams p{0.08, 50.0, 2.0};
    VectorXd t(3);
    t << 0.0, 10.0, 1e6;
    const auto f = logistic_solve(p, t);
    CHECK(f[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(std::abs(f[2] - 50.0) < 1e-9);
    // closed form against an independent numerical solution
    const double numeric = logistic_numeric(0.08, 50.0, 2.0, 10.0, 1e-11);
    CHECK(std::abs(f[1] - numeric) / numeric < 1e-8);
    CHECK(f[1] == doctest::Approx(50.0 / (1.0 + 24.0 * std::exp(-0.8))).epsilon(1e-14));

    CHECK_THROWS_AS(logistic_solve({NAN, 50.0, 2.0}, t), InputError);
    CHECK_THROWS_AS(logistic_solve({0.08, -1.0, 2.0}, t), InputError);
}

TEST_CASE("logistic_solve is monotone when 0 < y0 < K")
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 100; ++k) {
        const double K = 1.0 + 100.0 * u(rng);
        const LogisticParams p{0.01 + u(rng), K, K * (0.01 + 0.98 * u(rng))};
        const auto f = logistic_solve(p, linspace(0.0, 200.0, 300));
        for (Eigen::Index i = 1; i < f.size(); ++i) {
            REQUIRE(f[i] >= f[i - 1]);
        }
    }
}

TEST_CASE("ode_integrate basics")
{
    OdeRhs zero = [](double, const std::vector<double>&, std::vector<double>& dy) { dy[0] = 0.0; };
    VectorXd y0(1);
    y0 << 3.25;
    const auto times = linspace(0.0, 5.0, 11);
    const auto c = ode_integrate(zero, y0, times);
    CHECK((c.col(0).array() == 3.25).all());

    OdeRhs decay = [](double, const std::vector<double>& y, std::vector<double>& dy) { dy[0] = -y[0]; };
    y0 << 1.0;
    VectorXd t1(2);
    t1 << 0.0, 1.0;
    const auto d = ode_integrate(decay, y0, t1, {1e-8, 1e-12});
    CHECK(std::abs(d(1, 0) - std::exp(-1.0)) / std::exp(-1.0) < 1e-8);
    CHECK(d(0, 0) == 1.0);

    OdeRhs blowup = [](double, const std::vector<double>&, std::vector<double>& dy) { dy[0] = NAN; };
    CHECK_THROWS_AS(ode_integrate(blowup, y0, t1), NumericalError);

    VectorXd back(2);
    back << 1.0, 0.0;
    CHECK_THROWS_AS(ode_integrate(decay, y0, back), InputError);
}

TEST_CASE("ode_integrate agrees with the logistic closed form within 10x rtol")
{
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double rtol = 1e-8;
    const auto times = linspace(0.0, 100.0, 60);
    for (int k = 0; k < 100; ++k) {
        const double r = 0.01 + 0.3 * u(rng);
        const double K = 5.0 + 100.0 * u(rng);
        const double y0 = K * (0.01 + 0.5 * u(rng));
        OdeRhs rhs = [r, K](double, const std::vector<double>& y, std::vector<double>& dy) {
            dy[0] = r * y[0] * (1.0 - y[0] / K);
        };
        VectorXd init(1);
        init << y0;
        const auto num = ode_integrate(rhs, init, times, {rtol, 1e-10});
        const auto exact = logistic_solve({r, K, y0}, times);
        const double err = ((num.col(0) - exact).array().abs() / exact.array()).maxCoeff();
        REQUIRE(err < 10.0 * rtol);
    }
}

TEST_CASE("transform examples")
{
    std::vector<ParameterSpec> ident{{"a", Transform::Identity}};
    VectorXd th(1);
    th << -2.5;
    CHECK(transform_to_unconstrained(ident, th)[0] == -2.5);
    CHECK(log_jacobian(ident, th) == 0.0);

    std::vector<ParameterSpec> lg{{"a", Transform::Log}};
    th << 1.0;
    CHECK(transform_to_unconstrained(lg, th)[0] == 0.0);
    CHECK(log_jacobian(lg, transform_to_unconstrained(lg, th)) == 0.0);
    th << std::exp(2.0);
    const auto phi = transform_to_unconstrained(lg, th);
    CHECK(phi[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(log_jacobian(lg, phi) == doctest::Approx(2.0).epsilon(1e-15));

    th << 0.0;
    CHECK_THROWS_AS(transform_to_unconstrained(lg, th), InputError);
    th << -1.0;
    CHECK_THROWS_AS(transform_to_unconstrained(lg, th), InputError);
}

TEST_CASE("transform round trip on the model descriptors")
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    const LogisticModel logistic(2.0);
    const HergModel herg(VoltageProtocol({{0.0, 1.0, -0.08, -0.08}}));
    for (int k = 0; k < 200; ++k) {
        VectorXd a(2);
        a << std::exp(u(rng)), std::exp(u(rng));
        const auto ra = transform_to_constrained(logistic, transform_to_unconstrained(logistic, a));
        REQUIRE(((ra - a).array().abs() / a.array()).maxCoeff() < 1e-12);

        VectorXd b(9);
        for (auto& v : b) {
            v = std::exp(u(rng));
        }
        const auto rb = transform_to_constrained(herg, transform_to_unconstrained(herg, b));
        REQUIRE(((rb - b).array().abs() / b.array()).maxCoeff() < 1e-12);
        const auto phi = transform_to_unconstrained(herg, b);
        REQUIRE(log_jacobian(herg, phi) == doctest::Approx(phi.sum()).epsilon(1e-14));
    }
    CHECK(herg.n_params() == 9);
    CHECK(logistic.param_names() == std::vector<std::string>{"r", "K"});
}

TEST_CASE("logistic model simulate is deterministic and sized")
{
    const LogisticModel m(2.0);
    VectorXd th(2);
    th << 0.08, 50.0;
    const auto t = linspace(0.0, 100.0, 37);
    const auto a = m.simulate(th, t);
    CHECK(a.size() == 37);
    CHECK(a == m.simulate(th, t));
}

TEST_CASE("herg: constant voltage at steady state gives a constant current")
{
    const auto p = herg_reference_params();
    const double v = -0.02;
    const VoltageProtocol prot({{0.0, 2.0, v, v}});
    const auto times = linspace(0.0, 2.0, 201);
    const auto ss = herg_steady_state(p, v);
    const auto cur = herg_simulate(p, prot, HergModel::kDefaultReversal, times, ss);
    const double expected = p.g_kr * ss.a * ss.r * (v - HergModel::kDefaultReversal);
    CHECK(((cur.array() - expected).abs()).maxCoeff() < 1e-8 * std::abs(expected));
}

TEST_CASE("herg: zero driving force gives zero current")
{
    const auto p = herg_reference_params();
    const double ek = -0.085;
    const VoltageProtocol prot({{0.0, 1.0, ek, ek}});
    const auto cur = herg_simulate(p, prot, ek, linspace(0.0, 1.0, 50), GatingState{0.3, 0.6});
    CHECK((cur.array() == 0.0).all());
}

TEST_CASE("herg: step protocol matches exponential relaxation")
{
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n01;
    const auto priors = herg_default_priors();
    for (int trial = 0; trial < 10; ++trial) {
        HergParams p;
        p.g_kr = std::exp(priors[0].mean);
        for (int k = 0; k < 8; ++k) {
            p.p[static_cast<std::size_t>(k)] = std::exp(priors[static_cast<std::size_t>(k + 1)].mean + 0.3 * n01(rng));
        }
        const double v1 = -0.08;
        const double v2 = 0.02 + 0.01 * n01(rng);
        const VoltageProtocol prot({{0.0, 0.5, v1, v1}, {0.5, 2.0, v2, v2}});
        const auto times = linspace(0.0, 2.0, 401);
        const GatingState init{0.2, 0.7};
        const auto sim = herg_simulate_states(p, prot, HergModel::kDefaultReversal, times, init);

        // rates straight from the rate laws
        auto relax = [&](double v, double t, double a0, double r0, double& a, double& r) {
            const double k1 = p.p[0] * std::exp(p.p[1] * v);
            const double k2 = p.p[2] * std::exp(-p.p[3] * v);
            const double k3 = p.p[4] * std::exp(p.p[5] * v);
            const double k4 = p.p[6] * std::exp(-p.p[7] * v);
            const double ainf = k1 / (k1 + k2);
            const double rinf = k4 / (k3 + k4);
            a = ainf + (a0 - ainf) * std::exp(-t * (k1 + k2));
            r = rinf + (r0 - rinf) * std::exp(-t * (k3 + k4));
        };
        double a_switch = 0.0;
        double r_switch = 0.0;
        relax(v1, 0.5, init.a, init.r, a_switch, r_switch);
        double worst = 0.0;
        for (Eigen::Index i = 0; i < times.size(); ++i) {
            double a = 0.0;
            double r = 0.0;
            if (times[i] <= 0.5) {
                relax(v1, times[i], init.a, init.r, a, r);
            } else {
                relax(v2, times[i] - 0.5, a_switch, r_switch, a, r);
            }
            worst = std::max({worst, std::abs(a - sim.a[i]), std::abs(r - sim.r[i])});
            const double v = times[i] < 0.5 ? v1 : v2;
            const double cur = p.g_kr * sim.a[i] * sim.r[i] * (v - HergModel::kDefaultReversal);
            REQUIRE(sim.current[i] == doctest::Approx(cur).epsilon(1e-12));
        }
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("herg: gating stays inside (0, 1)")
{
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto priors = herg_default_priors();
    for (int trial = 0; trial < 40; ++trial) {
        VectorXd theta(9);
        for (int k = 0; k < 9; ++k) {
            const auto& pr = priors[static_cast<std::size_t>(k)];
            theta[k] = std::exp(pr.mean + 0.5 * pr.sd * n01(rng));
        }
        std::vector<ProtocolSegment> segs;
        double t = 0.0;
        for (int s = 0; s < 5; ++s) {
            const double len = 0.05 + 0.5 * u(rng);
            const double v = -0.12 + 0.16 * u(rng);
            segs.push_back({t, t + len, v, v});
            t += len;
        }
        const VoltageProtocol prot(segs);
        const GatingState init{0.01 + 0.98 * u(rng), 0.01 + 0.98 * u(rng)};
        const auto sim = herg_simulate_states(HergParams::from_vector(theta), prot, HergModel::kDefaultReversal,
                                              linspace(0.0, t, 500), init);
        INFO("trial " << trial << " min a " << sim.a.minCoeff() << " max a " << sim.a.maxCoeff() << " min r " << sim.r.minCoeff() << " max r " << sim.r.maxCoeff());
        REQUIRE((sim.a.array() > 0.0).all());
        REQUIRE((sim.a.array() < 1.0).all());
        REQUIRE((sim.r.array() > 0.0).all());
        REQUIRE((sim.r.array() < 1.0).all());
    }
}

TEST_CASE("voltage protocol validation and csv")
{
    CHECK_THROWS_AS(VoltageProtocol({{0.0, 1.0, 0.0, 0.0}, {1.5, 2.0, 0.0, 0.0}}), ConfigError);
    CHECK_THROWS_AS(VoltageProtocol({{0.0, 1.0, 0.0, 0.0}, {0.5, 2.0, 0.0, 0.0}}), ConfigError);
    const VoltageProtocol ramp({{0.0, 1.0, -0.1, 0.1}, {1.0, 2.0, 0.02, 0.02}});
    CHECK(ramp.voltage(0.5) == doctest::Approx(0.0));
    CHECK(ramp.voltage(1.5) == 0.02);

    const auto dir = temp_dir("protocol");
    ramp.save_csv(dir / "p.csv");
    const auto back = VoltageProtocol::load_csv(dir / "p.csv");
    REQUIRE(back.segments().size() == 2);
    CHECK(back.segments()[0].v_start == -0.1);
    CHECK(back.segments()[1].t_end == 2.0);

    // simulation window outside the protocol
    CHECK_THROWS(herg_simulate(herg_reference_params(), ramp, HergModel::kDefaultReversal, linspace(0.0, 3.0, 10)));
}

TEST_CASE("hERG model uses the log prior means as reference")
{
    const auto ref = herg_reference_params().to_vector();
    const auto pri = herg_default_priors();
    REQUIRE(ref.size() == 9);
    for (int k = 0; k < 9; ++k) {
        CHECK(std::log(ref[k]) == doctest::Approx(pri[static_cast<std::size_t>(k)].mean));
    }
}
