#include "flexnoise/gpnoise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flexnoise/error.hpp"

namespace flexnoise {

double set_beta(double n_c, double dt, double zeta)
{
    if (!(n_c >= 1.0) || !(dt > 0.0)) {
        throw InputError("set_beta: need n_c >= 1 and dt > 0");
    }
    if (!(zeta > 0.0 && zeta < 1.0)) {
        throw InputError("set_beta: zeta must lie in (0, 1)");
    }
    return n_c * dt / std::sqrt(-2.0 * std::log(zeta));
}

GpHyper default_gp_hyper(double dt, double n_c, double zeta)
{
    const double beta = set_beta(n_c, dt, zeta);
    return {SeHyper{0.0, 1.0, beta}, SeHyper{0.0, 1.0, beta}};
}

namespace {

void check_window(Eigen::Index window, Eigen::Index n, const char* what)
{
    if (window < 3 || window % 2 == 0) {
        throw InputError(std::string(what) + ": window must be odd and at least 3");
    }
    if (window > n) {
        throw InputError(std::string(what) + ": window longer than the series");
    }
}

// Largest odd window not exceeding n.
Eigen::Index fit_window(Eigen::Index window, Eigen::Index n)
{
    Eigen::Index w = std::min(window, n);
    if (w % 2 == 0) {
        --w;
    }
    return std::max<Eigen::Index>(w, 3);
}

} // namespace

WindowStats sliding_window_stats(const VectorXd& residuals, Eigen::Index window)
{
    const auto n = residuals.size();
    check_window(window, n, "sliding_window_stats");
    const auto half = (window - 1) / 2;
    WindowStats out{VectorXd(n), VectorXd(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto lo = std::max<Eigen::Index>(0, i - half);
        const auto hi = std::min<Eigen::Index>(n - 1, i + half);
        const auto len = hi - lo + 1;
        const auto seg = residuals.segment(lo, len);
        const double m = seg.mean();
        // spreads at rounding level count as zero
        const double floor = 1e-24 * seg.squaredNorm();
        const double ss = (seg.array() - m).square().sum();
        out.variance[i] = len > 1 && ss > floor ? ss / static_cast<double>(len - 1) : 0.0;

        const auto a = residuals.segment(lo, len - 1);
        const auto b = residuals.segment(lo + 1, len - 1);
        const double ma = a.mean();
        const double mb = b.mean();
        const double saa = (a.array() - ma).square().sum();
        const double sbb = (b.array() - mb).square().sum();
        const double sab = ((a.array() - ma) * (b.array() - mb)).sum();
        out.lag1[i] = (saa > floor && sbb > floor) ? sab / std::sqrt(saa * sbb) : 0.0;
    }
    return out;
}

VectorXd wiener_smooth(const VectorXd& series, Eigen::Index window)
{
    const auto n = series.size();
    if (window < 3 || window % 2 == 0) {
        throw InputError("wiener_smooth: window must be odd and at least 3");
    }
    const auto half = (window - 1) / 2;
    VectorXd mean(n);
    VectorXd var(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto lo = std::max<Eigen::Index>(0, i - half);
        const auto hi = std::min<Eigen::Index>(n - 1, i + half);
        const auto seg = series.segment(lo, hi - lo + 1);
        mean[i] = seg.mean();
        var[i] = (seg.array() - mean[i]).square().mean();
    }
    const double noise = var.mean();
    VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double denom = std::max(var[i], noise);
        const double gain = denom > 0.0 ? std::max(0.0, var[i] - noise) / denom : 0.0;
        out[i] = mean[i] + gain * (series[i] - mean[i]);
    }
    return out;
}

NonStationaryState init_from_residuals(const VectorXd& residuals, const VectorXd& times, const InitOptions& options)
{
    if (residuals.size() != times.size()) {
        throw InputError("init_from_residuals: residuals and times differ in length");
    }
    const auto dt = uniform_spacing(times);
    if (!dt) {
        throw InputError("initialization needs a uniformly spaced time grid");
    }
    if (!(residuals.array().abs() > 0.0).any()) {
        throw NumericalError("initialization: residuals are identically zero (degenerate data)");
    }
    const auto n = residuals.size();
    const auto stats_sd = sliding_window_stats(residuals, fit_window(options.window_sd, n));
    const auto stats_rho = options.window_rho == options.window_sd
                               ? stats_sd
                               : sliding_window_stats(residuals, fit_window(options.window_rho, n));
    const auto ww = fit_window(options.wiener_window, n);
    VectorXd v = wiener_smooth(stats_sd.variance, ww);
    const VectorXd rho = wiener_smooth(stats_rho.lag1, ww);

    const double floor = std::max(1e-12 * stats_sd.variance.maxCoeff(), std::numeric_limits<double>::min());
    std::vector<Eigen::Index> picks;
    for (Eigen::Index i = 0; i < n; i += options.coarse_stride) {
        picks.push_back(i);
    }
    if (picks.back() != n - 1) {
        picks.push_back(n - 1);
    }
    NonStationaryState state;
    const auto g = static_cast<Eigen::Index>(picks.size());
    state.grid_times.resize(g);
    state.log_length.resize(g);
    state.log_sigma.resize(g);
    for (Eigen::Index k = 0; k < g; ++k) {
        const auto i = picks[static_cast<std::size_t>(k)];
        state.grid_times[k] = times[i];
        state.log_sigma[k] = 0.5 * std::log(std::max(v[i], floor));
        const double a = std::clamp(std::abs(rho[i]), 1e-3, 0.999);
        state.log_length[k] = std::log(-*dt / std::log(a));
    }
    return state;
}

NonStationaryState init_nonstationary(const Dataset& data, std::shared_ptr<const ForwardModel> model,
                                      const InitOptions& options, VectorXd* theta_iid)
{
    if (!data.dt()) {
        throw InputError("initialization needs a uniformly spaced time grid");
    }
    const VectorXd fit = fit_iid_map(data, model);
    const auto p = static_cast<Eigen::Index>(model->n_params());
    if (theta_iid) {
        *theta_iid = fit.head(p);
    }
    const VectorXd residuals = data.values() - model->simulate(fit.head(p), data.times());
    return init_from_residuals(residuals, data.times(), options);
}

namespace {

// initial curves enter through their GP regression mean
constexpr double kStartSmoothing = 0.1;

// Maps the optimizer vector (model phi, whitened log L, whitened log sigma) to pieces.
struct GpObjective {
    const Dataset& data;
    const ForwardModel& model;
    std::vector<ParameterSpec> specs;
    VectorXd grid;
    GpPrior prior_length;
    GpPrior prior_sigma;
    double threshold;
    double log_len_lo;
    double log_len_hi;

    Eigen::Index p() const { return static_cast<Eigen::Index>(specs.size()); }
    Eigen::Index g() const { return grid.size(); }

    NonStationaryState state(const VectorXd& x) const
    {
        NonStationaryState s;
        s.grid_times = grid;
        s.log_length = prior_length.from_whitened(x.segment(p(), g())).cwiseMax(log_len_lo).cwiseMin(log_len_hi);
        s.log_sigma = prior_sigma.from_whitened(x.segment(p() + g(), g())).cwiseMax(-20.0).cwiseMin(20.0);
        return s;
    }

    VectorXd pack(const VectorXd& theta, const NonStationaryState& s) const
    {
        VectorXd x(p() + 2 * g());
        x << transform_to_unconstrained(specs, theta), prior_length.smooth_whitened(s.log_length, kStartSmoothing),
            prior_sigma.smooth_whitened(s.log_sigma, kStartSmoothing);
        return x;
    }

    double operator()(const VectorXd& x) const
    {
        constexpr double kNegInf = -std::numeric_limits<double>::infinity();
        if (!x.allFinite()) {
            return kNegInf;
        }
        const VectorXd phi = x.head(p());
        double lp = log_prior_unconstrained(specs, phi);
        if (!std::isfinite(lp)) {
            return kNegInf;
        }
        // whitened GP priors, constants dropped
        lp += -0.5 * x.segment(p(), g()).squaredNorm() - 0.5 * x.segment(p() + g(), g()).squaredNorm();
        try {
            const VectorXd mean = model.simulate(transform_to_constrained(specs, phi), data.times());
            const auto cov = build_covariance(state(x), data.times(), threshold);
            const double ll = mvn_logpdf(data.values(), mean, cov);
            return std::isfinite(ll) ? lp + ll : kNegInf;
        } catch (const Error&) {
            return kNegInf;
        }
    }
};

GpObjective make_objective(const Dataset& data, const ForwardModel& model, const VectorXd& grid,
                           const GpHyper& hyper, double threshold)
{
    const auto dt = data.dt().value_or((data.times()[data.size() - 1] - data.times()[0]) /
                                       static_cast<double>(data.size() - 1));
    const double span = data.times()[data.size() - 1] - data.times()[0];
    return GpObjective{data,
                       model,
                       model.parameters(),
                       grid,
                       GpPrior(grid, hyper.length),
                       GpPrior(grid, hyper.sigma),
                       threshold,
                       std::log(0.1 * dt),
                       std::log(10.0 * std::max(span, dt))};
}

} // namespace

double gp_joint_log_posterior(const Dataset& data, const ForwardModel& model, const VectorXd& theta,
                              const NonStationaryState& state, const GpHyper& hyper, double threshold)
{
    const auto specs = model.parameters();
    const VectorXd phi = transform_to_unconstrained(specs, theta);
    double lp = log_prior_unconstrained(specs, phi);
    lp += gp_log_prior(state.log_length, state.grid_times, hyper.length);
    lp += gp_log_prior(state.log_sigma, state.grid_times, hyper.sigma);
    const VectorXd mean = model.simulate(theta, data.times());
    return lp + mvn_logpdf(data.values(), mean, build_covariance(state, data.times(), threshold));
}

GpMapResult fit_map(const Dataset& data, std::shared_ptr<const ForwardModel> model, const std::vector<GpStart>& starts,
                    const GpHyper& hyper, const GpOptions& options)
{
    if (starts.empty()) {
        throw InputError("fit_map: no starting points");
    }
    const VectorXd grid = starts.front().state.grid_times;
    for (const auto& s : starts) {
        s.state.validate();
        if (s.state.grid_times.size() != grid.size() || s.state.grid_times != grid) {
            throw InputError("fit_map: all starts must share one coarse grid");
        }
    }
    const GpObjective objective = make_objective(data, *model, grid, hyper, options.threshold);
    const Objective f = [&objective](const VectorXd& x) { return objective(x); };

    GpMapResult best;
    best.log_posterior = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t k = 0; k < starts.size(); ++k) {
        double score = -std::numeric_limits<double>::infinity();
        std::string message;
        try {
            const VectorXd x0 = objective.pack(starts[k].theta, starts[k].state);
            if (!std::isfinite(f(x0))) {
                throw NumericalError("posterior not finite at the start");
            }
            const auto res = optimize(f, x0, std::nullopt, options.optimizer);
            score = res.value;
            message = res.message;
            if (std::isfinite(score) && score > best.log_posterior) {
                best.log_posterior = score;
                best.theta = transform_to_constrained(objective.specs, res.x.head(objective.p()));
                best.state = objective.state(res.x);
                best.converged = res.converged;
                best.best_restart = k;
                any = true;
            }
        } catch (const Error& e) {
            message = e.what();
        }
        best.restart_scores.push_back(score);
        best.restart_messages.push_back(message);
    }
    if (!any) {
        std::string detail;
        for (std::size_t k = 0; k < starts.size(); ++k) {
            detail += "\n  restart " + std::to_string(k + 1) + ": " + best.restart_messages[k];
        }
        throw OptimizationError("fit_map: every restart failed" + detail);
    }
    return best;
}

GpMapResult fit_map(const Dataset& data, std::shared_ptr<const ForwardModel> model, const GpHyper& hyper,
                    const GpOptions& options)
{
    if (options.restarts < 1 || options.windows.empty()) {
        throw ConfigError("fit_map: need at least one restart and one window width");
    }
    VectorXd theta_iid;
    InitOptions init{options.windows[0], options.windows[0], options.wiener_window, options.coarse_stride};
    std::vector<GpStart> starts;
    starts.push_back({VectorXd(), init_nonstationary(data, model, init, &theta_iid)});
    starts.back().theta = theta_iid;
    const VectorXd residuals = data.values() - model->simulate(theta_iid, data.times());
    for (int k = 1; k < options.restarts; ++k) {
        const auto w = options.windows[static_cast<std::size_t>(k) % options.windows.size()];
        init.window_sd = w;
        init.window_rho = w;
        starts.push_back({theta_iid, init_from_residuals(residuals, data.times(), init)});
    }
    return fit_map(data, model, starts, hyper, options);
}

GpFitResult run_algorithm1(const Dataset& data, std::shared_ptr<const ForwardModel> model, const GpOptions& options)
{
    const auto dt = data.dt();
    if (!dt) {
        throw InputError("run_algorithm1: needs a uniformly spaced time grid");
    }
    const GpHyper hyper = default_gp_hyper(*dt, options.n_c, options.zeta);
    GpFitResult result;
    result.map = fit_map(data, model, hyper, options);
    result.covariance =
        std::make_shared<const SparseCovariance>(build_covariance(result.map.state, data.times(), options.threshold));
    auto noise = std::make_shared<FixedCovarianceNoise>(*result.covariance, "gp");
    LogPosterior posterior(data, model, noise);
    const VectorXd phi = posterior.to_unconstrained(result.map.theta);
    // the conditional posterior's own mode, so chains start where the fixed-covariance target peaks
    const auto opt = map_estimate(posterior, result.map.theta);
    result.posterior = sample_posterior(posterior, opt.value >= posterior(phi) ? opt.x : phi, options.sampler);
    return result;
}

} // namespace flexnoise
