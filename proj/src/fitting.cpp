#include "flexnoise/fitting.hpp"

#include <cmath>
#include <limits>

#include "flexnoise/error.hpp"
#include "flexnoise/noise_models.hpp"

namespace flexnoise {

OptimizeResult map_estimate(const LogPosterior& posterior, const VectorXd& theta0, OptimizeOptions options)
{
    const VectorXd phi0 = posterior.to_unconstrained(theta0);
    const Objective f = [&posterior](const VectorXd& phi) { return posterior(phi); };
    auto first = optimize(f, phi0, std::nullopt, options);
    // one restart from the optimum clears stale curvature pairs
    auto second = optimize(f, first.x, std::nullopt, options);
    if (second.value >= first.value) {
        second.evaluations += first.evaluations;
        second.iterations += first.iterations;
        return second;
    }
    return first;
}

MatrixXd fd_hessian(const Objective& f, const VectorXd& x, double rel_step)
{
    const auto d = x.size();
    MatrixXd h(d, d);
    const double f0 = f(x);
    VectorXd step(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        step[i] = rel_step * std::max(1.0, std::abs(x[i]));
    }
    VectorXd p = x;
    for (Eigen::Index i = 0; i < d; ++i) {
        p[i] = x[i] + step[i];
        const double fp = f(p);
        p[i] = x[i] - step[i];
        const double fm = f(p);
        p[i] = x[i];
        h(i, i) = (fp - 2.0 * f0 + fm) / (step[i] * step[i]);
        for (Eigen::Index j = 0; j < i; ++j) {
            double acc = 0.0;
            for (int si : {1, -1}) {
                for (int sj : {1, -1}) {
                    p[i] = x[i] + si * step[i];
                    p[j] = x[j] + sj * step[j];
                    acc += si * sj * f(p);
                }
            }
            p[i] = x[i];
            p[j] = x[j];
            h(i, j) = acc / (4.0 * step[i] * step[j]);
            h(j, i) = h(i, j);
        }
    }
    return h;
}

MatrixXd laplace_covariance(const Objective& log_target, const VectorXd& mode)
{
    const MatrixXd h = fd_hessian(log_target, mode);
    if (h.allFinite()) {
        const MatrixXd neg = -h;
        Eigen::LLT<MatrixXd> llt(neg);
        if (llt.info() == Eigen::Success) {
            MatrixXd cov = llt.solve(MatrixXd::Identity(mode.size(), mode.size()));
            if (cov.allFinite()) {
                return 0.5 * (cov + cov.transpose());
            }
        }
        // diagonal curvature where it is usable
        MatrixXd fallback = default_initial_cov(mode);
        for (Eigen::Index i = 0; i < mode.size(); ++i) {
            if (neg(i, i) > 0.0 && std::isfinite(neg(i, i))) {
                fallback(i, i) = 1.0 / neg(i, i);
            }
        }
        return fallback;
    }
    return default_initial_cov(mode);
}

bool all_below(const std::vector<double>& rhat, double threshold)
{
    for (double r : rhat) {
        if (!(r < threshold)) {
            return false;
        }
    }
    return true;
}

PosteriorSample sample_posterior(const LogPosterior& posterior, const VectorXd& map_phi, const SamplerOptions& options)
{
    if (options.chains < 1) {
        throw InputError("sample_posterior: need at least one chain");
    }
    const LogTarget target = [&posterior](const VectorXd& phi) { return posterior(phi); };
    const double map_value = posterior(map_phi);
    if (!std::isfinite(map_value)) {
        throw NumericalError("sample_posterior: posterior not finite at the starting mode");
    }
    const MatrixXd cov = laplace_covariance(target, map_phi);
    const MatrixXd factor = Eigen::LLT<MatrixXd>(cov).matrixL();

    Rng start_rng = make_rng(options.seed, 1000003);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<VectorXd> starts;
    for (int c = 0; c < options.chains; ++c) {
        VectorXd start = map_phi;
        for (int attempt = 0; attempt < 50; ++attempt) {
            VectorXd z(map_phi.size());
            for (Eigen::Index i = 0; i < z.size(); ++i) {
                z[i] = normal(start_rng);
            }
            const VectorXd candidate = map_phi + factor * z;
            if (std::isfinite(posterior(candidate))) {
                start = candidate;
                break;
            }
        }
        starts.push_back(start);
    }

    ChainRunOptions run;
    run.iterations = options.iterations;
    run.warmup_fraction = options.warmup_fraction;
    run.seed = options.seed;
    run.parallel = options.parallel;
    const ChainStore raw = run_adaptive_chains(target, starts, cov, posterior.names(), run);

    PosteriorSample out{map_phi, posterior.to_constrained(map_phi), map_value,
                        raw.transformed([&posterior](const VectorXd& phi) { return posterior.to_constrained(phi); }),
                        {}, {}, false};
    if (options.chains >= 2 && options.iterations * (1.0 - options.warmup_fraction) >= 4) {
        for (Eigen::Index p = 0; p < raw.dimension(); ++p) {
            out.rhat.push_back(gelman_rhat(raw, p));
        }
        out.converged = all_below(out.rhat, options.rhat_threshold);
    }
    for (std::size_t c = 0; c < raw.n_chains(); ++c) {
        out.acceptance.push_back(raw.acceptance(c));
    }
    return out;
}

PosteriorSample fit_posterior(const LogPosterior& posterior, const VectorXd& theta0, const SamplerOptions& options)
{
    const auto opt = map_estimate(posterior, theta0);
    if (!std::isfinite(opt.value)) {
        throw OptimizationError("fit_posterior: MAP search ended at a non-finite posterior");
    }
    return sample_posterior(posterior, opt.x, options);
}

VectorXd fit_iid_map(const Dataset& data, std::shared_ptr<const ForwardModel> model)
{
    const VectorXd theta_model = model->initial_guess(data);
    const VectorXd mean = model->simulate(theta_model, data.times());
    auto noise = std::make_shared<IidNoise>();
    const VectorXd sigma0 = noise->initial_guess(data.values() - mean, mean, data.times());
    LogPosterior post(data, model, noise);
    VectorXd theta0(theta_model.size() + 1);
    theta0 << theta_model, sigma0;
    const auto opt = map_estimate(post, theta0);
    if (!std::isfinite(opt.value)) {
        throw OptimizationError("IID fit failed to reach a finite posterior");
    }
    return post.to_constrained(opt.x);
}

} // namespace flexnoise
