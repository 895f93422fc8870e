#include "flexnoise/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "flexnoise/error.hpp"

namespace flexnoise {

Rng make_rng(std::uint64_t seed, std::uint64_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
    return Rng(seq);
}

AdaptState make_adapt_state(const VectorXd& x0, const MatrixXd& initial_cov)
{
    if (initial_cov.rows() != x0.size() || initial_cov.cols() != x0.size()) {
        throw InputError("make_adapt_state: covariance dimension mismatch");
    }
    AdaptState a;
    a.mean = x0;
    a.cov = initial_cov;
    return a;
}

MatrixXd default_initial_cov(const VectorXd& x0)
{
    const VectorXd sd = (x0.array().abs() / 10.0).max(0.01);
    return sd.array().square().matrix().asDiagonal();
}

namespace {

bool accept(double log_ratio, Rng& rng)
{
    if (std::isnan(log_ratio)) {
        return false;
    }
    if (log_ratio >= 0.0) {
        return true;
    }
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    return std::log(unif(rng)) < log_ratio;
}

MatrixXd proposal_factor(const MatrixXd& cov, double log_scale)
{
    const auto d = cov.rows();
    const double eps = 1e-6 * cov.trace() / static_cast<double>(d);
    MatrixXd c = std::exp(log_scale) * (cov + std::max(eps, 1e-300) * MatrixXd::Identity(d, d));
    Eigen::LLT<MatrixXd> llt(c);
    if (llt.info() != Eigen::Success) {
        // fall back to the diagonal when rounding breaks positive definiteness
        c = c.diagonal().cwiseAbs().cwiseMax(1e-300).asDiagonal();
        llt.compute(c);
    }
    return llt.matrixL();
}

} // namespace

bool adaptive_mh_step(McmcState& state, const LogTarget& log_target, AdaptState& adapt, Rng& rng)
{
    const auto d = state.x.size();
    const bool initial = adapt.iterations < adapt.initial_phase;
    const MatrixXd factor = proposal_factor(adapt.cov, initial ? 0.0 : adapt.log_scale);
    std::normal_distribution<double> normal(0.0, 1.0);
    VectorXd z(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        z[i] = normal(rng);
    }
    const VectorXd proposal = state.x + factor * z;
    const double lp = log_target(proposal);
    const bool accepted = lp > -std::numeric_limits<double>::infinity() && accept(lp - state.log_p, rng);
    if (accepted) {
        state.x = proposal;
        state.log_p = lp;
    }
    ++adapt.iterations;
    if (adapt.adapting && adapt.iterations > adapt.initial_phase) {
        const double gamma = std::pow(static_cast<double>(adapt.iterations - adapt.initial_phase), -adapt.decay);
        adapt.mean = (1.0 - gamma) * adapt.mean + gamma * state.x;
        const VectorXd dev = state.x - adapt.mean;
        adapt.cov = (1.0 - gamma) * adapt.cov + gamma * dev * dev.transpose();
        adapt.log_scale += gamma * ((accepted ? 1.0 : 0.0) - adapt.target_acceptance);
    }
    return accepted;
}

double reflect(double x, double lo, double hi)
{
    if (!(hi > lo)) {
        return lo;
    }
    const double width = hi - lo;
    for (int k = 0; k < 64 && (x < lo || x > hi); ++k) {
        if (x < lo) {
            x = 2.0 * lo - x;
        } else {
            x = 2.0 * hi - x;
        }
    }
    if (x < lo || x > hi) {
        // far outside: wrap with period 2 * width
        double u = std::fmod(x - lo, 2.0 * width);
        if (u < 0.0) {
            u += 2.0 * width;
        }
        x = u <= width ? lo + u : hi - (u - width);
    }
    return x;
}

bool mh_step(McmcState& state, const LogTarget& log_target, const VectorXd& scale, Rng& rng,
             const std::optional<VectorXd>& lower, const std::optional<VectorXd>& upper)
{
    const auto d = state.x.size();
    std::normal_distribution<double> normal(0.0, 1.0);
    VectorXd proposal = state.x;
    for (Eigen::Index i = 0; i < d; ++i) {
        proposal[i] += scale[i] * normal(rng);
        const double lo = lower ? (*lower)[i] : -std::numeric_limits<double>::infinity();
        const double hi = upper ? (*upper)[i] : std::numeric_limits<double>::infinity();
        if (std::isfinite(lo) && std::isfinite(hi)) {
            proposal[i] = reflect(proposal[i], lo, hi);
        } else if (std::isfinite(lo) && proposal[i] < lo) {
            proposal[i] = 2.0 * lo - proposal[i];
        } else if (std::isfinite(hi) && proposal[i] > hi) {
            proposal[i] = 2.0 * hi - proposal[i];
        }
    }
    if (proposal == state.x) {
        return false;
    }
    const double lp = log_target(proposal);
    if (lp > -std::numeric_limits<double>::infinity() && accept(lp - state.log_p, rng)) {
        state.x = proposal;
        state.log_p = lp;
        return true;
    }
    return false;
}

// ---------------------------------------------------------------------------

ChainStore::ChainStore(std::vector<std::string> names, double warmup_fraction)
    : names_(std::move(names)), warmup_fraction_(warmup_fraction)
{
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
        throw InputError("ChainStore: warm-up fraction must lie in [0, 1)");
    }
}

void ChainStore::add_chain(MatrixXd draws, std::uint64_t seed, double acceptance)
{
    if (draws.cols() != dimension()) {
        throw InputError("ChainStore: chain dimension does not match the parameter names");
    }
    chains_.push_back(std::move(draws));
    seeds_.push_back(seed);
    acceptance_.push_back(acceptance);
}

Eigen::Index ChainStore::warmup(std::size_t chain) const
{
    return static_cast<Eigen::Index>(std::floor(warmup_fraction_ * static_cast<double>(iterations(chain))));
}

MatrixXd ChainStore::post_warmup(std::size_t chain) const
{
    const auto& c = chains_.at(chain);
    const auto cut = warmup(chain);
    return c.bottomRows(c.rows() - cut);
}

MatrixXd ChainStore::pooled() const
{
    Eigen::Index rows = 0;
    for (std::size_t c = 0; c < chains_.size(); ++c) {
        rows += iterations(c) - warmup(c);
    }
    MatrixXd out(rows, dimension());
    Eigen::Index at = 0;
    for (std::size_t c = 0; c < chains_.size(); ++c) {
        const MatrixXd p = post_warmup(c);
        out.middleRows(at, p.rows()) = p;
        at += p.rows();
    }
    return out;
}

ChainStore ChainStore::transformed(const std::function<VectorXd(const VectorXd&)>& f) const
{
    ChainStore out(names_, warmup_fraction_);
    for (std::size_t c = 0; c < chains_.size(); ++c) {
        MatrixXd m(chains_[c].rows(), chains_[c].cols());
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            m.row(i) = f(chains_[c].row(i).transpose()).transpose();
        }
        out.add_chain(std::move(m), seeds_[c], acceptance_[c]);
    }
    return out;
}

double split_rhat(const std::vector<VectorXd>& chains)
{
    if (chains.size() < 2) {
        throw InputError("gelman_rhat: need at least two chains");
    }
    std::vector<VectorXd> halves;
    for (const auto& c : chains) {
        if (c.size() < 4) {
            throw InputError("gelman_rhat: need at least four post-warm-up draws per chain");
        }
        const auto half = c.size() / 2;
        halves.push_back(c.head(half));
        halves.push_back(c.tail(half));
    }
    const auto n = static_cast<double>(halves.front().size());
    const auto m = static_cast<double>(halves.size());
    VectorXd means(halves.size());
    double w = 0.0;
    for (std::size_t j = 0; j < halves.size(); ++j) {
        means[static_cast<Eigen::Index>(j)] = halves[j].mean();
        w += (halves[j].array() - halves[j].mean()).square().sum() / (n - 1.0);
    }
    w /= m;
    const double grand = means.mean();
    const double b = n / (m - 1.0) * (means.array() - grand).square().sum();
    if (!(w > 0.0)) {
        return std::numeric_limits<double>::infinity();
    }
    const double var_plus = (n - 1.0) / n * w + b / n;
    return std::sqrt(var_plus / w);
}

double gelman_rhat(const ChainStore& chains, Eigen::Index param)
{
    std::vector<VectorXd> draws;
    for (std::size_t c = 0; c < chains.n_chains(); ++c) {
        draws.push_back(chains.post_warmup(c).col(param));
    }
    return split_rhat(draws);
}

double quantile(std::vector<double> values, double q)
{
    if (values.empty()) {
        throw InputError("quantile: no values");
    }
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

void run_parallel(std::size_t count, bool parallel, const std::function<void(std::size_t)>& job)
{
    if (!parallel || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            job(i);
        }
        return;
    }
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(count);
    for (std::size_t i = 0; i < count; ++i) {
        threads.emplace_back([&, i] {
            try {
                job(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) {
        t.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

ChainStore run_adaptive_chains(const LogTarget& log_target, const std::vector<VectorXd>& starts,
                               const MatrixXd& initial_cov, const std::vector<std::string>& names,
                               const ChainRunOptions& options)
{
    if (starts.empty()) {
        throw InputError("run_adaptive_chains: no start points");
    }
    if (options.iterations < 1) {
        throw InputError("run_adaptive_chains: need at least one iteration");
    }
    const auto d = starts.front().size();
    std::vector<MatrixXd> draws(starts.size());
    std::vector<double> acceptance(starts.size());
    const auto warmup = static_cast<long>(std::floor(options.warmup_fraction * static_cast<double>(options.iterations)));
    run_parallel(starts.size(), options.parallel, [&](std::size_t c) {
        Rng rng = make_rng(options.seed, c);
        McmcState state{starts[c], log_target(starts[c])};
        if (!std::isfinite(state.log_p)) {
            throw NumericalError("run_adaptive_chains: log target not finite at the start of chain " +
                                 std::to_string(c));
        }
        AdaptState adapt = make_adapt_state(starts[c], initial_cov);
        MatrixXd out(options.iterations, d);
        long accepted_after = 0;
        for (long it = 0; it < options.iterations; ++it) {
            if (it == warmup) {
                adapt.adapting = false;
            }
            const bool acc = adaptive_mh_step(state, log_target, adapt, rng);
            if (it >= warmup && acc) {
                ++accepted_after;
            }
            out.row(it) = state.x.transpose();
        }
        draws[c] = std::move(out);
        acceptance[c] = static_cast<double>(accepted_after) / static_cast<double>(std::max(1L, options.iterations - warmup));
    });
    ChainStore store(names, options.warmup_fraction);
    for (std::size_t c = 0; c < starts.size(); ++c) {
        store.add_chain(std::move(draws[c]), options.seed, acceptance[c]);
    }
    return store;
}

} // namespace flexnoise
