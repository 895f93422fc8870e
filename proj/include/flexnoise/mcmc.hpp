#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace flexnoise {

using Eigen::MatrixXd;
using Eigen::VectorXd;

using Rng = std::mt19937_64;
using LogTarget = std::function<double(const VectorXd&)>;

/// Independent stream `stream` derived from a base seed.
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

struct McmcState {
    VectorXd x;
    double log_p = 0.0;
};

/// Running state of the global adaptive-covariance sampler.
struct AdaptState {
    VectorXd mean;
    MatrixXd cov;
    double log_scale = 0.0;
    long iterations = 0;
    bool adapting = true;
    long initial_phase = 200;
    double target_acceptance = 0.234;
    double decay = 0.6;
};

AdaptState make_adapt_state(const VectorXd& x0, const MatrixXd& initial_cov);

/// Diagonal starting covariance: (|x|/10)^2 with a floor of 0.01^2.
MatrixXd default_initial_cov(const VectorXd& x0);

/// One Metropolis step with proposal N(x, exp(log_scale) (cov + eps I)), eps = 1e-6 trace/d,
/// followed by covariance, mean and scale adaptation while adapting.
bool adaptive_mh_step(McmcState& state, const LogTarget& log_target, AdaptState& adapt, Rng& rng);

/// Random-walk Metropolis with independent Gaussian proposal scales. Proposals outside
/// [lower, upper] are reflected back inside, which keeps the proposal symmetric.
bool mh_step(McmcState& state, const LogTarget& log_target, const VectorXd& scale, Rng& rng,
             const std::optional<VectorXd>& lower = std::nullopt,
             const std::optional<VectorXd>& upper = std::nullopt);

/// Reflects x into [lo, hi].
double reflect(double x, double lo, double hi);

/// Draws from several chains. Reads go through post-warm-up slices unless asked otherwise.
class ChainStore {
public:
    explicit ChainStore(std::vector<std::string> names = {}, double warmup_fraction = 0.5);

    void add_chain(MatrixXd draws, std::uint64_t seed, double acceptance);

    std::size_t n_chains() const { return chains_.size(); }
    Eigen::Index dimension() const { return static_cast<Eigen::Index>(names_.size()); }
    const std::vector<std::string>& names() const { return names_; }
    double warmup_fraction() const { return warmup_fraction_; }
    Eigen::Index iterations(std::size_t chain) const { return chains_.at(chain).rows(); }
    Eigen::Index warmup(std::size_t chain) const;
    std::uint64_t seed(std::size_t chain) const { return seeds_.at(chain); }
    double acceptance(std::size_t chain) const { return acceptance_.at(chain); }

    MatrixXd post_warmup(std::size_t chain) const;
    /// Post-warm-up draws of all chains stacked.
    MatrixXd pooled() const;
    const MatrixXd& all_draws(std::size_t chain) const { return chains_.at(chain); }

    /// Maps every stored draw through f (e.g. unconstrained to constrained).
    ChainStore transformed(const std::function<VectorXd(const VectorXd&)>& f) const;

private:
    std::vector<std::string> names_;
    double warmup_fraction_;
    std::vector<MatrixXd> chains_;
    std::vector<std::uint64_t> seeds_;
    std::vector<double> acceptance_;
};

/// Split R-hat on post-warm-up draws; +inf when the within-chain variance is zero.
double gelman_rhat(const ChainStore& chains, Eigen::Index param);
double split_rhat(const std::vector<VectorXd>& chains);

/// Sample quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);

struct ChainRunOptions {
    long iterations = 20000;
    double warmup_fraction = 0.5;
    std::uint64_t seed = 1;
    bool parallel = true;
};

/// Runs one adaptive chain per start point, each with its own RNG stream; adaptation
/// stops at the end of warm-up.
ChainStore run_adaptive_chains(const LogTarget& log_target, const std::vector<VectorXd>& starts,
                               const MatrixXd& initial_cov, const std::vector<std::string>& names,
                               const ChainRunOptions& options);

/// Runs `count` jobs on std::threads (or inline when parallel is false).
void run_parallel(std::size_t count, bool parallel, const std::function<void(std::size_t)>& job);

} // namespace flexnoise
