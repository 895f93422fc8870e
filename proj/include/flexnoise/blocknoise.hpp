#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flexnoise/fitting.hpp"
#include "flexnoise/kernels.hpp"
#include "flexnoise/mcmc.hpp"
#include "flexnoise/priors.hpp"
#include "flexnoise/sparse_covariance.hpp"

namespace flexnoise {

/// Kernel parameters of one block, stored as logs.
struct BlockParams {
    double log_length = 0.0;
    double log_sigma = 0.0;

    bool operator==(const BlockParams&) const = default;
};

/// Consecutive blocks covering 0..N-1.
class Partition {
public:
    Partition() = default;
    Partition(std::vector<Eigen::Index> sizes, std::vector<BlockParams> psi);

    static Partition single(Eigen::Index n, BlockParams psi = {});
    /// Builds from 1-based block labels z (non-decreasing, steps of 0 or 1, z_1 = 1).
    static Partition from_labels(const std::vector<int>& z, std::vector<BlockParams> psi);

    Eigen::Index size() const { return total_; }
    Eigen::Index blocks() const { return static_cast<Eigen::Index>(sizes_.size()); }
    const std::vector<Eigen::Index>& sizes() const { return sizes_; }
    const std::vector<BlockParams>& psi() const { return psi_; }
    std::vector<BlockParams>& psi() { return psi_; }
    Eigen::Index block_size(Eigen::Index j) const { return sizes_[static_cast<std::size_t>(j)]; }
    Eigen::Index start(Eigen::Index j) const;

    std::vector<int> labels() const;
    /// 0-based indices i where a new block starts (i > 0).
    std::vector<Eigen::Index> boundaries() const;
    /// Run-length encoding such as "100*1;100*2": size*label per block.
    std::string encode() const;

    /// Throws InputError unless every invariant holds.
    void validate() const;

    Partition split(Eigen::Index j, Eigen::Index l, BlockParams psi_new) const;
    Partition merge(Eigen::Index j) const;
    Partition shuffle(Eigen::Index j, Eigen::Index l) const;

    bool operator==(const Partition&) const = default;

private:
    std::vector<Eigen::Index> sizes_;
    std::vector<BlockParams> psi_;
    Eigen::Index total_ = 0;
};

/// Discount s in [0, 1) and strength phi > -s.
struct PpmHyper {
    double s = 0.5;
    double phi = 1.0;

    void validate() const;
};

/// log (x)_n = sum_{i<n} log(x + i).
double log_pochhammer(double x, Eigen::Index n);

double ppm_log_prior(const std::vector<Eigen::Index>& sizes, const PpmHyper& hyper);
double ppm_log_prior(const Partition& partition, const PpmHyper& hyper);

/// Every composition of n, as block-size lists.
std::vector<std::vector<Eigen::Index>> all_compositions(Eigen::Index n);

/// Block-diagonal covariance with each block filled by the stationary kernel.
SparseCovariance block_covariance(const Partition& partition, const VectorXd& times, KernelKind kind,
                                  double threshold = kDefaultTruncation);

struct MoveConfig {
    double psi_scale = 0.25;
    double split_probability = 0.25;
};

/// Probability of attempting a split from this partition (the rest goes to merge).
double split_move_probability(const Partition& partition, const MoveConfig& config);

struct Proposal {
    Partition next;
    double log_forward = 0.0;
    double log_reverse = 0.0;
    /// First block of the current partition that the move touches.
    Eigen::Index block = 0;
};

/// log density of the Gaussian random walk that draws a new block's parameters.
double psi_proposal_log_density(const BlockParams& to, const BlockParams& from, double scale);

Proposal propose_split(const Partition& partition, Rng& rng, const MoveConfig& config = {});
Proposal propose_merge(const Partition& partition, Rng& rng, const MoveConfig& config = {});
Proposal propose_shuffle(const Partition& partition, Rng& rng);

/// Split at block j after l points with a given new-block parameter (deterministic form
/// of propose_split, used to pair moves with their reverses).
Proposal make_split(const Partition& partition, Eigen::Index j, Eigen::Index l, BlockParams psi_new,
                    const MoveConfig& config = {});
Proposal make_merge(const Partition& partition, Eigen::Index j, const MoveConfig& config = {});

struct BlockOptions {
    long iterations = 20000;
    double warmup_fraction = 0.5;
    int chains = 3;
    std::uint64_t seed = 1;
    bool parallel = true;
    double rhat_threshold = 1.05;
    KernelKind kernel = KernelKind::Laplacian;
    double threshold = kDefaultTruncation;

    BetaPrior s_prior{1.0, 1.0};
    /// phi + s ~ Gamma(shape, rate).
    double phi_shape = 0.01;
    double phi_rate = 100.0;
    NormalPrior log_length_prior{-4.0, 4.0};
    NormalPrior log_sigma_prior{0.0, 4.0};

    MoveConfig moves;
    double psi_mh_scale = 0.15;
    double s_scale = 0.05;
    double phi_scale = 0.5;

    double s0 = 0.5;
    /// Initial phi + s.
    double phi_plus_s0 = 1e-4;
    bool sample_hyper = true;
    bool update_psi = true;
    bool include_psi_prior = true;
    /// Replace the data likelihood by a constant (prior-only checks); theta is then not updated.
    bool constant_likelihood = false;
    std::optional<Partition> initial;
    /// Keep every k-th post-warm-up partition for per-time summaries.
    long profile_thin = 10;
};

struct BlockChain {
    /// Per iteration: model theta (constrained), then block count, s, phi, mean log sigma over time.
    MatrixXd draws;
    std::vector<std::string> partitions;
    double theta_acceptance = 0.0;
    double split_acceptance = 0.0;
    double merge_acceptance = 0.0;
    double shuffle_acceptance = 0.0;
    /// Thinned post-warm-up per-time sd and lag-1 correlation (rows = kept draws).
    MatrixXd profile_sd;
    MatrixXd profile_lag1;
    std::vector<Partition> kept_partitions;
};

struct BlockResult {
    std::vector<std::string> names;
    ChainStore chains;
    std::vector<BlockChain> raw;
    std::vector<double> rhat;
    bool converged = false;
    std::size_t n_model = 0;
    VectorXd theta_start;
};

/// Split-merge-shuffle sampler over (theta, partition, block parameters, s, phi).
BlockResult run_block_sampler(const Dataset& data, std::shared_ptr<const ForwardModel> model,
                              const BlockOptions& options);

/// One chain, exposed for testing.
BlockChain run_block_chain(const Dataset& data, std::shared_ptr<const ForwardModel> model, const BlockOptions& options,
                           const VectorXd& theta0, const MatrixXd& theta_cov, const Partition& initial,
                           std::uint64_t stream);

/// Posterior-median partition: K is the median block count; boundaries are coordinate-wise
/// medians over the kept draws with that many blocks.
std::vector<Eigen::Index> median_boundaries(const std::vector<Partition>& draws);

/// Partition decoded from Partition::encode output (block parameters set to zero).
Partition decode_partition(const std::string& text);

} // namespace flexnoise
