#include "flexnoise/blocknoise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "flexnoise/error.hpp"
#include "flexnoise/io.hpp"
#include "flexnoise/likelihood.hpp"
#include "flexnoise/noise_models.hpp"

namespace flexnoise {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

} // namespace

Partition::Partition(std::vector<Eigen::Index> sizes, std::vector<BlockParams> psi)
    : sizes_(std::move(sizes)), psi_(std::move(psi))
{
    total_ = std::accumulate(sizes_.begin(), sizes_.end(), Eigen::Index{0});
    validate();
}

Partition Partition::single(Eigen::Index n, BlockParams psi)
{
    return Partition({n}, {psi});
}

Partition Partition::from_labels(const std::vector<int>& z, std::vector<BlockParams> psi)
{
    if (z.empty() || z.front() != 1) {
        throw InputError("Partition: labels must start at 1");
    }
    std::vector<Eigen::Index> sizes{1};
    for (std::size_t i = 1; i < z.size(); ++i) {
        const int step = z[i] - z[i - 1];
        if (step == 0) {
            ++sizes.back();
        } else if (step == 1) {
            sizes.push_back(1);
        } else {
            throw InputError("Partition: labels must increase by 0 or 1");
        }
    }
    return Partition(std::move(sizes), std::move(psi));
}

Eigen::Index Partition::start(Eigen::Index j) const
{
    Eigen::Index s = 0;
    for (Eigen::Index k = 0; k < j; ++k) {
        s += sizes_[static_cast<std::size_t>(k)];
    }
    return s;
}

std::vector<int> Partition::labels() const
{
    std::vector<int> z;
    z.reserve(static_cast<std::size_t>(total_));
    for (std::size_t j = 0; j < sizes_.size(); ++j) {
        z.insert(z.end(), static_cast<std::size_t>(sizes_[j]), static_cast<int>(j + 1));
    }
    return z;
}

std::vector<Eigen::Index> Partition::boundaries() const
{
    std::vector<Eigen::Index> out;
    Eigen::Index at = 0;
    for (std::size_t j = 0; j + 1 < sizes_.size(); ++j) {
        at += sizes_[j];
        out.push_back(at);
    }
    return out;
}

std::string Partition::encode() const
{
    std::string out;
    for (std::size_t j = 0; j < sizes_.size(); ++j) {
        if (j > 0) {
            out += ';';
        }
        out += std::to_string(sizes_[j]) + "*" + std::to_string(j + 1);
    }
    return out;
}

Partition decode_partition(const std::string& text)
{
    std::vector<Eigen::Index> sizes;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ';')) {
        const auto star = item.find('*');
        if (star == std::string::npos) {
            throw InputError("decode_partition: malformed entry '" + item + "'");
        }
        sizes.push_back(static_cast<Eigen::Index>(std::stoll(item.substr(0, star))));
    }
    return Partition(sizes, std::vector<BlockParams>(sizes.size()));
}

void Partition::validate() const
{
    if (sizes_.empty()) {
        throw InputError("Partition: no blocks");
    }
    if (psi_.size() != sizes_.size()) {
        throw InputError("Partition: need one parameter pair per block");
    }
    Eigen::Index sum = 0;
    for (auto n : sizes_) {
        if (n < 1) {
            throw InputError("Partition: empty block");
        }
        sum += n;
    }
    if (sum != total_) {
        throw InputError("Partition: block sizes do not add up");
    }
}

Partition Partition::split(Eigen::Index j, Eigen::Index l, BlockParams psi_new) const
{
    const auto uj = static_cast<std::size_t>(j);
    if (j < 0 || j >= blocks() || l < 1 || l >= sizes_[uj]) {
        throw InputError("Partition::split: invalid block or split point");
    }
    auto sizes = sizes_;
    auto psi = psi_;
    const auto n = sizes[uj];
    sizes[uj] = l;
    sizes.insert(sizes.begin() + j + 1, n - l);
    psi.insert(psi.begin() + j + 1, psi_new);
    return Partition(std::move(sizes), std::move(psi));
}

Partition Partition::merge(Eigen::Index j) const
{
    const auto uj = static_cast<std::size_t>(j);
    if (j < 0 || j + 1 >= blocks()) {
        throw InputError("Partition::merge: need an adjacent pair");
    }
    auto sizes = sizes_;
    auto psi = psi_;
    sizes[uj] += sizes[uj + 1];
    sizes.erase(sizes.begin() + j + 1);
    psi.erase(psi.begin() + j + 1);
    return Partition(std::move(sizes), std::move(psi));
}

Partition Partition::shuffle(Eigen::Index j, Eigen::Index l) const
{
    const auto uj = static_cast<std::size_t>(j);
    if (j < 0 || j + 1 >= blocks()) {
        throw InputError("Partition::shuffle: need an adjacent pair");
    }
    const auto n = sizes_[uj] + sizes_[uj + 1];
    if (l < 1 || l >= n) {
        throw InputError("Partition::shuffle: invalid boundary");
    }
    auto sizes = sizes_;
    sizes[uj] = l;
    sizes[uj + 1] = n - l;
    return Partition(std::move(sizes), psi_);
}

// ---------------------------------------------------------------------------

void PpmHyper::validate() const
{
    if (!(s >= 0.0 && s < 1.0)) {
        throw InputError("PPM: discount s must lie in [0, 1)");
    }
    if (!(phi + s > 0.0) || !std::isfinite(phi)) {
        throw InputError("PPM: strength must satisfy phi > -s");
    }
}

double log_pochhammer(double x, Eigen::Index n)
{
    double out = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        out += std::log(x + static_cast<double>(i));
    }
    return out;
}

double ppm_log_prior(const std::vector<Eigen::Index>& sizes, const PpmHyper& hyper)
{
    hyper.validate();
    const auto k = static_cast<Eigen::Index>(sizes.size());
    const Eigen::Index n = std::accumulate(sizes.begin(), sizes.end(), Eigen::Index{0});
    double out = std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0);
    for (Eigen::Index i = 1; i < k; ++i) {
        out += std::log(hyper.phi + static_cast<double>(i) * hyper.s);
    }
    out -= log_pochhammer(hyper.phi + 1.0, n - 1);
    for (auto nj : sizes) {
        out += log_pochhammer(1.0 - hyper.s, nj - 1) - std::lgamma(static_cast<double>(nj) + 1.0);
    }
    return out;
}

double ppm_log_prior(const Partition& partition, const PpmHyper& hyper)
{
    return ppm_log_prior(partition.sizes(), hyper);
}

std::vector<std::vector<Eigen::Index>> all_compositions(Eigen::Index n)
{
    if (n < 1 || n > 24) {
        throw InputError("all_compositions: n must lie in [1, 24]");
    }
    std::vector<std::vector<Eigen::Index>> out;
    const std::uint64_t count = std::uint64_t{1} << (n - 1);
    for (std::uint64_t mask = 0; mask < count; ++mask) {
        std::vector<Eigen::Index> sizes{1};
        for (Eigen::Index i = 1; i < n; ++i) {
            if (mask & (std::uint64_t{1} << (i - 1))) {
                sizes.push_back(1);
            } else {
                ++sizes.back();
            }
        }
        out.push_back(std::move(sizes));
    }
    return out;
}

SparseCovariance block_covariance(const Partition& partition, const VectorXd& times, KernelKind kind, double threshold)
{
    if (partition.size() != times.size()) {
        throw InputError("block_covariance: partition and time grid differ in length");
    }
    const auto n = times.size();
    std::vector<Eigen::Index> first(static_cast<std::size_t>(n));
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(n));
    Eigen::Index start = 0;
    for (Eigen::Index j = 0; j < partition.blocks(); ++j) {
        const auto len = partition.block_size(j);
        const auto& p = partition.psi()[static_cast<std::size_t>(j)];
        const StationaryKernelSpec spec{kind, std::exp(p.log_sigma), std::exp(p.log_length), 0.5};
        const auto block = build_covariance(spec, times.segment(start, len), threshold);
        for (Eigen::Index i = 0; i < len; ++i) {
            const auto row = static_cast<std::size_t>(start + i);
            first[row] = start + block.first(i);
            for (Eigen::Index c = block.first(i); c <= i; ++c) {
                rows[row].push_back(block(i, c));
            }
        }
        start += len;
    }
    return SparseCovariance(std::move(first), std::move(rows), threshold);
}

// ---------------------------------------------------------------------------

namespace {

Eigen::Index splittable_count(const Partition& p)
{
    return static_cast<Eigen::Index>(
        std::count_if(p.sizes().begin(), p.sizes().end(), [](Eigen::Index n) { return n > 1; }));
}

double merge_move_probability(const Partition& p, const MoveConfig& config)
{
    return p.blocks() >= 2 ? 1.0 - split_move_probability(p, config) : 0.0;
}

double normal_std(Rng& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    return normal(rng);
}

Eigen::Index uniform_index(Rng& rng, Eigen::Index n)
{
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    return pick(rng);
}

} // namespace

double split_move_probability(const Partition& partition, const MoveConfig& config)
{
    if (splittable_count(partition) == 0) {
        return 0.0;
    }
    if (partition.blocks() == 1) {
        return 1.0;
    }
    return config.split_probability;
}

double psi_proposal_log_density(const BlockParams& to, const BlockParams& from, double scale)
{
    if (scale <= 0.0) {
        return 0.0;
    }
    return normal_logpdf(to.log_length, from.log_length, scale) + normal_logpdf(to.log_sigma, from.log_sigma, scale);
}

Proposal make_split(const Partition& partition, Eigen::Index j, Eigen::Index l, BlockParams psi_new,
                    const MoveConfig& config)
{
    const double p_split = split_move_probability(partition, config);
    if (p_split <= 0.0) {
        throw InputError("split: no block can be split");
    }
    const auto n = partition.block_size(j);
    Proposal out{partition.split(j, l, psi_new), 0.0, 0.0, j};
    out.log_forward = std::log(p_split) - std::log(static_cast<double>(splittable_count(partition))) -
                      std::log(static_cast<double>(n - 1)) +
                      psi_proposal_log_density(psi_new, partition.psi()[static_cast<std::size_t>(j)], config.psi_scale);
    out.log_reverse = std::log(merge_move_probability(out.next, config)) -
                      std::log(static_cast<double>(out.next.blocks() - 1));
    return out;
}

Proposal make_merge(const Partition& partition, Eigen::Index j, const MoveConfig& config)
{
    const double p_merge = merge_move_probability(partition, config);
    if (p_merge <= 0.0) {
        throw InputError("merge: need at least two blocks");
    }
    const auto uj = static_cast<std::size_t>(j);
    const auto n = partition.sizes()[uj] + partition.sizes()[uj + 1];
    Proposal out{partition.merge(j), 0.0, 0.0, j};
    out.log_forward = std::log(p_merge) - std::log(static_cast<double>(partition.blocks() - 1));
    out.log_reverse = std::log(split_move_probability(out.next, config)) -
                      std::log(static_cast<double>(splittable_count(out.next))) -
                      std::log(static_cast<double>(n - 1)) +
                      psi_proposal_log_density(partition.psi()[uj + 1], partition.psi()[uj], config.psi_scale);
    return out;
}

Proposal propose_split(const Partition& partition, Rng& rng, const MoveConfig& config)
{
    const auto count = splittable_count(partition);
    if (count == 0) {
        throw InputError("propose_split: no block can be split");
    }
    auto pick = uniform_index(rng, count);
    Eigen::Index j = 0;
    for (; j < partition.blocks(); ++j) {
        if (partition.block_size(j) > 1 && pick-- == 0) {
            break;
        }
    }
    const auto l = 1 + uniform_index(rng, partition.block_size(j) - 1);
    BlockParams psi_new = partition.psi()[static_cast<std::size_t>(j)];
    if (config.psi_scale > 0.0) {
        psi_new.log_length += config.psi_scale * normal_std(rng);
        psi_new.log_sigma += config.psi_scale * normal_std(rng);
    }
    return make_split(partition, j, l, psi_new, config);
}

Proposal propose_merge(const Partition& partition, Rng& rng, const MoveConfig& config)
{
    if (partition.blocks() < 2) {
        throw InputError("propose_merge: need at least two blocks");
    }
    return make_merge(partition, uniform_index(rng, partition.blocks() - 1), config);
}

Proposal propose_shuffle(const Partition& partition, Rng& rng)
{
    if (partition.blocks() < 2) {
        throw InputError("propose_shuffle: need at least two blocks");
    }
    const auto j = uniform_index(rng, partition.blocks() - 1);
    const auto n = partition.block_size(j) + partition.block_size(j + 1);
    const auto l = 1 + uniform_index(rng, n - 1);
    const double log_q = -std::log(static_cast<double>(partition.blocks() - 1)) - std::log(static_cast<double>(n - 1));
    return Proposal{partition.shuffle(j, l), log_q, log_q, j};
}

// ---------------------------------------------------------------------------

namespace {

struct BlockCache {
    std::shared_ptr<const SparseCovariance> cov;
    double loglik = 0.0;
};

class BlockChainRunner {
public:
    BlockChainRunner(const Dataset& data, const ForwardModel& model, const BlockOptions& options)
        : data_(data), model_(model), options_(options), specs_(model.parameters())
    {
    }

    BlockChain run(const VectorXd& theta0, const MatrixXd& theta_cov, const Partition& initial, std::uint64_t stream)
    {
        Rng rng = make_rng(options_.seed, stream);
        const auto p = static_cast<Eigen::Index>(specs_.size());
        const auto n = data_.size();
        partition_ = initial;
        if (partition_.size() != n) {
            throw InputError("block sampler: initial partition does not match the data length");
        }
        hyper_ = {options_.s0, options_.phi_plus_s0 - options_.s0};
        hyper_.validate();
        phi_theta_ = transform_to_unconstrained(specs_, theta0);
        update_residual(phi_theta_);
        rebuild_all();
        if (!std::isfinite(total_loglik())) {
            throw NumericalError("block sampler: likelihood not finite at the initial state");
        }
        McmcState theta_state{phi_theta_, theta_log_target(phi_theta_)};
        AdaptState adapt = make_adapt_state(phi_theta_, theta_cov);

        const long iters = options_.iterations;
        const auto warmup = static_cast<long>(std::floor(options_.warmup_fraction * static_cast<double>(iters)));
        BlockChain chain;
        chain.draws.resize(iters, p + 4);
        chain.partitions.reserve(static_cast<std::size_t>(iters));
        long theta_acc = 0;
        long theta_tries = 0;
        long split_acc = 0, split_tries = 0, merge_acc = 0, merge_tries = 0, shuffle_acc = 0, shuffle_tries = 0;
        std::vector<VectorXd> sd_rows;
        std::vector<VectorXd> lag_rows;
        std::uniform_real_distribution<double> unif(0.0, 1.0);

        for (long it = 0; it < iters; ++it) {
            if (it == warmup) {
                adapt.adapting = false;
            }
            if (!options_.constant_likelihood && p > 0) {
                theta_state.x = phi_theta_;
                theta_state.log_p = theta_log_target(phi_theta_);
                const LogTarget target = [this](const VectorXd& x) { return theta_log_target(x); };
                const bool acc = adaptive_mh_step(theta_state, target, adapt, rng);
                if (acc) {
                    phi_theta_ = theta_state.x;
                    update_residual(phi_theta_);
                    refresh_logliks();
                }
                if (it >= warmup) {
                    ++theta_tries;
                    theta_acc += acc ? 1 : 0;
                }
            }
            if (options_.sample_hyper) {
                update_s(rng);
                update_phi(rng);
            }
            if (options_.update_psi) {
                update_psi(rng);
            }
            const double p_split = split_move_probability(partition_, options_.moves);
            const double u = unif(rng);
            if (p_split > 0.0 && (partition_.blocks() == 1 || u < p_split)) {
                ++split_tries;
                split_acc += try_split(rng) ? 1 : 0;
            } else if (partition_.blocks() >= 2) {
                ++merge_tries;
                merge_acc += try_merge(rng) ? 1 : 0;
            }
            if (partition_.blocks() >= 2) {
                ++shuffle_tries;
                shuffle_acc += try_shuffle(rng) ? 1 : 0;
            }
#ifndef NDEBUG
            partition_.validate();
#endif
            const VectorXd theta = transform_to_constrained(specs_, phi_theta_);
            chain.draws.row(it).head(p) = theta.transpose();
            chain.draws(it, p) = static_cast<double>(partition_.blocks());
            chain.draws(it, p + 1) = hyper_.s;
            chain.draws(it, p + 2) = hyper_.phi;
            chain.draws(it, p + 3) = mean_log_sigma();
            chain.partitions.push_back(partition_.encode());
            if (it >= warmup && options_.profile_thin > 0 && (it - warmup) % options_.profile_thin == 0) {
                auto prof = profile();
                sd_rows.push_back(std::move(prof.sd));
                lag_rows.push_back(std::move(prof.lag1));
                chain.kept_partitions.push_back(partition_);
            }
        }
        auto rate = [](long a, long t) { return t > 0 ? static_cast<double>(a) / static_cast<double>(t) : 0.0; };
        chain.theta_acceptance = rate(theta_acc, theta_tries);
        chain.split_acceptance = rate(split_acc, split_tries);
        chain.merge_acceptance = rate(merge_acc, merge_tries);
        chain.shuffle_acceptance = rate(shuffle_acc, shuffle_tries);
        chain.profile_sd.resize(static_cast<Eigen::Index>(sd_rows.size()), n);
        chain.profile_lag1.resize(static_cast<Eigen::Index>(lag_rows.size()), n);
        for (std::size_t r = 0; r < sd_rows.size(); ++r) {
            chain.profile_sd.row(static_cast<Eigen::Index>(r)) = sd_rows[r].transpose();
            chain.profile_lag1.row(static_cast<Eigen::Index>(r)) = lag_rows[r].transpose();
        }
        return chain;
    }

private:
    double psi_prior(const BlockParams& psi) const
    {
        if (!options_.include_psi_prior) {
            return 0.0;
        }
        return normal_logpdf(psi.log_length, options_.log_length_prior.mean, options_.log_length_prior.sd) +
               normal_logpdf(psi.log_sigma, options_.log_sigma_prior.mean, options_.log_sigma_prior.sd);
    }

    void update_residual(const VectorXd& phi)
    {
        if (options_.constant_likelihood) {
            residual_ = VectorXd::Zero(data_.size());
            return;
        }
        try {
            residual_ = data_.values() - model_.simulate(transform_to_constrained(specs_, phi), data_.times());
        } catch (const Error&) {
            residual_ = VectorXd::Constant(data_.size(), std::numeric_limits<double>::quiet_NaN());
        }
    }

    // Builds the covariance and log-likelihood of one block of the given partition.
    BlockCache make_block(Eigen::Index start, Eigen::Index len, const BlockParams& psi) const
    {
        if (options_.constant_likelihood) {
            return {nullptr, 0.0};
        }
        try {
            const StationaryKernelSpec spec{options_.kernel, std::exp(psi.log_sigma), std::exp(psi.log_length), 0.5};
            auto cov = std::make_shared<const SparseCovariance>(
                build_covariance(spec, data_.times().segment(start, len), options_.threshold));
            const double ll = block_loglik(*cov, residual_.segment(start, len));
            return {std::move(cov), ll};
        } catch (const Error&) {
            return {nullptr, kNegInf};
        }
    }

    static double block_loglik(const SparseCovariance& cov, const VectorXd& r)
    {
        if (!r.allFinite()) {
            return kNegInf;
        }
        constexpr double kLog2Pi = 1.8378770664093454835606594728112;
        return -0.5 * (static_cast<double>(r.size()) * kLog2Pi + cov.log_det() + cov.quad_form(r));
    }

    void rebuild_all()
    {
        cache_.clear();
        for (Eigen::Index j = 0; j < partition_.blocks(); ++j) {
            cache_.push_back(make_block(partition_.start(j), partition_.block_size(j),
                                        partition_.psi()[static_cast<std::size_t>(j)]));
        }
    }

    void refresh_logliks()
    {
        if (options_.constant_likelihood) {
            return;
        }
        Eigen::Index start = 0;
        for (Eigen::Index j = 0; j < partition_.blocks(); ++j) {
            auto& c = cache_[static_cast<std::size_t>(j)];
            const auto len = partition_.block_size(j);
            c.loglik = c.cov ? block_loglik(*c.cov, residual_.segment(start, len)) : kNegInf;
            start += len;
        }
    }

    double total_loglik() const
    {
        double s = 0.0;
        for (const auto& c : cache_) {
            s += c.loglik;
        }
        return s;
    }

    double theta_log_target(const VectorXd& phi) const
    {
        const double prior = log_prior_unconstrained(specs_, phi);
        if (!std::isfinite(prior)) {
            return kNegInf;
        }
        VectorXd r;
        try {
            r = data_.values() - model_.simulate(transform_to_constrained(specs_, phi), data_.times());
        } catch (const Error&) {
            return kNegInf;
        }
        double ll = 0.0;
        Eigen::Index start = 0;
        for (Eigen::Index j = 0; j < partition_.blocks(); ++j) {
            const auto& c = cache_[static_cast<std::size_t>(j)];
            const auto len = partition_.block_size(j);
            if (!c.cov) {
                return kNegInf;
            }
            ll += block_loglik(*c.cov, r.segment(start, len));
            start += len;
        }
        return std::isfinite(ll) ? prior + ll : kNegInf;
    }

    double hyper_log_target(const PpmHyper& h) const
    {
        if (!(h.s >= 0.0 && h.s < 1.0) || !(h.phi + h.s > 0.0)) {
            return kNegInf;
        }
        const double ls = log_prior_density(options_.s_prior, h.s);
        const double lphi =
            log_prior_density(ShiftedGammaPrior{options_.phi_shape, options_.phi_rate, -h.s}, h.phi);
        if (!std::isfinite(ls) || !std::isfinite(lphi)) {
            return kNegInf;
        }
        return ls + lphi + ppm_log_prior(partition_, h);
    }

    static bool accept(double log_ratio, Rng& rng)
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

    void update_s(Rng& rng)
    {
        PpmHyper next = hyper_;
        next.s = reflect(hyper_.s + options_.s_scale * normal_std(rng), 0.0, 1.0);
        if (next.s >= 1.0) {
            return;
        }
        const double cur = hyper_log_target(hyper_);
        const double prop = hyper_log_target(next);
        if (prop > kNegInf && accept(prop - cur, rng)) {
            hyper_ = next;
        }
    }

    void update_phi(Rng& rng)
    {
        const double u = std::log(hyper_.phi + hyper_.s);
        const double u_new = u + options_.phi_scale * normal_std(rng);
        PpmHyper next = hyper_;
        next.phi = std::exp(u_new) - hyper_.s;
        const double cur = hyper_log_target(hyper_);
        const double prop = hyper_log_target(next);
        // random walk on log(phi + s): Jacobian of the map back to phi
        if (prop > kNegInf && accept(prop - cur + (u_new - u), rng)) {
            hyper_ = next;
        }
    }

    void update_psi(Rng& rng)
    {
        for (Eigen::Index j = 0; j < partition_.blocks(); ++j) {
            const auto uj = static_cast<std::size_t>(j);
            for (int coord = 0; coord < 2; ++coord) {
                BlockParams next = partition_.psi()[uj];
                (coord == 0 ? next.log_length : next.log_sigma) += options_.psi_mh_scale * normal_std(rng);
                const auto fresh = make_block(partition_.start(j), partition_.block_size(j), next);
                if (!(fresh.loglik > kNegInf)) {
                    continue;
                }
                const double ratio = fresh.loglik + psi_prior(next) - cache_[uj].loglik - psi_prior(partition_.psi()[uj]);
                if (accept(ratio, rng)) {
                    partition_.psi()[uj] = next;
                    cache_[uj] = fresh;
                }
            }
        }
    }

    bool try_split(Rng& rng)
    {
        const auto prop = propose_split(partition_, rng, options_.moves);
        const auto j = prop.block;
        const auto start = partition_.start(j);
        const auto l = prop.next.block_size(j);
        const auto& psi_j = prop.next.psi()[static_cast<std::size_t>(j)];
        const auto& psi_new = prop.next.psi()[static_cast<std::size_t>(j + 1)];
        auto left = make_block(start, l, psi_j);
        auto right = make_block(start + l, prop.next.block_size(j + 1), psi_new);
        if (!(left.loglik > kNegInf) || !(right.loglik > kNegInf)) {
            return false;
        }
        const double delta = ppm_log_prior(prop.next, hyper_) - ppm_log_prior(partition_, hyper_) + left.loglik +
                             right.loglik - cache_[static_cast<std::size_t>(j)].loglik + psi_prior(psi_new);
        if (!accept(delta + prop.log_reverse - prop.log_forward, rng)) {
            return false;
        }
        partition_ = prop.next;
        cache_[static_cast<std::size_t>(j)] = std::move(left);
        cache_.insert(cache_.begin() + j + 1, std::move(right));
        return true;
    }

    bool try_merge(Rng& rng)
    {
        const auto prop = propose_merge(partition_, rng, options_.moves);
        const auto j = prop.block;
        const auto uj = static_cast<std::size_t>(j);
        auto merged = make_block(partition_.start(j), prop.next.block_size(j), prop.next.psi()[uj]);
        if (!(merged.loglik > kNegInf)) {
            return false;
        }
        const double delta = ppm_log_prior(prop.next, hyper_) - ppm_log_prior(partition_, hyper_) + merged.loglik -
                             cache_[uj].loglik - cache_[uj + 1].loglik - psi_prior(partition_.psi()[uj + 1]);
        if (!accept(delta + prop.log_reverse - prop.log_forward, rng)) {
            return false;
        }
        partition_ = prop.next;
        cache_[uj] = std::move(merged);
        cache_.erase(cache_.begin() + j + 1);
        return true;
    }

    bool try_shuffle(Rng& rng)
    {
        const auto prop = propose_shuffle(partition_, rng);
        const auto j = prop.block;
        const auto uj = static_cast<std::size_t>(j);
        if (prop.next == partition_) {
            return true;
        }
        const auto start = partition_.start(j);
        auto left = make_block(start, prop.next.block_size(j), prop.next.psi()[uj]);
        auto right = make_block(start + prop.next.block_size(j), prop.next.block_size(j + 1), prop.next.psi()[uj + 1]);
        if (!(left.loglik > kNegInf) || !(right.loglik > kNegInf)) {
            return false;
        }
        const double delta = ppm_log_prior(prop.next, hyper_) - ppm_log_prior(partition_, hyper_) + left.loglik +
                             right.loglik - cache_[uj].loglik - cache_[uj + 1].loglik;
        if (!accept(delta, rng)) {
            return false;
        }
        partition_ = prop.next;
        cache_[uj] = std::move(left);
        cache_[uj + 1] = std::move(right);
        return true;
    }

    double mean_log_sigma() const
    {
        double s = 0.0;
        for (Eigen::Index j = 0; j < partition_.blocks(); ++j) {
            s += static_cast<double>(partition_.block_size(j)) * partition_.psi()[static_cast<std::size_t>(j)].log_sigma;
        }
        return s / static_cast<double>(partition_.size());
    }

    NoiseProfile profile() const
    {
        const auto n = partition_.size();
        NoiseProfile out{VectorXd(n), VectorXd::Zero(n)};
        Eigen::Index start = 0;
        for (Eigen::Index j = 0; j < partition_.blocks(); ++j) {
            const auto& psi = partition_.psi()[static_cast<std::size_t>(j)];
            const double sigma = std::exp(psi.log_sigma);
            const StationaryKernelSpec spec{options_.kernel, sigma, std::exp(psi.log_length), 0.5};
            const auto len = partition_.block_size(j);
            for (Eigen::Index i = start; i < start + len; ++i) {
                out.sd[i] = sigma;
                if (i + 1 < start + len) {
                    out.lag1[i] = kernel_eval(spec, data_.times()[i], data_.times()[i + 1]) / (sigma * sigma);
                }
            }
            start += len;
        }
        out.lag1[n - 1] = std::numeric_limits<double>::quiet_NaN();
        return out;
    }

    const Dataset& data_;
    const ForwardModel& model_;
    const BlockOptions& options_;
    std::vector<ParameterSpec> specs_;
    Partition partition_;
    PpmHyper hyper_;
    VectorXd phi_theta_;
    VectorXd residual_;
    std::vector<BlockCache> cache_;
};

} // namespace

BlockChain run_block_chain(const Dataset& data, std::shared_ptr<const ForwardModel> model, const BlockOptions& options,
                           const VectorXd& theta0, const MatrixXd& theta_cov, const Partition& initial,
                           std::uint64_t stream)
{
    BlockChainRunner runner(data, *model, options);
    return runner.run(theta0, theta_cov, initial, stream);
}

BlockResult run_block_sampler(const Dataset& data, std::shared_ptr<const ForwardModel> model,
                              const BlockOptions& options)
{
    if (options.chains < 1 || options.iterations < 1) {
        throw ConfigError("block sampler: need at least one chain and one iteration");
    }
    const auto specs = model->parameters();
    const auto p = static_cast<Eigen::Index>(specs.size());
    const auto n = data.size();

    VectorXd theta0;
    MatrixXd theta_cov;
    Partition initial;
    if (options.constant_likelihood) {
        theta0 = model->initial_guess(data);
        theta_cov = default_initial_cov(transform_to_unconstrained(specs, theta0));
        initial = options.initial ? *options.initial : Partition::single(n, {0.0, 0.0});
    } else {
        const VectorXd fit = fit_iid_map(data, model);
        theta0 = fit.head(p);
        LogPosterior iid(data, model, std::make_shared<IidNoise>());
        const VectorXd phi = iid.to_unconstrained(fit);
        const MatrixXd full = laplace_covariance([&iid](const VectorXd& x) { return iid(x); }, phi);
        theta_cov = full.topLeftCorner(p, p);
        const double dt = (data.times()[n - 1] - data.times()[0]) / static_cast<double>(n - 1);
        initial = options.initial ? *options.initial
                                  : Partition::single(n, {std::log(0.1 * dt), std::log(fit[p])});
    }

    // dispersed starting points for theta, one per chain
    Rng start_rng = make_rng(options.seed, 2000003);
    const VectorXd phi0 = transform_to_unconstrained(specs, theta0);
    const MatrixXd factor = Eigen::LLT<MatrixXd>(theta_cov).matrixL();
    std::vector<VectorXd> starts;
    for (int c = 0; c < options.chains; ++c) {
        VectorXd z(p);
        for (Eigen::Index i = 0; i < p; ++i) {
            z[i] = normal_std(start_rng);
        }
        starts.push_back(options.constant_likelihood ? theta0 : transform_to_constrained(specs, phi0 + factor * z));
    }

    BlockResult result;
    result.n_model = static_cast<std::size_t>(p);
    result.theta_start = theta0;
    for (const auto& s : specs) {
        result.names.push_back(s.name);
    }
    for (const char* extra : {"n_blocks", "s", "phi", "mean_log_sigma"}) {
        result.names.emplace_back(extra);
    }
    result.raw.resize(static_cast<std::size_t>(options.chains));
    run_parallel(static_cast<std::size_t>(options.chains), options.parallel, [&](std::size_t c) {
        result.raw[c] = run_block_chain(data, model, options, starts[c], theta_cov, initial, c);
    });
    result.chains = ChainStore(result.names, options.warmup_fraction);
    for (auto& chain : result.raw) {
        result.chains.add_chain(chain.draws, options.seed, chain.theta_acceptance);
    }
    if (options.chains >= 2 && options.iterations * (1.0 - options.warmup_fraction) >= 4) {
        for (Eigen::Index k = 0; k < result.chains.dimension(); ++k) {
            result.rhat.push_back(gelman_rhat(result.chains, k));
        }
        const std::vector<double> model_rhat(result.rhat.begin(), result.rhat.begin() + p);
        result.converged = options.constant_likelihood || all_below(model_rhat, options.rhat_threshold);
    }
    return result;
}

std::vector<Eigen::Index> median_boundaries(const std::vector<Partition>& draws)
{
    if (draws.empty()) {
        throw InputError("median_boundaries: no draws");
    }
    std::vector<double> ks;
    for (const auto& d : draws) {
        ks.push_back(static_cast<double>(d.blocks()));
    }
    const auto k = static_cast<Eigen::Index>(std::llround(quantile(ks, 0.5)));
    std::vector<std::vector<double>> positions(static_cast<std::size_t>(std::max<Eigen::Index>(k - 1, 0)));
    for (const auto& d : draws) {
        if (d.blocks() != k) {
            continue;
        }
        const auto b = d.boundaries();
        for (std::size_t i = 0; i < b.size(); ++i) {
            positions[i].push_back(static_cast<double>(b[i]));
        }
    }
    std::vector<Eigen::Index> out;
    for (const auto& pos : positions) {
        if (!pos.empty()) {
            out.push_back(static_cast<Eigen::Index>(std::llround(quantile(pos, 0.5))));
        }
    }
    return out;
}

} // namespace flexnoise
