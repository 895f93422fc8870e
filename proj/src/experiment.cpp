#include "flexnoise/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "flexnoise/error.hpp"
#include "flexnoise/io.hpp"
#include "flexnoise/noise_models.hpp"

namespace flexnoise {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::pair<Scenario, std::string>>& scenario_names()
{
    static const std::vector<std::pair<Scenario, std::string>> names = {
        {Scenario::Ar1Laplacian, "ar1_laplacian"},   {Scenario::MultiplicativeGp, "multiplicative_gp"},
        {Scenario::BlockedBlock, "blocked_block"},   {Scenario::BlockedGp, "blocked_gp"},
        {Scenario::HergSynthetic, "herg_synthetic"},
    };
    return names;
}

constexpr double kHergNoiseSigma = 20.0;

} // namespace

Scenario parse_scenario(const std::string& name)
{
    for (const auto& [s, n] : scenario_names()) {
        if (n == name) {
            return s;
        }
    }
    throw ConfigError("unknown scenario '" + name + "'");
}

std::string to_string(Scenario scenario)
{
    for (const auto& [s, n] : scenario_names()) {
        if (s == scenario) {
            return n;
        }
    }
    return "unknown";
}

const std::vector<std::string>& known_models()
{
    static const std::vector<std::string> models = {"correct", "iid", "laplacian", "gp", "block"};
    return models;
}

Eigen::Index default_points(Scenario scenario)
{
    switch (scenario) {
    case Scenario::Ar1Laplacian:
    case Scenario::MultiplicativeGp:
        return 250;
    case Scenario::BlockedBlock:
    case Scenario::BlockedGp:
        return 500;
    case Scenario::HergSynthetic:
        return 4351;
    }
    return 250;
}

void ExperimentConfig::validate() const
{
    if (replicates < 1) {
        throw ConfigError("replicates must be at least 1");
    }
    if (models.empty()) {
        throw ConfigError("at least one noise model must be selected");
    }
    for (const auto& m : models) {
        if (std::find(known_models().begin(), known_models().end(), m) == known_models().end()) {
            throw ConfigError("unknown noise model '" + m + "'");
        }
    }
    if (n_points < 0) {
        throw ConfigError("n_points must be positive");
    }
    const auto n = n_points > 0 ? n_points : default_points(scenario);
    if ((scenario == Scenario::BlockedBlock || scenario == Scenario::BlockedGp) && n % 5 != 0) {
        throw ConfigError("blocked scenarios need a multiple of 5 points");
    }
    if (n < 20) {
        throw ConfigError("need at least 20 points");
    }
    if (mcmc.chains < 1 || mcmc.iterations < 2 || block.chains < 1 || block.iterations < 2) {
        throw ConfigError("need at least one chain and two iterations");
    }
    if (!(mcmc.warmup_fraction >= 0.0 && mcmc.warmup_fraction < 1.0)) {
        throw ConfigError("warm-up fraction must lie in [0, 1)");
    }
    if (workers < 0) {
        throw ConfigError("workers must be non-negative");
    }
}

void apply_json(ExperimentConfig& c, const json& j)
{
    try {
        if (j.contains("scenario")) c.scenario = parse_scenario(j.at("scenario").get<std::string>());
        if (j.contains("replicates")) c.replicates = j.at("replicates").get<int>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("models")) {
            const auto& m = j.at("models");
            c.models.clear();
            if (m.is_string()) {
                std::stringstream ss(m.get<std::string>());
                std::string item;
                while (std::getline(ss, item, ',')) {
                    if (!item.empty()) c.models.push_back(item);
                }
            } else {
                c.models = m.get<std::vector<std::string>>();
            }
        }
        if (j.contains("n_points")) c.n_points = j.at("n_points").get<Eigen::Index>();
        if (j.contains("out")) c.out_dir = j.at("out").get<std::string>();
        if (j.contains("protocol")) c.protocol = j.at("protocol").get<std::string>();
        if (j.contains("workers")) c.workers = j.at("workers").get<int>();
        if (j.contains("mcmc")) {
            const auto& m = j.at("mcmc");
            if (m.contains("chains")) c.mcmc.chains = m.at("chains").get<int>();
            if (m.contains("iterations")) c.mcmc.iterations = m.at("iterations").get<long>();
            if (m.contains("seed")) c.seed = m.at("seed").get<std::uint64_t>();
            if (m.contains("warmup_fraction")) c.mcmc.warmup_fraction = m.at("warmup_fraction").get<double>();
            if (m.contains("rhat_threshold")) c.mcmc.rhat_threshold = m.at("rhat_threshold").get<double>();
            if (m.contains("parallel")) c.mcmc.parallel = m.at("parallel").get<bool>();
        }
        if (j.contains("gp")) {
            const auto& g = j.at("gp");
            if (g.contains("n_c")) c.gp.n_c = g.at("n_c").get<double>();
            if (g.contains("zeta")) c.gp.zeta = g.at("zeta").get<double>();
            if (g.contains("coarse_stride")) c.gp.coarse_stride = g.at("coarse_stride").get<Eigen::Index>();
            if (g.contains("windows")) c.gp.windows = g.at("windows").get<std::vector<Eigen::Index>>();
            if (g.contains("restarts")) c.gp.restarts = g.at("restarts").get<int>();
            if (g.contains("wiener_window")) c.gp.wiener_window = g.at("wiener_window").get<Eigen::Index>();
            if (g.contains("max_iters")) c.gp.optimizer.max_iters = g.at("max_iters").get<int>();
        }
        if (j.contains("block")) {
            const auto& b = j.at("block");
            if (b.contains("iterations")) c.block.iterations = b.at("iterations").get<long>();
            if (b.contains("chains")) c.block.chains = b.at("chains").get<int>();
            if (b.contains("kernel")) c.block.kernel = parse_kernel_kind(b.at("kernel").get<std::string>());
            if (b.contains("seed")) c.block_seed = b.at("seed").get<std::uint64_t>();
            if (b.contains("profile_thin")) c.block.profile_thin = b.at("profile_thin").get<long>();
            if (b.contains("prior")) {
                const auto& p = b.at("prior");
                if (p.contains("s")) {
                    c.block.s_prior.a = p.at("s").at("a").get<double>();
                    c.block.s_prior.b = p.at("s").at("b").get<double>();
                }
                if (p.contains("phi")) {
                    if (p.at("phi").contains("a")) c.block.phi_shape = p.at("phi").at("a").get<double>();
                    if (p.at("phi").contains("b")) c.block.phi_rate = p.at("phi").at("b").get<double>();
                }
            }
            if (b.contains("proposal")) {
                const auto& p = b.at("proposal");
                if (p.contains("psi_scale")) c.block.moves.psi_scale = p.at("psi_scale").get<double>();
                if (p.contains("split_probability"))
                    c.block.moves.split_probability = p.at("split_probability").get<double>();
                if (p.contains("psi_mh_scale")) c.block.psi_mh_scale = p.at("psi_mh_scale").get<double>();
                if (p.contains("s_scale")) c.block.s_scale = p.at("s_scale").get<double>();
                if (p.contains("phi_scale")) c.block.phi_scale = p.at("phi_scale").get<double>();
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
}

ExperimentConfig config_from_json(const json& j)
{
    ExperimentConfig c;
    apply_json(c, j);
    return c;
}

json to_json(const ExperimentConfig& c)
{
    json j;
    j["scenario"] = to_string(c.scenario);
    j["replicates"] = c.replicates;
    j["seed"] = c.seed;
    j["models"] = c.models;
    j["n_points"] = c.n_points > 0 ? c.n_points : default_points(c.scenario);
    j["out"] = c.out_dir.string();
    j["protocol"] = c.protocol.string();
    j["workers"] = c.workers;
    j["mcmc"] = {{"chains", c.mcmc.chains},
                 {"iterations", c.mcmc.iterations},
                 {"seed", c.seed},
                 {"warmup_fraction", c.mcmc.warmup_fraction},
                 {"rhat_threshold", c.mcmc.rhat_threshold}};
    j["gp"] = {{"n_c", c.gp.n_c},
               {"zeta", c.gp.zeta},
               {"coarse_stride", c.gp.coarse_stride},
               {"windows", c.gp.windows},
               {"restarts", c.gp.restarts},
               {"wiener_window", c.gp.wiener_window},
               {"max_iters", c.gp.optimizer.max_iters}};
    json block = {{"iterations", c.block.iterations},
                  {"chains", c.block.chains},
                  {"kernel", to_string(c.block.kernel)},
                  {"profile_thin", c.block.profile_thin},
                  {"prior",
                   {{"s", {{"a", c.block.s_prior.a}, {"b", c.block.s_prior.b}}},
                    {"phi", {{"a", c.block.phi_shape}, {"b", c.block.phi_rate}}}}},
                  {"proposal",
                   {{"psi_scale", c.block.moves.psi_scale},
                    {"split_probability", c.block.moves.split_probability},
                    {"psi_mh_scale", c.block.psi_mh_scale},
                    {"s_scale", c.block.s_scale},
                    {"phi_scale", c.block.phi_scale}}}};
    if (c.block_seed) {
        block["seed"] = *c.block_seed;
    }
    j["block"] = block;
    return j;
}

std::string config_hash(const ExperimentConfig& config)
{
    json j = to_json(config);
    j.erase("out");
    j.erase("workers");
    const std::string text = j.dump();
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
        throw Error("config_hash: SHA-1 failed");
    }
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) {
        out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    }
    return out.str();
}

VoltageProtocol herg_builtin_protocol()
{
    return VoltageProtocol({
        {0.00, 0.25, -0.080, -0.080}, {0.25, 0.30, -0.120, -0.120}, {0.30, 0.50, -0.080, -0.080},
        {0.50, 1.50, 0.040, 0.040},   {1.50, 2.00, -0.120, -0.120}, {2.00, 2.30, -0.080, -0.080},
        {2.30, 3.30, 0.000, 0.000},   {3.30, 3.80, -0.060, -0.060}, {3.80, 4.10, -0.080, -0.080},
        {4.10, 5.10, 0.020, 0.020},   {5.10, 5.60, -0.100, -0.100}, {5.60, 5.90, -0.080, -0.080},
        {5.90, 6.90, -0.020, -0.020}, {6.90, 7.40, -0.040, -0.040}, {7.40, 8.40, -0.120, 0.040},
        {8.40, 8.70, -0.080, -0.080},
    });
}

ScenarioData make_scenario_data(const ExperimentConfig& config, int replicate)
{
    const auto n = config.n_points > 0 ? config.n_points : default_points(config.scenario);
    const std::uint64_t stream = 1000000 + static_cast<std::uint64_t>(replicate);
    Rng rng = make_rng(config.seed, stream);
    VectorXd times;
    std::shared_ptr<const ForwardModel> model;
    VectorXd truth;
    NoiseSpec noise;
    if (config.scenario == Scenario::HergSynthetic) {
        auto protocol = config.protocol.empty() ? herg_builtin_protocol() : VoltageProtocol::load_csv(config.protocol);
        times = linspace(protocol.start(), protocol.end(), n);
        model = std::make_shared<HergModel>(std::move(protocol));
        truth = herg_reference_params().to_vector();
        noise = IidSpec{kHergNoiseSigma};
    } else {
        const LogisticTruth lt;
        times = linspace(0.0, lt.t_end, n);
        model = std::make_shared<LogisticModel>(lt.y0);
        truth.resize(2);
        truth << lt.r, lt.K;
        switch (config.scenario) {
        case Scenario::Ar1Laplacian:
            noise = ar1_regime();
            break;
        case Scenario::MultiplicativeGp:
            noise = multiplicative_regime();
            break;
        default:
            noise = five_regime(n / 5);
            break;
        }
    }
    const VectorXd f = model->simulate(truth, times);
    VectorXd y = generate(f, noise, rng);
    return ScenarioData{Dataset(times, std::move(y)), model, truth, f, noise, stream};
}

// ---------------------------------------------------------------------------

namespace {

std::vector<Eigen::Index> thin_rows(Eigen::Index rows, Eigen::Index keep)
{
    std::vector<Eigen::Index> out;
    const auto k = std::min(rows, keep);
    for (Eigen::Index i = 0; i < k; ++i) {
        out.push_back(i * rows / k);
    }
    return out;
}

VectorXd column_quantile(const MatrixXd& m, Eigen::Index col, double q)
{
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        if (std::isfinite(m(r, col))) {
            v.push_back(m(r, col));
        }
    }
    VectorXd out(1);
    out[0] = v.empty() ? std::numeric_limits<double>::quiet_NaN() : quantile(v, q);
    return out;
}

// Pointwise 5/50/95% bands of row-wise draws (rows = draws, cols = time points).
void bands(const MatrixXd& draws, VectorXd& lo, VectorXd& mid, VectorXd& hi)
{
    const auto n = draws.cols();
    lo.resize(n);
    mid.resize(n);
    hi.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        lo[i] = column_quantile(draws, i, 0.05)[0];
        mid[i] = column_quantile(draws, i, 0.5)[0];
        hi[i] = column_quantile(draws, i, 0.95)[0];
    }
}

VectorXd median_trajectory(const ForwardModel& model, const MatrixXd& pooled, std::size_t n_model,
                           const VectorXd& times)
{
    const auto rows = thin_rows(pooled.rows(), 200);
    MatrixXd traj(static_cast<Eigen::Index>(rows.size()), times.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const VectorXd theta = pooled.row(rows[k]).head(static_cast<Eigen::Index>(n_model)).transpose();
        traj.row(static_cast<Eigen::Index>(k)) = model.simulate(theta, times).transpose();
    }
    VectorXd lo, mid, hi;
    bands(traj, lo, mid, hi);
    return mid;
}

std::shared_ptr<const NoiseModel> correct_noise(const ExperimentConfig& config, const ScenarioData& s)
{
    switch (config.scenario) {
    case Scenario::Ar1Laplacian:
        return std::make_shared<Ar1Noise>();
    case Scenario::MultiplicativeGp:
        return std::make_shared<MultiplicativeNoise>();
    case Scenario::BlockedBlock:
    case Scenario::BlockedGp: {
        std::vector<Eigen::Index> sizes;
        for (const auto& seg : std::get<BlockedSpec>(s.noise).segments) {
            sizes.push_back(seg.length);
        }
        return std::make_shared<FixedBlockNoise>(sizes, config.block.kernel, config.block.log_length_prior,
                                                 config.block.log_sigma_prior);
    }
    case Scenario::HergSynthetic:
        return std::make_shared<IidNoise>();
    }
    return std::make_shared<IidNoise>();
}

FitOutput fit_parametric(const ExperimentConfig& config, const ScenarioData& s, const std::string& label,
                         std::shared_ptr<const NoiseModel> noise, std::uint64_t seed)
{
    const auto& data = s.data;
    LogPosterior post(data, s.model, noise);
    const VectorXd iid = fit_iid_map(data, s.model);
    const auto p = static_cast<Eigen::Index>(s.model->n_params());
    const VectorXd theta = iid.head(p);
    const VectorXd mean = s.model->simulate(theta, data.times());
    VectorXd start(post.dimension());
    start << theta, noise->initial_guess(data.values() - mean, mean, data.times());

    SamplerOptions so = config.mcmc;
    so.seed = seed;
    const auto res = fit_posterior(post, start, so);

    FitOutput out;
    out.label = label;
    out.chains = res.chains;
    out.n_model = static_cast<std::size_t>(p);
    out.rhat = res.rhat;
    out.acceptance = res.acceptance;
    out.converged = res.converged;
    out.map = res.map_theta;
    out.map_log_posterior = res.map_log_posterior;

    const MatrixXd pooled = res.chains.pooled();
    const auto rows = thin_rows(pooled.rows(), 200);
    const auto n = data.size();
    MatrixXd sd(static_cast<Eigen::Index>(rows.size()), n);
    MatrixXd lag(static_cast<Eigen::Index>(rows.size()), n);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const VectorXd draw = pooled.row(rows[k]).transpose();
        const VectorXd f = s.model->simulate(draw.head(p), data.times());
        const auto prof = noise->profile(f, data.times(), draw.tail(draw.size() - p));
        sd.row(static_cast<Eigen::Index>(k)) = prof.sd.transpose();
        lag.row(static_cast<Eigen::Index>(k)) = prof.lag1.transpose();
    }
    bands(sd, out.profile.sd_lo, out.profile.sd_mid, out.profile.sd_hi);
    bands(lag, out.profile.lag_lo, out.profile.lag_mid, out.profile.lag_hi);
    out.trajectory_median = median_trajectory(*s.model, pooled, out.n_model, data.times());
    return out;
}

FitOutput fit_gp(const ExperimentConfig& config, const ScenarioData& s, std::uint64_t seed)
{
    GpOptions go = config.gp;
    go.sampler = config.mcmc;
    go.sampler.seed = seed;
    const auto res = run_algorithm1(s.data, s.model, go);

    FitOutput out;
    out.label = "gp";
    out.chains = res.posterior.chains;
    out.n_model = s.model->n_params();
    out.rhat = res.posterior.rhat;
    out.acceptance = res.posterior.acceptance;
    out.converged = res.posterior.converged;
    out.map = res.map.theta;
    out.map_log_posterior = res.map.log_posterior;
    const auto prof = covariance_profile(*res.covariance);
    out.profile = {prof.sd, prof.sd, prof.sd, prof.lag1, prof.lag1, prof.lag1};
    out.trajectory_median = median_trajectory(*s.model, res.posterior.chains.pooled(), out.n_model, s.data.times());
    out.extra = {{"grid_times", std::vector<double>(res.map.state.grid_times.begin(), res.map.state.grid_times.end())},
                 {"log_length", std::vector<double>(res.map.state.log_length.begin(), res.map.state.log_length.end())},
                 {"log_sigma", std::vector<double>(res.map.state.log_sigma.begin(), res.map.state.log_sigma.end())},
                 {"restart_scores", res.map.restart_scores},
                 {"restart_messages", res.map.restart_messages},
                 {"best_restart", res.map.best_restart},
                 {"map_converged", res.map.converged},
                 {"conditional_mode", std::vector<double>(res.posterior.map_theta.begin(), res.posterior.map_theta.end())}};
    return out;
}

FitOutput fit_block(const ExperimentConfig& config, const ScenarioData& s, std::uint64_t seed)
{
    BlockOptions bo = config.block;
    bo.seed = config.block_seed.value_or(seed);
    bo.warmup_fraction = config.mcmc.warmup_fraction;
    bo.rhat_threshold = config.mcmc.rhat_threshold;
    bo.parallel = config.mcmc.parallel;
    const auto res = run_block_sampler(s.data, s.model, bo);

    FitOutput out;
    out.label = "block";
    out.chains = res.chains;
    out.n_model = res.n_model;
    out.rhat = res.rhat;
    out.converged = res.converged;
    const MatrixXd pooled = res.chains.pooled();
    out.map.resize(static_cast<Eigen::Index>(res.n_model));
    for (Eigen::Index k = 0; k < out.map.size(); ++k) {
        out.map[k] = column_quantile(pooled, k, 0.5)[0];
    }
    out.map_log_posterior = std::numeric_limits<double>::quiet_NaN();
    out.extra = {{"map_kind", "posterior_median"},
                 {"theta_start", std::vector<double>(res.theta_start.begin(), res.theta_start.end())}};

    std::vector<Partition> kept;
    Eigen::Index rows = 0;
    for (const auto& c : res.raw) {
        out.acceptance.push_back(c.theta_acceptance);
        out.partitions.push_back(c.partitions);
        kept.insert(kept.end(), c.kept_partitions.begin(), c.kept_partitions.end());
        rows += c.profile_sd.rows();
    }
    json moves = json::array();
    for (const auto& c : res.raw) {
        moves.push_back({{"split", c.split_acceptance}, {"merge", c.merge_acceptance}, {"shuffle", c.shuffle_acceptance}});
    }
    out.extra["move_acceptance"] = moves;

    const auto n = s.data.size();
    MatrixXd sd(rows, n);
    MatrixXd lag(rows, n);
    Eigen::Index at = 0;
    for (const auto& c : res.raw) {
        sd.middleRows(at, c.profile_sd.rows()) = c.profile_sd;
        lag.middleRows(at, c.profile_lag1.rows()) = c.profile_lag1;
        at += c.profile_sd.rows();
    }
    if (rows > 0) {
        bands(sd, out.profile.sd_lo, out.profile.sd_mid, out.profile.sd_hi);
        bands(lag, out.profile.lag_lo, out.profile.lag_mid, out.profile.lag_hi);
    }
    if (!kept.empty()) {
        out.boundaries = median_boundaries(kept);
        out.boundary_probability = VectorXd::Zero(n);
        for (const auto& p : kept) {
            for (auto b : p.boundaries()) {
                out.boundary_probability[b] += 1.0;
            }
        }
        out.boundary_probability /= static_cast<double>(kept.size());
    }
    out.trajectory_median = median_trajectory(*s.model, pooled, out.n_model, s.data.times());
    return out;
}

} // namespace

FitOutput fit_model(const ExperimentConfig& config, const ScenarioData& scenario, const std::string& label,
                    std::uint64_t seed)
{
    if (label == "iid") {
        return fit_parametric(config, scenario, label, std::make_shared<IidNoise>(), seed);
    }
    if (label == "laplacian") {
        return fit_parametric(config, scenario, label, std::make_shared<KernelNoise>(KernelKind::Laplacian), seed);
    }
    if (label == "correct") {
        return fit_parametric(config, scenario, label, correct_noise(config, scenario), seed);
    }
    if (label == "gp") {
        return fit_gp(config, scenario, seed);
    }
    if (label == "block") {
        return fit_block(config, scenario, seed);
    }
    throw ConfigError("unknown noise model '" + label + "'");
}

// ---------------------------------------------------------------------------

namespace {

json number(double x)
{
    return std::isfinite(x) ? json(x) : json(nullptr);
}

void write_json(const fs::path& path, const json& j)
{
    std::ofstream out(path);
    if (!out) {
        throw InputError("cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
}

std::string fmt(double x)
{
    return io::format_double(x);
}

} // namespace

void write_job(const fs::path& dir, const ExperimentConfig& config, const ScenarioData& scenario, const FitOutput& fit,
               int replicate, std::uint64_t seed)
{
    fs::create_directories(dir);
    const auto& names = fit.chains.names();
    for (std::size_t c = 0; c < fit.chains.n_chains(); ++c) {
        io::CsvTable t;
        t.header = {"iteration", "warmup"};
        t.header.insert(t.header.end(), names.begin(), names.end());
        const bool with_z = c < fit.partitions.size();
        if (with_z) {
            t.header.push_back("z");
        }
        const MatrixXd& draws = fit.chains.all_draws(c);
        const auto warm = fit.chains.warmup(c);
        for (Eigen::Index i = 0; i < draws.rows(); ++i) {
            std::vector<std::string> row{std::to_string(i), i < warm ? "1" : "0"};
            for (Eigen::Index k = 0; k < draws.cols(); ++k) {
                row.push_back(fmt(draws(i, k)));
            }
            if (with_z) {
                row.push_back(fit.partitions[c][static_cast<std::size_t>(i)]);
            }
            t.rows.push_back(std::move(row));
        }
        io::write_csv(dir / ("chains_" + std::to_string(c + 1) + ".csv"), t);
    }

    json map_params = json::object();
    for (Eigen::Index k = 0; k < fit.map.size(); ++k) {
        map_params[names[static_cast<std::size_t>(k)]] = number(fit.map[k]);
    }
    json map = {{"model", fit.label},
                {"scenario", to_string(config.scenario)},
                {"replicate", replicate},
                {"parameters", map_params},
                {"log_posterior", number(fit.map_log_posterior)}};
    if (!fit.extra.is_null()) {
        map["extra"] = fit.extra;
    }
    write_json(dir / "map.json", map);

    const MatrixXd pooled = fit.chains.pooled();
    json params = json::array();
    for (std::size_t k = 0; k < names.size(); ++k) {
        const auto col = static_cast<Eigen::Index>(k);
        const double truth = k < fit.n_model && col < scenario.truth.size() ? scenario.truth[col]
                                                                            : std::numeric_limits<double>::quiet_NaN();
        params.push_back({{"name", names[k]},
                          {"q2.5", number(column_quantile(pooled, col, 0.025)[0])},
                          {"q25", number(column_quantile(pooled, col, 0.25)[0])},
                          {"q50", number(column_quantile(pooled, col, 0.5)[0])},
                          {"q75", number(column_quantile(pooled, col, 0.75)[0])},
                          {"q97.5", number(column_quantile(pooled, col, 0.975)[0])},
                          {"truth", number(truth)},
                          {"model_parameter", k < fit.n_model}});
    }
    json rhat = json::object();
    for (std::size_t k = 0; k < fit.rhat.size() && k < names.size(); ++k) {
        rhat[names[k]] = number(fit.rhat[k]);
    }
    json summary = {{"scenario", to_string(config.scenario)},
                    {"model", fit.label},
                    {"replicate", replicate},
                    {"seed", seed},
                    {"data_seed", config.seed},
                    {"data_stream", scenario.data_stream},
                    {"config_hash", config_hash(config)},
                    {"noise_truth", describe(scenario.noise)},
                    {"n_points", scenario.data.size()},
                    {"chains", fit.chains.n_chains()},
                    {"iterations", fit.chains.n_chains() ? fit.chains.iterations(0) : 0},
                    {"warmup_fraction", fit.chains.warmup_fraction()},
                    {"rhat_threshold", config.mcmc.rhat_threshold},
                    {"converged", fit.converged},
                    {"flagged", !fit.converged},
                    {"rhat", rhat},
                    {"acceptance", fit.acceptance},
                    {"parameters", params}};
    if (fit.label == "block") {
        summary["boundaries"] = fit.boundaries;
    }
    write_json(dir / "summary.json", summary);

    const auto n = scenario.data.size();
    const auto truth = true_profile(scenario.trajectory, scenario.noise);
    if (fit.profile.sd_mid.size() == n) {
        io::CsvTable t;
        t.header = {"t", "sd_true", "sd_q05", "sd_q50", "sd_q95", "lag1_true", "lag1_q05", "lag1_q50", "lag1_q95"};
        for (Eigen::Index i = 0; i < n; ++i) {
            t.rows.push_back({fmt(scenario.data.times()[i]), fmt(truth.sd[i]), fmt(fit.profile.sd_lo[i]),
                              fmt(fit.profile.sd_mid[i]), fmt(fit.profile.sd_hi[i]), fmt(truth.lag1[i]),
                              fmt(fit.profile.lag_lo[i]), fmt(fit.profile.lag_mid[i]), fmt(fit.profile.lag_hi[i])});
        }
        io::write_csv(dir / "profile.csv", t);
    }
    {
        io::CsvTable t;
        t.header = {"t", "y", "f_true", "f_median"};
        for (Eigen::Index i = 0; i < n; ++i) {
            t.rows.push_back({fmt(scenario.data.times()[i]), fmt(scenario.data.values()[i]),
                              fmt(scenario.trajectory[i]),
                              fmt(fit.trajectory_median.size() == n ? fit.trajectory_median[i]
                                                                    : std::numeric_limits<double>::quiet_NaN())});
        }
        io::write_csv(dir / "fit.csv", t);
    }
    if (fit.boundary_probability.size() == n) {
        io::CsvTable t;
        t.header = {"index", "t", "probability"};
        for (Eigen::Index i = 1; i < n; ++i) {
            t.rows.push_back({std::to_string(i), fmt(scenario.data.times()[i]), fmt(fit.boundary_probability[i])});
        }
        io::write_csv(dir / "boundaries.csv", t);
    }
}

ExperimentOutcome run_experiment(const ExperimentConfig& config)
{
    config.validate();
    const auto scenario_dir = config.out_dir / to_string(config.scenario);
    fs::create_directories(scenario_dir);

    std::vector<ScenarioData> data;
    for (int r = 0; r < config.replicates; ++r) {
        data.push_back(make_scenario_data(config, r));
    }
    ExperimentOutcome outcome;
    for (int r = 0; r < config.replicates; ++r) {
        for (const auto& m : config.models) {
            JobStatus job;
            job.model = m;
            job.replicate = r;
            job.dir = scenario_dir / m / std::to_string(r);
            outcome.jobs.push_back(job);
        }
    }
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&]() {
        for (;;) {
            const auto k = next.fetch_add(1);
            if (k >= outcome.jobs.size()) {
                return;
            }
            auto& job = outcome.jobs[k];
            const std::uint64_t seed = config.seed * 1000 + static_cast<std::uint64_t>(job.replicate);
            try {
                const auto fit = fit_model(config, data[static_cast<std::size_t>(job.replicate)], job.model, seed);
                write_job(job.dir, config, data[static_cast<std::size_t>(job.replicate)], fit, job.replicate, seed);
                job.converged = fit.converged;
            } catch (const std::exception& e) {
                job.failed = true;
                job.error = e.what();
                fs::create_directories(job.dir);
                write_json(job.dir / "error.json", {{"model", job.model}, {"replicate", job.replicate}, {"error", job.error}});
            }
            std::lock_guard<std::mutex> lock(log_mutex);
            std::clog << to_string(config.scenario) << " " << job.model << " replicate " << job.replicate << ": "
                      << (job.failed ? "failed (" + job.error + ")" : job.converged ? "converged" : "not converged")
                      << '\n';
        }
    };
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const auto n_workers = std::min<std::size_t>(config.workers > 0 ? static_cast<std::size_t>(config.workers) : hw,
                                                 outcome.jobs.size());
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < n_workers; ++i) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }

    bool any_failed = false;
    bool any_flagged = false;
    json jobs = json::array();
    for (const auto& job : outcome.jobs) {
        any_failed = any_failed || job.failed;
        any_flagged = any_flagged || !job.converged;
        jobs.push_back({{"model", job.model},
                        {"replicate", job.replicate},
                        {"path", fs::relative(job.dir, config.out_dir).generic_string()},
                        {"status", job.failed ? "failed" : job.converged ? "converged" : "flagged"}});
    }
    outcome.exit_code = any_failed ? 4 : any_flagged ? 3 : 0;

    const auto index_path = config.out_dir / "index.json";
    json index = json::object();
    if (fs::exists(index_path)) {
        try {
            std::ifstream in(index_path);
            index = json::parse(in);
        } catch (const json::exception&) {
            index = json::object();
        }
    }
    index["scenarios"][to_string(config.scenario)] = {{"config", to_json(config)},
                                                      {"config_hash", config_hash(config)},
                                                      {"exit_code", outcome.exit_code},
                                                      {"jobs", jobs}};
    write_json(index_path, index);
    return outcome;
}

} // namespace flexnoise
