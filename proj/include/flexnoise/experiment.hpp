#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "flexnoise/blocknoise.hpp"
#include "flexnoise/fitting.hpp"
#include "flexnoise/gpnoise.hpp"
#include "flexnoise/models.hpp"
#include "flexnoise/synth.hpp"

namespace flexnoise {

enum class Scenario { Ar1Laplacian, MultiplicativeGp, BlockedBlock, BlockedGp, HergSynthetic };

Scenario parse_scenario(const std::string& name);
std::string to_string(Scenario scenario);

/// Noise-model labels accepted by the experiment runner.
const std::vector<std::string>& known_models();

struct ExperimentConfig {
    Scenario scenario = Scenario::Ar1Laplacian;
    int replicates = 1;
    std::uint64_t seed = 1;
    std::vector<std::string> models;
    /// 0 picks the scenario default.
    Eigen::Index n_points = 0;
    std::filesystem::path out_dir = "out";
    /// Protocol CSV for the hERG scenario; empty uses the built-in protocol.
    std::filesystem::path protocol;
    /// Concurrent (replicate, model) jobs; 0 = hardware concurrency.
    int workers = 0;
    SamplerOptions mcmc;
    GpOptions gp;
    BlockOptions block;
    /// Overrides the job seed for the block sampler.
    std::optional<std::uint64_t> block_seed;

    void validate() const;
};

/// Applies the keys present in `j` on top of `config`.
void apply_json(ExperimentConfig& config, const nlohmann::json& j);
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& config);
/// SHA-1 of the canonical JSON form, output directory excluded.
std::string config_hash(const ExperimentConfig& config);

Eigen::Index default_points(Scenario scenario);
VoltageProtocol herg_builtin_protocol();

struct ScenarioData {
    Dataset data;
    std::shared_ptr<const ForwardModel> model;
    VectorXd truth;
    VectorXd trajectory;
    NoiseSpec noise;
    /// RNG stream of the data generator (base seed = config seed).
    std::uint64_t data_stream = 0;
};

ScenarioData make_scenario_data(const ExperimentConfig& config, int replicate);

/// Pointwise posterior bands of the noise process.
struct ProfileBands {
    VectorXd sd_lo, sd_mid, sd_hi;
    VectorXd lag_lo, lag_mid, lag_hi;
};

struct FitOutput {
    std::string label;
    /// Constrained draws; model parameters first.
    ChainStore chains;
    std::size_t n_model = 0;
    std::vector<double> rhat;
    std::vector<double> acceptance;
    bool converged = false;
    VectorXd map;
    double map_log_posterior = 0.0;
    ProfileBands profile;
    VectorXd trajectory_median;
    /// Block model only.
    std::vector<std::vector<std::string>> partitions;
    std::vector<Eigen::Index> boundaries;
    VectorXd boundary_probability;
    nlohmann::json extra;
};

/// Runs one noise model on one data set.
FitOutput fit_model(const ExperimentConfig& config, const ScenarioData& scenario, const std::string& label,
                    std::uint64_t seed);

struct JobStatus {
    std::string model;
    int replicate = 0;
    bool failed = false;
    bool converged = false;
    std::string error;
    std::filesystem::path dir;
};

struct ExperimentOutcome {
    std::vector<JobStatus> jobs;
    /// 0 clean, 3 converged-with-warnings, 4 any failed replicate.
    int exit_code = 0;
};

ExperimentOutcome run_experiment(const ExperimentConfig& config);

/// Writes chains, map.json, summary.json, profile.csv and fit.csv for one job.
void write_job(const std::filesystem::path& dir, const ExperimentConfig& config, const ScenarioData& scenario,
               const FitOutput& fit, int replicate, std::uint64_t seed);

} // namespace flexnoise
