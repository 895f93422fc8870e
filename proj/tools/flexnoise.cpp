#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "flexnoise/bench.hpp"
#include "flexnoise/error.hpp"
#include "flexnoise/experiment.hpp"
#include "flexnoise/export.hpp"
#include "flexnoise/synth.hpp"

using namespace flexnoise;

namespace {

struct SynthArgs {
    std::string model = "logistic";
    std::string noise = "iid";
    double rho = 0.8;
    double sigma = 3.0;
    double eta = 2.0;
    Eigen::Index n = 250;
    std::uint64_t seed = 1;
    std::string out = "data.csv";
    std::string protocol;
    double r = 0.08;
    double k = 50.0;
    double y0 = 2.0;
    double t_end = 100.0;
};

int run_synth(const SynthArgs& a)
{
    NoiseSpec spec;
    if (a.noise == "iid") {
        spec = IidSpec{a.sigma};
    } else if (a.noise == "ar1") {
        spec = Ar1Spec{a.rho, a.sigma};
    } else if (a.noise == "multiplicative") {
        spec = MultiplicativeSpec{a.eta, a.sigma};
    } else if (a.noise == "blocked") {
        if (a.n % 5 != 0) {
            throw ConfigError("blocked noise needs --n divisible by 5");
        }
        spec = five_regime(a.n / 5);
    } else {
        throw ConfigError("unknown noise '" + a.noise + "'");
    }
    VectorXd times;
    VectorXd f;
    if (a.model == "logistic") {
        times = linspace(0.0, a.t_end, a.n);
        f = logistic_solve({a.r, a.k, a.y0}, times);
    } else if (a.model == "herg") {
        const auto protocol = a.protocol.empty() ? herg_builtin_protocol() : VoltageProtocol::load_csv(a.protocol);
        times = linspace(protocol.start(), protocol.end(), a.n);
        f = herg_simulate(herg_reference_params(), protocol, HergModel::kDefaultReversal, times);
    } else {
        throw ConfigError("unknown model '" + a.model + "'");
    }
    Rng rng = make_rng(a.seed, 0);
    Dataset(times, generate(f, spec, rng)).save_csv(a.out);
    std::cout << "wrote " << a.out << " (" << a.n << " points, " << describe(spec) << ")\n";
    return 0;
}

std::vector<Eigen::Index> parse_sizes(const std::string& text)
{
    std::vector<Eigen::Index> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            out.push_back(std::stol(item));
        }
    }
    return out;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"flexnoise: Bayesian ODE inference with flexible noise models"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "Synthetic data");
    synth->require_subcommand(1);
    SynthArgs sa;
    auto* gen = synth->add_subcommand("generate", "Generate a noisy trajectory as t,y CSV");
    gen->add_option("--model", sa.model, "logistic or herg")->capture_default_str();
    gen->add_option("--noise", sa.noise, "iid, ar1, multiplicative or blocked")->capture_default_str();
    gen->add_option("--rho", sa.rho, "AR(1) coefficient")->capture_default_str();
    gen->add_option("--sigma", sa.sigma, "noise scale")->capture_default_str();
    gen->add_option("--eta", sa.eta, "multiplicative exponent")->capture_default_str();
    gen->add_option("--n", sa.n, "number of points")->capture_default_str();
    gen->add_option("--seed", sa.seed, "random seed")->capture_default_str();
    gen->add_option("--out", sa.out, "output CSV")->capture_default_str();
    gen->add_option("--protocol", sa.protocol, "voltage protocol CSV (herg)");
    gen->add_option("--r", sa.r, "logistic growth rate")->capture_default_str();
    gen->add_option("--K", sa.k, "logistic carrying capacity")->capture_default_str();
    gen->add_option("--y0", sa.y0, "logistic initial value")->capture_default_str();
    gen->add_option("--t-end", sa.t_end, "logistic end time")->capture_default_str();
    std::string protocol_out = "herg_protocol.csv";
    auto* proto = synth->add_subcommand("protocol", "Write the built-in hERG voltage protocol");
    proto->add_option("--out", protocol_out, "output CSV")->capture_default_str();

    auto* fit = app.add_subcommand("fit", "Run a synthetic experiment");
    std::string config_file;
    std::string scenario;
    std::string models;
    std::string out_dir;
    std::string protocol;
    int replicates = 0;
    std::uint64_t seed = 0;
    Eigen::Index n_points = 0;
    long iterations = 0;
    long block_iterations = 0;
    int chains = 0;
    int workers = -1;
    fit->add_option("--config", config_file, "JSON config file");
    fit->add_option("--scenario", scenario,
                    "ar1_laplacian, multiplicative_gp, blocked_block, blocked_gp or herg_synthetic");
    fit->add_option("--models", models, "comma-separated subset of correct,iid,laplacian,gp,block");
    fit->add_option("--replicates", replicates, "replicate count");
    fit->add_option("--seed", seed, "base seed");
    fit->add_option("--out", out_dir, "output directory");
    fit->add_option("--n", n_points, "points per series");
    fit->add_option("--iterations", iterations, "MCMC iterations per chain");
    fit->add_option("--block-iterations", block_iterations, "block sampler iterations per chain");
    fit->add_option("--chains", chains, "chains per fit");
    fit->add_option("--workers", workers, "concurrent jobs (0 = all cores)");
    fit->add_option("--protocol", protocol, "voltage protocol CSV (herg_synthetic)");

    auto* exp = app.add_subcommand("export", "Write plot-ready CSVs for a figure");
    std::string figure;
    std::string results = "out";
    exp->add_option("--figure", figure, "fig2, fig3, figS1 or figS2")->required();
    exp->add_option("--out", results, "results directory")->capture_default_str();

    auto* bench = app.add_subcommand("bench", "Time sparse vs dense likelihoods and coarse vs full GP grids");
    std::string sizes = "150,500,2000";
    std::string kernel = "laplacian";
    int trials = 5;
    std::string bench_csv;
    bench->add_option("--sizes", sizes, "comma-separated series lengths")->capture_default_str();
    bench->add_option("--kernel", kernel, "stationary kernel")->capture_default_str();
    bench->add_option("--trials", trials, "timing trials")->capture_default_str();
    bench->add_option("--csv", bench_csv, "also write the report as CSV");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            return run_synth(sa);
        }
        if (proto->parsed()) {
            herg_builtin_protocol().save_csv(protocol_out);
            std::cout << "wrote " << protocol_out << '\n';
            return 0;
        }
        if (fit->parsed()) {
            ExperimentConfig config;
            if (!config_file.empty()) {
                std::ifstream in(config_file);
                if (!in) {
                    throw ConfigError("cannot read config " + config_file);
                }
                apply_json(config, nlohmann::json::parse(in));
            }
            nlohmann::json overrides = nlohmann::json::object();
            if (!scenario.empty()) overrides["scenario"] = scenario;
            if (!models.empty()) overrides["models"] = models;
            if (!out_dir.empty()) overrides["out"] = out_dir;
            if (!protocol.empty()) overrides["protocol"] = protocol;
            if (replicates > 0) overrides["replicates"] = replicates;
            if (fit->count("--seed")) overrides["seed"] = seed;
            if (n_points > 0) overrides["n_points"] = n_points;
            if (workers >= 0) overrides["workers"] = workers;
            if (iterations > 0) overrides["mcmc"]["iterations"] = iterations;
            if (chains > 0) {
                overrides["mcmc"]["chains"] = chains;
                overrides["block"]["chains"] = chains;
            }
            if (block_iterations > 0) overrides["block"]["iterations"] = block_iterations;
            apply_json(config, overrides);
            config.validate();
            std::cout << "scenario " << to_string(config.scenario) << ", config hash " << config_hash(config) << '\n';
            const auto outcome = run_experiment(config);
            for (const auto& job : outcome.jobs) {
                std::cout << job.model << " replicate " << job.replicate << ": "
                          << (job.failed ? "failed: " + job.error : job.converged ? "converged" : "NOT converged")
                          << '\n';
            }
            std::cout << "exit code " << outcome.exit_code << '\n';
            return outcome.exit_code;
        }
        if (exp->parsed()) {
            for (const auto& path : export_plotdata(results, figure)) {
                std::cout << path.string() << '\n';
            }
            return 0;
        }
        if (bench->parsed()) {
            BenchOptions options;
            options.kernel = parse_kernel_kind(kernel);
            options.trials = trials;
            const auto rows = benchmark_sparse(parse_sizes(sizes), options);
            print_bench(std::cout, rows);
            if (!bench_csv.empty()) {
                write_bench_csv(bench_csv, rows);
            }
            return 0;
        }
    } catch (const flexnoise::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
