#include "flexnoise/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>

#include "flexnoise/error.hpp"
#include "flexnoise/gpnoise.hpp"
#include "flexnoise/io.hpp"
#include "flexnoise/likelihood.hpp"
#include "flexnoise/mcmc.hpp"
#include "flexnoise/models.hpp"
#include "flexnoise/sparse_covariance.hpp"

namespace flexnoise {

namespace {

volatile double g_sink = 0.0;

// Median over trials of the per-call time, each trial repeating until min_seconds elapse.
template <class F>
double time_call(F&& f, int trials, double min_seconds)
{
    using clock = std::chrono::steady_clock;
    std::vector<double> samples;
    for (int t = 0; t < trials; ++t) {
        long calls = 0;
        const auto start = clock::now();
        double elapsed = 0.0;
        do {
            g_sink = g_sink + f();
            ++calls;
            elapsed = std::chrono::duration<double>(clock::now() - start).count();
        } while (elapsed < min_seconds);
        samples.push_back(elapsed / static_cast<double>(calls));
    }
    return quantile(samples, 0.5);
}

} // namespace

std::vector<BenchRow> benchmark_sparse(const std::vector<Eigen::Index>& sizes, const BenchOptions& options)
{
    if (sizes.empty()) {
        throw InputError("benchmark: no sizes given");
    }
    if (options.trials < 1) {
        throw InputError("benchmark: need at least one trial");
    }
    std::vector<BenchRow> rows;
    for (const auto n : sizes) {
        if (n < 10) {
            throw InputError("benchmark: sizes must be at least 10");
        }
        BenchRow row;
        row.n = n;
        const VectorXd times = linspace(0.0, static_cast<double>(n - 1), n);
        Rng rng = make_rng(12345, static_cast<std::uint64_t>(n));
        std::normal_distribution<double> normal(0.0, 1.0);
        VectorXd y(n);
        for (auto& v : y) {
            v = normal(rng);
        }
        const VectorXd mean = VectorXd::Zero(n);
        const StationaryKernelSpec spec{options.kernel, 1.0, options.length_in_steps, 0.5};

        double dense_value = 0.0;
        double sparse_value = 0.0;
        row.dense_seconds = time_call(
            [&] {
                dense_value = mvn_logpdf_dense(y, mean, dense_covariance(spec, times));
                return dense_value;
            },
            options.trials, options.min_sample_seconds);
        row.sparse_seconds = time_call(
            [&] {
                sparse_value = mvn_logpdf(y, mean, build_covariance(spec, times));
                return sparse_value;
            },
            options.trials, options.min_sample_seconds);
        row.sparse_speedup = row.dense_seconds / row.sparse_seconds;
        row.relative_difference = std::abs(sparse_value - dense_value) / std::abs(dense_value);
        row.bandwidth = bandwidth(build_covariance(spec, times));

        // joint GP posterior on a logistic series, log-parameter curves on the full and coarse grids
        const LogisticModel model(2.0);
        const VectorXd t100 = linspace(0.0, 100.0, n);
        VectorXd theta(2);
        theta << 0.08, 50.0;
        const VectorXd f = model.simulate(theta, t100);
        const Dataset data(t100, f + y);
        const double dt = 100.0 / static_cast<double>(n - 1);
        const GpHyper hyper = default_gp_hyper(dt);
        auto state_on = [&](Eigen::Index stride) {
            NonStationaryState s;
            s.grid_times = coarse_grid(t100, stride);
            s.log_length = (s.grid_times.array() * 0.03).sin().matrix() + VectorXd::Constant(s.grid_times.size(), std::log(2.0 * dt));
            s.log_sigma = (s.grid_times.array() * 0.02).cos().matrix() * 0.5;
            return s;
        };
        const auto full = state_on(1);
        const auto coarse = state_on(options.coarse_stride);
        row.full_grid_seconds = time_call([&] { return gp_joint_log_posterior(data, model, theta, full, hyper); },
                                          options.trials, options.min_sample_seconds);
        row.coarse_grid_seconds = time_call([&] { return gp_joint_log_posterior(data, model, theta, coarse, hyper); },
                                            options.trials, options.min_sample_seconds);
        row.grid_speedup = row.full_grid_seconds / row.coarse_grid_seconds;
        rows.push_back(row);
    }
    return rows;
}

void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchRow>& rows)
{
    io::CsvTable t;
    t.header = {"n",          "dense_seconds",     "sparse_seconds",      "sparse_speedup", "relative_difference",
                "bandwidth", "full_grid_seconds", "coarse_grid_seconds", "grid_speedup"};
    for (const auto& r : rows) {
        t.rows.push_back({std::to_string(r.n), io::format_double(r.dense_seconds), io::format_double(r.sparse_seconds),
                          io::format_double(r.sparse_speedup), io::format_double(r.relative_difference),
                          std::to_string(r.bandwidth), io::format_double(r.full_grid_seconds),
                          io::format_double(r.coarse_grid_seconds), io::format_double(r.grid_speedup)});
    }
    io::write_csv(path, t);
}

void print_bench(std::ostream& out, const std::vector<BenchRow>& rows)
{
    out << std::setw(6) << "N" << std::setw(14) << "dense[ms]" << std::setw(14) << "sparse[ms]" << std::setw(10)
        << "ratio" << std::setw(12) << "rel.diff" << std::setw(8) << "band" << std::setw(14) << "fullgrid[ms]"
        << std::setw(14) << "coarse[ms]" << std::setw(10) << "ratio" << '\n';
    for (const auto& r : rows) {
        out << std::setw(6) << r.n << std::setw(14) << std::setprecision(4) << r.dense_seconds * 1e3 << std::setw(14)
            << r.sparse_seconds * 1e3 << std::setw(10) << std::setprecision(3) << r.sparse_speedup << std::setw(12)
            << std::setprecision(2) << r.relative_difference << std::setw(8) << r.bandwidth << std::setw(14)
            << std::setprecision(4) << r.full_grid_seconds * 1e3 << std::setw(14) << r.coarse_grid_seconds * 1e3
            << std::setw(10) << std::setprecision(3) << r.grid_speedup << '\n';
    }
}

} // namespace flexnoise
