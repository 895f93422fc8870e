#pragma once

#include <filesystem>
#include <ostream>
#include <vector>

#include "flexnoise/kernels.hpp"

namespace flexnoise {

struct BenchRow {
    Eigen::Index n = 0;
    /// Seconds per likelihood evaluation, covariance assembly included.
    double dense_seconds = 0.0;
    double sparse_seconds = 0.0;
    double sparse_speedup = 0.0;
    /// |sparse - dense| / |dense| for the log-likelihood value.
    double relative_difference = 0.0;
    Eigen::Index bandwidth = 0;
    /// Seconds per joint GP log-posterior evaluation on the full and coarse grids.
    double full_grid_seconds = 0.0;
    double coarse_grid_seconds = 0.0;
    double grid_speedup = 0.0;
};

struct BenchOptions {
    KernelKind kernel = KernelKind::Laplacian;
    /// Kernel length in units of the grid spacing.
    double length_in_steps = 5.0;
    int trials = 5;
    Eigen::Index coarse_stride = 5;
    /// Minimum wall time per timing sample.
    double min_sample_seconds = 0.02;
};

std::vector<BenchRow> benchmark_sparse(const std::vector<Eigen::Index>& sizes, const BenchOptions& options = {});

void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchRow>& rows);
void print_bench(std::ostream& out, const std::vector<BenchRow>& rows);

} // namespace flexnoise
