#pragma once

#include <filesystem>
#include <optional>

#include <Eigen/Dense>

namespace flexnoise {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Observed time series: a strictly increasing time grid and one value per time.
class Dataset {
public:
    Dataset(VectorXd times, VectorXd values);

    const VectorXd& times() const { return times_; }
    const VectorXd& values() const { return values_; }
    Eigen::Index size() const { return times_.size(); }

    /// Common spacing when the grid is uniform to relative tolerance 1e-6.
    std::optional<double> dt() const { return dt_; }

    /// Reads a two-column CSV with header `t,y`.
    static Dataset load_csv(const std::filesystem::path& path);
    void save_csv(const std::filesystem::path& path) const;

private:
    VectorXd times_;
    VectorXd values_;
    std::optional<double> dt_;
};

/// Uniform spacing of `times` (relative tolerance 1e-6), if any.
std::optional<double> uniform_spacing(const VectorXd& times);

/// Throws InputError unless `times` is strictly increasing.
void require_increasing(const VectorXd& times, const char* what);

/// `n` equally spaced points on [start, stop].
VectorXd linspace(double start, double stop, Eigen::Index n);

} // namespace flexnoise
