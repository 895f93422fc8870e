#pragma once

#include <string>

#include <Eigen/Dense>

namespace flexnoise {

enum class KernelKind { RBF, Laplacian, Matern };

KernelKind parse_kernel_kind(const std::string& name);
std::string to_string(KernelKind kind);

/// Stationary covariance function parameters. `nu` is only read by Matern.
struct StationaryKernelSpec {
    KernelKind kind = KernelKind::Laplacian;
    double sigma = 1.0;
    double length = 1.0;
    double nu = 0.5;

    void validate() const;
};

/// C(t_i, t_j) for a stationary kernel.
double kernel_eval(const StationaryKernelSpec& spec, double t_i, double t_j);

/// Matern covariance through the Bessel-function formula, no closed-form shortcuts.
double matern_bessel(double sigma, double length, double nu, double lag);

/// Per-time-point kernel parameters on a (possibly coarse) grid, stored as logs.
struct NonStationaryState {
    Eigen::VectorXd grid_times;
    Eigen::VectorXd log_length;
    Eigen::VectorXd log_sigma;

    Eigen::Index grid_size() const { return grid_times.size(); }
    void validate() const;
};

struct KernelParamsAt {
    Eigen::VectorXd log_length;
    Eigen::VectorXd log_sigma;
};

/// Piecewise-linear interpolation of log L and log sigma onto `times`.
/// Throws InputError for any time outside the grid.
KernelParamsAt interpolate_params(const NonStationaryState& state, const Eigen::VectorXd& times);

/// Non-stationary Laplacian covariance between two points given their local parameters.
inline double nonstationary_laplacian(double sigma_i, double length_i, double sigma_j, double length_j, double lag);

/// Non-stationary Laplacian covariance, interpolating the state's parameters at t_i and t_j.
double nonstationary_laplacian_eval(const NonStationaryState& state, double t_i, double t_j);

/// Every `stride`-th time plus the last one.
Eigen::VectorXd coarse_grid(const Eigen::VectorXd& times, Eigen::Index stride);

} // namespace flexnoise

#include <cmath>

namespace flexnoise {

inline double nonstationary_laplacian(double sigma_i, double length_i, double sigma_j, double length_j, double lag)
{
    const double sum_sq = length_i * length_i + length_j * length_j;
    const double prefactor = std::sqrt(2.0 * length_i * length_j / sum_sq);
    return sigma_i * sigma_j * prefactor * std::exp(-std::abs(lag) / std::sqrt(sum_sq));
}

} // namespace flexnoise
