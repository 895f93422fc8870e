#include "flexnoise/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "flexnoise/error.hpp"

namespace flexnoise {

KernelKind parse_kernel_kind(const std::string& name)
{
    if (name == "rbf" || name == "RBF") {
        return KernelKind::RBF;
    }
    if (name == "laplacian" || name == "Laplacian") {
        return KernelKind::Laplacian;
    }
    if (name == "matern" || name == "Matern") {
        return KernelKind::Matern;
    }
    throw ConfigError("unknown kernel '" + name + "'");
}

std::string to_string(KernelKind kind)
{
    switch (kind) {
    case KernelKind::RBF:
        return "rbf";
    case KernelKind::Laplacian:
        return "laplacian";
    case KernelKind::Matern:
        return "matern";
    }
    return "unknown";
}

void StationaryKernelSpec::validate() const
{
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw InputError("kernel: sigma must be positive and finite");
    }
    if (!(length > 0.0) || !std::isfinite(length)) {
        throw InputError("kernel: length scale must be positive and finite");
    }
    if (kind == KernelKind::Matern && !(nu > 0.0 && std::isfinite(nu))) {
        throw InputError("kernel: Matern smoothness must be positive");
    }
}

double matern_bessel(double sigma, double length, double nu, double lag)
{
    const double r = std::abs(lag);
    if (r == 0.0) {
        return sigma * sigma;
    }
    const double x = std::sqrt(2.0 * nu) * r / length;
    if (x > 700.0) {
        return 0.0;
    }
    const double log_front = (1.0 - nu) * std::log(2.0) - std::lgamma(nu) + nu * std::log(x);
    return sigma * sigma * std::exp(log_front) * std::cyl_bessel_k(nu, x);
}

double kernel_eval(const StationaryKernelSpec& spec, double t_i, double t_j)
{
    const double r = std::abs(t_i - t_j);
    const double s2 = spec.sigma * spec.sigma;
    switch (spec.kind) {
    case KernelKind::RBF:
        return s2 * std::exp(-r * r / (2.0 * spec.length * spec.length));
    case KernelKind::Laplacian:
        return s2 * std::exp(-r / spec.length);
    case KernelKind::Matern: {
        if (spec.nu == 0.5) {
            return s2 * std::exp(-r / spec.length);
        }
        if (spec.nu == 1.5) {
            const double x = std::sqrt(3.0) * r / spec.length;
            return s2 * (1.0 + x) * std::exp(-x);
        }
        if (spec.nu == 2.5) {
            const double x = std::sqrt(5.0) * r / spec.length;
            return s2 * (1.0 + x + x * x / 3.0) * std::exp(-x);
        }
        return matern_bessel(spec.sigma, spec.length, spec.nu, r);
    }
    }
    return 0.0;
}

void NonStationaryState::validate() const
{
    if (grid_times.size() == 0) {
        throw InputError("NonStationaryState: empty grid");
    }
    if (log_length.size() != grid_times.size() || log_sigma.size() != grid_times.size()) {
        throw InputError("NonStationaryState: parameter vectors must match the grid");
    }
    for (Eigen::Index i = 0; i < grid_times.size(); ++i) {
        if (i > 0 && !(grid_times[i] > grid_times[i - 1])) {
            throw InputError("NonStationaryState: grid must be strictly increasing");
        }
        if (!std::isfinite(log_length[i]) || !std::isfinite(log_sigma[i])) {
            throw InputError("NonStationaryState: non-finite kernel parameter");
        }
    }
}

namespace {

// Linear interpolation weights of t on the grid: (left index, weight of right node).
std::pair<Eigen::Index, double> locate(const Eigen::VectorXd& grid, double t)
{
    const auto n = grid.size();
    const double span = grid[n - 1] - grid[0];
    const double slack = 1e-12 * std::max(1.0, std::abs(span));
    if (t < grid[0] - slack || t > grid[n - 1] + slack) {
        throw InputError("interpolate_params: time " + std::to_string(t) + " outside the grid");
    }
    if (n == 1) {
        return {0, 0.0};
    }
    const double* begin = grid.data();
    const double* it = std::upper_bound(begin, begin + n, t);
    auto right = static_cast<Eigen::Index>(it - begin);
    right = std::clamp<Eigen::Index>(right, 1, n - 1);
    const auto left = right - 1;
    double w = (t - grid[left]) / (grid[right] - grid[left]);
    w = std::clamp(w, 0.0, 1.0);
    return {left, w};
}

} // namespace

KernelParamsAt interpolate_params(const NonStationaryState& state, const Eigen::VectorXd& times)
{
    state.validate();
    KernelParamsAt out{Eigen::VectorXd(times.size()), Eigen::VectorXd(times.size())};
    for (Eigen::Index i = 0; i < times.size(); ++i) {
        const auto [left, w] = locate(state.grid_times, times[i]);
        if (w == 0.0) {
            out.log_length[i] = state.log_length[left];
            out.log_sigma[i] = state.log_sigma[left];
        } else {
            out.log_length[i] = (1.0 - w) * state.log_length[left] + w * state.log_length[left + 1];
            out.log_sigma[i] = (1.0 - w) * state.log_sigma[left] + w * state.log_sigma[left + 1];
        }
    }
    return out;
}

double nonstationary_laplacian_eval(const NonStationaryState& state, double t_i, double t_j)
{
    Eigen::VectorXd ts(2);
    ts << t_i, t_j;
    const auto p = interpolate_params(state, ts);
    const double li = std::exp(p.log_length[0]);
    const double lj = std::exp(p.log_length[1]);
    const double si = std::exp(p.log_sigma[0]);
    const double sj = std::exp(p.log_sigma[1]);
    const double value = nonstationary_laplacian(si, li, sj, lj, t_i - t_j);
    if (!std::isfinite(value)) {
        throw NumericalError("nonstationary_laplacian_eval: non-finite covariance");
    }
    return value;
}

Eigen::VectorXd coarse_grid(const Eigen::VectorXd& times, Eigen::Index stride)
{
    if (stride < 1) {
        throw InputError("coarse_grid: stride must be >= 1");
    }
    std::vector<double> pts;
    for (Eigen::Index i = 0; i < times.size(); i += stride) {
        pts.push_back(times[i]);
    }
    if (times.size() > 0 && pts.back() != times[times.size() - 1]) {
        pts.push_back(times[times.size() - 1]);
    }
    return Eigen::Map<Eigen::VectorXd>(pts.data(), static_cast<Eigen::Index>(pts.size()));
}

} // namespace flexnoise
