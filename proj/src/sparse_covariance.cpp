#include "flexnoise/sparse_covariance.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flexnoise/dataset.hpp"
#include "flexnoise/error.hpp"

namespace flexnoise {

namespace {

struct PivotFailure {
    Eigen::Index row;
    double pivot;
};

} // namespace

SparseCovariance::SparseCovariance(std::vector<Eigen::Index> first,
                                   std::vector<std::vector<double>> rows, double threshold)
    : threshold_(threshold)
{
    if (first.size() != rows.size()) {
        throw InputError("SparseCovariance: row count mismatch");
    }
    if (first.empty()) {
        throw InputError("SparseCovariance: empty matrix");
    }
    if (!(threshold >= 0.0)) {
        throw InputError("SparseCovariance: threshold must be non-negative");
    }
    const auto n = first.size();
    first_.resize(n);
    offset_.resize(n + 1);
    std::size_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto row_len = rows[i].size();
        if (first[i] < 0 || static_cast<std::size_t>(first[i]) > i ||
            row_len != i - static_cast<std::size_t>(first[i]) + 1) {
            throw InputError("SparseCovariance: malformed envelope at row " + std::to_string(i));
        }
        const double diag = rows[i].back();
        if (!(diag > 0.0) || !std::isfinite(diag)) {
            throw NumericalError("SparseCovariance: diagonal entry " + std::to_string(i) +
                                 " is not strictly positive");
        }
        // trim leading entries that fall under the threshold
        std::size_t skip = 0;
        while (skip + 1 < row_len && std::abs(rows[i][skip]) < threshold) {
            ++skip;
        }
        first_[i] = first[i] + static_cast<Eigen::Index>(skip);
        offset_[i] = total;
        total += row_len - skip;
    }
    offset_[n] = total;
    values_.resize(total);
    for (std::size_t i = 0; i < n; ++i) {
        const auto skip = static_cast<std::size_t>(first_[i] - first[i]);
        for (std::size_t k = skip; k < rows[i].size(); ++k) {
            const double v = rows[i][k];
            if (!std::isfinite(v)) {
                throw NumericalError("SparseCovariance: non-finite entry in row " + std::to_string(i));
            }
            const bool diagonal = k + 1 == rows[i].size();
            values_[offset_[i] + k - skip] = (!diagonal && std::abs(v) < threshold) ? 0.0 : v;
        }
    }
    factorize();
}

SparseCovariance SparseCovariance::from_dense(const Eigen::MatrixXd& dense, double threshold)
{
    if (dense.rows() != dense.cols() || dense.rows() == 0) {
        throw InputError("SparseCovariance::from_dense: matrix must be square and non-empty");
    }
    const auto n = dense.rows();
    std::vector<Eigen::Index> first(static_cast<std::size_t>(n));
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index f = 0;
        while (f < i && std::abs(dense(i, f)) < threshold) {
            ++f;
        }
        first[static_cast<std::size_t>(i)] = f;
        auto& row = rows[static_cast<std::size_t>(i)];
        row.reserve(static_cast<std::size_t>(i - f + 1));
        for (Eigen::Index j = f; j <= i; ++j) {
            row.push_back(dense(i, j));
        }
    }
    return SparseCovariance(std::move(first), std::move(rows), threshold);
}

SparseCovariance SparseCovariance::from_diagonal(const Eigen::VectorXd& variances)
{
    const auto n = static_cast<std::size_t>(variances.size());
    std::vector<Eigen::Index> first(n);
    std::vector<std::vector<double>> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        first[i] = static_cast<Eigen::Index>(i);
        rows[i] = {variances[static_cast<Eigen::Index>(i)]};
    }
    return SparseCovariance(std::move(first), std::move(rows), 0.0);
}

double SparseCovariance::operator()(Eigen::Index i, Eigen::Index j) const
{
    if (j > i) {
        std::swap(i, j);
    }
    const auto ui = static_cast<std::size_t>(i);
    if (j < first_[ui]) {
        return 0.0;
    }
    return values_[offset_[ui] + static_cast<std::size_t>(j - first_[ui])];
}

Eigen::MatrixXd SparseCovariance::to_dense() const
{
    const auto n = size();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = first(i); j <= i; ++j) {
            out(i, j) = (*this)(i, j);
            out(j, i) = out(i, j);
        }
    }
    return out;
}

Eigen::Index SparseCovariance::nonzeros() const
{
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < size(); ++i) {
        for (Eigen::Index j = first(i); j <= i; ++j) {
            if ((*this)(i, j) != 0.0) {
                count += (i == j) ? 1 : 2;
            }
        }
    }
    return count;
}

Eigen::Index SparseCovariance::bandwidth() const
{
    Eigen::Index width = 0;
    for (Eigen::Index i = 0; i < size(); ++i) {
        for (Eigen::Index j = first(i); j < i; ++j) {
            if ((*this)(i, j) != 0.0) {
                width = std::max(width, i - j);
                break;
            }
        }
    }
    return width;
}

bool SparseCovariance::try_factorize(double jitter, double& smallest_pivot)
{
    const auto n = first_.size();
    factor_.assign(values_.size(), 0.0);
    smallest_pivot = std::numeric_limits<double>::infinity();
    double log_det = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Index fi = first_[i];
        double* li = factor_.data() + offset_[i];
        const double* ai = values_.data() + offset_[i];
        const auto ii = static_cast<Eigen::Index>(i);
        for (Eigen::Index j = fi; j < ii; ++j) {
            const auto uj = static_cast<std::size_t>(j);
            const Eigen::Index fj = first_[uj];
            const double* lj = factor_.data() + offset_[uj];
            const Eigen::Index k0 = std::max(fi, fj);
            double s = ai[j - fi];
            const double* pi = li + (k0 - fi);
            const double* pj = lj + (k0 - fj);
            for (Eigen::Index k = k0; k < j; ++k) {
                s -= (*pi++) * (*pj++);
            }
            li[j - fi] = s / lj[j - fj];
        }
        double d = ai[ii - fi] + jitter;
        const double* p = li;
        for (Eigen::Index k = fi; k < ii; ++k, ++p) {
            d -= (*p) * (*p);
        }
        smallest_pivot = std::min(smallest_pivot, d);
        if (!(d > 0.0) || !std::isfinite(d)) {
            last_failed_row_ = ii;
            return false;
        }
        li[ii - fi] = std::sqrt(d);
        log_det += std::log(d);
    }
    log_det_ = log_det;
    return true;
}

void SparseCovariance::factorize()
{
    double pivot = 0.0;
    if (try_factorize(0.0, pivot)) {
        jitter_ = 0.0;
        return;
    }
    double max_diag = 0.0;
    for (Eigen::Index i = 0; i < size(); ++i) {
        max_diag = std::max(max_diag, (*this)(i, i));
    }
    if (!(max_diag > 0.0) || !std::isfinite(max_diag)) {
        throw NumericalError("covariance has no positive finite diagonal entry");
    }
    const double limit = 1e-6 * max_diag;
    for (double jitter = 1e-10 * max_diag; jitter <= limit * (1.0 + 1e-12); jitter *= 2.0) {
        if (try_factorize(jitter, pivot)) {
            jitter_ = jitter;
            return;
        }
    }
    std::ostringstream msg;
    msg << "covariance is not positive definite after jitter " << limit
        << "; smallest pivot " << pivot << " at row " << last_failed_row_;
    throw NumericalError(msg.str());
}

Eigen::VectorXd SparseCovariance::solve_lower(const Eigen::VectorXd& r) const
{
    if (r.size() != size()) {
        throw InputError("SparseCovariance::solve_lower: dimension mismatch");
    }
    const auto n = first_.size();
    Eigen::VectorXd z(r.size());
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Index fi = first_[i];
        const auto ii = static_cast<Eigen::Index>(i);
        const double* li = factor_.data() + offset_[i];
        double s = r[ii];
        for (Eigen::Index k = fi; k < ii; ++k) {
            s -= li[k - fi] * z[k];
        }
        z[ii] = s / li[ii - fi];
    }
    return z;
}

double SparseCovariance::quad_form(const Eigen::VectorXd& r) const
{
    return solve_lower(r).squaredNorm();
}

Eigen::MatrixXd SparseCovariance::factor_dense() const
{
    const auto n = size();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        for (Eigen::Index j = first_[ui]; j <= i; ++j) {
            out(i, j) = factor_[offset_[ui] + static_cast<std::size_t>(j - first_[ui])];
        }
    }
    return out;
}

Eigen::Index bandwidth(const SparseCovariance& cov)
{
    return cov.bandwidth();
}

namespace {

// Generic envelope assembly: `value(i, j)` for j <= i, `negligible(i, j)` returns true once
// every entry further left in row i is guaranteed below the threshold.
template <class Value, class Negligible>
SparseCovariance assemble(Eigen::Index n, double threshold, Value value, Negligible negligible)
{
    std::vector<Eigen::Index> first(static_cast<std::size_t>(n));
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(n));
    std::vector<double> scratch;
    for (Eigen::Index i = 0; i < n; ++i) {
        scratch.clear();
        scratch.push_back(value(i, i));
        Eigen::Index f = i;
        for (Eigen::Index j = i - 1; j >= 0; --j) {
            const double v = value(i, j);
            if (std::abs(v) < threshold && negligible(i, j, v)) {
                break;
            }
            scratch.push_back(v);
            f = j;
        }
        // drop trailing sub-threshold entries collected before the stop
        while (scratch.size() > 1 && std::abs(scratch.back()) < threshold) {
            scratch.pop_back();
            ++f;
        }
        first[static_cast<std::size_t>(i)] = f;
        rows[static_cast<std::size_t>(i)].assign(scratch.rbegin(), scratch.rend());
    }
    return SparseCovariance(std::move(first), std::move(rows), threshold);
}

} // namespace

SparseCovariance build_covariance(const StationaryKernelSpec& kernel, const Eigen::VectorXd& times,
                                  double threshold)
{
    kernel.validate();
    require_increasing(times, "build_covariance");
    const auto n = times.size();
    // every supported stationary kernel decreases monotonically with the lag
    auto monotone = [](Eigen::Index, Eigen::Index, double) { return true; };
    if (const auto dt = uniform_spacing(times)) {
        std::vector<double> by_lag;
        by_lag.reserve(64);
        auto lag_value = [&](Eigen::Index lag) {
            while (static_cast<Eigen::Index>(by_lag.size()) <= lag) {
                const auto l = static_cast<Eigen::Index>(by_lag.size());
                by_lag.push_back(kernel_eval(kernel, times[0], times[0] + static_cast<double>(l) * *dt));
            }
            return by_lag[static_cast<std::size_t>(lag)];
        };
        return assemble(n, threshold, [&](Eigen::Index i, Eigen::Index j) { return lag_value(i - j); },
                        monotone);
    }
    return assemble(
        n, threshold, [&](Eigen::Index i, Eigen::Index j) { return kernel_eval(kernel, times[i], times[j]); },
        monotone);
}

SparseCovariance build_covariance(const Eigen::VectorXd& sigma, const Eigen::VectorXd& length,
                                  const Eigen::VectorXd& times, double threshold)
{
    require_increasing(times, "build_covariance");
    if (sigma.size() != times.size() || length.size() != times.size()) {
        throw InputError("build_covariance: parameter vectors must match the time grid");
    }
    const auto n = times.size();
    Eigen::VectorXd len_sq(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(sigma[i] > 0.0) || !(length[i] > 0.0) || !std::isfinite(sigma[i]) ||
            !std::isfinite(length[i])) {
            throw NumericalError("build_covariance: non-finite or non-positive kernel parameter at index " +
                                 std::to_string(i));
        }
        len_sq[i] = length[i] * length[i];
    }
    const double sigma_max = sigma.maxCoeff();
    const double len_sq_max = len_sq.maxCoeff();
    auto value = [&](Eigen::Index i, Eigen::Index j) {
        if (i == j) {
            return sigma[i] * sigma[i];
        }
        const double sum_sq = len_sq[i] + len_sq[j];
        const double pre = std::sqrt(2.0 * length[i] * length[j] / sum_sq);
        return sigma[i] * sigma[j] * pre * std::exp(-(times[i] - times[j]) / std::sqrt(sum_sq));
    };
    auto negligible = [&](Eigen::Index i, Eigen::Index j, double) {
        const double bound =
            sigma[i] * sigma_max * std::exp(-(times[i] - times[j]) / std::sqrt(len_sq[i] + len_sq_max));
        return bound < threshold;
    };
    return assemble(n, threshold, value, negligible);
}

SparseCovariance build_covariance(const NonStationaryState& state, const Eigen::VectorXd& times,
                                  double threshold)
{
    const auto p = interpolate_params(state, times);
    return build_covariance(p.log_sigma.array().exp().matrix(), p.log_length.array().exp().matrix(),
                            times, threshold);
}

Eigen::MatrixXd dense_covariance(const StationaryKernelSpec& kernel, const Eigen::VectorXd& times)
{
    kernel.validate();
    const auto n = times.size();
    Eigen::MatrixXd out(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            out(i, j) = kernel_eval(kernel, times[i], times[j]);
            out(j, i) = out(i, j);
        }
    }
    return out;
}

Eigen::MatrixXd dense_covariance(const Eigen::VectorXd& sigma, const Eigen::VectorXd& length,
                                 const Eigen::VectorXd& times)
{
    const auto n = times.size();
    Eigen::MatrixXd out(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            out(i, j) = nonstationary_laplacian(sigma[i], length[i], sigma[j], length[j], times[i] - times[j]);
            out(j, i) = out(i, j);
        }
    }
    return out;
}

Eigen::MatrixXd dense_covariance(const NonStationaryState& state, const Eigen::VectorXd& times)
{
    const auto p = interpolate_params(state, times);
    return dense_covariance(p.log_sigma.array().exp().matrix(), p.log_length.array().exp().matrix(), times);
}

} // namespace flexnoise
