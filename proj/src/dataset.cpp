#include "flexnoise/dataset.hpp"

#include <cmath>

#include "flexnoise/error.hpp"
#include "flexnoise/io.hpp"

namespace flexnoise {

void require_increasing(const VectorXd& times, const char* what)
{
    for (Eigen::Index i = 0; i < times.size(); ++i) {
        if (!std::isfinite(times[i])) {
            throw InputError(std::string(what) + ": non-finite time stamp");
        }
        if (i > 0 && !(times[i] > times[i - 1])) {
            throw InputError(std::string(what) + ": times must be strictly increasing (index "
                             + std::to_string(i) + ")");
        }
    }
}

std::optional<double> uniform_spacing(const VectorXd& times)
{
    if (times.size() < 2) {
        return std::nullopt;
    }
    const double dt = (times[times.size() - 1] - times[0]) / static_cast<double>(times.size() - 1);
    for (Eigen::Index i = 1; i < times.size(); ++i) {
        const double step = times[i] - times[i - 1];
        if (std::abs(step - dt) > 1e-6 * std::abs(dt)) {
            return std::nullopt;
        }
    }
    return dt;
}

VectorXd linspace(double start, double stop, Eigen::Index n)
{
    return VectorXd::LinSpaced(n, start, stop);
}

Dataset::Dataset(VectorXd times, VectorXd values)
    : times_(std::move(times)), values_(std::move(values))
{
    if (times_.size() != values_.size()) {
        throw InputError("Dataset: times and values differ in length");
    }
    if (times_.size() < 2) {
        throw InputError("Dataset: need at least two observations");
    }
    require_increasing(times_, "Dataset");
    for (Eigen::Index i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) {
            throw InputError("Dataset: non-finite observation at index " + std::to_string(i));
        }
    }
    dt_ = uniform_spacing(times_);
}

Dataset Dataset::load_csv(const std::filesystem::path& path)
{
    const auto table = io::read_csv(path);
    const auto ct = table.column("t");
    const auto cy = table.column("y");
    VectorXd t(static_cast<Eigen::Index>(table.rows.size()));
    VectorXd y(t.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        t[static_cast<Eigen::Index>(i)] = io::parse_double(table.rows[i][ct]);
        y[static_cast<Eigen::Index>(i)] = io::parse_double(table.rows[i][cy]);
    }
    return Dataset(std::move(t), std::move(y));
}

void Dataset::save_csv(const std::filesystem::path& path) const
{
    io::CsvTable table;
    table.header = {"t", "y"};
    for (Eigen::Index i = 0; i < size(); ++i) {
        table.rows.push_back({io::format_double(times_[i]), io::format_double(values_[i])});
    }
    io::write_csv(path, table);
}

} // namespace flexnoise
