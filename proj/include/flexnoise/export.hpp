#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "flexnoise/experiment.hpp"

namespace flexnoise {

/// fig2, fig3, figS1, figS2.
Scenario figure_scenario(const std::string& figure);

struct IntervalRow {
    int replicate = 0;
    std::string model;
    std::string parameter;
    double q2_5 = 0.0;
    double q25 = 0.0;
    double q50 = 0.0;
    double q75 = 0.0;
    double q97_5 = 0.0;
    double truth = 0.0;

    bool operator==(const IntervalRow&) const = default;
};

/// Model-parameter interval rows from every summary.json under out_dir/<scenario>.
std::vector<IntervalRow> collect_intervals(const std::filesystem::path& out_dir, Scenario scenario);
void write_intervals(const std::filesystem::path& path, const std::vector<IntervalRow>& rows);
std::vector<IntervalRow> read_intervals(const std::filesystem::path& path);

/// Tidy CSVs for one figure under out_dir/export/<figure>/; returns the files written.
std::vector<std::filesystem::path> export_plotdata(const std::filesystem::path& out_dir, const std::string& figure);

} // namespace flexnoise
