#include "flexnoise/export.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "flexnoise/error.hpp"
#include "flexnoise/io.hpp"

namespace flexnoise {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct JobDir {
    std::string model;
    int replicate;
    fs::path dir;
};

double json_number(const json& j)
{
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

// Job directories in model-list order, then replicate order.
std::vector<JobDir> job_dirs(const fs::path& scenario_dir, std::vector<std::string>& missing)
{
    std::vector<JobDir> out;
    if (!fs::is_directory(scenario_dir)) {
        missing.push_back(scenario_dir.string());
        return out;
    }
    for (const auto& model : known_models()) {
        const auto mdir = scenario_dir / model;
        if (!fs::is_directory(mdir)) {
            continue;
        }
        std::vector<JobDir> reps;
        for (const auto& entry : fs::directory_iterator(mdir)) {
            if (!entry.is_directory()) {
                continue;
            }
            const auto name = entry.path().filename().string();
            if (name.empty() || !std::all_of(name.begin(), name.end(), ::isdigit)) {
                continue;
            }
            reps.push_back({model, std::stoi(name), entry.path()});
        }
        std::sort(reps.begin(), reps.end(), [](const JobDir& a, const JobDir& b) { return a.replicate < b.replicate; });
        for (auto& r : reps) {
            if (!fs::exists(r.dir / "summary.json")) {
                missing.push_back((r.dir / "summary.json").string());
                continue;
            }
            out.push_back(std::move(r));
        }
    }
    if (out.empty() && missing.empty()) {
        missing.push_back((scenario_dir / "<model>/<replicate>/summary.json").string());
    }
    return out;
}

json read_json(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot read " + path.string());
    }
    return json::parse(in);
}

void fail_missing(const std::vector<std::string>& missing)
{
    std::string msg = "export: missing inputs:";
    for (const auto& m : missing) {
        msg += "\n  " + m;
    }
    throw InputError(msg);
}

} // namespace

Scenario figure_scenario(const std::string& figure)
{
    if (figure == "figS1") return Scenario::Ar1Laplacian;
    if (figure == "fig2") return Scenario::MultiplicativeGp;
    if (figure == "fig3") return Scenario::BlockedBlock;
    if (figure == "figS2") return Scenario::BlockedGp;
    throw ConfigError("unknown figure '" + figure + "' (expected fig2, fig3, figS1 or figS2)");
}

std::vector<IntervalRow> collect_intervals(const fs::path& out_dir, Scenario scenario)
{
    std::vector<std::string> missing;
    const auto jobs = job_dirs(out_dir / to_string(scenario), missing);
    if (!missing.empty()) {
        fail_missing(missing);
    }
    std::vector<IntervalRow> rows;
    for (const auto& job : jobs) {
        const json summary = read_json(job.dir / "summary.json");
        for (const auto& p : summary.at("parameters")) {
            if (!p.value("model_parameter", false)) {
                continue;
            }
            rows.push_back({job.replicate, job.model, p.at("name").get<std::string>(), json_number(p.at("q2.5")),
                            json_number(p.at("q25")), json_number(p.at("q50")), json_number(p.at("q75")),
                            json_number(p.at("q97.5")), json_number(p.at("truth"))});
        }
    }
    return rows;
}

void write_intervals(const fs::path& path, const std::vector<IntervalRow>& rows)
{
    io::CsvTable t;
    t.header = {"replicate", "model", "parameter", "q2.5", "q25", "q50", "q75", "q97.5", "truth"};
    for (const auto& r : rows) {
        t.rows.push_back({std::to_string(r.replicate), r.model, r.parameter, io::format_double(r.q2_5),
                          io::format_double(r.q25), io::format_double(r.q50), io::format_double(r.q75),
                          io::format_double(r.q97_5), io::format_double(r.truth)});
    }
    io::write_csv(path, t);
}

std::vector<IntervalRow> read_intervals(const fs::path& path)
{
    const auto t = io::read_csv(path);
    std::vector<IntervalRow> rows;
    const auto c = [&t](const char* name) { return t.column(name); };
    for (const auto& r : t.rows) {
        rows.push_back({std::stoi(r[c("replicate")]), r[c("model")], r[c("parameter")],
                        io::parse_double(r[c("q2.5")]), io::parse_double(r[c("q25")]),
                        io::parse_double(r[c("q50")]), io::parse_double(r[c("q75")]),
                        io::parse_double(r[c("q97.5")]), io::parse_double(r[c("truth")])});
    }
    return rows;
}

std::vector<fs::path> export_plotdata(const fs::path& out_dir, const std::string& figure)
{
    const Scenario scenario = figure_scenario(figure);
    std::vector<std::string> missing;
    const auto jobs = job_dirs(out_dir / to_string(scenario), missing);
    for (const auto& job : jobs) {
        for (const char* file : {"fit.csv", "profile.csv"}) {
            if (!fs::exists(job.dir / file)) {
                missing.push_back((job.dir / file).string());
            }
        }
    }
    if (figure == "fig3" &&
        std::none_of(jobs.begin(), jobs.end(), [](const JobDir& j) { return j.model == "block"; })) {
        missing.push_back((out_dir / to_string(scenario) / "block/<replicate>").string());
    }
    if (!missing.empty()) {
        fail_missing(missing);
    }
    const auto dest = out_dir / "export" / figure;
    fs::create_directories(dest);
    std::vector<fs::path> written;

    write_intervals(dest / "intervals.csv", collect_intervals(out_dir, scenario));
    written.push_back(dest / "intervals.csv");

    io::CsvTable traj{{"replicate", "model", "t", "y", "f_true", "f_median"}, {}};
    io::CsvTable sd{{"replicate", "model", "t", "truth", "q05", "q50", "q95"}, {}};
    io::CsvTable lag{{"replicate", "model", "t", "truth", "q05", "q50", "q95"}, {}};
    io::CsvTable bounds{{"replicate", "model", "index", "t", "probability"}, {}};
    io::CsvTable medians{{"replicate", "model", "boundary"}, {}};
    for (const auto& job : jobs) {
        const auto rep = std::to_string(job.replicate);
        const auto fit = io::read_csv(job.dir / "fit.csv");
        for (const auto& r : fit.rows) {
            traj.rows.push_back({rep, job.model, r[fit.column("t")], r[fit.column("y")], r[fit.column("f_true")],
                                 r[fit.column("f_median")]});
        }
        const auto prof = io::read_csv(job.dir / "profile.csv");
        for (const auto& r : prof.rows) {
            sd.rows.push_back({rep, job.model, r[prof.column("t")], r[prof.column("sd_true")],
                               r[prof.column("sd_q05")], r[prof.column("sd_q50")], r[prof.column("sd_q95")]});
            lag.rows.push_back({rep, job.model, r[prof.column("t")], r[prof.column("lag1_true")],
                                r[prof.column("lag1_q05")], r[prof.column("lag1_q50")], r[prof.column("lag1_q95")]});
        }
        if (fs::exists(job.dir / "boundaries.csv")) {
            const auto b = io::read_csv(job.dir / "boundaries.csv");
            for (const auto& r : b.rows) {
                bounds.rows.push_back({rep, job.model, r[b.column("index")], r[b.column("t")],
                                       r[b.column("probability")]});
            }
            const json summary = read_json(job.dir / "summary.json");
            for (const auto& v : summary.value("boundaries", json::array())) {
                medians.rows.push_back({rep, job.model, std::to_string(v.get<long>())});
            }
        }
    }
    auto emit = [&](const io::CsvTable& t, const char* name) {
        io::write_csv(dest / name, t);
        written.push_back(dest / name);
    };
    emit(traj, "trajectory.csv");
    emit(sd, "sd.csv");
    emit(lag, "lag1.csv");
    if (!bounds.rows.empty()) {
        emit(bounds, "boundaries.csv");
        emit(medians, "median_boundaries.csv");
    }
    return written;
}

} // namespace flexnoise
