#include "flexnoise/models.hpp"

#include <algorithm>
#include <cmath>

#include "flexnoise/error.hpp"
#include "flexnoise/io.hpp"

namespace flexnoise {

std::vector<std::string> ForwardModel::param_names() const
{
    std::vector<std::string> names;
    for (const auto& p : parameters()) {
        names.push_back(p.name);
    }
    return names;
}

VectorXd transform_to_unconstrained(const ForwardModel& model, const VectorXd& theta)
{
    const auto params = model.parameters();
    return transform_to_unconstrained(params, theta);
}

VectorXd transform_to_constrained(const ForwardModel& model, const VectorXd& phi)
{
    const auto params = model.parameters();
    return transform_to_constrained(params, phi);
}

double log_jacobian(const ForwardModel& model, const VectorXd& phi)
{
    const auto params = model.parameters();
    return log_jacobian(params, phi);
}

// ---------------------------------------------------------------------------

VectorXd logistic_solve(const LogisticParams& params, const VectorXd& times)
{
    const auto& [r, K, y0] = params;
    if (!std::isfinite(r) || !std::isfinite(K) || !std::isfinite(y0)) {
        throw InputError("logistic_solve: non-finite parameter");
    }
    if (!(r > 0.0 && K > 0.0 && y0 > 0.0)) {
        throw InputError("logistic_solve: r, K and y0 must be positive");
    }
    const double c = K / y0 - 1.0;
    VectorXd out(times.size());
    for (Eigen::Index i = 0; i < times.size(); ++i) {
        out[i] = K / (1.0 + c * std::exp(-r * times[i]));
    }
    return out;
}

LogisticModel::LogisticModel(double y0, PriorSpec r_prior, PriorSpec k_prior)
    : y0_(y0), r_prior_(std::move(r_prior)), k_prior_(std::move(k_prior))
{
    if (!(y0 > 0.0) || !std::isfinite(y0)) {
        throw InputError("LogisticModel: y0 must be positive");
    }
    validate_prior(r_prior_);
    validate_prior(k_prior_);
}

std::vector<ParameterSpec> LogisticModel::parameters() const
{
    return {
        {"r", Transform::Log, r_prior_, PriorSpace::Constrained},
        {"K", Transform::Log, k_prior_, PriorSpace::Constrained},
    };
}

VectorXd LogisticModel::simulate(const VectorXd& theta, const VectorXd& times) const
{
    if (theta.size() != 2) {
        throw InputError("LogisticModel: expected (r, K)");
    }
    return logistic_solve({theta[0], theta[1], y0_}, times);
}

VectorXd LogisticModel::initial_guess(const Dataset& data) const
{
    const auto n = data.size();
    const auto tail = std::max<Eigen::Index>(1, n / 10);
    double k0 = data.values().tail(tail).mean();
    k0 = std::max(k0, 1.5 * y0_);
    const double span = data.times()[n - 1] - data.times()[0];
    // growth from y0 to ~K/2 somewhere mid-series
    const double r0 = std::max(1e-3, std::log(std::max(k0 / y0_ - 1.0, 1.5)) / std::max(span / 2.0, 1e-12));
    VectorXd guess(2);
    guess << r0, k0;
    return guess;
}

// ---------------------------------------------------------------------------

HergParams HergParams::from_vector(const VectorXd& theta)
{
    if (theta.size() != 9) {
        throw InputError("HergParams: expected 9 entries");
    }
    HergParams out;
    out.g_kr = theta[0];
    for (int k = 0; k < 8; ++k) {
        out.p[static_cast<std::size_t>(k)] = theta[k + 1];
    }
    return out;
}

VectorXd HergParams::to_vector() const
{
    VectorXd v(9);
    v[0] = g_kr;
    for (int k = 0; k < 8; ++k) {
        v[k + 1] = p[static_cast<std::size_t>(k)];
    }
    return v;
}

std::vector<NormalPrior> herg_default_priors()
{
    return {{10.5, 1.0}, {-2.5, 3.0}, {4.5, 1.0}, {-3.5, 1.5}, {4.0, 0.5},
            {4.5, 0.5},  {3.0, 1.5},  {2.0, 0.5}, {3.5, 0.5}};
}

HergParams herg_reference_params()
{
    const auto priors = herg_default_priors();
    VectorXd theta(9);
    for (int k = 0; k < 9; ++k) {
        theta[k] = std::exp(priors[static_cast<std::size_t>(k)].mean);
    }
    return HergParams::from_vector(theta);
}

double ProtocolSegment::voltage(double t) const
{
    if (v_start == v_end) {
        return v_start;
    }
    const double frac = (t - t_start) / (t_end - t_start);
    return v_start + (v_end - v_start) * frac;
}

VoltageProtocol::VoltageProtocol(std::vector<ProtocolSegment> segments)
    : segments_(std::move(segments))
{
    if (segments_.empty()) {
        throw ConfigError("VoltageProtocol: no segments");
    }
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        const auto& s = segments_[i];
        if (!std::isfinite(s.t_start) || !std::isfinite(s.t_end) || !std::isfinite(s.v_start)
            || !std::isfinite(s.v_end)) {
            throw ConfigError("VoltageProtocol: non-finite segment " + std::to_string(i));
        }
        if (!(s.t_end > s.t_start)) {
            throw ConfigError("VoltageProtocol: empty or reversed segment " + std::to_string(i));
        }
        if (i > 0) {
            const double prev_end = segments_[i - 1].t_end;
            const double tol = 1e-9 * std::max(1.0, std::abs(prev_end));
            if (std::abs(s.t_start - prev_end) > tol) {
                throw ConfigError("VoltageProtocol: gap or overlap between segments " + std::to_string(i - 1)
                                  + " and " + std::to_string(i));
            }
        }
    }
}

double VoltageProtocol::voltage(double t) const
{
    if (t < start() || t > end()) {
        throw ConfigError("VoltageProtocol: time outside protocol window");
    }
    auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                               [](double x, const ProtocolSegment& s) { return x < s.t_end; });
    if (it == segments_.end()) {
        --it;
    }
    return it->voltage(t);
}

VoltageProtocol VoltageProtocol::load_csv(const std::filesystem::path& path)
{
    const auto table = io::read_csv(path);
    const auto c0 = table.column("t_start");
    const auto c1 = table.column("t_end");
    const auto c2 = table.column("v_start");
    const auto c3 = table.column("v_end");
    std::vector<ProtocolSegment> segs;
    for (const auto& row : table.rows) {
        segs.push_back({io::parse_double(row[c0]), io::parse_double(row[c1]), io::parse_double(row[c2]),
                        io::parse_double(row[c3])});
    }
    return VoltageProtocol(std::move(segs));
}

void VoltageProtocol::save_csv(const std::filesystem::path& path) const
{
    io::CsvTable table;
    table.header = {"t_start", "t_end", "v_start", "v_end"};
    for (const auto& s : segments_) {
        table.rows.push_back({io::format_double(s.t_start), io::format_double(s.t_end),
                              io::format_double(s.v_start), io::format_double(s.v_end)});
    }
    io::write_csv(path, table);
}

GatingRates herg_rates(const HergParams& params, double voltage)
{
    const auto& p = params.p;
    const double k1 = p[0] * std::exp(p[1] * voltage);
    const double k2 = p[2] * std::exp(-p[3] * voltage);
    const double k3 = p[4] * std::exp(p[5] * voltage);
    const double k4 = p[6] * std::exp(-p[7] * voltage);
    return {k1 / (k1 + k2), 1.0 / (k1 + k2), k4 / (k3 + k4), 1.0 / (k3 + k4)};
}

GatingState herg_steady_state(const HergParams& params, double voltage)
{
    const auto rates = herg_rates(params, voltage);
    return {rates.a_inf, rates.r_inf};
}

namespace {

void check_herg_params(const HergParams& params)
{
    if (!(params.g_kr > 0.0) || !std::isfinite(params.g_kr)) {
        throw InputError("herg_simulate: g_Kr must be positive");
    }
    for (double v : params.p) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw InputError("herg_simulate: kinetic parameters must be positive");
        }
    }
}

} // namespace

namespace {

double logit(double x)
{
    x = std::clamp(x, 1e-300, 1.0 - 1e-16);
    return std::log(x) - std::log1p(-x);
}

double inv_logit(double u)
{
    return u >= 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
}

} // namespace

HergTrajectory herg_simulate_states(const HergParams& params, const VoltageProtocol& protocol, double e_k,
                                    const VectorXd& times, std::optional<GatingState> init, OdeTolerances tol)
{
    check_herg_params(params);
    require_increasing(times, "herg_simulate");
    const auto n = times.size();
    HergTrajectory out{VectorXd(n), VectorXd(n), VectorXd(n)};
    if (n == 0) {
        return out;
    }
    const double slack = 1e-9 * std::max(1.0, std::abs(protocol.end()));
    if (times[0] < protocol.start() - slack || times[n - 1] > protocol.end() + slack) {
        throw ConfigError("herg_simulate: protocol does not cover the requested times");
    }

    GatingState state = init.value_or(herg_steady_state(params, protocol.voltage(protocol.start())));
    Eigen::Index next = 0;
    const auto& segments = protocol.segments();
    for (std::size_t s = 0; s < segments.size() && next < n; ++s) {
        const auto& seg = segments[s];
        const bool last = s + 1 == segments.size();

        std::vector<double> grid{seg.t_start};
        const Eigen::Index first_out = next;
        while (next < n && (times[next] < seg.t_end || (last && times[next] <= seg.t_end + slack))) {
            if (times[next] > grid.back()) {
                grid.push_back(times[next]);
            }
            ++next;
        }
        if (seg.t_end > grid.back()) {
            grid.push_back(seg.t_end);
        }

        // gates integrated as log-odds so they cannot leave (0, 1)
        auto rhs = [&params, &seg](double t, const std::vector<double>& u, std::vector<double>& dudt) {
            const auto rates = herg_rates(params, seg.voltage(t));
            // (x_inf - x) / (x (1 - x)) with 1/x = 1 + e^-u and 1/(1 - x) = 1 + e^u
            // trial stages may overshoot wildly; keep them finite so the step is rejected instead
            const double ua = std::clamp(u[0], -300.0, 300.0);
            const double ur = std::clamp(u[1], -300.0, 300.0);
            dudt[0] = (rates.a_inf * (1.0 + std::exp(-ua)) - (1.0 - rates.a_inf) * (1.0 + std::exp(ua))) / rates.tau_a;
            dudt[1] = (rates.r_inf * (1.0 + std::exp(-ur)) - (1.0 - rates.r_inf) * (1.0 + std::exp(ur))) / rates.tau_r;
        };
        Eigen::VectorXd y0(2);
        y0 << logit(state.a), logit(state.r);
        const Eigen::VectorXd grid_vec = Eigen::Map<const Eigen::VectorXd>(grid.data(), static_cast<Eigen::Index>(grid.size()));
        Eigen::MatrixXd traj = ode_integrate(rhs, y0, grid_vec, tol);
        traj = traj.unaryExpr([](double u) { return inv_logit(u); });

        // match each requested time to its row in the integration grid
        Eigen::Index row = 0;
        for (Eigen::Index k = first_out; k < next; ++k) {
            while (row + 1 < traj.rows() && grid[static_cast<std::size_t>(row)] < times[k]) {
                ++row;
            }
            const double a = traj(row, 0);
            const double r = traj(row, 1);
            out.a[k] = a;
            out.r[k] = r;
            out.current[k] = params.g_kr * a * r * (seg.voltage(times[k]) - e_k);
        }
        state = {traj(traj.rows() - 1, 0), traj(traj.rows() - 1, 1)};
    }
    return out;
}

VectorXd herg_simulate(const HergParams& params, const VoltageProtocol& protocol, double e_k, const VectorXd& times,
                       std::optional<GatingState> init, OdeTolerances tol)
{
    return herg_simulate_states(params, protocol, e_k, times, init, tol).current;
}

HergModel::HergModel(VoltageProtocol protocol, double e_k, std::vector<NormalPrior> priors)
    : protocol_(std::move(protocol)), e_k_(e_k), priors_(std::move(priors))
{
    if (priors_.size() != 9) {
        throw ConfigError("HergModel: need 9 priors");
    }
    for (const auto& p : priors_) {
        validate_prior(p);
    }
}

std::vector<ParameterSpec> HergModel::parameters() const
{
    static const std::array<const char*, 9> names{"g_Kr", "p1", "p2", "p3", "p4", "p5", "p6", "p7", "p8"};
    std::vector<ParameterSpec> out;
    for (std::size_t k = 0; k < 9; ++k) {
        out.push_back({names[k], Transform::Log, priors_[k], PriorSpace::Unconstrained});
    }
    return out;
}

VectorXd HergModel::simulate(const VectorXd& theta, const VectorXd& times) const
{
    return herg_simulate(HergParams::from_vector(theta), protocol_, e_k_, times);
}

VectorXd HergModel::initial_guess(const Dataset&) const
{
    VectorXd theta(9);
    for (int k = 0; k < 9; ++k) {
        theta[k] = std::exp(priors_[static_cast<std::size_t>(k)].mean);
    }
    return theta;
}

} // namespace flexnoise
