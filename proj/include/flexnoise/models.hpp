#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flexnoise/dataset.hpp"
#include "flexnoise/ode.hpp"
#include "flexnoise/priors.hpp"

namespace flexnoise {

/// Deterministic mean-trajectory generator f(t; theta).
class ForwardModel {
public:
    virtual ~ForwardModel() = default;

    /// Names, transforms and default priors of theta, in order.
    virtual std::vector<ParameterSpec> parameters() const = 0;

    /// Trajectory at `times`; same length as `times`. Throws on invalid theta.
    virtual VectorXd simulate(const VectorXd& theta, const VectorXd& times) const = 0;

    /// A reasonable constrained starting point for optimization.
    virtual VectorXd initial_guess(const Dataset& data) const = 0;

    std::size_t n_params() const { return parameters().size(); }
    std::vector<std::string> param_names() const;
};

VectorXd transform_to_unconstrained(const ForwardModel& model, const VectorXd& theta);
VectorXd transform_to_constrained(const ForwardModel& model, const VectorXd& phi);
double log_jacobian(const ForwardModel& model, const VectorXd& phi);

// ---------------------------------------------------------------------------
// Logistic growth

struct LogisticParams {
    double r = 0.0;
    double K = 0.0;
    double y0 = 0.0;
};

/// Closed-form solution of dy/dt = r y (1 - y/K) with y(0) = y0.
VectorXd logistic_solve(const LogisticParams& params, const VectorXd& times);

/// Logistic model with theta = (r, K), both log-transformed; y0 is a fixed constant.
class LogisticModel final : public ForwardModel {
public:
    explicit LogisticModel(double y0, PriorSpec r_prior = UniformPrior{0.0, 10.0},
                           PriorSpec k_prior = UniformPrior{0.0, 1e4});

    std::vector<ParameterSpec> parameters() const override;
    VectorXd simulate(const VectorXd& theta, const VectorXd& times) const override;
    VectorXd initial_guess(const Dataset& data) const override;

    double y0() const { return y0_; }

private:
    double y0_;
    PriorSpec r_prior_;
    PriorSpec k_prior_;
};

// ---------------------------------------------------------------------------
// hERG Hodgkin-Huxley current (time in s, voltage in V, conductance in pS)

struct HergParams {
    double g_kr = 0.0;
    std::array<double, 8> p{};

    static HergParams from_vector(const VectorXd& theta);
    VectorXd to_vector() const;
};

/// Default hERG parameters: exp of the prior means in `herg_default_priors`.
HergParams herg_reference_params();

/// Normal priors on the log of (g_Kr, p1..p8).
std::vector<NormalPrior> herg_default_priors();

struct ProtocolSegment {
    double t_start = 0.0;
    double t_end = 0.0;
    double v_start = 0.0;
    double v_end = 0.0;

    double voltage(double t) const;
};

/// Piecewise-constant or piecewise-linear voltage clamp.
class VoltageProtocol {
public:
    explicit VoltageProtocol(std::vector<ProtocolSegment> segments);

    const std::vector<ProtocolSegment>& segments() const { return segments_; }
    double start() const { return segments_.front().t_start; }
    double end() const { return segments_.back().t_end; }
    double voltage(double t) const;

    /// CSV columns `t_start,t_end,v_start,v_end`.
    static VoltageProtocol load_csv(const std::filesystem::path& path);
    void save_csv(const std::filesystem::path& path) const;

private:
    std::vector<ProtocolSegment> segments_;
};

struct GatingState {
    double a = 0.0;
    double r = 0.0;
};

struct GatingRates {
    double a_inf;
    double tau_a;
    double r_inf;
    double tau_r;
};

GatingRates herg_rates(const HergParams& params, double voltage);

/// Steady-state gating at a fixed voltage.
GatingState herg_steady_state(const HergParams& params, double voltage);

struct HergTrajectory {
    VectorXd current;
    VectorXd a;
    VectorXd r;
};

/// Integrates the gating ODEs segment by segment and returns I_Kr = g a r (V - E_K).
/// `init` defaults to the steady state at the protocol's first voltage.
HergTrajectory herg_simulate_states(const HergParams& params, const VoltageProtocol& protocol,
                                    double e_k, const VectorXd& times,
                                    std::optional<GatingState> init = std::nullopt,
                                    OdeTolerances tol = {});

VectorXd herg_simulate(const HergParams& params, const VoltageProtocol& protocol, double e_k,
                       const VectorXd& times, std::optional<GatingState> init = std::nullopt,
                       OdeTolerances tol = {});

class HergModel final : public ForwardModel {
public:
    static constexpr double kDefaultReversal = -0.088;

    explicit HergModel(VoltageProtocol protocol, double e_k = kDefaultReversal,
                       std::vector<NormalPrior> priors = herg_default_priors());

    std::vector<ParameterSpec> parameters() const override;
    VectorXd simulate(const VectorXd& theta, const VectorXd& times) const override;
    VectorXd initial_guess(const Dataset& data) const override;

    const VoltageProtocol& protocol() const { return protocol_; }
    double reversal_potential() const { return e_k_; }

private:
    VoltageProtocol protocol_;
    double e_k_;
    std::vector<NormalPrior> priors_;
};

} // namespace flexnoise
