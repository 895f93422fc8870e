#pragma once

#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace flexnoise {

struct FlatPrior {};

struct NormalPrior {
    double mean = 0.0;
    double sd = 1.0;
};

struct BetaPrior {
    double a = 1.0;
    double b = 1.0;
};

/// X - shift ~ Gamma(shape, rate).
struct ShiftedGammaPrior {
    double shape = 1.0;
    double rate = 1.0;
    double shift = 0.0;
};

struct UniformPrior {
    double lower = 0.0;
    double upper = 1.0;
};

using PriorSpec = std::variant<FlatPrior, NormalPrior, BetaPrior, ShiftedGammaPrior, UniformPrior>;

/// How the second argument of N(m, v) is read.
enum class PriorScale { StandardDeviation, Variance };

NormalPrior make_normal_prior(double mean, double spread,
                              PriorScale scale = PriorScale::StandardDeviation);

/// Throws InputError when hyperparameters are out of range.
void validate_prior(const PriorSpec& spec);

/// Log density at x; -inf outside the support. Flat returns 0.
double log_prior_density(const PriorSpec& spec, double x);

std::string describe_prior(const PriorSpec& spec);

/// Map between the sampler's unconstrained coordinate and the model's coordinate.
enum class Transform { Identity, Log };

/// Whether the prior density is declared on the model coordinate (a Jacobian is then
/// added when sampling in unconstrained space) or directly on the unconstrained one.
enum class PriorSpace { Constrained, Unconstrained };

struct ParameterSpec {
    std::string name;
    Transform transform = Transform::Identity;
    PriorSpec prior = FlatPrior{};
    PriorSpace prior_space = PriorSpace::Constrained;
};

double to_unconstrained(Transform t, double theta);
double to_constrained(Transform t, double phi);

Eigen::VectorXd transform_to_unconstrained(std::span<const ParameterSpec> params,
                                           const Eigen::VectorXd& theta);
Eigen::VectorXd transform_to_constrained(std::span<const ParameterSpec> params,
                                         const Eigen::VectorXd& phi);

/// Sum of phi_k over log-transformed coordinates.
double log_jacobian(std::span<const ParameterSpec> params, const Eigen::VectorXd& phi);

/// Joint prior in unconstrained coordinates: each prior evaluated in its declared space,
/// plus phi_k for log coordinates whose prior lives on the constrained space.
double log_prior_unconstrained(std::span<const ParameterSpec> params, const Eigen::VectorXd& phi);

} // namespace flexnoise
