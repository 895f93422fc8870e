#include "flexnoise/priors.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "flexnoise/error.hpp"

namespace flexnoise {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

} // namespace

NormalPrior make_normal_prior(double mean, double spread, PriorScale scale)
{
    if (!(spread > 0.0)) {
        throw InputError("normal prior: spread must be positive");
    }
    return NormalPrior{mean, scale == PriorScale::Variance ? std::sqrt(spread) : spread};
}

void validate_prior(const PriorSpec& spec)
{
    std::visit(overloaded{
                   [](const FlatPrior&) {},
                   [](const NormalPrior& p) {
                       if (!(p.sd > 0.0) || !std::isfinite(p.mean)) {
                           throw InputError("normal prior: need finite mean and sd > 0");
                       }
                   },
                   [](const BetaPrior& p) {
                       if (!(p.a > 0.0 && p.b > 0.0)) {
                           throw InputError("beta prior: need a > 0 and b > 0");
                       }
                   },
                   [](const ShiftedGammaPrior& p) {
                       if (!(p.shape > 0.0 && p.rate > 0.0) || !std::isfinite(p.shift)) {
                           throw InputError("shifted gamma prior: need shape > 0 and rate > 0");
                       }
                   },
                   [](const UniformPrior& p) {
                       if (!(p.lower < p.upper)) {
                           throw InputError("uniform prior: need lower < upper");
                       }
                   },
               },
               spec);
}

double log_prior_density(const PriorSpec& spec, double x)
{
    if (std::isnan(x)) {
        return kNegInf;
    }
    return std::visit(
        overloaded{
            [](const FlatPrior&) { return 0.0; },
            [x](const NormalPrior& p) {
                const double z = (x - p.mean) / p.sd;
                return -0.5 * z * z - std::log(p.sd) - 0.5 * std::log(2.0 * std::numbers::pi);
            },
            [x](const BetaPrior& p) {
                if (x < 0.0 || x > 1.0) {
                    return kNegInf;
                }
                const double norm = std::lgamma(p.a + p.b) - std::lgamma(p.a) - std::lgamma(p.b);
                const double lo = p.a == 1.0 ? 0.0 : (p.a - 1.0) * std::log(x);
                const double hi = p.b == 1.0 ? 0.0 : (p.b - 1.0) * std::log1p(-x);
                return norm + lo + hi;
            },
            [x](const ShiftedGammaPrior& p) {
                const double u = x - p.shift;
                if (!(u > 0.0)) {
                    return kNegInf;
                }
                return p.shape * std::log(p.rate) - std::lgamma(p.shape)
                       + (p.shape - 1.0) * std::log(u) - p.rate * u;
            },
            [x](const UniformPrior& p) {
                if (x < p.lower || x > p.upper) {
                    return kNegInf;
                }
                return -std::log(p.upper - p.lower);
            },
        },
        spec);
}

std::string describe_prior(const PriorSpec& spec)
{
    std::ostringstream os;
    std::visit(overloaded{
                   [&](const FlatPrior&) { os << "flat"; },
                   [&](const NormalPrior& p) { os << "normal(" << p.mean << ", sd=" << p.sd << ")"; },
                   [&](const BetaPrior& p) { os << "beta(" << p.a << ", " << p.b << ")"; },
                   [&](const ShiftedGammaPrior& p) {
                       os << "shifted-gamma(shape=" << p.shape << ", rate=" << p.rate
                          << ", shift=" << p.shift << ")";
                   },
                   [&](const UniformPrior& p) { os << "uniform(" << p.lower << ", " << p.upper << ")"; },
               },
               spec);
    return os.str();
}

double to_unconstrained(Transform t, double theta)
{
    if (t == Transform::Identity) {
        return theta;
    }
    if (!(theta > 0.0)) {
        throw InputError("log transform requires a strictly positive value");
    }
    return std::log(theta);
}

double to_constrained(Transform t, double phi)
{
    return t == Transform::Identity ? phi : std::exp(phi);
}

Eigen::VectorXd transform_to_unconstrained(std::span<const ParameterSpec> params,
                                           const Eigen::VectorXd& theta)
{
    if (static_cast<std::size_t>(theta.size()) != params.size()) {
        throw InputError("transform: parameter vector has the wrong length");
    }
    Eigen::VectorXd phi(theta.size());
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
        phi[k] = to_unconstrained(params[static_cast<std::size_t>(k)].transform, theta[k]);
    }
    return phi;
}

Eigen::VectorXd transform_to_constrained(std::span<const ParameterSpec> params,
                                         const Eigen::VectorXd& phi)
{
    if (static_cast<std::size_t>(phi.size()) != params.size()) {
        throw InputError("transform: parameter vector has the wrong length");
    }
    Eigen::VectorXd theta(phi.size());
    for (Eigen::Index k = 0; k < phi.size(); ++k) {
        theta[k] = to_constrained(params[static_cast<std::size_t>(k)].transform, phi[k]);
    }
    return theta;
}

double log_jacobian(std::span<const ParameterSpec> params, const Eigen::VectorXd& phi)
{
    double total = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k].transform == Transform::Log) {
            total += phi[static_cast<Eigen::Index>(k)];
        }
    }
    return total;
}

double log_prior_unconstrained(std::span<const ParameterSpec> params, const Eigen::VectorXd& phi)
{
    double total = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        const auto& p = params[k];
        const double u = phi[static_cast<Eigen::Index>(k)];
        if (p.prior_space == PriorSpace::Unconstrained) {
            total += log_prior_density(p.prior, u);
        } else {
            total += log_prior_density(p.prior, to_constrained(p.transform, u));
            if (p.transform == Transform::Log) {
                total += u;
            }
        }
        if (total == kNegInf) {
            return total;
        }
    }
    return total;
}

} // namespace flexnoise
