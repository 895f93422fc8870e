#pragma once

#include <variant>
#include <vector>

#include "flexnoise/dataset.hpp"
#include "flexnoise/mcmc.hpp"

namespace flexnoise {

struct IidSpec {
    double sigma = 1.0;
};

/// Stationary AR(1) with marginal sd sigma.
struct Ar1Spec {
    double rho = 0.0;
    double sigma = 1.0;
};

/// y = f + f^eta v with v ~ N(0, sigma^2).
struct MultiplicativeSpec {
    double eta = 0.0;
    double sigma = 1.0;
};

using SegmentSpec = std::variant<IidSpec, Ar1Spec, MultiplicativeSpec>;

struct BlockSegment {
    Eigen::Index length = 0;
    SegmentSpec spec;
};

struct BlockedSpec {
    std::vector<BlockSegment> segments;
};

using NoiseSpec = std::variant<IidSpec, Ar1Spec, MultiplicativeSpec, BlockedSpec>;

void validate(const NoiseSpec& spec, Eigen::Index n);

/// Noisy observations of `trajectory`.
VectorXd generate(const VectorXd& trajectory, const NoiseSpec& spec, Rng& rng);

/// True per-point sd and lag-1 correlation of the generated noise.
struct TrueProfile {
    VectorXd sd;
    VectorXd lag1;
};
TrueProfile true_profile(const VectorXd& trajectory, const NoiseSpec& spec);

std::string describe(const NoiseSpec& spec);

// Regimes of the synthetic studies.
struct LogisticTruth {
    double r = 0.08;
    double K = 50.0;
    double y0 = 2.0;
    double t_end = 100.0;
};

NoiseSpec ar1_regime(double rho = 0.8, double sigma = 3.0);
NoiseSpec multiplicative_regime(double eta = 2.0, double sigma = 0.0075);
/// Five blocks of `block_length`: IID 3, AR(1) 0.85/3, IID 3, IID 30, IID 3.
NoiseSpec five_regime(Eigen::Index block_length = 100);

} // namespace flexnoise
