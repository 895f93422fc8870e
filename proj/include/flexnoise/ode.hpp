#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace flexnoise {

using OdeRhs = std::function<void(double t, const std::vector<double>& y, std::vector<double>& dydt)>;

struct OdeTolerances {
    double rtol = 1e-8;
    double atol = 1e-10;
};

/// Adaptive Dormand-Prince 5(4) integration with dense output.
///
/// `times` must be strictly increasing; row k of the result is the state at times[k],
/// with row 0 equal to `y0`. Throws NumericalError when the derivative becomes
/// non-finite or the step size collapses.
Eigen::MatrixXd ode_integrate(const OdeRhs& rhs, const Eigen::VectorXd& y0,
                              const Eigen::VectorXd& times, OdeTolerances tol = {});

} // namespace flexnoise
