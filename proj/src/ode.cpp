#include "flexnoise/ode.hpp"

#include <cmath>
#include <string>

#include <boost/numeric/odeint.hpp>

#include "flexnoise/dataset.hpp"
#include "flexnoise/error.hpp"

namespace flexnoise {

namespace odeint = boost::numeric::odeint;

Eigen::MatrixXd ode_integrate(const OdeRhs& rhs, const Eigen::VectorXd& y0,
                              const Eigen::VectorXd& times, OdeTolerances tol)
{
    if (times.size() == 0) {
        return Eigen::MatrixXd(0, y0.size());
    }
    require_increasing(times, "ode_integrate");
    if (!(tol.rtol > 0.0) || !(tol.atol > 0.0)) {
        throw InputError("ode_integrate: tolerances must be positive");
    }

    const auto dim = static_cast<std::size_t>(y0.size());
    Eigen::MatrixXd out(times.size(), y0.size());
    out.row(0) = y0.transpose();
    if (times.size() == 1) {
        return out;
    }

    std::vector<double> state(y0.data(), y0.data() + y0.size());
    const double span = times[times.size() - 1] - times[0];
    const double min_dt = 1e-14 * std::max(1.0, std::abs(times[times.size() - 1]));

    auto system = [&](const std::vector<double>& y, std::vector<double>& dydt, double t) {
        dydt.resize(dim);
        rhs(t, y, dydt);
        for (std::size_t i = 0; i < dim; ++i) {
            if (!std::isfinite(dydt[i])) {
                throw NumericalError("ode_integrate: non-finite derivative at t=" + std::to_string(t));
            }
        }
    };

    Eigen::Index row = 0;
    auto observer = [&](const std::vector<double>& y, double t) {
        (void)t;
        if (row < out.rows()) {
            for (std::size_t i = 0; i < dim; ++i) {
                out(row, static_cast<Eigen::Index>(i)) = y[i];
            }
        }
        ++row;
    };

    auto stepper = odeint::make_controlled(tol.atol, tol.rtol, odeint::runge_kutta_dopri5<std::vector<double>>());
    const double dt0 = std::max(span * 1e-4, min_dt * 10);
    try {
        odeint::integrate_times(stepper, system, state, times.data(), times.data() + times.size(), dt0,
                                observer, odeint::max_step_checker(200000));
    } catch (const odeint::step_adjustment_error& e) {
        throw NumericalError(std::string("ode_integrate: step size underflow (") + e.what() + ")");
    } catch (const odeint::no_progress_error& e) {
        throw NumericalError(std::string("ode_integrate: no progress (") + e.what() + ")");
    } catch (const odeint::odeint_error& e) {
        throw NumericalError(std::string("ode_integrate: ") + e.what());
    }
    if (row != times.size()) {
        throw NumericalError("ode_integrate: integration stopped early");
    }
    return out;
}

} // namespace flexnoise
