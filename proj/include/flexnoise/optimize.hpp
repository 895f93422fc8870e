#pragma once

#include <functional>
#include <optional>
#include <string>

#include <Eigen/Dense>

namespace flexnoise {

using Eigen::MatrixXd;
using Eigen::VectorXd;

using Objective = std::function<double(const VectorXd&)>;
/// Gradient of the objective at x, given f(x).
using GradientFn = std::function<VectorXd(const VectorXd&, double)>;

struct Bounds {
    VectorXd lower;
    VectorXd upper;

    static Bounds unbounded(Eigen::Index n);
    bool contains(const VectorXd& x) const;
    VectorXd project(const VectorXd& x) const;
};

struct OptimizeOptions {
    int max_iters = 1000;
    /// Stop when the projected gradient's max-norm falls below grad_tol * max(1, |f|).
    double grad_tol = 1e-6;
    int memory = 10;
    double fd_rel_step = 1e-6;
};

struct OptimizeResult {
    VectorXd x;
    double value = 0.0;
    bool converged = false;
    int iterations = 0;
    long evaluations = 0;
    std::string message;
};

/// Central differences with step rel_step * max(1, |x_i|); one-sided next to a bound.
VectorXd fd_gradient(const Objective& f, const VectorXd& x, double fx, double rel_step = 1e-6,
                     const Bounds* bounds = nullptr);

/// Maximizes f with a projected limited-memory BFGS method. The gradient defaults to
/// central finite differences.
OptimizeResult optimize(const Objective& f, const VectorXd& x0, const std::optional<Bounds>& bounds = std::nullopt,
                        OptimizeOptions options = {}, GradientFn gradient = {});

} // namespace flexnoise
