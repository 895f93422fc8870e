#include "flexnoise/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "flexnoise/error.hpp"

namespace flexnoise {

Bounds Bounds::unbounded(Eigen::Index n)
{
    const double inf = std::numeric_limits<double>::infinity();
    return {VectorXd::Constant(n, -inf), VectorXd::Constant(n, inf)};
}

bool Bounds::contains(const VectorXd& x) const
{
    return x.size() == lower.size() && (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

VectorXd Bounds::project(const VectorXd& x) const
{
    return x.cwiseMax(lower).cwiseMin(upper);
}

VectorXd fd_gradient(const Objective& f, const VectorXd& x, double fx, double rel_step, const Bounds* bounds)
{
    const auto n = x.size();
    VectorXd g(n);
    VectorXd probe = x;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double h = rel_step * std::max(1.0, std::abs(x[i]));
        const bool room_up = !bounds || x[i] + h <= bounds->upper[i];
        const bool room_down = !bounds || x[i] - h >= bounds->lower[i];
        if (room_up && room_down) {
            probe[i] = x[i] + h;
            const double up = f(probe);
            probe[i] = x[i] - h;
            const double down = f(probe);
            g[i] = (up - down) / (2.0 * h);
        } else if (room_up) {
            probe[i] = x[i] + h;
            g[i] = (f(probe) - fx) / h;
        } else {
            probe[i] = x[i] - h;
            g[i] = (fx - f(probe)) / h;
        }
        probe[i] = x[i];
    }
    return g;
}

namespace {

// All arithmetic below minimizes g = -f.
struct Pair {
    VectorXd s;
    VectorXd y;
    double rho;
};

VectorXd two_loop(const std::deque<Pair>& memory, const VectorXd& grad, const VectorXd& free_mask)
{
    VectorXd q = grad.cwiseProduct(free_mask);
    std::vector<double> alpha(memory.size());
    for (std::size_t k = memory.size(); k-- > 0;) {
        const auto& m = memory[k];
        alpha[k] = m.rho * m.s.cwiseProduct(free_mask).dot(q);
        q -= alpha[k] * m.y.cwiseProduct(free_mask);
    }
    if (!memory.empty()) {
        const auto& last = memory.back();
        const VectorXd y = last.y.cwiseProduct(free_mask);
        const double yy = y.squaredNorm();
        if (yy > 0.0) {
            q *= last.s.cwiseProduct(free_mask).dot(y) / yy;
        }
    }
    for (std::size_t k = 0; k < memory.size(); ++k) {
        const auto& m = memory[k];
        const double beta = m.rho * m.y.cwiseProduct(free_mask).dot(q);
        q += (alpha[k] - beta) * m.s.cwiseProduct(free_mask);
    }
    return -q;
}

} // namespace

OptimizeResult optimize(const Objective& f, const VectorXd& x0, const std::optional<Bounds>& bounds,
                        OptimizeOptions options, GradientFn gradient)
{
    const auto n = x0.size();
    const Bounds box = bounds ? *bounds : Bounds::unbounded(n);
    if (box.lower.size() != n || box.upper.size() != n) {
        throw InputError("optimize: bounds dimension mismatch");
    }
    if (!box.contains(x0)) {
        throw InputError("optimize: starting point outside the bounds");
    }
    long evals = 0;
    auto neg = [&](const VectorXd& x) {
        ++evals;
        const double v = f(x);
        return std::isnan(v) ? std::numeric_limits<double>::infinity() : -v;
    };
    const Objective neg_obj = neg;
    auto neg_grad = [&](const VectorXd& x, double gx) -> VectorXd {
        if (gradient) {
            return -gradient(x, -gx);
        }
        return fd_gradient(neg_obj, x, gx, options.fd_rel_step, &box);
    };

    OptimizeResult result;
    VectorXd x = x0;
    double gx = neg(x);
    if (!std::isfinite(gx)) {
        throw InputError("optimize: objective is not finite at the starting point");
    }
    VectorXd grad = neg_grad(x, gx);
    std::deque<Pair> memory;
    int stall = 0;

    auto projected_norm = [&](const VectorXd& xx, const VectorXd& gg) {
        return (box.project(xx - gg) - xx).lpNorm<Eigen::Infinity>();
    };

    int iter = 0;
    for (; iter < options.max_iters; ++iter) {
        if (!grad.allFinite()) {
            result.message = "non-finite gradient";
            break;
        }
        if (projected_norm(x, grad) < options.grad_tol * std::max(1.0, std::abs(gx))) {
            result.converged = true;
            result.message = "projected gradient below tolerance";
            break;
        }
        VectorXd free_mask = VectorXd::Ones(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const bool at_lower = x[i] <= box.lower[i] && grad[i] > 0.0;
            const bool at_upper = x[i] >= box.upper[i] && grad[i] < 0.0;
            if (at_lower || at_upper) {
                free_mask[i] = 0.0;
            }
        }
        VectorXd dir = two_loop(memory, grad, free_mask);
        if (!(dir.dot(grad) < 0.0)) {
            memory.clear();
            dir = -grad.cwiseProduct(free_mask);
        }
        double step = memory.empty() ? std::min(1.0, 1.0 / std::max(dir.lpNorm<Eigen::Infinity>(), 1e-300)) : 1.0;

        bool moved = false;
        VectorXd x_new;
        double g_new = 0.0;
        for (int attempt = 0; attempt < 2 && !moved; ++attempt) {
            for (int ls = 0; ls < 50; ++ls) {
                x_new = box.project(x + step * dir);
                g_new = neg(x_new);
                if (std::isfinite(g_new) && g_new <= gx + 1e-4 * grad.dot(x_new - x)) {
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if (!moved && !memory.empty()) {
                memory.clear();
                dir = -grad.cwiseProduct(free_mask);
                step = std::min(1.0, 1.0 / std::max(dir.lpNorm<Eigen::Infinity>(), 1e-300));
            } else {
                break;
            }
        }
        if (!moved || (x_new - x).lpNorm<Eigen::Infinity>() == 0.0) {
            result.message = "line search failed to improve";
            // close enough counts as converged when the gradient is already small
            result.converged = projected_norm(x, grad) < 1e3 * options.grad_tol * std::max(1.0, std::abs(gx));
            break;
        }
        const VectorXd grad_new = neg_grad(x_new, g_new);
        const VectorXd s = x_new - x;
        const VectorXd y = grad_new - grad;
        const double sy = s.dot(y);
        if (sy > 1e-10 * s.norm() * y.norm()) {
            memory.push_back({s, y, 1.0 / sy});
            if (static_cast<int>(memory.size()) > options.memory) {
                memory.pop_front();
            }
        }
        const double decrease = gx - g_new;
        stall = decrease <= 1e-13 * std::max(1.0, std::abs(gx)) ? stall + 1 : 0;
        x = x_new;
        gx = g_new;
        grad = grad_new;
        if (stall >= 10) {
            result.message = "objective stalled";
            result.converged = projected_norm(x, grad) < 1e3 * options.grad_tol * std::max(1.0, std::abs(gx));
            ++iter;
            break;
        }
    }
    if (iter >= options.max_iters && result.message.empty()) {
        result.message = "iteration limit reached";
    }
    result.x = x;
    result.value = -gx;
    result.iterations = iter;
    result.evaluations = evals;
    return result;
}

} // namespace flexnoise
