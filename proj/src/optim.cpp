#include "glf/optim.hpp"

#include <cmath>

namespace glf::optim {

BfgsResult minimize_bfgs(const Objective& objective, Vector x0, const BfgsOptions& options)
{
    const Index n = x0.size();
    BfgsResult res;
    res.x = std::move(x0);
    Vector grad(n);
    res.value = objective(res.x, grad);
    Matrix h = Matrix::Identity(n, n);
    bool reset_once = false;
    int stalled = 0;
    auto tolerance = [&] { return options.grad_tol * std::max(1.0, std::abs(res.value)); };

    for (res.iterations = 0; res.iterations < options.max_iter; ++res.iterations) {
        res.grad_norm = grad.norm();
        if (res.grad_norm < tolerance()) {
            res.converged = true;
            return res;
        }
        Vector dir = -h * grad;
        double slope = dir.dot(grad);
        if (!(slope < 0.0)) {
            h.setIdentity();
            dir = -grad;
            slope = -grad.squaredNorm();
        }
        const double inf_norm = dir.cwiseAbs().maxCoeff();
        double step = inf_norm > options.max_step ? options.max_step / inf_norm : 1.0;

        Vector x_new(n);
        Vector grad_new(n);
        double f_new = 0.0;
        bool accepted = false;
        for (int k = 0; k < 60; ++k) {
            x_new = res.x + step * dir;
            f_new = objective(x_new, grad_new);
            if (std::isfinite(f_new) && f_new <= res.value + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (reset_once) {
                break;
            }
            reset_once = true;
            h.setIdentity();
            continue;
        }
        reset_once = false;

        const Vector s = x_new - res.x;
        const Vector y = grad_new - grad;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            const double rho = 1.0 / sy;
            const Vector hy = h * y;
            h += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) -
                 rho * (hy * s.transpose() + s * hy.transpose());
        }
        stalled = (res.value - f_new) <= 1e-15 * std::max(1.0, std::abs(res.value)) ? stalled + 1 : 0;
        res.x = std::move(x_new);
        grad = grad_new;
        res.value = f_new;
        if (stalled >= 20) {
            break;
        }
    }
    res.grad_norm = grad.norm();
    res.converged = res.grad_norm < tolerance();
    return res;
}

}  // namespace glf::optim
