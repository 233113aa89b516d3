#pragma once

// Limited-memory BFGS with a backtracking (Armijo) line search.
//
// The objective may refuse a point by returning std::nullopt (for instance a
// curve node outside the chart domain); the line search treats refused points
// like an insufficient decrease and backtracks. This keeps every accepted
// iterate admissible.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <vector>

namespace staticgeo::opt {

using Vec = Eigen::VectorXd;

struct LbfgsOptions {
    int memory = 12;
    int max_iter = 20000;
    double grad_tol = 1e-10;  // on the max-norm of the gradient
    double armijo = 1e-4;
    int max_backtracks = 60;
    int stall_limit = 8;  // consecutive non-decreasing iterations before giving up
};

enum class LbfgsStatus { converged, max_iter, line_search_failed, stopped };

struct LbfgsResult {
    Vec x;
    double f = 0.0;
    Vec grad;
    int iterations = 0;
    LbfgsStatus status = LbfgsStatus::max_iter;
};

/// Minimize `objective(x, grad) -> std::optional<double>` from x0.
///
/// `monitor(iteration, x, f, grad)` runs after every accepted step; returning
/// false ends the run with LbfgsStatus::stopped.
template <class Objective, class Monitor>
LbfgsResult lbfgs(Objective&& objective, Vec x0, const LbfgsOptions& opts, Monitor&& monitor) {
    LbfgsResult out;
    out.x = std::move(x0);
    out.grad.resize(out.x.size());
    const auto f0 = objective(out.x, out.grad);
    if (!f0 || !std::isfinite(*f0)) {
        out.status = LbfgsStatus::line_search_failed;
        out.f = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    out.f = *f0;

    std::deque<Vec> s_hist, y_hist;
    std::deque<double> rho_hist;
    Vec g_new(out.x.size());
    Vec x_new(out.x.size());
    int stall = 0;

    for (int it = 0; it < opts.max_iter; ++it) {
        out.iterations = it;
        if (out.grad.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
            out.status = LbfgsStatus::converged;
            return out;
        }

        // Two-loop recursion.
        Vec q = out.grad;
        const std::size_t m = s_hist.size();
        std::vector<double> alpha(m);
        for (std::size_t k = m; k-- > 0;) {
            alpha[k] = rho_hist[k] * s_hist[k].dot(q);
            q -= alpha[k] * y_hist[k];
        }
        double gamma = 1.0;
        if (m > 0) gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        Vec dir = gamma * q;
        for (std::size_t k = 0; k < m; ++k) {
            const double beta = rho_hist[k] * y_hist[k].dot(dir);
            dir += (alpha[k] - beta) * s_hist[k];
        }
        dir = -dir;

        double slope = dir.dot(out.grad);
        if (!(slope < 0.0)) {
            // Lost descent: restart from steepest descent.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            dir = -out.grad;
            slope = dir.dot(out.grad);
        }

        double step = 1.0;
        if (m == 0) step = std::min(1.0, 1.0 / std::max(out.grad.lpNorm<Eigen::Infinity>(), 1e-300));

        bool accepted = false;
        double f_new = 0.0;
        for (int bt = 0; bt < opts.max_backtracks; ++bt) {
            x_new = out.x + step * dir;
            const auto fv = objective(x_new, g_new);
            if (fv && std::isfinite(*fv) && *fv <= out.f + opts.armijo * step * slope &&
                g_new.allFinite()) {
                f_new = *fv;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (!s_hist.empty()) {
                // Retry once from steepest descent with a fresh memory.
                s_hist.clear();
                y_hist.clear();
                rho_hist.clear();
                ++stall;
                if (stall > opts.stall_limit) {
                    out.status = LbfgsStatus::line_search_failed;
                    return out;
                }
                continue;
            }
            out.status = LbfgsStatus::line_search_failed;
            return out;
        }

        Vec s = x_new - out.x;
        Vec y = g_new - out.grad;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > opts.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        stall = (f_new < out.f) ? 0 : stall + 1;
        out.x.swap(x_new);
        out.grad.swap(g_new);
        out.f = f_new;
        if (stall > opts.stall_limit) {
            out.status = LbfgsStatus::line_search_failed;
            out.iterations = it + 1;
            return out;
        }
        if (!monitor(it + 1, out.x, out.f, out.grad)) {
            out.status = LbfgsStatus::stopped;
            out.iterations = it + 1;
            return out;
        }
    }
    out.iterations = opts.max_iter;
    out.status = out.grad.lpNorm<Eigen::Infinity>() <= opts.grad_tol ? LbfgsStatus::converged
                                                                      : LbfgsStatus::max_iter;
    return out;
}

template <class Objective>
LbfgsResult lbfgs(Objective&& objective, Vec x0, const LbfgsOptions& opts) {
    return lbfgs(std::forward<Objective>(objective), std::move(x0), opts,
                 [](int, const Vec&, double, const Vec&) { return true; });
}

/// Damped Gauss-Newton (Levenberg-Marquardt) for a square or overdetermined
/// residual system. `residual(x) -> std::optional<Vec>`; the Jacobian comes
/// from forward differences.
struct LmOptions {
    int max_iter = 60;
    double tol = 1e-11;       // stop when the residual max-norm is below this
    double fd_rel = 1e-7;     // finite-difference step, relative to max(1, |x_i|)
    double lambda0 = 1e-3;
    bool central = false;     // central differences for the Jacobian
};

struct LmResult {
    Vec x;
    Vec r;
    double miss = std::numeric_limits<double>::infinity();  // max-norm of r
    int iterations = 0;
    bool converged = false;
};

template <class Residual>
LmResult levenberg_marquardt(Residual&& residual, Vec x0, const LmOptions& opts) {
    LmResult out;
    out.x = std::move(x0);
    auto r0 = residual(out.x);
    if (!r0 || !r0->allFinite()) return out;
    out.r = *r0;
    out.miss = out.r.lpNorm<Eigen::Infinity>();
    double lambda = opts.lambda0;
    const Eigen::Index n = out.x.size();
    for (int it = 0; it < opts.max_iter; ++it) {
        out.iterations = it;
        if (out.miss <= opts.tol) {
            out.converged = true;
            return out;
        }
        Eigen::MatrixXd jac(out.r.size(), n);
        bool jac_ok = true;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double hj = opts.fd_rel * std::max(1.0, std::abs(out.x[j]));
            Vec xp = out.x;
            xp[j] += hj;
            auto rp = residual(xp);
            if (opts.central && rp && rp->allFinite()) {
                Vec xm = out.x;
                xm[j] -= hj;
                if (auto rm = residual(xm); rm && rm->allFinite()) {
                    jac.col(j) = (*rp - *rm) / (2 * hj);
                    continue;
                }
            }
            if (!rp || !rp->allFinite()) {
                xp[j] = out.x[j] - hj;
                rp = residual(xp);
                if (!rp || !rp->allFinite()) {
                    jac_ok = false;
                    break;
                }
                jac.col(j) = (out.r - *rp) / hj;
            } else {
                jac.col(j) = (*rp - out.r) / hj;
            }
        }
        if (!jac_ok) return out;
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Vec jtr = jac.transpose() * out.r;
        bool improved = false;
        for (int tries = 0; tries < 30; ++tries) {
            Eigen::MatrixXd a = jtj;
            a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
            const Vec dx = a.ldlt().solve(-jtr);
            if (!dx.allFinite()) {
                lambda *= 10;
                continue;
            }
            Vec xt = out.x + dx;
            auto rt = residual(xt);
            if (rt && rt->allFinite() && rt->norm() < out.r.norm()) {
                out.x = std::move(xt);
                out.r = std::move(*rt);
                out.miss = out.r.lpNorm<Eigen::Infinity>();
                lambda = std::max(lambda * 0.2, 1e-12);
                improved = true;
                break;
            }
            lambda *= 10;
        }
        if (!improved) break;
    }
    out.converged = out.miss <= opts.tol;
    return out;
}

}  // namespace staticgeo::opt
