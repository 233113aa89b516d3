#pragma once

// Adaptive Dormand-Prince 5(4) integrator with cubic Hermite dense output.
//
// The right-hand side returns std::nullopt when the state is not admissible
// (typically: the point left the chart domain). The driver then shrinks the
// step; once the step is below the domain resolution the run stops with
// OdeStop::invalid_state, so domain exits are located to within that
// resolution.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace staticgeo::ode {

using Vec = Eigen::VectorXd;

struct OdeOptions {
    double rtol = 1e-10;
    double atol = 1e-10;
    double h_init = 0.0;   // 0 selects an automatic first step
    double h_min = 1e-14;  // error-driven steps below this are a stiffness failure
    double h_max = std::numeric_limits<double>::infinity();
    double domain_resolution = 1e-12;  // relative to max(1, |s|)
    long max_steps = 20'000'000;
    // Optional per-component factors on atol, evaluated at the step start.
    std::function<void(const Vec& y, Vec& w)> atol_weights;
};

enum class OdeStop { reached_end, invalid_state, observer_stop, step_underflow, max_steps };

/// One accepted node of a solution: parameter, state and its derivative.
struct OdeNode {
    double s;
    Vec y;
    Vec f;
};

/// Cubic Hermite interpolant between two accepted nodes.
inline Vec hermite(const OdeNode& a, const OdeNode& b, double s) {
    const double h = b.s - a.s;
    if (h == 0.0) return a.y;
    const double th = (s - a.s) / h;
    const double th2 = th * th;
    const double th3 = th2 * th;
    const double h00 = 2 * th3 - 3 * th2 + 1;
    const double h10 = th3 - 2 * th2 + th;
    const double h01 = -2 * th3 + 3 * th2;
    const double h11 = th3 - th2;
    return h00 * a.y + (h10 * h) * a.f + h01 * b.y + (h11 * h) * b.f;
}

/// Derivative of the cubic Hermite interpolant.
inline Vec hermite_derivative(const OdeNode& a, const OdeNode& b, double s) {
    const double h = b.s - a.s;
    if (h == 0.0) return a.f;
    const double th = (s - a.s) / h;
    const double th2 = th * th;
    const double d00 = (6 * th2 - 6 * th) / h;
    const double d10 = 3 * th2 - 4 * th + 1;
    const double d01 = (-6 * th2 + 6 * th) / h;
    const double d11 = 3 * th2 - 2 * th;
    return d00 * a.y + d10 * a.f + d01 * b.y + d11 * b.f;
}

/// Locate the interval of a sorted node list containing s and interpolate.
inline Vec dense_eval(const std::vector<OdeNode>& nodes, double s) {
    if (nodes.size() == 1 || s <= nodes.front().s) return nodes.front().y;
    if (s >= nodes.back().s) return nodes.back().y;
    auto it = std::upper_bound(nodes.begin(), nodes.end(), s,
                               [](double v, const OdeNode& n) { return v < n.s; });
    const auto& b = *it;
    const auto& a = *(it - 1);
    return hermite(a, b, s);
}

struct OdeResult {
    OdeStop stop = OdeStop::reached_end;
    double s_stop = 0.0;  // last accepted parameter
    long steps = 0;
    long rejected = 0;
};

namespace detail {
// Dormand & Prince (1980) coefficients.
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
}  // namespace detail

/// Integrate y' = rhs(s, y) from (s0, y0) towards s_end (s_end > s0).
///
/// `observer(const OdeNode&)` is called for the initial node and after every
/// accepted step; returning false stops the run with OdeStop::observer_stop.
template <class Rhs, class Observer>
OdeResult integrate(Rhs&& rhs, double s0, const Vec& y0, double s_end, const OdeOptions& opt,
                    Observer&& observer) {
    using namespace detail;
    OdeResult res;
    res.s_stop = s0;

    std::optional<Vec> f0 = rhs(s0, y0);
    if (!f0) {
        res.stop = OdeStop::invalid_state;
        return res;
    }
    OdeNode cur{s0, y0, *f0};
    if (!observer(cur)) {
        res.stop = OdeStop::observer_stop;
        return res;
    }

    Vec w = Vec::Ones(y0.size());
    auto err_norm = [&](const Vec& y, const Vec& ynew, const Vec& err) {
        if (opt.atol_weights) opt.atol_weights(y, w);
        double acc = 0.0;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            const double sc = opt.atol * w[i] + opt.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
            const double r = err[i] / sc;
            acc += r * r;
        }
        return std::sqrt(acc / static_cast<double>(y.size()));
    };

    double h = opt.h_init;
    if (h <= 0.0) {
        // Hairer-Norsett-Wanner starting step heuristic.
        double d0 = 0, d1 = 0;
        for (Eigen::Index i = 0; i < y0.size(); ++i) {
            const double sc = opt.atol + opt.rtol * std::abs(y0[i]);
            d0 += (y0[i] / sc) * (y0[i] / sc);
            d1 += (cur.f[i] / sc) * (cur.f[i] / sc);
        }
        d0 = std::sqrt(d0 / y0.size());
        d1 = std::sqrt(d1 / y0.size());
        h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h = std::min(h, s_end - s0);
    }
    h = std::min(h, opt.h_max);

    const double safety = 0.9, fac_min = 0.2, fac_max = 5.0;
    bool last_rejected = false;

    while (cur.s < s_end) {
        if (res.steps >= opt.max_steps) {
            res.stop = OdeStop::max_steps;
            return res;
        }
        bool hit_end = false;
        if (cur.s + h >= s_end) {
            h = s_end - cur.s;
            hit_end = true;
        }
        const double s = cur.s;
        const Vec& y = cur.y;
        const Vec& k1 = cur.f;

        std::optional<Vec> k2, k3, k4, k5, k6, k7;
        Vec y5;
        bool admissible = true;
        do {
            if (!(k2 = rhs(s + c2 * h, Vec(y + h * a21 * k1)))) { admissible = false; break; }
            if (!(k3 = rhs(s + c3 * h, Vec(y + h * (a31 * k1 + a32 * *k2))))) { admissible = false; break; }
            if (!(k4 = rhs(s + c4 * h, Vec(y + h * (a41 * k1 + a42 * *k2 + a43 * *k3))))) { admissible = false; break; }
            if (!(k5 = rhs(s + c5 * h, Vec(y + h * (a51 * k1 + a52 * *k2 + a53 * *k3 + a54 * *k4))))) { admissible = false; break; }
            if (!(k6 = rhs(s + h, Vec(y + h * (a61 * k1 + a62 * *k2 + a63 * *k3 + a64 * *k4 + a65 * *k5))))) { admissible = false; break; }
            y5 = y + h * (b1 * k1 + b3 * *k3 + b4 * *k4 + b5 * *k5 + b6 * *k6);
            if (!y5.allFinite()) { admissible = false; break; }
            if (!(k7 = rhs(s + h, y5))) { admissible = false; break; }
        } while (false);

        if (!admissible) {
            ++res.rejected;
            h *= 0.5;
            if (h < opt.domain_resolution * std::max(1.0, std::abs(s))) {
                res.stop = OdeStop::invalid_state;
                res.s_stop = cur.s;
                return res;
            }
            last_rejected = true;
            continue;
        }

        const Vec err = h * (e1 * k1 + e3 * *k3 + e4 * *k4 + e5 * *k5 + e6 * *k6 + e7 * *k7);
        const double en = err_norm(y, y5, err);

        if (en <= 1.0) {
            cur = OdeNode{hit_end ? s_end : s + h, y5, *k7};
            ++res.steps;
            res.s_stop = cur.s;
            if (!observer(cur)) {
                res.stop = OdeStop::observer_stop;
                return res;
            }
            double fac = (en == 0.0) ? fac_max : safety * std::pow(en, -0.2);
            fac = std::clamp(fac, fac_min, last_rejected ? 1.0 : fac_max);
            h = std::min(h * fac, opt.h_max);
            last_rejected = false;
        } else {
            ++res.rejected;
            double fac = std::isfinite(en) ? std::max(fac_min, safety * std::pow(en, -0.2)) : fac_min;
            h *= fac;
            last_rejected = true;
            if (h < opt.h_min) {
                res.stop = OdeStop::step_underflow;
                res.s_stop = cur.s;
                return res;
            }
        }
    }
    res.stop = OdeStop::reached_end;
    res.s_stop = cur.s;
    return res;
}

}  // namespace staticgeo::ode
