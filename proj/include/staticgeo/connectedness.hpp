#pragma once

// Two-point connection of (t0, x0) and (t1, x1) by critical points of
//     J(x) = 1/2 int_0^1 g_S(x', x') ds - dt^2 / (2 int_0^1 1/beta(x) ds)
// over curves x : [0,1] -> S with fixed ends, dt = t1 - t0.
//
// At a critical point the time component follows from beta t' = lambda and
// t(1) - t(0) = dt:
//     lambda = dt / int_0^1 1/beta,   t(s) = t0 + lambda int_0^s 1/beta.
// On an exact geodesic g_S(x', x') - lambda^2/beta = C is constant, so the
// critical value is J = C/2.

#include "staticgeo/error.hpp"
#include "staticgeo/manifold.hpp"
#include "staticgeo/optimize.hpp"
#include "staticgeo/parallel.hpp"
#include "staticgeo/random.hpp"
#include "staticgeo/spacetime.hpp"

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace staticgeo {

/// Quadrature along one straight segment, parameter in [0,1]: a fixed
/// Gauss-Legendre rule with 1 (midpoint), 2 or 3 points, or (points = 0)
/// adaptive Gauss-Kronrod 7/15 bisection to near round-off.
struct SegmentRule {
    std::vector<double> c;
    std::vector<double> w;
    bool adaptive = false;

    static SegmentRule gauss(int points) {
        switch (points) {
            case 0: return {{}, {}, true};
            case 1: return {{0.5}, {1.0}};
            case 2: {
                const double d = 0.5 / std::sqrt(3.0);
                return {{0.5 - d, 0.5 + d}, {0.5, 0.5}};
            }
            case 3: {
                const double d = 0.5 * std::sqrt(0.6);
                return {{0.5 - d, 0.5, 0.5 + d}, {5.0 / 18, 8.0 / 18, 5.0 / 18}};
            }
            default: throw ValidationError("connectedness", "SegmentRule", "quadrature points must be 0, 1, 2 or 3");
        }
    }
};

struct ActionOptions {
    int quad_points = 0;  // per segment, for the integrals of 1/beta and beta (0 = adaptive)
};

struct ActionEvaluation {
    double J = 0.0;
    double kinetic = 0.0;
    double inv_beta_integral = 0.0;
    double delta_t = 0.0;
};

namespace detail {

inline void require_curve_in_domain(const StaticSpacetime& st, const SliceCurve& c, const char* op) {
    for (const auto& p : c.nodes()) st.chart().require_in_domain(p, op);
}

struct SegmentIntegral {
    double value = 0.0;
    Vec grad_a;  // derivative wrt the segment start
    Vec grad_b;  // derivative wrt the segment end
};

/// int_0^1 f(beta(a + u (b - a))) du with its endpoint gradients.
template <class F, class DF>
SegmentIntegral segment_integral(const StaticSpacetime& st, const Vec& a, const Vec& b, const SegmentRule& rule, F f,
                                 DF df, bool want_grad) {
    SegmentIntegral out{0.0, Vec::Zero(a.size()), Vec::Zero(a.size())};
    const Vec d = b - a;
    auto add = [&](double u, double w, SegmentIntegral& acc) {
        const Vec y = a + u * d;
        const double bv = st.beta_raw(y);
        acc.value += w * f(bv);
        if (want_grad) {
            const Vec g = w * df(bv) * st.beta_grad_at(y);
            acc.grad_a += (1.0 - u) * g;
            acc.grad_b += u * g;
        }
    };
    if (!rule.adaptive) {
        for (std::size_t q = 0; q < rule.c.size(); ++q) add(rule.c[q], rule.w[q], out);
        return out;
    }
    using boost::math::quadrature::gauss;
    using boost::math::quadrature::gauss_kronrod;
    const auto& kx = gauss_kronrod<double, 15>::abscissa();
    const auto& kw = gauss_kronrod<double, 15>::weights();
    const auto& gw = gauss<double, 7>::weights();
    // Recursive bisection; the Gauss nodes are the even Kronrod nodes.
    auto piece = [&](auto&& self, double u0, double u1, int depth, double tol) -> void {
        const double mid = 0.5 * (u0 + u1), half = 0.5 * (u1 - u0);
        SegmentIntegral k{0.0, Vec::Zero(a.size()), Vec::Zero(a.size())};
        double gsum = 0.0;
        for (std::size_t i = 0; i < kx.size(); ++i) {
            const int reps = kx[i] == 0.0 ? 1 : 2;
            for (int r = 0; r < reps; ++r) {
                const double u = mid + (r == 0 ? 1.0 : -1.0) * half * kx[i];
                const double before = k.value;
                add(u, half * kw[i], k);
                if (i % 2 == 0) gsum += gw[i / 2] * (k.value - before) / kw[i];
            }
        }
        const double err = std::abs(k.value - gsum);
        if (err <= tol || depth >= 24) {
            out.value += k.value;
            if (want_grad) {
                out.grad_a += k.grad_a;
                out.grad_b += k.grad_b;
            }
            return;
        }
        self(self, u0, mid, depth + 1, 0.5 * tol);
        self(self, mid, u1, depth + 1, 0.5 * tol);
    };
    const double scale = std::abs(f(st.beta_raw(a))) + std::abs(f(st.beta_raw(b))) + std::abs(f(st.beta_raw(a + 0.5 * d)));
    piece(piece, 0.0, 1.0, 0, 1e-14 * std::max(scale, 1e-300));
    return out;
}

/// int_0^1 f(beta(x(s))) ds on the piecewise-linear curve, with the gradient
/// wrt every node when requested (f' supplied as df).
template <class F, class DF>
double beta_integral(const StaticSpacetime& st, const SliceCurve& c, const SegmentRule& rule, F f, DF df,
                     std::vector<Vec>* grad) {
    const int segs = c.segments();
    const double h = c.step();
    double acc = 0.0;
    if (grad) grad->assign(static_cast<std::size_t>(segs + 1), Vec::Zero(c.dim()));
    for (int i = 0; i < segs; ++i) {
        const auto si = segment_integral(st, c.node(i), c.node(i + 1), rule, f, df, grad != nullptr);
        acc += h * si.value;
        if (grad) {
            (*grad)[static_cast<std::size_t>(i)] += h * si.grad_a;
            (*grad)[static_cast<std::size_t>(i + 1)] += h * si.grad_b;
        }
    }
    return acc;
}

inline double inv_beta_integral(const StaticSpacetime& st, const SliceCurve& c, const SegmentRule& rule,
                                std::vector<Vec>* grad) {
    return beta_integral(
        st, c, rule, [](double b) { return 1.0 / b; }, [](double b) { return -1.0 / (b * b); }, grad);
}

inline double beta_integral_plain(const StaticSpacetime& st, const SliceCurve& c, const SegmentRule& rule) {
    return beta_integral(
        st, c, rule, [](double b) { return b; }, [](double) { return 1.0; }, nullptr);
}

/// J and, optionally, its gradient wrt every node (endpoints included).
inline ActionEvaluation action_with_gradient(const StaticSpacetime& st, const SliceCurve& c, double delta_t,
                                             const SegmentRule& rule, std::vector<Vec>* grad) {
    ActionEvaluation ev;
    ev.delta_t = delta_t;
    std::vector<Vec> gk, gi;
    ev.kinetic = kinetic_energy(st.chart(), c, grad ? &gk : nullptr);
    ev.inv_beta_integral = inv_beta_integral(st, c, rule, grad ? &gi : nullptr);
    ev.J = ev.kinetic - delta_t * delta_t / (2.0 * ev.inv_beta_integral);
    if (grad) {
        const double chain = delta_t * delta_t / (2.0 * ev.inv_beta_integral * ev.inv_beta_integral);
        grad->resize(gk.size());
        for (std::size_t i = 0; i < gk.size(); ++i) (*grad)[i] = gk[i] + chain * gi[i];
    }
    return ev;
}

}  // namespace detail

inline ActionEvaluation action_J(const StaticSpacetime& st, const SliceCurve& curve, double delta_t,
                                 const ActionOptions& o = {}) {
    detail::require_curve_in_domain(st, curve, "action_J");
    return detail::action_with_gradient(st, curve, delta_t, SegmentRule::gauss(o.quad_points), nullptr);
}

/// Gradient of the discrete J wrt the interior nodes 1..N-1.
inline std::vector<Vec> grad_action_J(const StaticSpacetime& st, const SliceCurve& curve, double delta_t,
                                      const ActionOptions& o = {}) {
    detail::require_curve_in_domain(st, curve, "grad_action_J");
    std::vector<Vec> g;
    detail::action_with_gradient(st, curve, delta_t, SegmentRule::gauss(o.quad_points), &g);
    return {g.begin() + 1, g.end() - 1};
}

/// J minus the lower bound 1/2 int g_S(x', x') - (dt^2/2) int beta. Both
/// integrals use the same positive quadrature weights, so Cauchy-Schwarz
/// holds for the discrete sums as well and the gap is >= 0 up to rounding.
inline double lower_bound_gap(const StaticSpacetime& st, const SliceCurve& curve, double delta_t,
                              const ActionOptions& o = {}) {
    detail::require_curve_in_domain(st, curve, "lower_bound_gap");
    const auto rule = SegmentRule::gauss(o.quad_points);
    const auto ev = detail::action_with_gradient(st, curve, delta_t, rule, nullptr);
    const double bound = ev.kinetic - 0.5 * delta_t * delta_t * detail::beta_integral_plain(st, curve, rule);
    return ev.J - bound;
}

struct TimeReconstruction {
    std::vector<double> t;  // t(s_i), i = 0..N
    double lambda = 0.0;
};

inline TimeReconstruction reconstruct_time(const StaticSpacetime& st, const SliceCurve& curve, double delta_t,
                                           double t0, const ActionOptions& o = {}) {
    detail::require_curve_in_domain(st, curve, "reconstruct_time");
    const auto rule = SegmentRule::gauss(o.quad_points);
    const double h = curve.step();
    std::vector<double> cum(static_cast<std::size_t>(curve.segments() + 1), 0.0);
    for (int i = 0; i < curve.segments(); ++i) {
        const auto si = detail::segment_integral(
            st, curve.node(i), curve.node(i + 1), rule, [](double b) { return 1.0 / b; }, [](double) { return 0.0; },
            false);
        cum[static_cast<std::size_t>(i + 1)] = cum[static_cast<std::size_t>(i)] + h * si.value;
    }
    TimeReconstruction out;
    const double total = cum.back();
    out.lambda = delta_t / total;
    out.t.reserve(cum.size());
    for (double v : cum) out.t.push_back(t0 + delta_t * v / total);
    out.t.back() = t0 + delta_t;
    return out;
}

// ---------------------------------------------------------------------------
// Shooting polish shared by both solvers
// ---------------------------------------------------------------------------

struct PolishOptions {
    double tol = 1e-10;         // integrator tolerance
    double miss_tol = 1e-10;    // Levenberg-Marquardt stop on the endpoint miss
    double accept_tol = 1e-7;   // largest miss accepted as a continuation step
    int max_iter = 40;
    int max_continuation_steps = 60;
};

struct Polished {
    Vec velocity;  // (t', x') at s = 0 for the parameter interval [0,1]
    GeodesicTrajectory trajectory;
    double miss = 0.0;
};

namespace detail {

inline GeodesicState state_from(const Vec& p, const Vec& v) {
    const auto n = p.size() - 1;
    return GeodesicState{p[0], p.tail(n), v[0], v.tail(n)};
}

inline std::optional<Vec> endpoint_miss(const StaticSpacetime& st, const Vec& p0, const Vec& p1, const Vec& v,
                                        double tol) {
    try {
        IntegrateOptions io;
        io.tol = tol;
        io.max_steps = 50'000;  // shots this long are far from any connecting geodesic
        const auto tr = integrate_geodesic(st, state_from(p0, v), 1.0, io);
        if (tr.termination != Termination::reached_s_max) return std::nullopt;
        const auto& e = tr.samples.back().state;
        Vec r(p0.size());
        r[0] = e.t - p1[0];
        r.tail(p0.size() - 1) = e.x - p1.tail(p0.size() - 1);
        return r;
    } catch (const Error&) {
        return std::nullopt;
    }
}

/// Initial data at p0 in conserved coordinates u = (lambda, C, z): the spatial
/// direction is ref + basis * z, normalized, with speed sqrt(C + lambda^2/beta).
/// Near-null geodesics with large lambda are badly conditioned in (t', x')
/// because C is a small difference of large terms; here C is explicit.
struct ConservedShot {
    double b0 = 1.0;
    Mat g0;
    Vec ref;
    Mat basis;

    ConservedShot(const StaticSpacetime& st, const Vec& x0, const Vec& dir) {
        const auto n = x0.size();
        b0 = st.beta_at(x0);
        g0 = st.chart().metric_at(x0);
        ref = dir;
        if (!(std::sqrt(std::abs(ref.dot(g0 * ref))) > 1e-12)) ref = Vec::Unit(n, 0);
        ref /= std::sqrt(ref.dot(g0 * ref));
        std::vector<Vec> cols;
        for (Eigen::Index k = 0; k < n && static_cast<Eigen::Index>(cols.size()) < n - 1; ++k) {
            Vec e = Vec::Unit(n, k);
            e -= ref * ref.dot(g0 * e);
            for (const auto& c : cols) e -= c * c.dot(g0 * e);
            const double nn = std::sqrt(std::max(0.0, e.dot(g0 * e)));
            if (nn > 1e-8) cols.push_back(e / nn);
        }
        basis.resize(n, static_cast<Eigen::Index>(cols.size()));
        for (std::size_t k = 0; k < cols.size(); ++k) basis.col(static_cast<Eigen::Index>(k)) = cols[k];
    }

    std::optional<Vec> velocity(const Vec& u) const {
        const double speed2 = u[1] + u[0] * u[0] / b0;
        if (!(speed2 >= 0.0)) return std::nullopt;
        Vec w = ref;
        if (basis.cols() > 0) w += basis * u.tail(basis.cols());
        const double wn = std::sqrt(w.dot(g0 * w));
        Vec v(w.size() + 1);
        v[0] = u[0] / b0;
        v.tail(w.size()) = w * (std::sqrt(speed2) / wn);
        return v;
    }

    Vec coords(double lambda, double c) const {
        Vec u = Vec::Zero(2 + basis.cols());
        u[0] = lambda;
        u[1] = c;
        return u;
    }
};

inline std::optional<Polished> finish_polish(const StaticSpacetime& st, const Vec& p0, const Vec& v, double miss,
                                             double tol) {
    if (!std::isfinite(miss)) return std::nullopt;
    Polished out;
    out.velocity = v;
    out.miss = miss;
    IntegrateOptions io;
    io.tol = tol;
    try {
        out.trajectory = integrate_geodesic(st, state_from(p0, v), 1.0, io);
    } catch (const Error&) {
        return std::nullopt;
    }
    return out;
}

/// Levenberg-Marquardt in conserved coordinates around a guess (lambda, C, dir).
inline std::optional<Polished> polish_conserved(const StaticSpacetime& st, const Vec& p0, const Vec& p1,
                                                double lambda, double c, const Vec& dir, const PolishOptions& o) {
    const auto n = p0.size() - 1;
    const ConservedShot shot(st, p0.tail(n), dir);
    opt::LmOptions lo;
    lo.max_iter = o.max_iter;
    lo.tol = o.miss_tol;
    lo.central = true;
    const auto r = opt::levenberg_marquardt(
        [&](const Vec& u) -> std::optional<Vec> {
            const auto v = shot.velocity(u);
            if (!v) return std::nullopt;
            return endpoint_miss(st, p0, p1, *v, o.tol);
        },
        shot.coords(lambda, c), lo);
    const auto v = shot.velocity(r.x);
    if (!v) return std::nullopt;
    return finish_polish(st, p0, *v, r.miss, o.tol);
}

}  // namespace detail

/// Newton-type refinement of the initial velocity so that the geodesic from
/// p0 reaches p1 at s = 1. The velocity (t', x') is refined first; if the
/// miss stays above tolerance the search is repeated in (lambda, C, direction).
namespace detail {

inline std::optional<Polished> polish_velocity(const StaticSpacetime& st, const Vec& p0, const Vec& p1,
                                               const Vec& v_guess, const PolishOptions& o) {
    opt::LmOptions lo;
    lo.max_iter = o.max_iter;
    lo.tol = o.miss_tol;
    lo.central = true;
    const auto r = opt::levenberg_marquardt(
        [&](const Vec& v) { return endpoint_miss(st, p0, p1, v, o.tol); }, v_guess, lo);
    return finish_polish(st, p0, r.x, r.miss, o.tol);
}

}  // namespace detail

inline std::optional<Polished> polish_connection(const StaticSpacetime& st, const Vec& p0, const Vec& p1,
                                                 const Vec& v_guess, const PolishOptions& o = {}) {
    auto out = detail::polish_velocity(st, p0, p1, v_guess, o);
    if (out && out->miss <= o.miss_tol) return out;
    const Vec& v = out ? out->velocity : v_guess;
    const auto n = p0.size() - 1;
    const double b0 = st.beta_at(p0.tail(n));
    const Vec xd = v.tail(n);
    const double c = -b0 * v[0] * v[0] + xd.dot(st.chart().metric_at(p0.tail(n)) * xd);
    auto alt = detail::polish_conserved(st, p0, p1, b0 * v[0], c, xd, o);
    if (alt && (!out || alt->miss < out->miss)) return alt;
    return out;
}

namespace detail {

/// Quadratic (or lower-order) extrapolation through the last accepted points.
inline double extrapolate(const std::vector<double>& f, const std::vector<double>& y, double fn) {
    const std::size_t m = f.size();
    if (m == 1) return y[0];
    if (m == 2) return y[1] + (y[1] - y[0]) * (fn - f[1]) / (f[1] - f[0]);
    double out = 0.0;
    for (std::size_t i = m - 3; i < m; ++i) {
        double l = 1.0;
        for (std::size_t j = m - 3; j < m; ++j)
            if (j != i) l *= (fn - f[j]) / (f[i] - f[j]);
        out += l * y[i];
    }
    return out;
}

}  // namespace detail

/// Follow a branch of connecting geodesics from the Riemannian one (dt = 0,
/// spatial initial velocity xdot_slice) to the full time separation. Along
/// the branch lambda and C grow roughly exponentially in dt, so they are
/// extrapolated in asinh scale and x' linearly. Near-null steps
/// (|C| < lambda^2 / (2 beta)) are solved in conserved coordinates, the rest
/// in (t', x'), which lets x' pass through zero.
inline std::optional<Polished> continue_in_delta_t(const StaticSpacetime& st, const Vec& p0, const Vec& p1,
                                                   const Vec& xdot_slice, double inv_beta_integral,
                                                   const PolishOptions& o = {}) {
    const double dt = p1[0] - p0[0];
    const auto n = p0.size() - 1;
    const double b0 = st.beta_at(p0.tail(n));
    const Mat g0 = st.chart().metric_at(p0.tail(n));
    std::vector<double> fs{0.0}, al{0.0}, ac{std::asinh(xdot_slice.dot(g0 * xdot_slice))};
    std::vector<std::vector<double>> xs(static_cast<std::size_t>(n));
    for (Eigen::Index k = 0; k < n; ++k) xs[static_cast<std::size_t>(k)].push_back(xdot_slice[k]);
    double step = 0.05;
    std::optional<Polished> cur;
    for (int attempt = 0; fs.back() < 1.0; ++attempt) {
        if (attempt >= o.max_continuation_steps) return std::nullopt;
        const double fn = std::min(1.0, fs.back() + step);
        const double lambda = fs.size() == 1 ? fn * dt / inv_beta_integral : std::sinh(detail::extrapolate(fs, al, fn));
        const double c = std::sinh(detail::extrapolate(fs, ac, fn));
        Vec xd(n);
        for (Eigen::Index k = 0; k < n; ++k) xd[k] = detail::extrapolate(fs, xs[static_cast<std::size_t>(k)], fn);
        Vec target = p1;
        target[0] = p0[0] + fn * dt;
        const bool near_null = std::abs(c) < 0.5 * lambda * lambda / b0;
        auto solve = [&](const PolishOptions& po, double l, double cc, const Vec& x) {
            if (near_null) return detail::polish_conserved(st, p0, target, l, cc, x, po);
            Vec v(n + 1);
            v << l / b0, x;
            return detail::polish_velocity(st, p0, target, v, po);
        };
        auto pol = solve(o, lambda, c, xd);
        if (pol && pol->miss > o.accept_tol && pol->miss < 1e4 * o.accept_tol) {
            // close but at the integrator's noise floor: refine with a tighter tolerance
            PolishOptions fine = o;
            fine.tol = o.tol * 1e-2;
            const auto& tr = pol->trajectory;
            if (auto p2 = solve(fine, tr.lambda0, tr.C0, tr.samples.front().state.x_dot); p2 && p2->miss < pol->miss)
                pol = std::move(p2);
        }
        // intermediate steps only feed the predictor
        const double accept = fn < 1.0 ? 1e2 * o.accept_tol : o.accept_tol;
        if (pol && pol->miss <= accept) {
            const auto& tr = pol->trajectory;
            fs.push_back(fn);
            al.push_back(std::asinh(tr.lambda0));
            ac.push_back(std::asinh(tr.C0));
            for (Eigen::Index k = 0; k < n; ++k) xs[static_cast<std::size_t>(k)].push_back(tr.samples.front().state.x_dot[k]);
            cur = std::move(pol);
            step = std::min(0.25, 1.5 * step);
        } else {
            step *= 0.5;
            if (step < 1e-4) return std::nullopt;
        }
    }
    return cur;
}

/// Spatial curve of a [0,1]-parameterized trajectory on the uniform grid,
/// endpoints pinned to the given values.
inline SliceCurve sample_curve(const GeodesicTrajectory& tr, int segments, const Vec& x0, const Vec& x1) {
    std::vector<Vec> pts;
    pts.reserve(static_cast<std::size_t>(segments + 1));
    const auto nodes = tr.nodes();
    const auto n = x0.size();
    for (int i = 0; i <= segments; ++i)
        pts.push_back(ode::dense_eval(nodes, static_cast<double>(i) / segments).segment(1, n));
    pts.front() = x0;
    pts.back() = x1;
    return SliceCurve(std::move(pts));
}

/// Defect of a polished connection: endpoint miss and relative conservation drift.
inline double connection_residual(const Polished& p) {
    const auto& tr = p.trajectory;
    return std::max({p.miss, tr.drift.lambda / (1.0 + std::abs(tr.lambda0)), tr.drift.norm / (1.0 + std::abs(tr.C0))});
}

// ---------------------------------------------------------------------------
// Variational solver
// ---------------------------------------------------------------------------

enum class ConnectStatus { geodesic, diverged, max_iter };

inline const char* to_string(ConnectStatus s) {
    switch (s) {
        case ConnectStatus::geodesic: return "geodesic";
        case ConnectStatus::diverged: return "diverged";
        case ConnectStatus::max_iter: return "max_iter";
    }
    return "?";
}

struct HistoryEntry {
    int iteration;
    double J;
    double max_node_norm;
};

struct ConnectOptions {
    int segments = 256;
    int n_seeds = 2;
    double seed_amplitude = 0.25;
    std::uint64_t seed = 1;
    int max_iter = 20000;
    double grad_tol = 1e-9;  // on N * max-norm of the gradient
    double residual_tol = 1e-6;
    double J_floor = -1e5;
    int window = 50;
    double boundary_eps = 1e-4;
    int quad_points = 0;
    PolishOptions polish;
};

struct ConnectResult {
    ConnectStatus status = ConnectStatus::max_iter;
    SliceCurve curve;
    std::optional<GeodesicTrajectory> trajectory;  // lifted geodesic on s in [0,1]
    double lambda = 0.0;
    CausalCharacter character = CausalCharacter::spacelike;
    double residual = std::numeric_limits<double>::infinity();
    double J_value = 0.0;
    int iterations = 0;
    std::vector<HistoryEntry> history;
    double min_clearance = std::numeric_limits<double>::infinity();
    double discretization_gap = 0.0;  // sup distance between the discrete minimizer and the lifted geodesic
    int seed_index = 0;
    std::string note;
};

namespace detail {

inline double node_clearance(const Chart& chart, const SliceCurve& c) {
    if (!chart.has_boundary()) return std::numeric_limits<double>::infinity();
    double m = std::numeric_limits<double>::infinity();
    for (int i = 1; i < c.segments(); ++i) m = std::min(m, chart.clearance(c.node(i)));
    return m;
}

inline bool monotone_escape(const std::vector<HistoryEntry>& h, int window) {
    if (static_cast<int>(h.size()) < window + 1) return false;
    for (std::size_t i = h.size() - static_cast<std::size_t>(window); i < h.size(); ++i)
        if (!(h[i].max_node_norm > h[i - 1].max_node_norm)) return false;
    return true;
}

/// Character of a lifted geodesic from C at the middle of the parameter interval.
inline CausalCharacter midpoint_character(const StaticSpacetime& st, const GeodesicTrajectory& tr) {
    return classify_norm(conserved_norm(st, tr.state_at(0.5)));
}

/// Install a polished connection in res when its residual is below tolerance.
/// At a geodesic J = C/2, which is reported instead of the discrete value.
inline void apply_lift(const StaticSpacetime& st, const Vec& p0, const Vec& p1, std::optional<Polished> pol,
                       const ConnectOptions& o, ConnectResult& res) {
    const auto n = p0.size() - 1;
    if (!pol) {
        res.status = ConnectStatus::max_iter;
        res.note = "lift failed: no geodesic from the discrete critical point";
        return;
    }
    res.residual = connection_residual(*pol);
    const SliceCurve lifted = sample_curve(pol->trajectory, o.segments, p0.tail(n), p1.tail(n));
    res.discretization_gap = lifted.sup_distance(res.curve);
    if (res.residual < o.residual_tol) {
        res.status = ConnectStatus::geodesic;
        res.curve = lifted;
        res.lambda = pol->trajectory.lambda0;
        res.character = midpoint_character(st, pol->trajectory);
        res.J_value = 0.5 * pol->trajectory.C0;
        res.trajectory = std::move(pol->trajectory);
    } else {
        res.status = ConnectStatus::max_iter;
        res.note = "lifted geodesic residual above tolerance";
    }
}

inline ConnectResult minimize_from_seed(const StaticSpacetime& st, const Vec& p0, const Vec& p1,
                                        const SliceCurve& seed, const ConnectOptions& o) {
    const Chart& chart = st.chart();
    const int n = seed.dim();
    const double dt = p1[0] - p0[0];
    const auto rule = SegmentRule::gauss(o.quad_points);
    ConnectResult res;
    const SliceCurve base = seed;
    auto objective = [&](const Vec& z, Vec& g) -> std::optional<double> {
        const SliceCurve c = base.with_interior(z);
        for (int i = 1; i < c.segments(); ++i)
            if (!chart.in_domain(c.node(i))) return std::nullopt;
        std::vector<Vec> gr;
        const auto ev = action_with_gradient(st, c, dt, rule, &gr);
        g.resize(z.size());
        for (int i = 1; i < c.segments(); ++i) g.segment(static_cast<Eigen::Index>(i - 1) * n, n) = gr[static_cast<std::size_t>(i)];
        return ev.J;
    };
    bool diverged = false;
    auto monitor = [&](int it, const Vec& z, double f, const Vec&) {
        const SliceCurve c = base.with_interior(z);
        res.history.push_back({it, f, c.max_node_norm()});
        if (f < o.J_floor && monotone_escape(res.history, o.window)) {
            diverged = true;
            res.note = "J below floor with monotone node escape";
            return false;
        }
        if (node_clearance(chart, c) < o.boundary_eps) {
            diverged = true;
            res.note = "nodes approach the domain boundary";
            return false;
        }
        return true;
    };
    opt::LbfgsOptions lo;
    lo.max_iter = o.max_iter;
    lo.grad_tol = o.grad_tol / o.segments;
    const auto r = opt::lbfgs(objective, base.interior(), lo, monitor);
    res.iterations = r.iterations;
    res.curve = base.with_interior(r.x);
    res.J_value = r.f;
    res.min_clearance = node_clearance(chart, res.curve);
    if (!diverged && res.min_clearance < o.boundary_eps) {
        diverged = true;
        res.note = "nodes approach the domain boundary";
    }
    if (diverged) {
        res.status = ConnectStatus::diverged;
        return res;
    }

    // Lift: shoot from the discrete initial velocity.
    const auto tr = reconstruct_time(st, res.curve, dt, p0[0], ActionOptions{o.quad_points});
    const double h = res.curve.step();
    Vec v0(n + 1);
    v0[0] = tr.lambda / st.beta_at(p0.tail(n));
    v0.tail(n) = (-3.0 * res.curve.node(0) + 4.0 * res.curve.node(1) - res.curve.node(2)) / (2.0 * h);
    PolishOptions direct = o.polish;
    direct.max_iter = std::min(direct.max_iter, 15);
    apply_lift(st, p0, p1, detail::polish_velocity(st, p0, p1, v0, direct), o, res);
    return res;
}

}  // namespace detail

/// Minimize J from the projected chord and randomized seeds. Among geodesic
/// outcomes the lowest J wins (ties by residual); otherwise a divergence
/// verdict is preferred over a plain iteration limit.
inline ConnectResult minimize_action(const StaticSpacetime& st, const Vec& p0, const Vec& p1,
                                     const ConnectOptions& o = {}) {
    const int n = st.dim();
    if (p0.size() != n + 1 || p1.size() != n + 1)
        throw ValidationError("connectedness", "minimize_action", "endpoints must be (t, x) with dim x = " + std::to_string(n));
    if (o.segments < 2) throw ValidationError("connectedness", "minimize_action", "segments must be >= 2");
    const Vec x0 = p0.tail(n), x1 = p1.tail(n);
    st.chart().require_in_domain(x0, "minimize_action");
    st.chart().require_in_domain(x1, "minimize_action");
    st.beta_at(x0);
    st.beta_at(x1);

    std::mt19937_64 rng(split_seed(o.seed, 0));
    const double scale = (x1 - x0).norm() + 1.0;
    auto seeds = seed_curves(x0, x1, o.segments, o.n_seeds, o.seed_amplitude * scale, rng);
    std::vector<SliceCurve> admissible;
    std::vector<int> index;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        std::mt19937_64 prng(split_seed(o.seed, i + 1));
        if (auto c = project_curve(st.chart(), seeds[i], scale, prng)) {
            admissible.push_back(*c);
            index.push_back(static_cast<int>(i));
        }
    }
    if (admissible.empty())
        throw SeedFailureError("connectedness", "minimize_action", "every seed curve leaves the domain");

    std::vector<ConnectResult> results(admissible.size());
    parallel_for(admissible.size(), [&](std::size_t i) {
        results[i] = detail::minimize_from_seed(st, p0, p1, admissible[i], o);
        results[i].seed_index = index[i];
    });

    const ConnectResult* best = nullptr;
    for (const auto& r : results) {
        if (r.status != ConnectStatus::geodesic) continue;
        if (!best || r.J_value < best->J_value - 1e-9 * (1 + std::abs(best->J_value)) ||
            (std::abs(r.J_value - best->J_value) <= 1e-9 * (1 + std::abs(best->J_value)) && r.residual < best->residual))
            best = &r;
    }
    if (!best)
        for (const auto& r : results)
            if (r.status == ConnectStatus::diverged) { best = &r; break; }
    if (!best) best = &results.front();
    ConnectResult out = *best;
    out.iterations = 0;
    for (const auto& r : results) out.iterations += r.iterations;

    // No seed lifted to a geodesic and none diverged: the discrete minimizer is
    // under-resolved. Follow connecting geodesics in dt from the slice geodesic
    // through the projected chord.
    const double dt = p1[0] - p0[0];
    if (out.status == ConnectStatus::max_iter && dt != 0.0) {
        Vec q1 = p1;
        q1[0] = p0[0];
        const ConnectResult slice = detail::minimize_from_seed(st, p0, q1, admissible.front(), o);
        out.iterations += slice.iterations;
        if (slice.status == ConnectStatus::geodesic) {
            const auto& s0 = slice.trajectory->samples.front().state;
            const double ib = action_J(st, slice.curve, 0.0, ActionOptions{o.quad_points}).inv_beta_integral;
            if (auto c = continue_in_delta_t(st, p0, p1, s0.x_dot, ib, o.polish)) {
                ConnectResult alt = out;
                detail::apply_lift(st, p0, p1, std::move(c), o, alt);
                if (alt.status == ConnectStatus::geodesic) {
                    alt.note = "lifted by continuation in delta_t from the slice geodesic";
                    out = std::move(alt);
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Shooting oracle
// ---------------------------------------------------------------------------

struct ShootOptions {
    double angle_res = 1e-3;     // direction grid spacing for a 1-d slice
    double angle_res_2d = 2e-2;  // per angle for a 2-d slice
    double ray_tol = 1e-8;
    double s_ray_max = 200.0;
    double reach_factor = 4.0;  // rays stop beyond reach_factor * (|p1 - p0| + 1) from p0
    int candidates = 8;
    double reach_tol = 1e-8;  // endpoint miss that counts as reached
    PolishOptions polish;
};

struct ShootResult {
    bool reached = false;
    std::string verdict;
    double miss = std::numeric_limits<double>::infinity();  // best sweep miss, or polished miss
    double sweep_miss = std::numeric_limits<double>::infinity();
    Vec velocity;
    std::optional<GeodesicTrajectory> trajectory;
    double lambda = 0.0;
    double C = 0.0;
    CausalCharacter character = CausalCharacter::spacelike;
    double residual = std::numeric_limits<double>::infinity();
    int directions = 0;
};

namespace detail {

struct RayHit {
    double miss = std::numeric_limits<double>::infinity();
    double s = 0.0;
};

/// Closest approach of the geodesic ray with initial velocity u to p1, in
/// (t, x) coordinates.
inline RayHit ray_closest(const StaticSpacetime& st, const Vec& p0, const Vec& p1, const Vec& u, const ShootOptions& o) {
    const int n = st.dim();
    const Chart& ch = st.chart();
    const double reach = o.reach_factor * ((p1 - p0).norm() + 1.0);
    auto rhs = [&](double, const Vec& y) -> std::optional<Vec> {
        if (!ch.in_domain(y.segment(1, n))) return std::nullopt;
        return geodesic_rhs_packed(st, y);
    };
    auto coords = [n](const Vec& y) { return y.head(n + 1); };
    RayHit best;
    std::optional<ode::OdeNode> prev;
    auto observer = [&](const ode::OdeNode& node) {
        if (prev) {
            constexpr int sub = 4;
            for (int k = 1; k <= sub; ++k) {
                const double s = prev->s + (node.s - prev->s) * k / sub;
                const double d = (coords(ode::hermite(*prev, node, s)) - p1).norm();
                if (d < best.miss) best = {d, s};
            }
        } else {
            best = {(coords(node.y) - p1).norm(), node.s};
        }
        prev = node;
        return (coords(node.y) - p0).norm() <= reach;
    };
    ode::OdeOptions oo;
    oo.rtol = oo.atol = o.ray_tol;
    try {
        ode::integrate(rhs, 0.0, state_from(p0, u).pack(), o.s_ray_max, oo, observer);
    } catch (const Error&) {
    }
    return best;
}

}  // namespace detail

/// Sweep initial directions (unit for g_R = beta dt^2 + g_S at p0), record the
/// closest approach of every ray to p1, then polish the best local minima.
inline ShootResult shooting_connect(const StaticSpacetime& st, const Vec& p0, const Vec& p1, const ShootOptions& o = {}) {
    const int n = st.dim();
    if (n > 2) throw ValidationError("connectedness", "shooting_connect", "direction sweep needs dim S <= 2");
    if (p0.size() != n + 1 || p1.size() != n + 1)
        throw ValidationError("connectedness", "shooting_connect", "endpoints must be (t, x)");
    const Vec x0 = p0.tail(n);
    st.chart().require_in_domain(x0, "shooting_connect");
    st.chart().require_in_domain(p1.tail(n), "shooting_connect");
    const double b0 = st.beta_at(x0);
    const Mat g0 = st.chart().metric_at(x0);

    // Directions: angle phi between the t axis and the slice, psi within the slice.
    std::vector<Vec> dirs;
    std::vector<std::array<int, 2>> grid_index;
    int n_phi = 0, n_psi = 1;
    if (n == 1) {
        n_phi = static_cast<int>(std::ceil(2 * std::numbers::pi / o.angle_res));
        for (int i = 0; i < n_phi; ++i) {
            const double phi = 2 * std::numbers::pi * i / n_phi;
            Vec u(2);
            u << std::cos(phi) / std::sqrt(b0), std::sin(phi) / std::sqrt(g0(0, 0));
            dirs.push_back(u);
            grid_index.push_back({i, 0});
        }
    } else {
        n_phi = static_cast<int>(std::ceil(std::numbers::pi / o.angle_res_2d)) + 1;
        n_psi = static_cast<int>(std::ceil(2 * std::numbers::pi / o.angle_res_2d));
        for (int i = 0; i < n_phi; ++i) {
            const double phi = std::numbers::pi * i / (n_phi - 1);
            for (int j = 0; j < n_psi; ++j) {
                const double psi = 2 * std::numbers::pi * j / n_psi;
                Vec e(2);
                e << std::cos(psi), std::sin(psi);
                e /= std::sqrt(e.dot(g0 * e));
                Vec u(3);
                u[0] = std::cos(phi) / std::sqrt(b0);
                u.tail(2) = std::sin(phi) * e;
                dirs.push_back(u);
                grid_index.push_back({i, j});
            }
        }
    }
    std::vector<detail::RayHit> hits(dirs.size());
    parallel_for(dirs.size(), [&](std::size_t i) { hits[i] = detail::ray_closest(st, p0, p1, dirs[i], o); });

    ShootResult out;
    out.directions = static_cast<int>(dirs.size());
    // Local minima of the miss over the direction grid (periodic in the slice angle).
    auto at = [&](int i, int j) -> double {
        if (n == 1) return hits[static_cast<std::size_t>((i % n_phi + n_phi) % n_phi)].miss;
        if (i < 0 || i >= n_phi) return std::numeric_limits<double>::infinity();
        return hits[static_cast<std::size_t>(i * n_psi + (j % n_psi + n_psi) % n_psi)].miss;
    };
    std::vector<std::size_t> minima;
    for (std::size_t k = 0; k < dirs.size(); ++k) {
        const auto [i, j] = grid_index[k];
        const double m = hits[k].miss;
        if (!std::isfinite(m)) continue;
        out.sweep_miss = std::min(out.sweep_miss, m);
        bool local = m <= at(i - 1, j) && m <= at(i + 1, j);
        if (n == 2) local = local && m <= at(i, j - 1) && m <= at(i, j + 1);
        if (local) minima.push_back(k);
    }
    std::sort(minima.begin(), minima.end(), [&](std::size_t a, std::size_t b) {
        return hits[a].miss < hits[b].miss || (hits[a].miss == hits[b].miss && a < b);
    });
    if (static_cast<int>(minima.size()) > o.candidates) minima.resize(static_cast<std::size_t>(o.candidates));

    std::vector<std::optional<Polished>> polished(minima.size());
    parallel_for(minima.size(), [&](std::size_t c) {
        const auto k = minima[c];
        if (!(hits[k].s > 0.0)) return;
        polished[c] = polish_connection(st, p0, p1, dirs[k] * hits[k].s, o.polish);
    });
    const Polished* best = nullptr;
    for (const auto& p : polished) {
        if (!p || !(p->miss < o.reach_tol)) continue;
        if (!best || p->trajectory.C0 < best->trajectory.C0) best = &*p;
    }
    out.miss = out.sweep_miss;
    if (!best) {
        out.reached = false;
        out.verdict = "not reached at sweep resolution";
        return out;
    }
    out.reached = true;
    out.verdict = "reached";
    out.miss = best->miss;
    out.velocity = best->velocity;
    out.trajectory = best->trajectory;
    out.lambda = best->trajectory.lambda0;
    out.C = best->trajectory.C0;
    out.character = detail::midpoint_character(st, best->trajectory);
    out.residual = connection_residual(*best);
    return out;
}

}  // namespace staticgeo
