#pragma once

// Standard static spacetime R x S with metric -beta(x) dt^2 + g_S.
//
// Geodesics satisfy
//     D_s x' = -1/2 t'^2 grad beta(x),     beta(x) t' = lambda,
// with lambda = -g(gamma', K) conserved (K = d_t Killing) and
// C = g(gamma', gamma') = -beta t'^2 + g_S(x', x') conserved.
//
// Classical reduction: rescaling the affine parameter so that lambda = sqrt(2)
// gives g_S(x', x') = C + 2/beta, hence with V = -1/beta
//     E := g_S(x', x')/2 + V = C/2,
// i.e. the classical energy equals half the Lorentzian norm in the normalized
// parameter.

#include "staticgeo/error.hpp"
#include "staticgeo/manifold.hpp"
#include "staticgeo/ode.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace staticgeo {

class StaticSpacetime {
public:
    using BetaFn = std::function<double(const Vec&)>;
    using BetaGradFn = std::function<Vec(const Vec&)>;

    StaticSpacetime(Chart chart, BetaFn beta, BetaGradFn beta_grad, std::string label)
        : chart_(std::move(chart)), beta_(std::move(beta)), beta_grad_(std::move(beta_grad)),
          label_(std::move(label)) {}
    StaticSpacetime(Chart chart, BetaFn beta, std::string label)
        : StaticSpacetime(std::move(chart), std::move(beta), nullptr, std::move(label)) {}

    const Chart& chart() const noexcept { return chart_; }
    const std::string& label() const noexcept { return label_; }
    int dim() const noexcept { return chart_.dim(); }

    /// beta(x) > 0; checked on every evaluation.
    double beta_at(const Vec& x) const {
        chart_.require_in_domain(x, "beta_at");
        const double b = beta_(x);
        if (!(b > 0.0) || !std::isfinite(b))
            throw DegenerateMetricError("spacetime", "beta_at",
                                        "warping function not positive at " + format_point(x));
        return b;
    }

    double beta_raw(const Vec& x) const { return beta_(x); }

    /// Coordinate differential d beta (covector); analytic or central FD.
    Vec beta_grad_at(const Vec& x) const {
        if (beta_grad_) return beta_grad_(x);
        const int n = dim();
        Vec d(n);
        for (int k = 0; k < n; ++k) {
            const double h = chart_.fd_step_for(x, k);
            Vec xp = x, xm = x;
            xp[k] += h;
            xm[k] -= h;
            d[k] = (beta_(xp) - beta_(xm)) / (2 * h);
        }
        return d;
    }

    /// V = -1/beta, the potential of the classical reduction.
    double potential(const Vec& x) const { return -1.0 / beta_at(x); }
    /// Coordinate differential of V: d beta / beta^2.
    Vec potential_grad(const Vec& x) const {
        const double b = beta_raw(x);
        return beta_grad_at(x) / (b * b);
    }

private:
    Chart chart_;
    BetaFn beta_;
    BetaGradFn beta_grad_;
    std::string label_;
};

struct GeodesicState {
    double t = 0.0;
    Vec x;
    double t_dot = 0.0;
    Vec x_dot;

    /// Packed as (t, x, t_dot, x_dot).
    Vec pack() const {
        const auto n = x.size();
        Vec y(2 * n + 2);
        y[0] = t;
        y.segment(1, n) = x;
        y[n + 1] = t_dot;
        y.segment(n + 2, n) = x_dot;
        return y;
    }
    static GeodesicState unpack(const Vec& y) {
        const auto n = (y.size() - 2) / 2;
        return GeodesicState{y[0], y.segment(1, n), y[n + 1], y.segment(n + 2, n)};
    }
};

/// lambda = beta(x) t_dot.
inline double conserved_lambda(const StaticSpacetime& st, const GeodesicState& s) {
    return st.beta_raw(s.x) * s.t_dot;
}

/// C = g(gamma', gamma') = -beta t_dot^2 + g_S(x_dot, x_dot).
inline double conserved_norm(const StaticSpacetime& st, const GeodesicState& s) {
    const Mat g = st.chart().metric_raw(s.x);
    return -st.beta_raw(s.x) * s.t_dot * s.t_dot + s.x_dot.dot(g * s.x_dot);
}

/// g_R(gamma', gamma') = beta t_dot^2 + g_S(x_dot, x_dot); equals C + 2 lambda^2 / beta.
inline double aux_norm_sq(const StaticSpacetime& st, const GeodesicState& s) {
    st.chart().require_in_domain(s.x, "aux_norm_sq");
    const Mat g = st.chart().metric_raw(s.x);
    return st.beta_raw(s.x) * s.t_dot * s.t_dot + s.x_dot.dot(g * s.x_dot);
}

enum class CausalCharacter { timelike, null, spacelike };

inline const char* to_string(CausalCharacter c) {
    switch (c) {
        case CausalCharacter::timelike: return "timelike";
        case CausalCharacter::null: return "null";
        case CausalCharacter::spacelike: return "spacelike";
    }
    return "?";
}

inline CausalCharacter classify_norm(double c, double null_eps = 1e-9) {
    if (c < -null_eps) return CausalCharacter::timelike;
    if (c > null_eps) return CausalCharacter::spacelike;
    return CausalCharacter::null;
}

inline CausalCharacter causal_character(const StaticSpacetime& st, const GeodesicState& s,
                                        double null_eps = 1e-9) {
    st.chart().require_in_domain(s.x, "causal_character");
    return classify_norm(conserved_norm(st, s), null_eps);
}

struct StateDerivative {
    double t_dot;
    Vec x_dot;
    double t_ddot;
    Vec x_ddot;
};

namespace detail {
// Derivative of the packed state without domain checks; nullopt when any
// evaluation is not finite.
inline std::optional<Vec> geodesic_rhs_packed(const StaticSpacetime& st, const Vec& y) {
    const int n = st.dim();
    const Vec x = y.segment(1, n);
    const double td = y[n + 1];
    const Vec xd = y.segment(n + 2, n);
    const Chart& ch = st.chart();
    const double b = st.beta_raw(x);
    if (!(b > 0.0)) return std::nullopt;
    const Vec db = st.beta_grad_at(x);
    const Mat g = ch.metric_raw(x);
    const Vec grad_beta = g.ldlt().solve(db);
    Vec f(2 * n + 2);
    f[0] = td;
    f.segment(1, n) = xd;
    f[n + 1] = -td * db.dot(xd) / b;
    f.segment(n + 2, n) = -ch.christoffel_raw(x).contract(xd, xd) - 0.5 * td * td * grad_beta;
    if (!f.allFinite()) return std::nullopt;
    return f;
}
}  // namespace detail

/// Right-hand side of the geodesic system: x'' = -Gamma(x', x') - 1/2 t'^2 grad beta,
/// t'' = -t' d beta(x') / beta (the differentiated form of beta t' = lambda).
inline StateDerivative geodesic_rhs(const StaticSpacetime& st, const GeodesicState& s) {
    st.chart().require_in_domain(s.x, "geodesic_rhs");
    st.beta_at(s.x);
    const auto f = detail::geodesic_rhs_packed(st, s.pack());
    if (!f) throw DegenerateMetricError("spacetime", "geodesic_rhs", "non-finite derivative at " + format_point(s.x));
    const auto n = s.x.size();
    return StateDerivative{(*f)[0], f->segment(1, n), (*f)[n + 1], f->segment(n + 2, n)};
}

struct Drift {
    double lambda = 0.0;  // max |lambda(s) - lambda0|
    double norm = 0.0;    // max |C(s) - C0|
};

struct GeodesicSample {
    double s;
    GeodesicState state;
};

struct GeodesicTrajectory {
    std::vector<GeodesicSample> samples;
    std::vector<Vec> derivatives;  // packed state derivative per sample (may be empty after CSV load)
    double lambda0 = 0.0;
    double C0 = 0.0;
    Drift drift;
    Termination termination = Termination::reached_s_max;
    double s_exit = 0.0;  // parameter of the last sample (termination point)

    int dim() const { return samples.empty() ? 0 : static_cast<int>(samples.front().state.x.size()); }

    std::vector<ode::OdeNode> nodes() const {
        std::vector<ode::OdeNode> out;
        out.reserve(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i)
            out.push_back({samples[i].s, samples[i].state.pack(), derivatives.at(i)});
        return out;
    }

    /// Dense state at parameter s (cubic Hermite between samples).
    GeodesicState state_at(double s) const { return GeodesicState::unpack(ode::dense_eval(nodes(), s)); }
};

/// Recompute lambda0, C0 and the drift report from the samples.
inline void update_drift(const StaticSpacetime& st, GeodesicTrajectory& tr) {
    if (tr.samples.empty()) return;
    tr.lambda0 = conserved_lambda(st, tr.samples.front().state);
    tr.C0 = conserved_norm(st, tr.samples.front().state);
    tr.drift = {};
    for (const auto& smp : tr.samples) {
        tr.drift.lambda = std::max(tr.drift.lambda, std::abs(conserved_lambda(st, smp.state) - tr.lambda0));
        tr.drift.norm = std::max(tr.drift.norm, std::abs(conserved_norm(st, smp.state) - tr.C0));
    }
}

struct IntegrateOptions {
    double tol = 1e-10;
    double blowup_threshold = 1e8;  // on sqrt(g_R(gamma', gamma'))
    long max_steps = 20'000'000;
};

/// Raised when the adaptive step collapses; carries the partial trajectory.
class GeodesicStiffnessError : public StiffnessError {
public:
    GeodesicStiffnessError(const std::string& what, GeodesicTrajectory partial)
        : StiffnessError("spacetime", "integrate_geodesic", what), partial_(std::move(partial)) {}
    const GeodesicTrajectory& partial() const noexcept { return partial_; }

private:
    GeodesicTrajectory partial_;
};

inline GeodesicTrajectory integrate_geodesic(const StaticSpacetime& st, const GeodesicState& init, double s_max,
                                             const IntegrateOptions& o = {}) {
    if (!(o.tol > 0)) throw ValidationError("spacetime", "integrate_geodesic", "tol must be positive");
    st.chart().require_in_domain(init.x, "integrate_geodesic");
    st.beta_at(init.x);
    const int n = st.dim();
    const Chart& ch = st.chart();
    auto rhs = [&](double, const Vec& y) -> std::optional<Vec> {
        if (!ch.in_domain(y.segment(1, n))) return std::nullopt;
        return detail::geodesic_rhs_packed(st, y);
    };
    GeodesicTrajectory tr;
    bool blew_up = false;
    const double thr2 = o.blowup_threshold * o.blowup_threshold;
    auto observer = [&](const ode::OdeNode& node) {
        GeodesicState s = GeodesicState::unpack(node.y);
        const double aux = st.beta_raw(s.x) * s.t_dot * s.t_dot + s.x_dot.dot(ch.metric_raw(s.x) * s.x_dot);
        tr.samples.push_back({node.s, std::move(s)});
        tr.derivatives.push_back(node.f);
        if (!(aux <= thr2)) {
            blew_up = true;
            return false;
        }
        return true;
    };
    ode::OdeOptions oo;
    oo.rtol = oo.atol = o.tol;
    oo.max_steps = o.max_steps;
    // where beta > 1 the t' error is measured in units of lambda = beta t'
    oo.atol_weights = [&](const Vec& y, Vec& w) {
        const double b = st.beta_raw(y.segment(1, n));
        w[n + 1] = b > 1.0 ? 1.0 / b : 1.0;
    };
    const auto res = ode::integrate(rhs, 0.0, init.pack(), s_max, oo, observer);
    update_drift(st, tr);
    tr.s_exit = res.s_stop;
    if (blew_up) {
        tr.termination = Termination::blow_up;
    } else if (res.stop == ode::OdeStop::invalid_state) {
        tr.termination = Termination::left_domain;
    } else if (res.stop == ode::OdeStop::step_underflow || res.stop == ode::OdeStop::max_steps) {
        tr.termination = Termination::blow_up;
        throw GeodesicStiffnessError("step size underflow at s = " + std::to_string(res.s_stop), std::move(tr));
    } else {
        tr.termination = Termination::reached_s_max;
    }
    return tr;
}

// ---------------------------------------------------------------------------
// Classical reduction and Jacobi metric
// ---------------------------------------------------------------------------

struct ClassicalSample {
    double s;
    Vec x;
    Vec v;  // dx/ds
    Vec a;  // d^2x/ds^2 (coordinate acceleration)
};

struct ClassicalTrajectory {
    std::vector<ClassicalSample> samples;
    double E = 0.0;
    int orientation = 1;  // sign of lambda of the originating geodesic

    std::vector<ode::OdeNode> nodes() const {
        std::vector<ode::OdeNode> out;
        out.reserve(samples.size());
        for (const auto& c : samples) {
            const auto n = c.x.size();
            Vec y(2 * n), f(2 * n);
            y << c.x, c.v;
            f << c.v, c.a;
            out.push_back({c.s, y, f});
        }
        return out;
    }
};

struct ReductionReport {
    double max_residual = 0.0;  // max |D_s x' + grad V|_g
    double energy_drift = 0.0;  // max |E(s) - E|
};

struct Reduction {
    ClassicalTrajectory trajectory;
    ReductionReport report;
};

/// Classical energy g_S(v, v)/2 + V(x).
inline double classical_energy(const StaticSpacetime& st, const Vec& x, const Vec& v) {
    return 0.5 * v.dot(st.chart().metric_raw(x) * v) - 1.0 / st.beta_raw(x);
}

/// |a + Gamma(v, v) + grad V| measured in g_S.
inline double classical_residual(const StaticSpacetime& st, const Vec& x, const Vec& v, const Vec& a) {
    const Mat g = st.chart().metric_raw(x);
    const Vec r = a + st.chart().christoffel_raw(x).contract(v, v) + g.ldlt().solve(st.potential_grad(x));
    return std::sqrt(std::max(0.0, r.dot(g * r)));
}

/// Rescale the affine parameter so that |lambda| = sqrt(2) and read off the
/// spatial motion as a trajectory of the potential V = -1/beta.
inline Reduction reduce_to_classical(const StaticSpacetime& st, const GeodesicTrajectory& traj) {
    if (traj.samples.empty()) throw ValidationError("spacetime", "reduce_to_classical", "empty trajectory");
    const double lam0 = conserved_lambda(st, traj.samples.front().state);
    if (lam0 == 0.0)
        throw NotReducibleError("spacetime", "reduce_to_classical",
                                "lambda = 0: the geodesic stays in a slice t = const");
    const double scale = std::abs(lam0) / std::numbers::sqrt2;  // sigma = scale * s
    Reduction out;
    out.trajectory.orientation = lam0 > 0 ? 1 : -1;
    const bool have_deriv = traj.derivatives.size() == traj.samples.size();
    for (std::size_t i = 0; i < traj.samples.size(); ++i) {
        const auto& smp = traj.samples[i];
        const auto n = smp.state.x.size();
        Vec acc;
        if (have_deriv) {
            acc = traj.derivatives[i].segment(n + 2, n);
        } else {
            acc = geodesic_rhs(st, smp.state).x_ddot;
        }
        out.trajectory.samples.push_back(
            {smp.s * scale, smp.state.x, smp.state.x_dot / scale, acc / (scale * scale)});
    }
    const auto& first = out.trajectory.samples.front();
    out.trajectory.E = classical_energy(st, first.x, first.v);
    for (const auto& c : out.trajectory.samples) {
        out.report.max_residual = std::max(out.report.max_residual, classical_residual(st, c.x, c.v, c.a));
        out.report.energy_drift =
            std::max(out.report.energy_drift, std::abs(classical_energy(st, c.x, c.v) - out.trajectory.E));
    }
    return out;
}

struct LiftResult {
    GeodesicTrajectory trajectory;
    double residual = 0.0;  // max geodesic-equation defect over samples
};

/// Build the normalized geodesic over a classical trajectory:
/// t(s) = t0 + sqrt(2) int_0^s du / beta(x(u)), by Gauss-Legendre quadrature
/// on the Hermite interpolant of every sample interval.
inline LiftResult lift_classical(const StaticSpacetime& st, const ClassicalTrajectory& cl, double t0) {
    if (cl.samples.empty()) throw ValidationError("spacetime", "lift_classical", "empty classical trajectory");
    for (const auto& c : cl.samples) st.chart().require_in_domain(c.x, "lift_classical");
    static constexpr std::array<double, 5> gx{-0.9061798459386640, -0.5384693101056831, 0.0,
                                              0.5384693101056831, 0.9061798459386640};
    static constexpr std::array<double, 5> gw{0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                              0.4786286704993665, 0.2369268850561891};
    const auto nodes = cl.nodes();
    const double lam = cl.orientation * std::numbers::sqrt2;
    const auto n = cl.samples.front().x.size();
    LiftResult out;
    double t = t0;
    for (std::size_t i = 0; i < cl.samples.size(); ++i) {
        if (i > 0) {
            const auto& a = nodes[i - 1];
            const auto& b = nodes[i];
            const double h = b.s - a.s;
            double acc = 0.0;
            for (std::size_t q = 0; q < gx.size(); ++q) {
                const double s = a.s + 0.5 * h * (gx[q] + 1.0);
                const Vec y = ode::hermite(a, b, s);
                acc += gw[q] / st.beta_at(y.head(n));
            }
            t += lam * 0.5 * h * acc;
        }
        const auto& c = cl.samples[i];
        const double b = st.beta_at(c.x);
        GeodesicState s{t, c.x, lam / b, c.v};
        const Vec db = st.beta_grad_at(c.x);
        Vec f(2 * n + 2);
        f[0] = s.t_dot;
        f.segment(1, n) = c.v;
        f[n + 1] = -s.t_dot * db.dot(c.v) / b;
        f.segment(n + 2, n) = c.a;
        out.trajectory.samples.push_back({c.s, s});
        out.trajectory.derivatives.push_back(f);

        const Mat g = st.chart().metric_raw(c.x);
        const Vec r = c.a + st.chart().christoffel_raw(c.x).contract(c.v, c.v) +
                      0.5 * s.t_dot * s.t_dot * g.ldlt().solve(db);
        out.residual = std::max(out.residual, std::sqrt(std::max(0.0, r.dot(g * r))));
        out.residual = std::max(out.residual, std::abs(b * s.t_dot - lam));
    }
    update_drift(st, out.trajectory);
    out.trajectory.termination = Termination::reached_s_max;
    out.trajectory.s_exit = cl.samples.back().s;
    return out;
}

/// Jacobi metric g_E = (E - V) g_S of a classical trajectory.
inline Chart jacobi_chart(const StaticSpacetime& st, double energy) {
    const StaticSpacetime stc = st;
    return conformal_chart(
        st.chart(), [stc, energy](const Vec& x) { return energy + 1.0 / stc.beta_raw(x); },
        [stc](const Vec& x) -> Vec { return -stc.potential_grad(x); }, st.label() + ":jacobi");
}

/// Reparameterize by g_E arclength (d tau/ds = sqrt(2) (E - V) on shell) and
/// return the max g_E-norm of the g_E geodesic-equation residual. Each sample
/// is checked against its own energy level: the residual scales like
/// (E drift) / (E - V)^2 otherwise, and energy drift is reported separately.
inline double jacobi_check(const StaticSpacetime& st, const ClassicalTrajectory& cl, double floor = 1e-3) {
    if (cl.samples.empty()) throw ValidationError("spacetime", "jacobi_check", "empty classical trajectory");
    for (const auto& c : cl.samples) {
        const double w = cl.E - st.potential(c.x);
        if (!(w >= floor))
            throw NearTurningPointError("spacetime", "jacobi_check",
                                        "E - V = " + std::to_string(w) + " below floor at s = " + std::to_string(c.s));
    }
    double worst = 0.0;
    for (const auto& c : cl.samples) {
        const double e = classical_energy(st, c.x, c.v);
        const Chart jac = jacobi_chart(st, e);
        const double w = e - st.potential(c.x);
        const Vec dv = st.potential_grad(c.x);
        const Vec xp = c.v / (std::numbers::sqrt2 * w);
        const Vec xpp = c.a / (2 * w * w) + c.v * (dv.dot(c.v) / (2 * w * w * w));
        const Vec r = xpp + jac.christoffel_raw(c.x).contract(xp, xp);
        const Mat ge = w * st.chart().metric_raw(c.x);
        worst = std::max(worst, std::sqrt(std::max(0.0, r.dot(ge * r))));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Derived Riemannian metrics
// ---------------------------------------------------------------------------

/// Auxiliary Riemannian metric g_R = beta dt^2 + g_S on coordinates (t, x).
inline Chart aux_riemannian_chart(const StaticSpacetime& st) {
    const StaticSpacetime s = st;
    const int n = st.dim();
    auto domain = [s, n](const Vec& y) { return s.chart().in_domain(y.tail(n)); };
    auto metric = [s, n](const Vec& y) -> Mat {
        Mat g = Mat::Zero(n + 1, n + 1);
        const Vec x = y.tail(n);
        g(0, 0) = s.beta_raw(x);
        g.bottomRightCorner(n, n) = s.chart().metric_raw(x);
        return g;
    };
    auto deriv = [s, n](const Vec& y) -> std::vector<Mat> {
        const Vec x = y.tail(n);
        std::vector<Mat> d(static_cast<std::size_t>(n + 1), Mat::Zero(n + 1, n + 1));
        const Vec db = s.beta_grad_at(x);
        const auto dg = s.chart().metric_derivatives(x);
        for (int k = 0; k < n; ++k) {
            d[static_cast<std::size_t>(k + 1)](0, 0) = db[k];
            d[static_cast<std::size_t>(k + 1)].bottomRightCorner(n, n) = dg[static_cast<std::size_t>(k)];
        }
        return d;
    };
    Chart c(n + 1, st.label() + ":g_R", domain, metric);
    c = c.with_metric_derivatives(deriv).with_fd_step(st.chart().fd_step());
    if (st.chart().has_boundary()) c = c.with_clearance([s, n](const Vec& y) { return s.chart().clearance(y.tail(n)); });
    return c;
}

/// Optical metric g_S* = g_S / beta on the slice.
inline Chart optical_chart(const StaticSpacetime& st) {
    const StaticSpacetime s = st;
    return conformal_chart(
        st.chart(), [s](const Vec& x) { return 1.0 / s.beta_raw(x); },
        [s](const Vec& x) -> Vec {
            const double b = s.beta_raw(x);
            return -s.beta_grad_at(x) / (b * b);
        },
        st.label() + ":g_S_star");
}

}  // namespace staticgeo
