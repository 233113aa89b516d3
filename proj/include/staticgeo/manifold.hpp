#pragma once

// Riemannian slice machinery: single-patch charts with a domain predicate,
// metric and Christoffel evaluation (analytic or finite-difference), slice
// geodesics, discrete curves and the distance solver used for obstacle
// domains.

#include "staticgeo/error.hpp"
#include "staticgeo/ode.hpp"
#include "staticgeo/optimize.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace staticgeo {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Coordinates of a point on the slice S.
using SlicePoint = Vec;

inline std::string format_point(const Vec& x) {
    std::ostringstream os;
    os.precision(17);
    os << '(';
    for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
    os << ')';
    return os.str();
}

/// Christoffel symbols of the second kind, stored as Gamma^k_{ij}.
class Christoffel {
public:
    Christoffel() = default;
    explicit Christoffel(int dim) : n_(dim), data_(static_cast<std::size_t>(dim * dim * dim), 0.0) {}

    int dim() const noexcept { return n_; }
    double& operator()(int k, int i, int j) { return data_[idx(k, i, j)]; }
    double operator()(int k, int i, int j) const { return data_[idx(k, i, j)]; }

    /// Gamma^k_{ij} u^i v^j.
    Vec contract(const Vec& u, const Vec& v) const {
        Vec out = Vec::Zero(n_);
        for (int k = 0; k < n_; ++k) {
            double acc = 0.0;
            for (int i = 0; i < n_; ++i)
                for (int j = 0; j < n_; ++j) acc += (*this)(k, i, j) * u[i] * v[j];
            out[k] = acc;
        }
        return out;
    }

    double max_abs_diff(const Christoffel& o) const {
        double m = 0.0;
        for (std::size_t i = 0; i < data_.size(); ++i) m = std::max(m, std::abs(data_[i] - o.data_[i]));
        return m;
    }

private:
    std::size_t idx(int k, int i, int j) const {
        return static_cast<std::size_t>((k * n_ + i) * n_ + j);
    }
    int n_ = 0;
    std::vector<double> data_;
};

/// A single coordinate patch (S, g_S).
///
/// Evaluators must be pure. Optional pieces (analytic Christoffel symbols,
/// analytic metric derivatives, boundary clearance) fall back to generic
/// constructions when absent.
class Chart {
public:
    using DomainFn = std::function<bool(const Vec&)>;
    using MetricFn = std::function<Mat(const Vec&)>;
    using ChristoffelFn = std::function<Christoffel(const Vec&)>;
    using MetricDerivFn = std::function<std::vector<Mat>(const Vec&)>;
    using ClearanceFn = std::function<double(const Vec&)>;
    using SegmentClearanceFn = std::function<double(const Vec&, const Vec&)>;

    Chart(int dim, std::string label, DomainFn in_domain, MetricFn metric)
        : dim_(dim), label_(std::move(label)), in_domain_(std::move(in_domain)),
          metric_(std::move(metric)) {
        if (dim <= 0) throw ValidationError("manifold", "Chart", "dimension must be positive");
    }

    Chart with_christoffel(ChristoffelFn f) const { Chart c = *this; c.christoffel_ = std::move(f); return c; }
    Chart with_metric_derivatives(MetricDerivFn f) const { Chart c = *this; c.metric_deriv_ = std::move(f); return c; }
    /// Coordinate distance to the complement of the domain (<= 0 outside).
    Chart with_clearance(ClearanceFn f) const { Chart c = *this; c.clearance_ = std::move(f); return c; }
    /// Signed clearance of a straight coordinate segment; negative when the
    /// segment crosses the excluded set.
    Chart with_segment_clearance(SegmentClearanceFn f) const { Chart c = *this; c.segment_clearance_ = std::move(f); return c; }
    Chart with_fd_step(double h) const {
        if (!(h > 0)) throw ValidationError("manifold", "Chart", "fd_step must be positive");
        Chart c = *this; c.fd_step_ = h; return c;
    }
    Chart with_label(std::string l) const { Chart c = *this; c.label_ = std::move(l); return c; }
    Chart with_domain(DomainFn f) const { Chart c = *this; c.in_domain_ = std::move(f); return c; }

    int dim() const noexcept { return dim_; }
    const std::string& label() const noexcept { return label_; }
    double fd_step() const noexcept { return fd_step_; }
    bool has_analytic_christoffel() const noexcept { return static_cast<bool>(christoffel_); }
    bool has_clearance() const noexcept { return static_cast<bool>(clearance_); }
    const DomainFn& domain_predicate() const noexcept { return in_domain_; }

    bool in_domain(const Vec& x) const {
        return x.size() == dim_ && x.allFinite() && in_domain_(x);
    }

    void require_in_domain(const Vec& x, const char* op) const {
        if (!in_domain(x))
            throw OutOfDomainError("manifold", op,
                                   "point " + format_point(x) + " is outside the domain of chart '" +
                                       label_ + "'");
    }

    /// g_S at x; symmetric positive-definite.
    Mat metric_at(const Vec& x) const {
        require_in_domain(x, "metric_at");
        Mat g = metric_(x);
        check_spd(g, x, "metric_at");
        return g;
    }

    /// Metric without the domain/positivity checks (finite-difference probes
    /// and the inner loops that have already validated their inputs).
    Mat metric_raw(const Vec& x) const { return metric_(x); }

    /// Finite-difference step for coordinate i: relative fd_step with an
    /// absolute floor of 1e-8.
    double fd_step_for(const Vec& x, int i) const {
        return std::max(fd_step_ * std::abs(x[i]), 1e-8);
    }

    /// Partial derivatives d_k g_ij, one matrix per coordinate k.
    std::vector<Mat> metric_derivatives(const Vec& x) const {
        if (metric_deriv_) return metric_deriv_(x);
        std::vector<Mat> d(static_cast<std::size_t>(dim_));
        for (int k = 0; k < dim_; ++k) {
            const double h = fd_step_for(x, k);
            Vec xp = x, xm = x;
            xp[k] += h;
            xm[k] -= h;
            const bool p_ok = in_domain(xp), m_ok = in_domain(xm);
            if (p_ok && m_ok) {
                d[k] = (metric_(xp) - metric_(xm)) / (2 * h);
            } else if (p_ok) {
                Vec xpp = x;
                xpp[k] += 2 * h;
                d[k] = (-3 * metric_(x) + 4 * metric_(xp) - metric_(xpp)) / (2 * h);
            } else if (m_ok) {
                Vec xmm = x;
                xmm[k] -= 2 * h;
                d[k] = (3 * metric_(x) - 4 * metric_(xm) + metric_(xmm)) / (2 * h);
            } else {
                throw OutOfDomainError("manifold", "metric_derivatives",
                                       "no admissible finite-difference stencil at " + format_point(x));
            }
        }
        return d;
    }

    /// Gamma^k_{ij} at x: analytic evaluator when supplied, otherwise built
    /// from metric derivatives.
    Christoffel christoffel_at(const Vec& x) const {
        require_in_domain(x, "christoffel_at");
        if (christoffel_) return christoffel_(x);
        const Mat g = metric_(x);
        check_spd(g, x, "christoffel_at");
        return christoffel_from_derivatives(g, metric_derivatives(x));
    }

    /// Same as christoffel_at but skips validation; used inside ODE right-hand
    /// sides after the caller has checked the domain.
    Christoffel christoffel_raw(const Vec& x) const {
        if (christoffel_) return christoffel_(x);
        return christoffel_from_derivatives(metric_(x), metric_derivatives(x));
    }

    static Christoffel christoffel_from_derivatives(const Mat& g, const std::vector<Mat>& dg) {
        const int n = static_cast<int>(g.rows());
        const Mat ginv = g.inverse();
        Christoffel gam(n);
        for (int k = 0; k < n; ++k)
            for (int i = 0; i < n; ++i)
                for (int j = i; j < n; ++j) {
                    double acc = 0.0;
                    for (int l = 0; l < n; ++l)
                        acc += ginv(k, l) * (dg[i](l, j) + dg[j](l, i) - dg[l](i, j));
                    gam(k, i, j) = 0.5 * acc;
                    gam(k, j, i) = 0.5 * acc;
                }
        return gam;
    }

    /// Point clearance; +inf when the chart declares no boundary.
    double clearance(const Vec& x) const {
        if (!clearance_) return std::numeric_limits<double>::infinity();
        return clearance_(x);
    }

    /// Segment clearance. Without an analytic evaluator the point clearance,
    /// assumed 1-Lipschitz in coordinates, is minimized over the segment by
    /// bisection with the bound min >= (c(a) + c(b) - |b - a|) / 2.
    double segment_clearance(const Vec& a, const Vec& b) const {
        if (segment_clearance_) return segment_clearance_(a, b);
        if (!clearance_) return std::numeric_limits<double>::infinity();
        struct Piece {
            double u0, u1, c0, c1;
        };
        const double len = (b - a).norm();
        auto at = [&](double u) { return clearance_(Vec(a + u * (b - a))); };
        const double ca = at(0.0), cb = at(1.0);
        double best = std::min(ca, cb);
        std::vector<Piece> stack{{0.0, 1.0, ca, cb}};
        for (int evals = 0; !stack.empty() && evals < 400;) {
            const Piece p = stack.back();
            stack.pop_back();
            const double lb = 0.5 * (p.c0 + p.c1 - (p.u1 - p.u0) * len);
            if (lb >= best - 1e-12 * (1.0 + std::abs(best))) continue;
            if (best > 0.0 && lb >= 0.5 * best) continue;  // certified inside, value within 2x
            const double um = 0.5 * (p.u0 + p.u1);
            const double cm = at(um);
            ++evals;
            best = std::min(best, cm);
            stack.push_back({p.u0, um, p.c0, cm});
            stack.push_back({um, p.u1, cm, p.c1});
        }
        return best;
    }

    bool has_boundary() const noexcept {
        return static_cast<bool>(clearance_) || static_cast<bool>(segment_clearance_);
    }

private:
    void check_spd(const Mat& g, const Vec& x, const char* op) const {
        if (g.rows() != dim_ || g.cols() != dim_ || !g.allFinite())
            throw DegenerateMetricError("manifold", op, "malformed metric at " + format_point(x));
        if ((g - g.transpose()).lpNorm<Eigen::Infinity>() > 1e-12 * std::max(1.0, g.lpNorm<Eigen::Infinity>()))
            throw DegenerateMetricError("manifold", op, "metric not symmetric at " + format_point(x));
        Eigen::LLT<Mat> llt(g);
        if (llt.info() != Eigen::Success)
            throw DegenerateMetricError("manifold", op, "metric not positive-definite at " + format_point(x));
    }

    int dim_;
    std::string label_;
    DomainFn in_domain_;
    MetricFn metric_;
    ChristoffelFn christoffel_;
    MetricDerivFn metric_deriv_;
    ClearanceFn clearance_;
    SegmentClearanceFn segment_clearance_;
    double fd_step_ = 1e-6;
};

/// Conformal rescaling W * g of a chart. Christoffel symbols follow the
/// conformal transformation rule
///   G^k_ij = Gamma^k_ij + (d_i W delta^k_j + d_j W delta^k_i - g_ij grad^k W) / (2W).
inline Chart conformal_chart(const Chart& base, std::function<double(const Vec&)> factor,
                             std::function<Vec(const Vec&)> factor_grad, std::string label) {
    auto metric = [base, factor](const Vec& x) -> Mat { return factor(x) * base.metric_raw(x); };
    auto christ = [base, factor, factor_grad](const Vec& x) -> Christoffel {
        const int n = base.dim();
        Christoffel gam = base.christoffel_raw(x);
        const double w = factor(x);
        const Vec dw = factor_grad(x);
        const Mat g = base.metric_raw(x);
        const Vec grad = g.ldlt().solve(dw);
        for (int k = 0; k < n; ++k)
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    double add = -g(i, j) * grad[k];
                    if (k == j) add += dw[i];
                    if (k == i) add += dw[j];
                    gam(k, i, j) += add / (2 * w);
                }
        return gam;
    };
    auto deriv = [base, factor, factor_grad](const Vec& x) -> std::vector<Mat> {
        const double w = factor(x);
        const Vec dw = factor_grad(x);
        const Mat g = base.metric_raw(x);
        std::vector<Mat> d = base.metric_derivatives(x);
        for (std::size_t k = 0; k < d.size(); ++k) d[k] = dw[static_cast<Eigen::Index>(k)] * g + w * d[k];
        return d;
    };
    Chart c(base.dim(), std::move(label), base.domain_predicate(), metric);
    c = c.with_christoffel(christ).with_metric_derivatives(deriv).with_fd_step(base.fd_step());
    if (base.has_boundary()) {
        c = c.with_clearance([base](const Vec& x) { return base.clearance(x); })
                .with_segment_clearance([base](const Vec& a, const Vec& b) { return base.segment_clearance(a, b); });
    }
    return c;
}

namespace charts {

inline Chart euclidean(int n) {
    return Chart(n, "euclidean" + std::to_string(n), [](const Vec&) { return true; },
                 [n](const Vec&) -> Mat { return Mat::Identity(n, n); })
        .with_christoffel([n](const Vec&) { return Christoffel(n); })
        .with_metric_derivatives([n](const Vec&) {
            return std::vector<Mat>(static_cast<std::size_t>(n), Mat::Zero(n, n));
        });
}

/// Polar coordinates (r, theta) on the punctured plane, r > 0.
inline Chart polar() {
    return Chart(2, "polar", [](const Vec& x) { return x[0] > 0; },
                 [](const Vec& x) -> Mat {
                     Mat g = Mat::Identity(2, 2);
                     g(1, 1) = x[0] * x[0];
                     return g;
                 })
        .with_christoffel([](const Vec& x) {
            Christoffel c(2);
            c(0, 1, 1) = -x[0];
            c(1, 0, 1) = c(1, 1, 0) = 1.0 / x[0];
            return c;
        })
        .with_clearance([](const Vec& x) { return x[0]; });
}

/// Radial line of the Schwarzschild exterior, g_rr = 1 / (1 - 2m/r), r > 2m.
inline Chart schwarzschild_radial(double m) {
    return Chart(1, "schwarzschild_radial", [m](const Vec& x) { return x[0] > 2 * m; },
                 [m](const Vec& x) -> Mat { return Mat::Constant(1, 1, 1.0 / (1.0 - 2 * m / x[0])); })
        .with_clearance([m](const Vec& x) { return x[0] - 2 * m; });
}

/// Analytic Christoffel symbol of schwarzschild_radial: Gamma^r_rr = -m / (r (r - 2m)).
inline Christoffel schwarzschild_radial_christoffel(double m, const Vec& x) {
    Christoffel c(1);
    c(0, 0, 0) = -m / (x[0] * (x[0] - 2 * m));
    return c;
}

}  // namespace charts

/// Discrete curve on the uniform grid s_i = i/N, i = 0..N.
class SliceCurve {
public:
    SliceCurve() = default;
    SliceCurve(std::vector<Vec> nodes) : nodes_(std::move(nodes)) {
        if (nodes_.size() < 3)
            throw ValidationError("manifold", "SliceCurve", "a curve needs N >= 2 segments");
        const auto n = nodes_.front().size();
        for (const auto& p : nodes_)
            if (p.size() != n) throw ValidationError("manifold", "SliceCurve", "inconsistent node dimension");
    }

    /// Straight coordinate chord with N segments.
    static SliceCurve chord(const Vec& a, const Vec& b, int segments) {
        std::vector<Vec> pts;
        pts.reserve(static_cast<std::size_t>(segments + 1));
        for (int i = 0; i <= segments; ++i) pts.push_back(a + (static_cast<double>(i) / segments) * (b - a));
        pts.front() = a;
        pts.back() = b;
        return SliceCurve(std::move(pts));
    }

    int segments() const noexcept { return static_cast<int>(nodes_.size()) - 1; }
    int dim() const noexcept { return static_cast<int>(nodes_.front().size()); }
    double step() const noexcept { return 1.0 / segments(); }
    const std::vector<Vec>& nodes() const noexcept { return nodes_; }
    const Vec& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
    const Vec& front() const { return nodes_.front(); }
    const Vec& back() const { return nodes_.back(); }

    /// Interior nodes flattened into one vector (the optimization variables).
    Vec interior() const {
        const int n = dim(), m = segments() - 1;
        Vec z(static_cast<Eigen::Index>(n) * m);
        for (int i = 0; i < m; ++i) z.segment(static_cast<Eigen::Index>(i) * n, n) = nodes_[static_cast<std::size_t>(i + 1)];
        return z;
    }

    SliceCurve with_interior(const Vec& z) const {
        SliceCurve c = *this;
        const int n = dim(), m = segments() - 1;
        for (int i = 0; i < m; ++i) c.nodes_[static_cast<std::size_t>(i + 1)] = z.segment(static_cast<Eigen::Index>(i) * n, n);
        return c;
    }

    bool in_domain(const Chart& chart) const {
        return std::all_of(nodes_.begin(), nodes_.end(), [&](const Vec& p) { return chart.in_domain(p); });
    }

    double max_node_norm() const {
        double m = 0.0;
        for (const auto& p : nodes_) m = std::max(m, p.lpNorm<Eigen::Infinity>());
        return m;
    }

    /// Max coordinate deviation between two curves on the same grid.
    double sup_distance(const SliceCurve& o) const {
        double m = 0.0;
        for (std::size_t i = 0; i < nodes_.size(); ++i) m = std::max(m, (nodes_[i] - o.nodes_[i]).lpNorm<Eigen::Infinity>());
        return m;
    }

private:
    std::vector<Vec> nodes_;
};

/// Discrete length sum_i sqrt(g(m_i)(dx_i, dx_i)) with metric at segment midpoints.
inline double discrete_length(const Chart& chart, const SliceCurve& c) {
    double len = 0.0;
    for (int i = 0; i < c.segments(); ++i) {
        const Vec d = c.node(i + 1) - c.node(i);
        const Mat g = chart.metric_raw(0.5 * (c.node(i) + c.node(i + 1)));
        len += std::sqrt(std::max(0.0, d.dot(g * d)));
    }
    return len;
}

/// Kinetic term 1/2 int g(x', x') ds by the midpoint rule, with its gradient
/// with respect to every node (endpoints included).
inline double kinetic_energy(const Chart& chart, const SliceCurve& c, std::vector<Vec>* grad) {
    const int n = c.dim(), segs = c.segments();
    const double inv_h = static_cast<double>(segs);
    double e = 0.0;
    if (grad) grad->assign(static_cast<std::size_t>(segs + 1), Vec::Zero(n));
    for (int i = 0; i < segs; ++i) {
        const Vec d = c.node(i + 1) - c.node(i);
        const Vec m = 0.5 * (c.node(i) + c.node(i + 1));
        const Mat g = chart.metric_raw(m);
        const Vec gd = g * d;
        e += 0.5 * inv_h * d.dot(gd);
        if (grad) {
            Vec dm(n);
            const auto dg = chart.metric_derivatives(m);
            for (int k = 0; k < n; ++k) dm[k] = 0.25 * inv_h * d.dot(dg[static_cast<std::size_t>(k)] * d);
            (*grad)[static_cast<std::size_t>(i)] += -inv_h * gd + dm;
            (*grad)[static_cast<std::size_t>(i + 1)] += inv_h * gd + dm;
        }
    }
    return e;
}

/// Quadratic exterior penalty on segments crossing the excluded set:
/// sum_i max(0, -c_i)^2 with c_i the segment clearance. Returns the penalty
/// and the worst violation; accumulates `weight *` gradient into grad.
struct PenaltyValue {
    double value = 0.0;
    double violation = 0.0;
    double min_clearance = std::numeric_limits<double>::infinity();
};

inline PenaltyValue segment_penalty(const Chart& chart, const SliceCurve& c, double weight,
                                    std::vector<Vec>* grad) {
    PenaltyValue pv;
    if (!chart.has_boundary()) return pv;
    const int n = c.dim();
    for (int i = 0; i < c.segments(); ++i) {
        const Vec& a = c.node(i);
        const Vec& b = c.node(i + 1);
        const double cl = chart.segment_clearance(a, b);
        pv.min_clearance = std::min(pv.min_clearance, cl);
        if (cl >= 0.0) continue;
        pv.violation = std::max(pv.violation, -cl);
        pv.value += weight * cl * cl;
    }
    if (!grad || !(pv.min_clearance < 0.0)) return pv;
    // Central differences of the penalty on the two segments touching a node.
    // A single segment's clearance jumps when a node crosses the boundary line
    // (the crossing moves to the neighbouring segment); the sum does not.
    auto local = [&](const std::vector<Vec>& nodes, int i) {
        double v = 0.0;
        for (int j = std::max(0, i - 1); j <= std::min(c.segments() - 1, i); ++j) {
            const double cl = chart.segment_clearance(nodes[static_cast<std::size_t>(j)], nodes[static_cast<std::size_t>(j + 1)]);
            if (cl < 0.0) v += cl * cl;
        }
        return v;
    };
    std::vector<Vec> nodes = c.nodes();
    std::vector<char> active(nodes.size(), 0);
    for (int i = 0; i < c.segments(); ++i)
        if (chart.segment_clearance(nodes[static_cast<std::size_t>(i)], nodes[static_cast<std::size_t>(i + 1)]) < 0.0)
            active[static_cast<std::size_t>(i)] = active[static_cast<std::size_t>(i + 1)] = 1;
    for (int i = 0; i <= c.segments(); ++i) {
        if (!active[static_cast<std::size_t>(i)]) continue;
        Vec& p = nodes[static_cast<std::size_t>(i)];
        for (int k = 0; k < n; ++k) {
            const double x = p[k];
            const double h = 1e-7 * std::max(1.0, std::abs(x));
            p[k] = x + h;
            const double up = local(nodes, i);
            p[k] = x - h;
            const double dn = local(nodes, i);
            p[k] = x;
            (*grad)[static_cast<std::size_t>(i)][k] += weight * (up - dn) / (2 * h);
        }
    }
    return pv;
}

/// Move a single out-of-domain point to a nearby admissible one by searching
/// on spheres of growing radius. Deterministic given the RNG state.
inline std::optional<Vec> project_into_domain(const Chart& chart, const Vec& x, double scale,
                                              std::mt19937_64& rng) {
    if (chart.in_domain(x)) return x;
    std::normal_distribution<double> nd(0.0, 1.0);
    for (double r = 1e-6 * scale; r <= scale; r *= 4.0) {
        for (int t = 0; t < 32; ++t) {
            Vec d(x.size());
            for (Eigen::Index k = 0; k < d.size(); ++k) d[k] = nd(rng);
            const Vec y = x + r * d.normalized();
            if (chart.in_domain(y)) return y;
        }
    }
    return std::nullopt;
}

/// Project every interior node of a seed curve into the domain; nullopt if any
/// node cannot be placed.
inline std::optional<SliceCurve> project_curve(const Chart& chart, const SliceCurve& c, double scale,
                                               std::mt19937_64& rng) {
    std::vector<Vec> pts = c.nodes();
    for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
        auto p = project_into_domain(chart, pts[i], scale, rng);
        if (!p) return std::nullopt;
        pts[i] = *p;
    }
    return SliceCurve(std::move(pts));
}

/// Seed curves: the straight chord plus `count` random Fourier-mode
/// perturbations sum_k a_k sin(k pi s) with amplitudes decaying like 1/k.
inline std::vector<SliceCurve> seed_curves(const Vec& x0, const Vec& x1, int segments, int count,
                                           double amplitude, std::mt19937_64& rng) {
    std::vector<SliceCurve> seeds;
    seeds.push_back(SliceCurve::chord(x0, x1, segments));
    std::normal_distribution<double> nd(0.0, 1.0);
    constexpr int modes = 3;
    for (int c = 0; c < count; ++c) {
        std::vector<Vec> coef;
        for (int k = 1; k <= modes; ++k) {
            Vec a(x0.size());
            for (Eigen::Index j = 0; j < a.size(); ++j) a[j] = nd(rng) * amplitude / k;
            coef.push_back(a);
        }
        std::vector<Vec> pts = seeds.front().nodes();
        for (int i = 1; i < segments; ++i) {
            const double s = static_cast<double>(i) / segments;
            for (int k = 1; k <= modes; ++k)
                pts[static_cast<std::size_t>(i)] += std::sin(k * std::numbers::pi * s) * coef[static_cast<std::size_t>(k - 1)];
        }
        seeds.emplace_back(std::move(pts));
    }
    return seeds;
}

// ---------------------------------------------------------------------------
// Slice geodesics
// ---------------------------------------------------------------------------

enum class Termination { reached_s_max, left_domain, blow_up };

inline const char* to_string(Termination t) {
    switch (t) {
        case Termination::reached_s_max: return "reached_s_max";
        case Termination::left_domain: return "left_domain";
        case Termination::blow_up: return "blow_up";
    }
    return "?";
}

struct SliceGeodesicOptions {
    double tol = 1e-10;
    /// Coordinate-norm level at which growth is examined for blow-up.
    double blowup_threshold = 1e8;
    /// Blow-up is declared when |x| / (d|x|/ds) falls below this scale
    /// (finite-parameter escape); slower (exponential) growth keeps going.
    double blowup_rate = 1e-2;
    /// Unconditional stop once the coordinate norm exceeds this.
    double hard_cap = 1e200;
};

/// Riemannian geodesic of a chart, state (x, v), x'' = -Gamma(v, v).
struct SliceGeodesic {
    std::vector<ode::OdeNode> nodes;  // y = (x, v)
    Termination termination = Termination::reached_s_max;
    double s_end = 0.0;

    Vec position(double s) const { return ode::dense_eval(nodes, s).head(nodes.front().y.size() / 2); }
};

inline SliceGeodesic integrate_slice_geodesic(const Chart& chart, const Vec& x0, const Vec& v0, double s_max,
                                              const SliceGeodesicOptions& o = {}) {
    chart.require_in_domain(x0, "integrate_slice_geodesic");
    const int n = chart.dim();
    Vec y0(2 * n);
    y0 << x0, v0;
    auto rhs = [&](double, const Vec& y) -> std::optional<Vec> {
        const Vec x = y.head(n);
        if (!chart.in_domain(x)) return std::nullopt;
        const Vec v = y.tail(n);
        Vec f(2 * n);
        f.head(n) = v;
        f.tail(n) = -chart.christoffel_raw(x).contract(v, v);
        if (!f.allFinite()) return std::nullopt;
        return f;
    };
    SliceGeodesic out;
    bool blew_up = false;
    auto observer = [&](const ode::OdeNode& node) {
        out.nodes.push_back(node);
        const Vec x = node.y.head(n);
        const double r = x.norm();
        if (r > o.hard_cap) { blew_up = true; return false; }
        if (r > o.blowup_threshold) {
            const double rdot = x.dot(node.y.tail(n)) / r;
            if (rdot > 0 && r / rdot < o.blowup_rate) { blew_up = true; return false; }
        }
        return true;
    };
    ode::OdeOptions oo;
    oo.rtol = oo.atol = o.tol;
    const auto res = ode::integrate(rhs, 0.0, y0, s_max, oo, observer);
    out.s_end = res.s_stop;
    if (blew_up) {
        out.termination = Termination::blow_up;
    } else if (res.stop == ode::OdeStop::invalid_state) {
        out.termination = Termination::left_domain;
    } else if (res.stop == ode::OdeStop::step_underflow) {
        // Error-driven collapse of the step while escaping: treat like blow-up
        // only if the coordinates are already large, otherwise report stiffness.
        if (out.nodes.back().y.head(n).norm() > o.blowup_threshold) {
            out.termination = Termination::blow_up;
        } else {
            throw StiffnessError("manifold", "integrate_slice_geodesic",
                                 "step size underflow at s = " + std::to_string(res.s_stop));
        }
    } else {
        out.termination = Termination::reached_s_max;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Slice distance
// ---------------------------------------------------------------------------

struct DistanceOptions {
    int segments = 128;
    int n_seeds = 3;
    double seed_amplitude = 0.25;  // relative to the chord length + 1
    std::uint64_t seed = 1;
    double boundary_eps = 1e-4;
    double violation_tol = 1e-8;
    double penalty0 = 1e3;
    double penalty_max = 1e18;
    double grad_tol = 1e-9;  // on the energy gradient scaled by N
    int max_iter = 4000;     // per continuation stage
};

struct DistanceResult {
    double length = 0.0;
    bool attained = true;
    std::optional<SliceCurve> minimizer;
    int iterations = 0;
    double min_clearance = std::numeric_limits<double>::infinity();
    double violation = 0.0;
};

namespace detail {

struct CurveMinimization {
    SliceCurve curve;
    double energy = 0.0;
    PenaltyValue penalty;
    int iterations = 0;
    bool feasible = false;
};

/// Minimize discrete energy + penalty from one seed with a doubling penalty
/// weight until the worst violation is below tolerance.
inline CurveMinimization minimize_curve_energy(const Chart& chart, SliceCurve seed, const DistanceOptions& o) {
    CurveMinimization out{seed, 0.0, {}, 0, false};
    const int n = seed.dim();
    double weight = o.penalty0;
    opt::LbfgsOptions lo;
    lo.max_iter = o.max_iter;
    lo.grad_tol = o.grad_tol / seed.segments();
    SliceCurve base = seed;
    Vec z = seed.interior();
    while (true) {
        auto objective = [&](const Vec& zz, Vec& g) -> std::optional<double> {
            const SliceCurve c = base.with_interior(zz);
            for (int i = 1; i < c.segments(); ++i)
                if (!chart.in_domain(c.node(i))) return std::nullopt;
            std::vector<Vec> gr;
            double e = kinetic_energy(chart, c, &gr);
            const auto pv = segment_penalty(chart, c, weight, &gr);
            g.resize(zz.size());
            for (int i = 1; i < c.segments(); ++i) g.segment(static_cast<Eigen::Index>(i - 1) * n, n) = gr[static_cast<std::size_t>(i)];
            return e + pv.value;
        };
        const auto r = opt::lbfgs(objective, z, lo);
        out.iterations += r.iterations;
        z = r.x;
        out.curve = base.with_interior(z);
        out.penalty = segment_penalty(chart, out.curve, weight, nullptr);
        if (out.penalty.violation <= o.violation_tol) break;
        weight *= 2.0;
        if (weight > o.penalty_max) break;
    }
    out.energy = kinetic_energy(chart, out.curve, nullptr);
    out.feasible = out.penalty.violation <= o.violation_tol && out.curve.in_domain(chart);
    return out;
}

}  // namespace detail

/// Infimum of discrete curve length between x0 and x1 over minimizations from
/// several seeds. `attained` is false when the best curve presses against the
/// domain boundary (clearance below boundary_eps).
inline DistanceResult slice_distance(const Chart& chart, const Vec& x0, const Vec& x1, const DistanceOptions& o = {}) {
    chart.require_in_domain(x0, "slice_distance");
    chart.require_in_domain(x1, "slice_distance");
    if (o.segments < 2) throw ValidationError("manifold", "slice_distance", "segments must be >= 2");
    DistanceResult res;
    if ((x0 - x1).lpNorm<Eigen::Infinity>() == 0.0) {
        res.length = 0.0;
        res.attained = true;
        res.minimizer = SliceCurve::chord(x0, x1, o.segments);
        return res;
    }
    std::mt19937_64 rng(o.seed);
    const double scale = (x1 - x0).norm() + 1.0;
    auto seeds = seed_curves(x0, x1, o.segments, o.n_seeds, o.seed_amplitude * scale, rng);
    std::optional<detail::CurveMinimization> best;
    int total_iter = 0;
    for (const auto& s : seeds) {
        auto projected = project_curve(chart, s, scale, rng);
        if (!projected) continue;
        auto m = detail::minimize_curve_energy(chart, *projected, o);
        total_iter += m.iterations;
        if (!m.feasible) continue;
        const double len = discrete_length(chart, m.curve);
        if (!best || len < discrete_length(chart, best->curve)) best = std::move(m);
    }
    if (!best)
        throw UnreachableError("manifold", "slice_distance",
                               "no admissible curve joins " + format_point(x0) + " and " + format_point(x1));
    res.length = discrete_length(chart, best->curve);
    res.iterations = total_iter;
    res.min_clearance = best->penalty.min_clearance;
    res.violation = best->penalty.violation;
    res.attained = !(res.min_clearance < o.boundary_eps);
    if (res.attained) res.minimizer = best->curve;
    return res;
}

}  // namespace staticgeo
