#pragma once

// Growth exponents of beta and 1/beta, completeness probes for g, g_R and
// g_S* = g_S / beta, and causal arrival times.
//
// Probes are semi-decisions: a witness (finite-parameter blow-up or domain
// exit) is evidence of incompleteness; "no_witness" only records that none
// of n_samples geodesics escaped before s_max.

#include "staticgeo/error.hpp"
#include "staticgeo/manifold.hpp"
#include "staticgeo/parallel.hpp"
#include "staticgeo/random.hpp"
#include "staticgeo/spacetime.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace staticgeo {

enum class GrowthTarget { beta, inv_beta };
enum class GrowthClass { subquadratic, quadratic, superquadratic };

inline const char* to_string(GrowthTarget w) { return w == GrowthTarget::beta ? "beta" : "inv_beta"; }

inline const char* to_string(GrowthClass c) {
    switch (c) {
        case GrowthClass::subquadratic: return "subquadratic";
        case GrowthClass::quadratic: return "quadratic";
        case GrowthClass::superquadratic: return "superquadratic";
    }
    return "?";
}

struct GrowthOptions {
    int n_rays = 16;  // directions for dim >= 2; a line uses both directions
    double band_lo = 1.9;
    double band_hi = 2.1;
    double tol = 1e-10;
};

struct GrowthReport {
    GrowthTarget which = GrowthTarget::beta;
    double exponent = 0.0;
    GrowthClass classification = GrowthClass::subquadratic;
    double fit_residual = 0.0;  // rms of the log-log fit
    Vec base_point;
    std::vector<double> radii;
    std::vector<double> max_values;  // per-radius maximum of f over the rays
    double amplitude = 0.0;
    std::vector<std::string> warnings;
};

inline GrowthClass classify_exponent(double p, const GrowthOptions& o = {}) {
    if (p < o.band_lo) return GrowthClass::subquadratic;
    if (p <= o.band_hi) return GrowthClass::quadratic;
    return GrowthClass::superquadratic;
}

namespace detail {

/// Unit directions at x for g_S: both signs on a line, n_rays angles in a
/// plane, and the signed coordinate axes plus diagonals beyond that.
inline std::vector<Vec> ray_directions(const Chart& chart, const Vec& x, int n_rays) {
    const int n = chart.dim();
    std::vector<Vec> dirs;
    if (n == 1) {
        dirs = {Vec::Constant(1, 1.0), Vec::Constant(1, -1.0)};
    } else if (n == 2) {
        for (int k = 0; k < n_rays; ++k) {
            const double a = 2 * std::numbers::pi * k / n_rays;
            Vec d(2);
            d << std::cos(a), std::sin(a);
            dirs.push_back(d);
        }
    } else {
        for (int k = 0; k < n; ++k)
            for (double sgn : {1.0, -1.0}) dirs.push_back(sgn * Vec::Unit(n, k));
        dirs.push_back(Vec::Ones(n));
        dirs.push_back(-Vec::Ones(n));
    }
    const Mat g = chart.metric_at(x);
    for (auto& d : dirs) d /= std::sqrt(d.dot(g * d));
    return dirs;
}

}  // namespace detail

/// Sample f along slice-geodesic rays from `base` at the g_S distances `radii`,
/// take the per-radius maximum over rays and fit log f against log d by least
/// squares over the outer half of the radii.
inline GrowthReport growth_exponent(const StaticSpacetime& st, GrowthTarget which, const Vec& base,
                                    const std::vector<double>& radii, const GrowthOptions& o = {}) {
    if (radii.size() < 6) throw ValidationError("diagnostics", "growth_exponent", "need at least 6 radii");
    for (std::size_t i = 0; i < radii.size(); ++i)
        if (!(radii[i] > 0) || (i > 0 && !(radii[i] > radii[i - 1])))
            throw ValidationError("diagnostics", "growth_exponent", "radii must be positive and increasing");
    if (radii.back() < 10 * radii.front())
        throw ValidationError("diagnostics", "growth_exponent", "radii must span at least one decade");
    st.chart().require_in_domain(base, "growth_exponent");

    GrowthReport rep;
    rep.which = which;
    rep.base_point = base;
    rep.radii = radii;
    rep.max_values.assign(radii.size(), -std::numeric_limits<double>::infinity());
    const auto dirs = detail::ray_directions(st.chart(), base, o.n_rays);
    SliceGeodesicOptions so;
    so.tol = o.tol;
    for (std::size_t r = 0; r < dirs.size(); ++r) {
        const auto ray = integrate_slice_geodesic(st.chart(), base, dirs[r], radii.back(), so);
        for (std::size_t i = 0; i < radii.size(); ++i) {
            if (radii[i] > ray.s_end) {
                rep.warnings.push_back("ray " + std::to_string(r) + " truncated at s = " + std::to_string(ray.s_end) +
                                       " (" + to_string(ray.termination) + ")");
                break;
            }
            const Vec x = ray.position(radii[i]);
            const double b = st.beta_at(x);
            const double f = which == GrowthTarget::beta ? b : 1.0 / b;
            rep.max_values[i] = std::max(rep.max_values[i], f);
        }
    }
    const std::size_t first = radii.size() / 2;
    std::vector<double> lx, ly;
    for (std::size_t i = first; i < radii.size(); ++i) {
        if (!(rep.max_values[i] > 0) || !std::isfinite(rep.max_values[i])) continue;
        lx.push_back(std::log(radii[i]));
        ly.push_back(std::log(rep.max_values[i]));
    }
    if (lx.size() < 2) throw UnreachableError("diagnostics", "growth_exponent", "rays do not reach the outer radii");
    Eigen::MatrixXd a(static_cast<Eigen::Index>(lx.size()), 2);
    Vec y(static_cast<Eigen::Index>(ly.size()));
    for (std::size_t i = 0; i < lx.size(); ++i) {
        a(static_cast<Eigen::Index>(i), 0) = lx[i];
        a(static_cast<Eigen::Index>(i), 1) = 1.0;
        y[static_cast<Eigen::Index>(i)] = ly[i];
    }
    const Vec coef = a.colPivHouseholderQr().solve(y);
    rep.exponent = coef[0];
    rep.amplitude = std::exp(coef[1]);
    rep.fit_residual = std::sqrt((a * coef - y).squaredNorm() / static_cast<double>(lx.size()));
    rep.classification = classify_exponent(rep.exponent, o);
    return rep;
}

/// Geometric sequence of `count` radii from r0 to r1.
inline std::vector<double> geometric_radii(double r0, double r1, int count) {
    std::vector<double> r;
    for (int i = 0; i < count; ++i) r.push_back(r0 * std::pow(r1 / r0, static_cast<double>(i) / (count - 1)));
    r.back() = r1;
    return r;
}

// ---------------------------------------------------------------------------
// Completeness probes
// ---------------------------------------------------------------------------

enum class ProbeMetric { g, g_R, g_S_star };
enum class ProbeVerdict { witness_found, no_witness };

inline const char* to_string(ProbeMetric m) {
    switch (m) {
        case ProbeMetric::g: return "g";
        case ProbeMetric::g_R: return "g_R";
        case ProbeMetric::g_S_star: return "g_S_star";
    }
    return "?";
}

inline const char* to_string(ProbeVerdict v) {
    return v == ProbeVerdict::witness_found ? "witness_found" : "no_witness";
}

struct ProbeOptions {
    int n_samples = 100;
    double s_max = 100.0;
    double tol = 1e-10;
    std::uint64_t seed = 1;
    double blowup_threshold = 1e8;
    Vec box_lo, box_hi;  // sampling box for initial points
};

struct ProbeReport {
    ProbeVerdict verdict = ProbeVerdict::no_witness;
    /// First escaping geodesic. For g_R and g_S* it is the Riemannian geodesic
    /// stored in the same (t, x, t', x') layout (conserved quantities unset).
    std::optional<GeodesicTrajectory> witness;
    int witness_sample = -1;
    int witnesses = 0;
    int failures = 0;  // runs stopped by step-size collapse
    int n_samples = 0;
    double s_max = 0.0;
    ProbeMetric metric_probed = ProbeMetric::g;
};

namespace detail {

struct ProbeRun {
    bool witness = false;
    bool failed = false;
    std::optional<GeodesicTrajectory> traj;
};

inline Vec random_unit(int n, const Mat& g, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Vec v(n);
    do {
        for (int k = 0; k < n; ++k) v[k] = nd(rng);
    } while (v.norm() < 1e-12);
    return v / std::sqrt(v.dot(g * v));
}

inline GeodesicTrajectory slice_to_trajectory(const SliceGeodesic& sg, bool with_time) {
    GeodesicTrajectory tr;
    const auto m = sg.nodes.front().y.size() / 2;
    for (const auto& node : sg.nodes) {
        GeodesicState s;
        if (with_time) {
            s = GeodesicState{node.y[0], node.y.segment(1, m - 1), node.y[m], node.y.segment(m + 1, m - 1)};
        } else {
            s = GeodesicState{0.0, node.y.head(m), 0.0, node.y.tail(m)};
        }
        tr.samples.push_back({node.s, s});
        tr.derivatives.push_back(s.pack() * 0.0);
    }
    tr.termination = sg.termination;
    tr.s_exit = sg.s_end;
    return tr;
}

}  // namespace detail

inline ProbeReport completeness_probe(const StaticSpacetime& st, ProbeMetric metric, const ProbeOptions& o) {
    if (o.n_samples < 1) throw ValidationError("diagnostics", "completeness_probe", "n_samples must be >= 1");
    if (!(o.s_max > 0)) throw ValidationError("diagnostics", "completeness_probe", "s_max must be positive");
    if (!(o.tol > 0)) throw ValidationError("diagnostics", "completeness_probe", "tol must be positive");
    const int n = st.dim();
    if (o.box_lo.size() != n || o.box_hi.size() != n)
        throw ValidationError("diagnostics", "completeness_probe", "sampling box has the wrong dimension");
    const Chart aux = aux_riemannian_chart(st);
    const Chart opt = optical_chart(st);

    std::vector<detail::ProbeRun> runs(static_cast<std::size_t>(o.n_samples));
    parallel_for(runs.size(), [&](std::size_t i) {
        std::mt19937_64 rng(split_seed(o.seed, i));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        Vec x(n);
        bool placed = false;
        for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
            for (int k = 0; k < n; ++k) x[k] = o.box_lo[k] + (o.box_hi[k] - o.box_lo[k]) * u(rng);
            placed = st.chart().in_domain(x);
        }
        if (!placed) throw ValidationError("diagnostics", "completeness_probe", "sampling box misses the domain");
        auto& run = runs[i];
        try {
            if (metric == ProbeMetric::g) {
                Mat gr = Mat::Zero(n + 1, n + 1);
                gr(0, 0) = st.beta_at(x);
                gr.bottomRightCorner(n, n) = st.chart().metric_at(x);
                const Vec v = detail::random_unit(n + 1, gr, rng);
                IntegrateOptions io;
                io.tol = o.tol;
                io.blowup_threshold = o.blowup_threshold;
                auto tr = integrate_geodesic(st, GeodesicState{0.0, x, v[0], v.tail(n)}, o.s_max, io);
                run.witness = tr.termination != Termination::reached_s_max;
                run.traj = std::move(tr);
            } else {
                const bool with_time = metric == ProbeMetric::g_R;
                const Chart& ch = with_time ? aux : opt;
                Vec y = with_time ? Vec(Vec::Zero(n + 1)) : x;
                if (with_time) y.tail(n) = x;
                const Vec v = detail::random_unit(ch.dim(), ch.metric_at(y), rng);
                SliceGeodesicOptions so;
                so.tol = o.tol;
                so.blowup_threshold = o.blowup_threshold;
                const auto sg = integrate_slice_geodesic(ch, y, v, o.s_max, so);
                run.witness = sg.termination != Termination::reached_s_max;
                run.traj = detail::slice_to_trajectory(sg, with_time);
            }
        } catch (const StiffnessError&) {
            run.failed = true;
        }
    });

    ProbeReport rep;
    rep.metric_probed = metric;
    rep.n_samples = o.n_samples;
    rep.s_max = o.s_max;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        if (runs[i].failed) ++rep.failures;
        if (!runs[i].witness) continue;
        ++rep.witnesses;
        if (!rep.witness) {
            rep.witness = runs[i].traj;
            rep.witness_sample = static_cast<int>(i);
        }
    }
    rep.verdict = rep.witness ? ProbeVerdict::witness_found : ProbeVerdict::no_witness;
    return rep;
}

// ---------------------------------------------------------------------------
// Causal arrival
// ---------------------------------------------------------------------------

struct ArrivalResult {
    double infimum_t = 0.0;
    bool attained = true;
    std::optional<SliceCurve> curve;
    double distance = 0.0;  // g_S* distance from x_p to the target
};

/// (t, x_target) is in the causal future of p = (t_p, x_p) iff
/// t - t_p >= d*(x_p, x_target) with d* the g_S* distance, and the bound is
/// attained iff a minimizing g_S* curve exists.
inline ArrivalResult causal_arrival(const StaticSpacetime& st, const Vec& p, const Vec& x_target,
                                    const DistanceOptions& o = {}) {
    const int n = st.dim();
    if (p.size() != n + 1) throw ValidationError("diagnostics", "causal_arrival", "p must be (t, x)");
    const Vec xp = p.tail(n);
    st.chart().require_in_domain(xp, "causal_arrival");
    st.chart().require_in_domain(x_target, "causal_arrival");
    const auto d = slice_distance(optical_chart(st), xp, x_target, o);
    ArrivalResult r;
    r.distance = d.length;
    r.infimum_t = p[0] + d.length;
    r.attained = d.attained;
    r.curve = d.minimizer;
    return r;
}

}  // namespace staticgeo
