#pragma once

// Named static spacetimes used by the command line and the test suites.

#include "staticgeo/error.hpp"
#include "staticgeo/manifold.hpp"
#include "staticgeo/spacetime.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace staticgeo {

struct CatalogParams {
    int dim = 0;        // 0 selects the entry default; only slices R^n accept other values
    double m = 1.0;     // Schwarzschild mass
    double eps = 0.5;   // exponent offset of the superquadratic families
};

struct CatalogEntry {
    std::string name;
    std::string description;
    std::string provenance;
    int default_dim = 1;
    bool variable_dim = false;
    std::function<StaticSpacetime(const CatalogParams&)> make;
    /// Box [lo, hi] per coordinate from which sample points are drawn
    /// (rejection against the domain predicate).
    std::function<std::pair<Vec, Vec>(int dim, const CatalogParams&)> sample_box;
    std::function<Vec(int dim, const CatalogParams&)> base_point;
};

namespace charts {

/// R^2 minus the half line {(1, y) : y <= 1}.
inline Chart slit_plane() {
    auto ray_distance = [](const Vec& p) {
        if (p[1] <= 1.0) return std::abs(p[0] - 1.0);
        return std::hypot(p[0] - 1.0, p[1] - 1.0);
    };
    auto segment_clearance = [ray_distance](const Vec& a, const Vec& b) {
        const double fa = a[0] - 1.0, fb = b[0] - 1.0;
        if ((fa <= 0.0 && fb >= 0.0) || (fa >= 0.0 && fb <= 0.0)) {
            const double denom = fa - fb;
            const double yc = denom == 0.0 ? std::min(a[1], b[1]) : a[1] + (b[1] - a[1]) * fa / denom;
            if (yc <= 1.0) return -(1.0 - yc);
        }
        // Distance from the tip to the segment, or from an endpoint to the ray.
        Vec tip(2);
        tip << 1.0, 1.0;
        const Vec d = b - a;
        const double dd = d.squaredNorm();
        const double th = dd == 0.0 ? 0.0 : std::clamp((tip - a).dot(d) / dd, 0.0, 1.0);
        return std::min({(a + th * d - tip).norm(), ray_distance(a), ray_distance(b)});
    };
    auto domain = [](const Vec& p) { return p.size() == 2 && p.allFinite() && !(p[0] == 1.0 && p[1] <= 1.0); };
    return euclidean(2)
        .with_label("slit_plane")
        .with_domain(domain)
        .with_clearance(ray_distance)
        .with_segment_clearance(segment_clearance);
}

/// Open unit disk with the flat metric.
inline Chart unit_disk() {
    auto domain = [](const Vec& p) { return p.size() == 2 && p.allFinite() && p.squaredNorm() < 1.0; };
    return euclidean(2)
        .with_label("unit_disk")
        .with_domain(domain)
        .with_clearance([](const Vec& p) { return 1.0 - p.norm(); });
}

/// (-pi/4, pi/4) with g = dx^2 / cos^2 x.
inline Chart ads_slice() {
    const double edge = std::numbers::pi / 4;
    auto domain = [edge](const Vec& p) { return p.size() == 1 && std::isfinite(p[0]) && std::abs(p[0]) < edge; };
    auto metric = [](const Vec& p) {
        const double c = std::cos(p[0]);
        return Mat::Constant(1, 1, 1.0 / (c * c));
    };
    return Chart(1, "ads_strip", domain, metric)
        .with_christoffel([](const Vec& p) {
            Christoffel g(1);
            g(0, 0, 0) = std::tan(p[0]);
            return g;
        })
        .with_clearance([edge](const Vec& p) { return edge - std::abs(p[0]); });
}

}  // namespace charts

namespace detail {

inline std::pair<Vec, Vec> cube(int dim, double lo, double hi) {
    return {Vec::Constant(dim, lo), Vec::Constant(dim, hi)};
}

inline int resolve_dim(const CatalogEntry& e, const CatalogParams& p) {
    if (p.dim == 0) return e.default_dim;
    if (!e.variable_dim && p.dim != e.default_dim)
        throw ValidationError("cli", "catalog", e.name + " has fixed slice dimension " + std::to_string(e.default_dim));
    if (p.dim < 1) throw ValidationError("cli", "catalog", "slice dimension must be positive");
    return p.dim;
}

}  // namespace detail

inline std::vector<CatalogEntry> catalog_list() {
    std::vector<CatalogEntry> out;
    auto origin = [](int dim, const CatalogParams&) { return Vec(Vec::Zero(dim)); };

    out.push_back({"minkowski", "flat slice R^n, beta = 1", "flat spacetime", 1, true,
                   [](const CatalogParams& p) {
                       const int n = p.dim == 0 ? 1 : p.dim;
                       return StaticSpacetime(
                           charts::euclidean(n), [](const Vec&) { return 1.0; },
                           [n](const Vec&) { return Vec(Vec::Zero(n)); }, "minkowski");
                   },
                   [](int d, const CatalogParams&) { return detail::cube(d, -5, 5); }, origin});

    out.push_back({"schwarzschild_exterior", "radial slice r > 2m, g_rr = 1/(1-2m/r), beta = 1 - 2m/r",
                   "outer Schwarzschild, radial sector", 1, false,
                   [](const CatalogParams& p) {
                       const double m = p.m;
                       if (!(m > 0)) throw ValidationError("cli", "catalog", "schwarzschild mass must be positive");
                       return StaticSpacetime(
                           charts::schwarzschild_radial(m).with_christoffel(
                               [m](const Vec& x) { return charts::schwarzschild_radial_christoffel(m, x); }),
                           [m](const Vec& x) { return 1.0 - 2.0 * m / x[0]; },
                           [m](const Vec& x) { return Vec(Vec::Constant(1, 2.0 * m / (x[0] * x[0]))); },
                           "schwarzschild_exterior");
                   },
                   [](int, const CatalogParams& p) { return detail::cube(1, 4 * p.m, 12 * p.m); },
                   [](int, const CatalogParams& p) { return Vec(Vec::Constant(1, 3 * p.m)); }});

    out.push_back({"ads_strip", "x in (-pi/4, pi/4), g = (dx^2 - dt^2)/cos^2 x", "anti-de Sitter strip", 1, false,
                   [](const CatalogParams&) {
                       return StaticSpacetime(
                           charts::ads_slice(),
                           [](const Vec& x) {
                               const double c = std::cos(x[0]);
                               return 1.0 / (c * c);
                           },
                           [](const Vec& x) {
                               const double c = std::cos(x[0]);
                               return Vec(Vec::Constant(1, 2.0 * std::sin(x[0]) / (c * c * c)));
                           },
                           "ads_strip");
                   },
                   [](int, const CatalogParams&) { return detail::cube(1, -0.6, 0.6); }, origin});

    out.push_back({"slit_plane", "R^2 minus {(1, y) : y <= 1}, beta = 1", "flat plane with a slit obstacle", 2, false,
                   [](const CatalogParams&) {
                       return StaticSpacetime(
                           charts::slit_plane(), [](const Vec&) { return 1.0; },
                           [](const Vec&) { return Vec(Vec::Zero(2)); }, "slit_plane");
                   },
                   [](int d, const CatalogParams&) { return detail::cube(d, -3, 3); }, origin});

    out.push_back({"unit_disk", "open unit disk, flat, beta = 1", "incomplete flat slice", 2, false,
                   [](const CatalogParams&) {
                       return StaticSpacetime(
                           charts::unit_disk(), [](const Vec&) { return 1.0; },
                           [](const Vec&) { return Vec(Vec::Zero(2)); }, "unit_disk");
                   },
                   [](int d, const CatalogParams&) { return detail::cube(d, -0.6, 0.6); }, origin});

    out.push_back({"quad_beta", "flat slice R^n, beta = 1 + |x|^2", "quadratic growth class", 1, true,
                   [](const CatalogParams& p) {
                       const int n = p.dim == 0 ? 1 : p.dim;
                       return StaticSpacetime(
                           charts::euclidean(n), [](const Vec& x) { return 1.0 + x.squaredNorm(); },
                           [](const Vec& x) { return Vec(2.0 * x); }, "quad_beta");
                   },
                   [](int d, const CatalogParams&) { return detail::cube(d, -3, 3); }, origin});

    out.push_back({"superquad_beta", "flat slice R^n, beta = (1 + |x|^2)^(1+eps)", "superquadratic growth class", 1,
                   true,
                   [](const CatalogParams& p) {
                       const int n = p.dim == 0 ? 1 : p.dim;
                       const double e = p.eps;
                       if (!(e > 0)) throw ValidationError("cli", "catalog", "eps must be positive");
                       return StaticSpacetime(
                           charts::euclidean(n), [e](const Vec& x) { return std::pow(1.0 + x.squaredNorm(), 1.0 + e); },
                           [e](const Vec& x) {
                               return Vec(2.0 * (1.0 + e) * std::pow(1.0 + x.squaredNorm(), e) * x);
                           },
                           "superquad_beta");
                   },
                   [](int d, const CatalogParams&) { return detail::cube(d, -2, 2); }, origin});

    out.push_back({"inv_beta_superquad", "flat line, beta = (1 + x^2)^-(1+eps)", "superquadratic growth of 1/beta", 1,
                   false,
                   [](const CatalogParams& p) {
                       const double e = p.eps;
                       if (!(e > 0)) throw ValidationError("cli", "catalog", "eps must be positive");
                       return StaticSpacetime(
                           charts::euclidean(1), [e](const Vec& x) { return std::pow(1.0 + x.squaredNorm(), -(1.0 + e)); },
                           [e](const Vec& x) {
                               return Vec(-2.0 * (1.0 + e) * std::pow(1.0 + x.squaredNorm(), -(2.0 + e)) * x);
                           },
                           "inv_beta_superquad");
                   },
                   [](int d, const CatalogParams&) { return detail::cube(d, -2, 2); }, origin});
    return out;
}

inline const CatalogEntry& catalog_entry(const std::vector<CatalogEntry>& cat, const std::string& name) {
    for (const auto& e : cat)
        if (e.name == name) return e;
    throw ValidationError("cli", "catalog", "unknown spacetime '" + name + "'");
}

/// Draw a point of the sample box inside the domain.
inline Vec sample_point(const StaticSpacetime& st, const std::pair<Vec, Vec>& box, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int attempt = 0; attempt < 10000; ++attempt) {
        Vec x(box.first.size());
        for (Eigen::Index k = 0; k < x.size(); ++k) x[k] = box.first[k] + (box.second[k] - box.first[k]) * u(rng);
        if (st.chart().in_domain(x)) return x;
    }
    throw ValidationError("cli", "sample_point", "sample box of " + st.label() + " misses the domain");
}

/// Check the metric and beta on a grid of sample points; throws on failure.
inline void validate_spacetime(const StaticSpacetime& st, const std::pair<Vec, Vec>& box, int per_axis = 5) {
    const int n = st.dim();
    long total = 1;
    for (int k = 0; k < n; ++k) total *= per_axis;
    for (long idx = 0; idx < total; ++idx) {
        Vec x(n);
        long r = idx;
        for (int k = 0; k < n; ++k) {
            const int i = static_cast<int>(r % per_axis);
            r /= per_axis;
            x[k] = box.first[k] + (box.second[k] - box.first[k]) * (i + 0.5) / per_axis;
        }
        if (!st.chart().in_domain(x)) continue;
        const Mat g = st.chart().metric_at(x);
        if ((g - g.transpose()).lpNorm<Eigen::Infinity>() >= 1e-12)
            throw DegenerateMetricError("cli", "validate", "metric not symmetric at " + format_point(x));
        st.beta_at(x);
    }
}

inline StaticSpacetime make_spacetime(const std::string& name, const CatalogParams& p = {}) {
    const auto cat = catalog_list();
    const auto& e = catalog_entry(cat, name);
    CatalogParams q = p;
    q.dim = detail::resolve_dim(e, p);
    StaticSpacetime st = e.make(q);
    validate_spacetime(st, e.sample_box(q.dim, q));
    return st;
}

}  // namespace staticgeo
