#include "staticgeo/catalog.hpp"
#include "staticgeo/diagnostics.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace staticgeo;

namespace {

Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

ProbeOptions probe_opts(const std::string& name, int dim = 0) {
    const auto e = catalog_entry(catalog_list(), name);
    CatalogParams p;
    p.dim = dim ? dim : e.default_dim;
    const auto box = e.sample_box(p.dim, p);
    ProbeOptions o;
    o.box_lo = box.first;
    o.box_hi = box.second;
    return o;
}

StaticSpacetime power_beta(int n, double p) {
    return StaticSpacetime(charts::euclidean(n), [p](const Vec& x) { return std::pow(1 + x.squaredNorm(), p / 2); },
                           "power");
}

}  // namespace

TEST(Growth, ConstantBeta) {
    const auto g = growth_exponent(make_spacetime("minkowski"), GrowthTarget::beta, Vec::Zero(1),
                                   geometric_radii(1, 1000, 12));
    EXPECT_NEAR(g.exponent, 0.0, 1e-9);
    EXPECT_EQ(g.classification, GrowthClass::subquadratic);
}

TEST(Growth, QuadraticBeta) {
    const auto g = growth_exponent(make_spacetime("quad_beta", CatalogParams{2}), GrowthTarget::beta, Vec::Zero(2),
                                   geometric_radii(1, 1000, 12));
    EXPECT_NEAR(g.exponent, 2.0, 0.05);
    EXPECT_EQ(g.classification, GrowthClass::quadratic);
    EXPECT_NEAR(g.amplitude, 1.0, 0.05);
}

TEST(Growth, SuperquadraticBeta) {
    const auto g = growth_exponent(make_spacetime("superquad_beta"), GrowthTarget::beta, Vec::Zero(1),
                                   geometric_radii(1, 1000, 12));
    EXPECT_NEAR(g.exponent, 3.0, 0.1);
    EXPECT_EQ(g.classification, GrowthClass::superquadratic);
}

TEST(Growth, InverseBetaOfSuperquadraticFamily) {
    const auto g = growth_exponent(make_spacetime("inv_beta_superquad"), GrowthTarget::inv_beta, Vec::Zero(1),
                                   geometric_radii(1, 1000, 12));
    EXPECT_NEAR(g.exponent, 3.0, 0.1);
}

TEST(GrowthProperty, PowerLawsRecovered) {
    for (double p : {0.0, 1.0, 2.0, 3.0, 4.0}) {
        const auto g = growth_exponent(power_beta(2, p), GrowthTarget::beta, Vec::Zero(2), geometric_radii(1, 1000, 12));
        EXPECT_NEAR(g.exponent, p, 0.1) << p;
    }
}

TEST(Growth, ValidatesRadii) {
    const auto st = make_spacetime("quad_beta");
    EXPECT_THROW(growth_exponent(st, GrowthTarget::beta, Vec::Zero(1), {1, 2, 3}), ValidationError);
    EXPECT_THROW(growth_exponent(st, GrowthTarget::beta, Vec::Zero(1), {1, 2, 3, 4, 5, 6}), ValidationError);
    EXPECT_THROW(growth_exponent(st, GrowthTarget::beta, Vec::Zero(1), {1, 3, 2, 4, 5, 60}), ValidationError);
}

TEST(Growth, TruncatedRayWarns) {
    const auto g = growth_exponent(make_spacetime("ads_strip"), GrowthTarget::beta, Vec::Zero(1),
                                   geometric_radii(0.01, 10, 12));
    EXPECT_FALSE(g.warnings.empty());
}

TEST(Classify, Bands) {
    EXPECT_EQ(classify_exponent(1.89), GrowthClass::subquadratic);
    EXPECT_EQ(classify_exponent(1.95), GrowthClass::quadratic);
    EXPECT_EQ(classify_exponent(2.1), GrowthClass::quadratic);
    EXPECT_EQ(classify_exponent(2.11), GrowthClass::superquadratic);
}

TEST(Probe, DiskHasWitness) {
    const auto r = completeness_probe(make_spacetime("unit_disk"), ProbeMetric::g, probe_opts("unit_disk"));
    ASSERT_EQ(r.verdict, ProbeVerdict::witness_found);
    ASSERT_TRUE(r.witness);
    EXPECT_NE(r.witness->termination, Termination::reached_s_max);
    EXPECT_LT(r.witness->s_exit, 2.0);
}

TEST(Probe, FlatPlaneHasNoWitness) {
    for (auto m : {ProbeMetric::g, ProbeMetric::g_R, ProbeMetric::g_S_star}) {
        const auto r = completeness_probe(make_spacetime("minkowski", CatalogParams{2}), m, probe_opts("minkowski", 2));
        EXPECT_EQ(r.verdict, ProbeVerdict::no_witness) << to_string(m);
    }
}

TEST(Probe, InverseSuperquadraticEscapeMatchesQuadrature) {
    const auto st = make_spacetime("inv_beta_superquad");
    const auto r = completeness_probe(st, ProbeMetric::g, probe_opts("inv_beta_superquad"));
    ASSERT_EQ(r.verdict, ProbeVerdict::witness_found);
    const auto& w = *r.witness;
    ASSERT_EQ(w.termination, Termination::blow_up);
    const auto& s0 = w.samples.front().state;
    const double lam = w.lambda0, c = w.C0, x0 = s0.x[0];
    const double sign = s0.x_dot[0] > 0 ? 1.0 : -1.0;
    // monotone escape: x' never vanishes since C + lambda^2 / beta > 0
    auto speed = [&](double x) { return std::sqrt(c + lam * lam * std::pow(1 + x * x, 1.5)); };
    boost::math::quadrature::exp_sinh<double> q;
    const double s_escape = q.integrate([&](double u) { return 1.0 / speed(x0 + sign * u); });
    EXPECT_NEAR(w.s_exit, s_escape, 0.05 * s_escape);
}

TEST(Probe, QuadBetaNoWitnessForGAndOptical) {
    const auto st = make_spacetime("quad_beta");
    for (auto m : {ProbeMetric::g, ProbeMetric::g_S_star}) {
        const auto r = completeness_probe(st, m, probe_opts("quad_beta"));
        EXPECT_EQ(r.verdict, ProbeVerdict::no_witness) << to_string(m);
        EXPECT_EQ(r.n_samples, 100);
        EXPECT_EQ(r.s_max, 100.0);
    }
}

TEST(Probe, OpticalLengthToInfinity) {
    // 1 + x^2: int dx / sqrt(1 + x^2) diverges; (1 + x^2)^1.5: int dx / (1 + x^2)^0.75 converges
    boost::math::quadrature::tanh_sinh<double> q;
    const double upto = q.integrate([](double x) { return 1.0 / std::sqrt(1 + x * x); }, 0.0, 1e6);
    EXPECT_GT(upto, 14.0);
    boost::math::quadrature::exp_sinh<double> e;
    const double total = e.integrate([](double x) { return std::pow(1 + x * x, -0.75); });
    EXPECT_LT(total, 3.0);

    const auto sq = completeness_probe(make_spacetime("superquad_beta"), ProbeMetric::g_S_star, probe_opts("superquad_beta"));
    EXPECT_EQ(sq.verdict, ProbeVerdict::witness_found);
    ASSERT_TRUE(sq.witness);
    EXPECT_LT(sq.witness->s_exit, 2 * total);
}

TEST(Probe, Validation) {
    auto o = probe_opts("quad_beta");
    o.n_samples = 0;
    EXPECT_THROW(completeness_probe(make_spacetime("quad_beta"), ProbeMetric::g, o), ValidationError);
    o = probe_opts("quad_beta");
    o.s_max = -1;
    EXPECT_THROW(completeness_probe(make_spacetime("quad_beta"), ProbeMetric::g, o), ValidationError);
}

TEST(ProbeProperty, SeedDeterminesReport) {
    const auto st = make_spacetime("unit_disk");
    auto o = probe_opts("unit_disk");
    o.n_samples = 20;
    const auto a = completeness_probe(st, ProbeMetric::g, o);
    const auto b = completeness_probe(st, ProbeMetric::g, o);
    ASSERT_TRUE(a.witness && b.witness);
    EXPECT_EQ(a.witness_sample, b.witness_sample);
    EXPECT_EQ(a.witness->s_exit, b.witness->s_exit);
}

TEST(Arrival, SlitPlane) {
    const auto st = make_spacetime("slit_plane");
    Vec p(3);
    p << 0, 0, 0;
    const auto a = causal_arrival(st, p, v2(2, 2));
    EXPECT_NEAR(a.infimum_t, std::sqrt(8.0), 1e-3);
    EXPECT_FALSE(a.attained);
}

TEST(Arrival, FullPlaneAttained) {
    const auto st = make_spacetime("minkowski", CatalogParams{2});
    Vec p(3);
    p << 0, 0, 0;
    const auto a = causal_arrival(st, p, v2(2, 2));
    EXPECT_NEAR(a.infimum_t, 2 * std::numbers::sqrt2, 1e-8);
    EXPECT_TRUE(a.attained);
    ASSERT_TRUE(a.curve);
}

TEST(Arrival, TargetAtSource) {
    const auto st = make_spacetime("slit_plane");
    Vec p(3);
    p << 1.5, 0.3, 0.4;
    const auto a = causal_arrival(st, p, v2(0.3, 0.4));
    EXPECT_EQ(a.infimum_t, 1.5);
    EXPECT_TRUE(a.attained);
}

TEST(ArrivalProperty, TranslationInTimeAndMonotoneInDomain) {
    const auto slit = make_spacetime("slit_plane");
    const auto full = make_spacetime("minkowski", CatalogParams{2});
    for (const Vec& target : {v2(2, 0), v2(2, 2), v2(1.5, -1)}) {
        Vec p(3), q(3);
        p << 0, 0, 0;
        q << 2.5, 0, 0;
        const double a = causal_arrival(slit, p, target).infimum_t;
        EXPECT_NEAR(causal_arrival(slit, q, target).infimum_t, a + 2.5, 1e-9);
        EXPECT_LE(causal_arrival(full, p, target).infimum_t, a + 1e-9);
    }
}

TEST(Arrival, QuadBetaUsesOpticalDistance) {
    // on a line the optical distance is the integral of 1/sqrt(beta)
    const auto st = make_spacetime("quad_beta");
    Vec p(2);
    p << 0, 0;
    const auto a = causal_arrival(st, p, Vec::Constant(1, 3.0));
    EXPECT_NEAR(a.infimum_t, std::asinh(3.0), 1e-5);
    EXPECT_TRUE(a.attained);
}
