#include "staticgeo/catalog.hpp"
#include "staticgeo/random.hpp"
#include "staticgeo/spacetime.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <numbers>
#include <random>

using namespace staticgeo;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

StaticSpacetime quad1() { return make_spacetime("quad_beta", CatalogParams{1}); }

StaticSpacetime constant_beta(double b, int n) {
    return StaticSpacetime(charts::euclidean(n), [b](const Vec&) { return b; }, "const");
}

// Classical RK4 on (t, x, t', x') for beta = 1 + x^2 on a line.
std::array<double, 4> rk4_quad(std::array<double, 4> y, double s_end, int steps) {
    auto f = [](const std::array<double, 4>& u) {
        const double x = u[1], td = u[2], xd = u[3];
        return std::array<double, 4>{td, xd, -td * 2 * x * xd / (1 + x * x), -td * td * x};
    };
    const double h = s_end / steps;
    for (int i = 0; i < steps; ++i) {
        auto k1 = f(y);
        std::array<double, 4> a, b, c;
        for (int j = 0; j < 4; ++j) a[j] = y[j] + 0.5 * h * k1[j];
        auto k2 = f(a);
        for (int j = 0; j < 4; ++j) b[j] = y[j] + 0.5 * h * k2[j];
        auto k3 = f(b);
        for (int j = 0; j < 4; ++j) c[j] = y[j] + h * k3[j];
        auto k4 = f(c);
        for (int j = 0; j < 4; ++j) y[j] += h / 6 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]);
    }
    return y;
}

// RK4 for x'' = -dV/dx with V = -1/(1+x^2).
std::array<double, 2> rk4_classical(std::array<double, 2> y, double s_end, int steps) {
    auto f = [](const std::array<double, 2>& u) {
        const double b = 1 + u[0] * u[0];
        return std::array<double, 2>{u[1], -2 * u[0] / (b * b)};
    };
    const double h = s_end / steps;
    for (int i = 0; i < steps; ++i) {
        auto k1 = f(y);
        std::array<double, 2> a{y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]};
        auto k2 = f(a);
        std::array<double, 2> b{y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]};
        auto k3 = f(b);
        std::array<double, 2> c{y[0] + h * k3[0], y[1] + h * k3[1]};
        auto k4 = f(c);
        for (int j = 0; j < 2; ++j) y[j] += h / 6 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]);
    }
    return y;
}

GeodesicState random_state(const StaticSpacetime& st, const std::pair<Vec, Vec>& box, std::mt19937_64& rng) {
    const Vec x = sample_point(st, box, rng);
    const int n = st.dim();
    std::normal_distribution<double> nd;
    Vec v(n + 1);
    for (int k = 0; k <= n; ++k) v[k] = nd(rng);
    v /= std::sqrt(st.beta_at(x) * v[0] * v[0] + v.tail(n).dot(st.chart().metric_at(x) * v.tail(n)));
    return GeodesicState{0.0, x, v[0], v.tail(n)};
}

}  // namespace

TEST(GeodesicRhs, MinkowskiIsStraight) {
    const auto st = make_spacetime("minkowski", CatalogParams{2});
    Vec x(2), v(2);
    x << 0.3, -1;
    v << 0.5, 2;
    const auto d = geodesic_rhs(st, GeodesicState{0, x, 1.3, v});
    EXPECT_EQ(d.t_ddot, 0.0);
    EXPECT_EQ(d.x_ddot.norm(), 0.0);
}

TEST(GeodesicRhs, QuadBetaSubstitution) {
    const auto d = geodesic_rhs(quad1(), GeodesicState{0, v1(1), 1, v1(0)});
    EXPECT_DOUBLE_EQ(d.x_ddot[0], -1.0);
    EXPECT_DOUBLE_EQ(d.t_ddot, 0.0);
}

TEST(GeodesicRhs, ZeroLambdaKeepsTime) {
    const auto d = geodesic_rhs(quad1(), GeodesicState{2, v1(1), 0, v1(0.7)});
    EXPECT_EQ(d.t_dot, 0.0);
    EXPECT_EQ(d.t_ddot, 0.0);
}

TEST(Integrate, MinkowskiExact) {
    const auto tr = integrate_geodesic(make_spacetime("minkowski"), GeodesicState{0, v1(0), 1, v1(1)}, 7.0);
    EXPECT_EQ(tr.termination, Termination::reached_s_max);
    for (const auto& smp : tr.samples) {
        EXPECT_NEAR(smp.state.t, smp.s, 1e-13);
        EXPECT_NEAR(smp.state.x[0], smp.s, 1e-13);
    }
    EXPECT_EQ(tr.drift.lambda, 0.0);
    EXPECT_EQ(tr.drift.norm, 0.0);
}

TEST(Integrate, MatchesIndependentRk4) {
    const auto st = quad1();
    const auto tr = integrate_geodesic(st, GeodesicState{0, v1(0.4), 1.1, v1(-0.6)}, 6.0);
    const auto ref = rk4_quad({0, 0.4, 1.1, -0.6}, 6.0, 60000);
    const auto end = tr.samples.back().state;
    EXPECT_NEAR(end.t, ref[0], 1e-8);
    EXPECT_NEAR(end.x[0], ref[1], 1e-8);
    EXPECT_NEAR(end.t_dot, ref[2], 1e-8);
    EXPECT_NEAR(end.x_dot[0], ref[3], 1e-8);
    // dense output between samples
    const auto mid = tr.state_at(2.345);
    const auto rm = rk4_quad({0, 0.4, 1.1, -0.6}, 2.345, 23450);
    EXPECT_NEAR(mid.x[0], rm[1], 1e-7);
}

TEST(Integrate, InverseSuperquadraticEscapesAtQuadratureParameter) {
    const auto st = make_spacetime("inv_beta_superquad");
    // lambda = 1, C = 0 at x = 0: t' = 1, x' = 1
    const auto tr = integrate_geodesic(st, GeodesicState{0, v1(0), 1, v1(1)}, 100.0);
    ASSERT_EQ(tr.termination, Termination::blow_up);
    boost::math::quadrature::exp_sinh<double> q;
    const double s_escape = q.integrate([](double x) { return std::pow(1 + x * x, -0.75); });
    EXPECT_NEAR(tr.s_exit, s_escape, 0.01 * s_escape);
    EXPECT_LT(tr.s_exit, s_escape);
}

TEST(Integrate, QuadBetaReachesEnd) {
    const auto st = quad1();
    std::mt19937_64 rng(2);
    const auto e = catalog_entry(catalog_list(), "quad_beta");
    for (int i = 0; i < 20; ++i) {
        const auto tr = integrate_geodesic(st, random_state(st, e.sample_box(1, {}), rng), 100.0);
        EXPECT_EQ(tr.termination, Termination::reached_s_max);
    }
}

TEST(Integrate, HorizonInfallRaisesStiffnessWithPartialTrajectory) {
    const auto st = make_spacetime("schwarzschild_exterior");
    try {
        integrate_geodesic(st, GeodesicState{0, v1(4), 1, v1(-1)}, 100.0);
        FAIL() << "expected a stiffness error";
    } catch (const GeodesicStiffnessError& e) {
        const auto& p = e.partial();
        ASSERT_GT(p.samples.size(), 10u);
        EXPECT_LT(p.samples.back().state.x[0] - 2.0, 1e-3);
        // lambda = beta t' is conserved while beta is resolved; at r - 2m ~ 1e-11
        // beta carries only a few significant digits
        double resolved = 0.0;
        for (const auto& smp : p.samples)
            if (st.beta_at(smp.state.x) > 1e-8)
                resolved = std::max(resolved, std::abs(conserved_lambda(st, smp.state) - p.lambda0));
        EXPECT_LT(resolved, 1e-7 * std::abs(p.lambda0));
    }
}

TEST(Integrate, RejectsNonPositiveTolerance) {
    IntegrateOptions o;
    o.tol = 0;
    EXPECT_THROW(integrate_geodesic(quad1(), GeodesicState{0, v1(0), 1, v1(0)}, 1.0, o), ValidationError);
}

TEST(Character, Examples) {
    const auto flat = constant_beta(1, 1);
    EXPECT_EQ(causal_character(flat, {0, v1(0), 1, v1(0)}), CausalCharacter::timelike);
    EXPECT_EQ(causal_character(flat, {0, v1(0), 1, v1(1)}), CausalCharacter::null);
    EXPECT_EQ(causal_character(constant_beta(4, 1), {0, v1(0), 1, v1(1)}), CausalCharacter::timelike);
    EXPECT_DOUBLE_EQ(conserved_norm(constant_beta(4, 1), {0, v1(0), 1, v1(1)}), -3.0);
}

TEST(AuxNorm, Examples) {
    EXPECT_DOUBLE_EQ(aux_norm_sq(constant_beta(1, 1), {0, v1(0), 1, v1(0)}), 1.0);
    EXPECT_DOUBLE_EQ(aux_norm_sq(constant_beta(4, 1), {0, v1(0), 1, v1(1)}), 5.0);
}

TEST(AuxNormProperty, IdentityOnRandomStates) {
    std::mt19937_64 rng(9);
    for (const auto& e : catalog_list()) {
        CatalogParams p;
        p.dim = e.variable_dim ? 2 : 0;
        const auto st = make_spacetime(e.name, p);
        for (int i = 0; i < 100; ++i) {
            auto s = random_state(st, e.sample_box(st.dim(), p), rng);
            s.t_dot *= 3.0;
            const double lam = conserved_lambda(st, s);
            const double id = conserved_norm(st, s) + 2 * lam * lam / st.beta_at(s.x);
            const double g = aux_norm_sq(st, s);
            EXPECT_LE(std::abs(g - id), 1e-12 * std::max(1.0, g)) << e.name;
        }
    }
}

TEST(ConservationProperty, RandomGeodesicsPerEntry) {
    std::mt19937_64 rng(21);
    for (const auto& e : catalog_list()) {
        CatalogParams p;
        p.dim = e.default_dim;
        const auto st = make_spacetime(e.name, p);
        for (int i = 0; i < 10; ++i) {
            const auto init = random_state(st, e.sample_box(st.dim(), p), rng);
            GeodesicTrajectory tr;
            try {
                tr = integrate_geodesic(st, init, 100.0);
            } catch (const GeodesicStiffnessError&) {
                continue;  // horizon infall, covered above
            }
            double aux = 1.0;
            for (const auto& smp : tr.samples) aux = std::max(aux, aux_norm_sq(st, smp.state));
            EXPECT_LT(tr.drift.lambda, 1e-7 * std::max(std::abs(tr.lambda0), 1.0)) << e.name << " #" << i;
            EXPECT_LT(tr.drift.norm, 1e-7 * aux) << e.name << " #" << i;
            // causal character is constant along the curve; near a blow-up C is
            // only known relative to the auxiliary norm
            const auto c0 = classify_norm(tr.C0, 1e-6);
            for (const auto& smp : tr.samples)
                if (aux_norm_sq(st, smp.state) < 1e3)
                    EXPECT_EQ(classify_norm(conserved_norm(st, smp.state), 1e-6), c0) << e.name;
        }
    }
}

TEST(ConservationProperty, SliceGeodesicWhenLambdaVanishes) {
    const auto st = make_spacetime("quad_beta", CatalogParams{2});
    Vec x(2), v(2);
    x << 0.5, -0.2;
    v << 0.3, 0.8;
    const auto tr = integrate_geodesic(st, GeodesicState{1.5, x, 0.0, v}, 10.0);
    const auto sg = integrate_slice_geodesic(st.chart(), x, v, 10.0);
    for (const auto& smp : tr.samples) {
        EXPECT_NEAR(smp.state.t, 1.5, 1e-12);
        EXPECT_LT((smp.state.x - sg.position(smp.s)).norm(), 1e-7);
    }
}

TEST(Reduce, MinkowskiHasZeroResidual) {
    const auto st = make_spacetime("minkowski");
    const auto tr = integrate_geodesic(st, GeodesicState{0, v1(0), std::numbers::sqrt2, v1(0.5)}, 5.0);
    const auto r = reduce_to_classical(st, tr);
    EXPECT_LT(r.report.max_residual, 1e-14);
    EXPECT_LT(r.report.energy_drift, 1e-14);
}

TEST(Reduce, ZeroLambdaIsNotReducible) {
    const auto st = quad1();
    const auto tr = integrate_geodesic(st, GeodesicState{0, v1(0), 0, v1(1)}, 1.0);
    EXPECT_THROW(reduce_to_classical(st, tr), NotReducibleError);
}

TEST(Reduce, MatchesIndependentClassicalIntegration) {
    const auto st = quad1();
    // lambda0 = 3 at x = 0.5
    const double x0 = 0.5, b0 = 1.25, td = 3.0 / b0, xd = 0.8;
    const auto tr = integrate_geodesic(st, GeodesicState{0, v1(x0), td, v1(xd)}, 10.0);
    const auto red = reduce_to_classical(st, tr);
    EXPECT_LT(red.report.max_residual, 1e-6);
    EXPECT_LT(red.report.energy_drift, 1e-8);
    const double scale = 3.0 / std::numbers::sqrt2;
    for (std::size_t i = 0; i < red.trajectory.samples.size(); i += 13) {
        const auto& c = red.trajectory.samples[i];
        const auto ref = rk4_classical({x0, xd / scale}, c.s, std::max(10, static_cast<int>(c.s * 2000)));
        EXPECT_NEAR(c.x[0], ref[0], 1e-7) << c.s;
        EXPECT_NEAR(c.v[0], ref[1], 1e-7) << c.s;
    }
    // the lift of the rescaled data carries lambda = sqrt(2)
    const auto lift = lift_classical(st, red.trajectory, 0.0);
    for (const auto& smp : lift.trajectory.samples)
        EXPECT_NEAR(conserved_lambda(st, smp.state), std::numbers::sqrt2, 1e-12);
}

TEST(Lift, CriticalPointOfPotential) {
    const auto st = quad1();
    ClassicalTrajectory cl;
    for (int i = 0; i <= 10; ++i) cl.samples.push_back({0.5 * i, v1(0), v1(0), v1(0)});
    const auto lr = lift_classical(st, cl, 2.0);
    EXPECT_LT(lr.residual, 1e-15);
    for (const auto& smp : lr.trajectory.samples) EXPECT_NEAR(smp.state.t, 2.0 + std::numbers::sqrt2 * smp.s, 1e-13);
}

TEST(Lift, StraightLineGivesMinkowskiGeodesic) {
    const auto st = make_spacetime("minkowski");
    ClassicalTrajectory cl;
    for (int i = 0; i <= 8; ++i) cl.samples.push_back({0.25 * i, v1(0.3 * 0.25 * i), v1(0.3), v1(0)});
    const auto lr = lift_classical(st, cl, 0.0);
    EXPECT_LT(lr.residual, 1e-14);
    for (const auto& smp : lr.trajectory.samples) EXPECT_DOUBLE_EQ(smp.state.t_dot, std::numbers::sqrt2);
}

TEST(LiftProperty, RoundTripEndpoint) {
    std::mt19937_64 rng(4);
    for (const char* name : {"quad_beta", "superquad_beta", "schwarzschild_exterior"}) {
        const auto st = make_spacetime(name);
        const auto e = catalog_entry(catalog_list(), name);
        int done = 0;
        for (int i = 0; i < 20 && done < 5; ++i) {
            auto init = random_state(st, e.sample_box(1, {}), rng);
            if (std::abs(init.t_dot) < 0.1) continue;
            GeodesicTrajectory tr;
            try {
                tr = integrate_geodesic(st, init, 5.0);
            } catch (const StiffnessError&) {
                continue;
            }
            if (tr.termination != Termination::reached_s_max) continue;
            const auto red = reduce_to_classical(st, tr);
            const auto lr = lift_classical(st, red.trajectory, init.t);
            const auto& a = tr.samples.back().state;
            const auto& b = lr.trajectory.samples.back().state;
            EXPECT_LT(std::abs(a.t - b.t), 1e-6) << name;
            EXPECT_LT((a.x - b.x).norm(), 1e-6) << name;
            ++done;
        }
        EXPECT_GE(done, 3) << name;
    }
}

TEST(Jacobi, FlatStraightLines) {
    const auto st = make_spacetime("minkowski");
    ClassicalTrajectory cl;
    for (int i = 0; i <= 8; ++i) cl.samples.push_back({0.25 * i, v1(std::sqrt(2.0) * 0.25 * i), v1(std::sqrt(2.0)), v1(0)});
    cl.E = 0.0;
    EXPECT_LT(jacobi_check(st, cl), 1e-12);
}

TEST(Jacobi, QuadBetaOrbitIsPregeodesic) {
    const auto st = quad1();
    const auto tr = integrate_geodesic(st, GeodesicState{0, v1(-1), 1.0, v1(2.0)}, 10.0);
    const auto red = reduce_to_classical(st, tr);
    ASSERT_GT(red.trajectory.E, 0.0);
    EXPECT_LT(jacobi_check(st, red.trajectory), 1e-5);
}

TEST(Jacobi, FloorViolationRaises) {
    const auto st = quad1();
    ClassicalTrajectory cl;
    for (int i = 0; i <= 4; ++i) cl.samples.push_back({0.1 * i, v1(0.1 * i), v1(1), v1(0)});
    cl.E = -1.0;  // E - V = 0 at x = 0
    EXPECT_THROW(jacobi_check(st, cl), NearTurningPointError);
}
