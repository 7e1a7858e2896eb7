#include <catch2/catch_amalgamated.hpp>

#include "critlab/blowup.hpp"

using namespace critlab;

TEST_CASE("bubble identity holds at collocation points") {
    std::vector<double> radii;
    for (int i = 0; i <= 400; ++i) radii.push_back(10.0 * i / 400.0);
    for (int n : {3, 4, 5, 6}) {
        for (double c : {0.5, 1.0, 3.0}) {
            Bubble b = bubble(n, c);
            CHECK(b.value(0.0) == 1.0);
            CHECK(bubble_identity_residual(b, radii) < 1e-8);
            // radial and strictly decreasing
            for (std::size_t i = 1; i < radii.size(); ++i)
                CHECK(b.value(radii[i]) < b.value(radii[i - 1]));
        }
    }
    CHECK_THROWS_AS(bubble(4, -1.0), ConfigError);
}

TEST_CASE("rescale returns the bubble pushed onto a torus grid") {
    auto m = ManifoldModel::torus(3, 2.0 * kPi, 128);
    Bubble b = bubble(3, 1.0);
    Point center{{kPi, kPi, kPi}};
    Field u = sample_radial(m, [&](double d) { return b.value(d); }, &center);

    FamilyMember fm;
    fm.m = m;
    fm.u = u;
    fm.x_t = center;
    fm.mu_t = 1.0;  // peak value 1 => mu = 1
    fm.q_t = critical_exponent(3);
    fm.profile = extract_radial_profile(m, u, center);

    ChartField cf = rescale(fm, 2.0, 256);
    double worst = 0.0;
    for (std::size_t i = 0; i < cf.radii.size(); ++i)
        worst = std::max(worst, std::abs(cf.u[i] - b.value(cf.radii[i])));
    CHECK(worst < 1e-6);
}

TEST_CASE("volume bookkeeping of the rescaling") {
    auto s = ManifoldModel::sphere(4, 512);
    FamilySchedule sched;
    sched.steps = {{0.1, 0.05}};
    auto family = sphere_counterexample_family(s, sched);
    const FamilyMember& fm = family.front();
    const int n = 4;
    const double m_t = std::pow(fm.mu_t, -(n - 2.0) / 2.0);
    const double R = 3.0;

    ChartField cf = rescale(fm, R, 4096);
    for (double alpha : {2.0, critical_exponent(n)}) {
        const double lhs = chart_ball_integral(cf, R, alpha);
        const double rhs = std::pow(fm.mu_t, -n) / std::pow(m_t, alpha) *
                           member_ball_integral(fm, R * fm.mu_t, alpha);
        CHECK(lhs == Catch::Approx(rhs).epsilon(1e-6));
    }
    // alpha = 2*: the exponent -n + 2* (n-2)/2 vanishes, so the 2*-mass is
    // scale-invariant
    const double p = critical_exponent(n);
    CHECK(chart_ball_integral(cf, R, p) ==
          Catch::Approx(member_ball_integral(fm, R * fm.mu_t, p)).epsilon(1e-6));

    CHECK_THROWS_AS(rescale(fm, 1.1 * kPi / fm.mu_t, 128), ConfigError);
}

TEST_CASE("counterexample family is unit-normalized and solves the equation") {
    auto s = ManifoldModel::sphere(4, 1024);
    FamilySchedule sched;
    sched.steps = {{0.2, 0.1}, {0.1, 0.01}};
    auto family = sphere_counterexample_family(s, sched);
    const double h0 = 4.0 * 2.0 / 4.0;  // n(n-2)/4
    const double kinv2 = 1.0 / sobolev_K2(4);
    for (const auto& fm : family) {
        CHECK(member_ball_integral(fm, kPi, critical_exponent(4)) ==
              Catch::Approx(1.0).margin(1e-8));
        // argmax at the member center
        CHECK(fm.profile.value(0.0) > fm.profile.value(0.01));
        EquationFit fit = family_equation_fit(fm, h0);
        CHECK(fit.c == Catch::Approx(kinv2).epsilon(1e-6));
        CHECK(fit.residual < 1e-6);
        CHECK(fm.lambda_t == Catch::Approx(kinv2));
    }
}

TEST_CASE("concentration diagnostics on the S4 family") {
    auto s = ManifoldModel::sphere(4, 1024);
    FamilySchedule sched;
    // mu_t = d(x_t, x0)^2: the second inequality fails by construction.
    // L^2 concentration closes at log speed in dimension 4, so the schedule
    // reaches very small centers (the profiles are analytic; no grid limit).
    for (int j = 0; j < 8; ++j) {
        const double d = 0.3 * std::pow(0.1, j);
        sched.steps.push_back({d, d * d});
    }
    auto family = sphere_counterexample_family(s, sched);
    ConcentrationReport rep =
        concentration_diagnostics(family, {1.0, 2.0, 5.0, 10.0}, {0.3, 0.5});

    for (std::size_t j = 0; j < family.size(); ++j) {
        // ball masses within [0, 1], increasing in R
        for (std::size_t k = 0; k < rep.R_list.size(); ++k) {
            CHECK(rep.ball_mass[j][k] > 0.0);
            CHECK(rep.ball_mass[j][k] <= 1.0 + 1e-9);
            if (k > 0) CHECK(rep.ball_mass[j][k] >= rep.ball_mass[j][k - 1] - 1e-12);
        }
        CHECK(rep.ball_mass[j].back() > 0.9);  // eps_R -> 0
    }
    // weak and strong sups uniformly bounded across the family
    const double wmax = *std::max_element(rep.weak_sup.begin(), rep.weak_sup.end());
    const double wmin = *std::min_element(rep.weak_sup.begin(), rep.weak_sup.end());
    CHECK(wmax < 3.0 * wmin);
    const double smax = *std::max_element(rep.strong_sup.begin(), rep.strong_sup.end());
    const double smin = *std::min_element(rep.strong_sup.begin(), rep.strong_sup.end());
    CHECK(smax < 3.0 * smin);
    // L2 concentration at fixed delta approaches 1
    CHECK(rep.l2_ratio.back()[0] > 0.95);
    CHECK(rep.l2_ratio.back()[0] > rep.l2_ratio.front()[0]);
    // second fundamental inequality ratio blows up along this schedule
    CHECK(rep.second_ratio.back() > 10.0 * rep.second_ratio.front());
}

TEST_CASE("moser Q basics") {
    auto s = ManifoldModel::sphere(4, 1024);
    FamilySchedule sched;
    sched.steps = {{0.1, 0.05}};  // grid-resolvable core for the full-mass check
    auto family = sphere_counterexample_family(s, sched);
    const FamilyMember& fm = family.front();
    const double K2 = sobolev_K2(4);

    // eta == 1, lambda at the ceiling, full mass: Q(k=1) = 1 - 1 = 0
    Cutoff full = make_full_cutoff(s);
    CHECK(moser_Q(fm, 1.0, full, 1.0, K2) == Catch::Approx(0.0).margin(1e-6));

    // support away from the concentration point: local mass small, Q > 0
    Cutoff far = make_far_cutoff(s, Point::radial(0.0), 1.0, 2.0);
    CHECK(moser_Q(fm, 1.0, far, 1.0, K2) > 0.5);

    // k = 1 makes the first term 4k/(k+1)^2 = 1
    const double q0 = moser_Q(fm, 1.0, far, 0.0, K2);
    CHECK(q0 == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("moser inequality slack on computed solutions") {
    // torus constant solution, eta == 1: strictly positive slack
    auto m = ManifoldModel::torus(4, 2.0 * kPi, 8);
    Triple t = make_triple(m, make_field(m, 1.0), make_field(m, 1.0));
    MinimizeReport rep = solve_subcritical(t, 2.5, {});
    const double B = b0_lower_estimate(m, {make_field(m, 1.0)});
    Cutoff full = make_full_cutoff(m);
    for (double k : {1.0, 1.5, critical_exponent(4) - 1.0}) {
        const double slack = moser_inequality_check(t, rep, k, full, B);
        CHECK(slack > 0.0);
    }

    // localized cutoffs on a sphere solution
    auto s = ManifoldModel::sphere(4, 1024);
    Triple ts = make_triple(s, make_field(s, 2.0),
                            sample_radial(s, [](double r) { return 1.0 + 0.3 * std::cos(r); }));
    MinimizeReport rs = solve_subcritical(ts, 2.6, {});
    const double Bs = b0_lower_estimate(s, {make_field(s, 1.0)});
    for (double k : {1.0, 1.5, critical_exponent(4) - 1.0}) {
        for (auto cut : {make_cutoff(s, Point::radial(0.0), 0.5, 1.0),
                         make_cutoff(s, Point::radial(0.0), 1.0, 2.0),
                         make_far_cutoff(s, Point::radial(0.0), 2.0, 2.5)}) {
            const double slack = moser_inequality_check(ts, rs, k, cut, Bs);
            CHECK(slack >= -1e-6);
        }
    }

    // tiny support where u is small: LHS ~ 0 <= RHS
    Cutoff tiny = make_far_cutoff(s, Point::radial(0.0), 2.9, 3.0);
    CHECK(moser_inequality_check(ts, rs, 1.5, tiny, Bs) >= -1e-6);
}

TEST_CASE("pohozaev residual vanishes for exact bubbles and constants") {
    Bubble b = bubble(3, 1.0);
    FamilyMember fm;
    auto ball = ManifoldModel::ball(3, 10.0, 512);
    fm.m = ball;
    fm.mu_t = 1.0;
    fm.q_t = critical_exponent(3);
    fm.profile = b.profile();
    fm.u = sample_radial(ball, fm.profile.value);
    ChartField cf = rescale(fm, 5.0, 2048);
    CHECK(pohozaev_residual(cf, 5.0) < 1e-6);

    // constants: both sides vanish
    ChartField constant;
    constant.dim = 3;
    constant.radius = 1.0;
    constant.radii.resize(257);
    constant.u.assign(257, 2.5);
    constant.sqrt_det.assign(257, 1.0);
    for (int i = 0; i <= 256; ++i) constant.radii[i] = i / 256.0;
    CHECK(pohozaev_residual(constant, 1.0) < 1e-12);
}

TEST_CASE("pohozaev residual on a computed torus chart") {
    auto m = ManifoldModel::torus(3, 2.0 * kPi, 32);
    Point c{{kPi, kPi, kPi}};
    Field f = sample_radial(m, [](double d) { return 1.0 + 0.8 * std::exp(-2.0 * d * d); }, &c);
    Triple t = make_triple(m, make_field(m, 1.0), f);
    MinimizeReport rep = solve_subcritical(t, 2.5, {});

    ChartField cf = chart_from_torus_field(m, rep.u, c, 1.5, 384, rep.q);
    const double res = pohozaev_residual(cf, 1.5);
    CHECK(res < 5e-4);

    // equation-form Laplacian agrees with the sampled one
    const double res_eq = pohozaev_residual(
        cf, [](double) { return 1.0; },
        [](double d) { return 1.0 + 0.8 * std::exp(-2.0 * d * d); }, rep.lambda, 1.5);
    CHECK(res_eq < 5e-4);
}
