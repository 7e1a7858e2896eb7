#include <catch2/catch_amalgamated.hpp>

#include "critlab/green.hpp"

using namespace critlab;

TEST_CASE("S3 conformal Green function matches the closed-form kernel") {
    auto s = ManifoldModel::sphere(3, 4096);
    Field h = make_field(s, 0.75);
    GreenFunction gf = build_green(s, h, Point::radial(0.0), 0.3 * kPi);
    const double w2 = sphere_volume(2);
    double worst = 0.0;
    for (std::size_t i = 0; i < s->node_count(); ++i) {
        const double r = s->r_at(i);
        if (r < 0.1 || r > kPi - 0.1) continue;
        const double exact = 1.0 / (w2 * 2.0 * std::sin(0.5 * r));
        worst = std::max(worst, std::abs(gf.G.v[i] - exact));
    }
    CHECK(worst < 1e-4);
    // mass-zero case: regular part vanishes at the pole
    CHECK(std::abs(gf.beta.v[0]) < 1e-3);
}

TEST_CASE("weak delta identity on sphere and torus") {
    auto s = ManifoldModel::sphere(3, 4096);
    GreenFunction gs = build_green(s, make_field(s, 0.75), Point::radial(0.0), 0.3 * kPi);
    std::vector<Field> basket_s;
    for (int k = 1; k <= 5; ++k) {
        const double a = 0.3 * k;
        basket_s.push_back(
            sample_radial(s, [&](double r) { return std::cos(k * r) + a * std::sin(r); }));
    }
    CHECK(green_weak_identity_defect(gs, basket_s) < 5e-3);

    auto t = ManifoldModel::torus(3, 2.0 * kPi, 64);
    Point pole{{0.0, 0.0, 0.0}};
    GreenFunction gt = build_green(t, make_field(t, 1.0), pole, 0.3 * t->injectivity_radius());
    std::vector<Field> basket_t;
    for (int k = 1; k <= 5; ++k) {
        basket_t.push_back(sample_coords(t, [&](const std::vector<double>& x) {
            return std::cos(k * x[0]) + 0.5 * std::sin(x[1] + 0.2 * k) * std::cos(x[2]);
        }));
    }
    CHECK(green_weak_identity_defect(gt, basket_t) < 5e-3);
}

TEST_CASE("build_green refuses non-coercive operators") {
    auto s = ManifoldModel::sphere(3, 512);
    CHECK_THROWS_AS(build_green(s, make_field(s, -1.0), Point::radial(0.0), 0.5), NotCoercive);
}

TEST_CASE("short-distance bounds") {
    auto s = ManifoldModel::sphere(3, 4096);
    GreenFunction gf = build_green(s, make_field(s, 0.75), Point::radial(0.0), 0.3 * kPi);
    BoundsReport rep = verify_bounds(gf, 0.5);
    CHECK(rep.c_low > 0.0);
    CHECK(rep.c_high < 1.0 / rep.c_low);  // two-sided pinch with finite constants
    CHECK(rep.limit_defect < 1e-2);
    CHECK(rep.grad_ratio_c > 0.0);
    CHECK(rep.min_G > 0.0);
}

TEST_CASE("S3 mass: zero at the conformal constant, signed around it") {
    auto s = ManifoldModel::sphere(3, 4096);
    const double m0 = green_mass(s, make_field(s, 0.75), Point::radial(0.0));
    CHECK(std::abs(m0) < 1e-3);
    const double m_minus = green_mass(s, make_field(s, 0.65), Point::radial(0.0));
    const double m_plus = green_mass(s, make_field(s, 0.85), Point::radial(0.0));
    CHECK(m_minus > 0.0);
    CHECK(m_plus < 0.0);
    CHECK(m_minus > m0);
    CHECK(m0 > m_plus);
}

TEST_CASE("mass monotone under pointwise increase of h") {
    auto s = ManifoldModel::sphere(3, 4096);
    Field h1 = sample_radial(s, [](double r) { return 0.7 + 0.05 * std::cos(r); });
    Field h2 = h1 + sample_radial(s, [](double r) { return 0.05 * smoothstep_down(r, 1.0, 2.0); });
    const double m1 = green_mass(s, h1, Point::radial(0.0));
    const double m2 = green_mass(s, h2, Point::radial(0.0));
    CHECK(m1 > m2);
}

TEST_CASE("mass fit stability across windows") {
    auto s = ManifoldModel::sphere(3, 4096);
    GreenFunction gf = build_green(s, make_field(s, 0.7), Point::radial(0.0), 0.3 * kPi);
    const double dr = s->spacing();
    MassFit f1 = green_mass_fit(gf, 5.0 * dr, 0.05);
    MassFit f2 = green_mass_fit(gf, 0.05, 0.1);
    CHECK(std::abs(f1.M - f2.M) <=
          2.0 * (f1.stderr_M + f2.stderr_M) + 5e-4);  // windows agree within fit error
    CHECK_THROWS_AS(green_mass_fit(gf, 0.5 * dr, 0.05), FitUnstable);
}

TEST_CASE("mass criteria on the conformal S3 triple") {
    auto s = ManifoldModel::sphere(3, 2048);
    Triple t = make_triple(s, make_field(s, 0.75), make_field(s, 1.0));
    CriteriaOptions opt;
    CriteriaReport rep = mass_criteria(t, opt);
    REQUIRE(!rep.masses.empty());
    for (double mv : rep.masses) CHECK(std::abs(mv) < 1e-3);
    CHECK(rep.any_zero);
    CHECK(rep.all_nonpositive);
    CHECK(!rep.contradiction_flag);
    CHECK(std::abs(rep.B_shift) < 0.025);
}

TEST_CASE("mass criteria recovers the conformal shift") {
    auto s = ManifoldModel::sphere(3, 2048);
    Triple t = make_triple(s, make_field(s, 0.65), make_field(s, 1.0));
    CriteriaReport rep = mass_criteria(t, {});
    CHECK(rep.B_shift == Catch::Approx(0.1).margin(0.02));
    // subcritical base with positive mass: no contradiction flag
    CHECK(!rep.contradiction_flag);
}
