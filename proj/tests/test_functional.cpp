#include <catch2/catch_amalgamated.hpp>

#include "critlab/functional.hpp"

using namespace critlab;

namespace {
Triple conformal_sphere_triple(int n, int nodes) {
    auto s = ManifoldModel::sphere(n, nodes);
    const double h0 = n * (n - 2.0) / 4.0;
    return make_triple(s, make_field(s, h0), make_field(s, 1.0));
}
}  // namespace

TEST_CASE("energy of constants") {
    auto s = ManifoldModel::sphere(3, 1024);
    Triple t = make_triple(s, make_field(s, 2.0), make_field(s, 1.0));
    Field w = make_field(s, 3.0);
    CHECK(energy_I(t, w) == Catch::Approx(2.0 * 9.0 * volume(s)).epsilon(1e-8));
}

TEST_CASE("energy of a torus mode with h = 0 margin") {
    const double L = 2.0 * kPi;
    auto m = ManifoldModel::torus(3, L, 16);
    Triple t = make_triple(m, make_field(m, 0.0), make_field(m, 1.0));
    Field w = sample_coords(m, [&](const std::vector<double>& x) {
        return std::sin(2.0 * kPi * 2.0 * x[1] / L);
    });
    const double sym = std::pow(2.0 * kPi * 2.0 / L, 2);
    Field w2 = w * w;
    CHECK(energy_I(t, w) == Catch::Approx(sym * integrate(m, w2)).epsilon(1e-10));
}

TEST_CASE("quotient J homogeneity and scaling") {
    auto s = ManifoldModel::sphere(4, 512);
    Triple t = make_triple(s, make_field(s, 1.0), make_field(s, 1.0));
    Field w = sample_radial(s, [](double r) { return 1.0 + 0.5 * std::cos(r); });
    const double q = 2.7;
    CHECK(quotient_J(t, 3.7 * w, q) == Catch::Approx(quotient_J(t, w, q)).epsilon(1e-12));

    Triple tc = make_triple(s, make_field(s, 1.0), make_field(s, 2.0));
    CHECK(quotient_J(tc, w, q) ==
          Catch::Approx(std::pow(2.0, -2.0 / q) * quotient_J(t, w, q)).epsilon(1e-12));

    // normalized field: J = I
    const double c = constraint_integral(t, w, q);
    Field wn = std::pow(c, -1.0 / q) * w;
    CHECK(quotient_J(t, wn, q) == Catch::Approx(energy_I(t, wn)).epsilon(1e-12));

    Field neg = make_field(s, 1.0);
    Triple tneg = make_triple(s, make_field(s, 1.0),
                              sample_radial(s, [](double r) { return std::cos(r); }));
    Field bad = sample_radial(s, [](double r) { return r > kPi / 2 ? 1.0 : 0.0; });
    CHECK_THROWS_AS(quotient_J(tneg, bad, q), DenominatorNonpositive);
}

TEST_CASE("constants solve the subcritical sphere problem") {
    const int n = 4;
    Triple t = conformal_sphere_triple(n, 512);
    const double q = 2.5;
    MinimizeReport rep = solve_subcritical(t, q, {});
    const double vol = volume(t.m);
    const double expect_u = std::pow(vol, -1.0 / q);
    const double expect_lambda = (n * (n - 2.0) / 4.0) * std::pow(vol, 1.0 - 2.0 / q);
    CHECK(rep.lambda == Catch::Approx(expect_lambda).epsilon(1e-6));
    CHECK(field_max(rep.u) == Catch::Approx(expect_u).epsilon(1e-6));
    CHECK(field_min(rep.u) == Catch::Approx(expect_u).epsilon(1e-6));
    CHECK(rep.residual <= 1e-7);
    CHECK(constraint_integral(t, rep.u, q) == Catch::Approx(1.0).margin(1e-8));
}

TEST_CASE("constants bound the torus minimum from above") {
    auto m = ManifoldModel::torus(4, 2.0 * kPi, 8);
    Triple t = make_triple(m, make_field(m, 1.0), make_field(m, 1.0));
    const double q = 2.5;
    MinimizeReport rep = solve_subcritical(t, q, {});
    const double bound = std::pow(volume(m), 1.0 - 2.0 / q);
    CHECK(rep.lambda <= bound + 1e-6);
}

TEST_CASE("lambda is monotone in h") {
    auto s = ManifoldModel::sphere(4, 512);
    Field f = make_field(s, 1.0);
    Field h2 = make_field(s, 2.0);
    Field h1 = h2 - sample_radial(s, [](double r) { return 0.3 * smoothstep_down(r, 0.5, 1.5); });
    const double q = 2.6;
    const double l1 = solve_subcritical(make_triple(s, h1, f), q, {}).lambda;
    const double l2 = solve_subcritical(make_triple(s, h2, f), q, {}).lambda;
    CHECK(l1 <= l2 + 1e-8);
}

TEST_CASE("sign-changing f uses the projected descent and satisfies Euler") {
    auto m = ManifoldModel::torus(3, 2.0 * kPi, 16);
    Field f = sample_coords(m, [&](const std::vector<double>& x) {
        return 1.0 + 1.5 * std::cos(x[0]);
    });
    Triple t = make_triple(m, make_field(m, 1.0), f);
    REQUIRE(t.f_changes_sign());
    SolveOptions opt;
    opt.tol = 1e-5;
    opt.max_iterations = 20000;
    MinimizeReport rep = solve_subcritical(t, 2.5, opt);
    CHECK(rep.residual <= 1e-5);
    CHECK(field_min(rep.u) >= 0.0);
    CHECK(constraint_integral(t, rep.u, 2.5) == Catch::Approx(1.0).margin(1e-8));
}

TEST_CASE("sphere continuation reaches the Aubin ceiling") {
    Triple t = conformal_sphere_triple(4, 1024);
    ClassifyOptions opt;
    LambdaReport rep = lambda_critical(t, opt);
    const double kinv2 = 1.0 / sobolev_K2(4);
    CHECK(rep.lambda == Catch::Approx(kinv2).epsilon(0.02));
    // ceiling law along the whole trace
    for (auto& [q, lam] : rep.trace) CHECK(lam <= rep.ceiling.value * (1.0 + 1e-9));

    Classification cls = classify(t, opt);
    CHECK(cls.kind == ClassKind::WeaklyCritical);
}

TEST_CASE("small h on the torus classifies subcritical") {
    auto m = ManifoldModel::torus(4, 2.0 * kPi, 8);
    Triple t = make_triple(m, make_field(m, 0.01), make_field(m, 1.0));
    Classification cls = classify(t, {});
    CHECK(cls.kind == ClassKind::Subcritical);
    // constant competitors pin lambda below 0.01 Vol^{2/n} at the limit
    CHECK(cls.detail.lambda <= 0.01 * std::pow(volume(m), 0.5) * 1.01);
}

TEST_CASE("classification is invariant under f scaling") {
    Triple t = conformal_sphere_triple(4, 512);
    Classification c1 = classify(t, {});
    Triple tc = make_triple(t.m, t.h, 3.0 * t.f);
    Classification c2 = classify(tc, {});
    CHECK(c1.kind == c2.kind);
    const double s = std::pow(3.0, -0.5);  // c^{-(n-2)/n}, n = 4
    CHECK(c2.detail.lambda_raw == Catch::Approx(s * c1.detail.lambda_raw).epsilon(1e-6));
}

TEST_CASE("sobolev deficit examples") {
    auto m = ManifoldModel::torus(4, 2.0 * kPi, 8);
    const int n = 4;
    const double K2 = sobolev_K2(n);
    Field one = make_field(m, 1.0);
    const double vol = volume(m);
    CHECK(sobolev_deficit(m, one, K2, std::pow(vol, -2.0 / n)) ==
          Catch::Approx(0.0).margin(1e-9));
    const double d1 = sobolev_deficit(m, one, K2, 0.1);
    const double d2 = sobolev_deficit(m, one, K2, 0.2);
    CHECK(d2 > d1);
}

TEST_CASE("b0 lower estimate honors closed-form floors") {
    auto m = ManifoldModel::torus(4, 2.0 * kPi, 8);
    const int n = 4;
    std::vector<Field> fam = {make_field(m, 1.0)};
    const double b = b0_lower_estimate(m, fam);
    CHECK(b == Catch::Approx(std::pow(volume(m), -2.0 / n)).epsilon(1e-10));

    auto s = ManifoldModel::sphere(4, 512);
    const double K2 = sobolev_K2(n);
    std::vector<Field> fam_s = {make_field(s, 1.0)};
    const double bs = b0_lower_estimate(s, fam_s);
    CHECK(bs >= n * (n - 2.0) * K2 / 4.0 - 1e-10);
}

TEST_CASE("bubble-localized deficit stays near saturation") {
    const int n = 4;
    auto s = ManifoldModel::sphere(n, 4096);
    const double K2 = sobolev_K2(n);
    // truncated bubble about the pole
    const double k = 400.0, delta = 0.7;
    Field w = sample_radial(s, [&](double r) {
        if (r >= delta) return 0.0;
        return std::pow(1.0 / k + r * r, -(n - 2.0) / 2.0) -
               std::pow(1.0 / k + delta * delta, -(n - 2.0) / 2.0);
    });
    const double big_b = 50.0;
    CHECK(sobolev_deficit(s, w, K2, big_b) / std::pow(integrate(s, field_map(w, [&](double x) {
              return std::pow(std::abs(x), critical_exponent(n));
          })), 2.0 / critical_exponent(n)) >= -1e-3);
}
