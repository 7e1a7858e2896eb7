#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "critlab/elliptic.hpp"

using namespace critlab;

TEST_CASE("torus solve with constant h diagonalizes per mode") {
    const double L = 2.0 * kPi;
    auto t = ManifoldModel::torus(3, L, 16);
    Field h = make_field(t, 1.0);
    Field rhs = sample_coords(t, [&](const std::vector<double>& x) {
        return std::cos(2.0 * kPi * 2.0 * x[0] / L);
    });
    Field v = solve_linear(t, h, rhs, 1e-12);
    const double sym = std::pow(2.0 * kPi * 2.0 / L, 2);
    double worst = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
        worst = std::max(worst, std::abs(v.v[i] - rhs.v[i] / (sym + 1.0)));
    CHECK(worst < 1e-12);
}

TEST_CASE("coercivity margin: constant shifts") {
    auto t = ManifoldModel::torus(2, 1.0, 16);
    CHECK(coercivity_margin(t, make_field(t, 2.5)) == Catch::Approx(2.5).margin(1e-8));
    CHECK(coercivity_margin(t, make_field(t, 0.0)) == Catch::Approx(0.0).margin(1e-8));

    auto s3 = ManifoldModel::sphere(3, 1024);
    CHECK(coercivity_margin(s3, make_field(s3, 0.75)) == Catch::Approx(0.75).margin(1e-6));
}

TEST_CASE("h below the first sphere eigenvalue is not coercive") {
    const int n = 3;
    auto s = ManifoldModel::sphere(n, 512);
    Field h = make_field(s, -2.0 * n);
    // margin should be about -2n (constant mode); solve must refuse
    const double mu = coercivity_margin(s, h);
    CHECK(mu < 0.0);
    CHECK(mu == Catch::Approx(-2.0 * n).margin(1e-5));
    Field rhs = make_field(s, 1.0);
    CHECK_THROWS_AS(solve_linear(s, h, rhs, 1e-8), NotCoercive);
}

TEST_CASE("radial margin sees nonconstant h") {
    auto s = ManifoldModel::sphere(3, 1024);
    Field h = sample_radial(s, [](double r) { return 0.5 + 0.2 * std::cos(r); });
    const double mu = coercivity_margin(s, h);
    // Rayleigh bound from the constant test function
    Field one = make_field(s, 1.0);
    const double upper = integrate(s, h * one) / volume(s);
    CHECK(mu <= upper + 1e-8);
    CHECK(mu > 0.2);
}

TEST_CASE("solve round trip reproduces rhs") {
    auto s = ManifoldModel::sphere(4, 2048);
    Field h = sample_radial(s, [](double r) { return 1.0 + 0.3 * std::sin(r); });
    Field rhs = sample_radial(s, [](double r) { return std::cos(2.0 * r); });
    Field v = solve_linear(s, h, rhs, 1e-10);
    EllipticOperator op(s, h);
    Field back = op.apply(v);
    CHECK(norm_L2(back - rhs) / norm_L2(rhs) < 1e-10);

    auto t = ManifoldModel::torus(3, 2.0 * kPi, 16);
    Field ht = sample_radial(t, [](double d) { return 1.0 + 0.4 * smoothstep_down(d, 0.5, 1.5); },
                             nullptr);
    Field rt = sample_coords(t, [&](const std::vector<double>& x) {
        return std::sin(x[0]) + std::cos(2.0 * x[1]);
    });
    Field vt = solve_linear(t, ht, rt, 1e-9);
    EllipticOperator opt(t, ht);
    CHECK(norm_L2(opt.apply(vt) - rt) / norm_L2(rt) < 1e-8);
}

TEST_CASE("coercivity inequality holds on random smooth fields") {
    auto s = ManifoldModel::sphere(3, 1024);
    Field h = sample_radial(s, [](double r) { return 0.8 + 0.3 * std::cos(2.0 * r); });
    const double mu = coercivity_margin(s, h);
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> amp(-1.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        double a1 = amp(rng), a2 = amp(rng), a3 = amp(rng);
        Field u = sample_radial(s, [&](double r) {
            return a1 + a2 * std::cos(r) + a3 * std::cos(2.0 * r);
        });
        const double energy = dirichlet_energy(s, u) + integrate(s, h * u * u);
        const double l2 = integrate(s, u * u);
        CHECK(energy >= (mu - 1e-6) * l2 - 1e-9);
    }
}

TEST_CASE("margin is monotone in h") {
    auto t = ManifoldModel::torus(2, 2.0, 16);
    Field h1 = sample_radial(t, [](double d) { return 0.5 + 0.1 * d; }, nullptr);
    Field h2 = h1 + 0.3;
    CHECK(coercivity_margin(t, h1) <= coercivity_margin(t, h2) + 1e-8);
}
