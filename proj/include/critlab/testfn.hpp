#pragma once

// Aubin test functions psi_k, their expansion predictions, the criterion at
// maxima of f, and the dimension-3 test functions u_eps = eta v_eps + beta
// with the weakly-critical deficit sweep.

#include <cmath>
#include <functional>
#include <vector>

#include "critlab/functional.hpp"
#include "critlab/green.hpp"
#include "critlab/manifold.hpp"

namespace critlab {

struct AubinParams {
    double k = 100.0;     // concentration parameter, >= 1
    Point P;              // center (pole on radial models)
    double delta = 0.5;   // cutoff radius, < injectivity radius
};

/// The cutoff bubble (1/k + r^2)^{-(n-2)/2} - (1/k + delta^2)^{-(n-2)/2},
/// radial about P, zero from r = delta outward.
inline Field aubin_psi(const ManifoldPtr& m, const AubinParams& p) {
    if (p.k < 1.0) throw ConfigError("aubin_psi: k must be >= 1");
    if (p.delta >= m->injectivity_radius())
        throw ConfigError("aubin_psi: delta must stay below the injectivity radius");
    if (m->is_radial() && p.P.r() != 0.0)
        throw ConfigError("aubin_psi: radial models center psi at the pole");
    const double a = -(m->dim - 2.0) / 2.0;
    const double tail = std::pow(1.0 / p.k + p.delta * p.delta, a);
    auto profile = [&, a, tail](double r) {
        if (r >= p.delta) return 0.0;
        return std::pow(1.0 / p.k + r * r, a) - tail;
    };
    return sample_radial(m, profile, &p.P);
}

/// J_{h,1,g}(psi_k) for constant h, by adaptive radial quadrature of the
/// closed-form profile (resolves k far beyond what the grid can sample).
inline double aubin_quotient_const_h(const ManifoldPtr& m, const AubinParams& p, double h0) {
    const int n = m->dim;
    const double a = -(n - 2.0) / 2.0;
    const double tail = std::pow(1.0 / p.k + p.delta * p.delta, a);
    auto psi = [&](double r) { return std::pow(1.0 / p.k + r * r, a) - tail; };
    auto dpsi = [&](double r) { return 2.0 * a * r * std::pow(1.0 / p.k + r * r, a - 1.0); };
    auto w = [&](double r) { return m->radial_weight(r); };
    const double wn1 = sphere_volume(n - 1);
    const double crit = critical_exponent(n);
    // split the range so the adaptive rule sees the core
    auto piecewise = [&](const std::function<double(double)>& f) {
        double acc = 0.0;
        const double core = std::min(p.delta, 10.0 / std::sqrt(p.k));
        acc += integrate_adaptive_rel(f, 0.0, core, 1e-12);
        if (core < p.delta) acc += integrate_adaptive_rel(f, core, p.delta, 1e-12);
        return acc;
    };
    const double grad2 = piecewise([&](double r) { return dpsi(r) * dpsi(r) * w(r); });
    const double mass2 = piecewise([&](double r) { return psi(r) * psi(r) * w(r); });
    const double masscrit = piecewise([&](double r) { return std::pow(psi(r), crit) * w(r); });
    return (wn1 * grad2 + h0 * wn1 * mass2) / std::pow(wn1 * masscrit, 2.0 / crit);
}

/// Predicted J(psi_k) from the Chapter 1 expansions (no o-term): the n > 4
/// branch carries the 1/k correction, n = 4 the log k / (8k) one.
inline double aubin_expansion(int n, double hP, double SgP, double lapf_over_f, double k,
                              double sup_f) {
    if (n < 4) throw ConfigError("aubin_expansion: n >= 4 (dimension 3 has its own tests)");
    if (sup_f <= 0) throw ConfigError("aubin_expansion: sup f must be positive");
    const double ceiling = 1.0 / (sobolev_K2(n) * std::pow(sup_f, (n - 2.0) / n));
    if (n == 4) return ceiling * (1.0 + (6.0 * hP - SgP) * std::log(k) / (8.0 * k));
    const double gap =
        4.0 * (n - 1.0) / (n - 2.0) * hP - SgP + (n - 4.0) / 2.0 * lapf_over_f;
    return ceiling * (1.0 + gap / (n * (n - 4.0) * k));
}

enum class CriterionBranch { N4, NGreater4 };

struct CriterionReport {
    Point P;
    double gap = 0.0;
    CriterionBranch branch = CriterionBranch::NGreater4;
    double lapf_over_f = 0.0;
};

namespace detail {

inline std::size_t nearest_node(const ManifoldPtr& m, const Point& P) {
    if (m->is_radial()) {
        const double idx = P.r() / m->spacing();
        const long i = std::lround(idx);
        return static_cast<std::size_t>(std::clamp<long>(i, 0, m->node_count() - 1));
    }
    std::vector<double> x;
    std::size_t best = 0;
    double bestd = 1e300;
    for (std::size_t i = 0; i < m->node_count(); ++i) {
        m->coords_of(i, x);
        const double d = m->torus_distance(x, P.x);
        if (d < bestd) {
            bestd = d;
            best = i;
        }
    }
    return best;
}

/// Discrete Laplacian of f at a node, Richardson-refined over the stencil
/// width on radial grids (the torus Laplacian is already spectral).
inline double laplacian_at(const ManifoldPtr& m, const Field& f, std::size_t node) {
    if (!m->is_radial()) {
        Field lap = laplacian(m, f);
        return lap.v[node];
    }
    const std::size_t N = m->node_count();
    const double dr = m->spacing();
    auto stencil = [&](std::size_t step) -> std::optional<double> {
        const double dd = step * dr;
        if (node == 0) return -m->dim * 2.0 * (f.v[step] - f.v[0]) / (dd * dd);
        if (node == N - 1) return -m->dim * 2.0 * (f.v[N - 1 - step] - f.v[N - 1]) / (dd * dd);
        if (node < step || node + step >= N) return std::nullopt;
        const double r = m->r_at(node);
        const double upp = (f.v[node + step] - 2.0 * f.v[node] + f.v[node - step]) / (dd * dd);
        const double up = (f.v[node + step] - f.v[node - step]) / (2.0 * dd);
        return radial_laplacian_value(*m, r, up, upp);
    };
    const auto d1 = stencil(1), d2 = stencil(2);
    if (d1 && d2) return (4.0 * (*d1) - *d2) / 3.0;
    return *d1;
}

}  // namespace detail

/// The Proposition-1 quantity at a maximum P of f:
///   4(n-1)/(n-2) h(P) - S_g(P) + (n-4)/2 Delta f(P)/f(P)
/// (the n = 4 branch drops the f term; its value 6 h(P) - S_g(P) coincides).
inline CriterionReport criterion_gap(const Triple& t, const Point& P) {
    const int n = t.dim();
    if (n < 4) throw ConfigError("criterion_gap: n >= 4");
    const std::size_t node = detail::nearest_node(t.m, P);
    if (t.f.v[node] < (1.0 - 1e-6) * t.sup_f - 1e-12)
        throw ConfigError("criterion_gap: P is not a maximum of f");
    CriterionReport rep;
    rep.P = P;
    rep.branch = n == 4 ? CriterionBranch::N4 : CriterionBranch::NGreater4;
    rep.lapf_over_f = detail::laplacian_at(t.m, t.f, node) / t.f.v[node];
    rep.gap = 4.0 * (n - 1.0) / (n - 2.0) * t.h.v[node] - t.m->scalar_curvature();
    if (n > 4) rep.gap += (n - 4.0) / 2.0 * rep.lapf_over_f;
    return rep;
}

/// I_{p,q} = int_0^inf s^{p+2} (1+s^2)^{-q/2} ds by adaptive quadrature
/// (substituted s = tan theta), relative accuracy 1e-10. Requires q - p > 3.
inline double radial_integral_Ipq(int p, int q) {
    if (q - p <= 3)
        throw ConfigError("radial_integral_Ipq: divergent for q - p <= 3");
    auto integrand = [&](double th) {
        return std::pow(std::sin(th), p + 2) * std::pow(std::cos(th), q - p - 4);
    };
    return integrate_adaptive(integrand, 0.0, 0.5 * kPi, 1e-13);
}

/// Dimension-3 test function u_eps = eta v_eps + beta about x0, with
/// v_eps = (eps^2 + r^2)^{-1/2} and the cutoff/regular part of a Green build.
inline Field dim3_test_function(const ManifoldPtr& m, const Point& x0, double eps,
                                const Field& beta, double delta) {
    if (m->dim != 3) throw ConfigError("dim3_test_function: dimension 3 only");
    if (m->is_radial() && x0.r() != 0.0)
        throw ConfigError("dim3_test_function: center at the pole");
    if (!(eps > 0.0) || eps >= delta)
        throw ConfigError("dim3_test_function: need 0 < eps << delta");
    Field u = beta;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double r = m->r_at(i);
        const double eta = smoothstep_down(r, delta, 2.0 * delta);
        u.v[i] += eta / std::sqrt(eps * eps + r * r);
    }
    return u;
}

struct MassSignReport {
    std::vector<double> eps;
    std::vector<double> deficit;   // RHS - LHS of (7.10) per eps
    double a0 = 0.0;               // fitted eps^0 coefficient
    double a1 = 0.0;               // fitted eps^1 coefficient
    double min_deficit = 0.0;
    double beta_at_center = 0.0;
};

struct Dim3TestOptions {
    ClassifyOptions classify;
    double green_tol = 1e-10;
};

/// Sweep the weakly-critical inequality deficit over eps and fit its
/// small-eps behaviour: deficit(eps) ~ a0 + a1 eps with a0 = -omega_2
/// beta(x0) in theory. Requires the triple to measure weakly critical.
inline MassSignReport dim3_weakly_critical_test(const Triple& t, const Point& x0,
                                                const std::vector<double>& eps_sweep,
                                                const Dim3TestOptions& opt = {}) {
    if (t.dim() != 3) throw ConfigError("dim3_weakly_critical_test: dimension 3 only");
    if (eps_sweep.empty()) throw ConfigError("dim3_weakly_critical_test: empty sweep");
    const std::size_t node = detail::nearest_node(t.m, x0);
    if (t.f.v[node] < (1.0 - 1e-6) * t.sup_f - 1e-12)
        throw ConfigError("dim3_weakly_critical_test: x0 must be a maximum of f");
    if (classify(t, opt.classify).kind != ClassKind::WeaklyCritical) throw NotWeaklyCritical();

    const double delta = 0.3 * t.m->injectivity_radius();
    GreenFunction gf = build_green(t.m, t.h, x0, delta, opt.green_tol);
    // in dimension 3, omega_2 G = eta/d + beta with beta the build's regular part
    const Field& beta = gf.beta;

    MassSignReport rep;
    rep.eps = eps_sweep;
    rep.deficit.assign(eps_sweep.size(), 0.0);
    rep.beta_at_center = beta.v[0];
    const double lhs_const =
        (1.0 / sobolev_K2(3)) * std::pow(t.sup_f, -1.0 / 3.0);
    parallel_for(eps_sweep.size(), [&](std::size_t j) {
        Field u = dim3_test_function(t.m, x0, eps_sweep[j], beta, delta);
        Field fu6 = make_field(t.m);
        for (std::size_t i = 0; i < fu6.size(); ++i)
            fu6.v[i] = t.f.v[i] * std::pow(std::abs(u.v[i]), 6.0);
        const double lhs = lhs_const * std::cbrt(integrate(t.m, fu6));
        Field hu2 = t.h * u * u;
        const double rhs = dirichlet_energy(t.m, u) + integrate(t.m, hu2);
        rep.deficit[j] = rhs - lhs;
    });

    // least-squares line over the sweep
    const std::size_t nn = eps_sweep.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t j = 0; j < nn; ++j) {
        sx += eps_sweep[j];
        sy += rep.deficit[j];
        sxx += eps_sweep[j] * eps_sweep[j];
        sxy += eps_sweep[j] * rep.deficit[j];
    }
    const double denom = nn * sxx - sx * sx;
    if (nn >= 2 && std::abs(denom) > 0) {
        rep.a0 = (sy * sxx - sx * sxy) / denom;
        rep.a1 = (nn * sxy - sx * sy) / denom;
    } else {
        rep.a0 = rep.deficit[0];
    }
    rep.min_deficit = *std::min_element(rep.deficit.begin(), rep.deficit.end());
    return rep;
}

}  // namespace critlab
