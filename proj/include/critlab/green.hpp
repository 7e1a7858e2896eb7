#pragma once

// Constructive Green's function for Delta_g + h: cut off the flat kernel
// eta/r^{n-2}, absorb its defect into a rhs Gamma = -Delta(eta/r^{n-2})
// - h eta/r^{n-2}, solve for the regular part beta, and assemble
//   G = (beta + eta/r^{n-2}) / ((n-2) omega_{n-1}).
// In dimension 3 the constant term of G - 1/(omega_2 d) is the mass M_h(x).

#include <cmath>
#include <functional>
#include <vector>

#include "critlab/elliptic.hpp"
#include "critlab/functional.hpp"
#include "critlab/manifold.hpp"

namespace critlab {

struct GreenFunction {
    ManifoldPtr m;
    Field h;
    Point pole;
    double delta = 0.0;                // cutoff radius; eta == 1 on [0, delta], 0 beyond 2 delta
    double singular_prefactor = 0.0;   // 1 / ((n-2) omega_{n-1})
    Field beta;                        // regular part
    Field G;                           // reconstructed values (pole node regularized)
    std::optional<double> mass;        // dim 3 only, filled by green_mass
};

struct BoundsReport {
    double c_low = 0.0;        // min of G d^{n-2} over the window
    double c_high = 0.0;       // max of G d^{n-2} over the window
    double grad_ratio_c = 0.0; // fitted c in |grad G|/G >= c/d
    double limit_defect = 0.0; // |G d^{n-2} (n-2) omega_{n-1} - 1| at small radii
    double min_G = 0.0;        // positivity probe away from the pole
};

namespace detail {

struct KernelPieces {
    std::function<double(double)> eta, eta1, eta2;  // cutoff and derivatives
    std::function<double(double)> k, k1, k2;        // r^{2-n} and derivatives
    double value(double r) const { return eta(r) * k(r); }
    double d1(double r) const { return eta1(r) * k(r) + eta(r) * k1(r); }
    double d2(double r) const {
        return eta2(r) * k(r) + 2.0 * eta1(r) * k1(r) + eta(r) * k2(r);
    }
};

inline KernelPieces make_kernel(int n, double delta) {
    KernelPieces kp;
    kp.eta = [delta](double r) { return smoothstep_down(r, delta, 2.0 * delta); };
    kp.eta1 = [delta](double r) { return smoothstep_down_d1(r, delta, 2.0 * delta); };
    kp.eta2 = [delta](double r) { return smoothstep_down_d2(r, delta, 2.0 * delta); };
    const double a = 2.0 - n;
    kp.k = [a](double r) { return std::pow(r, a); };
    kp.k1 = [a](double r) { return a * std::pow(r, a - 1.0); };
    kp.k2 = [a](double r) { return a * (a - 1.0) * std::pow(r, a - 2.0); };
    return kp;
}

/// Gamma_y(r) = -Delta_g(eta k) - h(r) eta k, with the Laplacian of the
/// singular product taken analytically (closed-form radial Laplacian).
inline double gamma_value(const ManifoldModel& m, const KernelPieces& kp, double r, double h_r) {
    if (r <= 0.0) return 0.0;  // pole handled by cell averaging
    const double lap = radial_laplacian_value(m, r, kp.d1(r), kp.d2(r));
    return -lap - h_r * kp.value(r);
}

/// Average of fn over the radial cell [max(0, r-w/2), r+w/2] against the
/// area density; used to regularize singular samples near the pole.
inline double radial_cell_average(const ManifoldModel& m,
                                  const std::function<double(double)>& fn, double r, double w) {
    const double a = std::max(0.0, r - 0.5 * w), b = r + 0.5 * w;
    const double num = integrate_adaptive(
        [&](double s) { return fn(s) * m.radial_weight(s); }, a, b, 1e-13);
    const double den = integrate_adaptive(
        [&](double s) { return m.radial_weight(s); }, a, b, 1e-14);
    return den > 0.0 ? num / den : fn(b);
}

/// Average of fn(|x - pole|) over the torus grid cell centered at node i,
/// by local subdivision (even count, so the singular point is never hit).
/// Only used for cells near the pole.
inline double torus_cell_average(const ManifoldModel& m, const std::vector<double>& pole,
                                 const std::vector<double>& node,
                                 const std::function<double(double)>& fn, int sub = 6) {
    const double h = m.spacing();
    std::vector<double> x(m.dim);
    double acc = 0.0;
    const int total = static_cast<int>(std::pow(sub, m.dim));
    for (int c = 0; c < total; ++c) {
        int rem = c;
        for (int d = 0; d < m.dim; ++d) {
            const int j = rem % sub;
            rem /= sub;
            x[d] = node[d] + ((j + 0.5) / sub - 0.5) * h;
        }
        acc += fn(m.torus_distance(x, pole));
    }
    return acc / total;
}

}  // namespace detail

/// Build the Green function of (Delta_g + h) with pole at `pole`.
/// Radial models require the pole at the grid origin.
inline GreenFunction build_green(const ManifoldPtr& m, const Field& h, const Point& pole,
                                 double delta, double tol = 1e-10) {
    if (h.m.get() != m.get()) throw DimensionMismatch("build_green: h not on this manifold");
    const int n = m->dim;
    if (n < 3) throw ConfigError("build_green: needs dim >= 3");
    if (2.0 * delta >= m->injectivity_radius())
        throw ConfigError("build_green: cutoff 2*delta must stay below the injectivity radius");
    if (m->is_radial() && pole.r() != 0.0)
        throw ConfigError("build_green: radial models take the pole at the grid origin");

    EllipticOperator op(m, h);
    if (field_min(h) <= 1e-6) {
        const double mu = op.margin();
        if (mu <= 1e-6) throw NotCoercive(mu);
    }

    const auto kp = detail::make_kernel(n, delta);
    GreenFunction gf;
    gf.m = m;
    gf.h = h;
    gf.pole = pole;
    gf.delta = delta;
    gf.singular_prefactor = 1.0 / ((n - 2.0) * sphere_volume(n - 1));

    Field gamma = make_field(m);
    Field kfield = make_field(m);
    if (m->is_radial()) {
        const double dr = m->spacing();
        for (std::size_t i = 0; i < gamma.size(); ++i) {
            const double r = m->r_at(i);
            if (r < 1.5 * dr) {
                gamma.v[i] = detail::radial_cell_average(
                    *m, [&](double s) { return detail::gamma_value(*m, kp, s, h.v[i]); },
                    r, dr);
                kfield.v[i] = detail::radial_cell_average(
                    *m, [&](double s) { return kp.value(s); }, r, dr);
            } else {
                gamma.v[i] = detail::gamma_value(*m, kp, r, h.v[i]);
                kfield.v[i] = kp.value(r);
            }
        }
        gamma.sym = kfield.sym = Symmetry::Radial;
    } else {
        // flat case: Delta_e k = 0, so Gamma = -Delta(eta k) - h eta k with the
        // cutoff product handled analytically; kernel cells near the pole are
        // averaged so the singular quadrature stays consistent.
        const double hgrid = m->spacing();
        std::vector<double> x;
        auto kxfn = [&](double d) { return kp.value(d); };
        auto gxfn = [&](double d, double hval) {
            if (d <= 0.0) return 0.0;
            const double lap = -(kp.d2(d) + (n - 1) / d * kp.d1(d));
            return -lap - hval * kp.value(d);
        };
        for (std::size_t i = 0; i < gamma.size(); ++i) {
            m->coords_of(i, x);
            const double d = m->torus_distance(x, pole.x);
            if (d < 4.0 * hgrid) {
                kfield.v[i] = detail::torus_cell_average(*m, pole.x, x, kxfn);
                const double hv = h.v[i];
                gamma.v[i] = detail::torus_cell_average(
                    *m, pole.x, x, [&](double s) { return gxfn(s, hv); });
            } else {
                kfield.v[i] = kp.value(d);
                gamma.v[i] = gxfn(d, h.v[i]);
            }
        }
    }

    gf.beta = op.solve(gamma, tol);
    gf.G = gf.singular_prefactor * (gf.beta + kfield);
    return gf;
}

/// Weak delta identity: max over a basket of smooth test fields of
/// |int G (Delta phi + h phi) - phi(pole)| / ||phi||_{C^2}.
inline double green_weak_identity_defect(const GreenFunction& gf,
                                         const std::vector<Field>& basket) {
    double worst = 0.0;
    EllipticOperator op(gf.m, gf.h);
    for (const Field& phi : basket) {
        Field Aphi = op.apply(phi);
        const double lhs = integrate(gf.m, gf.G * Aphi);
        double phi_at_pole;
        if (gf.m->is_radial()) {
            phi_at_pole = phi.v[0];
        } else {
            // pole assumed on a grid node
            std::vector<double> x;
            std::size_t best = 0;
            double bestd = 1e300;
            for (std::size_t i = 0; i < phi.size(); ++i) {
                gf.m->coords_of(i, x);
                const double d = gf.m->torus_distance(x, gf.pole.x);
                if (d < bestd) {
                    bestd = d;
                    best = i;
                }
            }
            phi_at_pole = phi.v[best];
        }
        const double c2 =
            field_max_abs(phi) + field_max_abs(grad_norm(gf.m, phi)) + field_max_abs(laplacian(gf.m, phi));
        worst = std::max(worst, std::abs(lhs - phi_at_pole) / std::max(1.0, c2));
    }
    return worst;
}

/// Empirical checks of the short-distance bounds (3.3)-(3.6).
inline BoundsReport verify_bounds(const GreenFunction& gf, double rho) {
    if (!gf.m->is_radial())
        throw ConfigError("verify_bounds: implemented for radial models");
    const int n = gf.m->dim;
    const double pref = (n - 2.0) * sphere_volume(n - 1);
    BoundsReport rep;
    rep.c_low = 1e300;
    rep.c_high = 0.0;
    rep.grad_ratio_c = 1e300;
    const double dr = gf.m->spacing();
    const std::size_t N = gf.m->node_count();
    double minG = 1e300;
    for (std::size_t i = 1; i < N; ++i) {
        const double r = gf.m->r_at(i);
        if (r >= dr) minG = std::min(minG, gf.G.v[i]);
        if (r <= 0.0 || r > rho) continue;
        const double gd = gf.G.v[i] * std::pow(r, n - 2.0);
        rep.c_low = std::min(rep.c_low, gd);
        rep.c_high = std::max(rep.c_high, gd);
        if (i + 1 < N && i >= 1) {
            const double dG = (gf.G.v[i + 1] - gf.G.v[i - 1]) / (2.0 * dr);
            if (gf.G.v[i] > 0.0)
                rep.grad_ratio_c = std::min(rep.grad_ratio_c, std::abs(dG) / gf.G.v[i] * r);
        }
    }
    rep.min_G = minG;
    const double r5 = gf.m->r_at(5);
    rep.limit_defect = std::abs(gf.G.v[5] * std::pow(r5, n - 2.0) * pref - 1.0);
    return rep;
}

struct MassFit {
    double M = 0.0;        // intercept: the mass
    double slope = 0.0;
    double stderr_M = 0.0; // standard error of the intercept
};

/// Dimension-3 mass: intercept of the linear fit G(r) - 1/(omega_2 r) over a
/// radial window. Equivalently beta(pole)/omega_2.
inline MassFit green_mass_fit(const GreenFunction& gf, double fit_rmin, double fit_rmax) {
    if (gf.m->dim != 3) throw ConfigError("green_mass: dimension 3 only");
    const double dr = gf.m->spacing();
    if (fit_rmin < 5.0 * dr - 1e-12)
        throw FitUnstable("mass fit window reaches below 5 grid steps");
    if (fit_rmax > gf.delta)
        throw FitUnstable("mass fit window beyond the cutoff radius");
    const double w2 = sphere_volume(2);
    std::vector<double> xs, ys;
    for (std::size_t i = 1; i < gf.m->node_count(); ++i) {
        const double r = gf.m->r_at(i);
        if (r < fit_rmin || r > fit_rmax) continue;
        xs.push_back(r);
        ys.push_back(gf.G.v[i] - 1.0 / (w2 * r));
    }
    const std::size_t count = xs.size();
    if (count < 8) throw FitUnstable("mass fit window contains fewer than 8 nodes");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < count; ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double denom = count * sxx - sx * sx;
    MassFit fit;
    fit.M = (sy * sxx - sx * sxy) / denom;
    fit.slope = (count * sxy - sx * sy) / denom;
    double ss = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double e = ys[i] - fit.M - fit.slope * xs[i];
        ss += e * e;
    }
    const double sigma2 = ss / std::max<std::size_t>(1, count - 2);
    fit.stderr_M = std::sqrt(sigma2 * sxx / denom);
    return fit;
}

inline double green_mass(GreenFunction& gf, double fit_rmin, double fit_rmax) {
    const MassFit fit = green_mass_fit(gf, fit_rmin, fit_rmax);
    gf.mass = fit.M;
    return fit.M;
}

/// Build-and-fit at a point. Radial models carry the pole at the origin;
/// probing x != origin is valid only for constant h (homogeneity).
inline double green_mass(const ManifoldPtr& m, const Field& h, const Point& x,
                         std::pair<double, double> fit_window = {-1.0, 0.1},
                         double delta = -1.0) {
    if (delta <= 0.0) delta = 0.3 * m->injectivity_radius();
    const bool h_const =
        std::abs(field_max(h) - field_min(h)) <= 1e-12 * (1.0 + std::abs(field_max(h)));
    if (m->is_radial() && x.r() != 0.0 && !h_const)
        throw ConfigError("green_mass: off-pole probe with nonconstant h");
    GreenFunction gf = build_green(m, h, Point::radial(0.0), delta);
    double rmin = fit_window.first;
    if (rmin <= 0.0) rmin = 5.0 * m->spacing();
    return green_mass(gf, rmin, fit_window.second);
}

// ---------------------------------------------------------------------------
// Dimension-3 criteria (Theorems 6-8 as numerical checks)
// ---------------------------------------------------------------------------

struct CriteriaReport {
    std::vector<Point> maxima;
    std::vector<double> masses;
    bool all_nonpositive = false;   // consistent with weakly critical h
    bool any_zero = false;          // Theorem 8 branch a/
    bool contradiction_flag = false;  // weakly critical but some mass > tol
    double B_shift = 0.0;           // inf { B : h + B weakly critical }
    double B_band = 0.0;            // bisection bracket width
};

struct CriteriaOptions {
    double mass_tol = 1e-3;
    double bisect_tol = 5e-3;
    ClassifyOptions classify;
};

inline CriteriaReport mass_criteria(const Triple& t, const CriteriaOptions& opt = {}) {
    if (t.dim() != 3) throw ConfigError("mass_criteria: dimension 3 only");
    if (t.framed()) throw ConfigError("mass_criteria: grid-frame triples only");
    CriteriaReport rep;

    // mass at maxima of f. On radial models the pole must carry the Green
    // construction; relocation off the pole is only valid for constant h.
    const bool h_const =
        std::abs(field_max(t.h) - field_min(t.h)) <= 1e-12 * (1.0 + std::abs(field_max(t.h)));
    std::vector<Point> probes = t.maxima;
    if (t.maxima_everywhere && h_const) probes = {Point::radial(0.0)};
    if (h_const) {
        const double mv = green_mass(t.m, t.h, Point::radial(0.0));
        for (const Point& P : probes) {
            rep.maxima.push_back(P);
            rep.masses.push_back(mv);
        }
    } else {
        for (const Point& P : probes) {
            if (t.m->is_radial() && P.r() != 0.0)
                throw ConfigError("mass_criteria: off-pole maximum with nonconstant h");
            rep.maxima.push_back(P);
            rep.masses.push_back(green_mass(t.m, t.h, P));
        }
    }
    rep.all_nonpositive = true;
    for (double mv : rep.masses) {
        if (mv > opt.mass_tol) rep.all_nonpositive = false;
        if (std::abs(mv) <= opt.mass_tol) rep.any_zero = true;
    }

    Classification base = classify(t, opt.classify);
    if (base.kind == ClassKind::WeaklyCritical && !rep.all_nonpositive)
        rep.contradiction_flag = true;

    // Theorem 7: B(h) = inf { B : h + B weakly critical }, by bisection on
    // the measured classification. A ceiling overshoot counts as the upper
    // side (the estimate sits at or above the ceiling).
    auto is_subcritical = [&](double B) {
        Triple ts = make_triple(t.m, t.h + B, t.f);
        try {
            return classify(ts, opt.classify).kind == ClassKind::Subcritical;
        } catch (const CeilingViolation&) {
            return false;
        }
    };
    double lo, hi;
    if (!is_subcritical(0.0)) {
        hi = 0.0;
        double step = 0.1;
        lo = -step;
        while (!is_subcritical(lo) && lo > -64.0) {
            hi = lo;
            step *= 2.0;
            lo -= step;
        }
    } else {
        lo = 0.0;
        double step = 0.1;
        hi = step;
        while (is_subcritical(hi) && hi < 64.0) {
            lo = hi;
            step *= 2.0;
            hi += step;
        }
    }
    while (hi - lo > opt.bisect_tol) {
        const double mid = 0.5 * (lo + hi);
        if (is_subcritical(mid))
            lo = mid;
        else
            hi = mid;
    }
    rep.B_shift = 0.5 * (lo + hi);
    rep.B_band = hi - lo;
    return rep;
}

}  // namespace critlab
