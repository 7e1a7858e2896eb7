#pragma once

// Blow-up machinery: standard bubbles, rescaling to the exponential chart,
// the S^n counterexample family, concentration diagnostics (ball masses,
// weak/strong pointwise estimates, L^2 concentration, the second-inequality
// ratio), Moser-iteration bound checks and the Pohozaev residual.
//
// Family members carry an analytic radial profile about their own center
// x_t; ball and L^p integrals go through adaptive quadrature of the profile,
// which resolves concentration scales far below the grid spacing.

#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "critlab/functional.hpp"
#include "critlab/manifold.hpp"

namespace critlab {

/// Closed-form radial profile with optional derivatives.
struct RadialProfile {
    std::function<double(double)> value;
    std::function<double(double)> d1;  // may be empty
    std::function<double(double)> d2;  // may be empty
    bool has_derivatives() const { return static_cast<bool>(d1) && static_cast<bool>(d2); }
};

struct FamilyMember {
    ManifoldPtr m;
    Field u;                 // grid sampling, radial about x_t on radial models
    RadialProfile profile;   // analytic profile about x_t
    double t = 0.0;
    Point x_t;               // center; on the sphere its radius is d(x_t, x0)
    double dist_to_x0 = 0.0;
    double mu_t = 0.0;       // u(x_t)^{-2/(n-2)}
    double lambda_t = 0.0;
    double q_t = 0.0;
    double normalization = 1.0;  // constant applied to the bare formula
};

// ---------------------------------------------------------------------------
// Bubbles
// ---------------------------------------------------------------------------

/// The Euclidean profile (1 + c |x|^2 / (n(n-2)))^{-(n-2)/2} solving
/// Delta_e u = c u^{(n+2)/(n-2)} with c = lambda f(x0).
struct Bubble {
    int n = 3;
    double amplitude_scale = 1.0;  // c

    double value(double rho) const {
        const double b = 1.0 + amplitude_scale * rho * rho / (n * (n - 2.0));
        return std::pow(b, -(n - 2.0) / 2.0);
    }
    double d1(double rho) const {
        const double cc = amplitude_scale / (n * (n - 2.0));
        const double b = 1.0 + cc * rho * rho;
        return -(n - 2.0) * cc * rho * std::pow(b, -n / 2.0);
    }
    double d2(double rho) const {
        const double cc = amplitude_scale / (n * (n - 2.0));
        const double b = 1.0 + cc * rho * rho;
        return -(n - 2.0) * cc * std::pow(b, -n / 2.0) +
               n * (n - 2.0) * cc * cc * rho * rho * std::pow(b, -n / 2.0 - 1.0);
    }
    /// Geometers' flat Laplacian -u'' - (n-1)/rho u'.
    double lap(double rho) const {
        if (rho == 0.0) return -n * d2(0.0);
        return -d2(rho) - (n - 1.0) / rho * d1(rho);
    }
    RadialProfile profile() const {
        return RadialProfile{[*this](double r) { return value(r); },
                             [*this](double r) { return d1(r); },
                             [*this](double r) { return d2(r); }};
    }
};

inline Bubble bubble(int n, double amplitude_scale) {
    if (amplitude_scale <= 0.0) throw ConfigError("bubble: amplitude scale must be positive");
    if (n < 3) throw ConfigError("bubble: n >= 3");
    return Bubble{n, amplitude_scale};
}

/// Collocation residual of the bubble identity over radii.
inline double bubble_identity_residual(const Bubble& b, const std::vector<double>& radii) {
    const double p = critical_exponent(b.n);
    double worst = 0.0;
    for (double rho : radii) {
        const double lhs = b.lap(rho);
        const double rhs = b.amplitude_scale * std::pow(b.value(rho), p - 1.0);
        worst = std::max(worst, std::abs(lhs - rhs));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Profile quadrature helpers
// ---------------------------------------------------------------------------

namespace detail {

/// Integral of fn against the radial area density from 0 to r_end, split on
/// a geometric ladder at the concentration scale so the core is resolved.
inline double profile_integral(const ManifoldModel& m, const std::function<double(double)>& fn,
                               double scale, double r_end, double rel_tol = 1e-11) {
    const double wn1 = sphere_volume(m.dim - 1);
    auto g = [&](double r) { return fn(r) * m.radial_weight(r); };
    double acc = 0.0;
    double a = 0.0;
    double b = std::min(r_end, std::max(scale, 1e-12));
    while (a < r_end) {
        acc += integrate_adaptive_rel(g, a, b, rel_tol);
        a = b;
        b = std::min(r_end, 4.0 * b);
        if (b <= a) break;
    }
    return wn1 * acc;
}

inline double profile_sup(const std::function<double(double)>& fn, double scale, double r_end) {
    double best = 0.0;
    // log ladder through the core plus a uniform tail
    for (int i = 0; i <= 400; ++i) {
        const double rho = scale * 1e-3 * std::pow(1.06, i);
        if (rho > r_end) break;
        best = std::max(best, fn(rho));
    }
    for (int i = 1; i <= 2000; ++i) best = std::max(best, fn(r_end * i / 2000.0));
    return best;
}

}  // namespace detail

/// Integral of f u^alpha over the geodesic ball B(x_t, r) for a member.
inline double member_ball_integral(const FamilyMember& fm, double r, double alpha,
                                   const std::function<double(double)>& f_of_r = {}) {
    if (r > fm.m->injectivity_radius())
        throw ConfigError("member_ball_integral: ball exceeds the injectivity radius");
    auto fn = [&](double rho) {
        const double base = std::pow(fm.profile.value(rho), alpha);
        return f_of_r ? f_of_r(rho) * base : base;
    };
    return detail::profile_integral(*fm.m, fn, fm.mu_t, r);
}

// ---------------------------------------------------------------------------
// Rescaling to the chart
// ---------------------------------------------------------------------------

/// A radial Euclidean chart sampling: values, derivatives, Laplacian and the
/// pulled-back volume factor on a uniform chart grid.
struct ChartField {
    int dim = 0;
    double radius = 0.0;
    std::vector<double> radii, u, du, lap, sqrt_det;
    double q_exponent = 0.0;  // equation exponent metadata, when meaningful
    double spacing() const { return radii.size() > 1 ? radii[1] - radii[0] : 0.0; }
};

/// Rescaled member: u~(x) = m_t^{-1} u(exp_{x_t}(x / k_t)) on B(0, radius),
/// with the rescaled metric volume factor sampled alongside.
inline ChartField rescale(const FamilyMember& fm, double radius, int resolution) {
    const int n = fm.m->dim;
    if (radius * fm.mu_t >= fm.m->injectivity_radius())
        throw ConfigError("rescale: chart ball exceeds the injectivity radius");
    const double m_t = std::pow(fm.mu_t, -(n - 2.0) / 2.0);
    ChartField cf;
    cf.dim = n;
    cf.radius = radius;
    cf.q_exponent = fm.q_t;
    cf.radii.resize(resolution + 1);
    cf.u.resize(resolution + 1);
    cf.du.resize(resolution + 1);
    cf.lap.resize(resolution + 1);
    cf.sqrt_det.resize(resolution + 1);
    const bool sphere = fm.m->kind == ManifoldKind::RoundSphere;
    for (int i = 0; i <= resolution; ++i) {
        const double rho = radius * i / resolution;
        const double r = rho * fm.mu_t;  // manifold radius
        cf.radii[i] = rho;
        cf.u[i] = fm.profile.value(r) / m_t;
        if (fm.profile.has_derivatives()) {
            cf.du[i] = fm.profile.d1(r) * fm.mu_t / m_t;
            const double dd = fm.profile.d2(r) * fm.mu_t * fm.mu_t / m_t;
            cf.lap[i] = rho == 0.0 ? -n * dd : -dd - (n - 1.0) / rho * cf.du[i];
        }
        double q = 1.0;
        if (sphere && r > 0.0) q = std::sin(r) / r;
        cf.sqrt_det[i] = std::pow(q, n - 1.0);
    }
    if (!fm.profile.has_derivatives()) {
        cf.du.clear();
        cf.lap.clear();
    }
    return cf;
}

/// Chart-side integral of u~^alpha over B(0, s) against the rescaled volume.
inline double chart_ball_integral(const ChartField& cf, double s, double alpha) {
    const double wn1 = sphere_volume(cf.dim - 1);
    std::vector<double> g;
    double last_rho = 0.0;
    for (std::size_t i = 0; i < cf.radii.size(); ++i) {
        if (cf.radii[i] > s + 1e-14) break;
        g.push_back(std::pow(cf.u[i], alpha) * cf.sqrt_det[i] *
                    std::pow(cf.radii[i], cf.dim - 1));
        last_rho = cf.radii[i];
    }
    (void)last_rho;
    return wn1 * simpson_uniform(g, cf.spacing());
}

// ---------------------------------------------------------------------------
// The S^n counterexample family (unique critical function of the sphere)
// ---------------------------------------------------------------------------

struct FamilySchedule {
    std::vector<std::pair<double, double>> steps;  // (d(x_t, x0), mu_t)
};

/// Members u_t = a_t (mu_t^2 + 1 - cos r_t)^{-(n-2)/2}, renormalized so that
/// int u^{2*} = 1; a_t is recorded relative to the bare mu_t^{(n-2)/2}.
inline std::vector<FamilyMember> sphere_counterexample_family(const ManifoldPtr& m,
                                                              const FamilySchedule& schedule) {
    if (m->kind != ManifoldKind::RoundSphere)
        throw ConfigError("sphere_counterexample_family: unit sphere only");
    const int n = m->dim;
    const double p = critical_exponent(n);
    std::vector<FamilyMember> family(schedule.steps.size());
    parallel_for(schedule.steps.size(), [&](std::size_t j) {
        const auto [d_t, mu] = schedule.steps[j];
        const double em = -(n - 2.0) / 2.0;
        // 1 - cos r written as 2 sin^2(r/2): stable down to core scales far
        // below the grid
        auto base = [mu](double r) {
            const double sh = std::sin(0.5 * r);
            return mu * mu + 2.0 * sh * sh;
        };
        auto bare = [mu, em, base](double r) { return std::pow(mu, -em) * std::pow(base(r), em); };
        const double mass = detail::profile_integral(
            *m, [&](double r) { return std::pow(bare(r), p); }, mu, kPi, 1e-12);
        const double s = std::pow(mass, -1.0 / p);

        FamilyMember fm;
        fm.m = m;
        fm.t = static_cast<double>(j);
        fm.x_t = Point::radial(d_t);
        fm.dist_to_x0 = d_t;
        fm.normalization = s;
        const double a = s * std::pow(mu, -em);
        fm.profile.value = [a, em, base](double r) { return a * std::pow(base(r), em); };
        fm.profile.d1 = [a, em, base](double r) {
            return a * em * std::sin(r) * std::pow(base(r), em - 1.0);
        };
        fm.profile.d2 = [a, em, base](double r) {
            const double b = base(r);
            return a * em * (std::cos(r) * std::pow(b, em - 1.0) +
                             (em - 1.0) * std::sin(r) * std::sin(r) * std::pow(b, em - 2.0));
        };
        fm.u = sample_radial(m, fm.profile.value);
        fm.mu_t = std::pow(fm.profile.value(0.0), -2.0 / (n - 2.0));
        fm.lambda_t = 1.0 / sobolev_K2(n);
        fm.q_t = p;
        family[j] = std::move(fm);
    });
    return family;
}

/// Least-squares fit of the equation constant c in
/// Delta u + h0 u = c u^{2*-1} over collocation radii, with the residual
/// measured relative to the local term size.
struct EquationFit {
    double c = 0.0;
    double residual = 0.0;
};

inline EquationFit family_equation_fit(const FamilyMember& fm, double h0) {
    if (!fm.profile.has_derivatives())
        throw ConfigError("family_equation_fit: member lacks analytic derivatives");
    const int n = fm.m->dim;
    const double p = critical_exponent(n);
    std::vector<double> radii;
    for (int i = 1; i <= 200; ++i) radii.push_back(kPi * i / 201.0);
    double num = 0.0, den = 0.0;
    std::vector<double> lhs(radii.size()), rhs_base(radii.size());
    for (std::size_t i = 0; i < radii.size(); ++i) {
        const double r = radii[i];
        const double lap = radial_laplacian_value(*fm.m, r, fm.profile.d1(r), fm.profile.d2(r));
        lhs[i] = lap + h0 * fm.profile.value(r);
        rhs_base[i] = std::pow(fm.profile.value(r), p - 1.0);
        num += lhs[i] * rhs_base[i];
        den += rhs_base[i] * rhs_base[i];
    }
    EquationFit fit;
    fit.c = num / den;
    for (std::size_t i = 0; i < radii.size(); ++i) {
        const double res = std::abs(lhs[i] - fit.c * rhs_base[i]);
        fit.residual = std::max(fit.residual, res / (1.0 + std::abs(fit.c * rhs_base[i])));
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Concentration diagnostics
// ---------------------------------------------------------------------------

struct ConcentrationReport {
    std::vector<double> ts;
    std::vector<double> R_list, delta_list;
    std::vector<std::vector<double>> ball_mass;   // [member][R]
    std::vector<double> weak_sup;                 // sup d^{(n-2)/2} u
    std::vector<double> strong_sup;               // sup d^{n-2} mu^{-(n-2)/2} u
    std::vector<std::vector<double>> l2_ratio;    // [member][delta], n >= 4
    std::vector<double> second_ratio;             // d(x_t, x0)/mu_t
};

inline ConcentrationReport concentration_diagnostics(const std::vector<FamilyMember>& family,
                                                     const std::vector<double>& R_list,
                                                     const std::vector<double>& delta_list) {
    if (family.empty()) throw ConfigError("concentration_diagnostics: empty family");
    const ManifoldPtr& m = family.front().m;
    const int n = m->dim;
    ConcentrationReport rep;
    rep.R_list = R_list;
    rep.delta_list = delta_list;
    const std::size_t N = family.size();
    rep.ts.resize(N);
    rep.ball_mass.assign(N, std::vector<double>(R_list.size(), 0.0));
    rep.weak_sup.resize(N);
    rep.strong_sup.resize(N);
    rep.l2_ratio.assign(N, std::vector<double>(delta_list.size(), 0.0));
    rep.second_ratio.resize(N);

    parallel_for(N, [&](std::size_t j) {
        const FamilyMember& fm = family[j];
        rep.ts[j] = fm.t;
        for (std::size_t k = 0; k < R_list.size(); ++k) {
            const double rad = std::min(R_list[k] * fm.mu_t, m->injectivity_radius());
            rep.ball_mass[j][k] = member_ball_integral(fm, rad, critical_exponent(n));
        }
        const double half = (n - 2.0) / 2.0;
        rep.weak_sup[j] = detail::profile_sup(
            [&](double r) { return std::pow(r, half) * fm.profile.value(r); }, fm.mu_t, kPi);
        const double m_t = std::pow(fm.mu_t, -half);
        rep.strong_sup[j] = detail::profile_sup(
            [&](double r) { return std::pow(r, n - 2.0) * m_t * fm.profile.value(r); }, fm.mu_t,
            kPi);
        if (n >= 4) {
            // numerator as total minus the outside shell: the shell integrand
            // is smooth (the concentration core sits inside the cap), so the
            // two-center quadrature never has to resolve the spike
            const double total = member_ball_integral(fm, kPi, 2.0);
            for (std::size_t k = 0; k < delta_list.size(); ++k) {
                if (fm.dist_to_x0 >= delta_list[k]) {
                    rep.l2_ratio[j][k] = sphere_cap_integral(
                                             n,
                                             [&](double d) {
                                                 const double v = fm.profile.value(d);
                                                 return v * v;
                                             },
                                             fm.dist_to_x0, delta_list[k]) /
                                         total;
                    continue;
                }
                const double outside = sphere_shell_integral(
                    n,
                    [&](double d) {
                        const double v = fm.profile.value(d);
                        return v * v;
                    },
                    fm.dist_to_x0, delta_list[k], kPi);
                rep.l2_ratio[j][k] = (total - outside) / total;
            }
        }
        rep.second_ratio[j] = fm.dist_to_x0 / fm.mu_t;
    });
    return rep;
}

// ---------------------------------------------------------------------------
// Cutoffs with analytic derivatives (for Moser constants)
// ---------------------------------------------------------------------------

struct Cutoff {
    Field field;       // eta
    Field grad_norm;   // |grad eta|
    Field lap;         // Delta eta (geometers' sign)
};

/// Radial smoothstep cutoff about `center`: 1 inside lo, 0 beyond hi.
inline Cutoff make_cutoff(const ManifoldPtr& m, const Point& center, double lo, double hi) {
    if (hi >= m->injectivity_radius())
        throw ConfigError("make_cutoff: support exceeds the injectivity radius");
    Cutoff c;
    c.field = sample_radial(m, [&](double r) { return smoothstep_down(r, lo, hi); }, &center);
    c.grad_norm = sample_radial(
        m, [&](double r) { return std::abs(smoothstep_down_d1(r, lo, hi)); }, &center);
    c.lap = sample_radial(
        m,
        [&](double r) {
            const double d1 = smoothstep_down_d1(r, lo, hi);
            const double d2 = smoothstep_down_d2(r, lo, hi);
            if (r == 0.0) return -m->dim * d2;
            return radial_laplacian_value(*m, r, d1, d2);
        },
        &center);
    return c;
}

/// Complement cutoff: 0 inside lo, 1 beyond hi (support away from center).
inline Cutoff make_far_cutoff(const ManifoldPtr& m, const Point& center, double lo, double hi) {
    Cutoff c = make_cutoff(m, center, lo, hi);
    for (auto& x : c.field.v) x = 1.0 - x;
    for (auto& x : c.lap.v) x = -x;
    return c;
}

/// eta == 1 everywhere (no localization).
inline Cutoff make_full_cutoff(const ManifoldPtr& m) {
    return Cutoff{make_field(m, 1.0), make_field(m, 0.0), make_field(m, 0.0)};
}

/// Q(t, k, eta) = 4k/(k+1)^2 - lambda_t K^2 Sup|f| (int_{Supp eta} u^{2*})^{2/n}.
inline double moser_Q(const FamilyMember& fm, double k, const Cutoff& eta, double sup_abs_f,
                      double K2) {
    if (k < 1.0) throw ConfigError("moser_Q: k >= 1");
    const int n = fm.m->dim;
    const double p = critical_exponent(n);
    Field mask = make_field(fm.m);
    for (std::size_t i = 0; i < mask.size(); ++i)
        mask.v[i] = eta.field.v[i] > 0.0 ? std::pow(std::abs(fm.u.v[i]), p) : 0.0;
    const double local_mass = integrate(fm.m, mask);
    return 4.0 * k / ((k + 1.0) * (k + 1.0)) -
           fm.lambda_t * K2 * sup_abs_f * std::pow(local_mass, 2.0 / n);
}

/// Slack of the localized Moser bound
///   Q (int (eta u^{(k+1)/2})^{2*})^{2/2*}
///     <= (4k/(k+1)^2 B + C0 + C_eta) int_{Supp eta} u^{k+1},
/// with B a certified lower estimate of B_0, C0 = ||h||_inf and C_eta the
/// exact sup of the cutoff bracket.
inline double moser_inequality_check(const Triple& t, const MinimizeReport& rep, double k,
                                     const Cutoff& eta, double B) {
    if (k < 1.0) throw ConfigError("moser_inequality_check: k >= 1");
    const int n = t.dim();
    const double p = critical_exponent(n);
    const double face = 4.0 * k / ((k + 1.0) * (k + 1.0));

    FamilyMember fm;
    fm.m = t.m;
    fm.u = rep.u;
    fm.lambda_t = rep.lambda;
    fm.q_t = rep.q;
    double sup_abs_f = 0.0;
    for (std::size_t i = 0; i < t.f.size(); ++i)
        if (eta.field.v[i] > 0.0) sup_abs_f = std::max(sup_abs_f, std::abs(t.f.v[i]));
    const double Q = moser_Q(fm, k, eta, sup_abs_f, sobolev_K2(n));

    Field w = make_field(t.m);
    for (std::size_t i = 0; i < w.size(); ++i)
        w.v[i] = std::pow(eta.field.v[i] * std::pow(std::max(rep.u.v[i], 0.0), (k + 1.0) / 2.0),
                          p);
    const double lhs = Q * std::pow(integrate(t.m, w), 2.0 / p);

    double C_eta = 0.0;
    for (std::size_t i = 0; i < eta.field.size(); ++i) {
        const double bracket = 2.0 / (k + 1.0) * eta.grad_norm.v[i] * eta.grad_norm.v[i] +
                               2.0 * (k - 1.0) / ((k + 1.0) * (k + 1.0)) * eta.field.v[i] *
                                   eta.lap.v[i];
        C_eta = std::max(C_eta, std::abs(bracket));
    }
    const double C0 = field_max_abs(t.h);
    Field power = make_field(t.m);
    for (std::size_t i = 0; i < power.size(); ++i)
        power.v[i] =
            eta.field.v[i] > 0.0 ? std::pow(std::max(rep.u.v[i], 0.0), k + 1.0) : 0.0;
    const double rhs = (face * B + C0 + C_eta) * integrate(t.m, power);
    return rhs - lhs;
}

// ---------------------------------------------------------------------------
// Pohozaev residual on a flat radial chart
// ---------------------------------------------------------------------------

namespace detail {
inline std::vector<double> chart_derivative(const ChartField& cf) {
    if (!cf.du.empty()) return cf.du;
    const std::size_t N = cf.u.size();
    std::vector<double> du(N, 0.0);
    const double dr = cf.spacing();
    for (std::size_t i = 1; i + 1 < N; ++i) du[i] = (cf.u[i + 1] - cf.u[i - 1]) / (2.0 * dr);
    du[0] = 0.0;
    du[N - 1] = (cf.u[N - 1] - cf.u[N - 2]) / dr;
    return du;
}

inline std::vector<double> chart_laplacian(const ChartField& cf) {
    if (!cf.lap.empty()) return cf.lap;
    const std::size_t N = cf.u.size();
    std::vector<double> lap(N, 0.0);
    const double dr = cf.spacing();
    for (std::size_t i = 1; i + 1 < N; ++i) {
        const double upp = (cf.u[i + 1] - 2.0 * cf.u[i] + cf.u[i - 1]) / (dr * dr);
        const double up = (cf.u[i + 1] - cf.u[i - 1]) / (2.0 * dr);
        lap[i] = -upp - (cf.dim - 1.0) / cf.radii[i] * up;
    }
    lap[0] = -cf.dim * 2.0 * (cf.u[1] - cf.u[0]) / (dr * dr);
    if (N >= 4)
        lap[N - 1] = 3.0 * lap[N - 2] - 3.0 * lap[N - 3] + lap[N - 4];
    return lap;
}
}  // namespace detail

/// |LHS - RHS| of the flat-ball Pohozaev identity
///   int_B (x.grad u + (n-2)/2 u) Delta_e u dx
///     = delta int_{dB} [ |grad u|^2/2 - (du/dnu)^2 ] dsigma
///       - (n-2)/2 int_{dB} u du/dnu dsigma,
/// an integration-by-parts identity for any smooth radial chart field.
inline double pohozaev_residual(const ChartField& cf, double delta) {
    const int n = cf.dim;
    const double wn1 = sphere_volume(n - 1);
    const auto du = detail::chart_derivative(cf);
    const auto lap = detail::chart_laplacian(cf);

    std::vector<double> integrand;
    double u_b = 0.0, du_b = 0.0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < cf.radii.size(); ++i) {
        const double rho = cf.radii[i];
        if (rho > delta + 1e-14) break;
        integrand.push_back((rho * du[i] + (n - 2.0) / 2.0 * cf.u[i]) * lap[i] *
                            std::pow(rho, n - 1.0));
        u_b = cf.u[i];
        du_b = du[i];
        last = i;
    }
    if (integrand.size() < 8) throw ConfigError("pohozaev_residual: too few chart nodes");
    const double rho_b = cf.radii[last];
    const double lhs = wn1 * simpson_uniform(integrand, cf.spacing());
    const double rhs = rho_b * wn1 * std::pow(rho_b, n - 1.0) *
                           (0.5 * du_b * du_b - du_b * du_b) -
                       (n - 2.0) / 2.0 * wn1 * std::pow(rho_b, n - 1.0) * u_b * du_b;
    return std::abs(lhs - rhs);
}

/// Equation-form variant: Delta_e u is replaced through the chart's equation
/// data lambda f u^{q-1} - h u sampled along the ray.
inline double pohozaev_residual(const ChartField& cf, const std::function<double(double)>& h,
                                const std::function<double(double)>& f, double lambda,
                                double delta) {
    ChartField sub = cf;
    sub.lap.resize(cf.u.size());
    if (sub.q_exponent <= 2.0)
        throw ConfigError("pohozaev_residual: chart lacks the equation exponent");
    for (std::size_t i = 0; i < cf.u.size(); ++i) {
        const double r = cf.radii[i];
        sub.lap[i] =
            lambda * f(r) * std::pow(std::max(cf.u[i], 0.0), sub.q_exponent - 1.0) -
            h(r) * cf.u[i];
    }
    return pohozaev_residual(sub, delta);
}

// ---------------------------------------------------------------------------
// Torus helpers: interpolation, radial averaging, members from grid fields
// ---------------------------------------------------------------------------

namespace detail {

/// Separable periodic Catmull-Rom interpolation on the torus grid.
inline double torus_interpolate(const ManifoldModel& m, const std::vector<double>& v,
                                const std::vector<double>& x) {
    const int nd = m.dim;
    const auto& shape = m.shape();
    const double h = m.spacing();
    std::vector<std::size_t> stride(nd);
    std::size_t acc = 1;
    for (int a = nd - 1; a >= 0; --a) {
        stride[a] = acc;
        acc *= static_cast<std::size_t>(shape[a]);
    }
    std::vector<int> base(nd);
    std::vector<double> frac(nd);
    for (int a = 0; a < nd; ++a) {
        double xa = x[a] / h;
        xa -= std::floor(xa / shape[a]) * shape[a];
        base[a] = static_cast<int>(std::floor(xa));
        frac[a] = xa - base[a];
    }
    auto weights = [](double s, double w[4]) {
        w[0] = 0.5 * (-s + 2.0 * s * s - s * s * s);
        w[1] = 0.5 * (2.0 - 5.0 * s * s + 3.0 * s * s * s);
        w[2] = 0.5 * (s + 4.0 * s * s - 3.0 * s * s * s);
        w[3] = 0.5 * (-s * s + s * s * s);
    };
    double wts[4][4];  // up to dim 4
    for (int a = 0; a < nd; ++a) weights(frac[a], wts[a]);

    double out = 0.0;
    const int corners = 1 << (2 * nd);  // 4^nd offsets
    for (int c = 0; c < corners; ++c) {
        int rem = c;
        double w = 1.0;
        std::size_t flat = 0;
        for (int a = 0; a < nd; ++a) {
            const int o = rem & 3;
            rem >>= 2;
            w *= wts[a][o];
            const int idx = ((base[a] + o - 1) % shape[a] + shape[a]) % shape[a];
            flat += static_cast<std::size_t>(idx) * stride[a];
        }
        out += w * v[flat];
    }
    return out;
}

/// Deterministic direction set on S^{n-1}: axes, diagonals and a seeded fill.
inline std::vector<std::vector<double>> direction_set(int n, int count) {
    std::vector<std::vector<double>> dirs;
    for (int a = 0; a < n; ++a) {
        std::vector<double> e(n, 0.0);
        e[a] = 1.0;
        dirs.push_back(e);
        e[a] = -1.0;
        dirs.push_back(e);
    }
    std::vector<double> diag(n, 1.0 / std::sqrt(static_cast<double>(n)));
    dirs.push_back(diag);
    std::uint64_t state = 0x9e3779b97f4a7c15ull;
    auto next = [&state]() {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        return static_cast<double>(state % 100000) / 50000.0 - 1.0;
    };
    while (static_cast<int>(dirs.size()) < count) {
        std::vector<double> d(n);
        double norm = 0.0;
        for (int a = 0; a < n; ++a) {
            d[a] = next();
            norm += d[a] * d[a];
        }
        norm = std::sqrt(norm);
        if (norm < 1e-3) continue;
        for (int a = 0; a < n; ++a) d[a] /= norm;
        dirs.push_back(d);
    }
    return dirs;
}

}  // namespace detail

/// Radial average of a torus field about a center, as an analytic profile
/// backed by periodic cubic interpolation over a deterministic direction set.
inline RadialProfile extract_radial_profile(const ManifoldPtr& m, const Field& u,
                                            const Point& center, int directions = 16) {
    if (m->is_radial()) {
        // radial grids already hold the profile; interpolate linearly
        auto vals = u.v;
        const double dr = m->spacing();
        const std::size_t N = vals.size();
        RadialProfile p;
        p.value = [vals, dr, N](double r) {
            const double x = r / dr;
            const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(x), N - 2);
            const double s = x - i;
            return vals[i] * (1.0 - s) + vals[i + 1] * s;
        };
        return p;
    }
    auto dirs = detail::direction_set(m->dim, directions);
    auto c = center.x;
    auto values = u.v;
    ManifoldPtr mm = m;
    RadialProfile p;
    p.value = [mm, dirs, c, values](double r) {
        double acc = 0.0;
        std::vector<double> x(mm->dim);
        for (const auto& d : dirs) {
            for (int a = 0; a < mm->dim; ++a) x[a] = c[a] + r * d[a];
            acc += detail::torus_interpolate(*mm, values, x);
        }
        return acc / dirs.size();
    };
    return p;
}

/// Package a computed solution as a family member: argmax refined by a local
/// quadratic fit, profile extracted about the refined center.
inline FamilyMember member_from_solution(const Triple& t, const MinimizeReport& rep,
                                         double param_t) {
    FamilyMember fm;
    fm.m = t.m;
    fm.u = rep.u;
    fm.t = param_t;
    auto [pt, peak] = refine_argmax(t.m, rep.u);
    fm.x_t = pt;
    fm.dist_to_x0 = t.m->is_radial() ? pt.r() : 0.0;
    const int n = t.m->dim;
    fm.mu_t = std::pow(peak, -2.0 / (n - 2.0));
    fm.lambda_t = rep.lambda;
    fm.q_t = rep.q;
    fm.profile = extract_radial_profile(t.m, rep.u, pt);
    return fm;
}

/// Chart extraction for a computed torus solution: radial averages of the
/// field, its spectral gradient and spectral Laplacian along rays.
inline ChartField chart_from_torus_field(const ManifoldPtr& m, const Field& u,
                                         const Point& center, double radius, int resolution,
                                         double q_exponent = 0.0, int directions = 16) {
    if (m->is_radial()) throw ConfigError("chart_from_torus_field: torus only");
    if (radius >= m->injectivity_radius())
        throw ConfigError("chart_from_torus_field: radius exceeds the injectivity radius");
    Field lap = laplacian(m, u);
    auto uprof = extract_radial_profile(m, u, center, directions);
    auto lprof = extract_radial_profile(m, lap, center, directions);
    ChartField cf;
    cf.dim = m->dim;
    cf.radius = radius;
    cf.q_exponent = q_exponent;
    cf.radii.resize(resolution + 1);
    cf.u.resize(resolution + 1);
    cf.lap.resize(resolution + 1);
    cf.sqrt_det.assign(resolution + 1, 1.0);
    for (int i = 0; i <= resolution; ++i) {
        const double rho = radius * i / resolution;
        cf.radii[i] = rho;
        cf.u[i] = uprof.value(rho);
        cf.lap[i] = lprof.value(rho);
    }
    return cf;
}

}  // namespace critlab
