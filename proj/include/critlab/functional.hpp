#pragma once

// Variational core: the energy I and quotient J, subcritical minimizers,
// continuation of lambda to the critical exponent, classification against
// the Aubin ceiling, and Sobolev-deficit probing of the second constant.
//
// A Triple may carry a conformal factor U relating the current metric to the
// grid metric, g_cur = U^{4/(n-2)} g_grid. Integrals and energies are then
// taken through the transformation identities (dv_cur = U^{2*} dv_grid,
// |grad w|^2_cur dv_cur = U^2 |grad w|^2 dv_grid), and linear solves through
// the substitution (Delta_cur + h) v = rhs <=> (Delta + h_base)(U v) =
// U^{2*-1} rhs.

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "critlab/elliptic.hpp"
#include "critlab/manifold.hpp"

namespace critlab {

struct Ceiling {
    int n = 0;
    double K2 = 0.0;    // K(n,2)^2
    double value = 0.0; // 1 / (K^2 (sup f)^{(n-2)/n})
};

inline Ceiling make_ceiling(int n, double sup_f) {
    if (sup_f <= 0) throw ConfigError("ceiling: sup f must be positive");
    Ceiling c;
    c.n = n;
    c.K2 = sobolev_K2(n);
    c.value = 1.0 / (c.K2 * std::pow(sup_f, (n - 2.0) / n));
    return c;
}

struct Triple {
    ManifoldPtr m;
    Field h;       // current-frame h (equals h_base when unframed)
    Field f;
    Field h_base;  // grid-frame h backing the solver
    std::optional<Field> conf;  // conformal factor U; empty = grid metric
    double sup_f = 0.0;
    std::vector<Point> maxima;
    bool maxima_everywhere = false;

    int dim() const { return m->dim; }
    bool framed() const { return conf.has_value(); }
    bool f_changes_sign() const { return field_min(f) < 0.0; }
    Ceiling ceiling() const { return make_ceiling(m->dim, sup_f); }
};

namespace detail {
inline void detect_maxima(Triple& t) {
    t.sup_f = field_max(t.f);
    if (t.sup_f <= 0) throw ConfigError("triple: sup f must be positive");
    const double thr = (1.0 - 1e-6) * t.sup_f;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < t.f.size(); ++i)
        if (t.f.v[i] >= thr) idx.push_back(i);
    t.maxima_everywhere = idx.size() * 2 > t.f.size();
    const std::size_t cap = 32;
    const std::size_t stride = idx.size() > cap ? idx.size() / cap : 1;
    for (std::size_t k = 0; k < idx.size(); k += stride) {
        if (t.m->is_radial()) {
            t.maxima.push_back(Point::radial(t.m->r_at(idx[k])));
        } else {
            std::vector<double> c;
            t.m->coords_of(idx[k], c);
            t.maxima.push_back(Point{c});
        }
        if (t.maxima.size() >= cap) break;
    }
}
}  // namespace detail

inline Triple make_triple(const ManifoldPtr& m, Field h, Field f) {
    if (h.m.get() != m.get() || f.m.get() != m.get())
        throw DimensionMismatch("make_triple: fields not on this manifold");
    Triple t;
    t.m = m;
    t.h = h;
    t.h_base = std::move(h);
    t.f = std::move(f);
    detail::detect_maxima(t);
    return t;
}

// ---------------------------------------------------------------------------
// Frame-aware integrals and energies
// ---------------------------------------------------------------------------

/// Integral against the triple's metric measure.
inline double integrate_g(const Triple& t, const Field& phi) {
    if (!t.framed()) return integrate(t.m, phi);
    const Field& U = *t.conf;
    const double p = critical_exponent(t.dim());
    Field w = phi;
    for (std::size_t i = 0; i < w.size(); ++i) w.v[i] *= std::pow(U.v[i], p);
    return integrate(t.m, w);
}

namespace detail {
/// Weighted Dirichlet pairing: int w2 * <grad u, grad v> dv_grid.
inline double grad_pairing_weighted(const ManifoldPtr& m, const Field& u, const Field& v,
                                    const Field& w2) {
    if (m->is_radial()) {
        const std::size_t n = m->node_count();
        const double dr = m->spacing();
        double s = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const double rho = m->radial_weight(m->r_at(i) + 0.5 * dr);
            const double ww = 0.5 * (w2.v[i] + w2.v[i + 1]);
            s += ww * rho * (u.v[i + 1] - u.v[i]) * (v.v[i + 1] - v.v[i]);
        }
        return sphere_volume(m->dim - 1) * s / dr;
    }
    // torus: 0.5 (Delta(uv) - u Delta v - v Delta u) = <grad u, grad v>
    Field uv = u * v;
    Field a = laplacian(m, uv);
    Field bu = laplacian(m, u);
    Field bv = laplacian(m, v);
    Field g = make_field(m);
    for (std::size_t i = 0; i < g.size(); ++i)
        g.v[i] = -0.5 * (a.v[i] - u.v[i] * bv.v[i] - v.v[i] * bu.v[i]);
    return integrate(m, g * w2);
}
}  // namespace detail

/// The energy I_{h,g}(w) = int |grad w|^2 + int h w^2 in the triple's frame.
inline double energy_I(const Triple& t, const Field& w) {
    if (!t.framed()) {
        Field hw2 = t.h * w * w;
        return dirichlet_energy(t.m, w) + integrate(t.m, hw2);
    }
    const Field& U = *t.conf;
    Field U2 = U * U;
    const double p = critical_exponent(t.dim());
    Field hw = make_field(t.m);
    for (std::size_t i = 0; i < hw.size(); ++i)
        hw.v[i] = t.h.v[i] * std::pow(U.v[i], p) * w.v[i] * w.v[i];
    return detail::grad_pairing_weighted(t.m, w, w, U2) + integrate(t.m, hw);
}

/// Constraint integral int f |w|^q dv_g.
inline double constraint_integral(const Triple& t, const Field& w, double q) {
    Field g = make_field(t.m);
    for (std::size_t i = 0; i < g.size(); ++i)
        g.v[i] = t.f.v[i] * std::pow(std::abs(w.v[i]), q);
    return integrate_g(t, g);
}

/// J_{h,f,g}(w) at exponent q: I(w) / (int f|w|^q)^{2/q}.
inline double quotient_J(const Triple& t, const Field& w, double q) {
    const double c = constraint_integral(t, w, q);
    if (c <= 0.0) throw DenominatorNonpositive();
    return energy_I(t, w) / std::pow(c, 2.0 / q);
}

// ---------------------------------------------------------------------------
// Subcritical minimizers
// ---------------------------------------------------------------------------

struct MinimizeReport {
    Field u;
    double q = 0.0;
    double lambda = 0.0;
    double residual = 0.0;
    int iterations = 0;
    std::vector<std::pair<int, double>> trace;  // (iteration, lambda)
};

struct ContinuationSchedule {
    int steps = 9;      // j = 0..steps-1
    double q0 = 2.2;    // q_j = 2* - (2* - q0) 2^{-j}
};

struct SolveOptions {
    // Euler residual target. The floor is set by the gap between the Simpson
    // energy quadrature behind lambda = I(u) and the discrete operator; at
    // desk grids that sits around 1e-7 for concentrated minimizers.
    double tol = 1e-6;
    int max_iterations = 4000;
    double damping = 0.5;
    double positivity_floor = 1e-14;
    double clip_mass_budget = 1e-3;
    double linear_tol = 1e-9;
    const Field* warm_start = nullptr;
};

namespace detail {

struct FrameSolver {
    const Triple& t;
    EllipticOperator op;
    double p;  // 2*

    explicit FrameSolver(const Triple& tr)
        : t(tr), op(tr.m, tr.h_base), p(critical_exponent(tr.dim())) {}

    Field solve(const Field& rhs, double tol) const {
        if (!t.framed()) return op.solve(rhs, tol);
        const Field& U = *t.conf;
        Field rb = rhs;
        for (std::size_t i = 0; i < rb.size(); ++i) rb.v[i] *= std::pow(U.v[i], p - 1.0);
        Field w = op.solve(rb, tol);
        for (std::size_t i = 0; i < w.size(); ++i) w.v[i] /= U.v[i];
        return w;
    }

    Field apply(const Field& v) const {
        if (!t.framed()) return op.apply(v);
        const Field& U = *t.conf;
        Field uv = v;
        for (std::size_t i = 0; i < uv.size(); ++i) uv.v[i] *= U.v[i];
        Field w = op.apply(uv);
        for (std::size_t i = 0; i < w.size(); ++i) w.v[i] /= std::pow(U.v[i], p - 1.0);
        return w;
    }
};

inline double frame_norm_L2(const Triple& t, const Field& w) {
    Field w2 = w * w;
    return std::sqrt(std::max(0.0, integrate_g(t, w2)));
}

inline double euler_residual(const Triple& t, const FrameSolver& fs, const Field& u, double q,
                             double lambda) {
    Field lhs = fs.apply(u);
    Field rhs = make_field(t.m);
    for (std::size_t i = 0; i < rhs.size(); ++i)
        rhs.v[i] = lambda * t.f.v[i] * std::pow(std::max(u.v[i], 0.0), q - 1.0);
    Field diff = lhs - rhs;
    const double dn = frame_norm_L2(t, rhs);
    return dn == 0.0 ? frame_norm_L2(t, diff) : frame_norm_L2(t, diff) / dn;
}

/// Clip at the positivity floor; returns the clipped fraction of |u| mass.
inline double clip_positive(const Triple& t, Field& u, double floor_val) {
    Field absu = field_map(u, [](double x) { return std::abs(x); });
    const double total = integrate_g(t, absu);
    Field lost = make_field(t.m, 0.0);
    bool any = false;
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (u.v[i] < floor_val) {
            lost.v[i] = std::abs(u.v[i] - floor_val);
            u.v[i] = floor_val;
            any = true;
        }
    }
    if (!any || total <= 0.0) return 0.0;
    return integrate_g(t, lost) / total;
}

inline Field initial_iterate(const Triple& t, double q) {
    // constants when admissible, otherwise a bump at a maximum of f
    Field u = make_field(t.m, 1.0);
    if (constraint_integral(t, u, q) > 0.0) return u;
    const Point p0 = t.maxima.empty() ? Point::radial(0.0) : t.maxima.front();
    const double w = 0.2 * t.m->injectivity_radius();
    if (t.m->is_radial()) {
        const double c = p0.r();
        return sample_radial(t.m, [&](double r) {
            const double d = std::abs(r - c);
            return smoothstep_down(d, 0.5 * w, w) + 1e-6;
        });
    }
    return sample_radial(t.m, [&](double d) { return smoothstep_down(d, 0.5 * w, w) + 1e-6; },
                         &p0);
}

MinimizeReport solve_subcritical_signed(const Triple& t, double q, const SolveOptions& opt);

}  // namespace detail

/// Positive minimizer of I over {int f|u|^q = 1} via normalized fixed-point
/// iteration (projected preconditioned descent when f changes sign).
inline MinimizeReport solve_subcritical(const Triple& t, double q, const SolveOptions& opt = {}) {
    const double p = critical_exponent(t.dim());
    if (!(q > 2.0 && q < p))
        throw ConfigError("solve_subcritical: q must lie in (2, 2*)");
    if (t.f_changes_sign()) return detail::solve_subcritical_signed(t, q, opt);

    detail::FrameSolver fs(t);
    if (field_min(t.h_base) <= 1e-6 && fs.op.margin() <= 1e-6) throw NotCoercive(fs.op.margin());

    Field u = opt.warm_start ? *opt.warm_start : detail::initial_iterate(t, q);
    {
        const double c = constraint_integral(t, u, q);
        if (c <= 0.0) throw DenominatorNonpositive();
        u = std::pow(c, -1.0 / q) * u;
    }
    MinimizeReport rep;
    rep.q = q;
    double lambda = energy_I(t, u);

    // normalized fixed-point map; the damped step is safeguarded by an
    // Anderson-style secant update that targets the slow dilation mode near
    // the critical exponent
    Field prev_u, prev_G;
    bool have_hist = false;
    for (int it = 1; it <= opt.max_iterations; ++it) {
        Field rhs = make_field(t.m);
        for (std::size_t i = 0; i < rhs.size(); ++i)
            rhs.v[i] = std::max(t.f.v[i], 0.0) * std::pow(std::max(u.v[i], 0.0), q - 1.0);
        Field v = fs.solve(rhs, opt.linear_tol);
        const double cv = constraint_integral(t, v, q);
        if (cv <= 0.0) throw DenominatorNonpositive();
        Field G = std::pow(cv, -1.0 / q) * v;

        Field plain = u;
        for (std::size_t i = 0; i < plain.size(); ++i)
            plain.v[i] += opt.damping * (G.v[i] - plain.v[i]);
        const double lost = detail::clip_positive(t, plain, opt.positivity_floor);
        if (lost > opt.clip_mass_budget) throw NonpositiveIterate();
        {
            const double cu = constraint_integral(t, plain, q);
            if (cu <= 0.0) throw DenominatorNonpositive();
            plain = std::pow(cu, -1.0 / q) * plain;
        }
        double res_plain = detail::euler_residual(t, fs, plain, q, energy_I(t, plain));

        Field next = plain;
        double res_next = res_plain;
        // secant extrapolation, attempted only deep in the linear regime and
        // kept only when it clearly beats the damped step (the slow dilation
        // mode near 2* makes theta large and negative there)
        if (have_hist && res_plain < 3e-3) {
            Field r = G - u;
            Field dr = r - (prev_G - prev_u);
            Field dr2 = dr * dr;
            const double denom = integrate_g(t, dr2);
            if (denom > 0.0) {
                Field rdr = r * dr;
                const double theta = integrate_g(t, rdr) / denom;
                if (std::abs(theta) < 200.0) {
                    Field accel = G;
                    for (std::size_t i = 0; i < accel.size(); ++i)
                        accel.v[i] -= theta * (G.v[i] - prev_G.v[i]);
                    if (detail::clip_positive(t, accel, opt.positivity_floor) <=
                        opt.clip_mass_budget) {
                        const double ca = constraint_integral(t, accel, q);
                        if (ca > 0.0) {
                            accel = std::pow(ca, -1.0 / q) * accel;
                            const double res_a =
                                detail::euler_residual(t, fs, accel, q, energy_I(t, accel));
                            if (res_a < 0.5 * res_plain) {
                                next = accel;
                                res_next = res_a;
                            }
                        }
                    }
                }
            }
        }
        prev_u = u;
        prev_G = G;
        have_hist = true;
        u = next;
        lambda = energy_I(t, u);
        rep.trace.emplace_back(it, lambda);
        rep.iterations = it;
        if (res_next <= opt.tol) {
            rep.residual = res_next;
            rep.u = u;
            rep.lambda = lambda;
            return rep;
        }
    }
    throw NoConvergence("solve_subcritical", opt.tol, opt.max_iterations);
}

namespace detail {

/// Projected, preconditioned gradient descent for sign-changing f. The step
/// is 1/L with L estimated by power iteration on the preconditioned Hessian
/// at the current iterate.
inline MinimizeReport solve_subcritical_signed(const Triple& t, double q,
                                               const SolveOptions& opt) {
    FrameSolver fs(t);
    if (fs.op.margin() <= 1e-6) throw NotCoercive(fs.op.margin());

    Field u = opt.warm_start ? *opt.warm_start : initial_iterate(t, q);
    double c = constraint_integral(t, u, q);
    if (c <= 0.0) throw DenominatorNonpositive();
    u = std::pow(c, -1.0 / q) * u;

    const double pcshift = std::max(1e-3, field_max_abs(t.h_base));
    EllipticOperator precond(t.m, make_field(t.m, pcshift));

    MinimizeReport rep;
    rep.q = q;
    double lambda = energy_I(t, u);
    double L = 1.0;
    for (int it = 1; it <= opt.max_iterations; ++it) {
        // L^2 gradient of I against the least-squares constraint multiplier
        Field g = fs.apply(u);
        Field cdir = make_field(t.m);
        for (std::size_t i = 0; i < cdir.size(); ++i)
            cdir.v[i] = t.f.v[i] * std::pow(std::max(u.v[i], 0.0), q - 1.0);
        const double mu =
            integrate_g(t, g * cdir) / std::max(1e-300, integrate_g(t, cdir * cdir));
        for (std::size_t i = 0; i < g.size(); ++i) g.v[i] -= mu * cdir.v[i];
        Field d = precond.solve(g, opt.linear_tol);
        const double cu = integrate_g(t, u * cdir);  // = 1 when normalized
        const double proj = integrate_g(t, d * cdir) / std::max(1e-300, cu);
        for (std::size_t i = 0; i < d.size(); ++i) d.v[i] -= proj * u.v[i];

        if (it % 25 == 1) {
            // power iteration on v -> P^{-1}(Delta + h - mu (q-1) f u^{q-2}) v
            Field v = d;
            double nv = frame_norm_L2(t, v);
            if (nv == 0.0) {
                v = make_field(t.m, 1.0);
                nv = frame_norm_L2(t, v);
            }
            for (auto& x : v.v) x /= nv;
            double est = 1.0;
            for (int k = 0; k < 12; ++k) {
                Field Hv = fs.apply(v);
                for (std::size_t i = 0; i < Hv.size(); ++i)
                    Hv.v[i] -= mu * (q - 1.0) * t.f.v[i] *
                               std::pow(std::max(u.v[i], 1e-30), q - 2.0) * v.v[i];
                Field Pv = precond.solve(Hv, opt.linear_tol);
                const double nn = frame_norm_L2(t, Pv);
                if (nn == 0.0) break;
                est = nn;
                for (std::size_t i = 0; i < v.size(); ++i) v.v[i] = Pv.v[i] / nn;
            }
            L = std::max({est, L * 0.25, 1e-6});
        }

        // step 1/L, capped so a single step cannot swing the iterate far
        double step = 1.0 / L;
        const double dn = frame_norm_L2(t, d), un = frame_norm_L2(t, u);
        if (dn > 0.0) step = std::min(step, 0.2 * un / dn);

        // backtracking on the projected energy
        Field best = u;
        double best_lambda = lambda;
        bool accepted = false;
        bool clip_blocked = false;
        for (int bt = 0; bt < 20; ++bt) {
            Field cand = u;
            for (std::size_t i = 0; i < cand.size(); ++i) cand.v[i] -= step * d.v[i];
            const double lost = clip_positive(t, cand, opt.positivity_floor);
            if (lost > opt.clip_mass_budget) {
                clip_blocked = true;
            } else {
                const double cc = constraint_integral(t, cand, q);
                if (cc > 0.0) {
                    cand = std::pow(cc, -1.0 / q) * cand;
                    const double lc = energy_I(t, cand);
                    if (lc <= lambda + 1e-14 * (1.0 + std::abs(lambda))) {
                        best = cand;
                        best_lambda = lc;
                        accepted = true;
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (clip_blocked) throw NonpositiveIterate();
            throw NoConvergence("solve_subcritical (sign-changing f): descent stalled", opt.tol,
                                it);
        }
        u = best;
        lambda = best_lambda;
        rep.trace.emplace_back(it, lambda);
        rep.iterations = it;
        const double res = euler_residual(t, fs, u, q, lambda);
        if (res <= opt.tol) {
            rep.residual = res;
            rep.u = u;
            rep.lambda = lambda;
            return rep;
        }
    }
    throw NoConvergence("solve_subcritical (sign-changing f)", opt.tol, opt.max_iterations);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Continuation to the critical exponent and classification
// ---------------------------------------------------------------------------

struct LambdaReport {
    double lambda = 0.0;       // reported value, never above the ceiling
    double lambda_raw = 0.0;   // Richardson-extrapolated estimate
    bool clamped = false;
    Ceiling ceiling;
    std::vector<std::pair<double, double>> trace;  // (q_j, lambda_j)
    MinimizeReport last;
};

struct ClassifyOptions {
    SolveOptions solve;
    ContinuationSchedule schedule;
    double band_frac = 0.02;         // classify band, fraction of the ceiling
    double tol_ceiling_frac = 0.04;  // beyond this overshoot: CeilingViolation
    int richardson_order = 3;
};

inline LambdaReport lambda_critical(const Triple& t, const ClassifyOptions& opt = {}) {
    const double p = critical_exponent(t.dim());
    LambdaReport rep;
    rep.ceiling = t.ceiling();

    SolveOptions sopt = opt.solve;
    MinimizeReport cur;
    std::vector<double> lam;
    Field warm;
    for (int j = 0; j < opt.schedule.steps; ++j) {
        const double q = p - (p - opt.schedule.q0) * std::pow(2.0, -j);
        sopt.warm_start = j == 0 ? opt.solve.warm_start : &warm;
        cur = solve_subcritical(t, q, sopt);
        warm = cur.u;
        lam.push_back(cur.lambda);
        rep.trace.emplace_back(q, cur.lambda);
    }
    rep.last = cur;

    // Richardson in eps = 2* - q (eps halves along the schedule)
    std::vector<double> row = lam;
    const int maxo = std::min<int>(opt.richardson_order, static_cast<int>(lam.size()) - 1);
    for (int k = 1; k <= maxo; ++k) {
        std::vector<double> next(row.size() - 1);
        const double f = std::pow(2.0, k);
        for (std::size_t i = 0; i + 1 < row.size(); ++i)
            next[i] = (f * row[i + 1] - row[i]) / (f - 1.0);
        row = next;
    }
    rep.lambda_raw = row.back();

    const double ceil = rep.ceiling.value;
    if (rep.lambda_raw > ceil * (1.0 + opt.tol_ceiling_frac))
        throw CeilingViolation(rep.lambda_raw, ceil);
    rep.clamped = rep.lambda_raw > ceil;
    rep.lambda = std::min(rep.lambda_raw, ceil);
    return rep;
}

enum class ClassKind { Subcritical, WeaklyCritical, Indeterminate };

struct Classification {
    ClassKind kind = ClassKind::Indeterminate;
    double gap = 0.0;   // ceiling - lambda_raw
    double band = 0.0;
    LambdaReport detail;
};

inline const char* to_string(ClassKind k) {
    switch (k) {
        case ClassKind::Subcritical: return "Subcritical";
        case ClassKind::WeaklyCritical: return "WeaklyCritical";
        case ClassKind::Indeterminate: return "Indeterminate";
    }
    return "?";
}

inline Classification classify(const Triple& t, const ClassifyOptions& opt = {}) {
    Classification c;
    c.detail = lambda_critical(t, opt);
    c.band = opt.band_frac * c.detail.ceiling.value;
    c.gap = c.detail.ceiling.value - c.detail.lambda_raw;
    if (c.gap > c.band)
        c.kind = ClassKind::Subcritical;
    else if (c.gap >= -c.band)
        c.kind = ClassKind::WeaklyCritical;
    else
        c.kind = ClassKind::Indeterminate;
    return c;
}

// ---------------------------------------------------------------------------
// Sobolev deficit and the second-constant lower estimate
// ---------------------------------------------------------------------------

/// A int|grad w|^2 + B int w^2 - (int |w|^{2*})^{2/2*} on the grid metric.
inline double sobolev_deficit(const ManifoldPtr& m, const Field& w, double A, double B) {
    const double p = critical_exponent(m->dim);
    Field wp = field_map(w, [p](double x) { return std::pow(std::abs(x), p); });
    Field w2 = w * w;
    return A * dirichlet_energy(m, w) + B * integrate(m, w2) -
           std::pow(integrate(m, wp), 2.0 / p);
}

/// Certified lower bound on B_0(g): the closed-form floor combined with the
/// best B witnessed by the family (each member forces B_0 >= B(w)).
inline double b0_lower_estimate(const ManifoldPtr& m, const std::vector<Field>& family) {
    if (family.empty()) throw ConfigError("b0_lower_estimate: family must be nonempty");
    const int n = m->dim;
    const double K2 = sobolev_K2(n);
    const double vol = volume(m);
    double best = std::max((n - 2.0) / (4.0 * (n - 1.0)) * K2 * m->scalar_curvature(),
                           std::pow(vol, -2.0 / n));
    const double p = critical_exponent(n);
    for (const Field& w : family) {
        Field wp = field_map(w, [p](double x) { return std::pow(std::abs(x), p); });
        Field w2 = w * w;
        const double m2 = integrate(m, w2);
        if (m2 <= 0.0) continue;
        const double Bw =
            (std::pow(integrate(m, wp), 2.0 / p) - K2 * dirichlet_energy(m, w)) / m2;
        best = std::max(best, Bw);
    }
    return best;
}

}  // namespace critlab
