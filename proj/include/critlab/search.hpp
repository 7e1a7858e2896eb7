#pragma once

// Constructive searches for critical functions/triples: monotone h- and
// f-paths with bisection for the classification flip, the conformal
// transform F_{h'}, the regularizing family P_t and the Laplacian blow-up
// probe of the dimension >= 5 criterion.

#include <cmath>
#include <functional>
#include <vector>

#include "critlab/functional.hpp"
#include "critlab/testfn.hpp"

namespace critlab {

// ---------------------------------------------------------------------------
// Conformal transform
// ---------------------------------------------------------------------------

/// Transform the triple by a positive conformal factor u: the new metric is
/// u^{4/(n-2)} g_cur, h maps like the scalar curvature,
///   h' = (Delta_g U + h_base U) / U^{2*-1}
/// with U the accumulated factor against the grid metric. f is untouched.
inline Triple conformal_transform(const Triple& t, const Field& u) {
    if (u.m.get() != t.m.get())
        throw DimensionMismatch("conformal_transform: factor not on this manifold");
    if (field_min(u) <= 0.0)
        throw ConfigError("conformal_transform: factor must be strictly positive");
    const double p = critical_exponent(t.dim());
    Field U = t.framed() ? (*t.conf) * u : u;

    Triple out = t;
    bool identity = true;
    for (double x : U.v)
        if (std::abs(x - 1.0) > 1e-13) {
            identity = false;
            break;
        }
    if (identity) {
        out.h = t.h_base;
        out.conf.reset();
        return out;
    }
    Field lapU = laplacian(t.m, U);
    Field hp = make_field(t.m);
    for (std::size_t i = 0; i < hp.size(); ++i)
        hp.v[i] = (lapU.v[i] + t.h_base.v[i] * U.v[i]) / std::pow(U.v[i], p - 1.0);
    out.h = hp;
    out.conf = U;
    return out;
}

// ---------------------------------------------------------------------------
// The one-variable bound beta_{i,s}(x) = x^{4s/(n-2)} - s x^{q-2} >= -s
// ---------------------------------------------------------------------------

struct BoundReport {
    double min_sampled = 0.0;
    double stationary_x = 0.0;
    double stationary_value = 0.0;
    bool holds = false;
};

inline BoundReport beta_is_lower_bound(int n, double s, double q,
                                       const std::vector<double>& samples) {
    if (n < 3) throw ConfigError("beta_is_lower_bound: n >= 3");
    if (s < 1.0) throw ConfigError("beta_is_lower_bound: s >= 1");
    const double p = critical_exponent(n);
    if (!(q > 2.0 && q <= p)) throw ConfigError("beta_is_lower_bound: q in (2, 2*]");
    const double a = 4.0 * s / (n - 2.0);
    auto beta = [&](double x) { return std::pow(x, a) - s * std::pow(x, q - 2.0); };
    BoundReport rep;
    rep.min_sampled = 0.0;
    for (double x : samples) {
        if (x < 0.0) throw ConfigError("beta_is_lower_bound: samples must be >= 0");
        rep.min_sampled = std::min(rep.min_sampled, beta(x));
    }
    // stationary point of x^a - s x^{q-2}: a x*^{a-1} = s (q-2) x*^{q-3}
    if (std::abs(a - (q - 2.0)) > 1e-14) {
        rep.stationary_x = std::pow(s * (q - 2.0) / a, 1.0 / (a - q + 2.0));
        rep.stationary_value = beta(rep.stationary_x);
    } else {
        rep.stationary_x = 1.0;
        rep.stationary_value = beta(1.0);
    }
    rep.holds = rep.min_sampled >= -s - 1e-12 && rep.stationary_value >= -s - 1e-12;
    return rep;
}

// ---------------------------------------------------------------------------
// Paths and bisection
// ---------------------------------------------------------------------------

enum class PathKind { HMinusTEta, HTestFn, FLinearToOne, FLinearToSup };

struct PathSpec {
    PathKind kind = PathKind::HMinusTEta;
    Triple base;
    Field direction;  // eta, psi_k^{4/(n-2)}, or the target f
    std::pair<double, double> t_range{0.0, 1.0};
    double alpha = 0.0;  // HTestFn shift above the B0 proxy
};

/// The triple probed at path parameter t.
inline Triple path_triple(const PathSpec& path, double t) {
    switch (path.kind) {
        case PathKind::HMinusTEta:
        case PathKind::HTestFn: {
            if (field_min(path.direction) < -1e-12)
                throw ConfigError("path_triple: H-path direction must be nonnegative");
            Field ht = path.base.h - t * path.direction;
            return make_triple(path.base.m, ht, path.base.f);
        }
        case PathKind::FLinearToOne: {
            Field ft = make_field(path.base.m, 1.0 - t) + t * path.direction;
            return make_triple(path.base.m, path.base.h, ft);
        }
        case PathKind::FLinearToSup: {
            const double sup = field_max(path.direction);
            Field ft = make_field(path.base.m, (1.0 - t) * sup) + t * path.direction;
            return make_triple(path.base.m, path.base.h, ft);
        }
    }
    throw ConfigError("path_triple: unknown kind");
}

enum class BisectStatus { Converged, BandLimited };

struct BisectReport {
    double t0 = 0.0;
    BisectStatus status = BisectStatus::Converged;
    MinimizeReport witness;  // subcritical-side minimizer at the final bracket
    std::vector<std::pair<double, double>> lambda_trace;  // (t, lambda_raw)
    std::vector<std::pair<double, ClassKind>> outcomes;
    bool h_path_monotone = true;
    double bracket_lo = 0.0, bracket_hi = 0.0;
};

struct BisectOptions {
    ClassifyOptions classify;
    double band_resolution_frac = 1e-6;  // lambda resolution relative to the ceiling
    int max_steps = 60;
};

/// Bracket the classification flip along the path to width tol_t. When the
/// lambda variation across the final bracket is below the solver resolution,
/// the flip location is not trustworthy and the result is BandLimited.
inline BisectReport bisect_t0(const PathSpec& path, double tol_t,
                              const BisectOptions& opt = {}) {
    const bool h_path =
        path.kind == PathKind::HMinusTEta || path.kind == PathKind::HTestFn;

    struct Probe {
        Classification cls;
        bool subcritical;
    };
    BisectReport rep;
    auto probe = [&](double t) {
        Triple tr = path_triple(path, t);
        if (path.kind == PathKind::HTestFn) {
            const double K2 = sobolev_K2(tr.dim());
            if (t - path.alpha >= 1.0 / K2)
                throw ConfigError("bisect_t0: HTestFn outside the coercivity window");
            EllipticOperator op(tr.m, tr.h_base);
            if (op.margin() <= 1e-6) throw NotCoercive(op.margin());
        }
        Probe p;
        try {
            p.cls = classify(tr, opt.classify);
            p.subcritical = p.cls.kind == ClassKind::Subcritical;
        } catch (const CeilingViolation& cv) {
            // numerically at/above the ceiling: the non-subcritical side
            p.cls.kind = ClassKind::Indeterminate;
            p.cls.detail.lambda_raw = cv.lambda;
            p.subcritical = false;
        }
        rep.lambda_trace.emplace_back(t, p.cls.detail.lambda_raw);
        rep.outcomes.emplace_back(t, p.cls.kind);
        return p;
    };

    double lo = path.t_range.first, hi = path.t_range.second;
    Probe plo = probe(lo), phi = probe(hi);
    if (plo.subcritical == phi.subcritical)
        throw NoSignChange(to_string(plo.cls.kind), to_string(phi.cls.kind));

    Probe pl = plo, ph = phi;
    int steps = 0;
    while (hi - lo > tol_t && steps++ < opt.max_steps) {
        const double mid = 0.5 * (lo + hi);
        Probe pm = probe(mid);
        if (pm.subcritical == pl.subcritical) {
            lo = mid;
            pl = pm;
        } else {
            hi = mid;
            ph = pm;
        }
    }
    rep.bracket_lo = lo;
    rep.bracket_hi = hi;
    rep.t0 = 0.5 * (lo + hi);
    const double band_res =
        opt.band_resolution_frac * pl.cls.detail.ceiling.value;
    const double dl = std::abs(pl.cls.detail.lambda_raw - ph.cls.detail.lambda_raw);
    rep.status = dl <= band_res ? BisectStatus::BandLimited : BisectStatus::Converged;
    rep.witness = pl.subcritical ? pl.cls.detail.last : ph.cls.detail.last;

    if (h_path) {
        // lambda must be nonincreasing in t along h - t eta
        std::vector<std::pair<double, double>> tr = rep.lambda_trace;
        std::sort(tr.begin(), tr.end());
        for (std::size_t i = 1; i < tr.size(); ++i)
            if (tr[i].second > tr[i - 1].second + band_res) rep.h_path_monotone = false;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Regularizing family and the Laplacian blow-up probe
// ---------------------------------------------------------------------------

/// f_t = P_t(exp_{x0}^{-1} .) with P_t(x) = phi(|x|/t), phi(z) = (1-z^2)^3
/// on [0,1]: value 1 at the center, support B(x0, t), |Delta P_t(0)| ~ c2/t^2.
inline Field regularizing_family(double t, const Point& x0, const ManifoldPtr& m) {
    if (t >= m->injectivity_radius())
        throw ConfigError("regularizing_family: t exceeds the injectivity radius");
    if (m->is_radial() && x0.r() != 0.0)
        throw ConfigError("regularizing_family: radial models center at the pole");
    auto phi = [t](double r) {
        const double z = r / t;
        if (z >= 1.0) return 0.0;
        const double w = 1.0 - z * z;
        return w * w * w;
    };
    return sample_radial(m, phi, &x0);
}

struct ProbeEntry {
    double t = 0.0;
    ClassKind classification = ClassKind::Indeterminate;
    double lambda = 0.0;
    double gap = 0.0;        // criterion gap at x0
    double rhs = 0.0;        // criterion right side at x0
    double lapf_over_f = 0.0;
};

struct ProbeReport {
    std::vector<ProbeEntry> entries;
    double h_at_x0 = 0.0;
    double rhs_flat = 0.0;            // right side with Delta f = 0
    double smallest_t_below = -1.0;   // smallest t with rhs < h(x0)
};

/// For each t build f_t, classify (h, f_t, g) and evaluate the criterion
/// comparison h(x0) <= (n-2)/(4(n-1)) S_g - (n-2)(n-4)/(8(n-1)) Df/f at x0.
inline ProbeReport laplacian_blowup_probe(const Triple& base, const std::vector<double>& t_list,
                                          const Point& x0, const ClassifyOptions& opt = {}) {
    const int n = base.dim();
    if (n < 5) throw ConfigError("laplacian_blowup_probe: dim >= 5");
    const std::size_t node = detail::nearest_node(base.m, x0);
    if (base.h.v[node] <= 0.0) throw ConfigError("laplacian_blowup_probe: h(x0) must be > 0");

    ProbeReport rep;
    rep.h_at_x0 = base.h.v[node];
    const double Sg = base.m->scalar_curvature();
    rep.rhs_flat = (n - 2.0) / (4.0 * (n - 1.0)) * Sg;
    rep.entries.resize(t_list.size());
    parallel_for(t_list.size(), [&](std::size_t j) {
        const double t = t_list[j];
        Field ft = regularizing_family(t, x0, base.m);
        Triple tr = make_triple(base.m, base.h, ft);
        ProbeEntry e;
        e.t = t;
        Classification cls = classify(tr, opt);
        e.classification = cls.kind;
        e.lambda = cls.detail.lambda;
        CriterionReport cg = criterion_gap(tr, x0);
        e.gap = cg.gap;
        e.lapf_over_f = cg.lapf_over_f;
        e.rhs = rep.rhs_flat -
                (n - 2.0) * (n - 4.0) / (8.0 * (n - 1.0)) * cg.lapf_over_f;
        rep.entries[j] = e;
    });
    for (const auto& e : rep.entries)
        if (e.rhs < rep.h_at_x0 && (rep.smallest_t_below < 0.0 || e.t < rep.smallest_t_below))
            rep.smallest_t_below = e.t;
    return rep;
}

}  // namespace critlab
