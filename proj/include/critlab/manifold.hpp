#pragma once

// Discretized model manifolds: round sphere and Euclidean ball as radial
// profiles (uniform grid in r, second-order conservative differences), flat
// torus as a uniform periodic cube with exact spectral operators.
//
// Sign convention throughout: the geometers' Laplacian, Delta u = -div grad u,
// so Delta of a positive bump is positive at its peak.

#include <algorithm>
#include <array>
#include <cassert>
#include <functional>
#include <memory>
#include <numeric>
#include <vector>

#include "critlab/core.hpp"
#include "critlab/fft.hpp"

namespace critlab {

enum class ManifoldKind { RoundSphere, FlatTorus, EuclideanBall };
enum class Scheme { UniformFD2, Spectral };
enum class Symmetry { Radial, Full };

struct GridSpec {
    std::vector<int> nodes_per_axis;
    Scheme scheme = Scheme::UniformFD2;
};

/// A manifold point: on radial models a single geodesic radius from the base
/// pole, on the torus the n periodic coordinates in [0, L).
struct Point {
    std::vector<double> x;
    static Point radial(double r) { return Point{{r}}; }
    double r() const { return x.at(0); }
};

class ManifoldModel;
using ManifoldPtr = std::shared_ptr<const ManifoldModel>;

struct Field {
    ManifoldPtr m;
    std::vector<double> v;
    Symmetry sym = Symmetry::Full;

    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }
    std::size_t size() const { return v.size(); }
};

/// Chart sampling descriptor: the exponential chart around a center, with the
/// pulled-back metric evaluated on radii.
struct ChartSampling {
    int dim = 0;
    double radius = 0.0;
    std::vector<double> radii;
    std::vector<double> sqrt_det;  // sqrt(det g) at each radius
    std::vector<double> g_tan;     // tangential metric coefficient (g_rr == 1)
};

class ManifoldModel : public std::enable_shared_from_this<ManifoldModel> {
  public:
    ManifoldKind kind;
    int dim;
    GridSpec grid;
    double period_or_radius;  // torus side L or ball radius R; sphere radius 1

    static ManifoldPtr sphere(int n, int nodes = 4096) {
        if (n < 2) throw ConfigError("sphere: dimension must be >= 2");
        if (nodes < 64) throw ConfigError("sphere: radial grid needs >= 64 nodes");
        auto m = std::shared_ptr<ManifoldModel>(new ManifoldModel());
        m->kind = ManifoldKind::RoundSphere;
        m->dim = n;
        m->period_or_radius = 1.0;
        m->grid = GridSpec{{nodes}, Scheme::UniformFD2};
        m->init_radial(kPi);
        return m;
    }

    static ManifoldPtr ball(int n, double R, int nodes = 4096) {
        if (n < 2) throw ConfigError("ball: dimension must be >= 2");
        if (R <= 0) throw ConfigError("ball: radius must be positive");
        auto m = std::shared_ptr<ManifoldModel>(new ManifoldModel());
        m->kind = ManifoldKind::EuclideanBall;
        m->dim = n;
        m->period_or_radius = R;
        m->grid = GridSpec{{nodes}, Scheme::UniformFD2};
        m->init_radial(R);
        return m;
    }

    static ManifoldPtr torus(int n, double L = 2.0 * kPi, int nodes_per_axis = 64) {
        if (n < 2) throw ConfigError("torus: dimension must be >= 2");
        if (n > 4) throw ConfigError("torus: dimension capped at 4 (memory)");
        if (L <= 0) throw ConfigError("torus: side length must be positive");
        if (nodes_per_axis % 2 != 0) throw ConfigError("torus: node count per axis must be even");
        auto m = std::shared_ptr<ManifoldModel>(new ManifoldModel());
        m->kind = ManifoldKind::FlatTorus;
        m->dim = n;
        m->period_or_radius = L;
        m->grid = GridSpec{std::vector<int>(n, nodes_per_axis), Scheme::Spectral};
        m->init_torus();
        return m;
    }

    bool is_radial() const { return kind != ManifoldKind::FlatTorus; }

    std::size_t node_count() const { return total_nodes_; }

    double spacing() const { return dx_; }  // dr on radial models, h on torus

    double injectivity_radius() const {
        switch (kind) {
            case ManifoldKind::RoundSphere: return kPi;
            case ManifoldKind::FlatTorus: return 0.5 * period_or_radius;
            case ManifoldKind::EuclideanBall: return period_or_radius;
        }
        return 0.0;
    }

    double scalar_curvature() const {
        return kind == ManifoldKind::RoundSphere ? static_cast<double>(dim) * (dim - 1) : 0.0;
    }

    /// Radius coordinate of radial node i.
    double r_at(std::size_t i) const { return static_cast<double>(i) * dx_; }

    /// Radial area density (without the omega_{n-1} factor).
    double radial_weight(double r) const {
        const double s = kind == ManifoldKind::RoundSphere ? std::sin(r) : r;
        return std::pow(s, dim - 1);
    }

    double closed_form_volume() const {
        switch (kind) {
            case ManifoldKind::RoundSphere: return sphere_volume(dim);
            case ManifoldKind::FlatTorus: return std::pow(period_or_radius, dim);
            case ManifoldKind::EuclideanBall:
                return sphere_volume(dim - 1) * std::pow(period_or_radius, dim) / dim;
        }
        return 0.0;
    }

    // --- torus index helpers -------------------------------------------------

    const std::vector<int>& shape() const { return grid.nodes_per_axis; }

    void coords_of(std::size_t flat, std::vector<double>& out) const {
        out.resize(dim);
        for (int a = dim - 1; a >= 0; --a) {
            const int na = grid.nodes_per_axis[a];
            out[a] = static_cast<double>(flat % na) * dx_;
            flat /= na;
        }
    }

    double torus_distance(const std::vector<double>& a, const std::vector<double>& b) const {
        const double L = period_or_radius;
        double s = 0.0;
        for (int i = 0; i < dim; ++i) {
            double d = std::abs(a[i] - b[i]);
            d = std::fmod(d, L);
            d = std::min(d, L - d);
            s += d * d;
        }
        return std::sqrt(s);
    }

  private:
    double dx_ = 0.0;
    std::size_t total_nodes_ = 0;

    void init_radial(double span) {
        const int nodes = grid.nodes_per_axis[0];
        dx_ = span / (nodes - 1);
        total_nodes_ = static_cast<std::size_t>(nodes);
    }

    void init_torus() {
        dx_ = period_or_radius / grid.nodes_per_axis[0];
        total_nodes_ = 1;
        for (int n : grid.nodes_per_axis) total_nodes_ *= static_cast<std::size_t>(n);
    }
};

// ---------------------------------------------------------------------------
// Field construction and algebra
// ---------------------------------------------------------------------------

inline Field make_field(const ManifoldPtr& m, double value = 0.0) {
    return Field{m, std::vector<double>(m->node_count(), value),
                 m->is_radial() ? Symmetry::Radial : Symmetry::Full};
}

/// Sample a radial profile. On radial models the profile is a function of the
/// grid radius; on the torus it is a function of the distance to `center`.
inline Field sample_radial(const ManifoldPtr& m, const std::function<double(double)>& profile,
                           const Point* center = nullptr) {
    Field f = make_field(m);
    if (m->is_radial()) {
        for (std::size_t i = 0; i < f.size(); ++i) f.v[i] = profile(m->r_at(i));
        f.sym = Symmetry::Radial;
    } else {
        std::vector<double> c(m->dim, 0.0);
        if (center) c = center->x;
        std::vector<double> x;
        for (std::size_t i = 0; i < f.size(); ++i) {
            m->coords_of(i, x);
            f.v[i] = profile(m->torus_distance(x, c));
        }
        f.sym = Symmetry::Full;
    }
    return f;
}

inline Field sample_coords(const ManifoldPtr& m,
                           const std::function<double(const std::vector<double>&)>& fn) {
    Field f = make_field(m);
    if (m->is_radial()) {
        std::vector<double> x(1);
        for (std::size_t i = 0; i < f.size(); ++i) {
            x[0] = m->r_at(i);
            f.v[i] = fn(x);
        }
    } else {
        std::vector<double> x;
        for (std::size_t i = 0; i < f.size(); ++i) {
            m->coords_of(i, x);
            f.v[i] = fn(x);
        }
    }
    return f;
}

inline void check_same_grid(const Field& a, const Field& b) {
    if (a.m.get() != b.m.get() || a.size() != b.size())
        throw DimensionMismatch("fields live on different manifolds/grids");
}

inline Field field_map(const Field& a, const std::function<double(double)>& fn) {
    Field out = a;
    for (auto& x : out.v) x = fn(x);
    return out;
}

inline Field operator+(const Field& a, const Field& b) {
    check_same_grid(a, b);
    Field out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] += b.v[i];
    return out;
}

inline Field operator-(const Field& a, const Field& b) {
    check_same_grid(a, b);
    Field out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] -= b.v[i];
    return out;
}

inline Field operator*(const Field& a, const Field& b) {
    check_same_grid(a, b);
    Field out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] *= b.v[i];
    return out;
}

inline Field operator*(double c, const Field& a) {
    Field out = a;
    for (auto& x : out.v) x *= c;
    return out;
}

inline Field operator+(const Field& a, double c) {
    Field out = a;
    for (auto& x : out.v) x += c;
    return out;
}

inline Field operator-(const Field& a, double c) { return a + (-c); }

inline double field_min(const Field& a) { return *std::min_element(a.v.begin(), a.v.end()); }
inline double field_max(const Field& a) { return *std::max_element(a.v.begin(), a.v.end()); }
inline double field_max_abs(const Field& a) {
    double m = 0.0;
    for (double x : a.v) m = std::max(m, std::abs(x));
    return m;
}

// ---------------------------------------------------------------------------
// Integration
// ---------------------------------------------------------------------------

/// Quadrature of u against dv_g. Radial models use composite Simpson against
/// the area density, the torus uses exact uniform weights.
inline double integrate(const ManifoldPtr& m, const Field& u) {
    if (u.m.get() != m.get()) throw DimensionMismatch("integrate: field not on this manifold");
    if (m->is_radial()) {
        const std::size_t n = m->node_count();
        std::vector<double> g(n);
        for (std::size_t i = 0; i < n; ++i) g[i] = u.v[i] * m->radial_weight(m->r_at(i));
        return sphere_volume(m->dim - 1) * simpson_uniform(g, m->spacing());
    }
    const double w = std::pow(m->spacing(), m->dim);
    double s = 0.0;
    for (double x : u.v) s += x;
    return w * s;
}

inline double integrate(const Field& u) { return integrate(u.m, u); }

inline double volume(const ManifoldPtr& m) { return integrate(m, make_field(m, 1.0)); }

inline double norm_L2(const Field& u) { return std::sqrt(integrate(u.m, u * u)); }

// ---------------------------------------------------------------------------
// Laplacian (geometers' sign)
// ---------------------------------------------------------------------------

namespace detail {

/// Conservative second-order radial Laplacian -(1/rho)(rho u')' with the
/// regularized limit Delta u(0) = -n u''(0) at the pole row(s).
inline void laplacian_radial(const ManifoldModel& m, const std::vector<double>& u,
                             std::vector<double>& out) {
    const std::size_t n = u.size();
    const double dr = m.spacing();
    const double inv_dr2 = 1.0 / (dr * dr);
    out.resize(n);

    out[0] = -m.dim * 2.0 * (u[1] - u[0]) * inv_dr2;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double r = m.r_at(i);
        const double rho = m.radial_weight(r);
        const double rp = m.radial_weight(r + 0.5 * dr);
        const double rm = m.radial_weight(r - 0.5 * dr);
        out[i] = -(rp * (u[i + 1] - u[i]) - rm * (u[i] - u[i - 1])) * inv_dr2 / rho;
    }
    if (m.kind == ManifoldKind::RoundSphere) {
        out[n - 1] = -m.dim * 2.0 * (u[n - 2] - u[n - 1]) * inv_dr2;
    } else {
        // one-sided second-order stencil at the outer ball radius
        const double r = m.r_at(n - 1);
        const double upp =
            (2.0 * u[n - 1] - 5.0 * u[n - 2] + 4.0 * u[n - 3] - u[n - 4]) * inv_dr2;
        const double up = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * dr);
        out[n - 1] = -upp - (m.dim - 1) / r * up;
    }
}

inline std::vector<double> torus_symbol(const ManifoldModel& m) {
    // per-axis squared frequencies, combined on demand
    const int N = m.shape()[0];
    const double L = m.period_or_radius;
    std::vector<double> sym(N);
    for (int k = 0; k < N; ++k) {
        const int kk = k <= N / 2 ? k : k - N;
        const double w = 2.0 * kPi * kk / L;
        sym[k] = w * w;
    }
    return sym;
}

template <typename SymbolFn>
inline void torus_apply_symbol(const ManifoldModel& m, const std::vector<double>& u,
                               std::vector<double>& out, SymbolFn&& fn) {
    const auto& shape = m.shape();
    std::vector<cplx> a(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) a[i] = cplx(u[i], 0.0);
    fft_nd(a, shape, false);
    const std::vector<double> sym = torus_symbol(m);
    // iterate multi-index to accumulate the full symbol
    const int nd = m.dim;
    std::vector<int> idx(nd, 0);
    for (std::size_t flat = 0; flat < a.size(); ++flat) {
        double s = 0.0;
        for (int d = 0; d < nd; ++d) s += sym[idx[d]];
        a[flat] *= fn(s);
        for (int d = nd - 1; d >= 0; --d) {
            if (++idx[d] < shape[d]) break;
            idx[d] = 0;
        }
    }
    fft_nd(a, shape, true);
    out.resize(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = a[i].real();
}

}  // namespace detail

/// Closed-form radial Laplacian -u'' - (n-1)(cot r | 1/r) u' from analytic
/// derivatives; the route for fields whose derivatives are known exactly
/// (singular kernels, cutoff products).
inline double radial_laplacian_value(const ManifoldModel& m, double r, double du, double ddu) {
    const double c =
        m.kind == ManifoldKind::RoundSphere ? std::cos(r) / std::sin(r) : 1.0 / r;
    return -ddu - (m.dim - 1) * c * du;
}

inline Field laplacian(const ManifoldPtr& m, const Field& u) {
    if (u.m.get() != m.get()) throw DimensionMismatch("laplacian: field not on this manifold");
    Field out = make_field(m);
    out.sym = u.sym;
    if (m->is_radial())
        detail::laplacian_radial(*m, u.v, out.v);
    else
        detail::torus_apply_symbol(*m, u.v, out.v, [](double s) { return s; });
    return out;
}

/// Dirichlet pairing computed by the same discretization as the Laplacian:
/// midpoint fluxes on radial grids, exact spectral symbol on the torus.
inline double grad_pairing(const ManifoldPtr& m, const Field& u, const Field& v) {
    check_same_grid(u, v);
    if (m->is_radial()) {
        const std::size_t n = m->node_count();
        const double dr = m->spacing();
        double s = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const double rho = m->radial_weight(m->r_at(i) + 0.5 * dr);
            s += rho * (u.v[i + 1] - u.v[i]) * (v.v[i + 1] - v.v[i]);
        }
        return sphere_volume(m->dim - 1) * s / dr;
    }
    Field lap = laplacian(m, u);
    return integrate(m, lap * v);
}

inline double dirichlet_energy(const ManifoldPtr& m, const Field& u) {
    return grad_pairing(m, u, u);
}

/// Pointwise |grad u| (radial derivative magnitude on radial models, spectral
/// gradient magnitude on the torus).
inline Field grad_norm(const ManifoldPtr& m, const Field& u) {
    Field out = make_field(m);
    if (m->is_radial()) {
        const std::size_t n = m->node_count();
        const double dr = m->spacing();
        out.v[0] = 0.0;  // radial symmetry
        for (std::size_t i = 1; i + 1 < n; ++i)
            out.v[i] = std::abs((u.v[i + 1] - u.v[i - 1]) / (2.0 * dr));
        out.v[n - 1] = std::abs((u.v[n - 1] - u.v[n - 2]) / dr);
        return out;
    }
    const auto& shape = m->shape();
    std::vector<cplx> base(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) base[i] = cplx(u.v[i], 0.0);
    fft_nd(base, shape, false);
    const int N = shape[0];
    const double L = m->period_or_radius;
    std::vector<double> acc(u.size(), 0.0);
    std::vector<cplx> work;
    for (int a = 0; a < m->dim; ++a) {
        work = base;
        std::vector<int> idx(m->dim, 0);
        for (std::size_t flat = 0; flat < work.size(); ++flat) {
            const int k = idx[a];
            int kk = k <= N / 2 ? k : k - N;
            if (2 * k == N) kk = 0;  // Nyquist mode has no well-defined first derivative
            work[flat] *= cplx(0.0, 2.0 * kPi * kk / L);
            for (int d = m->dim - 1; d >= 0; --d) {
                if (++idx[d] < shape[d]) break;
                idx[d] = 0;
            }
        }
        fft_nd(work, shape, true);
        for (std::size_t i = 0; i < work.size(); ++i) acc[i] += work[i].real() * work[i].real();
    }
    for (std::size_t i = 0; i < u.size(); ++i) out.v[i] = std::sqrt(acc[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Distances, charts
// ---------------------------------------------------------------------------

/// Geodesic distance. Radial models use the zonal convention (points are
/// radii along a common meridian); the torus minimizes over lattice wraps.
inline double geodesic_distance(const ManifoldPtr& m, const Point& x, const Point& y) {
    if (m->is_radial()) return std::abs(x.r() - y.r());
    return m->torus_distance(x.x, y.x);
}

inline ChartSampling exp_chart_sample(const ManifoldPtr& m, const Point& center, double radius,
                                      int resolution) {
    if (radius >= m->injectivity_radius())
        throw ConfigError("exp_chart_sample: radius exceeds injectivity radius");
    if (resolution < 2) throw ConfigError("exp_chart_sample: resolution too small");
    if (m->is_radial() && center.r() != 0.0)
        throw ConfigError("exp_chart_sample: radial models chart about the pole");
    ChartSampling cs;
    cs.dim = m->dim;
    cs.radius = radius;
    cs.radii.resize(resolution + 1);
    cs.sqrt_det.resize(resolution + 1);
    cs.g_tan.resize(resolution + 1);
    for (int i = 0; i <= resolution; ++i) {
        const double rho = radius * i / resolution;
        cs.radii[i] = rho;
        if (m->kind == ManifoldKind::RoundSphere && rho > 0.0) {
            const double q = std::sin(rho) / rho;
            cs.g_tan[i] = q * q;
            cs.sqrt_det[i] = std::pow(q, m->dim - 1);
        } else {
            cs.g_tan[i] = 1.0;
            cs.sqrt_det[i] = 1.0;
        }
    }
    return cs;
}

/// Integral of a zonal profile F(d(., A)) over the geodesic shell
/// {rho_lo <= d(., B) <= rho_hi} on the round sphere S^n, where d_ab =
/// d(A, B). Used for cap masses of fields that are radial about a moved
/// center.
inline double sphere_shell_integral(int n, const std::function<double(double)>& F, double d_ab,
                                    double rho_lo, double rho_hi) {
    if (n < 3) throw ConfigError("sphere_shell_integral: needs n >= 3");
    const auto& gl = gauss64();
    const double wn2 = sphere_volume(n - 2);
    auto inner = [&](double rho) {
        auto g = [&](double phi) {
            double c = std::cos(d_ab) * std::cos(rho) + std::sin(d_ab) * std::sin(rho) * std::cos(phi);
            c = std::clamp(c, -1.0, 1.0);
            return F(std::acos(c)) * std::pow(std::sin(phi), n - 2);
        };
        return gl.integrate(g, 0.0, kPi) * std::pow(std::sin(rho), n - 1);
    };
    // split the rho range so features near rho = d_ab are resolved
    double acc = 0.0;
    const int pieces = 24;
    for (int p = 0; p < pieces; ++p) {
        const double a = rho_lo + (rho_hi - rho_lo) * p / pieces;
        const double b = rho_lo + (rho_hi - rho_lo) * (p + 1) / pieces;
        acc += gl.integrate(inner, a, b);
    }
    return wn2 * acc;
}

inline double sphere_cap_integral(int n, const std::function<double(double)>& F, double d_ab,
                                  double delta) {
    return sphere_shell_integral(n, F, d_ab, 0.0, delta);
}

/// Grid argmax refined by a local quadratic fit (radial models refine in r,
/// the torus per axis).
inline std::pair<Point, double> refine_argmax(const ManifoldPtr& m, const Field& u) {
    const std::size_t i0 =
        std::distance(u.v.begin(), std::max_element(u.v.begin(), u.v.end()));
    if (m->is_radial()) {
        const std::size_t n = u.size();
        if (i0 == 0 || i0 == n - 1) return {Point::radial(m->r_at(i0)), u.v[i0]};
        const double ym = u.v[i0 - 1], y0 = u.v[i0], yp = u.v[i0 + 1];
        const double denom = ym - 2.0 * y0 + yp;
        double off = 0.0, val = y0;
        if (denom < 0.0) {
            off = 0.5 * (ym - yp) / denom;
            val = y0 - 0.25 * (ym - yp) * off;
        }
        return {Point::radial(m->r_at(i0) + off * m->spacing()), val};
    }
    std::vector<double> c;
    m->coords_of(i0, c);
    double val = u.v[i0];
    // per-axis parabola through periodic neighbours
    const auto& shape = m->shape();
    std::vector<std::size_t> stride(m->dim);
    std::size_t acc = 1;
    for (int a = m->dim - 1; a >= 0; --a) {
        stride[a] = acc;
        acc *= static_cast<std::size_t>(shape[a]);
    }
    for (int a = 0; a < m->dim; ++a) {
        const int na = shape[a];
        const std::size_t ia = (i0 / stride[a]) % na;
        const std::size_t ip = i0 - ia * stride[a] + ((ia + 1) % na) * stride[a];
        const std::size_t im = i0 - ia * stride[a] + ((ia + na - 1) % na) * stride[a];
        const double ym = u.v[im], y0 = u.v[i0], yp = u.v[ip];
        const double denom = ym - 2.0 * y0 + yp;
        if (denom < 0.0) c[a] += 0.5 * (ym - yp) / denom * m->spacing();
    }
    return {Point{c}, val};
}

}  // namespace critlab
