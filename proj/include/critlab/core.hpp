#pragma once

// Shared constants, error types and small numerical utilities used across
// the library. Everything is header-only; see critlab.hpp for the umbrella.

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace critlab {

inline constexpr double kPi = 3.14159265358979323846;

/// Volume of the unit n-sphere S^n (as a Riemannian manifold of dimension n),
/// i.e. the surface measure of the unit ball boundary in R^{n+1}.
inline double sphere_volume(int n) {
    return 2.0 * std::pow(kPi, 0.5 * (n + 1)) / std::tgamma(0.5 * (n + 1));
}

/// Sharp first Sobolev constant squared, K(n,2)^2 = 4 / (n(n-2) omega_n^{2/n}).
inline double sobolev_K2(int n) {
    if (n < 3) throw std::invalid_argument("sobolev_K2: requires n >= 3");
    return 4.0 / (n * (n - 2.0) * std::pow(sphere_volume(n), 2.0 / n));
}

/// Critical exponent 2n/(n-2).
inline double critical_exponent(int n) {
    if (n < 3) throw std::invalid_argument("critical_exponent: requires n >= 3");
    return 2.0 * n / (n - 2.0);
}

// ---------------------------------------------------------------------------
// Error hierarchy. The CLI maps SolverError -> exit 2, ConfigError -> exit 3.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct SolverError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct NotCoercive : SolverError {
    double margin;
    explicit NotCoercive(double m)
        : SolverError("operator not coercive (margin estimate " + std::to_string(m) + ")"),
          margin(m) {}
};

struct NoConvergence : SolverError {
    double tol;
    int iterations;
    NoConvergence(const std::string& what, double t, int it)
        : SolverError(what + ": no convergence to tol " + std::to_string(t) + " in " +
                      std::to_string(it) + " iterations"),
          tol(t), iterations(it) {}
};

struct DenominatorNonpositive : SolverError {
    DenominatorNonpositive() : SolverError("constraint integral f|w|^q is nonpositive") {}
};

struct NonpositiveIterate : SolverError {
    NonpositiveIterate() : SolverError("iterate lost positivity beyond clipping budget") {}
};

struct CeilingViolation : SolverError {
    double lambda, ceiling;
    CeilingViolation(double l, double c)
        : SolverError("lambda estimate " + std::to_string(l) + " exceeds Aubin ceiling " +
                      std::to_string(c) + " beyond tolerance (discretization failure)"),
          lambda(l), ceiling(c) {}
};

struct NoSignChange : SolverError {
    NoSignChange(const std::string& lo, const std::string& hi)
        : SolverError("path never flips classification (endpoints: " + lo + ", " + hi + ")") {}
};

struct FitUnstable : SolverError {
    using SolverError::SolverError;
};

struct NotWeaklyCritical : SolverError {
    NotWeaklyCritical() : SolverError("triple is not weakly critical (precondition)") {}
};

struct DimensionMismatch : ConfigError {
    using ConfigError::ConfigError;
};

// ---------------------------------------------------------------------------
// Quadrature helpers
// ---------------------------------------------------------------------------

/// Composite Simpson over uniformly sampled values (n nodes, spacing dx).
/// Handles an odd interval count with a 3/8 tail.
inline double simpson_uniform(const std::vector<double>& f, double dx) {
    const std::size_t n = f.size();
    if (n < 2) return 0.0;
    if (n == 2) return 0.5 * dx * (f[0] + f[1]);
    std::size_t m = n - 1;          // interval count
    double s = 0.0;
    std::size_t last = m;
    if (m % 2 != 0) {
        if (n >= 4) {
            last = m - 3;           // leave three intervals for the 3/8 rule
            s += 3.0 * dx / 8.0 * (f[last] + 3.0 * f[last + 1] + 3.0 * f[last + 2] + f[last + 3]);
        } else {
            // three nodes handled above; two handled above; only m==1 remains
            return 0.5 * dx * (f[0] + f[1]);
        }
    }
    for (std::size_t i = 0; i + 2 <= last; i += 2)
        s += dx / 3.0 * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
    return s;
}

namespace detail {
inline double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double b,
                                   double fa, double fm, double fb, double whole, double tol,
                                   int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    // the second bound is a roundoff floor: no point refining past it
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol ||
        std::abs(delta) <= 4e-16 * (std::abs(left) + std::abs(right)))
        return left + right + delta / 15.0;
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

/// Adaptive Simpson on [a,b] with absolute tolerance tol.
inline double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                                 double tol = 1e-12, int max_depth = 40) {
    if (a == b) return 0.0;
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

/// Adaptive Simpson with a tolerance relative to the integral's magnitude.
inline double integrate_adaptive_rel(const std::function<double(double)>& f, double a, double b,
                                     double rel_tol = 1e-12, int max_depth = 40) {
    if (a == b) return 0.0;
    // coarse magnitude estimate to set the absolute tolerance
    double coarse = 0.0;
    const int nc = 64;
    for (int i = 0; i < nc; ++i) {
        const double x = a + (b - a) * (i + 0.5) / nc;
        coarse += std::abs(f(x));
    }
    coarse *= std::abs(b - a) / nc;
    const double tol = rel_tol * std::max(coarse, 1e-300);
    return integrate_adaptive(f, a, b, tol, max_depth);
}

/// 64-point Gauss-Legendre nodes/weights on [-1,1], generated once by Newton
/// iteration on Legendre polynomials.
struct GaussLegendre {
    std::vector<double> x, w;
    explicit GaussLegendre(int n = 64) : x(n), w(n) {
        for (int i = 0; i < n; ++i) {
            double t = std::cos(kPi * (i + 0.75) / (n + 0.5));
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = t;
                for (int k = 2; k <= n; ++k) {
                    double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                double dp = n * (t * p1 - p0) / (t * t - 1.0);
                double dt = p1 / dp;
                t -= dt;
                if (std::abs(dt) < 1e-15) break;
            }
            double p0 = 1.0, p1 = t;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            double dp = n * (t * p1 - p0) / (t * t - 1.0);
            x[i] = t;
            w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
        }
    }
    double integrate(const std::function<double(double)>& f, double a, double b) const {
        const double c = 0.5 * (b - a), d = 0.5 * (a + b);
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * f(c * x[i] + d);
        return c * s;
    }
};

inline const GaussLegendre& gauss64() {
    static const GaussLegendre g(64);
    return g;
}

// ---------------------------------------------------------------------------
// Sweep parallelism, capped by CRITLAB_THREADS (module sweeps are pure).
// ---------------------------------------------------------------------------

inline int sweep_thread_cap() {
    if (const char* env = std::getenv("CRITLAB_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

template <typename F>
void parallel_for(std::size_t count, F&& body) {
    const int cap = sweep_thread_cap();
    if (cap <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    const std::size_t nthreads = std::min<std::size_t>(cap, count);
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (std::size_t t = 0; t < nthreads; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < count; i += nthreads) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

/// Quintic smoothstep, value 1 on [0, lo], 0 on [hi, inf), C^2 in between.
inline double smoothstep_down(double r, double lo, double hi) {
    if (r <= lo) return 1.0;
    if (r >= hi) return 0.0;
    const double z = (r - lo) / (hi - lo);
    return 1.0 - z * z * z * (10.0 - 15.0 * z + 6.0 * z * z);
}

inline double smoothstep_down_d1(double r, double lo, double hi) {
    if (r <= lo || r >= hi) return 0.0;
    const double w = hi - lo, z = (r - lo) / w;
    return -(30.0 * z * z - 60.0 * z * z * z + 30.0 * z * z * z * z) / w;
}

inline double smoothstep_down_d2(double r, double lo, double hi) {
    if (r <= lo || r >= hi) return 0.0;
    const double w = hi - lo, z = (r - lo) / w;
    return -(60.0 * z - 180.0 * z * z + 120.0 * z * z * z) / (w * w);
}

}  // namespace critlab
