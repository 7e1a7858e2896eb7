#pragma once

// Complex DFT used by the flat-torus spectral operators. Radix-2 for
// power-of-two lengths, direct O(N^2) evaluation otherwise (torus axes are
// small; the fallback only matters for non-power-of-two even grids).

#include <complex>
#include <vector>

#include "critlab/core.hpp"

namespace critlab {

using cplx = std::complex<double>;

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline void fft_radix2(std::vector<cplx>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const cplx wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                cplx u = a[i + k];
                cplx v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse) {
        for (auto& z : a) z /= static_cast<double>(n);
    }
}

inline void dft_naive(std::vector<cplx>& a, bool inverse) {
    const std::size_t n = a.size();
    std::vector<cplx> out(n, cplx(0.0, 0.0));
    const double sgn = inverse ? 1.0 : -1.0;
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t j = 0; j < n; ++j) {
            const double ang = sgn * 2.0 * kPi * static_cast<double>(k * j % n) / n;
            out[k] += a[j] * cplx(std::cos(ang), std::sin(ang));
        }
    }
    if (inverse)
        for (auto& z : out) z /= static_cast<double>(n);
    a.swap(out);
}

}  // namespace detail

inline void fft_1d(std::vector<cplx>& a, bool inverse) {
    if (detail::is_pow2(a.size()))
        detail::fft_radix2(a, inverse);
    else
        detail::dft_naive(a, inverse);
}

/// In-place transform of an n-dimensional array stored row-major with
/// `shape[a]` nodes per axis, applied axis by axis.
inline void fft_nd(std::vector<cplx>& data, const std::vector<int>& shape, bool inverse) {
    const int nd = static_cast<int>(shape.size());
    std::size_t total = 1;
    for (int s : shape) total *= static_cast<std::size_t>(s);

    std::vector<std::size_t> stride(nd);
    std::size_t acc = 1;
    for (int a = nd - 1; a >= 0; --a) {
        stride[a] = acc;
        acc *= static_cast<std::size_t>(shape[a]);
    }

    std::vector<cplx> line;
    for (int a = 0; a < nd; ++a) {
        const std::size_t na = static_cast<std::size_t>(shape[a]);
        const std::size_t st = stride[a];
        const std::size_t nlines = total / na;
        line.resize(na);
        for (std::size_t l = 0; l < nlines; ++l) {
            // base offset of line l: positions vary over all axes except a
            std::size_t rem = l, base = 0;
            for (int b = nd - 1; b >= 0; --b) {
                if (b == a) continue;
                const std::size_t nb = static_cast<std::size_t>(shape[b]);
                base += (rem % nb) * stride[b];
                rem /= nb;
            }
            for (std::size_t i = 0; i < na; ++i) line[i] = data[base + i * st];
            fft_1d(line, inverse);
            for (std::size_t i = 0; i < na; ++i) data[base + i * st] = line[i];
        }
    }
}

}  // namespace critlab
