#pragma once

// Minimal complex FFT used by the Fourier field propagators: iterative
// radix-2 for power-of-two lengths, Bluestein's chirp-z for everything else,
// plus a row/column 2-D driver. Deterministic for fixed inputs.

#include <complex>
#include <vector>

#include "mci/common.hpp"

namespace mci::detail {

using cplx = std::complex<double>;

inline bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

inline void fft_pow2(std::vector<cplx>& a, bool inverse) {
  const size_t n = a.size();
  if (n <= 1) return;
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * k_pi / static_cast<double>(len);
    const cplx wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const cplx u = a[i + k];
        const cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv_n;
  }
}

// Arbitrary-length DFT via Bluestein. Chirp phases use k^2 mod 2n in integer
// arithmetic so large indices do not lose precision in the angle.
inline void fft_bluestein(std::vector<cplx>& a, bool inverse) {
  const size_t n = a.size();
  if (n <= 1) return;
  const size_t m = next_pow2(2 * n - 1);
  std::vector<cplx> chirp(n);
  for (size_t k = 0; k < n; ++k) {
    const uint64_t k2 = (static_cast<uint64_t>(k) * k) % (2 * n);
    const double ang = k_pi * static_cast<double>(k2) / static_cast<double>(n);
    chirp[k] = inverse ? cplx(std::cos(ang), std::sin(ang))
                       : cplx(std::cos(ang), -std::sin(ang));
  }
  std::vector<cplx> x(m, cplx(0.0, 0.0));
  std::vector<cplx> y(m, cplx(0.0, 0.0));
  for (size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
  for (size_t k = 0; k < n; ++k) {
    y[k] = std::conj(chirp[k]);
    if (k != 0) y[m - k] = std::conj(chirp[k]);
  }
  fft_pow2(x, false);
  fft_pow2(y, false);
  for (size_t k = 0; k < m; ++k) x[k] *= y[k];
  fft_pow2(x, true);
  for (size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
  if (inverse) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& v : a) v *= inv_n;
  }
}

inline void fft(std::vector<cplx>& a, bool inverse) {
  if (is_pow2(a.size()))
    fft_pow2(a, inverse);
  else
    fft_bluestein(a, inverse);
}

// In-place 2-D transform of a row-major w x h grid.
inline void fft2d(std::vector<cplx>& data, size_t w, size_t h, bool inverse) {
  std::vector<cplx> row(w);
  for (size_t j = 0; j < h; ++j) {
    for (size_t i = 0; i < w; ++i) row[i] = data[j * w + i];
    fft(row, inverse);
    for (size_t i = 0; i < w; ++i) data[j * w + i] = row[i];
  }
  std::vector<cplx> col(h);
  for (size_t i = 0; i < w; ++i) {
    for (size_t j = 0; j < h; ++j) col[j] = data[j * w + i];
    fft(col, inverse);
    for (size_t j = 0; j < h; ++j) data[j * w + i] = col[j];
  }
}

// Signed FFT frequency index (0, 1, ..., n/2, -(n/2-1), ..., -1 pattern).
inline double fft_freq_index(size_t i, size_t n) {
  return i <= n / 2 ? static_cast<double>(i)
                    : static_cast<double>(i) - static_cast<double>(n);
}

}  // namespace mci::detail
