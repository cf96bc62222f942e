#pragma once

// Forward Biot-Savart models and the regularized inverse reconstruction of
// sheet current density.
//
// The real-space polyline sum is the reference oracle: every Fourier-domain
// sign convention below is pinned by agreement with it, not by formula
// transcription. The k-space propagator for a thin sheet at height d is
//   Bx(k) = +mu0/2 e^{-kd} Jy(k)
//   By(k) = -mu0/2 e^{-kd} Jx(k)
//   Bz(k) =  mu0/2 e^{-kd} (i/k)(kx Jy(k) - ky Jx(k))
// and with a stream function g (Jx = dg/dy, Jy = -dg/dx) this collapses to
// Bz(k) = mu0/2 e^{-kd} k g(k), which is what the inversion undoes.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include "mci/common.hpp"
#include "mci/fft.hpp"
#include "mci/field_map.hpp"
#include "mci/levmar.hpp"

namespace mci {

struct PhysicalConstants {
  double mu0 = k_mu0;
};

struct Polyline {
  std::vector<Vec3> points;  // meters
  double current_a = 0.0;    // positive current flows in point order
};

struct CurrentTrace {
  std::vector<Polyline> segments;

  void validate() const {
    require(!segments.empty(), "InvalidTrace", "trace has no segments");
    for (const auto& s : segments) {
      require(s.points.size() >= 2, "InvalidTrace",
              "polyline needs at least 2 points");
      require(s.current_a != 0.0 && std::isfinite(s.current_a), "InvalidTrace",
              "segment current must be finite and nonzero");
      for (const auto& p : s.points)
        require(p.finite(), "InvalidTrace", "non-finite trace coordinate");
    }
  }
};

namespace detail {

// Field of a finite straight segment A->B carrying current I, evaluated at
// P. With u the unit direction, c = u x (P - A) and d the perpendicular
// distance, B = mu0 I / (4 pi) * c / d^2 * ((L - t)/|r2| + t/|r1|) where
// t = u . (P - A). Contributions from points on the line's extension vanish
// smoothly and are cut off explicitly to avoid 0/0.
inline Vec3 segment_field(const Vec3& a, const Vec3& b, double current,
                          const Vec3& p) {
  const Vec3 ab = b - a;
  const double len = ab.norm();
  if (len == 0.0) return {};
  const Vec3 u = ab / len;
  const Vec3 r1 = p - a;
  const Vec3 r2 = p - b;
  const Vec3 c = u.cross(r1);
  const double d2 = c.norm2();
  const double n1 = r1.norm();
  const double n2 = r2.norm();
  const double scale = n1 + n2;
  if (d2 <= 1e-24 * scale * scale) return {};
  const double t = u.dot(r1);
  const double bracket = (len - t) / n2 + t / n1;
  return c * (1e-7 * current * bracket / d2);  // mu0 / 4 pi = 1e-7
}

inline double point_segment_distance(const Vec3& a, const Vec3& b, const Vec3& p) {
  const Vec3 ab = b - a;
  const double len2 = ab.norm2();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + ab * t)).norm();
}

}  // namespace detail

// Exact closed-form field of the trace, summed over segments, evaluated at
// each pixel center on the plane z = standoff. Errors out when a pixel is
// closer than pitch/100 to any segment.
inline VectorFieldMap biot_savart_polyline(const CurrentTrace& trace, uint32_t width,
                                           uint32_t height, double pitch,
                                           double standoff) {
  trace.validate();
  require(width >= 1 && height >= 1 && pitch > 0.0 && standoff >= 0.0,
          "InvalidMap", "bad grid geometry");

  VectorFieldMap out = VectorFieldMap::zeros(width, height, pitch, standoff);
  const double min_dist = pitch / 100.0;

  detail::parallel_for(static_cast<size_t>(height), [&](size_t jy) {
    const auto iy = static_cast<uint32_t>(jy);
    for (uint32_t ix = 0; ix < width; ++ix) {
      const Vec3 p{out.bx.x_at(ix), out.bx.y_at(iy), standoff};
      Vec3 field{};
      for (const auto& poly : trace.segments) {
        for (size_t k = 0; k + 1 < poly.points.size(); ++k) {
          const Vec3& a = poly.points[k];
          const Vec3& b = poly.points[k + 1];
          require(detail::point_segment_distance(a, b, p) > min_dist,
                  "PointOnSegment",
                  "evaluation point closer than pitch/100 to a segment");
          field += detail::segment_field(a, b, poly.current_a, p);
        }
      }
      out.bx.at(ix, iy) = field.x;
      out.by.at(ix, iy) = field.y;
      out.bz.at(ix, iy) = field.z;
    }
  });
  return out;
}

// Anti-aliased deposition of a polyline onto a sheet-current grid. Each
// sub-span between pixel-center crossings integrates the bilinear hat
// weights exactly (Simpson is exact for the quadratic integrand), so a cut
// across the wire recovers the segment current to rasterization accuracy.
inline CurrentDensityMap rasterize_trace(const CurrentTrace& trace, uint32_t width,
                                         uint32_t height, double pitch,
                                         double depth) {
  trace.validate();
  require(width >= 1 && height >= 1 && pitch > 0.0, "InvalidMap",
          "bad grid geometry");

  CurrentDensityMap j;
  j.jx = FieldMap::zeros(width, height, pitch, 0.0, "A/m");
  j.jy = FieldMap::zeros(width, height, pitch, 0.0, "A/m");
  j.depth = depth;

  auto deposit = [&](double fx, double fy, double amount_x, double amount_y) {
    // fx, fy are continuous pixel-center coordinates.
    const auto i0 = static_cast<int64_t>(std::floor(fx));
    const auto j0 = static_cast<int64_t>(std::floor(fy));
    const double wx1 = fx - static_cast<double>(i0);
    const double wy1 = fy - static_cast<double>(j0);
    const double w[4] = {(1 - wx1) * (1 - wy1), wx1 * (1 - wy1),
                         (1 - wx1) * wy1, wx1 * wy1};
    const int64_t di[4] = {0, 1, 0, 1};
    const int64_t dj[4] = {0, 0, 1, 1};
    for (int q = 0; q < 4; ++q) {
      const int64_t ci = i0 + di[q];
      const int64_t cj = j0 + dj[q];
      if (ci < 0 || cj < 0 || ci >= width || cj >= height) continue;
      const size_t idx = static_cast<size_t>(cj) * width + static_cast<size_t>(ci);
      j.jx.data[idx] += w[q] * amount_x;
      j.jy.data[idx] += w[q] * amount_y;
    }
  };

  for (const auto& poly : trace.segments) {
    for (const auto& p : poly.points)
      require(std::abs(p.z - depth) <= pitch / 10.0, "OutOfPlane",
              "trace point off the sheet plane by more than pitch/10");
    for (size_t s = 0; s + 1 < poly.points.size(); ++s) {
      // Work in pixel-center coordinates: c = x / pitch - 0.5.
      const double ax = poly.points[s].x / pitch - 0.5;
      const double ay = poly.points[s].y / pitch - 0.5;
      const double bx = poly.points[s + 1].x / pitch - 0.5;
      const double by = poly.points[s + 1].y / pitch - 0.5;
      const double dx = bx - ax;
      const double dy = by - ay;
      const double len = std::hypot(dx, dy);
      if (len == 0.0) continue;
      const double ux = dx / len;
      const double uy = dy / len;

      std::vector<double> cuts{0.0, len};
      auto add_crossings = [&](double a0, double u) {
        if (std::abs(u) < 1e-15) return;
        // integer lattice crossings of the pixel-center coordinate
        const double c0 = a0;
        const double c1 = a0 + u * len;
        const double lo = std::min(c0, c1);
        const double hi = std::max(c0, c1);
        for (auto m = static_cast<int64_t>(std::ceil(lo)); m <= std::floor(hi); ++m) {
          const double t = (static_cast<double>(m) - a0) / u;
          if (t > 0.0 && t < len) cuts.push_back(t);
        }
      };
      add_crossings(ax, ux);
      add_crossings(ay, uy);
      std::sort(cuts.begin(), cuts.end());

      const double amount = poly.current_a / (pitch * pitch) * pitch;
      // amount has units A/m per unit pixel-length of path: I * ds / pitch^2
      // with ds = dt * pitch.
      for (size_t c = 0; c + 1 < cuts.size(); ++c) {
        const double t0 = cuts[c];
        const double t1 = cuts[c + 1];
        const double dt = t1 - t0;
        if (dt <= 1e-15) continue;
        const double tm = 0.5 * (t0 + t1);
        // Simpson over the sub-span; weights are quadratic in t.
        const double pts[3] = {t0, tm, t1};
        const double sw[3] = {dt / 6.0, 4.0 * dt / 6.0, dt / 6.0};
        for (int q = 0; q < 3; ++q)
          deposit(ax + ux * pts[q], ay + uy * pts[q], sw[q] * amount * ux,
                  sw[q] * amount * uy);
      }
    }
  }
  return j;
}

namespace detail {

struct SpectralGrid {
  size_t mw, mh;
  double pitch;
  double kx(size_t i) const { return 2.0 * k_pi * fft_freq_index(i, mw) / (mw * pitch); }
  double ky(size_t j) const { return 2.0 * k_pi * fft_freq_index(j, mh) / (mh * pitch); }
};

}  // namespace detail

// Fourier propagation of a thin current sheet to height d = standoff - depth.
// The grid is zero-padded by a factor of 2 to keep periodic images away; the
// DC mode of B carries no information about a localized pattern and is set
// to zero.
inline VectorFieldMap sheet_forward(const CurrentDensityMap& j, double standoff) {
  j.validate();
  const double d = standoff - j.depth;
  require(d > 0.0, "BadStandoff", "standoff must exceed the sheet depth");

  const size_t w = j.jx.width;
  const size_t h = j.jx.height;
  const size_t mw = 2 * w;
  const size_t mh = 2 * h;
  const double pitch = j.jx.pitch;

  std::vector<detail::cplx> jx(mw * mh), jy(mw * mh);
  for (size_t y = 0; y < h; ++y)
    for (size_t x = 0; x < w; ++x) {
      jx[y * mw + x] = j.jx.data[y * w + x];
      jy[y * mw + x] = j.jy.data[y * w + x];
    }
  detail::fft2d(jx, mw, mh, false);
  detail::fft2d(jy, mw, mh, false);

  std::vector<detail::cplx> bx(mw * mh), by(mw * mh), bz(mw * mh);
  const detail::SpectralGrid grid{mw, mh, pitch};
  for (size_t yy = 0; yy < mh; ++yy) {
    const double ky = grid.ky(yy);
    for (size_t xx = 0; xx < mw; ++xx) {
      const double kx = grid.kx(xx);
      const double k = std::hypot(kx, ky);
      const size_t idx = yy * mw + xx;
      if (k == 0.0) continue;  // DC of B pinned to zero
      const double common = 0.5 * k_mu0 * std::exp(-k * d);
      bx[idx] = common * jy[idx];
      by[idx] = -common * jx[idx];
      bz[idx] = common * (detail::cplx(0.0, 1.0) / k) * (kx * jy[idx] - ky * jx[idx]);
    }
  }
  detail::fft2d(bx, mw, mh, true);
  detail::fft2d(by, mw, mh, true);
  detail::fft2d(bz, mw, mh, true);

  VectorFieldMap out = VectorFieldMap::zeros(static_cast<uint32_t>(w),
                                             static_cast<uint32_t>(h), pitch,
                                             standoff);
  for (size_t y = 0; y < h; ++y)
    for (size_t x = 0; x < w; ++x) {
      out.bx.data[y * w + x] = bx[y * mw + x].real();
      out.by.data[y * w + x] = by[y * mw + x].real();
      out.bz.data[y * w + x] = bz[y * mw + x].real();
    }
  return out;
}

struct InversionConfig {
  std::string window = "hann";
  double cutoff_wavenumber = 0.0;  // rad/m; 0 selects the auto rule
  int pad_factor = 2;
  bool assume_divergence_free = true;
  int taper_px = 8;  // Hann edge ramp before transforming

  void validate() const {
    require(window == "hann", "InvalidConfig", "unsupported window kind");
    require(pad_factor >= 1, "InvalidConfig", "pad factor must be >= 1");
    require(assume_divergence_free, "InvalidConfig",
            "only the divergence-free stream-function route is implemented");
  }
};

namespace detail {

// Auto cutoff: cap the e^{+kd} amplification at 1/eps, with eps the
// noise-to-peak ratio estimated from the border frame (MAD-based sigma).
inline double auto_cutoff(const FieldMap& bz, double d) {
  const double nyquist = k_pi / bz.pitch;
  std::vector<double> border;
  border.reserve(2 * (bz.width + bz.height));
  for (uint32_t x = 0; x < bz.width; ++x) {
    border.push_back(bz.at(x, 0));
    if (bz.height > 1) border.push_back(bz.at(x, bz.height - 1));
  }
  for (uint32_t y = 1; y + 1 < bz.height; ++y) {
    border.push_back(bz.at(0, y));
    if (bz.width > 1) border.push_back(bz.at(bz.width - 1, y));
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  const double m = median(border);
  for (auto& v : border) v = std::abs(v - m);
  const double sigma = 1.4826 * median(border);
  const double peak = bz.max_abs();
  if (sigma <= 0.0 || peak <= 0.0) return nyquist;
  const double eps = sigma / peak;
  if (eps >= 1.0) return nyquist;
  const double k_star = std::log(1.0 / eps) / d;
  return std::min(nyquist, k_star);
}

// d/dx with central differences inside, one-sided at borders; the same
// stencil the divergence diagnostic uses, so mixed derivatives commute
// exactly and stream-function output stays divergence-free to rounding.
inline FieldMap ddx(const FieldMap& f) {
  FieldMap out = f;
  const double inv2p = 1.0 / (2.0 * f.pitch);
  const double invp = 1.0 / f.pitch;
  for (uint32_t y = 0; y < f.height; ++y) {
    for (uint32_t x = 0; x < f.width; ++x) {
      double v;
      if (f.width == 1)
        v = 0.0;
      else if (x == 0)
        v = (f.at(1, y) - f.at(0, y)) * invp;
      else if (x == f.width - 1)
        v = (f.at(x, y) - f.at(x - 1, y)) * invp;
      else
        v = (f.at(x + 1, y) - f.at(x - 1, y)) * inv2p;
      out.at(x, y) = v;
    }
  }
  return out;
}

inline FieldMap ddy(const FieldMap& f) {
  FieldMap out = f;
  const double inv2p = 1.0 / (2.0 * f.pitch);
  const double invp = 1.0 / f.pitch;
  for (uint32_t y = 0; y < f.height; ++y) {
    for (uint32_t x = 0; x < f.width; ++x) {
      double v;
      if (f.height == 1)
        v = 0.0;
      else if (y == 0)
        v = (f.at(x, 1) - f.at(x, 0)) * invp;
      else if (y == f.height - 1)
        v = (f.at(x, y) - f.at(x, y - 1)) * invp;
      else
        v = (f.at(x, y + 1) - f.at(x, y - 1)) * inv2p;
      out.at(x, y) = v;
    }
  }
  return out;
}

}  // namespace detail

// Inverse problem: recover the sheet current from Bz alone. Taper the map
// edges, zero-pad, recover the stream function g(k) = (2/mu0) e^{+kd}
// Bz(k)/k under a Hann rolloff up to the cutoff, zero DC, transform back,
// crop, and differentiate g with the shared discrete stencils. The result
// is divergence-free by construction.
inline CurrentDensityMap invert_bz(const FieldMap& bz, double depth,
                                   const InversionConfig& config = {}) {
  bz.validate();
  config.validate();
  const double d = bz.standoff - depth;
  require(d > 0.0, "BadStandoff", "map standoff must exceed the source depth");
  const double nyquist = k_pi / bz.pitch;
  double cutoff = config.cutoff_wavenumber;
  if (cutoff <= 0.0)
    cutoff = detail::auto_cutoff(bz, d);
  else
    require(cutoff <= nyquist * (1.0 + 1e-12), "CutoffAboveNyquist",
            "cutoff wavenumber beyond pi/pitch");

  const size_t w = bz.width;
  const size_t h = bz.height;
  const size_t mw = static_cast<size_t>(config.pad_factor) * w;
  const size_t mh = static_cast<size_t>(config.pad_factor) * h;

  // Hann edge ramp over taper_px border pixels, both axes.
  std::vector<double> tapered = bz.data;
  const int t_px = std::min<int>(config.taper_px, static_cast<int>(std::min(w, h) / 2));
  if (t_px > 0) {
    auto ramp = [&](double dist) {
      if (dist >= t_px) return 1.0;
      return 0.5 - 0.5 * std::cos(k_pi * (dist + 0.5) / t_px);
    };
    for (size_t y = 0; y < h; ++y)
      for (size_t x = 0; x < w; ++x) {
        const double dx = std::min<double>(x, w - 1 - x);
        const double dy = std::min<double>(y, h - 1 - y);
        tapered[y * w + x] *= ramp(dx) * ramp(dy);
      }
  }

  std::vector<detail::cplx> g(mw * mh, detail::cplx(0.0, 0.0));
  for (size_t y = 0; y < h; ++y)
    for (size_t x = 0; x < w; ++x) g[y * mw + x] = tapered[y * w + x];
  detail::fft2d(g, mw, mh, false);

  const detail::SpectralGrid grid{mw, mh, bz.pitch};
  for (size_t yy = 0; yy < mh; ++yy) {
    const double ky = grid.ky(yy);
    for (size_t xx = 0; xx < mw; ++xx) {
      const double kx = grid.kx(xx);
      const double k = std::hypot(kx, ky);
      const size_t idx = yy * mw + xx;
      if (k == 0.0 || k > cutoff) {
        g[idx] = 0.0;
        continue;
      }
      const double window = std::cos(k_pi * k / (2.0 * cutoff));
      const double gain = (2.0 / k_mu0) * std::exp(k * d) / k * window * window;
      g[idx] *= gain;
    }
  }
  detail::fft2d(g, mw, mh, true);

  FieldMap stream = FieldMap::zeros(static_cast<uint32_t>(w), static_cast<uint32_t>(h),
                                    bz.pitch, 0.0, "1");
  for (size_t y = 0; y < h; ++y)
    for (size_t x = 0; x < w; ++x) stream.data[y * w + x] = g[y * mw + x].real();

  CurrentDensityMap out;
  out.jx = detail::ddy(stream);
  out.jy = detail::ddx(stream);
  for (auto& v : out.jy.data) v = -v;
  out.jx.unit = "A/m";
  out.jy.unit = "A/m";
  out.jx.standoff = 0.0;
  out.jy.standoff = 0.0;
  out.depth = depth;
  out.cutoff_wavenumber = cutoff;
  out.window_kind = config.window;
  return out;
}

// Diagnostic for the divergence-free assumption: dJx/dx + dJy/dy with the
// shared central/one-sided stencils.
inline FieldMap divergence(const CurrentDensityMap& j) {
  j.validate();
  FieldMap dx = detail::ddx(j.jx);
  const FieldMap dy = detail::ddy(j.jy);
  for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dy.data[i];
  dx.unit = "A/m^2";
  dx.standoff = j.depth;
  return dx;
}

struct DepthEstimate {
  double depth_m = 0.0;     // sensor-to-wire distance
  double position_m = 0.0;  // lateral wire position x0
  double current_a = 0.0;
  double residual = 0.0;    // residual RMS relative to profile RMS
};

struct DepthConfig {
  int multi_starts = 5;
  double residual_threshold = 0.5;  // relative; above this: not wire-like
  int max_iterations = 200;
};

// Fits the analytic straight-wire Bz profile
//   f(x) = mu0 I / (2 pi) * (x - x0) / ((x - x0)^2 + d^2)
// to the column-averaged profile over (x0, d, I), multi-started over depths
// log-spaced in [pitch, 50 pitch]. The wire is assumed to run along y.
inline DepthEstimate estimate_depth(const FieldMap& bz, const DepthConfig& config = {}) {
  bz.validate();
  require(bz.width >= 8, "InvalidMap", "profile too short for a wire fit");

  const size_t n = bz.width;
  std::vector<double> profile(n, 0.0);
  for (uint32_t x = 0; x < bz.width; ++x) {
    double s = 0.0;
    for (uint32_t y = 0; y < bz.height; ++y) s += bz.at(x, y);
    profile[x] = s / bz.height;
  }
  std::vector<double> xs(n);
  for (size_t i = 0; i < n; ++i) xs[i] = bz.x_at(static_cast<uint32_t>(i));

  double mean = 0.0;
  for (double v : profile) mean += v;
  mean /= static_cast<double>(n);
  double profile_rms = 0.0;
  for (double v : profile) profile_rms += (v - mean) * (v - mean);
  profile_rms = std::sqrt(profile_rms / static_cast<double>(n));
  require(profile_rms > 0.0, "NoWireFeature", "flat map has no wire feature");

  size_t i_max = 0, i_min = 0;
  for (size_t i = 0; i < n; ++i) {
    if (profile[i] > profile[i_max]) i_max = i;
    if (profile[i] < profile[i_min]) i_min = i;
  }
  const double amp = 0.5 * (profile[i_max] - profile[i_min]);
  const double x0_init = 0.5 * (xs[i_max] + xs[i_min]);
  const double i_sign = xs[i_max] > xs[i_min] ? 1.0 : -1.0;

  const double c = k_mu0 / (2.0 * k_pi);
  auto eval = [&](const std::vector<double>& p, std::vector<double>& r,
                  std::vector<double>& jac) {
    const double x0 = p[0], dd = p[1], cur = p[2];
    for (size_t m = 0; m < n; ++m) {
      const double xi = xs[m] - x0;
      const double den = xi * xi + dd * dd;
      const double f = c * cur * xi / den;
      r[m] = profile[m] - f;
      // r = data - f, so dr/dp = -df/dp
      jac[m * 3 + 0] = -c * cur * (xi * xi - dd * dd) / (den * den);
      jac[m * 3 + 1] = 2.0 * c * cur * xi * dd / (den * den);
      jac[m * 3 + 2] = -c * xi / den;
    }
  };
  auto clamp = [&](std::vector<double>& p) {
    p[1] = std::clamp(std::abs(p[1]), bz.pitch / 10.0, 200.0 * bz.pitch * n);
  };

  DepthEstimate best;
  double best_rms = std::numeric_limits<double>::infinity();
  bool any = false;
  const double d_lo = bz.pitch;
  const double d_hi = 50.0 * bz.pitch;
  for (int s = 0; s < config.multi_starts; ++s) {
    const double frac = config.multi_starts == 1
                            ? 0.0
                            : static_cast<double>(s) / (config.multi_starts - 1);
    const double d0 = d_lo * std::pow(d_hi / d_lo, frac);
    std::vector<double> params = {x0_init, d0,
                                  i_sign * amp * 4.0 * k_pi * d0 / k_mu0};
    const std::vector<double> scale = {bz.pitch, bz.pitch,
                                       std::abs(params[2]) + 1e-12};
    detail::LmOptions opt;
    opt.max_iterations = config.max_iterations;
    opt.tol = 1e-10;
    const auto lm = detail::levenberg_marquardt(params, n, eval, clamp, scale, opt);
    if (!std::isfinite(lm.rms)) continue;
    any = true;
    if (lm.rms < best_rms) {
      best_rms = lm.rms;
      best.depth_m = std::abs(params[1]);
      best.position_m = params[0];
      best.current_a = params[2];
      best.residual = lm.rms / profile_rms;
    }
  }
  require(any, "NoConvergence", "wire profile fit did not converge");
  require(best.residual <= config.residual_threshold, "NoWireFeature",
          "residual too high: map does not look like a straight wire");
  return best;
}

}  // namespace mci
