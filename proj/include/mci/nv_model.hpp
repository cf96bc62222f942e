#pragma once

// Forward NV physics: orientation geometry, first-order Zeeman resonance
// positions and synthetic ODMR cube generation.
//
// Model: the m_s = 0 -> +-1 transition pair of an orientation with unit
// axis n sits at f = D +- gamma * |B . n|. Only this first-order shift is
// modelled; transverse-field and strain terms are out of scope. Dips are
// unit-peak Lorentzians that combine additively, with the spectrum clamped
// at zero.

#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "mci/common.hpp"
#include "mci/field_map.hpp"

namespace mci {

struct NVConstants {
  double zero_field_splitting_hz = 2.870e9;  // D
  double gyromagnetic_hz_per_t = 28.024e9;   // gamma

  void validate() const {
    require(zero_field_splitting_hz > 0.0 && gyromagnetic_hz_per_t > 0.0,
            "InvalidConstants", "NV constants must be positive");
  }
};

// The four NV orientations of a (100)-cut diamond in the lab frame.
inline std::array<Vec3, 4> tetrahedral_axes() {
  const double s = 1.0 / std::sqrt(3.0);
  return {Vec3{s, s, s}, Vec3{s, -s, -s}, Vec3{-s, s, -s}, Vec3{-s, -s, s}};
}

// Orientation geometry plus the bias field that separates the four
// orientations and fixes projection signs. Reconstruction uses the three
// axes in `used_axes`; the bias projection on each used axis must dominate
// the signal projection by `margin_factor` so the total projection keeps
// the bias's sign (the |.| in the resonance model would otherwise fold it).
struct NVFrame {
  std::array<Vec3, 4> axes = tetrahedral_axes();
  std::array<int, 3> used_axes = {0, 1, 2};
  Vec3 bias_field{};  // T
  double margin_factor = 10.0;

  void validate_geometry() const {
    for (const auto& a : axes)
      require(std::abs(a.norm() - 1.0) <= 1e-12, "InvalidFrame",
              "axis not unit norm");
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j)
        require(std::abs(axes[i].dot(axes[j]) + 1.0 / 3.0) <= 1e-12,
                "InvalidFrame", "axes not tetrahedral");
    for (int u : used_axes)
      require(u >= 0 && u < 4, "InvalidFrame", "used axis index out of range");
    require(used_axes[0] != used_axes[1] && used_axes[0] != used_axes[2] &&
                used_axes[1] != used_axes[2],
            "InvalidFrame", "used axes must be distinct");
  }

  double used_axes_det() const {
    const Vec3 a = axes[used_axes[0]];
    const Vec3 b = axes[used_axes[1]];
    const Vec3 c = axes[used_axes[2]];
    return a.dot(b.cross(c));
  }

  double bias_projection(int axis) const { return bias_field.dot(axes[axis]); }

  // Full invariant needed before a cube may be inverted: well-conditioned
  // axis matrix, mT-range bias, nonzero projection on every used axis.
  void validate_for_reconstruction() const {
    validate_geometry();
    require(std::abs(used_axes_det()) >= 0.1, "SingularAxes",
            "used-axes matrix close to singular");
    const double b = bias_field.norm();
    require(b >= 1e-4 && b <= 1e-1, "BiasOutOfRange",
            "bias magnitude must lie in [1e-4, 1e-1] T for reconstruction");
    for (int u : used_axes)
      require(std::abs(bias_projection(u)) > 0.0, "BiasMarginViolated",
              "bias has zero projection on a used axis");
  }
};

struct LineShapeParams {
  double contrast = 0.02;            // per-dip fractional depth
  double linewidth_fwhm_hz = 8e6;
  double photon_noise_sigma = 0.0;   // i.i.d. gaussian per sample
  uint64_t rng_seed = 0;

  void validate() const {
    require(contrast > 0.0 && contrast <= 0.2, "InvalidLineShape",
            "contrast must lie in (0, 0.2]");
    require(linewidth_fwhm_hz > 0.0, "InvalidLineShape", "linewidth must be > 0");
    require(photon_noise_sigma >= 0.0, "InvalidLineShape", "negative noise sigma");
  }
};

// Unit-peak Lorentzian, FWHM parameterization.
inline double lorentzian_dip(double f, double center, double fwhm) {
  const double u = 2.0 * (f - center) / fwhm;
  return 1.0 / (1.0 + u * u);
}

// f-+ = D -+ gamma |b . axis|, first order only. Even in b -> -b.
inline std::pair<double, double> resonance_pair(const Vec3& b, const Vec3& axis,
                                                const NVConstants& constants = {}) {
  constants.validate();
  const double shift =
      constants.gyromagnetic_hz_per_t * std::abs(b.dot(axis));
  return {constants.zero_field_splitting_hz - shift,
          constants.zero_field_splitting_hz + shift};
}

// Per-pixel sweep over all four orientations. Deterministic for a fixed
// seed: every pixel draws from its own (seed, pixel index) stream, so the
// result does not depend on evaluation order.
inline ODMRCube synthesize_odmr(const VectorFieldMap& field, const NVFrame& frame,
                                const std::vector<double>& freqs,
                                const LineShapeParams& shape,
                                const NVConstants& constants = {}) {
  field.validate();
  frame.validate_geometry();
  shape.validate();
  constants.validate();
  require(freqs.size() >= 8, "SweepTooNarrow", "need at least 8 sweep points");
  for (size_t i = 1; i < freqs.size(); ++i)
    require(freqs[i] > freqs[i - 1], "InvalidSweep",
            "sweep frequencies must increase strictly");

  ODMRCube cube;
  cube.width = field.bx.width;
  cube.height = field.bx.height;
  cube.pitch = field.bx.pitch;
  cube.freqs = freqs;
  cube.spectra.assign(cube.n_pixels() * freqs.size(), 0.0);

  const double f_lo = freqs.front();
  const double f_hi = freqs.back();
  const size_t n_freq = freqs.size();

  detail::parallel_for(cube.n_pixels(), [&](size_t p) {
    const uint32_t ix = static_cast<uint32_t>(p % cube.width);
    const uint32_t iy = static_cast<uint32_t>(p / cube.width);
    const Vec3 b_total = field.at(ix, iy) + frame.bias_field;

    std::array<double, 8> centers{};
    for (int a = 0; a < 4; ++a) {
      const auto [fm, fp] = resonance_pair(b_total, frame.axes[a], constants);
      require(fm >= f_lo && fp <= f_hi, "SweepTooNarrow",
              "resonance outside the sweep window");
      centers[2 * a] = fm;
      centers[2 * a + 1] = fp;
    }

    double* out = cube.spectra.data() + p * n_freq;
    for (size_t k = 0; k < n_freq; ++k) {
      double dip_sum = 0.0;
      for (double c : centers)
        dip_sum += shape.contrast *
                   lorentzian_dip(freqs[k], c, shape.linewidth_fwhm_hz);
      out[k] = std::max(0.0, 1.0 - dip_sum);
    }
    if (shape.photon_noise_sigma > 0.0) {
      detail::Rng rng(detail::stream_seed(shape.rng_seed, p));
      for (size_t k = 0; k < n_freq; ++k) {
        const double v = out[k] + shape.photon_noise_sigma * rng.gaussian();
        out[k] = std::clamp(v, 0.0, 1.2);
      }
    }
  });
  return cube;
}

}  // namespace mci
