#pragma once

// Inverse of the NV forward model: joint Lorentzian fits per pixel,
// resonance-to-axis assignment, and the 3x3 linear solve back to a vector
// field. Pixels whose fit fails or whose dip assignment is ambiguous are
// masked invalid rather than guessed at or inpainted; downstream consumers
// receive the mask.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mci/common.hpp"
#include "mci/field_map.hpp"
#include "mci/levmar.hpp"
#include "mci/nv_model.hpp"

namespace mci {

struct FitConfig {
  double dip_threshold = 0.3;      // fraction of expected contrast
  int max_iterations = 100;
  double convergence_tol = 1e-8;   // relative parameter change
  double merge_tolerance_hz = 0.0; // 0 -> linewidth / 2
  // A fit whose residual RMS stays above max(10 * noise sigma, this floor)
  // did not explain the data and is rejected.
  double quality_floor = 1e-6;

  double merge_tolerance(const LineShapeParams& shape) const {
    return merge_tolerance_hz > 0.0 ? merge_tolerance_hz
                                    : shape.linewidth_fwhm_hz / 2.0;
  }

  void validate() const {
    require(dip_threshold > 0.0 && dip_threshold < 1.0, "InvalidFitConfig",
            "dip threshold must lie in (0,1)");
    require(max_iterations > 0 && convergence_tol > 0.0, "InvalidFitConfig",
            "bad iteration limits");
  }
};

struct FittedDip {
  double center_hz = 0.0;
  double fwhm_hz = 0.0;
  double contrast = 0.0;
  double residual = 0.0;  // RMS of the joint fit this dip belongs to
};

// Joint damped-least-squares fit of one Lorentzian per expected dip.
// Dips are initialized at their predicted positions and refined together;
// centers come back sorted ascending.
inline std::vector<FittedDip> fit_spectrum(std::span<const double> freqs,
                                           std::span<const double> values,
                                           std::span<const double> expected,
                                           const LineShapeParams& shape,
                                           const FitConfig& config = {}) {
  shape.validate();
  config.validate();
  require(freqs.size() == values.size() && freqs.size() >= 8, "InvalidSpectrum",
          "frequency/value arrays mismatched or too short");
  for (size_t i = 1; i < freqs.size(); ++i)
    require(freqs[i] > freqs[i - 1], "InvalidSpectrum",
            "frequency axis not strictly increasing");
  require(!expected.empty(), "InvalidSpectrum", "no expected dip positions");
  const double df = (freqs.back() - freqs.front()) / double(freqs.size() - 1);
  require(shape.linewidth_fwhm_hz >= 4.0 * df, "InvalidSpectrum",
          "sweep too coarse: need >= 4 samples per linewidth");

  const double merge_tol = config.merge_tolerance(shape);
  for (size_t i = 0; i < expected.size(); ++i)
    for (size_t j = i + 1; j < expected.size(); ++j)
      require(std::abs(expected[i] - expected[j]) >= merge_tol,
              "DegenerateResonances",
              "two expected dips closer than the merge tolerance");

  // A dip must actually be visible somewhere.
  const double dip_level = 1.0 - config.dip_threshold * shape.contrast;
  bool found = false;
  for (size_t i = 1; i + 1 < values.size() && !found; ++i)
    found = values[i] <= values[i - 1] && values[i] <= values[i + 1] &&
            values[i] < dip_level;
  require(found, "NoDipsFound", "no local minimum below the dip threshold");

  const size_t n_dips = expected.size();
  const size_t n_par = 3 * n_dips;  // (center, fwhm, contrast) per dip
  std::vector<double> params(n_par);
  for (size_t d = 0; d < n_dips; ++d) {
    params[3 * d + 0] = expected[d];
    params[3 * d + 1] = shape.linewidth_fwhm_hz;
    params[3 * d + 2] = shape.contrast;
  }

  const double span_hz = freqs.back() - freqs.front();
  auto eval = [&](const std::vector<double>& p, std::vector<double>& r,
                  std::vector<double>& jac) {
    for (size_t m = 0; m < freqs.size(); ++m) {
      double model = 1.0;
      for (size_t d = 0; d < n_dips; ++d) {
        const double c = p[3 * d + 2];
        const double w = p[3 * d + 1];
        const double u = 2.0 * (freqs[m] - p[3 * d + 0]) / w;
        const double L = 1.0 / (1.0 + u * u);
        model -= c * L;
        // residual = data - model, so dr/dp = -dmodel/dp
        jac[m * n_par + 3 * d + 0] = 4.0 * c * u * L * L / w;
        jac[m * n_par + 3 * d + 1] = 2.0 * c * u * u * L * L / w;
        jac[m * n_par + 3 * d + 2] = L;
      }
      r[m] = values[m] - model;
    }
  };
  auto clamp = [&](std::vector<double>& p) {
    for (size_t d = 0; d < n_dips; ++d) {
      p[3 * d + 0] = std::clamp(p[3 * d + 0], freqs.front() - span_hz,
                                freqs.back() + span_hz);
      p[3 * d + 1] = std::clamp(p[3 * d + 1], 2.0 * df, 2.0 * span_hz);
      p[3 * d + 2] = std::clamp(p[3 * d + 2], 1e-9, 1.0);
    }
  };
  std::vector<double> scale(n_par);
  for (size_t d = 0; d < n_dips; ++d) {
    scale[3 * d + 0] = shape.linewidth_fwhm_hz;
    scale[3 * d + 1] = shape.linewidth_fwhm_hz;
    scale[3 * d + 2] = shape.contrast;
  }

  detail::LmOptions opt;
  opt.max_iterations = config.max_iterations;
  opt.tol = config.convergence_tol;
  const auto lm = detail::levenberg_marquardt(params, freqs.size(), eval, clamp,
                                              scale, opt);

  const double rms_gate =
      std::max(10.0 * shape.photon_noise_sigma, config.quality_floor);
  require(lm.rms <= rms_gate, "NoConvergence",
          "fit residual above 10x the noise floor");

  std::vector<FittedDip> dips(n_dips);
  for (size_t d = 0; d < n_dips; ++d)
    dips[d] = {params[3 * d + 0], params[3 * d + 1], params[3 * d + 2], lm.rms};
  std::sort(dips.begin(), dips.end(),
            [](const FittedDip& a, const FittedDip& b) {
              return a.center_hz < b.center_hz;
            });
  return dips;
}

// Exact 3x3 solve of A B = p where the rows of A are the used unit axes.
inline Vec3 solve_vector(const std::array<double, 3>& projections,
                         const NVFrame& frame) {
  frame.validate_geometry();
  const Vec3 a = frame.axes[frame.used_axes[0]];
  const Vec3 b = frame.axes[frame.used_axes[1]];
  const Vec3 c = frame.axes[frame.used_axes[2]];
  const double det = a.dot(b.cross(c));
  require(std::abs(det) >= 0.1, "SingularAxes",
          "used-axes matrix close to singular");
  // Cramer's rule, columns replaced by the projection vector.
  const Vec3 p{projections[0], projections[1], projections[2]};
  auto det3 = [](const Vec3& r0, const Vec3& r1, const Vec3& r2) {
    return r0.dot(r1.cross(r2));
  };
  const double bx = det3({p.x, a.y, a.z}, {p.y, b.y, b.z}, {p.z, c.y, c.z});
  const double by = det3({a.x, p.x, a.z}, {b.x, p.y, b.z}, {c.x, p.z, c.z});
  const double bz = det3({a.x, a.y, p.x}, {b.x, b.y, p.y}, {c.x, c.y, p.z});
  return Vec3{bx, by, bz} / det;
}

struct ReconstructionResult {
  VectorFieldMap field;        // signal field, bias removed
  std::vector<uint8_t> valid;  // 1 = pixel reconstructed, 0 = masked
  size_t valid_count = 0;

  FieldMap mask_map() const {
    FieldMap m = FieldMap::zeros(field.bx.width, field.bx.height, field.bx.pitch,
                                 field.bx.standoff, "1");
    for (size_t i = 0; i < valid.size(); ++i) m.data[i] = valid[i] ? 1.0 : 0.0;
    return m;
  }
};

namespace detail {

// Greedy nearest-first matching of fitted centers onto predicted (axis,
// branch) slots. Ambiguous matches (two candidate slots at nearly the same
// distance) invalidate the pixel instead of guessing.
inline bool assign_dips(const std::vector<FittedDip>& dips,
                        const std::array<double, 8>& predicted,
                        double merge_tol, double fwhm,
                        std::array<double, 8>& center_of_slot) {
  struct Pair {
    double dist;
    int dip, slot;
  };
  std::vector<Pair> pairs;
  pairs.reserve(64);
  for (int i = 0; i < 8; ++i)
    for (int s = 0; s < 8; ++s)
      pairs.push_back({std::abs(dips[i].center_hz - predicted[s]), i, s});
  std::sort(pairs.begin(), pairs.end(),
            [](const Pair& a, const Pair& b) { return a.dist < b.dist; });

  std::array<bool, 8> dip_used{}, slot_used{};
  int assigned = 0;
  for (const auto& p : pairs) {
    if (dip_used[p.dip] || slot_used[p.slot]) continue;
    // Ambiguity: another free slot at nearly the same distance.
    for (int s = 0; s < 8; ++s) {
      if (s == p.slot || slot_used[s]) continue;
      if (std::abs(std::abs(dips[p.dip].center_hz - predicted[s]) - p.dist) <
          merge_tol)
        return false;
    }
    if (p.dist > std::max(2.0 * fwhm, merge_tol)) return false;  // landed nowhere
    dip_used[p.dip] = true;
    slot_used[p.slot] = true;
    center_of_slot[p.slot] = dips[p.dip].center_hz;
    ++assigned;
  }
  return assigned == 8;
}

}  // namespace detail

// Per pixel: fit all eight predicted dips, assign fitted centers to (axis,
// branch) slots, convert each used-axis pair to a signed projection using
// the bias's sign, solve the 3x3 system and remove the bias. Any per-pixel
// failure masks that pixel; there is no interpolation.
inline ReconstructionResult reconstruct_map(const ODMRCube& cube,
                                            const NVFrame& frame,
                                            const NVConstants& constants,
                                            const LineShapeParams& shape,
                                            const FitConfig& config = {},
                                            double standoff = 0.0) {
  cube.validate();
  constants.validate();
  shape.validate();
  config.validate();
  frame.validate_for_reconstruction();

  std::array<double, 8> predicted{};
  for (int a = 0; a < 4; ++a) {
    const auto [fm, fp] = resonance_pair(frame.bias_field, frame.axes[a], constants);
    predicted[2 * a] = fm;
    predicted[2 * a + 1] = fp;
  }

  ReconstructionResult result;
  result.field = VectorFieldMap::zeros(cube.width, cube.height, cube.pitch, standoff);
  result.valid.assign(cube.n_pixels(), 0);

  const double merge_tol = config.merge_tolerance(shape);
  const double gamma = constants.gyromagnetic_hz_per_t;
  std::vector<uint8_t>& valid = result.valid;
  VectorFieldMap& out = result.field;

  detail::parallel_for(cube.n_pixels(), [&](size_t p) {
    const uint32_t ix = static_cast<uint32_t>(p % cube.width);
    const uint32_t iy = static_cast<uint32_t>(p / cube.width);
    try {
      const auto dips = fit_spectrum(
          std::span<const double>(cube.freqs), cube.spectrum(ix, iy),
          std::span<const double>(predicted.data(), predicted.size()), shape,
          config);
      std::array<double, 8> center_of_slot{};
      require(detail::assign_dips(dips, predicted, merge_tol,
                                  shape.linewidth_fwhm_hz, center_of_slot),
              "AmbiguousAssignment", "dip-to-axis assignment ambiguous");

      std::array<double, 3> projections{};
      for (int u = 0; u < 3; ++u) {
        const int axis = frame.used_axes[u];
        const double f_minus = center_of_slot[2 * axis];
        const double f_plus = center_of_slot[2 * axis + 1];
        const double magnitude = std::abs(f_plus - f_minus) / (2.0 * gamma);
        const double bias_proj = frame.bias_projection(axis);
        const double total = bias_proj < 0.0 ? -magnitude : magnitude;
        const double signal_proj = total - bias_proj;
        require(std::abs(bias_proj) >=
                    frame.margin_factor * std::abs(signal_proj),
                "BiasMarginViolated",
                "signal projection exceeds the bias dominance margin");
        projections[u] = total;
      }
      const Vec3 b_total = solve_vector(projections, frame);
      const Vec3 b_signal = b_total - frame.bias_field;
      out.bx.at(ix, iy) = b_signal.x;
      out.by.at(ix, iy) = b_signal.y;
      out.bz.at(ix, iy) = b_signal.z;
      valid[p] = 1;
    } catch (const Error&) {
      valid[p] = 0;  // masked, field left at zero
    }
  });

  result.valid_count = 0;
  for (uint8_t v : result.valid) result.valid_count += v;
  return result;
}

}  // namespace mci
