#pragma once

// FA-workflow layer: I-V classification, lock-in demodulation with hotspot
// detection, current-path tracing on reconstructed J maps, and the
// defective-vs-reference comparison that produces an anomaly report.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "mci/common.hpp"
#include "mci/field_map.hpp"

namespace mci {

// ---------------------------------------------------------------------------
// Electrical test

struct IVCurve {
  std::vector<std::pair<double, double>> samples;  // (voltage V, current A)

  void validate() const {
    require(samples.size() >= 5, "InvalidCurve", "need at least 5 IV samples");
    for (size_t i = 0; i < samples.size(); ++i) {
      require(std::isfinite(samples[i].first) && std::isfinite(samples[i].second),
              "InvalidCurve", "non-finite IV sample");
      if (i > 0)
        require(samples[i].first > samples[i - 1].first, "InvalidCurve",
                "voltages must increase strictly");
    }
  }
};

struct IVConfig {
  double r2_threshold = 0.999;
  double open_floor_a = 1e-9;
};

enum class IVClass { ShortSuspected, Nominal, Open };

struct IVResult {
  IVClass cls = IVClass::Nominal;
  double resistance_ohm = 0.0;  // meaningful for ShortSuspected
  double r2 = 0.0;
};

inline const char* to_string(IVClass c) {
  switch (c) {
    case IVClass::ShortSuspected: return "ShortSuspected";
    case IVClass::Nominal: return "Nominal";
    case IVClass::Open: return "Open";
  }
  return "?";
}

// Open below the current floor; otherwise least-squares I = V/R + c and
// ShortSuspected when the line explains the curve (R^2 at threshold).
inline IVResult classify_iv(const IVCurve& curve, const IVConfig& config = {}) {
  curve.validate();
  double i_max = 0.0;
  for (const auto& [v, i] : curve.samples) i_max = std::max(i_max, std::abs(i));
  if (i_max < config.open_floor_a) return {IVClass::Open, 0.0, 0.0};

  const double n = static_cast<double>(curve.samples.size());
  double sv = 0.0, si = 0.0, svv = 0.0, svi = 0.0;
  for (const auto& [v, i] : curve.samples) {
    sv += v;
    si += i;
    svv += v * v;
    svi += v * i;
  }
  const double denom = n * svv - sv * sv;
  require(denom > 0.0, "InvalidCurve", "degenerate voltage axis");
  const double slope = (n * svi - sv * si) / denom;
  const double intercept = (si - slope * sv) / n;

  const double i_mean = si / n;
  double ss_res = 0.0, ss_tot = 0.0;
  for (const auto& [v, i] : curve.samples) {
    const double e = i - (slope * v + intercept);
    ss_res += e * e;
    ss_tot += (i - i_mean) * (i - i_mean);
  }
  const double r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;

  if (r2 >= config.r2_threshold && slope > 0.0)
    return {IVClass::ShortSuspected, 1.0 / slope, r2};
  return {IVClass::Nominal, 0.0, r2};
}

// ---------------------------------------------------------------------------
// Lock-in thermography math

struct LockInSeries {
  std::vector<FieldMap> frames;  // time-ordered
  double sample_rate_hz = 0.0;
  double drive_frequency_hz = 0.0;

  void validate() const {
    require(frames.size() >= 2, "InvalidSeries", "need at least 2 frames");
    for (const auto& f : frames) {
      f.validate();
      require(f.coregistered(frames.front()), "GridMismatch",
              "lock-in frames not co-registered");
    }
    require(sample_rate_hz > 2.0 * drive_frequency_hz && drive_frequency_hz > 0.0,
            "InvalidSeries", "sample rate must exceed twice the drive frequency");
    const double duration = static_cast<double>(frames.size()) / sample_rate_hz;
    require(duration * drive_frequency_hz >= 2.0, "TooFewPeriods",
            "need at least 2 full drive periods");
  }
};

// Correlate each pixel against e^{-i 2 pi f t} over the largest whole number
// of drive periods. Phase is reported relative to sin(2 pi f t) in (-pi, pi].
inline std::pair<FieldMap, FieldMap> lockin_demodulate(const LockInSeries& series) {
  series.validate();
  const double fs = series.sample_rate_hz;
  const double f = series.drive_frequency_hz;
  const size_t n_frames = series.frames.size();

  const auto periods = std::floor(static_cast<double>(n_frames) * f / fs + 1e-9);
  size_t window = static_cast<size_t>(std::floor(periods * fs / f + 1e-9));
  window = std::min(window, n_frames);
  require(periods >= 2.0, "TooFewPeriods", "fewer than 2 whole periods sampled");

  const FieldMap& first = series.frames.front();
  FieldMap amplitude = FieldMap::zeros(first.width, first.height, first.pitch,
                                       first.standoff, first.unit);
  FieldMap phase = FieldMap::zeros(first.width, first.height, first.pitch,
                                   first.standoff, "1");

  std::vector<std::complex<double>> reference(window);
  for (size_t k = 0; k < window; ++k) {
    const double ang = -2.0 * k_pi * f * static_cast<double>(k) / fs;
    reference[k] = {std::cos(ang), std::sin(ang)};
  }

  const size_t n_pix = amplitude.size();
  detail::parallel_for(n_pix, [&](size_t p) {
    std::complex<double> acc{0.0, 0.0};
    for (size_t k = 0; k < window; ++k) acc += series.frames[k].data[p] * reference[k];
    const std::complex<double> x = 2.0 * acc / static_cast<double>(window);
    amplitude.data[p] = std::abs(x);
    // arg(i x): zero phase for a pure sine at the drive frequency
    phase.data[p] = std::arg(std::complex<double>(0.0, 1.0) * x);
  });
  return {std::move(amplitude), std::move(phase)};
}

struct HotspotConfig {
  double sigma_threshold = 5.0;
};

struct Hotspot {
  double cx_px = 0.0, cy_px = 0.0;  // intensity-weighted centroid
  double cx_m = 0.0, cy_m = 0.0;
  double peak = 0.0;
  int extent_px = 0;  // connected-component pixel count
};

// Robust detection: noise floor from median + MAD-based sigma (hotspots
// would inflate a mean/stddev estimate), 8-connected components above
// median + sigma_threshold * sigma, reported in descending peak order.
inline std::vector<Hotspot> detect_hotspot(const FieldMap& amplitude,
                                           const HotspotConfig& config = {}) {
  amplitude.validate();
  std::vector<double> v = amplitude.data;
  auto median_of = [](std::vector<double> m) {
    std::sort(m.begin(), m.end());
    const size_t n = m.size();
    return n % 2 ? m[n / 2] : 0.5 * (m[n / 2 - 1] + m[n / 2]);
  };
  const double med = median_of(v);
  for (auto& x : v) x = std::abs(x - med);
  const double sigma = 1.4826 * median_of(v);
  const double threshold = med + config.sigma_threshold * sigma;

  const uint32_t w = amplitude.width;
  const uint32_t h = amplitude.height;
  std::vector<uint8_t> seen(amplitude.size(), 0);
  std::vector<Hotspot> out;

  for (size_t start = 0; start < amplitude.size(); ++start) {
    if (seen[start] || !(amplitude.data[start] > threshold)) continue;
    // flood fill one component
    std::deque<size_t> queue{start};
    seen[start] = 1;
    double wsum = 0.0, cx = 0.0, cy = 0.0, peak = 0.0;
    int count = 0;
    while (!queue.empty()) {
      const size_t q = queue.front();
      queue.pop_front();
      const auto qx = static_cast<int64_t>(q % w);
      const auto qy = static_cast<int64_t>(q / w);
      const double value = amplitude.data[q];
      const double excess = value - med;
      wsum += excess;
      cx += excess * static_cast<double>(qx);
      cy += excess * static_cast<double>(qy);
      peak = std::max(peak, value);
      ++count;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int64_t nx = qx + dx;
          const int64_t ny = qy + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const size_t nq = static_cast<size_t>(ny) * w + static_cast<size_t>(nx);
          if (!seen[nq] && amplitude.data[nq] > threshold) {
            seen[nq] = 1;
            queue.push_back(nq);
          }
        }
    }
    Hotspot hs;
    hs.cx_px = cx / wsum;
    hs.cy_px = cy / wsum;
    hs.cx_m = (hs.cx_px + 0.5) * amplitude.pitch;
    hs.cy_m = (hs.cy_px + 0.5) * amplitude.pitch;
    hs.peak = peak;
    hs.extent_px = count;
    out.push_back(hs);
  }
  std::sort(out.begin(), out.end(),
            [](const Hotspot& a, const Hotspot& b) { return a.peak > b.peak; });
  return out;
}

// ---------------------------------------------------------------------------
// Current-path tracing

struct TraceConfig {
  double step_px = 0.5;
  int max_steps = 10000;
  double stop_fraction = 0.05;  // of max |J|
};

enum class StopReason { LeftGrid, Terminated, MaxSteps, Loop };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::LeftGrid: return "LeftGrid";
    case StopReason::Terminated: return "Terminated";
    case StopReason::MaxSteps: return "MaxSteps";
    case StopReason::Loop: return "Loop";
  }
  return "?";
}

struct TracedPath {
  std::vector<std::array<double, 2>> points_px;  // fractional pixel coords
  StopReason reason = StopReason::MaxSteps;      // summary (see below)
  StopReason forward_reason = StopReason::MaxSteps;
  StopReason backward_reason = StopReason::MaxSteps;
};

namespace detail {

struct JSampler {
  const CurrentDensityMap& j;

  // Bilinear sample at fractional pixel coords, clamped to the grid.
  std::array<double, 2> operator()(double fx, double fy) const {
    const auto w = static_cast<int64_t>(j.jx.width);
    const auto h = static_cast<int64_t>(j.jx.height);
    fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
    fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
    const auto x0 = std::min(static_cast<int64_t>(fx), w - 2 >= 0 ? w - 2 : 0);
    const auto y0 = std::min(static_cast<int64_t>(fy), h - 2 >= 0 ? h - 2 : 0);
    const double tx = fx - static_cast<double>(x0);
    const double ty = fy - static_cast<double>(y0);
    auto lerp = [&](const std::vector<double>& d) {
      const size_t i00 = static_cast<size_t>(y0) * w + x0;
      const size_t i10 = i00 + (w > 1 ? 1 : 0);
      const size_t i01 = i00 + (h > 1 ? static_cast<size_t>(w) : 0);
      const size_t i11 = i01 + (w > 1 ? 1 : 0);
      return (1 - tx) * (1 - ty) * d[i00] + tx * (1 - ty) * d[i10] +
             (1 - tx) * ty * d[i01] + tx * ty * d[i11];
    };
    return {lerp(j.jx.data), lerp(j.jy.data)};
  }

  double magnitude(double fx, double fy) const {
    const auto v = (*this)(fx, fy);
    return std::hypot(v[0], v[1]);
  }
};

inline bool in_grid(const CurrentDensityMap& j, double fx, double fy) {
  return fx >= 0.0 && fy >= 0.0 && fx <= j.jx.width - 1.0 && fy <= j.jx.height - 1.0;
}

}  // namespace detail

// Bidirectional RK4 streamline of the unit field J/|J| from the seed.
// Stops on |J| below stop_fraction * max|J| (Terminated, the short
// signature), on leaving the grid, on the step budget, or on closing a loop
// (returning within step/2 of the start). The combined path runs
// upstream-end to downstream-end through the seed; the summary reason
// prefers Loop, then Terminated, then LeftGrid, then MaxSteps.
inline TracedPath trace_current(const CurrentDensityMap& j,
                                std::array<double, 2> seed_px,
                                const TraceConfig& config = {}) {
  j.validate();
  require(config.step_px > 0.0 && config.max_steps > 0 && config.stop_fraction > 0.0,
          "InvalidConfig", "bad trace configuration");
  const detail::JSampler sample{j};
  const double threshold = config.stop_fraction * j.max_norm();
  require(threshold > 0.0, "InvalidMap", "current density map is identically zero");
  require(detail::in_grid(j, seed_px[0], seed_px[1]), "SeedBelowThreshold",
          "seed outside the grid");
  require(sample.magnitude(seed_px[0], seed_px[1]) >= threshold,
          "SeedBelowThreshold", "|J| at seed below the stop threshold");

  auto direction = [&](double fx, double fy, double sign) -> std::array<double, 2> {
    const auto v = sample(fx, fy);
    const double m = std::hypot(v[0], v[1]);
    if (m < 1e-300) return {0.0, 0.0};
    return {sign * v[0] / m, sign * v[1] / m};
  };

  auto integrate = [&](double sign, std::vector<std::array<double, 2>>& pts)
      -> StopReason {
    double x = seed_px[0];
    double y = seed_px[1];
    const double h = config.step_px;
    for (int step = 0; step < config.max_steps; ++step) {
      const auto k1 = direction(x, y, sign);
      const auto k2 = direction(x + 0.5 * h * k1[0], y + 0.5 * h * k1[1], sign);
      const auto k3 = direction(x + 0.5 * h * k2[0], y + 0.5 * h * k2[1], sign);
      const auto k4 = direction(x + h * k3[0], y + h * k3[1], sign);
      const double nx = x + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]);
      const double ny = y + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]);
      if (!detail::in_grid(j, nx, ny)) {
        pts.push_back({std::clamp(nx, 0.0, j.jx.width - 1.0),
                       std::clamp(ny, 0.0, j.jx.height - 1.0)});
        return StopReason::LeftGrid;
      }
      pts.push_back({nx, ny});
      if (sample.magnitude(nx, ny) < threshold) return StopReason::Terminated;
      if (step >= 4 && std::hypot(nx - seed_px[0], ny - seed_px[1]) < 0.5 * h)
        return StopReason::Loop;
      x = nx;
      y = ny;
    }
    return StopReason::MaxSteps;
  };

  TracedPath path;
  std::vector<std::array<double, 2>> forward;
  path.forward_reason = integrate(+1.0, forward);
  if (path.forward_reason == StopReason::Loop) {
    path.points_px.push_back(seed_px);
    path.points_px.insert(path.points_px.end(), forward.begin(), forward.end());
    path.reason = path.backward_reason = StopReason::Loop;
    return path;
  }
  std::vector<std::array<double, 2>> backward;
  path.backward_reason = integrate(-1.0, backward);

  path.points_px.assign(backward.rbegin(), backward.rend());
  path.points_px.push_back(seed_px);
  path.points_px.insert(path.points_px.end(), forward.begin(), forward.end());

  auto rank = [](StopReason r) {
    switch (r) {
      case StopReason::Loop: return 3;
      case StopReason::Terminated: return 2;
      case StopReason::LeftGrid: return 1;
      case StopReason::MaxSteps: return 0;
    }
    return 0;
  };
  path.reason = rank(path.forward_reason) >= rank(path.backward_reason)
                    ? path.forward_reason
                    : path.backward_reason;
  return path;
}

// ---------------------------------------------------------------------------
// Device comparison

enum class AnomalyKind { Termination, Kink, MissingBranch, None };

inline const char* to_string(AnomalyKind k) {
  switch (k) {
    case AnomalyKind::Termination: return "Termination";
    case AnomalyKind::Kink: return "Kink";
    case AnomalyKind::MissingBranch: return "MissingBranch";
    case AnomalyKind::None: return "None";
  }
  return "?";
}

struct CompareConfig {
  TraceConfig trace;
  double kink_angle_deg = 30.0;
  int kink_sustain_steps = 3;
  double ridge_fraction = 0.3;    // of max |J_ref|, "above threshold"
  double absent_fraction = 0.15;  // of max |J_ref|, "absent in dut"
  double window_px = 8.0;         // search radius around the divergence
};

struct AnomalyReport {
  AnomalyKind kind = AnomalyKind::None;
  std::array<double, 2> location_px{0.0, 0.0};
  std::array<double, 2> location_m{0.0, 0.0};
  double confidence = 0.0;
  double peak_differential_a_per_m = 0.0;
  std::vector<std::array<double, 2>> ref_path_m;
  std::vector<std::array<double, 2>> dut_path_m;
  std::string termination_reason;
};

namespace detail {

// Resample a pixel-space polyline at uniform arc steps.
inline std::vector<std::array<double, 2>> resample_path(
    const std::vector<std::array<double, 2>>& pts, double ds) {
  std::vector<std::array<double, 2>> out;
  if (pts.empty()) return out;
  out.push_back(pts.front());
  double carried = 0.0;
  for (size_t i = 0; i + 1 < pts.size(); ++i) {
    const double segx = pts[i + 1][0] - pts[i][0];
    const double segy = pts[i + 1][1] - pts[i][1];
    const double seg = std::hypot(segx, segy);
    if (seg <= 0.0) continue;
    double t = ds - carried;
    while (t <= seg) {
      out.push_back({pts[i][0] + segx * t / seg, pts[i][1] + segy * t / seg});
      t += ds;
    }
    carried = seg - (t - ds);
  }
  return out;
}

inline std::array<double, 2> tangent_at(
    const std::vector<std::array<double, 2>>& pts, size_t i) {
  const size_t a = i > 0 ? i - 1 : i;
  const size_t b = i + 1 < pts.size() ? i + 1 : i;
  const double dx = pts[b][0] - pts[a][0];
  const double dy = pts[b][1] - pts[a][1];
  const double n = std::hypot(dx, dy);
  return n > 0.0 ? std::array<double, 2>{dx / n, dy / n}
                 : std::array<double, 2>{0.0, 0.0};
}

inline double angle_between(const std::array<double, 2>& a,
                            const std::array<double, 2>& b) {
  const double dot = std::clamp(a[0] * b[0] + a[1] * b[1], -1.0, 1.0);
  return std::acos(dot);
}

}  // namespace detail

// Trace both devices from the common seed and classify the first point of
// disagreement. MissingBranch needs a reference ridge near the divergence
// that is absent in the DUT and points away from the DUT's heading (a
// parallel continuation is a Termination, not a missing branch). Kink
// requires the paths to stay paired while their directions disagree for a
// sustained run. Comparison happens on current-density maps: they are
// standoff-deconvolved, and path statements are current statements.
inline AnomalyReport compare_paths(const CurrentDensityMap& j_ref,
                                   const CurrentDensityMap& j_dut,
                                   std::array<double, 2> seed_px,
                                   const CompareConfig& config = {}) {
  j_ref.validate();
  j_dut.validate();
  require(j_ref.jx.coregistered(j_dut.jx), "GridMismatch",
          "reference and dut grids differ");
  const double pitch = j_ref.jx.pitch;

  const TracedPath ref = trace_current(j_ref, seed_px, config.trace);
  const TracedPath dut = trace_current(j_dut, seed_px, config.trace);

  AnomalyReport report;
  report.termination_reason = to_string(dut.reason);
  auto to_m = [&](const std::vector<std::array<double, 2>>& px) {
    std::vector<std::array<double, 2>> m;
    m.reserve(px.size());
    for (const auto& p : px) m.push_back({(p[0] + 0.5) * pitch, (p[1] + 0.5) * pitch});
    return m;
  };
  report.ref_path_m = to_m(ref.points_px);
  report.dut_path_m = to_m(dut.points_px);

  double peak_diff = 0.0;
  for (size_t i = 0; i < j_ref.jx.data.size(); ++i) {
    const double mr = std::hypot(j_ref.jx.data[i], j_ref.jy.data[i]);
    const double md = std::hypot(j_dut.jx.data[i], j_dut.jy.data[i]);
    peak_diff = std::max(peak_diff, std::abs(md - mr));
  }
  report.peak_differential_a_per_m = peak_diff;

  const detail::JSampler sample_ref{j_ref};
  const detail::JSampler sample_dut{j_dut};
  auto finish = [&](AnomalyKind kind, std::array<double, 2> loc_px) {
    report.kind = kind;
    report.location_px = loc_px;
    report.location_m = {(loc_px[0] + 0.5) * pitch, (loc_px[1] + 0.5) * pitch};
    if (kind != AnomalyKind::None && peak_diff > 0.0) {
      const double local = std::abs(sample_dut.magnitude(loc_px[0], loc_px[1]) -
                                    sample_ref.magnitude(loc_px[0], loc_px[1]));
      report.confidence = std::clamp(local / peak_diff, 0.0, 1.0);
    }
    return report;
  };

  // The traces both start at the seed and run bidirectionally; align the
  // comparison on the downstream (forward) halves by locating the seed.
  auto seed_index = [&](const std::vector<std::array<double, 2>>& pts) {
    size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < pts.size(); ++i) {
      const double d = std::hypot(pts[i][0] - seed_px[0], pts[i][1] - seed_px[1]);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  };
  const double ds = config.trace.step_px;
  auto slice_from_seed = [&](const std::vector<std::array<double, 2>>& pts,
                             bool forward) {
    const size_t s = seed_index(pts);
    std::vector<std::array<double, 2>> half;
    if (forward)
      half.assign(pts.begin() + static_cast<long>(s), pts.end());
    else
      half.assign(pts.rbegin() + static_cast<long>(pts.size() - 1 - s), pts.rend());
    return detail::resample_path(half, ds);
  };

  const double sep_limit = 2.0;  // pixels; separation threshold is 2 * pitch

  for (const bool forward : {true, false}) {
    const auto r = slice_from_seed(ref.points_px, forward);
    const auto d = slice_from_seed(dut.points_px, forward);
    const size_t common = std::min(r.size(), d.size());

    size_t split = common;  // first index separated by > 2 pitch
    for (size_t i = 0; i < common; ++i) {
      if (std::hypot(r[i][0] - d[i][0], r[i][1] - d[i][1]) > sep_limit) {
        split = i;
        break;
      }
    }

    if (split < common) {
      const std::array<double, 2> loc{0.5 * (r[split][0] + d[split][0]),
                                      0.5 * (r[split][1] + d[split][1])};
      // Missing branch: reference ridge near the divergence, absent in the
      // dut, heading away from the dut direction.
      const double max_ref = j_ref.max_norm();
      const auto dut_dir = detail::tangent_at(d, split);
      int missing = 0;
      const int radius = static_cast<int>(std::ceil(config.window_px));
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          const double px = loc[0] + dx;
          const double py = loc[1] + dy;
          if (!detail::in_grid(j_ref, px, py)) continue;
          if (std::hypot(static_cast<double>(dx), static_cast<double>(dy)) >
              config.window_px)
            continue;
          const auto jr = sample_ref(px, py);
          const double mr = std::hypot(jr[0], jr[1]);
          const double md = sample_dut.magnitude(px, py);
          if (mr < config.ridge_fraction * max_ref) continue;
          if (md > config.absent_fraction * max_ref) continue;
          const std::array<double, 2> jdir{jr[0] / mr, jr[1] / mr};
          double ang = detail::angle_between(jdir, dut_dir);
          ang = std::min(ang, k_pi - ang);  // ridge orientation, not sign
          if (ang > config.kink_angle_deg * k_pi / 180.0) ++missing;
        }
      if (missing >= 4) return finish(AnomalyKind::MissingBranch, loc);

      // Termination: the dut path effectively stops at the divergence.
      const double dut_remaining = static_cast<double>(d.size() - split) * ds;
      if (dut.reason == StopReason::Terminated && dut_remaining < 4.0)
        return finish(AnomalyKind::Termination, d.back());
      // Separated without a missing ridge: treat as a kink at the split.
      return finish(AnomalyKind::Kink, loc);
    }

    // Paths paired over the common range. Dut stopping early is the
    // termination signature.
    if (dut.reason == StopReason::Terminated &&
        static_cast<double>(r.size()) * ds >
            static_cast<double>(d.size()) * ds + 4.0 && forward)
      return finish(AnomalyKind::Termination, d.back());

    // Kink: sustained direction disagreement while staying paired.
    int run = 0;
    for (size_t i = 1; i + 1 < common; ++i) {
      const double ang = detail::angle_between(detail::tangent_at(r, i),
                                               detail::tangent_at(d, i));
      if (ang > config.kink_angle_deg * k_pi / 180.0) {
        ++run;
        if (run >= config.kink_sustain_steps)
          return finish(AnomalyKind::Kink, d[i + 1 - static_cast<size_t>(run)]);
      } else {
        run = 0;
      }
    }
  }
  return finish(AnomalyKind::None, seed_px);
}

}  // namespace mci
