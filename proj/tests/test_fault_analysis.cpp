#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mci/common.hpp"
#include "mci/fault_analysis.hpp"
#include "mci/field_map.hpp"
#include "mci/magnetostatics.hpp"

using namespace mci;

namespace {

IVCurve ohmic_curve(double resistance, int n = 21) {
  IVCurve c;
  for (int i = 0; i < n; ++i) {
    const double v = -1.0 + 2.0 * double(i) / double(n - 1);
    c.samples.emplace_back(v, v / resistance);
  }
  return c;
}

LockInSeries sinusoid_series(double amplitude, double phase, double f, double fs,
                             size_t n_frames, double dc = 0.0) {
  LockInSeries s;
  s.sample_rate_hz = fs;
  s.drive_frequency_hz = f;
  for (size_t k = 0; k < n_frames; ++k) {
    FieldMap frame = FieldMap::zeros(2, 2, 1e-6, 0.0, "K");
    const double t = double(k) / fs;
    for (auto& v : frame.data)
      v = dc + amplitude * std::sin(2.0 * k_pi * f * t + phase);
    s.frames.push_back(std::move(frame));
  }
  return s;
}

// J map built from rasterized polylines; the natural input for path tests.
CurrentDensityMap rasterized(const CurrentTrace& t, uint32_t n, double pitch) {
  return rasterize_trace(t, n, n, pitch, 0.0);
}

}  // namespace

TEST_CASE("exact ohmic curve classifies as a suspected short") {
  const auto result = classify_iv(ohmic_curve(50.0));
  REQUIRE(result.cls == IVClass::ShortSuspected);
  REQUIRE(result.resistance_ohm == Catch::Approx(50.0).epsilon(1e-9));
  REQUIRE(result.r2 == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("diode-like curve classifies as nominal") {
  IVCurve c;
  for (int i = 0; i <= 28; ++i) {
    const double v = 0.7 * double(i) / 28.0;
    c.samples.emplace_back(v, 1e-12 * (std::exp(v / 0.026) - 1.0));
  }
  // independent check that the best line really is a poor fit
  double sv = 0, si = 0, svv = 0, svi = 0;
  const double n = double(c.samples.size());
  for (auto& [v, i] : c.samples) sv += v, si += i, svv += v * v, svi += v * i;
  const double slope = (n * svi - sv * si) / (n * svv - sv * sv);
  const double icpt = (si - slope * sv) / n;
  double ss_res = 0, ss_tot = 0;
  for (auto& [v, i] : c.samples) {
    ss_res += (i - slope * v - icpt) * (i - slope * v - icpt);
    ss_tot += (i - si / n) * (i - si / n);
  }
  const double r2 = 1.0 - ss_res / ss_tot;
  REQUIRE(r2 < 0.999);

  const auto result = classify_iv(c);
  REQUIRE(result.cls == IVClass::Nominal);
  REQUIRE(result.r2 == Catch::Approx(r2).margin(1e-12));
}

TEST_CASE("sub-nanoamp curves classify as open") {
  IVCurve c;
  for (int i = 0; i < 7; ++i)
    c.samples.emplace_back(double(i) * 0.1, 1e-10 * double(i % 3));
  REQUIRE(classify_iv(c).cls == IVClass::Open);
}

TEST_CASE("iv classification is scale-consistent") {
  detail::Rng rng(41);
  for (int round = 0; round < 20; ++round) {
    IVCurve c;
    for (int i = 0; i < 11; ++i) {
      const double v = double(i) * 0.1;
      c.samples.emplace_back(v, v / 75.0 + 1e-4 * (rng.uniform() - 0.5));
    }
    const auto base = classify_iv(c);
    const double alpha = 0.5 + 4.0 * rng.uniform();
    IVCurve scaled = c;
    for (auto& [v, i] : scaled.samples) i *= alpha;
    const auto after = classify_iv(scaled);
    REQUIRE(after.cls == base.cls);
    REQUIRE(after.r2 == Catch::Approx(base.r2).margin(1e-12));
    if (base.cls == IVClass::ShortSuspected)
      REQUIRE(after.resistance_ohm ==
              Catch::Approx(base.resistance_ohm / alpha).epsilon(1e-9));
  }
  REQUIRE_THROWS_AS(classify_iv(IVCurve{{{0.0, 0.0}, {0.1, 1.0}}}), Error);
}

TEST_CASE("lock-in recovers a whole-period sinusoid to 1e-9") {
  // 10 periods exactly: f = 25 Hz at 1 kHz over 400 frames
  const auto series = sinusoid_series(5.0, 0.3, 25.0, 1000.0, 400);
  const auto [amp, phase] = lockin_demodulate(series);
  for (double v : amp.data) REQUIRE(v == Catch::Approx(5.0).epsilon(1e-9));
  for (double v : phase.data) REQUIRE(v == Catch::Approx(0.3).margin(1e-9));
}

TEST_CASE("lock-in rejects DC completely") {
  const auto series = sinusoid_series(0.0, 0.0, 25.0, 1000.0, 400, 7.5);
  const auto [amp, phase] = lockin_demodulate(series);
  for (double v : amp.data) REQUIRE(std::abs(v) <= 1e-12);
}

TEST_CASE("lock-in truncates to whole periods") {
  // 400 frames = 10 periods; 437 frames adds a partial period that must be
  // discarded: results identical to the 400-frame window
  const auto exact = sinusoid_series(2.0, -1.1, 25.0, 1000.0, 400);
  auto longer = sinusoid_series(2.0, -1.1, 25.0, 1000.0, 437);
  const auto [a0, p0] = lockin_demodulate(exact);
  const auto [a1, p1] = lockin_demodulate(longer);
  REQUIRE(a0.data[0] == Catch::Approx(a1.data[0]).epsilon(1e-12));
  REQUIRE(p0.data[0] == Catch::Approx(p1.data[0]).margin(1e-12));

  LockInSeries few = sinusoid_series(1.0, 0.0, 25.0, 1000.0, 60);  // 1.5 periods
  REQUIRE_THROWS_AS(lockin_demodulate(few), Error);
}

TEST_CASE("lock-in amplitude stays near truth under heavy noise") {
  detail::Rng noise_rng(55);
  int in_band = 0;
  const int n_seeds = 50;
  for (int seed = 0; seed < n_seeds; ++seed) {
    LockInSeries s;
    s.sample_rate_hz = 40.0;
    s.drive_frequency_hz = 1.0;
    const size_t frames = 4000;  // 100 periods
    for (size_t k = 0; k < frames; ++k) {
      FieldMap f = FieldMap::zeros(1, 1, 1e-6, 0.0, "K");
      f.data[0] = 5.0 * std::sin(2.0 * k_pi * double(k) / 40.0) + noise_rng.gaussian();
      s.frames.push_back(std::move(f));
    }
    const auto [amp, phase] = lockin_demodulate(s);
    if (std::abs(amp.data[0] - 5.0) <= 0.2) ++in_band;
  }
  REQUIRE(in_band >= int(0.95 * n_seeds));
}

TEST_CASE("hotspot detection finds a gaussian blob at its centroid") {
  FieldMap amp = FieldMap::zeros(96, 96, 1e-5, 0.0, "K");
  detail::Rng rng(3);
  const double sigma_noise = 1e-6;
  for (auto& v : amp.data) v = sigma_noise * rng.gaussian();
  for (uint32_t y = 0; y < 96; ++y)
    for (uint32_t x = 0; x < 96; ++x) {
      const double dx = double(x) - 40.0, dy = double(y) - 60.0;
      amp.at(x, y) += 100.0 * sigma_noise * std::exp(-(dx * dx + dy * dy) / 18.0);
    }
  const auto spots = detect_hotspot(amp);
  REQUIRE(spots.size() == 1);
  REQUIRE(spots[0].cx_px == Catch::Approx(40.0).margin(0.5));
  REQUIRE(spots[0].cy_px == Catch::Approx(60.0).margin(0.5));
  REQUIRE(spots[0].extent_px > 3);
}

TEST_CASE("hotspot detection stays quiet on pure noise") {
  int false_positives = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    FieldMap amp = FieldMap::zeros(64, 64, 1e-5, 0.0, "K");
    detail::Rng rng(detail::stream_seed(1000, seed));
    for (auto& v : amp.data) v = rng.gaussian();
    if (!detect_hotspot(amp).empty()) ++false_positives;
  }
  REQUIRE(false_positives <= 1);
}

TEST_CASE("two blobs are reported in descending peak order") {
  FieldMap amp = FieldMap::zeros(80, 80, 1e-5, 0.0, "K");
  detail::Rng rng(9);
  for (auto& v : amp.data) v = 1e-6 * rng.gaussian();
  auto add_blob = [&](double cx, double cy, double height) {
    for (uint32_t y = 0; y < 80; ++y)
      for (uint32_t x = 0; x < 80; ++x) {
        const double dx = double(x) - cx, dy = double(y) - cy;
        amp.at(x, y) += height * std::exp(-(dx * dx + dy * dy) / 12.0);
      }
  };
  add_blob(20.0, 25.0, 5e-5);
  add_blob(60.0, 55.0, 1e-4);
  const auto spots = detect_hotspot(amp);
  REQUIRE(spots.size() == 2);
  REQUIRE(spots[0].cx_px == Catch::Approx(60.0).margin(0.5));
  REQUIRE(spots[1].cx_px == Catch::Approx(20.0).margin(0.5));
  REQUIRE(spots[0].peak > spots[1].peak);
}

TEST_CASE("tracing a uniform field runs straight off both edges") {
  CurrentDensityMap j;
  j.jx = FieldMap::zeros(48, 48, 2e-6, 0.0, "A/m");
  j.jy = FieldMap::zeros(48, 48, 2e-6, 0.0, "A/m");
  for (auto& v : j.jx.data) v = 10.0;
  const auto path = trace_current(j, {24.0, 24.0});
  REQUIRE(path.reason == StopReason::LeftGrid);
  REQUIRE(path.forward_reason == StopReason::LeftGrid);
  REQUIRE(path.backward_reason == StopReason::LeftGrid);
  REQUIRE(path.points_px.front()[0] <= 0.5);
  REQUIRE(path.points_px.back()[0] >= 46.5);
  for (const auto& p : path.points_px)
    REQUIRE(p[1] == Catch::Approx(24.0).margin(1e-9));
}

TEST_CASE("tracing an annular current closes into a loop") {
  // stream function peaked on a ring: streamlines are circles
  const uint32_t n = 96;
  CurrentDensityMap j;
  j.jx = FieldMap::zeros(n, n, 2e-6, 0.0, "A/m");
  j.jy = FieldMap::zeros(n, n, 2e-6, 0.0, "A/m");
  const double cx = 47.5, cy = 47.5, radius = 24.0, width = 6.0;
  for (uint32_t y = 0; y < n; ++y)
    for (uint32_t x = 0; x < n; ++x) {
      const double dx = double(x) - cx, dy = double(y) - cy;
      const double r = std::hypot(dx, dy);
      if (r < 1e-9) continue;
      const double gp = -2.0 * (r - radius) / (width * width) *
                        std::exp(-(r - radius) * (r - radius) / (width * width));
      j.jx.at(x, y) = gp * dy / r;   // dg/dy
      j.jy.at(x, y) = -gp * dx / r;  // -dg/dx
    }
  // seed off the ring crest (where J vanishes), on the steep flank
  const double r_seed = radius + 4.5;
  const auto path = trace_current(j, {cx + r_seed, cy});
  REQUIRE(path.reason == StopReason::Loop);
  for (const auto& p : path.points_px) {
    const double r = std::hypot(p[0] - cx, p[1] - cy);
    REQUIRE(std::abs(r - r_seed) < 1.0);
  }
}

TEST_CASE("a wire that stops mid-grid terminates the trace at its end") {
  const double pitch = 2e-6;
  const uint32_t n = 96;
  CurrentTrace t;
  t.segments.push_back({{{-1e-5, 48.5 * pitch, 0.0}, {60.5 * pitch, 48.5 * pitch, 0.0}},
                        1e-4});
  SECTION("directly on the rasterized map") {
    const auto j = rasterized(t, n, pitch);
    const auto path = trace_current(j, {20.0, 48.0});
    REQUIRE(path.reason == StopReason::Terminated);
    REQUIRE(path.forward_reason == StopReason::Terminated);
    REQUIRE(path.backward_reason == StopReason::LeftGrid);
    const auto& end = path.points_px.back();
    REQUIRE(std::hypot(end[0] - 60.0, end[1] - 48.0) < 2.0);
  }
  SECTION("through the forward/inverse pipeline") {
    const auto j_true = rasterized(t, n, pitch);
    const auto field = sheet_forward(j_true, 3.0 * pitch);
    const auto j = invert_bz(field.bz, 0.0);
    // the divergence-free completion feeds a radial return fan at the break,
    // so termination detection needs a higher stop fraction there
    TraceConfig config;
    config.stop_fraction = 0.35;
    const auto path = trace_current(j, {20.0, 48.0}, config);
    REQUIRE(path.reason == StopReason::Terminated);
    const auto& end = path.points_px.back();
    REQUIRE(std::hypot(end[0] - 60.0, end[1] - 48.0) < 2.0);
  }
}

TEST_CASE("seeding a dead region is refused") {
  CurrentDensityMap j;
  j.jx = FieldMap::zeros(32, 32, 2e-6, 0.0, "A/m");
  j.jy = FieldMap::zeros(32, 32, 2e-6, 0.0, "A/m");
  j.jx.at(5, 5) = 100.0;
  REQUIRE_THROWS_AS(trace_current(j, {25.0, 25.0}), Error);
}

TEST_CASE("comparing a map against itself reports no anomaly") {
  const double pitch = 2e-6;
  CurrentTrace t;
  t.segments.push_back({{{-1e-5, 32.5 * pitch, 0.0}, {2e-4, 32.5 * pitch, 0.0}}, 1e-4});
  const auto j = rasterized(t, 64, pitch);
  const auto report = compare_paths(j, j, {10.0, 32.0});
  REQUIRE(report.kind == AnomalyKind::None);
  REQUIRE(report.confidence == 0.0);
  REQUIRE(report.peak_differential_a_per_m == 0.0);
}

TEST_CASE("a missing branch is localized at the node") {
  const double pitch = 2e-6;
  const uint32_t n = 128;
  const double y0 = 64.5 * pitch;
  // reference: trunk splits at x = 40 px into a dominant up branch and a
  // weaker straight continuation; dut: the straight path takes everything
  CurrentTrace ref;
  ref.segments.push_back({{{-1e-5, y0, 0.0}, {40.5 * pitch, y0, 0.0}}, 1e-4});
  ref.segments.push_back(
      {{{40.5 * pitch, y0, 0.0}, {40.5 * pitch, 90.5 * pitch, 0.0},
        {-1e-5, 90.5 * pitch, 0.0}},
       6.5e-5});
  ref.segments.push_back({{{40.5 * pitch, y0, 0.0}, {2.7e-4, y0, 0.0}}, 3.5e-5});
  CurrentTrace dut;
  dut.segments.push_back({{{-1e-5, y0, 0.0}, {2.7e-4, y0, 0.0}}, 1e-4});

  const auto j_ref = rasterized(ref, n, pitch);
  const auto j_dut = rasterized(dut, n, pitch);
  const auto report = compare_paths(j_ref, j_dut, {10.0, 64.0});
  REQUIRE(report.kind == AnomalyKind::MissingBranch);
  REQUIRE(std::hypot(report.location_px[0] - 40.0, report.location_px[1] - 64.0) < 2.0);
  REQUIRE(report.confidence > 0.0);
  REQUIRE(report.peak_differential_a_per_m > 0.0);
}

TEST_CASE("a sustained bend against a straight reference reports a kink") {
  const double pitch = 2e-6;
  const uint32_t n = 96;
  const double y0 = 48.5 * pitch;
  CurrentTrace ref;
  ref.segments.push_back({{{-1e-5, y0, 0.0}, {2.1e-4, y0, 0.0}}, 1e-4});
  // dut: same wire with a 45-degree dogleg at x = 48 px, peaking 1.6 px up
  // (stays within the 2-pitch pairing limit)
  CurrentTrace dut;
  dut.segments.push_back({{{-1e-5, y0, 0.0},
                           {48.5 * pitch, y0, 0.0},
                           {50.1 * pitch, y0 + 1.6 * pitch, 0.0},
                           {51.7 * pitch, y0, 0.0},
                           {2.1e-4, y0, 0.0}},
                          1e-4});
  const auto j_ref = rasterized(ref, n, pitch);
  const auto j_dut = rasterized(dut, n, pitch);
  const auto report = compare_paths(j_ref, j_dut, {10.0, 48.0});
  REQUIRE(report.kind == AnomalyKind::Kink);
  REQUIRE(std::abs(report.location_px[0] - 48.0) < 3.0);
  REQUIRE(std::abs(report.location_px[1] - 48.0) < 2.5);
}

TEST_CASE("grid mismatch between devices is rejected") {
  CurrentDensityMap a, b;
  a.jx = FieldMap::zeros(32, 32, 2e-6, 0.0, "A/m");
  a.jy = a.jx;
  b.jx = FieldMap::zeros(16, 32, 2e-6, 0.0, "A/m");
  b.jy = b.jx;
  a.jx.at(5, 5) = 1.0;
  REQUIRE_THROWS_AS(compare_paths(a, b, {5.0, 5.0}), Error);
}
