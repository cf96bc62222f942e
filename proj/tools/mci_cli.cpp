// mci: magnetic current imaging toolkit CLI.
//
// Composable subcommands with file-based data flow: synthetic current paths
// -> field maps -> ODMR cubes, and back: cubes -> vector fields -> current
// densities -> anomaly reports, plus the electrical-test and lock-in math.
// All numeric arguments are SI (T, A, m, Hz); micro-units appear only in
// the human-readable summaries on stderr. Randomized steps require an
// explicit --seed and identical invocations produce byte-identical outputs.
//
// Exit codes: 0 success, 1 domain error (one machine-parsable line
// `error: <Code>: <message>` on stderr), 2 usage error.

#include <array>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mci/common.hpp"
#include "mci/fault_analysis.hpp"
#include "mci/field_map.hpp"
#include "mci/magnetostatics.hpp"
#include "mci/nv_model.hpp"
#include "mci/odmr_inversion.hpp"
#include "mci/qfm_io.hpp"
#include "mci/scenario.hpp"

namespace {

using nlohmann::json;

void write_text_atomic(const std::string& path, const std::string& text) {
  mci::detail::write_file_atomic(path, text);
}

// Outputs land either in a file (atomically) or on stdout.
void emit_json(const json& doc, const std::string& out_path) {
  const std::string text = doc.dump(2) + "\n";
  if (out_path.empty())
    std::cout << text;
  else
    write_text_atomic(out_path, text);
}

std::array<double, 2> parse_pixel_pair(const std::string& s) {
  const auto comma = s.find(',');
  mci::require(comma != std::string::npos, "BadArgument",
               "expected 'x,y' pixel coordinates");
  try {
    return {std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
  } catch (const std::exception&) {
    mci::fail("BadArgument", "cannot parse pixel coordinates '" + s + "'");
  }
}

json path_to_json(const std::vector<std::array<double, 2>>& pts) {
  json arr = json::array();
  for (const auto& p : pts) arr.push_back({p[0], p[1]});
  return arr;
}

int run_simulate(const std::string& scenario_path, const std::string& out) {
  const auto scenario = mci::load_scenario(scenario_path);
  const auto trace = mci::load_scenario_trace(scenario);
  const auto field = mci::biot_savart_polyline(trace, scenario.width, scenario.height,
                                               scenario.pitch, scenario.standoff);
  const size_t n = mci::write_qfm(mci::stack_from(field), out);
  std::fprintf(stderr, "simulate: %ux%u grid, peak |Bz| %.3f uT -> %s (%zu bytes)\n",
               scenario.width, scenario.height, field.bz.max_abs() * 1e6,
               out.c_str(), n);
  return 0;
}

int run_rasterize(const std::string& scenario_path, double depth,
                  const std::string& out) {
  const auto scenario = mci::load_scenario(scenario_path);
  const auto trace = mci::load_scenario_trace(scenario);
  const auto j = mci::rasterize_trace(trace, scenario.width, scenario.height,
                                      scenario.pitch, depth);
  const size_t n = mci::write_qfm(mci::stack_from(j), out);
  std::fprintf(stderr, "rasterize: peak |J| %.3f A/m -> %s (%zu bytes)\n",
               j.max_norm(), out.c_str(), n);
  return 0;
}

int run_forward(const std::string& in, double standoff, const std::string& out) {
  const auto j = mci::read_qfm(in).current_density();
  const auto field = mci::sheet_forward(j, standoff);
  const size_t n = mci::write_qfm(mci::stack_from(field), out);
  std::fprintf(stderr, "forward: standoff %.1f um, peak |Bz| %.3f uT -> %s (%zu bytes)\n",
               standoff * 1e6, field.bz.max_abs() * 1e6, out.c_str(), n);
  return 0;
}

int run_synth_odmr(const std::string& field_path, const std::string& scenario_path,
                   std::optional<uint64_t> seed, const std::string& out) {
  const auto scenario = mci::load_scenario(scenario_path);
  const auto field = mci::read_qfm(field_path).vector_field();
  mci::LineShapeParams shape = scenario.line_shape;
  if (shape.photon_noise_sigma > 0.0) {
    mci::require(seed.has_value(), "SeedRequired",
                 "noisy synthesis requires an explicit --seed");
    shape.rng_seed = *seed;
  } else if (seed) {
    shape.rng_seed = *seed;
  }
  const auto cube = mci::synthesize_odmr(field, scenario.frame, scenario.sweep_freqs(),
                                         shape, scenario.constants);
  const size_t n = mci::write_qdcb(cube, out);
  std::fprintf(stderr, "synth-odmr: %zu pixels x %zu points -> %s (%zu bytes)\n",
               cube.n_pixels(), cube.n_freq(), out.c_str(), n);
  return 0;
}

int run_fit(const std::string& cube_path, const std::string& scenario_path,
            const std::string& out) {
  const auto scenario = mci::load_scenario(scenario_path);
  const auto cube = mci::read_qdcb(cube_path);
  const auto result =
      mci::reconstruct_map(cube, scenario.frame, scenario.constants,
                           scenario.line_shape, {}, scenario.standoff);
  auto stack = mci::stack_from(result.field);
  const auto mask = result.mask_map();
  stack.channels.push_back({"mask", "1", mask.data});
  const size_t n = mci::write_qfm(stack, out);
  std::fprintf(stderr, "fit: %zu/%zu pixels valid -> %s (%zu bytes)\n",
               result.valid_count, cube.n_pixels(), out.c_str(), n);
  return 0;
}

int run_diff(const std::string& on_path, const std::string& off_path,
             const std::string& out) {
  const auto on = mci::read_qfm(on_path);
  const auto off = mci::read_qfm(off_path);
  mci::require(on.width == off.width && on.height == off.height &&
                   on.pitch == off.pitch && on.standoff == off.standoff &&
                   on.channels.size() == off.channels.size(),
               "GridMismatch", "on/off stacks not co-registered");
  mci::GridStack d = on;
  for (size_t c = 0; c < d.channels.size(); ++c) {
    mci::require(on.channels[c].base_name() == off.channels[c].base_name(),
                 "GridMismatch", "channel lists differ");
    for (size_t i = 0; i < d.channels[c].data.size(); ++i)
      d.channels[c].data[i] = on.channels[c].data[i] - off.channels[c].data[i];
  }
  const size_t n = mci::write_qfm(d, out);
  std::fprintf(stderr, "diff: %zu channels -> %s (%zu bytes)\n", d.channels.size(),
               out.c_str(), n);
  return 0;
}

int run_invert(const std::string& in, const std::string& channel, double depth,
               const std::string& cutoff, int pad, const std::string& out) {
  const auto bz = mci::read_qfm(in).field(channel);
  mci::InversionConfig config;
  config.pad_factor = pad;
  if (!cutoff.empty() && cutoff != "auto") {
    try {
      config.cutoff_wavenumber = std::stod(cutoff);
    } catch (const std::exception&) {
      mci::fail("BadArgument", "cutoff must be a wavenumber in rad/m or 'auto'");
    }
  }
  const auto j = mci::invert_bz(bz, depth, config);
  const size_t n = mci::write_qfm(mci::stack_from(j), out);
  std::fprintf(stderr,
               "invert: cutoff %.3g rad/m, peak |J| %.3f A/m -> %s (%zu bytes)\n",
               j.cutoff_wavenumber, j.max_norm(), out.c_str(), n);
  return 0;
}

int run_depth(const std::string& in, const std::string& channel,
              const std::string& out) {
  const auto bz = mci::read_qfm(in).field(channel);
  const auto est = mci::estimate_depth(bz);
  json doc = {{"depth_m", est.depth_m},
              {"position_m", est.position_m},
              {"current_a", est.current_a},
              {"residual", est.residual}};
  emit_json(doc, out);
  std::fprintf(stderr, "depth: %.2f um at x = %.2f um, I = %.2f uA (residual %.3g)\n",
               est.depth_m * 1e6, est.position_m * 1e6, est.current_a * 1e6,
               est.residual);
  return 0;
}

int run_trace(const std::string& in, const std::string& start, double step,
              int max_steps, double stop_fraction, const std::string& out) {
  const auto j = mci::read_qfm(in).current_density();
  mci::TraceConfig config;
  config.step_px = step;
  config.max_steps = max_steps;
  config.stop_fraction = stop_fraction;
  const auto path = mci::trace_current(j, parse_pixel_pair(start), config);
  std::vector<std::array<double, 2>> pts_m;
  pts_m.reserve(path.points_px.size());
  for (const auto& p : path.points_px)
    pts_m.push_back({(p[0] + 0.5) * j.jx.pitch, (p[1] + 0.5) * j.jx.pitch});
  json doc = {{"points_px", path_to_json(path.points_px)},
              {"points_m", path_to_json(pts_m)},
              {"reason", mci::to_string(path.reason)},
              {"forward_reason", mci::to_string(path.forward_reason)},
              {"backward_reason", mci::to_string(path.backward_reason)}};
  emit_json(doc, out);
  std::fprintf(stderr, "trace: %zu points, stop reason %s\n", path.points_px.size(),
               mci::to_string(path.reason));
  return 0;
}

int run_compare(const std::string& ref_path, const std::string& dut_path,
                const std::string& start, double stop_fraction,
                const std::string& out) {
  const auto j_ref = mci::read_qfm(ref_path).current_density();
  const auto j_dut = mci::read_qfm(dut_path).current_density();
  mci::CompareConfig config;
  config.trace.stop_fraction = stop_fraction;
  const auto report = mci::compare_paths(j_ref, j_dut, parse_pixel_pair(start), config);
  json doc = {{"kind", mci::to_string(report.kind)},
              {"location_px", {report.location_px[0], report.location_px[1]}},
              {"location_m", {report.location_m[0], report.location_m[1]}},
              {"confidence", report.confidence},
              {"peak_differential_a_per_m", report.peak_differential_a_per_m},
              {"ref_path", path_to_json(report.ref_path_m)},
              {"dut_path", path_to_json(report.dut_path_m)},
              {"termination_reason", report.termination_reason}};
  emit_json(doc, out);
  std::fprintf(stderr, "compare: %s at pixel (%.1f, %.1f), confidence %.2f\n",
               mci::to_string(report.kind), report.location_px[0],
               report.location_px[1], report.confidence);
  return 0;
}

int run_iv(const std::string& csv_path, double r2_threshold, double open_floor,
           const std::string& out) {
  std::ifstream in(csv_path);
  mci::require(in.good(), "IoError", "cannot open '" + csv_path + "'");
  std::string line;
  mci::require(static_cast<bool>(std::getline(in, line)), "BadCsv", "empty CSV");
  mci::IVCurve curve;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    mci::require(comma != std::string::npos, "BadCsv",
                 "expected 'voltage_v,current_a' rows");
    try {
      curve.samples.emplace_back(std::stod(line.substr(0, comma)),
                                 std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      mci::fail("BadCsv", "cannot parse row '" + line + "'");
    }
  }
  const auto result = mci::classify_iv(curve, {r2_threshold, open_floor});
  json doc;
  doc["class"] = mci::to_string(result.cls);
  if (result.cls == mci::IVClass::ShortSuspected)
    doc["resistance_ohm"] = result.resistance_ohm;
  if (result.cls != mci::IVClass::Open) doc["r2"] = result.r2;
  emit_json(doc, out);
  return 0;
}

int run_lockin(const std::string& in, double rate, double freq,
               const std::string& out) {
  const auto stack = mci::read_qfm(in);
  mci::LockInSeries series;
  series.sample_rate_hz = rate;
  series.drive_frequency_hz = freq;
  for (const auto& c : stack.channels) {
    mci::FieldMap frame;
    frame.width = stack.width;
    frame.height = stack.height;
    frame.pitch = stack.pitch;
    frame.standoff = stack.standoff;
    frame.unit = c.unit;
    frame.data = c.data;
    series.frames.push_back(std::move(frame));
  }
  auto [amplitude, phase] = mci::lockin_demodulate(series);
  mci::GridStack result = mci::stack_from(amplitude, "amplitude");
  result.channels.push_back({"phase", "1", phase.data});
  const size_t n = mci::write_qfm(result, out);
  std::fprintf(stderr, "lockin: %zu frames, %g Hz drive -> %s (%zu bytes)\n",
               series.frames.size(), freq, out.c_str(), n);
  return 0;
}

int run_hotspot(const std::string& in, const std::string& channel, double sigma,
                const std::string& out) {
  const auto amplitude = mci::read_qfm(in).field(channel);
  const auto spots = mci::detect_hotspot(amplitude, {sigma});
  json arr = json::array();
  for (const auto& s : spots)
    arr.push_back({{"location_px", {s.cx_px, s.cy_px}},
                   {"location_m", {s.cx_m, s.cy_m}},
                   {"peak", s.peak},
                   {"extent_px", s.extent_px}});
  emit_json(arr, out);
  std::fprintf(stderr, "hotspot: %zu detections\n", spots.size());
  return 0;
}

int run_render(const std::string& in, const std::string& channel,
               std::optional<double> low, std::optional<double> high,
               const std::string& out) {
  const auto map = mci::read_qfm(in).field(channel);
  const size_t n = mci::render_pgm(map, low, high, out);
  std::fprintf(stderr, "render: %s -> %s (%zu bytes)\n", channel.c_str(), out.c_str(),
               n);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mci: magnetic current imaging toolkit"};
  app.require_subcommand(1);

  std::string scenario_path, in_path, out_path, channel = "Bz";
  std::string ref_path, dut_path, start, cutoff = "auto", csv_path;
  std::string field_path, cube_path, on_path, off_path;
  double depth = 0.0, standoff = 0.0, rate = 0.0, freq = 0.0;
  double step = 0.5, stop_fraction = 0.05, sigma = 5.0;
  double r2_threshold = 0.999, open_floor = 1e-9;
  int pad = 2, max_steps = 10000;
  std::optional<uint64_t> seed;
  std::optional<double> low, high;

  auto* simulate = app.add_subcommand("simulate", "trace -> field map (polyline oracle)");
  simulate->add_option("--scenario", scenario_path)->required();
  simulate->add_option("--out", out_path)->required();

  auto* rasterize = app.add_subcommand("rasterize", "trace -> sheet current map");
  rasterize->add_option("--scenario", scenario_path)->required();
  rasterize->add_option("--depth", depth, "sheet depth in m");
  rasterize->add_option("--out", out_path)->required();

  auto* forward = app.add_subcommand("forward", "current map -> field map (Fourier)");
  forward->add_option("--in", in_path)->required();
  forward->add_option("--standoff", standoff, "sensor height in m")->required();
  forward->add_option("--out", out_path)->required();

  auto* synth = app.add_subcommand("synth-odmr", "field map -> ODMR cube");
  synth->add_option("--field", field_path)->required();
  synth->add_option("--scenario", scenario_path)->required();
  synth->add_option("--seed", seed, "RNG seed (required when noise > 0)");
  synth->add_option("--out", out_path)->required();

  auto* fit = app.add_subcommand("fit", "ODMR cube -> field map + validity mask");
  fit->add_option("--cube", cube_path)->required();
  fit->add_option("--scenario", scenario_path)->required();
  fit->add_option("--out", out_path)->required();

  auto* diff = app.add_subcommand("diff", "channelwise on - off");
  diff->add_option("--on", on_path)->required();
  diff->add_option("--off", off_path)->required();
  diff->add_option("--out", out_path)->required();

  auto* invert = app.add_subcommand("invert", "field map -> sheet current map");
  invert->add_option("--in", in_path)->required();
  invert->add_option("--channel", channel, "field channel (default Bz)");
  invert->add_option("--depth", depth, "source depth in m");
  invert->add_option("--cutoff", cutoff, "cutoff wavenumber rad/m or 'auto'");
  invert->add_option("--pad", pad, "zero-padding factor");
  invert->add_option("--out", out_path)->required();

  auto* depth_cmd = app.add_subcommand("depth", "straight-wire depth extraction");
  depth_cmd->add_option("--in", in_path)->required();
  depth_cmd->add_option("--channel", channel);
  depth_cmd->add_option("--out", out_path, "JSON output (default stdout)");

  auto* trace = app.add_subcommand("trace", "streamline trace through a current map");
  trace->add_option("--in", in_path)->required();
  trace->add_option("--start", start, "seed pixel 'x,y'")->required();
  trace->add_option("--step", step, "step in pixels");
  trace->add_option("--max-steps", max_steps);
  trace->add_option("--stop-fraction", stop_fraction, "|J| stop threshold fraction");
  trace->add_option("--out", out_path, "JSON output (default stdout)");

  auto* compare = app.add_subcommand("compare", "reference vs dut anomaly report");
  compare->add_option("--ref", ref_path)->required();
  compare->add_option("--dut", dut_path)->required();
  compare->add_option("--start", start, "seed pixel 'x,y'")->required();
  compare->add_option("--stop-fraction", stop_fraction);
  compare->add_option("--out", out_path, "JSON output (default stdout)");

  auto* iv = app.add_subcommand("iv", "classify an I-V curve CSV");
  iv->add_option("--csv", csv_path)->required();
  iv->add_option("--r2-threshold", r2_threshold);
  iv->add_option("--open-floor", open_floor, "A");
  iv->add_option("--out", out_path, "JSON output (default stdout)");

  auto* lockin = app.add_subcommand("lockin", "demodulate a frame stack");
  lockin->add_option("--in", in_path, "QFM stack, one channel per frame")->required();
  lockin->add_option("--rate", rate, "sample rate Hz")->required();
  lockin->add_option("--freq", freq, "drive frequency Hz")->required();
  lockin->add_option("--out", out_path)->required();

  auto* hotspot = app.add_subcommand("hotspot", "detect hotspots in an amplitude map");
  hotspot->add_option("--in", in_path)->required();
  hotspot->add_option("--channel", channel, "channel (default amplitude)");
  hotspot->add_option("--sigma", sigma, "detection threshold in robust sigmas");
  hotspot->add_option("--out", out_path, "JSON output (default stdout)");

  auto* render = app.add_subcommand("render", "field channel -> 16-bit PGM");
  render->add_option("--in", in_path)->required();
  render->add_option("--channel", channel);
  render->add_option("--low", low, "black point (with --high)");
  render->add_option("--high", high, "white point (with --low)");
  render->add_option("--out", out_path)->required();

  hotspot->parse_complete_callback([&] {
    if (channel == "Bz" && !hotspot->get_option("--channel")->count())
      channel = "amplitude";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0) {
      std::cerr << "error: Usage: " << e.what() << "\n";
      return 2;
    }
    return app.exit(e);  // --help and friends
  }

  try {
    if (simulate->parsed()) return run_simulate(scenario_path, out_path);
    if (rasterize->parsed()) return run_rasterize(scenario_path, depth, out_path);
    if (forward->parsed()) return run_forward(in_path, standoff, out_path);
    if (synth->parsed()) return run_synth_odmr(field_path, scenario_path, seed, out_path);
    if (fit->parsed()) return run_fit(cube_path, scenario_path, out_path);
    if (diff->parsed()) return run_diff(on_path, off_path, out_path);
    if (invert->parsed())
      return run_invert(in_path, channel, depth, cutoff, pad, out_path);
    if (depth_cmd->parsed()) return run_depth(in_path, channel, out_path);
    if (trace->parsed())
      return run_trace(in_path, start, step, max_steps, stop_fraction, out_path);
    if (compare->parsed())
      return run_compare(ref_path, dut_path, start, stop_fraction, out_path);
    if (iv->parsed()) return run_iv(csv_path, r2_threshold, open_floor, out_path);
    if (lockin->parsed()) return run_lockin(in_path, rate, freq, out_path);
    if (hotspot->parsed()) return run_hotspot(in_path, channel, sigma, out_path);
    if (render->parsed()) return run_render(in_path, channel, low, high, out_path);
  } catch (const mci::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
