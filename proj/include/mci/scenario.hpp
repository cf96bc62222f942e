#pragma once

// JSON-backed scenario and trace descriptions consumed by the CLI. A
// scenario bundles the measurement geometry (grid, standoff), the source
// trace file, the bias/orientation frame and the sweep definition, so a
// whole pipeline run is reproducible from two small text files.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mci/common.hpp"
#include "mci/magnetostatics.hpp"
#include "mci/nv_model.hpp"

namespace mci {

// {"segments": [{"points": [[x,y,z], ...], "current_a": I}, ...]}, meters.
inline CurrentTrace load_trace_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "IoError", "cannot open trace file '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    fail("BadTraceJson", std::string("trace parse error: ") + e.what());
  }
  CurrentTrace trace;
  require(doc.contains("segments") && doc["segments"].is_array(), "BadTraceJson",
          "trace needs a 'segments' array");
  for (const auto& seg : doc["segments"]) {
    Polyline poly;
    require(seg.contains("points") && seg.contains("current_a"), "BadTraceJson",
            "segment needs 'points' and 'current_a'");
    poly.current_a = seg["current_a"].get<double>();
    for (const auto& p : seg["points"]) {
      require(p.is_array() && p.size() == 3, "BadTraceJson",
              "points must be [x, y, z] triplets");
      poly.points.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
    }
    trace.segments.push_back(std::move(poly));
  }
  trace.validate();
  return trace;
}

struct Scenario {
  uint32_t width = 0;
  uint32_t height = 0;
  double pitch = 0.0;
  double standoff = 0.0;
  std::filesystem::path trace_file;  // resolved against the scenario's dir
  NVFrame frame;
  LineShapeParams line_shape;
  NVConstants constants;
  double sweep_start_hz = 0.0;
  double sweep_stop_hz = 0.0;
  uint32_t sweep_points = 0;

  std::vector<double> sweep_freqs() const {
    require(sweep_points >= 8 && sweep_stop_hz > sweep_start_hz, "InvalidScenario",
            "sweep needs >= 8 points and an increasing range");
    std::vector<double> f(sweep_points);
    for (uint32_t i = 0; i < sweep_points; ++i)
      f[i] = sweep_start_hz + (sweep_stop_hz - sweep_start_hz) *
                                  static_cast<double>(i) /
                                  static_cast<double>(sweep_points - 1);
    return f;
  }
};

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "IoError", "cannot open scenario '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    fail("BadScenario", std::string("scenario parse error: ") + e.what());
  }

  Scenario s;
  try {
    const auto& grid = doc.at("grid");
    s.width = grid.at("width").get<uint32_t>();
    s.height = grid.at("height").get<uint32_t>();
    s.pitch = grid.at("pitch_m").get<double>();
    s.standoff = doc.at("standoff_m").get<double>();
    if (doc.contains("trace_file")) {
      std::filesystem::path t = doc["trace_file"].get<std::string>();
      s.trace_file = t.is_absolute() ? t : path.parent_path() / t;
    }
    if (doc.contains("bias_field_t")) {
      const auto& b = doc["bias_field_t"];
      s.frame.bias_field = {b.at(0).get<double>(), b.at(1).get<double>(),
                            b.at(2).get<double>()};
    }
    if (doc.contains("used_axes")) {
      const auto& u = doc["used_axes"];
      for (int i = 0; i < 3; ++i) s.frame.used_axes[i] = u.at(i).get<int>();
    }
    if (doc.contains("margin_factor"))
      s.frame.margin_factor = doc["margin_factor"].get<double>();
    if (doc.contains("line_shape")) {
      const auto& l = doc["line_shape"];
      if (l.contains("contrast")) s.line_shape.contrast = l["contrast"].get<double>();
      if (l.contains("linewidth_fwhm_hz"))
        s.line_shape.linewidth_fwhm_hz = l["linewidth_fwhm_hz"].get<double>();
      if (l.contains("photon_noise_sigma"))
        s.line_shape.photon_noise_sigma = l["photon_noise_sigma"].get<double>();
      if (l.contains("rng_seed")) s.line_shape.rng_seed = l["rng_seed"].get<uint64_t>();
    }
    if (doc.contains("nv")) {
      const auto& n = doc["nv"];
      if (n.contains("zero_field_splitting_hz"))
        s.constants.zero_field_splitting_hz = n["zero_field_splitting_hz"].get<double>();
      if (n.contains("gyromagnetic_hz_per_t"))
        s.constants.gyromagnetic_hz_per_t = n["gyromagnetic_hz_per_t"].get<double>();
    }
    if (doc.contains("sweep")) {
      const auto& w = doc["sweep"];
      s.sweep_start_hz = w.at("start_hz").get<double>();
      s.sweep_stop_hz = w.at("stop_hz").get<double>();
      s.sweep_points = w.at("points").get<uint32_t>();
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail("BadScenario", std::string("scenario field error: ") + e.what());
  }
  require(s.width >= 1 && s.height >= 1 && s.pitch > 0.0 && s.standoff >= 0.0,
          "BadScenario", "scenario grid invalid");
  return s;
}

inline CurrentTrace load_scenario_trace(const Scenario& s) {
  require(!s.trace_file.empty(), "BadScenario", "scenario names no trace file");
  return load_trace_json(s.trace_file);
}

}  // namespace mci
