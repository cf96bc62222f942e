#pragma once

// Grid containers shared by the whole pipeline. All maps are row-major with
// row 0 at minimum y and column 0 at minimum x; pixel centers sit at
// ((i + 0.5) * pitch, (j + 0.5) * pitch). Containers are treated as
// immutable once filled; every operation returns a new value.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mci/common.hpp"

namespace mci {

struct FieldMap {
  uint32_t width = 0;
  uint32_t height = 0;
  double pitch = 0.0;     // meters/pixel
  double standoff = 0.0;  // meters, sensor plane above source plane
  std::string unit = "1";
  std::vector<double> data;  // width*height, row-major, row 0 = min y

  static FieldMap zeros(uint32_t w, uint32_t h, double pitch, double standoff,
                        std::string unit) {
    FieldMap m;
    m.width = w;
    m.height = h;
    m.pitch = pitch;
    m.standoff = standoff;
    m.unit = std::move(unit);
    m.data.assign(static_cast<size_t>(w) * h, 0.0);
    return m;
  }

  size_t size() const { return static_cast<size_t>(width) * height; }
  size_t index(uint32_t ix, uint32_t iy) const {
    return static_cast<size_t>(iy) * width + ix;
  }
  double at(uint32_t ix, uint32_t iy) const { return data[index(ix, iy)]; }
  double& at(uint32_t ix, uint32_t iy) { return data[index(ix, iy)]; }

  double x_at(uint32_t ix) const { return (ix + 0.5) * pitch; }
  double y_at(uint32_t iy) const { return (iy + 0.5) * pitch; }

  bool coregistered(const FieldMap& o) const {
    return width == o.width && height == o.height && pitch == o.pitch &&
           standoff == o.standoff;
  }

  double min_value() const { return *std::min_element(data.begin(), data.end()); }
  double max_value() const { return *std::max_element(data.begin(), data.end()); }
  double max_abs() const {
    double m = 0.0;
    for (double v : data) m = std::max(m, std::abs(v));
    return m;
  }

  void validate() const {
    require(width >= 1 && height >= 1, "InvalidMap", "empty grid");
    require(pitch > 0.0, "InvalidMap", "pitch must be positive");
    require(standoff >= 0.0, "InvalidMap", "negative standoff");
    require(data.size() == size(), "InvalidMap", "data length mismatch");
    for (double v : data)
      require(std::isfinite(v), "InvalidMap", "non-finite value in map");
  }
};

struct VectorFieldMap {
  FieldMap bx, by, bz;

  bool coregistered(const VectorFieldMap& o) const {
    return bx.coregistered(o.bx) && by.coregistered(o.by) && bz.coregistered(o.bz);
  }

  void validate() const {
    bx.validate();
    by.validate();
    bz.validate();
    require(bx.coregistered(by) && bx.coregistered(bz), "InvalidMap",
            "field components not co-registered");
    require(bx.unit == "T" && by.unit == "T" && bz.unit == "T", "InvalidMap",
            "field components must carry unit T");
  }

  static VectorFieldMap zeros(uint32_t w, uint32_t h, double pitch, double standoff) {
    return {FieldMap::zeros(w, h, pitch, standoff, "T"),
            FieldMap::zeros(w, h, pitch, standoff, "T"),
            FieldMap::zeros(w, h, pitch, standoff, "T")};
  }

  Vec3 at(uint32_t ix, uint32_t iy) const {
    return {bx.at(ix, iy), by.at(ix, iy), bz.at(ix, iy)};
  }
};

// Per-pixel fluorescence spectra on a shared frequency axis, pixel-major.
struct ODMRCube {
  uint32_t width = 0;
  uint32_t height = 0;
  double pitch = 0.0;
  std::vector<double> freqs;    // Hz, strictly increasing
  std::vector<double> spectra;  // width*height*n_freq

  size_t n_freq() const { return freqs.size(); }
  size_t n_pixels() const { return static_cast<size_t>(width) * height; }

  std::span<const double> spectrum(uint32_t ix, uint32_t iy) const {
    const size_t p = static_cast<size_t>(iy) * width + ix;
    return {spectra.data() + p * n_freq(), n_freq()};
  }
  std::span<double> spectrum(uint32_t ix, uint32_t iy) {
    const size_t p = static_cast<size_t>(iy) * width + ix;
    return {spectra.data() + p * n_freq(), n_freq()};
  }

  void validate() const {
    require(width >= 1 && height >= 1 && pitch > 0.0, "InvalidCube", "bad grid");
    require(freqs.size() >= 8, "InvalidCube", "need at least 8 frequency points");
    for (size_t i = 1; i < freqs.size(); ++i)
      require(freqs[i] > freqs[i - 1], "InvalidCube",
              "frequency axis not strictly increasing");
    require(spectra.size() == n_pixels() * n_freq(), "InvalidCube",
            "spectra length mismatch");
    for (double v : spectra)
      require(std::isfinite(v) && v >= 0.0 && v <= 1.2, "InvalidCube",
              "fluorescence outside [0, 1.2]");
  }
};

// Sheet current components at a stated depth, with the reconstruction filter
// recorded so results stay auditable.
struct CurrentDensityMap {
  FieldMap jx, jy;
  double depth = 0.0;              // meters, plane of the sheet
  double cutoff_wavenumber = 0.0;  // rad/m, 0 when not filtered
  std::string window_kind = "none";

  void validate() const {
    jx.validate();
    jy.validate();
    require(jx.coregistered(jy), "InvalidMap", "jx/jy not co-registered");
    require(jx.unit == "A/m" && jy.unit == "A/m", "InvalidMap",
            "current density must carry unit A/m");
  }

  double max_norm() const {
    double m = 0.0;
    for (size_t i = 0; i < jx.data.size(); ++i)
      m = std::max(m, std::hypot(jx.data[i], jy.data[i]));
    return m;
  }
};

inline FieldMap subtract(const FieldMap& on, const FieldMap& off) {
  require(on.coregistered(off), "GridMismatch",
          "subtract requires co-registered grids");
  require(on.unit == off.unit, "GridMismatch", "subtract requires matching units");
  FieldMap out = on;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = on.data[i] - off.data[i];
  return out;
}

// Differential map: on-state minus off-state, removing static background.
inline VectorFieldMap subtract(const VectorFieldMap& on, const VectorFieldMap& off) {
  return {subtract(on.bx, off.bx), subtract(on.by, off.by), subtract(on.bz, off.bz)};
}

}  // namespace mci
