#pragma once

// Bit-exact binary containers and portable rendering.
//
// QFM ("QFMP"): magic, version u16=1, width u32, height u32, pitch f64,
//   standoff f64, n_channels u16, then per channel a length-prefixed ASCII
//   name and unit, then the channel data blocks in declared order, each
//   width*height f64, row-major, row 0 = min y. All integers and floats are
//   little-endian; floats are IEEE-754 binary64.
//
// Channel names may carry ";key=value" attributes after the base name
// (e.g. "Jx;cutoff_rad_per_m=...;window=hann"); readers match on the base.
// For current-density stacks the header standoff field holds the sheet
// depth, since no sensor plane is involved.
//
// QDCB ("QDCB"): magic, version u16=1, width u32, height u32, pitch f64,
//   n_freq u32, freqs f64[n_freq], then per pixel (row-major) n_freq f64.
//
// PGM: binary P5, maxval 65535, big-endian samples. Rows are written from
// maximum y down so +y points up in the rendered image.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mci/field_map.hpp"

namespace mci {

struct Channel {
  std::string name;
  std::string unit;
  std::vector<double> data;

  // Base name before any ";key=value" attributes.
  std::string base_name() const { return name.substr(0, name.find(';')); }
};

// A named stack of co-registered scalar grids; the in-memory form of a QFM
// file. Typed containers are views extracted by channel name.
struct GridStack {
  uint32_t width = 0;
  uint32_t height = 0;
  double pitch = 0.0;
  double standoff = 0.0;
  std::vector<Channel> channels;

  int find(const std::string& base) const {
    for (size_t i = 0; i < channels.size(); ++i)
      if (channels[i].base_name() == base) return static_cast<int>(i);
    return -1;
  }

  FieldMap field(const std::string& base) const {
    const int i = find(base);
    require(i >= 0, "MissingChannel", "no channel named '" + base + "'");
    FieldMap m;
    m.width = width;
    m.height = height;
    m.pitch = pitch;
    m.standoff = standoff;
    m.unit = channels[i].unit;
    m.data = channels[i].data;
    return m;
  }

  VectorFieldMap vector_field() const {
    return {field("Bx"), field("By"), field("Bz")};
  }

  CurrentDensityMap current_density() const {
    CurrentDensityMap j;
    j.jx = field("Jx");
    j.jy = field("Jy");
    j.depth = standoff;  // by convention for J stacks
    j.jx.standoff = 0.0;
    j.jy.standoff = 0.0;
    const int i = find("Jx");
    for (const auto& [key, value] : parse_attributes(channels[i].name)) {
      if (key == "cutoff_rad_per_m") j.cutoff_wavenumber = std::stod(value);
      if (key == "window") j.window_kind = value;
    }
    return j;
  }

  static std::vector<std::pair<std::string, std::string>> parse_attributes(
      const std::string& name) {
    std::vector<std::pair<std::string, std::string>> out;
    size_t pos = name.find(';');
    while (pos != std::string::npos) {
      const size_t next = name.find(';', pos + 1);
      const std::string item = name.substr(pos + 1, next == std::string::npos
                                                        ? std::string::npos
                                                        : next - pos - 1);
      const size_t eq = item.find('=');
      if (eq != std::string::npos)
        out.emplace_back(item.substr(0, eq), item.substr(eq + 1));
      pos = next;
    }
    return out;
  }
};

inline GridStack stack_from(const FieldMap& m, const std::string& name) {
  m.validate();
  GridStack s;
  s.width = m.width;
  s.height = m.height;
  s.pitch = m.pitch;
  s.standoff = m.standoff;
  s.channels.push_back({name, m.unit, m.data});
  return s;
}

inline GridStack stack_from(const VectorFieldMap& f) {
  f.validate();
  GridStack s;
  s.width = f.bx.width;
  s.height = f.bx.height;
  s.pitch = f.bx.pitch;
  s.standoff = f.bx.standoff;
  s.channels.push_back({"Bx", "T", f.bx.data});
  s.channels.push_back({"By", "T", f.by.data});
  s.channels.push_back({"Bz", "T", f.bz.data});
  return s;
}

inline GridStack stack_from(const CurrentDensityMap& j) {
  j.validate();
  GridStack s;
  s.width = j.jx.width;
  s.height = j.jx.height;
  s.pitch = j.jx.pitch;
  s.standoff = j.depth;
  std::string jx_name = "Jx";
  if (j.cutoff_wavenumber > 0.0) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), ";cutoff_rad_per_m=%.17g", j.cutoff_wavenumber);
    jx_name += buf;
    jx_name += ";window=" + j.window_kind;
  }
  s.channels.push_back({jx_name, "A/m", j.jx.data});
  s.channels.push_back({"Jy", "A/m", j.jy.data});
  return s;
}

namespace detail {

inline void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double v) {
  const uint64_t bits = std::bit_cast<uint64_t>(v);
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  explicit ByteReader(std::string bytes) : bytes_(std::move(bytes)) {}

  uint16_t u16() { return static_cast<uint16_t>(byte() | (byte() << 8)); }
  uint32_t u32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(byte()) << (8 * i);
    return v;
  }
  double f64() {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(byte()) << (8 * i);
    return std::bit_cast<double>(v);
  }
  std::string str(size_t n) {
    require(pos_ + n <= bytes_.size(), "CorruptFile", "truncated file");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  uint32_t byte() {
    require(pos_ < bytes_.size(), "CorruptFile", "truncated file");
    return static_cast<unsigned char>(bytes_[pos_++]);
  }
  std::string bytes_;
  size_t pos_ = 0;
};

// Write-then-rename so partially written outputs never appear under the
// final name.
inline size_t write_file_atomic(const std::filesystem::path& path,
                                const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), "IoError", "cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(out.good(), "IoError", "short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  require(!ec, "IoError", "cannot rename onto '" + path.string() + "'");
  return bytes.size();
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "IoError", "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

}  // namespace detail

inline size_t write_qfm(const GridStack& stack, const std::filesystem::path& path) {
  require(stack.width >= 1 && stack.height >= 1 && stack.pitch > 0.0,
          "InvalidMap", "bad stack header");
  require(!stack.channels.empty() && stack.channels.size() <= 0xFFFF,
          "InvalidMap", "bad channel count");
  const size_t n = static_cast<size_t>(stack.width) * stack.height;
  for (const auto& c : stack.channels) {
    require(c.name.size() >= 1 && c.name.size() <= 255, "BadChannelName",
            "channel name length must be 1..255 bytes");
    require(c.unit.size() <= 255, "BadChannelName", "unit longer than 255 bytes");
    require(c.data.size() == n, "InvalidMap", "channel data length mismatch");
    for (double v : c.data)
      require(std::isfinite(v), "InvalidMap",
              "non-finite value in channel '" + c.name + "'");
  }

  std::string bytes;
  bytes.reserve(40 + stack.channels.size() * (2 + 255) + n * 8 * stack.channels.size());
  bytes += "QFMP";
  detail::put_u16(bytes, 1);
  detail::put_u32(bytes, stack.width);
  detail::put_u32(bytes, stack.height);
  detail::put_f64(bytes, stack.pitch);
  detail::put_f64(bytes, stack.standoff);
  detail::put_u16(bytes, static_cast<uint16_t>(stack.channels.size()));
  for (const auto& c : stack.channels) {
    bytes.push_back(static_cast<char>(c.name.size()));
    bytes += c.name;
    bytes.push_back(static_cast<char>(c.unit.size()));
    bytes += c.unit;
  }
  for (const auto& c : stack.channels)
    for (double v : c.data) detail::put_f64(bytes, v);
  return detail::write_file_atomic(path, bytes);
}

inline GridStack read_qfm(const std::filesystem::path& path) {
  detail::ByteReader r(detail::read_file(path));
  require(r.str(4) == "QFMP", "CorruptFile", "bad QFM magic");
  require(r.u16() == 1, "CorruptFile", "unsupported QFM version");
  GridStack s;
  s.width = r.u32();
  s.height = r.u32();
  s.pitch = r.f64();
  s.standoff = r.f64();
  const uint16_t n_channels = r.u16();
  require(n_channels >= 1, "CorruptFile", "QFM with no channels");
  for (uint16_t i = 0; i < n_channels; ++i) {
    Channel c;
    const auto name_len = static_cast<unsigned char>(r.str(1)[0]);
    c.name = r.str(name_len);
    const auto unit_len = static_cast<unsigned char>(r.str(1)[0]);
    c.unit = r.str(unit_len);
    s.channels.push_back(std::move(c));
  }
  const size_t n = static_cast<size_t>(s.width) * s.height;
  for (auto& c : s.channels) {
    c.data.resize(n);
    for (size_t i = 0; i < n; ++i) c.data[i] = r.f64();
  }
  require(r.exhausted(), "CorruptFile", "trailing bytes in QFM file");
  return s;
}

inline size_t write_qdcb(const ODMRCube& cube, const std::filesystem::path& path) {
  cube.validate();
  std::string bytes;
  bytes.reserve(30 + cube.freqs.size() * 8 + cube.spectra.size() * 8);
  bytes += "QDCB";
  detail::put_u16(bytes, 1);
  detail::put_u32(bytes, cube.width);
  detail::put_u32(bytes, cube.height);
  detail::put_f64(bytes, cube.pitch);
  detail::put_u32(bytes, static_cast<uint32_t>(cube.freqs.size()));
  for (double f : cube.freqs) detail::put_f64(bytes, f);
  for (double v : cube.spectra) detail::put_f64(bytes, v);
  return detail::write_file_atomic(path, bytes);
}

inline ODMRCube read_qdcb(const std::filesystem::path& path) {
  detail::ByteReader r(detail::read_file(path));
  require(r.str(4) == "QDCB", "CorruptFile", "bad QDCB magic");
  require(r.u16() == 1, "CorruptFile", "unsupported QDCB version");
  ODMRCube cube;
  cube.width = r.u32();
  cube.height = r.u32();
  cube.pitch = r.f64();
  const uint32_t n_freq = r.u32();
  cube.freqs.resize(n_freq);
  for (auto& f : cube.freqs) f = r.f64();
  cube.spectra.resize(cube.n_pixels() * n_freq);
  for (auto& v : cube.spectra) v = r.f64();
  require(r.exhausted(), "CorruptFile", "trailing bytes in QDCB file");
  cube.validate();
  return cube;
}

// 16-bit grayscale render. With no explicit range the map autoscales to
// [min, max]; a constant map renders mid-gray.
inline size_t render_pgm(const FieldMap& map, std::optional<double> low,
                         std::optional<double> high,
                         const std::filesystem::path& path) {
  map.validate();
  require(low.has_value() == high.has_value(), "BadRange",
          "render range requires both low and high");
  double lo, hi;
  if (low) {
    lo = *low;
    hi = *high;
    require(lo < hi, "BadRange", "render range requires low < high");
  } else {
    lo = map.min_value();
    hi = map.max_value();
  }
  std::string bytes = "P5\n" + std::to_string(map.width) + " " +
                      std::to_string(map.height) + "\n65535\n";
  bytes.reserve(bytes.size() + map.size() * 2);
  for (uint32_t jj = 0; jj < map.height; ++jj) {
    const uint32_t j = map.height - 1 - jj;  // top image row = max y
    for (uint32_t i = 0; i < map.width; ++i) {
      const double v = map.at(i, j);
      double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
      t = std::clamp(t, 0.0, 1.0);
      const auto g = static_cast<uint16_t>(std::llround(65535.0 * t));
      bytes.push_back(static_cast<char>((g >> 8) & 0xFF));  // big-endian
      bytes.push_back(static_cast<char>(g & 0xFF));
    }
  }
  return detail::write_file_atomic(path, bytes);
}

}  // namespace mci
