#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "ahsl/error.hpp"
#include "ahsl/volume.hpp"

namespace ahsl {

static_assert(std::endian::native == std::endian::little, "svol I/O assumes a little-endian host");

using SvolVolume = std::variant<ScalarField4D, LabelVolume>;

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string svol_header(const GridShape& s, const char* dtype, const std::string& semantics) {
  std::string h = "{\"dims\":[";
  h += std::to_string(s.depth) + "," + std::to_string(s.height) + "," + std::to_string(s.width);
  h += "],\"channels\":" + std::to_string(s.channels);
  h += ",\"dtype\":\"" + std::string(dtype) + "\"";
  h += ",\"spacing\":[" + format_double(s.spacing[0]) + "," + format_double(s.spacing[1]) + "," +
       format_double(s.spacing[2]) + "]";
  h += ",\"semantics\":\"" + semantics + "\"}";
  return h;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(errc::io_failure, "cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace detail

constexpr char kSvolMagic[] = "SVOL1\n";

inline void write_svol(const ScalarField4D& field, const std::filesystem::path& path,
                       const std::string& semantics = "field") {
  field.validate();
  auto out = detail::open_out(path);
  out << kSvolMagic << detail::svol_header(field.shape, "f32", semantics) << '\n';
  std::vector<float> payload(field.data.size());
  for (std::size_t i = 0; i < field.data.size(); ++i) payload[i] = static_cast<float>(field.data[i]);
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!out) fail(errc::io_failure, "write failed for " + path.string());
}

inline void write_svol(const LabelVolume& labels, const std::filesystem::path& path) {
  labels.validate();
  auto out = detail::open_out(path);
  out << kSvolMagic << detail::svol_header(labels.shape, "u8", semantics_name(labels.semantics))
      << '\n';
  out.write(reinterpret_cast<const char*>(labels.data.data()),
            static_cast<std::streamsize>(labels.data.size()));
  if (!out) fail(errc::io_failure, "write failed for " + path.string());
}

inline SvolVolume read_svol(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_failure, "cannot open " + path.string());

  char magic[6];
  in.read(magic, 6);
  if (in.gcount() != 6 || std::memcmp(magic, kSvolMagic, 6) != 0) {
    fail(errc::bad_magic, path.string() + ": missing SVOL1 magic");
  }

  std::string header_line;
  if (!std::getline(in, header_line)) fail(errc::bad_header, path.string() + ": truncated header");

  nlohmann::json header = nlohmann::json::parse(header_line, nullptr, false);
  if (header.is_discarded() || !header.is_object()) {
    fail(errc::bad_header, path.string() + ": header is not a JSON object");
  }
  for (const char* key : {"dims", "channels", "dtype", "spacing", "semantics"}) {
    if (!header.contains(key)) fail(errc::bad_header, path.string() + ": header missing key " + key);
  }
  if (!header["dims"].is_array() || header["dims"].size() != 3 ||
      !header["spacing"].is_array() || header["spacing"].size() != 3 ||
      !header["channels"].is_number_integer() || !header["dtype"].is_string() ||
      !header["semantics"].is_string()) {
    fail(errc::bad_header, path.string() + ": malformed header field");
  }

  GridShape shape;
  shape.depth = header["dims"][0].get<int>();
  shape.height = header["dims"][1].get<int>();
  shape.width = header["dims"][2].get<int>();
  shape.channels = header["channels"].get<int>();
  for (int i = 0; i < 3; ++i) shape.spacing[static_cast<std::size_t>(i)] = header["spacing"][static_cast<std::size_t>(i)].get<double>();
  try {
    shape.validate();
  } catch (const Error& e) {
    fail(errc::bad_header, path.string() + ": " + e.what());
  }

  const std::string dtype = header["dtype"].get<std::string>();
  const std::string semantics = header["semantics"].get<std::string>();

  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (dtype == "u8") {
    if (shape.channels != 1) fail(errc::bad_header, path.string() + ": u8 volumes must have 1 channel");
    LabelSemantics sem;
    if (semantics == "bv_labels") sem = LabelSemantics::bv_labels;
    else if (semantics == "lobe_labels") sem = LabelSemantics::lobe_labels;
    else if (semantics == "segment_partition") sem = LabelSemantics::segment_partition;
    else fail(errc::bad_header, path.string() + ": unknown label semantics '" + semantics + "'");
    if (payload.size() != static_cast<std::size_t>(shape.voxels())) {
      fail(errc::payload_mismatch, path.string() + ": header declares " +
                                       std::to_string(shape.voxels()) + " voxels but payload has " +
                                       std::to_string(payload.size()) + " bytes");
    }
    LabelVolume labels = LabelVolume::zeros(shape, sem);
    std::memcpy(labels.data.data(), payload.data(), payload.size());
    labels.validate();
    return labels;
  }
  if (dtype == "f32") {
    const std::size_t expect = static_cast<std::size_t>(shape.values()) * sizeof(float);
    if (payload.size() != expect) {
      fail(errc::payload_mismatch, path.string() + ": header declares " + std::to_string(expect) +
                                       " payload bytes but file has " + std::to_string(payload.size()));
    }
    ScalarField4D field = ScalarField4D::zeros(shape);
    const float* src = reinterpret_cast<const float*>(payload.data());
    for (std::size_t i = 0; i < field.data.size(); ++i) field.data[i] = static_cast<double>(src[i]);
    field.validate();
    return field;
  }
  fail(errc::unknown_dtype, path.string() + ": unknown dtype '" + dtype + "'");
}

inline ScalarField4D read_svol_field(const std::filesystem::path& path) {
  SvolVolume v = read_svol(path);
  if (!std::holds_alternative<ScalarField4D>(v)) {
    fail(errc::bad_argument, path.string() + ": expected an f32 field, found a label volume");
  }
  return std::get<ScalarField4D>(std::move(v));
}

inline LabelVolume read_svol_labels(const std::filesystem::path& path) {
  SvolVolume v = read_svol(path);
  if (!std::holds_alternative<LabelVolume>(v)) {
    fail(errc::bad_argument, path.string() + ": expected a label volume, found an f32 field");
  }
  return std::get<LabelVolume>(std::move(v));
}

// ---------------------------------------------------------------------------
// PGM slice export (binary P5, maxval 255).

enum class SliceAxis { z, y, x };

inline SliceAxis parse_axis(const std::string& axis) {
  if (axis == "z") return SliceAxis::z;
  if (axis == "y") return SliceAxis::y;
  if (axis == "x") return SliceAxis::x;
  fail(errc::out_of_range, "axis must be one of z, y, x (got '" + axis + "')");
}

namespace detail {

inline std::pair<int, int> slice_extent(const GridShape& s, SliceAxis axis) {
  switch (axis) {
    case SliceAxis::z: return {s.height, s.width};  // rows y, cols x
    case SliceAxis::y: return {s.depth, s.width};   // rows z, cols x
    case SliceAxis::x: return {s.depth, s.height};  // rows z, cols y
  }
  return {0, 0};
}

inline void check_slice_index(const GridShape& s, SliceAxis axis, int index) {
  const int extent = axis == SliceAxis::z ? s.depth : axis == SliceAxis::y ? s.height : s.width;
  if (index < 0 || index >= extent) {
    fail(errc::out_of_range,
         "slice index " + std::to_string(index) + " out of range [0, " + std::to_string(extent) + ")");
  }
}

template <class Fetch>
void write_pgm(const std::filesystem::path& path, int rows, int cols, Fetch&& fetch) {
  auto out = open_out(path);
  out << "P5\n" << cols << ' ' << rows << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(cols));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) row[static_cast<std::size_t>(c)] = fetch(r, c);
    out.write(reinterpret_cast<const char*>(row.data()), cols);
  }
  if (!out) fail(errc::io_failure, "write failed for " + path.string());
}

}  // namespace detail

/// Fixed 19-entry gray ramp for label ids 0..18.
inline std::uint8_t label_gray(int id) { return static_cast<std::uint8_t>(id * 255 / 18); }

inline void export_slice_pgm(const LabelVolume& labels, SliceAxis axis, int index,
                             const std::filesystem::path& path) {
  labels.validate();
  detail::check_slice_index(labels.shape, axis, index);
  const auto [rows, cols] = detail::slice_extent(labels.shape, axis);
  detail::write_pgm(path, rows, cols, [&](int r, int c) -> std::uint8_t {
    switch (axis) {
      case SliceAxis::z: return label_gray(labels.at(index, r, c));
      case SliceAxis::y: return label_gray(labels.at(r, index, c));
      default: return label_gray(labels.at(r, c, index));
    }
  });
}

inline void export_slice_pgm(const ScalarField4D& field, SliceAxis axis, int index, int channel,
                             const std::filesystem::path& path) {
  field.validate();
  if (channel < 0 || channel >= field.shape.channels) {
    fail(errc::out_of_range, "channel " + std::to_string(channel) + " out of range [0, " +
                                 std::to_string(field.shape.channels) + ")");
  }
  detail::check_slice_index(field.shape, axis, index);
  const auto [rows, cols] = detail::slice_extent(field.shape, axis);

  auto value = [&](int r, int c) -> double {
    switch (axis) {
      case SliceAxis::z: return field.at(channel, index, r, c);
      case SliceAxis::y: return field.at(channel, r, index, c);
      default: return field.at(channel, r, c, index);
    }
  };
  double lo = value(0, 0), hi = value(0, 0);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double v = value(r, c);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  detail::write_pgm(path, rows, cols, [&](int r, int c) -> std::uint8_t {
    if (hi == lo) return 128;  // constant slice renders mid-gray
    const double t = (value(r, c) - lo) / (hi - lo);
    return static_cast<std::uint8_t>(std::lround(t * 255.0));
  });
}

}  // namespace ahsl
