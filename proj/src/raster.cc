#include "hsiband/raster.h"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>
#include <string>

#include "hsiband/errors.h"

namespace hsiband {
namespace {

constexpr std::size_t kHeaderBytes = 20;
constexpr unsigned char kVersion = 1;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const unsigned char> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  return v;
}

std::string at_offset(std::string_view what, std::size_t offset) {
  return "HSIB: " + std::string(what) + " at byte offset " + std::to_string(offset);
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace

HsiCube::HsiCube(std::size_t h, std::size_t w, std::size_t b)
    : height(h), width(w), bands(b), data(h * w * b, 0.0f) {}

LidarRaster::LidarRaster(std::size_t h, std::size_t w) : height(h), width(w), data(h * w, 0.0f) {}

std::vector<unsigned char> encode_hsib(std::size_t h, std::size_t w, std::size_t b,
                                       std::span<const float> payload) {
  constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
  if (h == 0 || w == 0 || b == 0) throw ArgumentError("HSIB: zero-sized dimension");
  if (h > kMax || w > kMax || b > kMax) throw ArgumentError("HSIB: dimension exceeds u32");
  if (payload.size() != h * w * b) throw ArgumentError("HSIB: payload size does not match dims");
  for (std::size_t i = 0; i < payload.size(); ++i) {
    if (!std::isfinite(payload[i]))
      throw ArgumentError("HSIB: non-finite value at element " + std::to_string(i));
  }

  std::vector<unsigned char> out;
  out.reserve(kHeaderBytes + 4 * payload.size());
  for (unsigned char ch : {'H', 'S', 'I', 'B', char(kVersion), char(0), char(0), char(0)}) out.push_back(ch);
  put_u32(out, static_cast<std::uint32_t>(h));
  put_u32(out, static_cast<std::uint32_t>(w));
  put_u32(out, static_cast<std::uint32_t>(b));
  for (float v : payload) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

HsiCube decode_hsib(std::span<const unsigned char> bytes) {
  if (bytes.size() < kHeaderBytes) throw DataError(at_offset("truncated header", bytes.size()));
  if (std::memcmp(bytes.data(), "HSIB", 4) != 0) throw DataError(at_offset("bad magic", 0));
  if (bytes[4] != kVersion) throw DataError(at_offset("unsupported version", 4));
  for (std::size_t i = 5; i < 8; ++i) {
    if (bytes[i] != 0) throw DataError(at_offset("non-zero padding", i));
  }
  const std::uint64_t h = get_u32(bytes, 8);
  const std::uint64_t w = get_u32(bytes, 12);
  const std::uint64_t b = get_u32(bytes, 16);
  if (h == 0 || w == 0 || b == 0) throw DataError(at_offset("zero dimension", 8));

  // h*w fits in 64 bits; guard the second product and the byte count.
  const std::uint64_t hw = h * w;
  constexpr std::uint64_t kLimit = std::numeric_limits<std::uint64_t>::max() / 4;
  if (hw > kLimit / b) throw DataError(at_offset("dimension overflow", 8));
  const std::uint64_t count = hw * b;
  const std::uint64_t available = (bytes.size() - kHeaderBytes) / 4;
  if (count > available) throw DataError(at_offset("truncated payload", bytes.size()));
  if (bytes.size() != kHeaderBytes + 4 * count)
    throw DataError(at_offset("trailing bytes", kHeaderBytes + 4 * count));

  HsiCube cube(h, w, b);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t offset = kHeaderBytes + 4 * i;
    const float v = std::bit_cast<float>(get_u32(bytes, offset));
    if (!std::isfinite(v)) throw DataError(at_offset("non-finite value", offset));
    cube.data[i] = v;
  }
  return cube;
}

Raster load_raster(const std::filesystem::path& path) {
  HsiCube cube = load_cube(path);
  if (cube.bands != 1) return cube;
  LidarRaster lidar;
  lidar.height = cube.height;
  lidar.width = cube.width;
  lidar.data = std::move(cube.data);
  return lidar;
}

HsiCube load_cube(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_hsib(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

LidarRaster load_lidar(const std::filesystem::path& path) {
  Raster r = load_raster(path);
  if (auto* lidar = std::get_if<LidarRaster>(&r)) return std::move(*lidar);
  throw DataError(path.string() + ": expected a single-band raster");
}

void save_raster(const HsiCube& cube, const std::filesystem::path& path) {
  write_file(path, encode_hsib(cube.height, cube.width, cube.bands, cube.data));
}

void save_raster(const LidarRaster& lidar, const std::filesystem::path& path) {
  write_file(path, encode_hsib(lidar.height, lidar.width, 1, lidar.data));
}

namespace {

void min_max_scale(std::span<float> values) {
  if (values.empty()) return;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double range = static_cast<double>(*hi_it) - lo;
  for (float& v : values) {
    v = range > 0.0 ? static_cast<float>((v - lo) / range) : 0.0f;
  }
}

}  // namespace

HsiCube normalize_per_band(const HsiCube& cube) {
  HsiCube out = cube;
  for (std::size_t b = 0; b < out.bands; ++b) min_max_scale(out.band(b));
  return out;
}

LidarRaster normalize(const LidarRaster& lidar) {
  LidarRaster out = lidar;
  min_max_scale(out.data);
  return out;
}

std::size_t patch_count(std::size_t h, std::size_t w, std::size_t p, std::size_t stride) {
  if (p == 0 || stride == 0 || p > h || p > w) return 0;
  return ((h - p) / stride + 1) * ((w - p) / stride + 1);
}

PatchSet extract_patches(const HsiCube& cube, const LidarRaster& lidar, std::size_t p,
                         std::size_t stride) {
  if (cube.height != lidar.height || cube.width != lidar.width)
    throw ArgumentError("cube and LiDAR raster dimensions differ");
  if (p == 0 || p % 2 == 0) throw ArgumentError("patch size must be odd and positive");
  if (stride == 0) throw ArgumentError("stride must be positive");
  if (p > cube.height || p > cube.width)
    throw ArgumentError("patch size " + std::to_string(p) + " exceeds raster " +
                        std::to_string(cube.height) + "x" + std::to_string(cube.width));

  PatchSet set;
  set.patch_size = p;
  set.bands = cube.bands;
  set.count = patch_count(cube.height, cube.width, p, stride);
  set.hsi.reserve(set.count * p * p * cube.bands);
  set.lidar.reserve(set.count * p * p);
  set.centers.reserve(set.count);

  for (std::size_t top = 0; top + p <= cube.height; top += stride) {
    for (std::size_t left = 0; left + p <= cube.width; left += stride) {
      for (std::size_t r = 0; r < p; ++r) {
        for (std::size_t c = 0; c < p; ++c) {
          for (std::size_t b = 0; b < cube.bands; ++b) set.hsi.push_back(cube.at(b, top + r, left + c));
          set.lidar.push_back(lidar.at(top + r, left + c));
        }
      }
      set.centers.emplace_back(top + p / 2, left + p / 2);
    }
  }
  return set;
}

LabelMap parse_labels(std::string_view text, std::size_t height, std::size_t width) {
  LabelMap labels;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    const std::string where = "labels line " + std::to_string(line_no);
    long long fields[3];
    std::string_view rest = line;
    for (int f = 0; f < 3; ++f) {
      const auto comma = rest.find(',');
      if ((f < 2) == (comma == std::string_view::npos))
        throw DataError(where + ": expected three comma-separated fields");
      std::string_view token = rest.substr(0, comma);
      while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
      while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
      const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), fields[f]);
      if (ec != std::errc{} || ptr != token.data() + token.size() || token.empty())
        throw DataError(where + ": field '" + std::string(token) + "' is not an integer");
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    }
    if (fields[0] < 0 || fields[1] < 0 || static_cast<std::size_t>(fields[0]) >= height ||
        static_cast<std::size_t>(fields[1]) >= width)
      throw DataError(where + ": coordinate out of raster bounds");
    if (fields[2] < 1 || fields[2] > std::numeric_limits<int>::max())
      throw DataError(where + ": class id must be >= 1");

    const LabelEntry e{static_cast<std::size_t>(fields[0]), static_cast<std::size_t>(fields[1]),
                       static_cast<int>(fields[2])};
    if (!seen.emplace(e.row, e.col).second) throw DataError(where + ": duplicate coordinate");
    labels.entries.push_back(e);
    labels.class_count = std::max(labels.class_count, e.class_id);
  }
  return labels;
}

LabelMap load_labels(const std::filesystem::path& path, std::size_t height, std::size_t width) {
  const auto bytes = read_file(path);
  try {
    return parse_labels({reinterpret_cast<const char*>(bytes.data()), bytes.size()}, height, width);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_labels(const LabelMap& labels, const std::filesystem::path& path) {
  std::ostringstream out;
  for (const auto& e : labels.entries) out << e.row << ',' << e.col << ',' << e.class_id << '\n';
  const std::string text = out.str();
  write_file(path, {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

}  // namespace hsiband
