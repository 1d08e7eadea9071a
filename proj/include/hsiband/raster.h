#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace hsiband {

// H x W x B hyperspectral cube stored band-sequentially: [band][row][col].
struct HsiCube {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t bands = 0;
  std::vector<float> data;

  HsiCube() = default;
  HsiCube(std::size_t h, std::size_t w, std::size_t b);

  std::size_t pixels() const { return height * width; }
  float at(std::size_t band, std::size_t row, std::size_t col) const {
    return data[(band * height + row) * width + col];
  }
  float& at(std::size_t band, std::size_t row, std::size_t col) {
    return data[(band * height + row) * width + col];
  }
  std::span<const float> band(std::size_t b) const {
    return {data.data() + b * pixels(), pixels()};
  }
  std::span<float> band(std::size_t b) { return {data.data() + b * pixels(), pixels()}; }
};

// Elevation raster co-registered with a cube, [row][col].
struct LidarRaster {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  LidarRaster() = default;
  LidarRaster(std::size_t h, std::size_t w);

  float at(std::size_t row, std::size_t col) const { return data[row * width + col]; }
  float& at(std::size_t row, std::size_t col) { return data[row * width + col]; }
};

// Paired p x p windows cut from a cube and its LiDAR raster.
struct PatchSet {
  std::size_t count = 0;
  std::size_t patch_size = 0;
  std::size_t bands = 0;
  std::vector<float> hsi;    // [sample][row][col][band]
  std::vector<float> lidar;  // [sample][row][col]
  std::vector<std::pair<std::size_t, std::size_t>> centers;

  std::size_t pixels_per_patch() const { return patch_size * patch_size; }
  std::span<const float> hsi_patch(std::size_t n) const {
    const std::size_t len = pixels_per_patch() * bands;
    return {hsi.data() + n * len, len};
  }
  std::span<const float> lidar_patch(std::size_t n) const {
    return {lidar.data() + n * pixels_per_patch(), pixels_per_patch()};
  }
};

struct LabelEntry {
  std::size_t row = 0;
  std::size_t col = 0;
  int class_id = 0;
  bool operator==(const LabelEntry&) const = default;
};

struct LabelMap {
  std::vector<LabelEntry> entries;
  int class_count = 0;
};

using Raster = std::variant<HsiCube, LidarRaster>;

// HSIB container. Files with B == 1 come back as LidarRaster.
Raster load_raster(const std::filesystem::path& path);
// Loads any HSIB file as a cube, including single-band ones.
HsiCube load_cube(const std::filesystem::path& path);
// Loads an HSIB file that must have B == 1.
LidarRaster load_lidar(const std::filesystem::path& path);

void save_raster(const HsiCube& cube, const std::filesystem::path& path);
void save_raster(const LidarRaster& lidar, const std::filesystem::path& path);

// In-memory codec used by the file functions.
std::vector<unsigned char> encode_hsib(std::size_t h, std::size_t w, std::size_t b,
                                       std::span<const float> payload);
HsiCube decode_hsib(std::span<const unsigned char> bytes);

// Per-band min-max scaling to [0, 1]; constant bands become zeros.
HsiCube normalize_per_band(const HsiCube& cube);
LidarRaster normalize(const LidarRaster& lidar);

// Fully interior p x p windows at the given stride, row-major over window
// positions. Throws ArgumentError when p is even, p > min(H, W), stride == 0
// or the rasters disagree in size.
PatchSet extract_patches(const HsiCube& cube, const LidarRaster& lidar, std::size_t p,
                         std::size_t stride = 1);

std::size_t patch_count(std::size_t h, std::size_t w, std::size_t p, std::size_t stride);

// Labels CSV: "row,col,class_id" per line, zero-based coordinates, 1-based
// classes. Coordinates are validated against the raster size.
LabelMap parse_labels(std::string_view text, std::size_t height, std::size_t width);
LabelMap load_labels(const std::filesystem::path& path, std::size_t height, std::size_t width);
void save_labels(const LabelMap& labels, const std::filesystem::path& path);

}  // namespace hsiband
