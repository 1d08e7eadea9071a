#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hsiband/raster.h"

namespace hsiband {

struct SynthSpec {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t bands = 12;
  std::size_t informative = 3;  // k_true
  std::size_t classes = 4;
  double sigma = 0.02;
  // Share of the non-informative bands that are affine copies of an
  // informative band; the rest are pure noise.
  double redundant_fraction = 2.0 / 3.0;
  // Class layout: grid_rows x grid_cols rectangles, cell (i, j) holding
  // class ((i + j) mod C) + 1.
  std::size_t grid_rows = 4;
  std::size_t grid_cols = 4;
  // Upper bound on the Pearson correlation between the class profiles of
  // any two informative bands; signatures are redrawn until it holds.
  // Negative values force the informative groups apart.
  double max_profile_correlation = -0.2;
  std::uint64_t seed = 42;

  // Throws ArgumentError when the spec is unusable.
  void validate() const;
};

enum class BandRole { informative, redundant, noise };

struct BandInfo {
  BandRole role = BandRole::noise;
  std::size_t source = 0;  // informative band copied (redundant only)
  double gain = 0.0;       // a
  double offset = 0.0;     // b, or the noise mean for noise bands
};

struct SynthTruth {
  std::vector<std::size_t> informative;          // ascending
  std::vector<std::vector<double>> signatures;   // [class][informative band]
  std::vector<double> lidar_heights;             // [class]
  std::vector<BandInfo> roles;                   // [band]
};

struct SynthScene {
  HsiCube cube;
  LidarRaster lidar;
  LabelMap labels;
  SynthTruth truth;
};

SynthScene generate(const SynthSpec& spec);

// Fraction of the informative bands represented in the selection, either by
// the band itself or by one of its redundant copies.
double oracle_check(std::span<const std::size_t> selection, const SynthTruth& truth);

// Expected oracle_check score of k bands drawn uniformly without replacement.
double expected_random_recovery(const SynthTruth& truth, std::size_t k);

// Bands with the noise role, ascending.
std::vector<std::size_t> noise_bands(const SynthTruth& truth);

}  // namespace hsiband
