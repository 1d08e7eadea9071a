#include "hsiband/synth.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hsiband/errors.h"
#include "hsiband/rng.h"

namespace hsiband {
namespace {

constexpr int kMaxRetries = 1000;
constexpr double kSignatureLo = 0.3;
constexpr double kSignatureHi = 0.7;

std::size_t class_at(const SynthSpec& s, std::size_t r, std::size_t c) {
  const std::size_t i = r * s.grid_rows / s.height;
  const std::size_t j = c * s.grid_cols / s.width;
  return (i + j) % s.classes;
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

// Pearson correlation of two per-class profiles weighted by class area.
double weighted_corr(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& w) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  double mx = 0, my = 0;
  for (std::size_t c = 0; c < w.size(); ++c) {
    mx += w[c] * x[c];
    my += w[c] * y[c];
  }
  mx /= total;
  my /= total;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t c = 0; c < w.size(); ++c) {
    sxy += w[c] * (x[c] - mx) * (y[c] - my);
    sxx += w[c] * (x[c] - mx) * (x[c] - mx);
    syy += w[c] * (y[c] - my) * (y[c] - my);
  }
  if (sxx <= 0 || syy <= 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

bool signatures_ok(const SynthSpec& s, const std::vector<std::vector<double>>& sig,
                   const std::vector<double>& area) {
  for (std::size_t a = 0; a < s.classes; ++a) {
    for (std::size_t b = a + 1; b < s.classes; ++b) {
      double d2 = 0;
      for (std::size_t j = 0; j < s.informative; ++j) d2 += (sig[a][j] - sig[b][j]) * (sig[a][j] - sig[b][j]);
      if (std::sqrt(d2) < 4.0 * s.sigma) return false;
    }
  }
  for (std::size_t i = 0; i < s.informative; ++i) {
    std::vector<double> pi(s.classes);
    for (std::size_t c = 0; c < s.classes; ++c) pi[c] = sig[c][i];
    for (std::size_t j = i + 1; j < s.informative; ++j) {
      std::vector<double> pj(s.classes);
      for (std::size_t c = 0; c < s.classes; ++c) pj[c] = sig[c][j];
      if (weighted_corr(pi, pj, area) > s.max_profile_correlation) return false;
    }
  }
  return true;
}

}  // namespace

void SynthSpec::validate() const {
  if (height == 0 || width == 0) throw ArgumentError("synth: raster dimensions must be positive");
  if (bands == 0) throw ArgumentError("synth: bands must be positive");
  if (informative == 0 || informative > bands)
    throw ArgumentError("synth: informative band count " + std::to_string(informative) + " must be in [1, " +
                        std::to_string(bands) + "]");
  if (classes < 2) throw ArgumentError("synth: at least two classes are required");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ArgumentError("synth: sigma must be non-negative");
  if (!(redundant_fraction >= 0.0 && redundant_fraction <= 1.0))
    throw ArgumentError("synth: redundant_fraction must be in [0, 1]");
  if (grid_rows == 0 || grid_cols == 0 || grid_rows > height || grid_cols > width)
    throw ArgumentError("synth: class grid must fit the raster");
  if (grid_rows * grid_cols < classes) throw ArgumentError("synth: class grid has fewer cells than classes");
  if (!(max_profile_correlation >= -0.5 && max_profile_correlation <= 1.0))
    throw ArgumentError("synth: max_profile_correlation must be in [-0.5, 1]");
}

SynthScene generate(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t B = spec.bands;
  const std::size_t C = spec.classes;
  const std::size_t K = spec.informative;
  SynthScene scene;
  SynthTruth& truth = scene.truth;

  // 1. Informative band indices: first K of a Fisher-Yates shuffle of [0, B).
  std::vector<std::size_t> perm(B);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(perm));
  truth.informative.assign(perm.begin(), perm.begin() + K);
  std::sort(truth.informative.begin(), truth.informative.end());

  std::vector<std::size_t> labels(spec.height * spec.width);
  std::vector<double> area(C, 0.0);
  for (std::size_t r = 0; r < spec.height; ++r) {
    for (std::size_t c = 0; c < spec.width; ++c) {
      labels[r * spec.width + c] = class_at(spec, r, c);
      area[labels[r * spec.width + c]] += 1.0;
    }
  }
  if (std::any_of(area.begin(), area.end(), [](double a) { return a == 0.0; }))
    throw ArgumentError("synth: class layout leaves a class without pixels");

  // 2. Class signatures, class-major, redrawn until separated.
  bool found = false;
  for (int attempt = 0; attempt < kMaxRetries && !found; ++attempt) {
    truth.signatures.assign(C, std::vector<double>(K));
    for (auto& row : truth.signatures)
      for (double& v : row) v = rng.uniform(kSignatureLo, kSignatureHi);
    found = signatures_ok(spec, truth.signatures, area);
  }
  if (!found) throw ArgumentError("synth: could not draw separated class signatures");

  // 3. LiDAR: classes 2m and 2m+1 share elevation level m.
  const std::size_t levels = (C + 1) / 2;
  std::vector<double> level(levels);
  found = false;
  for (int attempt = 0; attempt < kMaxRetries && !found; ++attempt) {
    for (double& v : level) v = rng.uniform(0.2, 0.8);
    found = true;
    for (std::size_t a = 0; a < levels; ++a)
      for (std::size_t b = a + 1; b < levels; ++b) found = found && std::abs(level[a] - level[b]) >= 4.0 * spec.sigma;
  }
  if (!found) throw ArgumentError("synth: could not draw separated LiDAR levels");
  truth.lidar_heights.resize(C);
  for (std::size_t c = 0; c < C; ++c) truth.lidar_heights[c] = level[c / 2];

  // 4. Roles of the non-informative bands.
  truth.roles.assign(B, BandInfo{});
  std::vector<std::size_t> others;
  for (std::size_t b = 0; b < B; ++b) {
    if (std::binary_search(truth.informative.begin(), truth.informative.end(), b)) {
      truth.roles[b].role = BandRole::informative;
      truth.roles[b].source = b;
    } else {
      others.push_back(b);
    }
  }
  rng.shuffle(std::span<std::size_t>(others));
  const auto redundant_count =
      static_cast<std::size_t>(std::lround(spec.redundant_fraction * static_cast<double>(others.size())));
  std::vector<bool> is_redundant(B, false);
  for (std::size_t i = 0; i < redundant_count; ++i) is_redundant[others[i]] = true;
  for (std::size_t b = 0; b < B; ++b) {
    BandInfo& info = truth.roles[b];
    if (info.role == BandRole::informative) continue;
    if (is_redundant[b]) {
      info.role = BandRole::redundant;
      info.source = truth.informative[rng.below(K)];
      info.gain = rng.uniform(0.5, 2.0);
      // Keeps a * [0.3, 0.7] + b inside [0.1, 0.9].
      info.offset = rng.uniform(0.1 - kSignatureLo * info.gain, 0.9 - kSignatureHi * info.gain);
    } else {
      info.role = BandRole::noise;
      info.offset = rng.uniform(0.3, 0.7);
    }
  }

  // 5. Pixels: informative bands first, then the rest, each ascending and
  // row-major; then LiDAR.
  scene.cube = HsiCube(spec.height, spec.width, B);
  const std::size_t pixels = spec.height * spec.width;
  for (std::size_t j = 0; j < K; ++j) {
    auto band = scene.cube.band(truth.informative[j]);
    for (std::size_t q = 0; q < pixels; ++q)
      band[q] = clamp01(truth.signatures[labels[q]][j] + spec.sigma * rng.gaussian());
  }
  for (std::size_t b = 0; b < B; ++b) {
    const BandInfo& info = truth.roles[b];
    if (info.role == BandRole::informative) continue;
    auto band = scene.cube.band(b);
    if (info.role == BandRole::redundant) {
      const auto source = scene.cube.band(info.source);
      for (std::size_t q = 0; q < pixels; ++q)
        band[q] = clamp01(info.gain * source[q] + info.offset + spec.sigma * rng.gaussian());
    } else {
      for (std::size_t q = 0; q < pixels; ++q) band[q] = clamp01(info.offset + spec.sigma * rng.gaussian());
    }
  }
  scene.lidar = LidarRaster(spec.height, spec.width);
  for (std::size_t q = 0; q < pixels; ++q)
    scene.lidar.data[q] = clamp01(truth.lidar_heights[labels[q]] + spec.sigma * rng.gaussian());

  scene.labels.class_count = static_cast<int>(C);
  scene.labels.entries.reserve(pixels);
  for (std::size_t q = 0; q < pixels; ++q)
    scene.labels.entries.push_back({q / spec.width, q % spec.width, static_cast<int>(labels[q]) + 1});
  return scene;
}

double oracle_check(std::span<const std::size_t> selection, const SynthTruth& truth) {
  if (truth.informative.empty()) return 0.0;
  std::size_t recovered = 0;
  for (std::size_t inf : truth.informative) {
    const bool hit = std::any_of(selection.begin(), selection.end(), [&](std::size_t s) {
      if (s >= truth.roles.size()) return false;
      const BandInfo& r = truth.roles[s];
      return s == inf || (r.role == BandRole::redundant && r.source == inf);
    });
    if (hit) ++recovered;
  }
  return static_cast<double>(recovered) / static_cast<double>(truth.informative.size());
}

double expected_random_recovery(const SynthTruth& truth, std::size_t k) {
  const std::size_t B = truth.roles.size();
  if (truth.informative.empty() || k == 0 || B == 0) return 0.0;
  k = std::min(k, B);
  // P(no member of a group of size g drawn) = C(B-g, k) / C(B, k)
  //                                        = prod_{t<k} (B-g-t) / (B-t)
  double sum = 0.0;
  for (std::size_t inf : truth.informative) {
    const auto g = static_cast<std::size_t>(std::count_if(truth.roles.begin(), truth.roles.end(), [&](const BandInfo& r) {
      return r.role != BandRole::noise && r.source == inf;
    }));
    double miss = 1.0;
    for (std::size_t t = 0; t < k; ++t) {
      if (B < g + t + 1) {
        miss = 0.0;
        break;
      }
      miss *= static_cast<double>(B - g - t) / static_cast<double>(B - t);
    }
    sum += 1.0 - miss;
  }
  return sum / static_cast<double>(truth.informative.size());
}

std::vector<std::size_t> noise_bands(const SynthTruth& truth) {
  std::vector<std::size_t> out;
  for (std::size_t b = 0; b < truth.roles.size(); ++b)
    if (truth.roles[b].role == BandRole::noise) out.push_back(b);
  return out;
}

}  // namespace hsiband
