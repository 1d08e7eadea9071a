#include "hsiband/bandselect.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>

#include "hsiband/errors.h"

namespace hsiband {

Linkage parse_linkage(std::string_view name) {
  if (name == "single") return Linkage::single;
  if (name == "complete") return Linkage::complete;
  if (name == "average") return Linkage::average;
  throw ArgumentError("unknown linkage '" + std::string(name) + "' (expected single|complete|average)");
}

std::string_view to_string(Linkage l) {
  switch (l) {
    case Linkage::single:
      return "single";
    case Linkage::complete:
      return "complete";
    case Linkage::average:
      break;
  }
  return "average";
}

std::vector<double> aggregate_attention(const AttentionTensor& fused) {
  const std::size_t B = fused.bands;
  if (fused.count == 0 || B == 0 || fused.values.empty()) throw ArgumentError("aggregate_attention: empty tensor");
  if (fused.values.size() != fused.count * fused.sample_stride())
    throw ArgumentError("aggregate_attention: tensor size does not match its dimensions");
  std::vector<double> a(B, 0.0);
  for (std::size_t i = 0; i < fused.values.size(); ++i) a[i % B] += fused.values[i];
  const double denom = static_cast<double>(fused.count * fused.patch_size * fused.patch_size);
  for (double& v : a) v /= denom;
  return a;
}

std::vector<double> normalize_attention(std::span<const double> a) {
  std::vector<double> out(a.size(), 0.0);
  if (a.empty()) return out;
  const auto [lo, hi] = std::minmax_element(a.begin(), a.end());
  const double range = *hi - *lo;
  if (range > 0.0) {
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] - *lo) / range;
  }
  return out;
}

BandScores score_bands(const AttentionTensor& fused) {
  BandScores s;
  s.raw = aggregate_attention(fused);
  s.normalized = normalize_attention(s.raw);
  return s;
}

DistanceMatrix attention_distance(std::span<const double> a_norm) {
  const std::size_t B = a_norm.size();
  DistanceMatrix d{DistanceKind::attention, B, std::vector<double>(B * B)};
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < B; ++j) d(i, j) = a_norm[i] * a_norm[j];
  return d;
}

DistanceMatrix dissimilarity(const HsiCube& cube) {
  const std::size_t B = cube.bands;
  const std::size_t n = cube.pixels();
  if (B == 0 || n == 0) throw ArgumentError("dissimilarity: empty cube");

  // Centered bands and their norms.
  std::vector<double> centered(B * n);
  std::vector<double> norm(B);
  for (std::size_t b = 0; b < B; ++b) {
    const auto band = cube.band(b);
    double mean = 0.0;
    for (float v : band) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t q = 0; q < n; ++q) {
      const double c = band[q] - mean;
      centered[b * n + q] = c;
      ss += c * c;
    }
    norm[b] = std::sqrt(ss);
  }

  DistanceMatrix d{DistanceKind::dissimilarity, B, std::vector<double>(B * B, 0.0)};
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t j = i + 1; j < B; ++j) {
      double corr = 0.0;
      if (norm[i] > 0.0 && norm[j] > 0.0) {
        double dot = 0.0;
        for (std::size_t q = 0; q < n; ++q) dot += centered[i * n + q] * centered[j * n + q];
        corr = std::clamp(dot / (norm[i] * norm[j]), -1.0, 1.0);
      }
      d(i, j) = d(j, i) = 1.0 - corr;
    }
  }
  return d;
}

DistanceMatrix combined_distance(const DistanceMatrix& d_att, const DistanceMatrix& d_dis, double alpha,
                                 double beta) {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || std::abs(alpha + beta - 1.0) > 1e-9)
    throw ArgumentError("combined_distance: alpha and beta must be non-negative and sum to 1");
  if (d_att.size != d_dis.size) throw ArgumentError("combined_distance: matrix sizes differ");
  DistanceMatrix d{DistanceKind::combined, d_att.size, std::vector<double>(d_att.values.size())};
  for (std::size_t i = 0; i < d.values.size(); ++i) d.values[i] = alpha * d_att.values[i] + beta * d_dis.values[i];
  return d;
}

namespace {

double linkage_distance(const DistanceMatrix& d, const std::vector<std::size_t>& a,
                        const std::vector<std::size_t>& b, Linkage linkage) {
  switch (linkage) {
    case Linkage::single: {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i : a)
        for (std::size_t j : b) best = std::min(best, d(i, j));
      return best;
    }
    case Linkage::complete: {
      double worst = -std::numeric_limits<double>::infinity();
      for (std::size_t i : a)
        for (std::size_t j : b) worst = std::max(worst, d(i, j));
      return worst;
    }
    case Linkage::average:
      break;
  }
  double sum = 0.0;
  for (std::size_t i : a)
    for (std::size_t j : b) sum += d(i, j);
  return sum / static_cast<double>(a.size() * b.size());
}

}  // namespace

std::vector<std::size_t> agglomerate(const DistanceMatrix& d, std::size_t k, Linkage linkage) {
  const std::size_t B = d.size;
  if (k < 1 || k > B) throw ArgumentError("select: k=" + std::to_string(k) + " outside [1, " + std::to_string(B) + "]");

  // Clusters stay sorted by smallest member; members stay sorted.
  std::vector<std::vector<std::size_t>> clusters(B);
  for (std::size_t i = 0; i < B; ++i) clusters[i] = {i};

  while (clusters.size() > k) {
    std::size_t best_a = 0, best_b = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < clusters.size(); ++a) {
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        const double dist = linkage_distance(d, clusters[a], clusters[b], linkage);
        if (dist < best) {
          best = dist;
          best_a = a;
          best_b = b;
        }
      }
    }
    auto& target = clusters[best_a];
    target.insert(target.end(), clusters[best_b].begin(), clusters[best_b].end());
    std::sort(target.begin(), target.end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(best_b));
  }

  std::vector<std::size_t> assignment(B);
  for (std::size_t c = 0; c < clusters.size(); ++c)
    for (std::size_t band : clusters[c]) assignment[band] = c;
  return assignment;
}

Selection select_bands(const DistanceMatrix& d_comb, std::span<const double> a_norm, std::size_t k,
                       Linkage linkage) {
  const std::size_t B = d_comb.size;
  if (a_norm.size() != B) throw ArgumentError("select: attention vector length differs from matrix size");
  Selection s;
  s.k = k;
  s.clusters = agglomerate(d_comb, k, linkage);

  std::vector<std::size_t> best(k, B);
  for (std::size_t band = 0; band < B; ++band) {
    std::size_t& slot = best[s.clusters[band]];
    if (slot == B || a_norm[band] > a_norm[slot]) slot = band;
  }
  s.bands = best;
  std::sort(s.bands.begin(), s.bands.end());
  return s;
}

void save_distance_csv(const DistanceMatrix& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  char buf[32];
  for (std::size_t i = 0; i < d.size; ++i) {
    for (std::size_t j = 0; j < d.size; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", d(i, j));
      out << (j ? "," : "") << buf;
    }
    out << '\n';
  }
}

}  // namespace hsiband
