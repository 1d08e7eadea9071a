#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "hsiband/attention.h"
#include "hsiband/raster.h"

namespace hsiband {

enum class DistanceKind { attention, dissimilarity, combined };

// Square B x B matrix, row-major.
struct DistanceMatrix {
  DistanceKind kind = DistanceKind::combined;
  std::size_t size = 0;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * size + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values[i * size + j]; }
};

struct BandScores {
  std::vector<double> raw;         // A
  std::vector<double> normalized;  // A_norm
};

enum class Linkage { single, complete, average };

Linkage parse_linkage(std::string_view name);
std::string_view to_string(Linkage l);

struct Selection {
  std::vector<std::size_t> bands;     // ascending, one per cluster
  std::vector<std::size_t> clusters;  // [band] -> cluster id in [0, k)
  double alpha = 0.5;
  double beta = 0.5;
  std::size_t k = 0;
};

// Mean mask value per band over all samples and pixels.
std::vector<double> aggregate_attention(const AttentionTensor& fused);

// Min-max scaling; an all-equal vector maps to zeros.
std::vector<double> normalize_attention(std::span<const double> a);

BandScores score_bands(const AttentionTensor& fused);

// D[i][j] = a[i] * a[j]
DistanceMatrix attention_distance(std::span<const double> a_norm);

// D[i][j] = 1 - Pearson(band_i, band_j) over all pixels. The diagonal is 0;
// a constant band has correlation 0 with every other band.
DistanceMatrix dissimilarity(const HsiCube& cube);

// alpha * d_att + beta * d_dis. Requires alpha, beta >= 0 and
// |alpha + beta - 1| <= 1e-9.
DistanceMatrix combined_distance(const DistanceMatrix& d_att, const DistanceMatrix& d_dis, double alpha,
                                 double beta);

// Agglomerative clustering on a precomputed distance matrix, merged until k
// clusters remain. Ties between candidate merges go to the pair with the
// smallest (lower, higher) minimum-member indices. Cluster ids are numbered
// by their smallest member band.
std::vector<std::size_t> agglomerate(const DistanceMatrix& d, std::size_t k, Linkage linkage);

// Clusters d_comb into k groups and keeps the highest-A_norm band of each
// (ties to the lowest index). ArgumentError unless 1 <= k <= B.
Selection select_bands(const DistanceMatrix& d_comb, std::span<const double> a_norm, std::size_t k,
                       Linkage linkage = Linkage::average);

void save_distance_csv(const DistanceMatrix& d, const std::filesystem::path& path);

}  // namespace hsiband
