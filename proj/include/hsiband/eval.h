#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hsiband/bandselect.h"
#include "hsiband/raster.h"

namespace hsiband {

// One row per labeled pixel, row-major features.
struct FeatureTable {
  std::size_t feature_count = 0;
  std::vector<double> features;
  std::vector<int> labels;
  int class_count = 0;

  std::size_t rows() const { return labels.size(); }
  std::span<const double> row(std::size_t r) const {
    return {features.data() + r * feature_count, feature_count};
  }
};

// Row per label entry: the selected bands at (row, col) in selection order,
// then the LiDAR value. Both rasters are expected to be normalized already.
FeatureTable build_features(const HsiCube& cube, const LidarRaster& lidar, const LabelMap& labels,
                            std::span<const std::size_t> bands);

// Stratified split. Each class gets max(1, floor(fraction * n_c)) training
// rows (at most n_c - 1), chosen by a seeded Fisher-Yates shuffle of that
// class's rows. Both halves keep the original row order.
std::pair<FeatureTable, FeatureTable> split(const FeatureTable& table, double train_fraction, std::uint64_t seed);

// Euclidean KNN with majority vote. Distance ties go to the lower training
// row; vote ties go to the smallest class id.
std::vector<int> knn_classify(const FeatureTable& train, const FeatureTable& test, std::size_t neighbors = 5);

// counts[truth - 1][predicted - 1]
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::uint64_t> counts;

  std::uint64_t operator()(std::size_t t, std::size_t p) const { return counts[t * classes + p]; }
  std::uint64_t row_sum(std::size_t t) const;
  std::uint64_t col_sum(std::size_t p) const;
  std::uint64_t total() const;
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, std::size_t classes);

struct Metrics {
  double oa = 0.0;
  double aa = 0.0;
  double kappa = 0.0;
};

// Classes with no test rows are left out of AA. ArgumentError on an empty
// matrix.
Metrics metrics(const ConfusionMatrix& cm);

struct EvalConfig {
  double train_fraction = 0.5;
  std::size_t neighbors = 5;
  std::uint64_t seed = 42;
};

struct EvalReport {
  double oa = 0.0;
  double aa = 0.0;
  double kappa = 0.0;
  std::vector<double> per_class;  // NaN for classes without test rows
  ConfusionMatrix confusion;
  std::uint64_t seed = 0;
  std::size_t k = 0;
  std::vector<std::size_t> bands;
};

EvalReport evaluate(const HsiCube& cube, const LidarRaster& lidar, const LabelMap& labels,
                    std::span<const std::size_t> bands, const EvalConfig& config);

// 1, 5, 10, ..., 50, capped at B, with B appended when B <= 50 and missing.
std::vector<std::size_t> sweep_ks(std::size_t bands);

struct SweepConfig {
  double alpha = 0.5;
  double beta = 0.5;
  Linkage linkage = Linkage::average;
  EvalConfig eval;
};

// Reselects and re-evaluates for each k in sweep_ks(B) with one set of
// attention scores and one dissimilarity matrix.
std::vector<EvalReport> sweep(const HsiCube& cube, const LidarRaster& lidar, const LabelMap& labels,
                              std::span<const double> a_norm, const DistanceMatrix& d_dis, const SweepConfig& config);

// "k,oa,aa,kappa" header then one row per report, values printed with %.17g.
std::string sweep_csv(std::span<const EvalReport> reports);

}  // namespace hsiband
