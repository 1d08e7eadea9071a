#include "hsiband/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include "hsiband/errors.h"
#include "hsiband/rng.h"

namespace hsiband {

FeatureTable build_features(const HsiCube& cube, const LidarRaster& lidar, const LabelMap& labels,
                            std::span<const std::size_t> bands) {
  if (cube.height != lidar.height || cube.width != lidar.width)
    throw ArgumentError("build_features: cube and LiDAR dimensions differ");
  for (std::size_t b : bands) {
    if (b >= cube.bands) throw ArgumentError("build_features: band " + std::to_string(b) + " out of range");
  }
  FeatureTable t;
  t.feature_count = bands.size() + 1;
  t.class_count = labels.class_count;
  t.features.reserve(labels.entries.size() * t.feature_count);
  t.labels.reserve(labels.entries.size());
  for (const LabelEntry& e : labels.entries) {
    if (e.row >= cube.height || e.col >= cube.width)
      throw DataError("build_features: label (" + std::to_string(e.row) + "," + std::to_string(e.col) +
                      ") outside the raster");
    for (std::size_t b : bands) t.features.push_back(cube.at(b, e.row, e.col));
    t.features.push_back(lidar.at(e.row, e.col));
    t.labels.push_back(e.class_id);
  }
  return t;
}

std::pair<FeatureTable, FeatureTable> split(const FeatureTable& table, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ArgumentError("split: train fraction must be in (0, 1)");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t r = 0; r < table.rows(); ++r) by_class[table.labels[r]].push_back(r);

  Rng rng(seed);
  std::vector<bool> in_train(table.rows(), false);
  for (auto& [cls, rows] : by_class) {
    if (rows.size() < 2) throw ArgumentError("split: class " + std::to_string(cls) + " has fewer than 2 samples");
    const auto n = static_cast<double>(rows.size());
    auto n_train = static_cast<std::size_t>(std::floor(train_fraction * n + 1e-9));
    n_train = std::clamp<std::size_t>(n_train, 1, rows.size() - 1);
    rng.shuffle(std::span<std::size_t>(rows));
    for (std::size_t i = 0; i < n_train; ++i) in_train[rows[i]] = true;
  }

  FeatureTable train, test;
  for (FeatureTable* t : {&train, &test}) {
    t->feature_count = table.feature_count;
    t->class_count = table.class_count;
  }
  for (std::size_t r = 0; r < table.rows(); ++r) {
    FeatureTable& dst = in_train[r] ? train : test;
    const auto row = table.row(r);
    dst.features.insert(dst.features.end(), row.begin(), row.end());
    dst.labels.push_back(table.labels[r]);
  }
  return {std::move(train), std::move(test)};
}

std::vector<int> knn_classify(const FeatureTable& train, const FeatureTable& test, std::size_t neighbors) {
  if (train.rows() == 0) throw ArgumentError("knn: empty training set");
  if (train.feature_count != test.feature_count) throw ArgumentError("knn: feature lengths differ");
  if (neighbors == 0) throw ArgumentError("knn: neighbor count must be positive");
  const std::size_t k = std::min(neighbors, train.rows());

  std::vector<int> predicted(test.rows());
  std::vector<std::pair<double, std::size_t>> dist(train.rows());
  for (std::size_t t = 0; t < test.rows(); ++t) {
    const auto x = test.row(t);
    for (std::size_t r = 0; r < train.rows(); ++r) {
      const auto y = train.row(r);
      double d2 = 0.0;
      for (std::size_t f = 0; f < x.size(); ++f) d2 += (x[f] - y[f]) * (x[f] - y[f]);
      dist[r] = {d2, r};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());

    std::map<int, std::size_t> votes;
    for (std::size_t i = 0; i < k; ++i) ++votes[train.labels[dist[i].second]];
    int best = 0;
    std::size_t best_votes = 0;
    for (const auto& [cls, v] : votes) {  // ascending class id, strict > keeps the smallest
      if (v > best_votes) {
        best = cls;
        best_votes = v;
      }
    }
    predicted[t] = best;
  }
  return predicted;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t t) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < classes; ++p) s += (*this)(t, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t p) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < classes; ++t) s += (*this)(t, p);
  return s;
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, std::size_t classes) {
  if (truth.size() != predicted.size()) throw ArgumentError("confusion: label vectors differ in length");
  ConfusionMatrix cm{classes, std::vector<std::uint64_t>(classes * classes, 0)};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 1 || predicted[i] < 1 || static_cast<std::size_t>(truth[i]) > classes ||
        static_cast<std::size_t>(predicted[i]) > classes)
      throw ArgumentError("confusion: class id outside [1, " + std::to_string(classes) + "]");
    ++cm.counts[(truth[i] - 1) * classes + (predicted[i] - 1)];
  }
  return cm;
}

Metrics metrics(const ConfusionMatrix& cm) {
  const auto total = static_cast<double>(cm.total());
  if (total == 0.0) throw ArgumentError("metrics: empty confusion matrix");
  double diag = 0.0, pe = 0.0, aa = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < cm.classes; ++c) {
    const auto row = static_cast<double>(cm.row_sum(c));
    const auto col = static_cast<double>(cm.col_sum(c));
    diag += static_cast<double>(cm(c, c));
    pe += row * col;
    if (row > 0.0) {
      aa += static_cast<double>(cm(c, c)) / row;
      ++present;
    }
  }
  Metrics m;
  m.oa = diag / total;
  m.aa = aa / static_cast<double>(present);
  pe /= total * total;
  if (pe == 1.0) {
    m.kappa = m.oa == 1.0 ? 1.0 : 0.0;
  } else {
    m.kappa = (m.oa - pe) / (1.0 - pe);
  }
  return m;
}

EvalReport evaluate(const HsiCube& cube, const LidarRaster& lidar, const LabelMap& labels,
                    std::span<const std::size_t> bands, const EvalConfig& config) {
  const FeatureTable table = build_features(cube, lidar, labels, bands);
  const auto [train, test] = split(table, config.train_fraction, config.seed);
  const std::vector<int> predicted = knn_classify(train, test, config.neighbors);

  EvalReport r;
  r.confusion = confusion(test.labels, predicted, static_cast<std::size_t>(labels.class_count));
  const Metrics m = metrics(r.confusion);
  r.oa = m.oa;
  r.aa = m.aa;
  r.kappa = m.kappa;
  for (std::size_t c = 0; c < r.confusion.classes; ++c) {
    const auto row = r.confusion.row_sum(c);
    r.per_class.push_back(row ? static_cast<double>(r.confusion(c, c)) / static_cast<double>(row)
                              : std::numeric_limits<double>::quiet_NaN());
  }
  r.seed = config.seed;
  r.k = bands.size();
  r.bands.assign(bands.begin(), bands.end());
  return r;
}

std::vector<std::size_t> sweep_ks(std::size_t bands) {
  std::vector<std::size_t> ks;
  if (bands == 0) return ks;
  ks.push_back(1);
  for (std::size_t k = 5; k <= 50 && k <= bands; k += 5) ks.push_back(k);
  if (bands <= 50 && ks.back() != bands) ks.push_back(bands);
  return ks;
}

std::vector<EvalReport> sweep(const HsiCube& cube, const LidarRaster& lidar, const LabelMap& labels,
                              std::span<const double> a_norm, const DistanceMatrix& d_dis, const SweepConfig& config) {
  const DistanceMatrix d_comb =
      combined_distance(attention_distance(a_norm), d_dis, config.alpha, config.beta);
  std::vector<EvalReport> reports;
  for (std::size_t k : sweep_ks(cube.bands)) {
    const Selection s = select_bands(d_comb, a_norm, k, config.linkage);
    reports.push_back(evaluate(cube, lidar, labels, s.bands, config.eval));
  }
  return reports;
}

std::string sweep_csv(std::span<const EvalReport> reports) {
  std::string out = "k,oa,aa,kappa\n";
  char buf[128];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", r.k, r.oa, r.aa, r.kappa);
    out += buf;
  }
  return out;
}

}  // namespace hsiband
