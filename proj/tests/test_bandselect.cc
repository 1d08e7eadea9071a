#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "hsiband/bandselect.h"
#include "hsiband/errors.h"
#include "hsiband/rng.h"
#include "math_oracles.h"
#include "test_util.h"

using namespace hsiband;
using namespace oracles;

TEST_CASE("scoring hand examples") {
  const auto failures = scoring_examples();
  INFO(join(failures, 20));
  CHECK(failures.empty());
}

TEST_CASE("property: distance matrices are symmetric and bounded") {
  const auto failures = distance_properties(1000, 77);
  INFO(join(failures));
  CHECK(failures.empty());
}

TEST_CASE("aggregate_attention rejects inconsistent tensors") {
  CHECK_THROWS_AS(aggregate_attention(mask_tensor(0, 1, 1, {})), ArgumentError);
  CHECK_THROWS_AS(aggregate_attention(mask_tensor(2, 1, 2, {0.1f, 0.2f})), ArgumentError);
}

TEST_CASE("constant band has zero correlation with the rest") {
  const auto d = dissimilarity(row_cube({{1, 1, 1}, {1, 2, 3}}));
  CHECK(d(0, 1) == 1.0);
}

TEST_CASE("property: average linkage matches the Lance-Williams recurrence") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t B = 2 + rng.below(15);
    const std::size_t k = 1 + rng.below(B);
    DistanceMatrix d{DistanceKind::combined, B, std::vector<double>(B * B, 0.0)};
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = i + 1; j < B; ++j) d(i, j) = d(j, i) = rng.uniform(0.0, 2.0);
    const auto assignment = agglomerate(d, k, Linkage::average);
    const auto clusters = lance_williams_average(d, k);
    REQUIRE(clusters.size() == k);
    for (std::size_t c = 0; c < clusters.size(); ++c)
      for (std::size_t b : clusters[c]) CHECK(assignment[b] == c);
  }
}

TEST_CASE("linkage tie rules") {
  // All off-diagonal distances equal: merges go to the lowest index pair.
  DistanceMatrix flat{DistanceKind::combined, 4, std::vector<double>(16, 1.0)};
  for (std::size_t i = 0; i < 4; ++i) flat(i, i) = 0.0;
  for (Linkage l : {Linkage::single, Linkage::complete, Linkage::average}) {
    CHECK(agglomerate(flat, 3, l) == std::vector<std::size_t>{0, 0, 1, 2});
    CHECK(agglomerate(flat, 2, l) == std::vector<std::size_t>{0, 0, 0, 1});
  }
  // equal A_norm inside a cluster: lowest band index wins
  const std::vector<double> a{0.5, 0.5, 0.5, 0.5};
  CHECK(select_bands(flat, a, 1).bands == std::vector<std::size_t>{0});
}

TEST_CASE("single and complete linkage differ on a chain") {
  // points on a line at 0, 1, 2.1, 3.3
  const double x[] = {0, 1, 2.1, 3.3};
  DistanceMatrix d{DistanceKind::combined, 4, std::vector<double>(16)};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) d(i, j) = std::abs(x[i] - x[j]);
  CHECK(agglomerate(d, 2, Linkage::single) == std::vector<std::size_t>{0, 0, 0, 1});
  CHECK(agglomerate(d, 2, Linkage::complete) == std::vector<std::size_t>{0, 0, 1, 1});
}

TEST_CASE("linkage names") {
  for (Linkage l : {Linkage::single, Linkage::complete, Linkage::average}) CHECK(parse_linkage(to_string(l)) == l);
  CHECK_THROWS_AS(parse_linkage("ward"), ArgumentError);
}

TEST_CASE("property: selection is invariant to per-band affine rescaling") {
  Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t B = 3 + rng.below(8);
    HsiCube cube(4, 5, B);
    for (float& v : cube.data) v = static_cast<float>(rng.uniform());
    HsiCube scaled = cube;
    const double gain = rng.uniform(0.5, 4.0);
    for (std::size_t b = 0; b < B; ++b) {
      const double shift = rng.uniform(-1.0, 1.0);
      for (float& v : scaled.band(b)) v = static_cast<float>(gain * v + shift);
    }
    std::vector<double> raw(B);
    for (double& v : raw) v = rng.uniform();
    const auto a = normalize_attention(raw);
    const auto d1 = dissimilarity(cube), d2 = dissimilarity(scaled);
    for (std::size_t i = 0; i < d1.values.size(); ++i) CHECK(d1.values[i] == doctest::Approx(d2.values[i]).epsilon(1e-5));
    const std::size_t k = 1 + rng.below(B);
    CHECK(select_bands(combined_distance(attention_distance(a), d1, 0.5, 0.5), a, k).bands ==
          select_bands(combined_distance(attention_distance(a), d2, 0.5, 0.5), a, k).bands);
  }
}

TEST_CASE("property: alpha=1 with increasing scores picks the last band at k=1") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t B = 2 + rng.below(14);
    std::vector<double> raw(B);
    for (double& v : raw) v = rng.uniform();
    std::sort(raw.begin(), raw.end());
    const auto a = normalize_attention(raw);
    HsiCube cube(2, 3, B);
    for (float& v : cube.data) v = static_cast<float>(rng.uniform());
    const auto d = combined_distance(attention_distance(a), dissimilarity(cube), 1.0, 0.0);
    const auto max_it = std::max_element(a.begin(), a.end());
    CHECK(select_bands(d, a, 1).bands.front() == static_cast<std::size_t>(max_it - a.begin()));
  }
}

TEST_CASE("property: permuting bands permutes the selection") {
  Rng rng(44);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t B = 2 + rng.below(12);
    HsiCube cube(3, 4, B);
    for (float& v : cube.data) v = static_cast<float>(rng.uniform());
    std::vector<double> raw(B);
    for (double& v : raw) v = rng.uniform();
    std::vector<std::size_t> perm(B);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(perm));

    // band perm[b] of the permuted cube is band b of the original
    HsiCube permuted(3, 4, B);
    std::vector<double> raw_p(B);
    for (std::size_t b = 0; b < B; ++b) {
      std::copy(cube.band(b).begin(), cube.band(b).end(), permuted.band(perm[b]).begin());
      raw_p[perm[b]] = raw[b];
    }
    const std::size_t k = 1 + rng.below(B);
    auto pick = [&](const HsiCube& c, const std::vector<double>& r) {
      const auto a = normalize_attention(r);
      return select_bands(combined_distance(attention_distance(a), dissimilarity(c), 0.5, 0.5), a, k).bands;
    };
    std::vector<std::size_t> mapped;
    for (std::size_t b : pick(cube, raw)) mapped.push_back(perm[b]);
    std::sort(mapped.begin(), mapped.end());
    CHECK(mapped == pick(permuted, raw_p));
  }
}

TEST_CASE("selection invariants") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t B = 1 + rng.below(16);
    DistanceMatrix d{DistanceKind::combined, B, std::vector<double>(B * B, 0.0)};
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = i + 1; j < B; ++j) d(i, j) = d(j, i) = rng.uniform();
    std::vector<double> a(B);
    for (double& v : a) v = static_cast<double>(rng.below(4)) / 3.0;  // ties on purpose
    const std::size_t k = 1 + rng.below(B);
    const Selection s = select_bands(d, a, k);
    REQUIRE(s.bands.size() == k);
    CHECK(std::is_sorted(s.bands.begin(), s.bands.end()));
    std::vector<int> per_cluster(k, 0);
    for (std::size_t b : s.bands) ++per_cluster[s.clusters[b]];
    for (int n : per_cluster) CHECK(n == 1);
    for (std::size_t b : s.bands) {
      for (std::size_t o = 0; o < B; ++o) {
        if (s.clusters[o] != s.clusters[b]) continue;
        CHECK(a[o] <= a[b]);
        if (a[o] == a[b]) CHECK(b <= o);
      }
    }
  }
}

TEST_CASE("distance CSV") {
  TempDir dir;
  const auto d = attention_distance(std::vector<double>{0.0, 0.5});
  save_distance_csv(d, dir.path() / "d.csv");
  CHECK(read_text(dir.path() / "d.csv") == "0,0\n0,0.25\n");
}
