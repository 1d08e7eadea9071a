// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
// Training criteria use the default fixture (32x32, 12 bands, 3 planted,
// 4 classes, sigma 0.02) and default training settings, single-threaded.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gradient_oracles.h"
#include "hsiband/cli.h"
#include "hsiband/eval.h"
#include "hsiband/raster.h"
#include "hsiband/synth.h"
#include "math_oracles.h"
#include "test_util.h"

using namespace hsiband;
using nlohmann::json;

namespace {

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] %d %s: %s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "hsiband");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) std::fprintf(stderr, "hsiband exited %d: %s", code, err.str().c_str());
  return code;
}

json read_json(const std::filesystem::path& p) { return json::parse(read_text(p)); }

void gradient_integrity() {
  using namespace oracles;
  const auto t0 = std::chrono::steady_clock::now();
  double layer_worst = 0.0;
  for (auto check : {dense_elu_check<double>, conv_pool_check<double>, sigmoid_check<double>, resize_check<double>})
    layer_worst = std::max(layer_worst, worst_of(check, 1));
  Rng rng(22);
  for (int i = 0; i < 5; ++i) {
    layer_worst = std::max(layer_worst, attention_chain_check(rng, Fusion::multiply));
    layer_worst = std::max(layer_worst, attention_chain_check(rng, Fusion::add));
  }
  const ResolvedCheck e2e = end_to_end_check(2);
  const double secs = seconds_since(t0);
  const bool pass = e2e.max_rel_error < 1e-5 && layer_worst < 1e-6 && secs < 30.0;
  report(1, "gradient integrity", pass,
         fmt("end-to-end max rel err %.3g over %zu params (< 1e-5), per-layer worst %.3g (< 1e-6), %.1f s (< 30 s)",
             e2e.max_rel_error, e2e.checked, layer_worst, secs));
}

struct FixtureRun {
  std::filesystem::path dir;
  json report, selection, eval;
  std::string sweep_csv;
};

FixtureRun pipeline(const std::filesystem::path& dir, std::vector<std::string> extra = {}) {
  std::vector<std::string> args{"pipeline", "--out", dir.string(), "--threads", "1"};
  args.insert(args.end(), extra.begin(), extra.end());
  FixtureRun r{dir, {}, {}, {}, {}};
  if (run_cli(args) != 0) return r;
  r.report = read_json(dir / "report.json");
  r.selection = read_json(dir / "selection.json");
  r.eval = read_json(dir / "eval.json");
  r.sweep_csv = read_text(dir / "sweep.csv");
  return r;
}

void training_descent(const FixtureRun& run) {
  if (run.report.is_null()) return report(2, "training descent", false, "pipeline failed");
  const auto loss = run.report.at("loss").get<std::vector<double>>();
  const double secs = run.report.at("seconds").get<double>();
  const double ratio = loss.back() / loss.front();
  report(2, "training descent", loss.size() == 50 && ratio < 0.5 && secs < 300.0,
         fmt("%zu epochs, loss %.4f -> %.4f, ratio %.3f (< 0.5), %.1f s (< 300 s)", loss.size(), loss.front(),
             loss.back(), ratio, secs));
}

void sparsity_pressure(const std::filesystem::path& fixture_dir, const std::filesystem::path& scratch) {
  double mask[2] = {0, 0};
  const double lambdas[2] = {0.0, 1e-2};
  for (int i = 0; i < 2; ++i) {
    const auto dir = scratch / ("lambda" + std::to_string(i));
    std::vector<std::string> args{"train", "--out", dir.string(), "--threads", "1",
                                  "--data.hsi", (fixture_dir / "cube.hsib").string(),
                                  "--data.lidar", (fixture_dir / "lidar.hsib").string(),
                                  "--lambda", fmt("%.17g", lambdas[i])};
    if (run_cli(args) != 0) return report(3, "sparsity pressure", false, "train failed");
    mask[i] = read_json(dir / "report.json").at("mean_fused_mask").get<double>();
  }
  const double drop = (mask[0] - mask[1]) / mask[0];
  report(3, "sparsity pressure", drop >= 0.05,
         fmt("mean fused mask %.4f at lambda=0, %.4f at lambda=1e-2, relative drop %.1f%% (>= 5%%)", mask[0], mask[1],
             100 * drop));
}

void planted_recovery(const std::filesystem::path& scratch) {
  double sum = 0.0;
  int beats_random = 0, ran = 0;
  std::string per_seed;
  for (int seed = 1; seed <= 5; ++seed) {
    const FixtureRun r = pipeline(scratch / ("seed" + std::to_string(seed)), {"--seed", std::to_string(seed)});
    if (r.selection.is_null()) continue;
    ++ran;
    const double rec = r.selection.at("recovery").get<double>();
    const double rnd = r.selection.at("random_recovery").get<double>();
    sum += rec;
    if (rec > rnd) ++beats_random;
    per_seed += fmt("%s%.3f/%.3f", per_seed.empty() ? "" : " ", rec, rnd);
  }
  const double mean = sum / 5.0;
  report(4, "planted-band recovery", ran == 5 && mean >= 0.8 && beats_random >= 4,
         fmt("mean recovery %.3f (>= 0.8), above random on %d/5 (>= 4); recovery/random by seed: %s", mean,
             beats_random, per_seed.c_str()));
}

void downstream_accuracy(const FixtureRun& run) {
  if (run.eval.is_null()) return report(5, "downstream accuracy", false, "pipeline failed");
  const double oa_selected = run.eval.at("oa").get<double>();
  const SynthTruth truth = cli::truth_from_json(read_json(run.dir / "truth.json"));
  std::vector<std::size_t> noise = noise_bands(truth);
  if (noise.size() < 3) return report(5, "downstream accuracy", false, "fixture has fewer than 3 noise bands");
  noise.resize(3);
  const HsiCube cube = normalize_per_band(load_cube(run.dir / "cube.hsib"));
  const LidarRaster lidar = normalize(load_lidar(run.dir / "lidar.hsib"));
  const LabelMap labels = load_labels(run.dir / "labels.csv", cube.height, cube.width);
  const EvalReport noise_eval = evaluate(cube, lidar, labels, noise, EvalConfig{});
  report(5, "downstream accuracy", oa_selected >= 0.90 && noise_eval.oa <= 0.75,
         fmt("OA %.4f with selected bands %s (>= 0.90), %.4f with noise bands (<= 0.75)", oa_selected,
             run.selection.at("bands").dump().c_str(), noise_eval.oa));
}

void scoring_oracles() {
  const auto examples = oracles::scoring_examples();
  const auto props = oracles::distance_properties(1000, 2024);
  report(6, "scoring math oracles", examples.empty() && props.empty(),
         examples.empty() && props.empty()
             ? "all hand examples within 1e-12; symmetry and range hold on 1000 random instances"
             : oracles::join(examples.empty() ? props : examples));
}

void metric_oracles() {
  const auto examples = oracles::metric_examples();
  const auto knn = oracles::knn_properties(50, 7);
  report(7, "metric oracles", examples.empty() && knn.empty(),
         examples.empty() && knn.empty() ? "OA/AA/kappa hand values within 1e-12; KNN equals brute force on 50 instances"
                                         : oracles::join(examples.empty() ? knn : examples));
}

void determinism(const FixtureRun& a, const FixtureRun& b) {
  const bool ran = !a.selection.is_null() && !b.selection.is_null();
  const bool sel = ran && read_bytes(a.dir / "selection.json") == read_bytes(b.dir / "selection.json");
  const bool swp = ran && read_bytes(a.dir / "sweep.csv") == read_bytes(b.dir / "sweep.csv");
  report(8, "determinism", sel && swp,
         fmt("selection.json %s, sweep.csv %s across two pipeline runs", sel ? "identical" : "differs",
             swp ? "identical" : "differs"));
}

void sweep_protocol(const FixtureRun& run) {
  if (run.sweep_csv.empty()) return report(9, "sweep protocol", false, "pipeline failed");
  bool schedule = sweep_ks(12) == std::vector<std::size_t>{1, 5, 10, 12} &&
                  sweep_ks(10) == std::vector<std::size_t>{1, 5, 10} &&
                  sweep_ks(50) == std::vector<std::size_t>{1, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50} &&
                  sweep_ks(144) == std::vector<std::size_t>{1, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50};

  std::istringstream lines(run.sweep_csv);
  std::string line;
  std::getline(lines, line);
  bool header = line == "k,oa,aa,kappa";
  std::vector<std::size_t> ks;
  double last[3] = {0, 0, 0};
  while (std::getline(lines, line)) {
    std::size_t k = 0;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf", &k, &last[0], &last[1], &last[2]) != 4) header = false;
    ks.push_back(k);
  }
  schedule = schedule && ks == std::vector<std::size_t>{1, 5, 10, 12};

  const HsiCube cube = normalize_per_band(load_cube(run.dir / "cube.hsib"));
  const LidarRaster lidar = normalize(load_lidar(run.dir / "lidar.hsib"));
  const LabelMap labels = load_labels(run.dir / "labels.csv", cube.height, cube.width);
  std::vector<std::size_t> all(cube.bands);
  for (std::size_t b = 0; b < all.size(); ++b) all[b] = b;
  const EvalReport full = evaluate(cube, lidar, labels, all, EvalConfig{});
  const bool equal = last[0] == full.oa && last[1] == full.aa && last[2] == full.kappa;
  report(9, "sweep protocol", header && schedule && equal,
         fmt("rows k=%s; k=B row (oa %.17g, aa %.17g, kappa %.17g) %s full-band evaluation",
             json(ks).dump().c_str(), last[0], last[1], last[2], equal ? "equals" : "differs from"));
}

}  // namespace

int main() {
  TempDir scratch;
  gradient_integrity();
  const FixtureRun a = pipeline(scratch.path() / "fixture_a");
  training_descent(a);
  sparsity_pressure(a.dir, scratch.path());
  planted_recovery(scratch.path());
  downstream_accuracy(a);
  scoring_oracles();
  metric_oracles();
  const FixtureRun b = pipeline(scratch.path() / "fixture_b");
  determinism(a, b);
  sweep_protocol(a);

  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
