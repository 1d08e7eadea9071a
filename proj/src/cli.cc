#include "hsiband/cli.h"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <thread>

#include "hsiband/checkpoint.h"
#include "hsiband/errors.h"
#include "hsiband/raster.h"

namespace hsiband::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kCube = "cube.hsib";
constexpr const char* kLidar = "lidar.hsib";
constexpr const char* kLabels = "labels.csv";
constexpr const char* kTruth = "truth.json";
constexpr const char* kCheckpoint = "checkpoint.bfnn";
constexpr const char* kReport = "report.json";
constexpr const char* kSelection = "selection.json";
constexpr const char* kEval = "eval.json";
constexpr const char* kSweep = "sweep.csv";

std::vector<ConfigKey> build_keys() {
  const SynthSpec s;
  const RunConfig r;
  return {
      {"data.hsi", "", "HSI cube (HSIB); empty means <out>/cube.hsib"},
      {"data.lidar", "", "LiDAR raster (HSIB, one band); empty means <out>/lidar.hsib"},
      {"data.labels", "", "labels CSV row,col,class; empty means <out>/labels.csv"},
      {"data.truth", "", "synthetic truth JSON for recovery scores; empty means <out>/truth.json if present"},
      {"data.checkpoint", "", "model checkpoint; empty means <out>/checkpoint.bfnn"},
      {"data.selection", "", "selection JSON read by eval; empty means <out>/selection.json"},
      {"patch.size", r.patch_size, "odd spatial patch size p"},
      {"patch.stride", r.stride, "patch extraction stride"},
      {"attention.fusion", "multiply", "mask fusion: multiply | add"},
      {"attention.hsi_hidden", json::array({0, 0, 0}), "hidden widths of the spectral stack, 0 = B"},
      {"attention.lidar_hidden", json::array({0, 0, 0}), "hidden widths of the LiDAR stack, 0 = p*p"},
      {"autoencoder.channels", json::array({64, 32}), "encoder channel widths"},
      {"autoencoder.lambda", r.autoencoder.lambda, "sparsity weight on the fused mask"},
      {"train.epochs", r.sgd.epochs, "training epochs"},
      {"train.batch_size", r.sgd.batch_size, "minibatch size"},
      {"train.learning_rate", r.sgd.learning_rate, "SGD learning rate"},
      {"train.seed", r.sgd.seed, "initialization and shuffle seed"},
      {"select.k", r.k, "number of bands to select"},
      {"select.alpha", r.alpha, "weight of the attention distance"},
      {"select.beta", r.beta, "weight of the dissimilarity distance; alpha + beta = 1"},
      {"select.linkage", "average", "clustering linkage: single | complete | average"},
      {"eval.train_fraction", r.eval.train_fraction, "stratified training share"},
      {"eval.neighbors", r.eval.neighbors, "KNN neighbors"},
      {"eval.seed", r.eval.seed, "split seed"},
      {"synth.height", s.height, "raster rows"},
      {"synth.width", s.width, "raster columns"},
      {"synth.bands", s.bands, "total bands B"},
      {"synth.informative", s.informative, "planted informative bands"},
      {"synth.classes", s.classes, "class count"},
      {"synth.sigma", s.sigma, "Gaussian noise level"},
      {"synth.redundant_fraction", s.redundant_fraction, "share of other bands that copy an informative band"},
      {"synth.grid_rows", s.grid_rows, "class layout grid rows"},
      {"synth.grid_cols", s.grid_cols, "class layout grid columns"},
      {"synth.max_profile_correlation", s.max_profile_correlation,
       "bound on the correlation of informative class profiles"},
      {"synth.seed", s.seed, "scene seed"},
  };
}

struct Alias {
  std::string flag;
  std::vector<std::string> keys;
};

const std::vector<Alias>& aliases() {
  static const std::vector<Alias> a{
      {"epochs", {"train.epochs"}},
      {"lambda", {"autoencoder.lambda"}},
      {"k", {"select.k"}},
      {"alpha", {"select.alpha"}},
      {"beta", {"select.beta"}},
      {"seed", {"synth.seed", "train.seed"}},
  };
  return a;
}

std::string section_of(const std::string& key) { return key.substr(0, key.find('.')); }

const std::map<std::string, std::set<std::string>>& command_sections() {
  static const std::map<std::string, std::set<std::string>> m{
      {"synth", {"synth"}},
      {"train", {"data", "patch", "attention", "autoencoder", "train"}},
      {"select", {"data", "patch", "attention", "select"}},
      {"eval", {"data", "eval"}},
      {"sweep", {"data", "patch", "attention", "select", "eval"}},
      {"pipeline", {"data", "patch", "attention", "autoencoder", "train", "select", "eval", "synth"}},
  };
  return m;
}

void flatten(const json& j, const std::string& prefix, json& flat) {
  for (const auto& [k, v] : j.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object())
      flatten(v, key, flat);
    else
      flat[key] = v;
  }
}

// Checks value against the type of the default and returns it normalized.
json coerce(const std::string& key, const json& def, const json& value) {
  const auto bad = [&](const std::string& want) {
    return ArgumentError("config key '" + key + "' expects " + want + ", got " + value.dump());
  };
  if (def.is_string()) {
    if (!value.is_string()) throw bad("a string");
    return value;
  }
  if (def.is_number_unsigned()) {
    if (value.is_number_unsigned()) return value;
    if (value.is_number_float()) {
      const double d = value.get<double>();
      if (d >= 0 && d == std::floor(d) && d < 9.2e18) return json(static_cast<std::uint64_t>(d));
    }
    throw bad("a non-negative integer");
  }
  if (def.is_number()) {
    if (!value.is_number()) throw bad("a number");
    return json(value.get<double>());
  }
  if (def.is_array()) {
    if (!value.is_array() || value.size() != def.size()) throw bad("an array of " + std::to_string(def.size()));
    for (const auto& v : value)
      if (!v.is_number_unsigned()) throw bad("non-negative integers");
    return value;
  }
  throw bad("a value of the default's type");
}

std::size_t as_size(const json& flat, const char* key) { return flat.at(key).get<std::size_t>(); }

fs::path or_default(const fs::path& given, const fs::path& out, const char* name) {
  return given.empty() ? out / name : given;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

json nan_as_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

struct Scene {
  HsiCube cube;
  LidarRaster lidar;
};

Scene load_scene(const RunConfig& c) {
  Scene s{normalize_per_band(load_cube(c.hsi_path())), normalize(load_lidar(c.lidar_path()))};
  if (s.cube.height != s.lidar.height || s.cube.width != s.lidar.width)
    throw DataError("HSI cube " + std::to_string(s.cube.height) + "x" + std::to_string(s.cube.width) +
                    " and LiDAR raster " + std::to_string(s.lidar.height) + "x" + std::to_string(s.lidar.width) +
                    " differ in size");
  return s;
}

// Truth is optional: an explicit path must exist, the default may not.
std::optional<SynthTruth> load_truth(const RunConfig& c) {
  const fs::path path = c.truth_path();
  if (c.truth.empty() && !fs::exists(path)) return std::nullopt;
  try {
    return truth_from_json(read_json(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

struct Scored {
  Scene scene;
  BandScores scores;
  DistanceMatrix d_dis;
};

Scored score_scene(const RunConfig& c) {
  Scored out{load_scene(c), {}, {}};
  auto model = BandAttentionModel<float>::from_layers(load_checkpoint(c.checkpoint_path()), c.attention.fusion);
  if (model.bands() != out.scene.cube.bands)
    throw DataError("checkpoint expects " + std::to_string(model.bands()) + " bands, cube has " +
                    std::to_string(out.scene.cube.bands));
  if (model.patch_size() != c.patch_size)
    throw DataError("checkpoint was trained with patch size " + std::to_string(model.patch_size()) +
                    ", patch.size is " + std::to_string(c.patch_size));
  const PatchSet patches = extract_patches(out.scene.cube, out.scene.lidar, c.patch_size, c.stride);
  out.scores = score_bands(compute_attention(model, patches, c.threads));
  out.d_dis = dissimilarity(out.scene.cube);
  return out;
}

json report_json(const EvalReport& r) {
  json confusion = json::array();
  for (std::size_t t = 0; t < r.confusion.classes; ++t) {
    json row = json::array();
    for (std::size_t p = 0; p < r.confusion.classes; ++p) row.push_back(r.confusion(t, p));
    confusion.push_back(row);
  }
  json per_class = json::array();
  for (double v : r.per_class) per_class.push_back(nan_as_null(v));
  return {{"oa", r.oa},   {"aa", r.aa}, {"kappa", r.kappa}, {"per_class", per_class}, {"confusion", confusion},
          {"seed", r.seed}, {"k", r.k},   {"bands", r.bands}};
}

std::string role_name(BandRole r) {
  switch (r) {
    case BandRole::informative:
      return "informative";
    case BandRole::redundant:
      return "redundant";
    case BandRole::noise:
      break;
  }
  return "noise";
}

BandRole parse_role(const std::string& s) {
  if (s == "informative") return BandRole::informative;
  if (s == "redundant") return BandRole::redundant;
  if (s == "noise") return BandRole::noise;
  throw DataError("truth: unknown band role '" + s + "'");
}

json spec_json(const SynthSpec& s) {
  return {{"height", s.height},
          {"width", s.width},
          {"bands", s.bands},
          {"informative", s.informative},
          {"classes", s.classes},
          {"sigma", s.sigma},
          {"redundant_fraction", s.redundant_fraction},
          {"grid_rows", s.grid_rows},
          {"grid_cols", s.grid_cols},
          {"max_profile_correlation", s.max_profile_correlation},
          {"seed", s.seed}};
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

fs::path RunConfig::hsi_path() const { return or_default(hsi, out, kCube); }
fs::path RunConfig::lidar_path() const { return or_default(lidar, out, kLidar); }
fs::path RunConfig::labels_path() const { return or_default(labels, out, kLabels); }
fs::path RunConfig::truth_path() const { return or_default(truth, out, kTruth); }
fs::path RunConfig::checkpoint_path() const { return or_default(checkpoint, out, kCheckpoint); }
fs::path RunConfig::selection_path() const { return or_default(selection, out, kSelection); }

json merge_config(const json& file, const json& overrides) {
  json flat = json::object();
  for (const auto& k : config_keys()) flat[k.name] = k.default_value;
  for (const json* layer : {&file, &overrides}) {
    if (layer->is_null()) continue;
    if (!layer->is_object()) throw ArgumentError("config must be a JSON object");
    json items = json::object();
    flatten(*layer, "", items);
    for (const auto& [key, value] : items.items()) {
      if (!flat.contains(key)) throw ArgumentError("unknown config key '" + key + "'");
      flat[key] = coerce(key, flat[key], value);
    }
  }
  return flat;
}

RunConfig to_run_config(const json& flat) {
  RunConfig c;
  c.hsi = flat.at("data.hsi").get<std::string>();
  c.lidar = flat.at("data.lidar").get<std::string>();
  c.labels = flat.at("data.labels").get<std::string>();
  c.truth = flat.at("data.truth").get<std::string>();
  c.checkpoint = flat.at("data.checkpoint").get<std::string>();
  c.selection = flat.at("data.selection").get<std::string>();

  c.patch_size = as_size(flat, "patch.size");
  c.stride = as_size(flat, "patch.stride");
  if (c.patch_size % 2 == 0) throw ArgumentError("patch.size must be odd");
  if (c.patch_size < 5) throw ArgumentError("patch.size must be at least 5");
  if (c.stride == 0) throw ArgumentError("patch.stride must be positive");

  c.attention.fusion = parse_fusion(flat.at("attention.fusion").get<std::string>());
  c.attention.hsi_hidden = flat.at("attention.hsi_hidden").get<std::array<std::size_t, 3>>();
  c.attention.lidar_hidden = flat.at("attention.lidar_hidden").get<std::array<std::size_t, 3>>();
  c.autoencoder.channels = flat.at("autoencoder.channels").get<std::array<std::size_t, 2>>();
  if (c.autoencoder.channels[0] == 0 || c.autoencoder.channels[1] == 0)
    throw ArgumentError("autoencoder.channels must be positive");
  c.autoencoder.lambda = flat.at("autoencoder.lambda").get<double>();
  if (!(c.autoencoder.lambda >= 0.0) || !std::isfinite(c.autoencoder.lambda))
    throw ArgumentError("autoencoder.lambda must be non-negative");

  c.sgd.epochs = as_size(flat, "train.epochs");
  c.sgd.batch_size = as_size(flat, "train.batch_size");
  c.sgd.learning_rate = flat.at("train.learning_rate").get<double>();
  c.sgd.seed = flat.at("train.seed").get<std::uint64_t>();
  if (c.sgd.epochs == 0) throw ArgumentError("train.epochs must be positive");
  if (c.sgd.batch_size == 0) throw ArgumentError("train.batch_size must be positive");
  if (!(c.sgd.learning_rate > 0.0) || !std::isfinite(c.sgd.learning_rate))
    throw ArgumentError("train.learning_rate must be positive");

  c.k = as_size(flat, "select.k");
  c.alpha = flat.at("select.alpha").get<double>();
  c.beta = flat.at("select.beta").get<double>();
  if (!(c.alpha >= 0.0) || !(c.beta >= 0.0) || std::abs(c.alpha + c.beta - 1.0) > 1e-9)
    throw ArgumentError("select.alpha and select.beta must be non-negative and sum to 1");
  c.linkage = parse_linkage(flat.at("select.linkage").get<std::string>());

  c.eval.train_fraction = flat.at("eval.train_fraction").get<double>();
  c.eval.neighbors = as_size(flat, "eval.neighbors");
  c.eval.seed = flat.at("eval.seed").get<std::uint64_t>();
  if (!(c.eval.train_fraction > 0.0 && c.eval.train_fraction < 1.0))
    throw ArgumentError("eval.train_fraction must be in (0, 1)");
  if (c.eval.neighbors == 0) throw ArgumentError("eval.neighbors must be positive");

  c.synth.height = as_size(flat, "synth.height");
  c.synth.width = as_size(flat, "synth.width");
  c.synth.bands = as_size(flat, "synth.bands");
  c.synth.informative = as_size(flat, "synth.informative");
  c.synth.classes = as_size(flat, "synth.classes");
  c.synth.sigma = flat.at("synth.sigma").get<double>();
  c.synth.redundant_fraction = flat.at("synth.redundant_fraction").get<double>();
  c.synth.grid_rows = as_size(flat, "synth.grid_rows");
  c.synth.grid_cols = as_size(flat, "synth.grid_cols");
  c.synth.max_profile_correlation = flat.at("synth.max_profile_correlation").get<double>();
  c.synth.seed = flat.at("synth.seed").get<std::uint64_t>();
  return c;
}

json truth_to_json(const SynthTruth& truth, const SynthSpec& spec) {
  json roles = json::array();
  for (std::size_t b = 0; b < truth.roles.size(); ++b) {
    const BandInfo& r = truth.roles[b];
    roles.push_back({{"band", b}, {"role", role_name(r.role)}, {"source", r.source}, {"gain", r.gain},
                     {"offset", r.offset}});
  }
  return {{"informative", truth.informative},
          {"signatures", truth.signatures},
          {"lidar_heights", truth.lidar_heights},
          {"roles", roles},
          {"spec", spec_json(spec)}};
}

SynthTruth truth_from_json(const json& j) {
  SynthTruth t;
  t.informative = j.at("informative").get<std::vector<std::size_t>>();
  t.signatures = j.at("signatures").get<std::vector<std::vector<double>>>();
  t.lidar_heights = j.at("lidar_heights").get<std::vector<double>>();
  for (const auto& r : j.at("roles")) {
    t.roles.push_back({parse_role(r.at("role").get<std::string>()), r.at("source").get<std::size_t>(),
                       r.at("gain").get<double>(), r.at("offset").get<double>()});
  }
  return t;
}

void cmd_synth(const RunConfig& c) {
  const SynthScene scene = generate(c.synth);
  fs::create_directories(c.out);
  save_raster(scene.cube, c.hsi_path());
  save_raster(scene.lidar, c.lidar_path());
  save_labels(scene.labels, c.labels_path());
  write_text(c.truth_path(), truth_to_json(scene.truth, c.synth).dump(2) + "\n");
}

TrainOutcome cmd_train(const RunConfig& c) {
  const Scene scene = load_scene(c);
  const PatchSet patches = extract_patches(scene.cube, scene.lidar, c.patch_size, c.stride);
  BandAttentionModel<float> model(scene.cube.bands, c.patch_size, c.attention, c.autoencoder, c.sgd.seed);
  TrainConfig tc;
  tc.sgd = c.sgd;
  tc.lambda = c.autoencoder.lambda;
  tc.threads = c.threads;
  TrainReport report = train(model, patches, tc);

  fs::create_directories(c.out);
  save_checkpoint(model.params(), c.checkpoint_path());
  const json j{{"epochs", report.loss.size()},
               {"loss", report.loss},
               {"recon", report.recon},
               {"sparsity", report.sparsity},
               {"mean_fused_mask", report.mean_fused_mask()},
               {"lambda", c.autoencoder.lambda},
               {"samples", patches.count},
               {"seconds", report.seconds}};
  write_text(c.out / kReport, j.dump(2) + "\n");
  return {std::move(report), std::move(model)};
}

Selection cmd_select(const RunConfig& c) {
  const Scored s = score_scene(c);
  const std::size_t B = s.scene.cube.bands;
  if (c.k < 1 || c.k > B)
    throw ArgumentError("select.k=" + std::to_string(c.k) + " outside [1, " + std::to_string(B) + "]");
  const DistanceMatrix d_comb =
      combined_distance(attention_distance(s.scores.normalized), s.d_dis, c.alpha, c.beta);
  Selection sel = select_bands(d_comb, s.scores.normalized, c.k, c.linkage);
  sel.alpha = c.alpha;
  sel.beta = c.beta;

  json j{{"bands", sel.bands},
         {"k", sel.k},
         {"clusters", sel.clusters},
         {"alpha", sel.alpha},
         {"beta", sel.beta},
         {"linkage", std::string(to_string(c.linkage))},
         {"attention", s.scores.raw},
         {"attention_normalized", s.scores.normalized}};
  if (const auto truth = load_truth(c)) {
    j["recovery"] = oracle_check(sel.bands, *truth);
    j["random_recovery"] = expected_random_recovery(*truth, sel.k);
  }
  write_text(c.selection_path(), j.dump(2) + "\n");
  return sel;
}

EvalReport cmd_eval(const RunConfig& c) {
  const Scene scene = load_scene(c);
  const LabelMap labels = load_labels(c.labels_path(), scene.cube.height, scene.cube.width);
  std::vector<std::size_t> bands;
  try {
    bands = read_json(c.selection_path()).at("bands").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw DataError(c.selection_path().string() + ": " + e.what());
  }
  const EvalReport r = evaluate(scene.cube, scene.lidar, labels, bands, c.eval);
  json j = report_json(r);
  if (const auto truth = load_truth(c)) {
    j["recovery"] = oracle_check(bands, *truth);
    j["random_recovery"] = expected_random_recovery(*truth, bands.size());
  }
  write_text(c.out / kEval, j.dump(2) + "\n");
  return r;
}

std::vector<EvalReport> cmd_sweep(const RunConfig& c) {
  const Scored s = score_scene(c);
  const LabelMap labels = load_labels(c.labels_path(), s.scene.cube.height, s.scene.cube.width);
  SweepConfig sc;
  sc.alpha = c.alpha;
  sc.beta = c.beta;
  sc.linkage = c.linkage;
  sc.eval = c.eval;
  auto reports = sweep(s.scene.cube, s.scene.lidar, labels, s.scores.normalized, s.d_dis, sc);
  write_text(c.out / kSweep, sweep_csv(reports));
  return reports;
}

void cmd_pipeline(const RunConfig& c) {
  if (c.hsi.empty()) cmd_synth(c);
  cmd_train(c);
  cmd_select(c);
  cmd_eval(c);
  cmd_sweep(c);
}

namespace {

std::string join_bands(const std::vector<std::size_t>& bands) {
  std::string s;
  for (std::size_t b : bands) s += (s.empty() ? "" : ",") + std::to_string(b);
  return s;
}

int run_command(const std::string& name, const RunConfig& c, std::ostream& out) {
  if (name == "synth") {
    cmd_synth(c);
    out << "synth: wrote " << kCube << ", " << kLidar << ", " << kLabels << ", " << kTruth << " to " << c.out.string()
        << "\n";
  } else if (name == "train") {
    const TrainOutcome t = cmd_train(c);
    out << "train: " << t.report.loss.size() << " epochs, loss " << t.report.loss.front() << " -> "
        << t.report.loss.back() << ", " << t.report.seconds << " s\n";
  } else if (name == "select") {
    const Selection sel = cmd_select(c);
    out << "select: bands " << join_bands(sel.bands) << "\n";
  } else if (name == "eval") {
    const EvalReport r = cmd_eval(c);
    out << "eval: oa " << r.oa << " aa " << r.aa << " kappa " << r.kappa << "\n";
  } else if (name == "sweep") {
    const std::size_t rows = cmd_sweep(c).size();
    out << "sweep: " << rows << " rows written to " << (c.out / kSweep).string() << "\n";
  } else {
    cmd_pipeline(c);
    out << "pipeline: outputs in " << c.out.string() << "\n";
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attention-guided unsupervised band selection for HSI + LiDAR", "hsiband"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string out_dir = ".";
  std::string config_file;
  std::size_t threads = 1;
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--config", config_file, "JSON config file (nested objects or dotted keys)");
  app.add_option("--threads", threads, "worker thread cap, 0 = hardware concurrency")->capture_default_str();

  const std::map<std::string, std::string> descriptions{
      {"synth", "generate a synthetic scene with planted bands"},
      {"train", "train the attention model and autoencoder"},
      {"select", "score bands with a trained checkpoint and select k"},
      {"eval", "KNN evaluation of a selection"},
      {"sweep", "select and evaluate for k = 1, 5, 10, ... capped at B"},
      {"pipeline", "synth (unless data.hsi is set), train, select, eval, sweep"},
  };
  std::map<std::string, std::string> raw;  // flag name -> text
  std::vector<std::pair<CLI::App*, std::vector<std::pair<std::string, CLI::Option*>>>> subs;
  for (const auto& [name, sections] : command_sections()) {
    CLI::App* sub = app.add_subcommand(name, descriptions.at(name));
    std::vector<std::pair<std::string, CLI::Option*>> opts;
    for (const ConfigKey& k : config_keys()) {
      if (!sections.count(section_of(k.name))) continue;
      const std::string shown = k.default_value.is_string() ? "\"" + k.default_value.get<std::string>() + "\""
                                                            : k.default_value.dump();
      const char* type = k.default_value.is_string()            ? "TEXT"
                         : k.default_value.is_number_unsigned() ? "UINT"
                         : k.default_value.is_number()          ? "FLOAT"
                                                                : "ARRAY";
      auto* opt = sub->add_option("--" + k.name, raw[k.name], k.help)->default_str(shown)->type_name(type);
      opts.emplace_back(k.name, opt);
    }
    for (const Alias& a : aliases()) {
      if (!sections.count(section_of(a.keys.front()))) continue;
      std::string targets;
      for (const auto& t : a.keys) targets += (targets.empty() ? "" : ", ") + t;
      opts.emplace_back("alias:" + a.flag, sub->add_option("--" + a.flag, raw["alias:" + a.flag], "sets " + targets));
    }
    subs.emplace_back(sub, std::move(opts));
  }

  std::vector<std::string> argv_rest(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(argv_rest.begin(), argv_rest.end());
  try {
    app.parse(argv_rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    json overrides = json::object();
    std::string command;
    for (auto& [sub, opts] : subs) {
      if (!sub->parsed()) continue;
      command = sub->get_name();
      for (auto& [name, opt] : opts) {
        if (opt->count() == 0) continue;
        const std::string& text = raw[name];
        std::vector<std::string> keys{name};
        if (name.rfind("alias:", 0) == 0) {
          const std::string flag = name.substr(6);
          keys = std::find_if(aliases().begin(), aliases().end(), [&](const Alias& a) { return a.flag == flag; })->keys;
        }
        for (const std::string& key : keys) {
          const json& def =
              std::find_if(config_keys().begin(), config_keys().end(), [&](const ConfigKey& k) { return k.name == key; })
                  ->default_value;
          if (def.is_string()) {
            overrides[key] = text;
          } else {
            try {
              overrides[key] = json::parse(text);
            } catch (const json::exception&) {
              throw ArgumentError("--" + key + ": cannot parse '" + text + "'");
            }
          }
        }
      }
    }
    json file = nullptr;
    if (!config_file.empty()) {
      try {
        file = read_json(config_file);
      } catch (const DataError& e) {
        throw ArgumentError(e.what());
      }
    }
    RunConfig c = to_run_config(merge_config(file, overrides));
    c.out = out_dir;
    c.threads = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
    return run_command(command, c, out);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    // ArgumentError, DataError, filesystem and JSON errors are all input problems.
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace hsiband::cli
