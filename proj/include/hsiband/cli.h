#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsiband/attention.h"
#include "hsiband/autoencoder.h"
#include "hsiband/bandselect.h"
#include "hsiband/eval.h"
#include "hsiband/layers.h"
#include "hsiband/model.h"
#include "hsiband/synth.h"

namespace hsiband::cli {

// One configurable key. Keys are dotted ("train.epochs"); the section before
// the first dot decides which subcommands accept it.
struct ConfigKey {
  std::string name;
  nlohmann::json default_value;
  std::string help;
};

const std::vector<ConfigKey>& config_keys();

struct RunConfig {
  std::filesystem::path out = ".";
  // Empty paths fall back to the fixed file names under `out`.
  std::filesystem::path hsi, lidar, labels, truth, checkpoint, selection;
  std::size_t patch_size = 7;
  std::size_t stride = 1;
  AttentionNetConfig attention;
  AutoencoderConfig autoencoder;
  SgdConfig sgd;
  double alpha = 0.5;
  double beta = 0.5;
  std::size_t k = 3;
  Linkage linkage = Linkage::average;
  EvalConfig eval;
  SynthSpec synth;
  std::size_t threads = 1;

  std::filesystem::path hsi_path() const;
  std::filesystem::path lidar_path() const;
  std::filesystem::path labels_path() const;
  std::filesystem::path truth_path() const;
  std::filesystem::path checkpoint_path() const;
  std::filesystem::path selection_path() const;
};

// Defaults, then the config file (nested objects or dotted keys), then
// overrides, in that order. Throws ArgumentError on unknown keys, type
// mismatches and invalid values.
nlohmann::json merge_config(const nlohmann::json& file, const nlohmann::json& overrides);
RunConfig to_run_config(const nlohmann::json& flat);

struct TrainOutcome {
  TrainReport report;
  BandAttentionModel<float> model;
};

void cmd_synth(const RunConfig& c);
TrainOutcome cmd_train(const RunConfig& c);
Selection cmd_select(const RunConfig& c);
EvalReport cmd_eval(const RunConfig& c);
std::vector<EvalReport> cmd_sweep(const RunConfig& c);
void cmd_pipeline(const RunConfig& c);

nlohmann::json truth_to_json(const SynthTruth& truth, const SynthSpec& spec);
SynthTruth truth_from_json(const nlohmann::json& j);

// Full command line, argv[0] included. Returns the process exit code:
// 0 success, 2 usage, config or data error, 3 numerical failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hsiband::cli
