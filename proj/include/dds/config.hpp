#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "dds/criterion.hpp"
#include "dds/matching.hpp"
#include "dds/model.hpp"

namespace dds {

// Configuration / validation problems map to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input files; a flavor of configuration error.
struct ParseError : ConfigError {
  using ConfigError::ConfigError;
};

// Runtime numerical failures (NaN loss and friends) map to exit code 3.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OptimizerConfig {
  double lr = 1e-3;
  double backbone_lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Learning rate is divided by 10 every lr_drop_steps steps (0 = never).
  int lr_drop_steps = 0;
  // Linear ramp from 0 over the first warmup_steps steps (0 = none).
  int warmup_steps = 0;
  double grad_clip = 1.0;
};

struct TrainingConfig {
  int steps = 500;
  int videos_per_step = 4;
  int checkpoint_every = 0;  // 0 = only final
  int log_every = 1;
};

struct EvalConfig {
  std::vector<int> recall_ks = {20, 50};
  int top_k = 100;
  double iou_threshold = 0.5;
};

struct RunConfig {
  uint64_t seed = 1;
  ModelConfig model;
  MatchConfig matching;
  CriterionConfig criterion;
  OptimizerConfig optimizer;
  TrainingConfig training;
  EvalConfig evaluation;
  std::string corpus_path;
  std::string split_path;

  void validate(bool check_paths) const;
};

// Parses a run config, tolerating missing fields (defaults fill in) but
// rejecting unknown ones.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig run_config_from_json_text(const std::string& text, const std::string& locus);

// Serializes with every field explicitly enumerated.
std::string run_config_to_json_text(const RunConfig& cfg);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

// Hash of the config with wiring fields (variant, query sharing, decoder
// depths) blanked out; ablation rows sharing everything else agree on it.
std::string config_hash_excluding_variant(const RunConfig& cfg);

}  // namespace dds
