#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dds/config.hpp"
#include "dds/metrics.hpp"
#include "dds/train.hpp"

namespace dds {

// Command implementations behind the CLI verbs. They throw ConfigError /
// NumericalError; the binary maps those to exit codes 2 and 3.

void cmd_gen_data(const std::filesystem::path& config_path,
                  const std::filesystem::path& out_dir,
                  std::optional<uint64_t> seed_override);

struct SplitRequest {
  // Either an explicit list "s,o,r;s,o,r;..." or a fraction of classes.
  std::string holdout_list;
  std::optional<double> holdout_fraction;
  double test_fraction = 0.3;
};

void cmd_make_split(const std::filesystem::path& corpus_dir,
                    const std::filesystem::path& out_path, const SplitRequest& req,
                    uint64_t seed);

struct TrainOutcome {
  LossBreakdown first;
  LossBreakdown last;
  std::filesystem::path final_checkpoint;  // prefix without extension
};

TrainOutcome cmd_train(const std::filesystem::path& config_path,
                       const std::filesystem::path& out_dir,
                       const std::optional<std::filesystem::path>& resume,
                       std::optional<uint64_t> seed_override);

EvalReport cmd_eval(const std::filesystem::path& checkpoint_prefix,
                    const std::filesystem::path& corpus_dir,
                    const std::filesystem::path& split_path,
                    const std::filesystem::path& out_dir,
                    const EvalConfig& eval_cfg);

struct AblationRow {
  std::string variant;
  std::string config_hash;
  EvalReport report;
};

std::vector<AblationRow> cmd_ablate(const std::filesystem::path& config_path,
                                    const std::vector<std::string>& variants,
                                    const std::filesystem::path& out_dir);

void cmd_plot_loss(const std::filesystem::path& loss_log,
                   const std::filesystem::path& out_dir);
void cmd_plot_reports(const std::vector<std::filesystem::path>& reports,
                      const std::filesystem::path& out_dir);

// Applies a named ablation variant to a base config. Throws ConfigError for
// unknown names, listing the supported set.
RunConfig apply_variant(const RunConfig& base, const std::string& variant);

// Evaluation core shared by cmd_eval and the acceptance suite.
std::vector<FrameDetections> run_inference(const DdsModel& model, const Corpus& corpus,
                                           const std::vector<std::string>& video_ids,
                                           int top_k);

std::string report_to_json_text(const EvalReport& report);

}  // namespace dds
