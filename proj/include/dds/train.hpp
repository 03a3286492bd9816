#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dds/config.hpp"
#include "dds/dataset.hpp"
#include "dds/model.hpp"

namespace dds {

class AdamW {
 public:
  AdamW(ParamRegistry& reg, const OptimizerConfig& cfg);

  // lr_scale multiplies the base rate (learning-rate schedule); parameters
  // whose name starts with "backbone." use the backbone rate.
  void step(double lr_scale);

  long step_count() const { return t_; }
  void set_step_count(long t) { t_ = t; }

 private:
  ParamRegistry& reg_;
  OptimizerConfig cfg_;
  long t_ = 0;
};

// Sums per-frame losses (Hungarian-matched independently per frame) over a
// video and divides by the frame count.
struct VideoLoss {
  Value total;
  LossBreakdown mean;  // per-frame mean of each term
};

VideoLoss video_loss(Tape& tape, const DdsModel& model,
                     const std::vector<Image>& frames, const VideoAnnotation& ann,
                     const MatchConfig& match_cfg, const CriterionConfig& crit_cfg);

struct CheckpointMeta {
  int format_version = 1;
  ModelConfig model;
  long step = 0;
  uint64_t seed = 0;
};

void save_checkpoint(const std::filesystem::path& prefix, const DdsModel& model,
                     const AdamW* optimizer, long step, uint64_t seed);
// Loads parameters (and optimizer moments when present) into a model built
// from the stored config. Throws ConfigError when `expected` differs from the
// stored config.
CheckpointMeta load_checkpoint(const std::filesystem::path& prefix, DdsModel& model,
                               AdamW* optimizer,
                               const std::optional<ModelConfig>& expected);
CheckpointMeta peek_checkpoint(const std::filesystem::path& prefix);

struct TrainResult {
  long steps_run = 0;
  LossBreakdown first;
  LossBreakdown last;
};

using FrameLoader =
    std::function<std::vector<Image>(const VideoAnnotation&)>;

// Deterministic training loop: the video order for epoch e is a pure
// function of (seed, e), so resuming from a checkpoint continues the exact
// schedule. Appends one row per step to `loss_log` when provided.
TrainResult train_model(DdsModel& model, AdamW& optimizer, const RunConfig& cfg,
                        const std::vector<const VideoAnnotation*>& train_videos,
                        const FrameLoader& load_frames, long start_step,
                        long total_steps, std::ostream* loss_log,
                        const std::filesystem::path* checkpoint_dir);

std::string loss_log_header();
std::string loss_log_row(long step, const LossBreakdown& b, double lr_scale);

}  // namespace dds
