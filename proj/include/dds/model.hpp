#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dds/criterion.hpp"
#include "dds/nn.hpp"
#include "dds/predictions.hpp"
#include "dds/tape.hpp"

namespace dds {

// Network wiring variants used by the ablation study. kFull is the complete
// dual-branch network with relation-region prediction; the others strip
// components down to the single-branch base.
enum class Variant {
  kBase,          // one branch, one query set, no relation region
  kMultiDecoder,  // shared encoder, separate decoders, no relation region
  kMultiEncoder,  // separate encoders and decoders, no relation region
  kFull,          // separate encoders/decoders + relation region
};

enum class QuerySharing { kNone, kObjectToRelation, kRelationToObject };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);
QuerySharing query_sharing_from_string(const std::string& s);
std::string to_string(QuerySharing q);

struct ModelConfig {
  int d = 256;
  int n_q = 64;
  int heads = 8;
  int enc_layers = 6;
  int obj_dec_layers = 6;
  int rel_dec_layers = 3;
  int temporal_layers = 1;
  int ffn_hidden = 512;
  int n_obj = 0;
  int n_rel = 0;
  bool subject_fixed = false;
  int image_h = 64;
  int image_w = 64;
  std::vector<int> backbone_channels = {32, 64};
  std::vector<int> backbone_patch = {4, 2};
  // When false, previous-frame embeddings enter the next frame as constants;
  // when true, gradients flow through the whole video.
  bool temporal_full_backprop = false;
  Variant variant = Variant::kFull;
  QuerySharing query_sharing = QuerySharing::kNone;

  bool use_relation_region() const { return variant == Variant::kFull; }
  bool separate_decoders() const { return variant != Variant::kBase; }
  bool separate_encoders() const {
    return variant == Variant::kMultiEncoder || variant == Variant::kFull;
  }
  int total_stride() const;
  int tokens_h() const { return image_h / total_stride(); }
  int tokens_w() const { return image_w / total_stride(); }

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// An input frame: 3 x (H*W) pixel matrix with values in [0, 1].
using Image = Mat;

// Per-branch decoder outputs carried across frames.
struct Embeddings {
  Value obj;
  Value rel;
};

struct FramePass {
  FrameOutputs outputs;
  Embeddings embeddings;
};

// Patchify convolution stack followed by a 1x1 projection to d; tokens get a
// fixed sinusoidal position embedding.
struct Backbone {
  std::vector<Linear> stages;  // weight is (C_in*k*k) x C_out
  Linear project;
  std::vector<int> patches;
  int in_h = 0, in_w = 0;

  Backbone() = default;
  Backbone(const ModelConfig& cfg, Rng& rng);
  void register_into(ParamRegistry& reg);
  Value forward(Tape& t, const Image& frame) const;
};

class DdsModel {
 public:
  explicit DdsModel(const ModelConfig& cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamRegistry& params() { return reg_; }
  const ParamRegistry& params() const { return reg_; }

  // Runs one frame. `prev` are the previous frame's embeddings (absent for
  // the first frame, which bypasses the temporal decoders entirely).
  FramePass forward_frame(Tape& t, const Image& frame,
                          const std::optional<Embeddings>& prev) const;

  // Sequential pass over a whole video. Unless the config asks for full
  // backpropagation through time, embeddings are detached at frame
  // boundaries.
  std::vector<FramePass> forward_video(Tape& t, const std::vector<Image>& frames) const;

  PredictionSet extract_predictions(const Tape& t, const FrameOutputs& f) const;

  // Encoded feature maps for both branches (identical object when encoders
  // are shared). Exposed for the branch-separation tests.
  std::pair<Value, Value> encode(Tape& t, Value feature_map) const;
  Value backbone_tokens(Tape& t, const Image& frame) const;

  // Temporal decoders as a standalone surface. With no previous embeddings
  // the queries pass through untouched (first-frame bypass).
  Value temporal_decode_object(Tape& t, Value queries,
                               const std::optional<Value>& prev) const;
  Value temporal_decode_relation(Tape& t, Value queries,
                                 const std::optional<Value>& prev) const;

  Parameter& object_queries() { return obj_queries_; }
  Parameter& relation_queries() { return rel_queries_; }

 private:
  Value run_encoder(Tape& t, const std::vector<EncoderLayer>& layers,
                    const LayerNorm& final_ln, Value x) const;
  Value run_temporal(Tape& t, const std::vector<TemporalDecoderLayer>& layers,
                     const LayerNorm& final_ln, Value queries,
                     const std::optional<Value>& prev) const;
  Value run_spatial(Tape& t, const std::vector<SpatialDecoderLayer>& layers,
                    const LayerNorm& final_ln, Value queries, Value memory,
                    Value query_pos) const;

  ModelConfig cfg_;
  ParamRegistry reg_;

  Backbone backbone_;
  std::vector<EncoderLayer> obj_encoder_;
  std::vector<EncoderLayer> rel_encoder_;
  std::vector<TemporalDecoderLayer> obj_temporal_;
  std::vector<TemporalDecoderLayer> rel_temporal_;
  std::vector<SpatialDecoderLayer> obj_spatial_;
  std::vector<SpatialDecoderLayer> rel_spatial_;
  // pre-norm stacks end with a layer norm
  LayerNorm obj_encoder_ln_, rel_encoder_ln_;
  LayerNorm obj_temporal_ln_, rel_temporal_ln_;
  LayerNorm obj_spatial_ln_, rel_spatial_ln_;

  Parameter obj_queries_;
  Parameter rel_queries_;
  Parameter obj_query_pos_;
  Parameter rel_query_pos_;

  BoxHead subject_box_head_;
  BoxHead object_box_head_;
  Linear subject_class_head_;
  Linear object_class_head_;
  Linear relation_class_head_;
  std::unique_ptr<BoxHead> relation_box_head_;

  Mat token_pos_;  // fixed sinusoidal embedding
};

}  // namespace dds
