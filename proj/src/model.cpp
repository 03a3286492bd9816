#include "dds/model.hpp"

#include <stdexcept>

namespace dds {

Variant variant_from_string(const std::string& s) {
  if (s == "base") return Variant::kBase;
  if (s == "multi_decoder") return Variant::kMultiDecoder;
  if (s == "multi_encoder") return Variant::kMultiEncoder;
  if (s == "dds") return Variant::kFull;
  throw std::invalid_argument("unknown variant: " + s +
                              " (expected base|multi_decoder|multi_encoder|dds)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kBase: return "base";
    case Variant::kMultiDecoder: return "multi_decoder";
    case Variant::kMultiEncoder: return "multi_encoder";
    case Variant::kFull: return "dds";
  }
  return "dds";
}

QuerySharing query_sharing_from_string(const std::string& s) {
  if (s == "none") return QuerySharing::kNone;
  if (s == "o_to_r") return QuerySharing::kObjectToRelation;
  if (s == "r_to_o") return QuerySharing::kRelationToObject;
  throw std::invalid_argument("unknown query sharing mode: " + s);
}

std::string to_string(QuerySharing q) {
  switch (q) {
    case QuerySharing::kNone: return "none";
    case QuerySharing::kObjectToRelation: return "o_to_r";
    case QuerySharing::kRelationToObject: return "r_to_o";
  }
  return "none";
}

int ModelConfig::total_stride() const {
  int s = 1;
  for (int p : backbone_patch) s *= p;
  return s;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("model config: " + msg);
  };
  if (d < 4 || d % 4 != 0) fail("d must be a positive multiple of 4");
  if (heads < 1 || d % heads != 0) fail("d must be divisible by the head count");
  if (n_q < 1) fail("n_q must be >= 1");
  if (enc_layers < 1 || obj_dec_layers < 1 || rel_dec_layers < 1 || temporal_layers < 1)
    fail("all layer counts must be >= 1");
  if (ffn_hidden < 1) fail("ffn_hidden must be >= 1");
  if (n_obj < 1 || n_rel < 1) fail("object and relation vocabulary sizes are required");
  if (backbone_channels.empty() || backbone_channels.size() != backbone_patch.size())
    fail("backbone_channels and backbone_patch must be nonempty and equal length");
  for (int p : backbone_patch)
    if (p < 1) fail("backbone patch sizes must be >= 1");
  if (image_h < 1 || image_w < 1) fail("image dimensions must be positive");
  if (image_h % total_stride() != 0 || image_w % total_stride() != 0)
    fail("image dimensions must be divisible by the total backbone stride");
  if (query_sharing != QuerySharing::kNone && variant == Variant::kBase)
    fail("query sharing requires separate decoders");
}

Backbone::Backbone(const ModelConfig& cfg, Rng& rng)
    : patches(cfg.backbone_patch), in_h(cfg.image_h), in_w(cfg.image_w) {
  int c_in = 3;
  for (size_t i = 0; i < cfg.backbone_channels.size(); ++i) {
    int k = cfg.backbone_patch[i];
    int c_out = cfg.backbone_channels[i];
    stages.emplace_back("backbone.stage" + std::to_string(i), c_in * k * k, c_out, rng);
    c_in = c_out;
  }
  project = Linear("backbone.project", c_in, cfg.d, rng);
}

void Backbone::register_into(ParamRegistry& reg) {
  for (auto& s : stages) s.register_into(reg);
  project.register_into(reg);
}

Value Backbone::forward(Tape& t, const Image& frame) const {
  if (frame.rows() != 3 || frame.cols() != static_cast<Eigen::Index>(in_h) * in_w) {
    throw std::invalid_argument("backbone: frame must be 3 x (H*W) with configured size");
  }
  Value x = t.constant(frame);
  int h = in_h, w = in_w;
  for (size_t i = 0; i < stages.size(); ++i) {
    Value cols = t.im2col(x, h, w, patches[i]);
    Value y = t.gelu(stages[i].forward(t, cols));
    h /= patches[i];
    w /= patches[i];
    x = t.transpose(y);
  }
  return project.forward(t, t.transpose(x));
}

DdsModel::DdsModel(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);

  backbone_ = Backbone(cfg_, rng);

  auto make_encoder = [&](const std::string& name) {
    std::vector<EncoderLayer> enc;
    for (int i = 0; i < cfg_.enc_layers; ++i)
      enc.emplace_back(name + "." + std::to_string(i), cfg_.d, cfg_.heads,
                       cfg_.ffn_hidden, rng);
    return enc;
  };
  auto make_temporal = [&](const std::string& name) {
    std::vector<TemporalDecoderLayer> dec;
    for (int i = 0; i < cfg_.temporal_layers; ++i)
      dec.emplace_back(name + "." + std::to_string(i), cfg_.d, cfg_.heads,
                       cfg_.ffn_hidden, rng);
    return dec;
  };
  auto make_spatial = [&](const std::string& name, int layers) {
    std::vector<SpatialDecoderLayer> dec;
    for (int i = 0; i < layers; ++i)
      dec.emplace_back(name + "." + std::to_string(i), cfg_.d, cfg_.heads,
                       cfg_.ffn_hidden, rng);
    return dec;
  };
  auto make_queries = [&](const std::string& name) {
    Mat q(cfg_.n_q, cfg_.d);
    for (int i = 0; i < cfg_.n_q; ++i)
      for (int j = 0; j < cfg_.d; ++j) q(i, j) = rng.normal();
    return Parameter(name, std::move(q));
  };

  obj_encoder_ = make_encoder("obj_encoder");
  obj_encoder_ln_ = LayerNorm("obj_encoder.final_ln", cfg_.d);
  if (cfg_.separate_encoders()) {
    rel_encoder_ = make_encoder("rel_encoder");
    rel_encoder_ln_ = LayerNorm("rel_encoder.final_ln", cfg_.d);
  }

  obj_temporal_ = make_temporal("obj_temporal");
  obj_temporal_ln_ = LayerNorm("obj_temporal.final_ln", cfg_.d);
  obj_spatial_ = make_spatial("obj_spatial", cfg_.obj_dec_layers);
  obj_spatial_ln_ = LayerNorm("obj_spatial.final_ln", cfg_.d);
  obj_queries_ = make_queries("obj_queries");
  obj_query_pos_ = make_queries("obj_query_pos");

  if (cfg_.separate_decoders()) {
    rel_temporal_ = make_temporal("rel_temporal");
    rel_temporal_ln_ = LayerNorm("rel_temporal.final_ln", cfg_.d);
    rel_spatial_ = make_spatial("rel_spatial", cfg_.rel_dec_layers);
    rel_spatial_ln_ = LayerNorm("rel_spatial.final_ln", cfg_.d);
    rel_queries_ = make_queries("rel_queries");
    rel_query_pos_ = make_queries("rel_query_pos");
  }

  subject_box_head_ = BoxHead("subject_box_head", cfg_.d, rng);
  object_box_head_ = BoxHead("object_box_head", cfg_.d, rng);
  subject_class_head_ = Linear("subject_class_head", cfg_.d, cfg_.n_obj + 1, rng);
  object_class_head_ = Linear("object_class_head", cfg_.d, cfg_.n_obj + 1, rng);
  relation_class_head_ = Linear("relation_class_head", cfg_.d, cfg_.n_rel, rng);
  if (cfg_.use_relation_region()) {
    relation_box_head_ = std::make_unique<BoxHead>("relation_box_head", cfg_.d, rng);
  }

  token_pos_ = sinusoidal_position_embedding(cfg_.tokens_h(), cfg_.tokens_w(), cfg_.d);

  // Everything is at its final address now; register in a fixed order.
  backbone_.register_into(reg_);
  for (auto& l : obj_encoder_) l.register_into(reg_);
  obj_encoder_ln_.register_into(reg_);
  for (auto& l : rel_encoder_) l.register_into(reg_);
  if (cfg_.separate_encoders()) rel_encoder_ln_.register_into(reg_);
  for (auto& l : obj_temporal_) l.register_into(reg_);
  obj_temporal_ln_.register_into(reg_);
  for (auto& l : obj_spatial_) l.register_into(reg_);
  obj_spatial_ln_.register_into(reg_);
  reg_.add(&obj_queries_);
  reg_.add(&obj_query_pos_);
  for (auto& l : rel_temporal_) l.register_into(reg_);
  for (auto& l : rel_spatial_) l.register_into(reg_);
  if (cfg_.separate_decoders()) {
    rel_temporal_ln_.register_into(reg_);
    rel_spatial_ln_.register_into(reg_);
    reg_.add(&rel_queries_);
    reg_.add(&rel_query_pos_);
  }
  subject_box_head_.register_into(reg_);
  object_box_head_.register_into(reg_);
  subject_class_head_.register_into(reg_);
  object_class_head_.register_into(reg_);
  relation_class_head_.register_into(reg_);
  if (relation_box_head_) relation_box_head_->register_into(reg_);
}

Value DdsModel::backbone_tokens(Tape& t, const Image& frame) const {
  Value tokens = backbone_.forward(t, frame);
  return t.add(tokens, t.constant(token_pos_));
}

Value DdsModel::run_encoder(Tape& t, const std::vector<EncoderLayer>& layers,
                            const LayerNorm& final_ln, Value x) const {
  for (const auto& layer : layers) x = layer.forward(t, x);
  return final_ln.forward(t, x);
}

Value DdsModel::run_temporal(Tape& t, const std::vector<TemporalDecoderLayer>& layers,
                             const LayerNorm& final_ln, Value queries,
                             const std::optional<Value>& prev) const {
  // First frame of a video: the raw queries pass through untouched.
  if (!prev.has_value()) return queries;
  Value x = queries;
  for (const auto& layer : layers) x = layer.forward(t, x, *prev);
  return final_ln.forward(t, x);
}

Value DdsModel::run_spatial(Tape& t, const std::vector<SpatialDecoderLayer>& layers,
                            const LayerNorm& final_ln, Value queries, Value memory,
                            Value query_pos) const {
  Value x = queries;
  for (const auto& layer : layers) x = layer.forward(t, x, memory, query_pos);
  return final_ln.forward(t, x);
}

Value DdsModel::temporal_decode_object(Tape& t, Value queries,
                                       const std::optional<Value>& prev) const {
  return run_temporal(t, obj_temporal_, obj_temporal_ln_, queries, prev);
}

Value DdsModel::temporal_decode_relation(Tape& t, Value queries,
                                         const std::optional<Value>& prev) const {
  const auto& layers = cfg_.separate_decoders() ? rel_temporal_ : obj_temporal_;
  const auto& ln = cfg_.separate_decoders() ? rel_temporal_ln_ : obj_temporal_ln_;
  return run_temporal(t, layers, ln, queries, prev);
}

std::pair<Value, Value> DdsModel::encode(Tape& t, Value feature_map) const {
  Value obj_encoded = run_encoder(t, obj_encoder_, obj_encoder_ln_, feature_map);
  if (!cfg_.separate_encoders()) return {obj_encoded, obj_encoded};
  Value rel_encoded = run_encoder(t, rel_encoder_, rel_encoder_ln_, feature_map);
  return {rel_encoded, obj_encoded};
}

FramePass DdsModel::forward_frame(Tape& t, const Image& frame,
                                  const std::optional<Embeddings>& prev) const {
  Value tokens = backbone_tokens(t, frame);
  auto [rel_feat, obj_feat] = encode(t, tokens);

  auto& self = const_cast<DdsModel&>(*this);

  if (!cfg_.separate_decoders()) {
    Value q = t.leaf(self.obj_queries_);
    std::optional<Value> prev_emb;
    if (prev) prev_emb = prev->obj;
    Value agg = run_temporal(t, obj_temporal_, obj_temporal_ln_, q, prev_emb);
    Value emb = run_spatial(t, obj_spatial_, obj_spatial_ln_, agg, obj_feat,
                            t.leaf(self.obj_query_pos_));
    FrameOutputs out;
    out.sB = subject_box_head_.forward(t, emb);
    out.oB = object_box_head_.forward(t, emb);
    out.sP_logits = subject_class_head_.forward(t, emb);
    out.oP_logits = object_class_head_.forward(t, emb);
    out.rP_logits = relation_class_head_.forward(t, emb);
    return {out, {emb, emb}};
  }

  std::optional<Value> prev_obj, prev_rel;
  if (prev) {
    prev_obj = prev->obj;
    prev_rel = prev->rel;
  }

  Value obj_emb, rel_emb;
  auto run_obj = [&](Value queries) {
    Value agg = run_temporal(t, obj_temporal_, obj_temporal_ln_, queries, prev_obj);
    return run_spatial(t, obj_spatial_, obj_spatial_ln_, agg, obj_feat,
                       t.leaf(self.obj_query_pos_));
  };
  auto run_rel = [&](Value queries) {
    Value agg = run_temporal(t, rel_temporal_, rel_temporal_ln_, queries, prev_rel);
    return run_spatial(t, rel_spatial_, rel_spatial_ln_, agg, rel_feat,
                       t.leaf(self.rel_query_pos_));
  };

  switch (cfg_.query_sharing) {
    case QuerySharing::kNone:
      obj_emb = run_obj(t.leaf(self.obj_queries_));
      rel_emb = run_rel(t.leaf(self.rel_queries_));
      break;
    case QuerySharing::kObjectToRelation:
      obj_emb = run_obj(t.leaf(self.obj_queries_));
      rel_emb = run_rel(obj_emb);
      break;
    case QuerySharing::kRelationToObject:
      rel_emb = run_rel(t.leaf(self.rel_queries_));
      obj_emb = run_obj(rel_emb);
      break;
  }

  FrameOutputs out;
  out.sB = subject_box_head_.forward(t, obj_emb);
  out.oB = object_box_head_.forward(t, obj_emb);
  out.sP_logits = subject_class_head_.forward(t, obj_emb);
  out.oP_logits = object_class_head_.forward(t, obj_emb);
  out.rP_logits = relation_class_head_.forward(t, rel_emb);
  if (relation_box_head_) out.rB = relation_box_head_->forward(t, rel_emb);
  return {out, {obj_emb, rel_emb}};
}

std::vector<FramePass> DdsModel::forward_video(Tape& t,
                                               const std::vector<Image>& frames) const {
  if (frames.empty()) {
    throw std::invalid_argument("forward_video: empty frame sequence");
  }
  std::vector<FramePass> passes;
  passes.reserve(frames.size());
  std::optional<Embeddings> prev;
  for (const Image& frame : frames) {
    FramePass fp = forward_frame(t, frame, prev);
    if (cfg_.temporal_full_backprop) {
      prev = fp.embeddings;
    } else {
      prev = Embeddings{t.detach(fp.embeddings.obj), t.detach(fp.embeddings.rel)};
    }
    passes.push_back(fp);
  }
  return passes;
}

PredictionSet DdsModel::extract_predictions(const Tape& t, const FrameOutputs& f) const {
  PredictionSet p;
  p.sB = boxes_from_matrix(t.val(f.sB));
  p.oB = boxes_from_matrix(t.val(f.oB));
  if (f.rB.valid()) p.rB = boxes_from_matrix(t.val(f.rB));

  auto softmax_rows = [](const Mat& z) {
    Mat out(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      double m = z.row(i).maxCoeff();
      Eigen::RowVectorXd e = (z.row(i).array() - m).exp();
      out.row(i) = e / e.sum();
    }
    return out;
  };
  p.sP = softmax_rows(t.val(f.sP_logits));
  p.oP = softmax_rows(t.val(f.oP_logits));
  p.rP = t.val(f.rP_logits).unaryExpr([](double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  return p;
}

}  // namespace dds
