#include "dds/train.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

#include "dds/rng.hpp"
#include "json.hpp"

namespace dds {

using nlohmann::json;

AdamW::AdamW(ParamRegistry& reg, const OptimizerConfig& cfg) : reg_(reg), cfg_(cfg) {
  for (auto* p : reg_.params()) {
    if (p->adam_m.size() == 0) {
      p->adam_m = Mat::Zero(p->value.rows(), p->value.cols());
      p->adam_v = Mat::Zero(p->value.rows(), p->value.cols());
    }
  }
}

void AdamW::step(double lr_scale) {
  ++t_;
  if (cfg_.grad_clip > 0.0) {
    double sq = 0.0;
    for (auto* p : reg_.params()) sq += p->grad.squaredNorm();
    double norm = std::sqrt(sq);
    if (norm > cfg_.grad_clip) {
      double s = cfg_.grad_clip / norm;
      for (auto* p : reg_.params()) p->grad *= s;
    }
  }
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto* p : reg_.params()) {
    double lr = (p->name.rfind("backbone.", 0) == 0 ? cfg_.backbone_lr : cfg_.lr) *
                lr_scale;
    p->adam_m = cfg_.beta1 * p->adam_m + (1.0 - cfg_.beta1) * p->grad;
    p->adam_v = cfg_.beta2 * p->adam_v + (1.0 - cfg_.beta2) * p->grad.cwiseProduct(p->grad);
    Mat mhat = p->adam_m / bc1;
    Mat vhat = p->adam_v / bc2;
    // decoupled weight decay
    p->value -= lr * cfg_.weight_decay * p->value;
    p->value -= lr * mhat.cwiseQuotient(
                         (vhat.cwiseSqrt().array() + cfg_.eps).matrix());
  }
}

VideoLoss video_loss(Tape& tape, const DdsModel& model,
                     const std::vector<Image>& frames, const VideoAnnotation& ann,
                     const MatchConfig& match_cfg, const CriterionConfig& crit_cfg) {
  if (frames.size() != ann.frames.size()) {
    throw std::invalid_argument("video_loss: frame/annotation count mismatch");
  }
  std::vector<FramePass> passes = model.forward_video(tape, frames);
  std::vector<Value> totals;
  LossBreakdown acc;
  auto guard_outputs = [&](const PredictionSet& p, size_t f) {
    bool bad = !p.sP.allFinite() || !p.oP.allFinite() || !p.rP.allFinite();
    for (const auto* boxes : {&p.sB, &p.oB, &p.rB}) {
      for (const Box& b : *boxes) {
        if (!(b.w > 0.0) || !(b.h > 0.0) || !std::isfinite(b.cx) || !std::isfinite(b.cy))
          bad = true;
      }
    }
    if (bad) {
      throw NumericalError("saturated or non-finite model outputs (video " + ann.id +
                           " frame " + std::to_string(f) + ")");
    }
  };
  for (size_t f = 0; f < frames.size(); ++f) {
    const FrameAnnotation& gt = ann.frames[f];
    Assignment assignment;
    if (!gt.triplets.empty()) {
      PredictionSet pred = model.extract_predictions(tape, passes[f].outputs);
      guard_outputs(pred, f);
      assignment = hungarian(build_cost_matrix(pred, gt, match_cfg));
    }
    LossTerms terms =
        compute_loss(tape, passes[f].outputs, gt, assignment, crit_cfg);
    LossBreakdown b = breakdown(tape, terms);
    acc.l_giou += b.l_giou;
    acc.l_l1 += b.l_l1;
    acc.l_obj += b.l_obj;
    acc.l_rel += b.l_rel;
    acc.total += b.total;
    totals.push_back(terms.total);
  }
  double inv = 1.0 / static_cast<double>(frames.size());
  VideoLoss out;
  out.total = tape.linear_comb(totals, std::vector<double>(totals.size(), inv));
  out.mean = {acc.l_giou * inv, acc.l_l1 * inv, acc.l_obj * inv, acc.l_rel * inv,
              acc.total * inv};
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: <prefix>.bin holds the parameter blob (and optimizer moments),
// <prefix>.json is the sidecar metadata record.
// ---------------------------------------------------------------------------

namespace {

constexpr char kBlobMagic[8] = {'D', 'D', 'S', 'P', 'A', 'R', 'M', '1'};

json model_config_meta(const ModelConfig& m) {
  return json{{"d", m.d},
              {"n_q", m.n_q},
              {"heads", m.heads},
              {"enc_layers", m.enc_layers},
              {"obj_dec_layers", m.obj_dec_layers},
              {"rel_dec_layers", m.rel_dec_layers},
              {"temporal_layers", m.temporal_layers},
              {"ffn_hidden", m.ffn_hidden},
              {"n_obj", m.n_obj},
              {"n_rel", m.n_rel},
              {"subject_fixed", m.subject_fixed},
              {"image_h", m.image_h},
              {"image_w", m.image_w},
              {"backbone_channels", m.backbone_channels},
              {"backbone_patch", m.backbone_patch},
              {"temporal_full_backprop", m.temporal_full_backprop},
              {"variant", to_string(m.variant)},
              {"query_sharing", to_string(m.query_sharing)}};
}

ModelConfig model_config_from_meta(const json& j) {
  ModelConfig m;
  m.d = j.at("d").get<int>();
  m.n_q = j.at("n_q").get<int>();
  m.heads = j.at("heads").get<int>();
  m.enc_layers = j.at("enc_layers").get<int>();
  m.obj_dec_layers = j.at("obj_dec_layers").get<int>();
  m.rel_dec_layers = j.at("rel_dec_layers").get<int>();
  m.temporal_layers = j.at("temporal_layers").get<int>();
  m.ffn_hidden = j.at("ffn_hidden").get<int>();
  m.n_obj = j.at("n_obj").get<int>();
  m.n_rel = j.at("n_rel").get<int>();
  m.subject_fixed = j.at("subject_fixed").get<bool>();
  m.image_h = j.at("image_h").get<int>();
  m.image_w = j.at("image_w").get<int>();
  m.backbone_channels = j.at("backbone_channels").get<std::vector<int>>();
  m.backbone_patch = j.at("backbone_patch").get<std::vector<int>>();
  m.temporal_full_backprop = j.at("temporal_full_backprop").get<bool>();
  m.variant = variant_from_string(j.at("variant").get<std::string>());
  m.query_sharing = query_sharing_from_string(j.at("query_sharing").get<std::string>());
  return m;
}

std::string config_diff(const ModelConfig& a, const ModelConfig& b) {
  json ja = model_config_meta(a), jb = model_config_meta(b);
  std::string diff;
  for (auto it = ja.begin(); it != ja.end(); ++it) {
    if (jb.at(it.key()) != it.value()) {
      diff += "  " + it.key() + ": checkpoint=" + it.value().dump() +
              " requested=" + jb.at(it.key()).dump() + "\n";
    }
  }
  return diff;
}

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::ifstream& in, size_t n) {
  std::vector<double> v(n);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint blob truncated");
  return v;
}

std::vector<double> flatten_moment(const ParamRegistry& reg, bool second) {
  std::vector<double> flat;
  flat.reserve(reg.scalar_count());
  for (const auto* p : reg.params()) {
    const Mat& m = second ? p->adam_v : p->adam_m;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) flat.push_back(m(i, j));
  }
  return flat;
}

void load_moment(ParamRegistry& reg, const std::vector<double>& flat, bool second) {
  size_t k = 0;
  for (auto* p : reg.params()) {
    Mat& m = second ? p->adam_v : p->adam_m;
    m = Mat::Zero(p->value.rows(), p->value.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = flat[k++];
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& prefix, const DdsModel& model,
                     const AdamW* optimizer, long step, uint64_t seed) {
  const ParamRegistry& reg = model.params();
  std::ofstream blob(prefix.string() + ".bin", std::ios::binary);
  if (!blob) throw std::runtime_error("cannot write checkpoint blob");
  blob.write(kBlobMagic, sizeof(kBlobMagic));
  uint64_t count = reg.scalar_count();
  blob.write(reinterpret_cast<const char*>(&count), sizeof(count));
  write_doubles(blob, reg.flatten_values());
  uint8_t has_opt = optimizer != nullptr ? 1 : 0;
  blob.write(reinterpret_cast<const char*>(&has_opt), 1);
  if (optimizer) {
    write_doubles(blob, flatten_moment(reg, false));
    write_doubles(blob, flatten_moment(reg, true));
    int64_t t = optimizer->step_count();
    blob.write(reinterpret_cast<const char*>(&t), sizeof(t));
  }
  blob.close();

  json meta;
  meta["format_version"] = 1;
  meta["model_config"] = model_config_meta(model.config());
  meta["step"] = step;
  meta["seed"] = seed;
  std::ofstream side(prefix.string() + ".json");
  side << meta.dump(2) << "\n";
}

CheckpointMeta peek_checkpoint(const std::filesystem::path& prefix) {
  std::ifstream side(prefix.string() + ".json");
  if (!side) throw ConfigError("missing checkpoint sidecar: " + prefix.string() + ".json");
  json meta;
  try {
    side >> meta;
  } catch (const json::exception& e) {
    throw ParseError(prefix.string() + ".json: " + e.what());
  }
  CheckpointMeta out;
  out.format_version = meta.at("format_version").get<int>();
  out.model = model_config_from_meta(meta.at("model_config"));
  out.step = meta.at("step").get<long>();
  out.seed = meta.at("seed").get<uint64_t>();
  return out;
}

CheckpointMeta load_checkpoint(const std::filesystem::path& prefix, DdsModel& model,
                               AdamW* optimizer,
                               const std::optional<ModelConfig>& expected) {
  CheckpointMeta meta = peek_checkpoint(prefix);
  if (meta.format_version != 1) {
    throw ConfigError("unsupported checkpoint format version " +
                      std::to_string(meta.format_version));
  }
  if (expected && !(meta.model == *expected)) {
    throw ConfigError("checkpoint/config mismatch:\n" + config_diff(meta.model, *expected));
  }
  if (!(meta.model == model.config())) {
    throw ConfigError("checkpoint does not match the constructed model:\n" +
                      config_diff(meta.model, model.config()));
  }

  std::ifstream blob(prefix.string() + ".bin", std::ios::binary);
  if (!blob) throw ConfigError("missing checkpoint blob: " + prefix.string() + ".bin");
  char magic[8];
  blob.read(magic, sizeof(magic));
  if (!blob || std::memcmp(magic, kBlobMagic, sizeof(magic)) != 0) {
    throw ParseError("bad checkpoint magic in " + prefix.string() + ".bin");
  }
  uint64_t count = 0;
  blob.read(reinterpret_cast<char*>(&count), sizeof(count));
  ParamRegistry& reg = model.params();
  if (count != reg.scalar_count()) {
    throw ConfigError("checkpoint parameter count mismatch: blob has " +
                      std::to_string(count) + ", model needs " +
                      std::to_string(reg.scalar_count()));
  }
  reg.load_values(read_doubles(blob, count));
  uint8_t has_opt = 0;
  blob.read(reinterpret_cast<char*>(&has_opt), 1);
  if (optimizer) {
    if (!has_opt) {
      throw ConfigError("checkpoint lacks optimizer state required for resume");
    }
    load_moment(reg, read_doubles(blob, count), false);
    load_moment(reg, read_doubles(blob, count), true);
    int64_t t = 0;
    blob.read(reinterpret_cast<char*>(&t), sizeof(t));
    if (!blob) throw ParseError("checkpoint blob truncated (optimizer step)");
    optimizer->set_step_count(t);
  }
  return meta;
}

std::string loss_log_header() {
  return "step\ttotal\tl_giou\tl_l1\tl_obj\tl_rel\tlr_scale\n";
}

std::string loss_log_row(long step, const LossBreakdown& b, double lr_scale) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%ld\t%.10g\t%.10g\t%.10g\t%.10g\t%.10g\t%.10g\n",
                step, b.total, b.l_giou, b.l_l1, b.l_obj, b.l_rel, lr_scale);
  return buf;
}

TrainResult train_model(DdsModel& model, AdamW& optimizer, const RunConfig& cfg,
                        const std::vector<const VideoAnnotation*>& train_videos,
                        const FrameLoader& load_frames, long start_step,
                        long total_steps, std::ostream* loss_log,
                        const std::filesystem::path* checkpoint_dir) {
  if (train_videos.empty()) throw ConfigError("train: no training videos");
  const int per_step = cfg.training.videos_per_step;
  const long videos_per_epoch =
      (static_cast<long>(train_videos.size()) + per_step - 1) / per_step;

  // Schedule for epoch e is a pure function of (seed, e): resumable without
  // RNG state in the checkpoint.
  auto epoch_order = [&](long epoch) {
    std::vector<int> order(train_videos.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng rng(Rng::mix(cfg.seed, 0xe90c4 + static_cast<uint64_t>(epoch)));
    rng.shuffle(order);
    return order;
  };

  TrainResult result;
  for (long step = start_step; step < total_steps; ++step) {
    long epoch = step / videos_per_epoch;
    long slot = step % videos_per_epoch;
    std::vector<int> order = epoch_order(epoch);

    model.params().zero_grads();
    LossBreakdown acc;
    int batch = 0;
    for (int k = 0; k < per_step; ++k) {
      size_t idx = static_cast<size_t>(slot) * per_step + k;
      if (idx >= order.size()) break;
      const VideoAnnotation& ann = *train_videos[order[idx]];
      std::vector<Image> frames = load_frames(ann);
      Tape tape;
      VideoLoss vl = video_loss(tape, model, frames, ann, cfg.matching, cfg.criterion);
      if (!std::isfinite(vl.mean.total)) {
        throw NumericalError("non-finite loss at step " + std::to_string(step + 1) +
                             " (video " + ann.id + "): " + std::to_string(vl.mean.total));
      }
      tape.backward(vl.total);
      acc.l_giou += vl.mean.l_giou;
      acc.l_l1 += vl.mean.l_l1;
      acc.l_obj += vl.mean.l_obj;
      acc.l_rel += vl.mean.l_rel;
      acc.total += vl.mean.total;
      ++batch;
    }
    if (batch == 0) continue;
    double inv = 1.0 / batch;
    // Gradients accumulated over the batch average the per-video losses.
    for (auto* p : model.params().params()) p->grad *= inv;
    acc.l_giou *= inv;
    acc.l_l1 *= inv;
    acc.l_obj *= inv;
    acc.l_rel *= inv;
    acc.total *= inv;

    double lr_scale = 1.0;
    if (cfg.optimizer.warmup_steps > 0 && step < cfg.optimizer.warmup_steps) {
      lr_scale = static_cast<double>(step + 1) / cfg.optimizer.warmup_steps;
    }
    if (cfg.optimizer.lr_drop_steps > 0) {
      lr_scale *= std::pow(0.1, static_cast<double>(step / cfg.optimizer.lr_drop_steps));
    }
    optimizer.step(lr_scale);

    if (step == start_step) result.first = acc;
    result.last = acc;
    ++result.steps_run;

    long shown = step + 1;
    if (loss_log && (shown % cfg.training.log_every == 0 || shown == total_steps)) {
      (*loss_log) << loss_log_row(shown, acc, lr_scale);
    }
    if (checkpoint_dir && cfg.training.checkpoint_every > 0 &&
        shown % cfg.training.checkpoint_every == 0 && shown != total_steps) {
      save_checkpoint(*checkpoint_dir / ("ckpt_" + std::to_string(shown)), model,
                      &optimizer, shown, cfg.seed);
    }
  }
  return result;
}

}  // namespace dds
