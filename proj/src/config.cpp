#include "dds/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "dds/dataset.hpp"
#include "json.hpp"

namespace dds {

using nlohmann::json;

void RunConfig::validate(bool check_paths) const {
  model.validate();
  auto fail = [](const std::string& msg) { throw ConfigError("run config: " + msg); };
  auto nonneg = [&](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) fail(std::string(name) + " must be finite and >= 0");
  };
  nonneg(matching.eta_b, "eta_b");
  nonneg(matching.eta_o, "eta_o");
  nonneg(matching.eta_r, "eta_r");
  nonneg(criterion.lambda_giou, "lambda_giou");
  nonneg(criterion.lambda_l1, "lambda_l1");
  nonneg(criterion.lambda_obj, "lambda_obj");
  nonneg(criterion.lambda_rel, "lambda_rel");
  nonneg(criterion.no_object_weight, "no_object_weight");
  if (matching.rr_mode == RelationRegionMode::kMixture &&
      !(matching.rr_theta >= 0.0 && matching.rr_theta < 1.0)) {
    fail("relation region theta must lie in [0, 1)");
  }
  if (optimizer.lr <= 0.0 || optimizer.backbone_lr <= 0.0) fail("learning rates must be > 0");
  if (training.steps < 1) fail("training.steps must be >= 1");
  if (training.videos_per_step < 1) fail("training.videos_per_step must be >= 1");
  for (int k : evaluation.recall_ks) {
    if (k < 1) fail("recall Ks must be >= 1");
  }
  if (evaluation.top_k < 1) fail("evaluation.top_k must be >= 1");
  if (!(evaluation.iou_threshold > 0.0 && evaluation.iou_threshold <= 1.0)) {
    fail("iou threshold must lie in (0, 1]");
  }
  if (check_paths) {
    if (corpus_path.empty() || !std::filesystem::exists(corpus_path)) {
      fail("corpus path does not exist: '" + corpus_path + "'");
    }
    if (split_path.empty() || !std::filesystem::exists(split_path)) {
      fail("split path does not exist: '" + split_path + "'");
    }
  }
}

namespace {

json model_to_json(const ModelConfig& m) {
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

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void check_fields(const json& j, const std::set<std::string>& allowed,
                  const std::string& locus) {
  if (!j.is_object()) throw ParseError(locus + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ParseError(locus + ": unknown field '" + it.key() + "'");
    }
  }
}

ModelConfig model_from_json(const json& j, const std::string& locus) {
  check_fields(j,
               {"d", "n_q", "heads", "enc_layers", "obj_dec_layers", "rel_dec_layers",
                "temporal_layers", "ffn_hidden", "n_obj", "n_rel", "subject_fixed",
                "image_h", "image_w", "backbone_channels", "backbone_patch",
                "temporal_full_backprop", "variant", "query_sharing"},
               locus);
  ModelConfig m;
  maybe(j, "d", m.d);
  maybe(j, "n_q", m.n_q);
  maybe(j, "heads", m.heads);
  maybe(j, "enc_layers", m.enc_layers);
  maybe(j, "obj_dec_layers", m.obj_dec_layers);
  maybe(j, "rel_dec_layers", m.rel_dec_layers);
  maybe(j, "temporal_layers", m.temporal_layers);
  maybe(j, "ffn_hidden", m.ffn_hidden);
  maybe(j, "n_obj", m.n_obj);
  maybe(j, "n_rel", m.n_rel);
  maybe(j, "subject_fixed", m.subject_fixed);
  maybe(j, "image_h", m.image_h);
  maybe(j, "image_w", m.image_w);
  maybe(j, "backbone_channels", m.backbone_channels);
  maybe(j, "backbone_patch", m.backbone_patch);
  maybe(j, "temporal_full_backprop", m.temporal_full_backprop);
  if (j.contains("variant")) m.variant = variant_from_string(j.at("variant"));
  if (j.contains("query_sharing"))
    m.query_sharing = query_sharing_from_string(j.at("query_sharing"));
  return m;
}

}  // namespace

std::string run_config_to_json_text(const RunConfig& cfg) {
  json j;
  j["format_version"] = 1;
  j["seed"] = cfg.seed;
  j["model"] = model_to_json(cfg.model);
  j["matching"] = {{"eta_b", cfg.matching.eta_b},
                   {"eta_o", cfg.matching.eta_o},
                   {"eta_r", cfg.matching.eta_r}};
  j["criterion"] = {{"lambda_giou", cfg.criterion.lambda_giou},
                    {"lambda_l1", cfg.criterion.lambda_l1},
                    {"lambda_obj", cfg.criterion.lambda_obj},
                    {"lambda_rel", cfg.criterion.lambda_rel},
                    {"no_object_weight", cfg.criterion.no_object_weight}};
  j["relation_region"] = {{"mode", to_string(cfg.matching.rr_mode)},
                          {"theta", cfg.matching.rr_theta}};
  j["optimizer"] = {{"lr", cfg.optimizer.lr},
                    {"backbone_lr", cfg.optimizer.backbone_lr},
                    {"weight_decay", cfg.optimizer.weight_decay},
                    {"beta1", cfg.optimizer.beta1},
                    {"beta2", cfg.optimizer.beta2},
                    {"eps", cfg.optimizer.eps},
                    {"lr_drop_steps", cfg.optimizer.lr_drop_steps},
                    {"warmup_steps", cfg.optimizer.warmup_steps},
                    {"grad_clip", cfg.optimizer.grad_clip}};
  j["training"] = {{"steps", cfg.training.steps},
                   {"videos_per_step", cfg.training.videos_per_step},
                   {"checkpoint_every", cfg.training.checkpoint_every},
                   {"log_every", cfg.training.log_every}};
  j["evaluation"] = {{"recall_ks", cfg.evaluation.recall_ks},
                     {"top_k", cfg.evaluation.top_k},
                     {"iou_threshold", cfg.evaluation.iou_threshold}};
  j["paths"] = {{"corpus", cfg.corpus_path}, {"split", cfg.split_path}};
  return j.dump(2) + "\n";
}

RunConfig run_config_from_json_text(const std::string& text, const std::string& locus) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(locus + ": " + e.what());
  }
  check_fields(j,
               {"format_version", "seed", "model", "matching", "criterion",
                "relation_region", "optimizer", "training", "evaluation", "paths"},
               locus);
  RunConfig cfg;
  maybe(j, "seed", cfg.seed);
  if (j.contains("model")) cfg.model = model_from_json(j.at("model"), locus + ".model");
  if (j.contains("matching")) {
    const auto& m = j.at("matching");
    check_fields(m, {"eta_b", "eta_o", "eta_r"}, locus + ".matching");
    maybe(m, "eta_b", cfg.matching.eta_b);
    maybe(m, "eta_o", cfg.matching.eta_o);
    maybe(m, "eta_r", cfg.matching.eta_r);
  }
  if (j.contains("criterion")) {
    const auto& c = j.at("criterion");
    check_fields(c,
                 {"lambda_giou", "lambda_l1", "lambda_obj", "lambda_rel",
                  "no_object_weight"},
                 locus + ".criterion");
    maybe(c, "lambda_giou", cfg.criterion.lambda_giou);
    maybe(c, "lambda_l1", cfg.criterion.lambda_l1);
    maybe(c, "lambda_obj", cfg.criterion.lambda_obj);
    maybe(c, "lambda_rel", cfg.criterion.lambda_rel);
    maybe(c, "no_object_weight", cfg.criterion.no_object_weight);
  }
  if (j.contains("relation_region")) {
    const auto& r = j.at("relation_region");
    check_fields(r, {"mode", "theta"}, locus + ".relation_region");
    if (r.contains("mode")) {
      cfg.matching.rr_mode = relation_region_mode_from_string(r.at("mode"));
    }
    maybe(r, "theta", cfg.matching.rr_theta);
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    check_fields(o,
                 {"lr", "backbone_lr", "weight_decay", "beta1", "beta2", "eps",
                  "lr_drop_steps", "warmup_steps", "grad_clip"},
                 locus + ".optimizer");
    maybe(o, "lr", cfg.optimizer.lr);
    maybe(o, "backbone_lr", cfg.optimizer.backbone_lr);
    maybe(o, "weight_decay", cfg.optimizer.weight_decay);
    maybe(o, "beta1", cfg.optimizer.beta1);
    maybe(o, "beta2", cfg.optimizer.beta2);
    maybe(o, "eps", cfg.optimizer.eps);
    maybe(o, "lr_drop_steps", cfg.optimizer.lr_drop_steps);
    maybe(o, "warmup_steps", cfg.optimizer.warmup_steps);
    maybe(o, "grad_clip", cfg.optimizer.grad_clip);
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    check_fields(t, {"steps", "videos_per_step", "checkpoint_every", "log_every"},
                 locus + ".training");
    maybe(t, "steps", cfg.training.steps);
    maybe(t, "videos_per_step", cfg.training.videos_per_step);
    maybe(t, "checkpoint_every", cfg.training.checkpoint_every);
    maybe(t, "log_every", cfg.training.log_every);
  }
  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    check_fields(e, {"recall_ks", "top_k", "iou_threshold"}, locus + ".evaluation");
    maybe(e, "recall_ks", cfg.evaluation.recall_ks);
    maybe(e, "top_k", cfg.evaluation.top_k);
    maybe(e, "iou_threshold", cfg.evaluation.iou_threshold);
  }
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    check_fields(p, {"corpus", "split"}, locus + ".paths");
    maybe(p, "corpus", cfg.corpus_path);
    maybe(p, "split", cfg.split_path);
  }

  // Wiring flags live in the model config; the criterion and matcher follow.
  cfg.criterion.rr_mode = cfg.matching.rr_mode;
  cfg.criterion.rr_theta = cfg.matching.rr_theta;
  cfg.criterion.subject_fixed = cfg.model.subject_fixed;
  cfg.criterion.use_relation_region = cfg.model.use_relation_region();
  cfg.matching.subject_fixed = cfg.model.subject_fixed;
  cfg.matching.use_relation_region = cfg.model.use_relation_region();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return run_config_from_json_text(ss.str(), path.string());
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file: " + path.string());
  out << run_config_to_json_text(cfg);
}

std::string config_hash_excluding_variant(const RunConfig& cfg) {
  RunConfig scrubbed = cfg;
  scrubbed.model.variant = Variant::kFull;
  scrubbed.model.query_sharing = QuerySharing::kNone;
  scrubbed.model.obj_dec_layers = 0;
  scrubbed.model.rel_dec_layers = 0;
  scrubbed.matching.rr_mode = RelationRegionMode::kUnion;
  scrubbed.matching.rr_theta = 0.0;
  // Serialize without validation; wiring fields are intentionally blank.
  std::string text;
  try {
    text = run_config_to_json_text(scrubbed);
  } catch (...) {
    text = "";
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(text.data(), text.size())));
  return buf;
}

}  // namespace dds
