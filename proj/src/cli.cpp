#include "dds/cli.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <sstream>

#include "dds/inference.hpp"
#include "json.hpp"

namespace dds {

using nlohmann::json;
namespace fs = std::filesystem;

void cmd_gen_data(const fs::path& config_path, const fs::path& out_dir,
                  std::optional<uint64_t> seed_override) {
  GeneratorConfig cfg = load_generator_config(config_path);
  if (seed_override) cfg.seed = *seed_override;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw ConfigError("cannot create output directory: " + out_dir.string());
  }
  std::vector<GeneratedVideo> videos = generate_synthetic(cfg);
  write_corpus(cfg, videos, out_dir);
}

namespace {

std::vector<TripletClass> parse_holdout_list(const std::string& spec) {
  std::vector<TripletClass> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.empty()) continue;
    int s, o, r;
    if (std::sscanf(item.c_str(), "%d,%d,%d", &s, &o, &r) != 3) {
      throw ConfigError("bad holdout entry '" + item + "' (expected sub,obj,rel)");
    }
    out.push_back({s, o, r});
  }
  return out;
}

}  // namespace

void cmd_make_split(const fs::path& corpus_dir, const fs::path& out_path,
                    const SplitRequest& req, uint64_t seed) {
  Corpus corpus = load_corpus(corpus_dir);
  SplitSpec split;
  if (req.holdout_fraction) {
    split = make_compositional_split_fraction(corpus, *req.holdout_fraction, seed,
                                              req.test_fraction);
  } else {
    split = make_compositional_split(corpus, parse_holdout_list(req.holdout_list), seed,
                                     req.test_fraction);
  }
  verify_split(corpus, split);
  save_split(split, out_path);
}

namespace {

FrameLoader corpus_frame_loader(const fs::path& root) {
  return [root](const VideoAnnotation& ann) {
    std::vector<Image> frames;
    frames.reserve(ann.frames.size());
    for (size_t f = 0; f < ann.frames.size(); ++f) {
      frames.push_back(load_frame_input(root, ann.id, static_cast<int>(f)));
    }
    return frames;
  };
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

}  // namespace

TrainOutcome cmd_train(const fs::path& config_path, const fs::path& out_dir,
                       const std::optional<fs::path>& resume,
                       std::optional<uint64_t> seed_override) {
  RunConfig cfg = load_run_config(config_path);
  if (seed_override) cfg.seed = *seed_override;

  if (cfg.corpus_path.empty() || !fs::exists(cfg.corpus_path)) {
    throw ConfigError("corpus path does not exist: '" + cfg.corpus_path + "'");
  }
  Corpus corpus = load_corpus(cfg.corpus_path);
  if (cfg.model.n_obj == 0) cfg.model.n_obj = static_cast<int>(corpus.config.objects.size());
  if (cfg.model.n_rel == 0) cfg.model.n_rel = static_cast<int>(corpus.config.relations.size());
  if (cfg.model.n_obj != static_cast<int>(corpus.config.objects.size()) ||
      cfg.model.n_rel != static_cast<int>(corpus.config.relations.size())) {
    throw ConfigError("model vocabulary sizes disagree with the corpus header");
  }
  cfg.validate(true);

  SplitSpec split = load_split(cfg.split_path);
  verify_split(corpus, split);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) {
    throw ConfigError("cannot create run directory: " + out_dir.string());
  }
  save_run_config(cfg, out_dir / "config.full.json");

  DdsModel model(cfg.model, cfg.seed);
  AdamW optimizer(model.params(), cfg.optimizer);

  long start_step = 0;
  if (resume) {
    CheckpointMeta meta = load_checkpoint(*resume, model, &optimizer, cfg.model);
    start_step = meta.step;
    if (start_step >= cfg.training.steps) {
      throw ConfigError("checkpoint step " + std::to_string(start_step) +
                        " is already >= training.steps");
    }
  }

  std::vector<const VideoAnnotation*> train_videos;
  for (const auto& id : split.train_videos) train_videos.push_back(&corpus.video(id));

  auto wall_start = std::chrono::system_clock::now();
  std::ofstream log(out_dir / "loss_log.tsv",
                    resume ? std::ios::app : std::ios::trunc);
  if (!resume) log << loss_log_header();

  TrainResult result =
      train_model(model, optimizer, cfg, train_videos, corpus_frame_loader(corpus.root),
                  start_step, cfg.training.steps, &log, &out_dir);
  log.close();

  fs::path final_prefix = out_dir / "ckpt_final";
  save_checkpoint(final_prefix, model, &optimizer, cfg.training.steps, cfg.seed);

  // Wall-clock metadata lives outside the deterministic artifacts.
  auto wall_end = std::chrono::system_clock::now();
  json meta;
  meta["wall_seconds"] =
      std::chrono::duration<double>(wall_end - wall_start).count();
  meta["started_unix"] =
      std::chrono::duration_cast<std::chrono::seconds>(wall_start.time_since_epoch()).count();
  write_text(out_dir / "train_meta.json", meta.dump(2) + "\n");

  return {result.first, result.last, final_prefix};
}

std::vector<FrameDetections> run_inference(const DdsModel& model, const Corpus& corpus,
                                           const std::vector<std::string>& video_ids,
                                           int top_k_count) {
  InferenceConfig inf_cfg;
  inf_cfg.subject_fixed = model.config().subject_fixed;
  inf_cfg.fixed_subject_label = 0;

  std::vector<FrameDetections> out;
  for (const auto& id : video_ids) {
    const VideoAnnotation& ann = corpus.video(id);
    std::vector<Image> frames;
    for (size_t f = 0; f < ann.frames.size(); ++f) {
      frames.push_back(load_frame_input(corpus.root, ann.id, static_cast<int>(f)));
    }
    Tape tape;
    std::vector<FramePass> passes = model.forward_video(tape, frames);
    for (size_t f = 0; f < passes.size(); ++f) {
      PredictionSet pred = model.extract_predictions(tape, passes[f].outputs);
      auto cands = compose_triplets(pred, static_cast<int>(f), inf_cfg);
      FrameDetections det;
      det.video_id = ann.id;
      det.frame_index = static_cast<int>(f);
      det.predictions = top_k(std::move(cands), top_k_count);
      det.ground_truth = &ann.frames[f];
      out.push_back(std::move(det));
    }
  }
  return out;
}

std::string report_to_json_text(const EvalReport& report) {
  json j;
  json recall = json::object();
  for (const auto& [k, r] : report.recall_at) {
    recall[std::to_string(k)] = {
        {"overall", r.overall}, {"seen", r.seen}, {"unseen", r.unseen}};
  }
  j["recall"] = recall;
  j["map"] = {{"unseen", report.map_unseen},
              {"seen", report.map_seen},
              {"full", report.map_full},
              {"classes_seen", report.classes_seen},
              {"classes_unseen", report.classes_unseen}};
  json classes = json::array();
  for (const auto& e : report.per_class) {
    const char* part = e.partition == Partition::kSeen
                           ? "seen"
                           : (e.partition == Partition::kUnseen ? "unseen" : "other");
    classes.push_back({{"class", {e.cls.subject, e.cls.object, e.cls.relation}},
                       {"gt_count", e.gt_count},
                       {"ap", e.ap},
                       {"partition", part}});
  }
  j["per_class"] = classes;
  return j.dump(2) + "\n";
}

namespace {

json prediction_record(const std::string& video_id, const TripletPrediction& p) {
  Corners s = corners(p.subject_box), o = corners(p.object_box);
  return json{{"video", video_id},
              {"frame", p.frame_index},
              {"sub", p.subject_label},
              {"sub_box", {s.x1, s.y1, s.x2, s.y2}},
              {"obj", p.object_label},
              {"obj_box", {o.x1, o.y1, o.x2, o.y2}},
              {"rel", p.relation_label},
              {"score", p.score}};
}

}  // namespace

EvalReport cmd_eval(const fs::path& checkpoint_prefix, const fs::path& corpus_dir,
                    const fs::path& split_path, const fs::path& out_dir,
                    const EvalConfig& eval_cfg) {
  Corpus corpus = load_corpus(corpus_dir);
  SplitSpec split = load_split(split_path);

  CheckpointMeta meta = peek_checkpoint(checkpoint_prefix);
  DdsModel model(meta.model, meta.seed);
  load_checkpoint(checkpoint_prefix, model, nullptr, std::nullopt);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) {
    throw ConfigError("cannot create eval directory: " + out_dir.string());
  }

  std::vector<FrameDetections> detections =
      run_inference(model, corpus, split.test_videos, eval_cfg.top_k);
  EvalReport report =
      evaluate(detections, split, eval_cfg.recall_ks, eval_cfg.iou_threshold);

  std::ofstream dump(out_dir / "predictions.jsonl");
  for (const auto& frame : detections) {
    for (const auto& p : frame.predictions) {
      dump << prediction_record(frame.video_id, p).dump() << "\n";
    }
  }
  dump.close();

  write_text(out_dir / "report.json", report_to_json_text(report));
  write_text(out_dir / "report.tsv", report_table_tsv(report));
  write_text(out_dir / "report.txt", report_to_text(report));
  return report;
}

RunConfig apply_variant(const RunConfig& base, const std::string& variant) {
  RunConfig cfg = base;
  cfg.model.variant = Variant::kFull;
  cfg.model.query_sharing = QuerySharing::kNone;

  auto finish = [&]() {
    cfg.criterion.use_relation_region = cfg.model.use_relation_region();
    cfg.matching.use_relation_region = cfg.model.use_relation_region();
    cfg.criterion.rr_mode = cfg.matching.rr_mode;
    cfg.criterion.rr_theta = cfg.matching.rr_theta;
    return cfg;
  };

  if (variant == "base") {
    cfg.model.variant = Variant::kBase;
    return finish();
  }
  if (variant == "multi_decoder") {
    cfg.model.variant = Variant::kMultiDecoder;
    return finish();
  }
  if (variant == "multi_encoder") {
    cfg.model.variant = Variant::kMultiEncoder;
    return finish();
  }
  if (variant == "dds" || variant == "rr_union") {
    cfg.matching.rr_mode = RelationRegionMode::kUnion;
    return finish();
  }
  if (variant == "o_to_r") {
    cfg.model.query_sharing = QuerySharing::kObjectToRelation;
    return finish();
  }
  if (variant == "r_to_o") {
    cfg.model.query_sharing = QuerySharing::kRelationToObject;
    return finish();
  }
  if (variant.rfind("rr_mixture:", 0) == 0) {
    double theta = 0.0;
    if (std::sscanf(variant.c_str() + 11, "%lf", &theta) != 1) {
      throw ConfigError("bad rr_mixture variant '" + variant + "' (expected rr_mixture:<theta>)");
    }
    cfg.matching.rr_mode = RelationRegionMode::kMixture;
    cfg.matching.rr_theta = theta;
    return finish();
  }
  if (variant.rfind("depth:", 0) == 0) {
    int obj_layers = 0, rel_layers = 0;
    if (std::sscanf(variant.c_str() + 6, "%d,%d", &obj_layers, &rel_layers) != 2) {
      throw ConfigError("bad depth variant '" + variant + "' (expected depth:<obj>,<rel>)");
    }
    cfg.model.obj_dec_layers = obj_layers;
    cfg.model.rel_dec_layers = rel_layers;
    return finish();
  }
  throw ConfigError(
      "unknown variant '" + variant +
      "'; supported: base, multi_decoder, multi_encoder, dds, o_to_r, r_to_o, "
      "rr_union, rr_mixture:<theta>, depth:<obj>,<rel>");
}

std::vector<AblationRow> cmd_ablate(const fs::path& config_path,
                                    const std::vector<std::string>& variants,
                                    const fs::path& out_dir) {
  if (variants.empty()) throw ConfigError("ablate: no variants requested");
  RunConfig base = load_run_config(config_path);
  std::error_code ec;
  fs::create_directories(out_dir, ec);

  std::vector<AblationRow> rows;
  for (const auto& name : variants) {
    RunConfig cfg = apply_variant(base, name);
    std::string safe = name;
    for (auto& c : safe) {
      if (c == ':' || c == ',') c = '_';
    }
    fs::path run_dir = out_dir / safe;
    fs::create_directories(run_dir);
    fs::path cfg_path = run_dir / "config.json";
    save_run_config(cfg, cfg_path);

    TrainOutcome train = cmd_train(cfg_path, run_dir, std::nullopt, std::nullopt);
    EvalReport report = cmd_eval(train.final_checkpoint, cfg.corpus_path,
                                 cfg.split_path, run_dir / "eval", cfg.evaluation);
    rows.push_back({name, config_hash_excluding_variant(cfg), report});
  }

  std::ostringstream table;
  table << "variant\tconfig_hash";
  if (!rows.empty()) {
    for (const auto& [k, r] : rows[0].report.recall_at) {
      table << "\tseen_R@" << k << "\tunseen_R@" << k;
    }
  }
  table << "\tseen_mAP\tunseen_mAP\tfull_mAP\n";
  for (const auto& row : rows) {
    table << row.variant << "\t" << row.config_hash;
    for (const auto& [k, r] : row.report.recall_at) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "\t%.6f\t%.6f", r.seen, r.unseen);
      table << buf;
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "\t%.6f\t%.6f\t%.6f\n", row.report.map_seen,
                  row.report.map_unseen, row.report.map_full);
    table << buf;
  }
  write_text(out_dir / "ablation_table.tsv", table.str());
  return rows;
}

// ---------------------------------------------------------------------------
// Plotting: minimal deterministic SVG line/bar charts.
// ---------------------------------------------------------------------------

namespace {

std::string svg_line_chart(const std::string& title, const std::vector<double>& xs,
                           const std::vector<double>& ys) {
  const int w = 640, h = 400, ml = 60, mr = 20, mt = 40, mb = 40;
  double xmin = xs.front(), xmax = xs.back();
  double ymin = ys[0], ymax = ys[0];
  for (double y : ys) {
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
  auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\""
      << h << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << title << "</text>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr
      << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
      << h - mb << "\" stroke=\"black\"/>\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", ymin);
  svg << "<text x=\"8\" y=\"" << h - mb << "\" font-size=\"12\">" << buf << "</text>\n";
  std::snprintf(buf, sizeof(buf), "%.4g", ymax);
  svg << "<text x=\"8\" y=\"" << mt + 12 << "\" font-size=\"12\">" << buf << "</text>\n";
  svg << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
  for (size_t i = 0; i < xs.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(xs[i]), py(ys[i]));
    svg << buf;
  }
  svg << "\"/>\n</svg>\n";
  return svg.str();
}

std::string svg_bar_chart(const std::string& title,
                          const std::vector<std::string>& labels,
                          const std::vector<double>& ys) {
  const int w = 640, h = 400, ml = 60, mr = 20, mt = 40, mb = 80;
  double ymax = 0.0;
  for (double y : ys) ymax = std::max(ymax, y);
  if (ymax == 0.0) ymax = 1.0;
  int n = static_cast<int>(ys.size());
  double band = static_cast<double>(w - ml - mr) / n;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\""
      << h << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << title << "</text>\n";
  char buf[128];
  for (int i = 0; i < n; ++i) {
    double bh = ys[i] / ymax * (h - mt - mb);
    double x = ml + i * band + band * 0.15;
    double y = h - mb - bh;
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" "
                  "fill=\"#1f77b4\"/>\n",
                  x, y, band * 0.7, bh);
    svg << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.2f\" y=\"%d\" font-size=\"11\" text-anchor=\"middle\" "
                  "transform=\"rotate(30 %.2f %d)\">%s</text>\n",
                  x + band * 0.35, h - mb + 16, x + band * 0.35, h - mb + 16,
                  labels[i].c_str());
    svg << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.2f\" y=\"%.2f\" font-size=\"11\" text-anchor=\"middle\">"
                  "%.4g</text>\n",
                  x + band * 0.35, y - 4, ys[i]);
    svg << buf;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace

void cmd_plot_loss(const fs::path& loss_log, const fs::path& out_dir) {
  std::ifstream in(loss_log);
  if (!in) throw ConfigError("cannot open loss log: " + loss_log.string());
  std::string header;
  std::getline(in, header);
  std::vector<std::string> columns;
  {
    std::stringstream hs(header);
    std::string col;
    while (std::getline(hs, col, '\t')) columns.push_back(col);
  }
  if (columns.empty() || columns[0] != "step") {
    throw ParseError(loss_log.string() + ": expected a loss log with a 'step' column");
  }
  std::vector<double> steps;
  std::vector<std::vector<double>> series(columns.size() - 1);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    int c = 0;
    while (std::getline(ls, cell, '\t')) {
      double v = std::stod(cell);
      if (c == 0) steps.push_back(v);
      else if (c - 1 < static_cast<int>(series.size())) series[c - 1].push_back(v);
      ++c;
    }
  }
  if (steps.empty()) throw ConfigError("loss log has no data rows: " + loss_log.string());

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  for (size_t s = 0; s < series.size(); ++s) {
    if (series[s].size() != steps.size()) continue;
    write_text(out_dir / (columns[s + 1] + ".svg"),
               svg_line_chart(columns[s + 1], steps, series[s]));
  }
}

void cmd_plot_reports(const std::vector<fs::path>& reports, const fs::path& out_dir) {
  if (reports.empty()) throw ConfigError("plot: no report files given");
  std::vector<std::string> labels;
  std::map<std::string, std::vector<double>> metrics;
  for (const auto& path : reports) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open report: " + path.string());
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
    labels.push_back(path.stem().string());
    for (auto it = j.at("recall").begin(); it != j.at("recall").end(); ++it) {
      metrics["recall_overall_at_" + it.key()].push_back(
          it.value().at("overall").get<double>());
      metrics["recall_seen_at_" + it.key()].push_back(it.value().at("seen").get<double>());
      metrics["recall_unseen_at_" + it.key()].push_back(
          it.value().at("unseen").get<double>());
    }
    metrics["map_seen"].push_back(j.at("map").at("seen").get<double>());
    metrics["map_unseen"].push_back(j.at("map").at("unseen").get<double>());
    metrics["map_full"].push_back(j.at("map").at("full").get<double>());
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  for (const auto& [name, values] : metrics) {
    write_text(out_dir / (name + ".svg"), svg_bar_chart(name, labels, values));
  }
}

}  // namespace dds
