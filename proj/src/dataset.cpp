#include "dds/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "dds/config.hpp"
#include "dds/rng.hpp"
#include "json.hpp"

namespace dds {

using nlohmann::json;

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("generator config: " + msg); };
  if (num_videos < 1) fail("num_videos must be >= 1");
  if (frames_per_video < 1) fail("frames_per_video must be >= 1");
  if (image_w < 8 || image_h < 8) fail("image dimensions too small");
  if (min_objects < 2) fail("min_objects must be >= 2 (pairs are needed for triplets)");
  if (max_objects < min_objects) fail("max_objects < min_objects");
  if (static_cast<size_t>(max_objects) > objects.size())
    fail("max_objects exceeds the object vocabulary size");
  if (!(min_size > 0.0 && max_size >= min_size && max_size <= 0.5))
    fail("sizes must satisfy 0 < min <= max <= 0.5");
  if (objects.size() < 6) fail("object vocabulary needs at least 6 categories");
  if (relations.size() < 6) fail("relation vocabulary needs at least 6 relations");
  std::set<std::string> names(relations.begin(), relations.end());
  if (names.size() != relations.size()) fail("duplicate relation names");
  static const std::set<std::string> known = {
      "above", "below", "left_of", "right_of", "overlapping", "containing", "near"};
  for (const auto& r : relations) {
    if (!known.count(r)) fail("unknown relation rule: " + r);
  }
  std::set<std::string> obj_names;
  for (const auto& o : objects) obj_names.insert(o.name);
  if (obj_names.size() != objects.size()) fail("duplicate object category names");
}

int GeneratorConfig::relation_index(const std::string& name) const {
  for (size_t i = 0; i < relations.size(); ++i) {
    if (relations[i] == name) return static_cast<int>(i);
  }
  return -1;
}

GeneratorConfig default_generator_config() {
  GeneratorConfig cfg;
  cfg.objects = {
      {"red_circle", Shape::kCircle, {220, 50, 40}},
      {"green_square", Shape::kSquare, {60, 200, 70}},
      {"blue_triangle", Shape::kTriangle, {60, 90, 230}},
      {"yellow_diamond", Shape::kDiamond, {235, 220, 50}},
      {"cyan_square", Shape::kSquare, {40, 210, 210}},
      {"magenta_circle", Shape::kCircle, {220, 60, 220}},
      {"white_triangle", Shape::kTriangle, {240, 240, 240}},
      {"orange_diamond", Shape::kDiamond, {245, 140, 30}},
  };
  cfg.relations = {"above", "below", "left_of", "right_of",
                   "overlapping", "containing", "near"};
  return cfg;
}

std::vector<int> relation_oracle(const Box& sub, const Box& obj,
                                 const GeneratorConfig& cfg) {
  double overlap = iou(sub, obj);
  double dist = std::hypot(sub.cx - obj.cx, sub.cy - obj.cy);
  double near_limit = cfg.near_threshold * std::sqrt(2.0);
  Corners cs = corners(sub), co = corners(obj);

  std::vector<int> rels;
  auto add = [&](const char* name, bool cond) {
    int idx = cfg.relation_index(name);
    if (idx >= 0 && cond) rels.push_back(idx);
  };
  add("above", sub.cy < obj.cy - cfg.margin);
  add("below", sub.cy > obj.cy + cfg.margin);
  add("left_of", sub.cx < obj.cx - cfg.margin);
  add("right_of", sub.cx > obj.cx + cfg.margin);
  add("overlapping", overlap > 0.0);
  add("containing",
      cs.x1 < co.x1 && cs.y1 < co.y1 && cs.x2 > co.x2 && cs.y2 > co.y2);
  add("near", overlap == 0.0 && dist < near_limit);
  std::sort(rels.begin(), rels.end());
  return rels;
}

namespace {

struct MovingObject {
  int category;
  double w, h;
  double cx, cy;
  double vx, vy;
};

// Advance with reflection so the box stays inside the frame.
void step_object(MovingObject& o) {
  auto bounce = [](double& pos, double& vel, double lo, double hi) {
    pos += vel;
    if (pos < lo) {
      pos = lo + (lo - pos);
      vel = -vel;
    }
    if (pos > hi) {
      pos = hi - (pos - hi);
      vel = -vel;
    }
    // A huge velocity could overshoot twice; clamp as a last resort.
    pos = std::clamp(pos, lo, hi);
  };
  bounce(o.cx, o.vx, o.w / 2.0, 1.0 - o.w / 2.0);
  bounce(o.cy, o.vy, o.h / 2.0, 1.0 - o.h / 2.0);
}

std::string video_id_for(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "v%04d", index);
  return buf;
}

}  // namespace

GeneratedVideo generate_video(const GeneratorConfig& cfg, int video_index) {
  cfg.validate();
  Rng rng(Rng::mix(cfg.seed, static_cast<uint64_t>(video_index)));

  int n = rng.uniform_int(cfg.min_objects, cfg.max_objects);
  std::vector<int> cats(cfg.objects.size());
  for (size_t i = 0; i < cats.size(); ++i) cats[i] = static_cast<int>(i);
  if (cfg.agent_mode) {
    // category 0 is the designated agent and always present
    std::vector<int> rest(cats.begin() + 1, cats.end());
    rng.shuffle(rest);
    cats.assign(1, 0);
    cats.insert(cats.end(), rest.begin(), rest.end());
  } else {
    rng.shuffle(cats);
  }
  cats.resize(n);

  std::vector<MovingObject> objs;
  for (int i = 0; i < n; ++i) {
    MovingObject o;
    o.category = cats[i];
    o.w = rng.uniform(cfg.min_size, cfg.max_size);
    o.h = rng.uniform(cfg.min_size, cfg.max_size);
    o.cx = rng.uniform(o.w / 2.0, 1.0 - o.w / 2.0);
    o.cy = rng.uniform(o.h / 2.0, 1.0 - o.h / 2.0);
    o.vx = rng.uniform(-cfg.max_speed, cfg.max_speed);
    o.vy = rng.uniform(-cfg.max_speed, cfg.max_speed);
    objs.push_back(o);
  }

  GeneratedVideo out;
  out.annotation.id = video_id_for(video_index);
  out.annotation.width = cfg.image_w;
  out.annotation.height = cfg.image_h;

  for (int f = 0; f < cfg.frames_per_video; ++f) {
    if (f > 0) {
      for (auto& o : objs) step_object(o);
    }
    FrameAnnotation frame;
    Raster img{cfg.image_w, cfg.image_h,
               std::vector<uint8_t>(static_cast<size_t>(3) * cfg.image_w * cfg.image_h)};
    img.fill(32, 32, 36);
    for (const auto& o : objs) {
      Box b{o.cx, o.cy, o.w, o.h};
      draw_shape(img, b, cfg.objects[o.category].shape, cfg.objects[o.category].color);
    }
    for (int i = 0; i < n; ++i) {
      if (cfg.agent_mode && i != 0) break;
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        Box sb{objs[i].cx, objs[i].cy, objs[i].w, objs[i].h};
        Box ob{objs[j].cx, objs[j].cy, objs[j].w, objs[j].h};
        std::vector<int> rels = relation_oracle(sb, ob, cfg);
        if (rels.empty()) continue;
        Triplet tr;
        tr.subject_box = sb;
        tr.subject_label = objs[i].category;
        tr.object_box = ob;
        tr.object_label = objs[j].category;
        tr.relations = std::move(rels);
        frame.triplets.push_back(std::move(tr));
      }
    }
    out.annotation.frames.push_back(std::move(frame));
    out.frames.push_back(std::move(img));
  }
  return out;
}

std::vector<GeneratedVideo> generate_synthetic(const GeneratorConfig& cfg) {
  cfg.validate();
  std::vector<GeneratedVideo> videos;
  videos.reserve(cfg.num_videos);
  for (int v = 0; v < cfg.num_videos; ++v) {
    videos.push_back(generate_video(cfg, v));
  }
  return videos;
}

// ---------------------------------------------------------------------------
// Corpus IO
// ---------------------------------------------------------------------------

namespace {

json generator_config_to_json(const GeneratorConfig& cfg) {
  json objs = json::array();
  for (const auto& o : cfg.objects) {
    objs.push_back({{"name", o.name},
                    {"shape", to_string(o.shape)},
                    {"color", {o.color[0], o.color[1], o.color[2]}}});
  }
  return json{{"num_videos", cfg.num_videos},
              {"frames_per_video", cfg.frames_per_video},
              {"image_w", cfg.image_w},
              {"image_h", cfg.image_h},
              {"min_objects", cfg.min_objects},
              {"max_objects", cfg.max_objects},
              {"min_size", cfg.min_size},
              {"max_size", cfg.max_size},
              {"max_speed", cfg.max_speed},
              {"margin", cfg.margin},
              {"near_threshold", cfg.near_threshold},
              {"agent_mode", cfg.agent_mode},
              {"objects", objs},
              {"relations", cfg.relations},
              {"seed", cfg.seed}};
}

GeneratorConfig generator_config_from_json(const json& j) {
  GeneratorConfig cfg;
  cfg.num_videos = j.at("num_videos").get<int>();
  cfg.frames_per_video = j.at("frames_per_video").get<int>();
  cfg.image_w = j.at("image_w").get<int>();
  cfg.image_h = j.at("image_h").get<int>();
  cfg.min_objects = j.at("min_objects").get<int>();
  cfg.max_objects = j.at("max_objects").get<int>();
  cfg.min_size = j.at("min_size").get<double>();
  cfg.max_size = j.at("max_size").get<double>();
  cfg.max_speed = j.at("max_speed").get<double>();
  cfg.margin = j.at("margin").get<double>();
  cfg.near_threshold = j.at("near_threshold").get<double>();
  cfg.agent_mode = j.at("agent_mode").get<bool>();
  cfg.objects.clear();
  for (const auto& o : j.at("objects")) {
    ObjectCategory cat;
    cat.name = o.at("name").get<std::string>();
    cat.shape = shape_from_string(o.at("shape").get<std::string>());
    auto col = o.at("color");
    cat.color = {col.at(0).get<uint8_t>(), col.at(1).get<uint8_t>(),
                 col.at(2).get<uint8_t>()};
    cfg.objects.push_back(cat);
  }
  cfg.relations = j.at("relations").get<std::vector<std::string>>();
  cfg.seed = j.at("seed").get<uint64_t>();
  return cfg;
}

void check_known_fields_set(const json& obj, const std::set<std::string>& allowed,
                            const std::string& locus) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ParseError(locus + ": unknown field '" + it.key() + "'");
    }
  }
}

json box_to_json(const Box& b) { return json::array({b.cx, b.cy, b.w, b.h}); }

Box box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw std::runtime_error("box must be [cx,cy,w,h]");
  return Box{j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
             j.at(3).get<double>()};
}

void check_known_fields(const json& obj, const std::set<std::string>& allowed,
                        const std::string& locus) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ParseError(locus + ": unknown field '" + it.key() + "'");
    }
  }
}

std::string frame_filename(int idx) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "f%04d.ppm", idx);
  return buf;
}

}  // namespace

GeneratorConfig load_generator_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open generator config: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  check_known_fields_set(j,
                         {"num_videos", "frames_per_video", "image_w", "image_h",
                          "min_objects", "max_objects", "min_size", "max_size",
                          "max_speed", "margin", "near_threshold", "agent_mode",
                          "objects", "relations", "seed"},
                         path.string());
  GeneratorConfig cfg = default_generator_config();
  auto get = [&](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
  };
  get("num_videos", cfg.num_videos);
  get("frames_per_video", cfg.frames_per_video);
  get("image_w", cfg.image_w);
  get("image_h", cfg.image_h);
  get("min_objects", cfg.min_objects);
  get("max_objects", cfg.max_objects);
  get("min_size", cfg.min_size);
  get("max_size", cfg.max_size);
  get("max_speed", cfg.max_speed);
  get("margin", cfg.margin);
  get("near_threshold", cfg.near_threshold);
  get("agent_mode", cfg.agent_mode);
  get("relations", cfg.relations);
  get("seed", cfg.seed);
  if (j.contains("objects")) {
    cfg.objects.clear();
    for (const auto& o : j.at("objects")) {
      check_known_fields_set(o, {"name", "shape", "color"}, path.string() + ".objects");
      ObjectCategory cat;
      cat.name = o.at("name").get<std::string>();
      cat.shape = shape_from_string(o.at("shape").get<std::string>());
      auto col = o.at("color");
      cat.color = {col.at(0).get<uint8_t>(), col.at(1).get<uint8_t>(),
                   col.at(2).get<uint8_t>()};
      cfg.objects.push_back(cat);
    }
  }
  cfg.validate();
  return cfg;
}

void save_generator_config(const GeneratorConfig& cfg,
                           const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write generator config: " + path.string());
  out << generator_config_to_json(cfg).dump(2) << "\n";
}

uint64_t fnv1a64(const void* data, size_t size) {
  const auto* p = static_cast<const uint8_t*>(data);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash missing file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string bytes = ss.str();
  return fnv1a64(bytes.data(), bytes.size());
}

void write_corpus(const GeneratorConfig& cfg, const std::vector<GeneratedVideo>& videos,
                  const std::filesystem::path& outdir) {
  namespace fs = std::filesystem;
  fs::create_directories(outdir / "annotations");
  fs::create_directories(outdir / "frames");

  std::vector<std::string> written;
  json header;
  header["format_version"] = 1;
  header["generator"] = generator_config_to_json(cfg);
  json vids = json::array();
  for (const auto& v : videos) {
    vids.push_back({{"id", v.annotation.id},
                    {"frames", static_cast<int>(v.annotation.frames.size())},
                    {"width", v.annotation.width},
                    {"height", v.annotation.height}});
  }
  header["videos"] = vids;
  {
    std::ofstream out(outdir / "corpus.json");
    out << header.dump(2) << "\n";
  }
  written.push_back("corpus.json");

  for (const auto& v : videos) {
    std::string ann_rel = "annotations/" + v.annotation.id + ".jsonl";
    std::ofstream ann(outdir / ann_rel);
    for (size_t f = 0; f < v.annotation.frames.size(); ++f) {
      json rec;
      rec["frame"] = static_cast<int>(f);
      json trips = json::array();
      for (const auto& tr : v.annotation.frames[f].triplets) {
        trips.push_back({{"sub", tr.subject_label},
                         {"sub_box", box_to_json(tr.subject_box)},
                         {"obj", tr.object_label},
                         {"obj_box", box_to_json(tr.object_box)},
                         {"rels", tr.relations}});
      }
      rec["triplets"] = trips;
      ann << rec.dump() << "\n";
    }
    ann.close();
    written.push_back(ann_rel);

    fs::create_directories(outdir / "frames" / v.annotation.id);
    for (size_t f = 0; f < v.frames.size(); ++f) {
      std::string frame_rel =
          "frames/" + v.annotation.id + "/" + frame_filename(static_cast<int>(f));
      write_ppm(outdir / frame_rel, v.frames[f]);
      written.push_back(frame_rel);
    }
  }

  std::sort(written.begin(), written.end());
  json manifest;
  for (const auto& rel : written) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(hash_file(outdir / rel)));
    manifest["files"][rel] = buf;
  }
  std::ofstream mout(outdir / "manifest.json");
  mout << manifest.dump(2) << "\n";
}

const VideoAnnotation& Corpus::video(const std::string& id) const {
  for (const auto& v : videos) {
    if (v.id == id) return v;
  }
  throw std::invalid_argument("unknown video id: " + id);
}

Corpus load_corpus(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::path header_path = dir / "corpus.json";
  if (!fs::exists(header_path)) {
    throw ParseError("missing corpus header: " + header_path.string());
  }
  std::ifstream in(header_path);
  json header;
  try {
    in >> header;
  } catch (const json::exception& e) {
    throw ParseError(header_path.string() + ": " + e.what());
  }
  check_known_fields(header, {"format_version", "generator", "videos"},
                     header_path.string());

  Corpus corpus;
  corpus.root = dir;
  corpus.config = generator_config_from_json(header.at("generator"));
  int n_obj = static_cast<int>(corpus.config.objects.size());
  int n_rel = static_cast<int>(corpus.config.relations.size());

  for (const auto& vj : header.at("videos")) {
    VideoAnnotation video;
    video.id = vj.at("id").get<std::string>();
    video.width = vj.at("width").get<int>();
    video.height = vj.at("height").get<int>();
    int frames = vj.at("frames").get<int>();

    fs::path ann_path = dir / "annotations" / (video.id + ".jsonl");
    std::ifstream ann(ann_path);
    if (!ann) throw ParseError("missing annotation file: " + ann_path.string());
    std::string line;
    int line_no = 0;
    while (std::getline(ann, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::string locus = ann_path.string() + " line " + std::to_string(line_no) +
                          " (video " + video.id + " frame " +
                          std::to_string(line_no - 1) + ")";
      json rec;
      try {
        rec = json::parse(line);
      } catch (const json::exception& e) {
        throw ParseError(locus + ": " + e.what());
      }
      check_known_fields(rec, {"frame", "triplets"}, locus);
      if (rec.at("frame").get<int>() != line_no - 1) {
        throw ParseError(locus + ": frame index mismatch");
      }
      FrameAnnotation frame;
      for (const auto& tj : rec.at("triplets")) {
        check_known_fields(tj, {"sub", "sub_box", "obj", "obj_box", "rels"}, locus);
        Triplet tr;
        try {
          tr.subject_label = tj.at("sub").get<int>();
          tr.subject_box = box_from_json(tj.at("sub_box"));
          tr.object_label = tj.at("obj").get<int>();
          tr.object_box = box_from_json(tj.at("obj_box"));
          tr.relations = tj.at("rels").get<std::vector<int>>();
        } catch (const std::exception& e) {
          throw ParseError(locus + ": " + e.what());
        }
        frame.triplets.push_back(std::move(tr));
      }
      try {
        validate_frame(frame, n_obj, n_rel, locus);
      } catch (const std::invalid_argument& e) {
        throw ParseError(e.what());
      }
      video.frames.push_back(std::move(frame));
    }
    if (static_cast<int>(video.frames.size()) != frames) {
      throw ParseError(ann_path.string() + ": expected " + std::to_string(frames) +
                       " frames, found " + std::to_string(video.frames.size()));
    }
    corpus.videos.push_back(std::move(video));
  }
  return corpus;
}

Mat load_frame_input(const std::filesystem::path& corpus_root,
                     const std::string& video_id, int frame_idx) {
  return raster_to_input(
      read_ppm(corpus_root / "frames" / video_id / frame_filename(frame_idx)));
}

// ---------------------------------------------------------------------------
// Compositional splits
// ---------------------------------------------------------------------------

std::vector<TripletClass> frame_triplet_classes(const FrameAnnotation& frame) {
  std::set<TripletClass> classes;
  for (const auto& tr : frame.triplets) {
    for (int r : tr.relations) {
      classes.insert({tr.subject_label, tr.object_label, r});
    }
  }
  return {classes.begin(), classes.end()};
}

std::vector<TripletClass> video_triplet_classes(const VideoAnnotation& video) {
  std::set<TripletClass> classes;
  for (const auto& f : video.frames) {
    for (const auto& c : frame_triplet_classes(f)) classes.insert(c);
  }
  return {classes.begin(), classes.end()};
}

namespace {

std::string class_to_string(const TripletClass& c, const GeneratorConfig& cfg) {
  std::string s = "(" + std::to_string(c.subject) + "," + std::to_string(c.object) +
                  "," + std::to_string(c.relation) + ")";
  if (c.subject >= 0 && c.subject < static_cast<int>(cfg.objects.size()) &&
      c.object >= 0 && c.object < static_cast<int>(cfg.objects.size()) &&
      c.relation >= 0 && c.relation < static_cast<int>(cfg.relations.size())) {
    s += " <" + cfg.objects[c.subject].name + ", " + cfg.objects[c.object].name +
         ", " + cfg.relations[c.relation] + ">";
  }
  return s;
}

SplitSpec build_split(const Corpus& corpus, const std::set<TripletClass>& holdout,
                      uint64_t seed, double test_fraction) {
  int n = static_cast<int>(corpus.videos.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(Rng::mix(seed, 0x517717ULL));
  rng.shuffle(order);
  int n_test = static_cast<int>(std::lround(test_fraction * n));
  n_test = std::clamp(n_test, 1, n - 1);

  std::set<std::string> test_ids;
  for (int i = 0; i < n_test; ++i) test_ids.insert(corpus.videos[order[i]].id);

  SplitSpec split;
  std::set<TripletClass> seen;
  for (const auto& v : corpus.videos) {
    auto classes = video_triplet_classes(v);
    bool tainted = std::any_of(classes.begin(), classes.end(),
                               [&](const TripletClass& c) { return holdout.count(c); });
    if (test_ids.count(v.id) || tainted) {
      split.test_videos.push_back(v.id);
    } else {
      split.train_videos.push_back(v.id);
      for (const auto& c : classes) seen.insert(c);
    }
  }
  if (split.train_videos.empty()) {
    throw ConfigError("split: holdout removes every training video");
  }

  // Component coverage: every unseen label/relation must survive in the seen
  // set, otherwise the compositional premise is broken.
  std::set<int> seen_objects, seen_relations;
  for (const auto& c : seen) {
    seen_objects.insert(c.subject);
    seen_objects.insert(c.object);
    seen_relations.insert(c.relation);
  }
  for (const auto& c : holdout) {
    if (!seen_objects.count(c.subject)) {
      throw ConfigError("infeasible holdout: subject label " +
                        std::to_string(c.subject) + " of class " +
                        class_to_string(c, corpus.config) +
                        " no longer appears in any seen triplet");
    }
    if (!seen_objects.count(c.object)) {
      throw ConfigError("infeasible holdout: object label " +
                        std::to_string(c.object) + " of class " +
                        class_to_string(c, corpus.config) +
                        " no longer appears in any seen triplet");
    }
    if (!seen_relations.count(c.relation)) {
      throw ConfigError("infeasible holdout: relation label " +
                        std::to_string(c.relation) + " of class " +
                        class_to_string(c, corpus.config) +
                        " no longer appears in any seen triplet");
    }
  }

  // Every declared unseen class must actually occur in the test set.
  std::set<TripletClass> in_test;
  for (const auto& id : split.test_videos) {
    for (const auto& c : video_triplet_classes(corpus.video(id))) in_test.insert(c);
  }
  for (const auto& c : holdout) {
    if (!in_test.count(c)) {
      throw ConfigError("infeasible holdout: class " +
                        class_to_string(c, corpus.config) +
                        " does not occur anywhere in the corpus test set");
    }
  }

  split.seen.assign(seen.begin(), seen.end());
  split.unseen.assign(holdout.begin(), holdout.end());
  return split;
}

}  // namespace

SplitSpec make_compositional_split(const Corpus& corpus,
                                   const std::vector<TripletClass>& holdout,
                                   uint64_t seed, double test_fraction) {
  return build_split(corpus, {holdout.begin(), holdout.end()}, seed, test_fraction);
}

SplitSpec make_compositional_split_fraction(const Corpus& corpus, double fraction,
                                            uint64_t seed, double test_fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw ConfigError("holdout fraction must lie in [0, 1)");
  }
  std::set<TripletClass> all;
  for (const auto& v : corpus.videos) {
    for (const auto& c : video_triplet_classes(v)) all.insert(c);
  }
  std::vector<TripletClass> pool(all.begin(), all.end());
  Rng rng(Rng::mix(seed, 0xc0de517717ULL));
  rng.shuffle(pool);

  int target = static_cast<int>(std::lround(fraction * static_cast<double>(pool.size())));
  std::set<TripletClass> holdout;
  for (const auto& cand : pool) {
    if (static_cast<int>(holdout.size()) >= target) break;
    auto attempt = holdout;
    attempt.insert(cand);
    try {
      build_split(corpus, attempt, seed, test_fraction);
      holdout = attempt;
    } catch (const ConfigError&) {
      // candidate would break coverage; skip it
    }
  }
  return build_split(corpus, holdout, seed, test_fraction);
}

void save_split(const SplitSpec& split, const std::filesystem::path& path) {
  auto classes_to_json = [](const std::vector<TripletClass>& cs) {
    json arr = json::array();
    for (const auto& c : cs) arr.push_back({c.subject, c.object, c.relation});
    return arr;
  };
  json j;
  j["format_version"] = 1;
  j["seen"] = classes_to_json(split.seen);
  j["unseen"] = classes_to_json(split.unseen);
  j["train_videos"] = split.train_videos;
  j["test_videos"] = split.test_videos;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write split file " + path.string());
  out << j.dump(2) << "\n";
}

SplitSpec load_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("missing split file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  check_known_fields(j, {"format_version", "seen", "unseen", "train_videos", "test_videos"},
                     path.string());
  auto classes_from_json = [&](const json& arr) {
    std::vector<TripletClass> cs;
    for (const auto& c : arr) {
      if (!c.is_array() || c.size() != 3) {
        throw ParseError(path.string() + ": triplet class must be [sub,obj,rel]");
      }
      cs.push_back({c.at(0).get<int>(), c.at(1).get<int>(), c.at(2).get<int>()});
    }
    return cs;
  };
  SplitSpec split;
  split.seen = classes_from_json(j.at("seen"));
  split.unseen = classes_from_json(j.at("unseen"));
  split.train_videos = j.at("train_videos").get<std::vector<std::string>>();
  split.test_videos = j.at("test_videos").get<std::vector<std::string>>();
  return split;
}

void verify_split(const Corpus& corpus, const SplitSpec& split) {
  std::set<TripletClass> unseen(split.unseen.begin(), split.unseen.end());
  std::set<TripletClass> seen(split.seen.begin(), split.seen.end());

  for (const auto& c : split.unseen) {
    if (seen.count(c)) {
      throw ConfigError("split violation: class " + class_to_string(c, corpus.config) +
                        " is declared both seen and unseen");
    }
  }
  for (const auto& id : split.train_videos) {
    const auto& video = corpus.video(id);
    for (size_t f = 0; f < video.frames.size(); ++f) {
      for (const auto& c : frame_triplet_classes(video.frames[f])) {
        if (unseen.count(c)) {
          throw ConfigError("split violation: unseen class " +
                            class_to_string(c, corpus.config) + " appears in train video " +
                            id + " frame " + std::to_string(f));
        }
      }
    }
  }
  std::set<TripletClass> in_test;
  for (const auto& id : split.test_videos) {
    for (const auto& c : video_triplet_classes(corpus.video(id))) in_test.insert(c);
  }
  for (const auto& c : split.unseen) {
    if (!in_test.count(c)) {
      throw ConfigError("split violation: unseen class " +
                        class_to_string(c, corpus.config) + " has no test instance");
    }
  }
  std::set<int> seen_objects, seen_relations;
  for (const auto& c : split.seen) {
    seen_objects.insert(c.subject);
    seen_objects.insert(c.object);
    seen_relations.insert(c.relation);
  }
  for (const auto& c : split.unseen) {
    if (!seen_objects.count(c.subject) || !seen_objects.count(c.object) ||
        !seen_relations.count(c.relation)) {
      throw ConfigError("split violation: class " + class_to_string(c, corpus.config) +
                        " has a component absent from the seen set");
    }
  }
}

}  // namespace dds
