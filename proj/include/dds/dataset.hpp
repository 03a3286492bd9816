#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dds/annotations.hpp"
#include "dds/image.hpp"

namespace dds {

struct ObjectCategory {
  std::string name;
  Shape shape = Shape::kCircle;
  std::array<uint8_t, 3> color = {255, 255, 255};
};

struct GeneratorConfig {
  int num_videos = 16;
  int frames_per_video = 8;
  int image_w = 64;
  int image_h = 64;
  int min_objects = 2;
  int max_objects = 3;
  double min_size = 0.15;
  double max_size = 0.30;
  double max_speed = 0.06;
  // Directional relations need at least this much center separation.
  double margin = 0.05;
  // `near` fires below this fraction of the frame diagonal (and zero IoU).
  double near_threshold = 0.25;
  // When set, every subject is the first (agent) category, mirroring
  // datasets that fix the subject class.
  bool agent_mode = false;
  std::vector<ObjectCategory> objects;
  std::vector<std::string> relations;
  uint64_t seed = 1;

  void validate() const;
  int relation_index(const std::string& name) const;
};

GeneratorConfig default_generator_config();

// User-authored generator config: missing fields inherit the defaults,
// unknown fields are rejected.
GeneratorConfig load_generator_config(const std::filesystem::path& path);
void save_generator_config(const GeneratorConfig& cfg,
                           const std::filesystem::path& path);

// Relation labels for an ordered (subject, object) pair from deterministic
// geometric rules; indices refer to cfg.relations. May be empty.
std::vector<int> relation_oracle(const Box& sub, const Box& obj,
                                 const GeneratorConfig& cfg);

struct GeneratedVideo {
  VideoAnnotation annotation;
  std::vector<Raster> frames;
};

// Deterministic per-video generation: the stream depends only on
// (cfg.seed, video_index), never on scheduling.
GeneratedVideo generate_video(const GeneratorConfig& cfg, int video_index);
std::vector<GeneratedVideo> generate_synthetic(const GeneratorConfig& cfg);

// Corpus layout on disk:
//   corpus.json                  header: vocabularies, generator config, videos
//   annotations/<video>.jsonl    one frame per line
//   frames/<video>/f<idx>.ppm    rendered frames
//   manifest.json                content hashes of every written file
void write_corpus(const GeneratorConfig& cfg, const std::vector<GeneratedVideo>& videos,
                  const std::filesystem::path& outdir);

struct Corpus {
  GeneratorConfig config;
  std::vector<VideoAnnotation> videos;
  std::filesystem::path root;

  const VideoAnnotation& video(const std::string& id) const;
};

Corpus load_corpus(const std::filesystem::path& dir);

Mat load_frame_input(const std::filesystem::path& corpus_root,
                     const std::string& video_id, int frame_idx);

struct SplitSpec {
  std::vector<TripletClass> seen;
  std::vector<TripletClass> unseen;
  std::vector<std::string> train_videos;
  std::vector<std::string> test_videos;
};

// Moves every initial-train video containing a held-out triplet class into
// the test set, then derives the seen set from the remaining train videos.
SplitSpec make_compositional_split(const Corpus& corpus,
                                   const std::vector<TripletClass>& holdout,
                                   uint64_t seed, double test_fraction = 0.3);

// Picks ~fraction of the observed triplet classes as holdout, skipping picks
// that would break component coverage.
SplitSpec make_compositional_split_fraction(const Corpus& corpus, double fraction,
                                            uint64_t seed, double test_fraction = 0.3);

void save_split(const SplitSpec& split, const std::filesystem::path& path);
SplitSpec load_split(const std::filesystem::path& path);

// Scans every train frame for unseen classes and checks component coverage
// and unseen-class presence in test. Throws on any violation.
void verify_split(const Corpus& corpus, const SplitSpec& split);

std::vector<TripletClass> frame_triplet_classes(const FrameAnnotation& frame);
std::vector<TripletClass> video_triplet_classes(const VideoAnnotation& video);

uint64_t fnv1a64(const void* data, size_t size);
uint64_t hash_file(const std::filesystem::path& path);

}  // namespace dds
