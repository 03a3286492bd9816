#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <sstream>

#include "dds/train.hpp"

using namespace dds;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model(int n_obj, int n_rel) {
  ModelConfig cfg;
  cfg.d = 16;
  cfg.n_q = 4;
  cfg.heads = 2;
  cfg.enc_layers = 1;
  cfg.obj_dec_layers = 1;
  cfg.rel_dec_layers = 1;
  cfg.temporal_layers = 1;
  cfg.ffn_hidden = 32;
  cfg.n_obj = n_obj;
  cfg.n_rel = n_rel;
  cfg.image_h = 16;
  cfg.image_w = 16;
  cfg.backbone_channels = {8, 16};
  cfg.backbone_patch = {4, 2};
  return cfg;
}

struct TinyWorld {
  GeneratorConfig gen;
  std::vector<GeneratedVideo> videos;
  RunConfig run;

  TinyWorld() {
    gen = default_generator_config();
    gen.num_videos = 3;
    gen.frames_per_video = 2;
    gen.image_w = 16;
    gen.image_h = 16;
    gen.min_objects = 2;
    gen.max_objects = 2;  // two ordered pairs fit inside four queries
    gen.min_size = 0.2;
    gen.max_size = 0.4;
    gen.seed = 4;
    videos = generate_synthetic(gen);

    run.seed = 10;
    run.model = tiny_model(static_cast<int>(gen.objects.size()),
                           static_cast<int>(gen.relations.size()));
    run.training.steps = 12;
    run.training.videos_per_step = 2;
    run.training.log_every = 1;
    run.optimizer.lr = 2e-3;
    run.optimizer.backbone_lr = 2e-3;
  }

  std::vector<const VideoAnnotation*> annotations() const {
    std::vector<const VideoAnnotation*> out;
    for (const auto& v : videos) out.push_back(&v.annotation);
    return out;
  }

  FrameLoader loader() const {
    return [this](const VideoAnnotation& ann) {
      for (const auto& v : videos) {
        if (v.annotation.id == ann.id) {
          std::vector<Image> frames;
          for (const auto& r : v.frames) frames.push_back(raster_to_input(r));
          return frames;
        }
      }
      throw std::runtime_error("unknown video " + ann.id);
    };
  }
};

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / name;
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("training reduces loss on a tiny world and logs one row per step") {
  TinyWorld world;
  DdsModel model(world.run.model, world.run.seed);
  AdamW opt(model.params(), world.run.optimizer);
  std::ostringstream log;
  log << loss_log_header();
  TrainResult result = train_model(model, opt, world.run, world.annotations(),
                                   world.loader(), 0, world.run.training.steps, &log,
                                   nullptr);
  CHECK(result.steps_run == 12);
  int rows = 0;
  std::string line;
  std::istringstream in(log.str());
  std::getline(in, line);  // header
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 12);
  CHECK(result.last.total < result.first.total);
}

TEST_CASE("same seed twice gives byte-identical loss logs") {
  TinyWorld world;
  auto run_once = [&]() {
    DdsModel model(world.run.model, world.run.seed);
    AdamW opt(model.params(), world.run.optimizer);
    std::ostringstream log;
    train_model(model, opt, world.run, world.annotations(), world.loader(), 0,
                world.run.training.steps, &log, nullptr);
    return log.str();
  };
  CHECK(run_once() == run_once());
}

TEST_CASE("checkpoint save/load round trip and config mismatch refusal") {
  TinyWorld world;
  TempDir dir("dds_ckpt_rt");
  DdsModel model(world.run.model, world.run.seed);
  AdamW opt(model.params(), world.run.optimizer);
  train_model(model, opt, world.run, world.annotations(), world.loader(), 0, 3,
              nullptr, nullptr);
  save_checkpoint(dir.path / "ckpt", model, &opt, 3, world.run.seed);

  DdsModel loaded(world.run.model, 999);  // different init, overwritten by load
  AdamW opt2(loaded.params(), world.run.optimizer);
  CheckpointMeta meta = load_checkpoint(dir.path / "ckpt", loaded, &opt2, world.run.model);
  CHECK(meta.step == 3);
  auto a = model.params().flatten_values();
  auto b = loaded.params().flatten_values();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);

  ModelConfig other = world.run.model;
  other.n_q = 8;
  DdsModel wrong(other, 1);
  CHECK_THROWS_AS(load_checkpoint(dir.path / "ckpt", wrong, nullptr, other), ConfigError);
}

TEST_CASE("resume reproduces an uninterrupted run exactly") {
  TinyWorld world;
  TempDir dir("dds_resume");

  // uninterrupted: 6 steps
  DdsModel full(world.run.model, world.run.seed);
  AdamW opt_full(full.params(), world.run.optimizer);
  train_model(full, opt_full, world.run, world.annotations(), world.loader(), 0, 6,
              nullptr, nullptr);

  // interrupted: 3 steps, checkpoint, 3 more
  DdsModel part(world.run.model, world.run.seed);
  AdamW opt_part(part.params(), world.run.optimizer);
  train_model(part, opt_part, world.run, world.annotations(), world.loader(), 0, 3,
              nullptr, nullptr);
  save_checkpoint(dir.path / "mid", part, &opt_part, 3, world.run.seed);

  DdsModel resumed(world.run.model, 123456);
  AdamW opt_res(resumed.params(), world.run.optimizer);
  load_checkpoint(dir.path / "mid", resumed, &opt_res, world.run.model);
  train_model(resumed, opt_res, world.run, world.annotations(), world.loader(), 3, 6,
              nullptr, nullptr);

  auto a = full.params().flatten_values();
  auto b = resumed.params().flatten_values();
  REQUIRE(a.size() == b.size());
  double max_diff = 0.0;
  for (size_t i = 0; i < a.size(); ++i) max_diff = std::max(max_diff, std::abs(a[i] - b[i]));
  CHECK(max_diff < 1e-9);
}

TEST_CASE("non-finite loss aborts with a numerical error") {
  TinyWorld world;
  DdsModel model(world.run.model, world.run.seed);
  // blow up a backbone weight so the forward pass overflows
  for (auto* p : model.params().params()) {
    if (p->name == "backbone.project.weight") p->value.setConstant(1e308);
  }
  AdamW opt(model.params(), world.run.optimizer);
  CHECK_THROWS_AS(train_model(model, opt, world.run, world.annotations(), world.loader(),
                              0, 1, nullptr, nullptr),
                  NumericalError);
}

TEST_CASE("video_loss averages per-frame totals") {
  TinyWorld world;
  DdsModel model(world.run.model, world.run.seed);
  const auto& video = world.videos[0];
  std::vector<Image> frames;
  for (const auto& r : video.frames) frames.push_back(raster_to_input(r));

  Tape tape;
  VideoLoss vl = video_loss(tape, model, frames, video.annotation,
                            MatchConfig{}, CriterionConfig{});
  CHECK(tape.val(vl.total)(0, 0) == doctest::Approx(vl.mean.total).epsilon(1e-12));
  CHECK(vl.mean.total > 0.0);
}

TEST_CASE("lr schedule drops by 10x at the configured interval") {
  TinyWorld world;
  world.run.optimizer.lr_drop_steps = 2;
  world.run.training.steps = 5;
  DdsModel model(world.run.model, world.run.seed);
  AdamW opt(model.params(), world.run.optimizer);
  std::ostringstream log;
  log << loss_log_header();
  train_model(model, opt, world.run, world.annotations(), world.loader(), 0, 5, &log,
              nullptr);
  std::istringstream in(log.str());
  std::string line;
  std::getline(in, line);
  std::vector<double> scales;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto pos = line.rfind('\t');
    scales.push_back(std::stod(line.substr(pos + 1)));
  }
  REQUIRE(scales.size() == 5);
  CHECK(scales[0] == doctest::Approx(1.0));
  CHECK(scales[1] == doctest::Approx(1.0));
  CHECK(scales[2] == doctest::Approx(0.1));
  CHECK(scales[4] == doctest::Approx(0.01));
}
