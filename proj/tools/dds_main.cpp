#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dds/cli.hpp"

namespace {

// exit codes: 0 success, 2 config/validation error, 3 numerical failure
int run(int argc, char** argv) {
  CLI::App app{"dds: decoupled dual-branch dynamic scene-graph generation"};
  app.require_subcommand(1);

  std::string config_path, out_path;
  std::optional<uint64_t> seed;
  app.add_option("--seed", seed, "override the config seed");

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  gen->add_option("--config", config_path, "generator config JSON")->required();
  gen->add_option("--out", out_path, "output corpus directory")->required();

  auto* mksplit = app.add_subcommand("make-split", "build a compositional split");
  std::string corpus_dir, holdout_list;
  std::optional<double> holdout_fraction;
  double test_fraction = 0.3;
  uint64_t split_seed = 1;
  mksplit->add_option("--corpus", corpus_dir, "corpus directory")->required();
  mksplit->add_option("--out", out_path, "output split file")->required();
  mksplit->add_option("--holdout", holdout_list,
                      "explicit unseen classes 's,o,r;s,o,r;...'");
  mksplit->add_option("--holdout-fraction", holdout_fraction,
                      "fraction of triplet classes to hold out");
  mksplit->add_option("--test-fraction", test_fraction, "fraction of videos in test");
  mksplit->add_option("--split-seed", split_seed, "seed for the split shuffle");

  auto* train = app.add_subcommand("train", "train a model");
  std::string resume;
  train->add_option("--config", config_path, "run config JSON")->required();
  train->add_option("--out", out_path, "run output directory")->required();
  train->add_option("--resume", resume, "checkpoint prefix to resume from");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string checkpoint, split_path;
  eval->add_option("--checkpoint", checkpoint, "checkpoint prefix (no extension)")
      ->required();
  eval->add_option("--corpus", corpus_dir, "corpus directory")->required();
  eval->add_option("--split", split_path, "split file")->required();
  eval->add_option("--out", out_path, "eval output directory")->required();
  eval->add_option("--config", config_path, "optional run config for eval settings");

  auto* ablate = app.add_subcommand("ablate", "train + eval a set of variants");
  std::string variants_csv;
  ablate->add_option("--config", config_path, "base run config JSON")->required();
  ablate->add_option("--variants", variants_csv, "comma-separated variant names")
      ->required();
  ablate->add_option("--out", out_path, "ablation output directory")->required();

  auto* plot = app.add_subcommand("plot", "render charts from logs or reports");
  std::string loss_log;
  std::vector<std::string> reports;
  plot->add_option("--loss-log", loss_log, "loss log TSV");
  plot->add_option("--report", reports, "eval report JSON file(s)");
  plot->add_option("--out", out_path, "chart output directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    dds::cmd_gen_data(config_path, out_path, seed);
  } else if (mksplit->parsed()) {
    dds::SplitRequest req;
    req.holdout_list = holdout_list;
    req.holdout_fraction = holdout_fraction;
    req.test_fraction = test_fraction;
    dds::cmd_make_split(corpus_dir, out_path, req, seed.value_or(split_seed));
  } else if (train->parsed()) {
    std::optional<std::filesystem::path> resume_path;
    if (!resume.empty()) resume_path = resume;
    dds::cmd_train(config_path, out_path, resume_path, seed);
  } else if (eval->parsed()) {
    dds::EvalConfig eval_cfg;
    if (!config_path.empty()) {
      eval_cfg = dds::load_run_config(config_path).evaluation;
    }
    dds::EvalReport report =
        dds::cmd_eval(checkpoint, corpus_dir, split_path, out_path, eval_cfg);
    std::fputs(dds::report_to_text(report).c_str(), stdout);
  } else if (ablate->parsed()) {
    std::vector<std::string> variants;
    std::string cur;
    for (char c : variants_csv) {
      if (c == ',') {
        if (!cur.empty()) variants.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) variants.push_back(cur);
    dds::cmd_ablate(config_path, variants, out_path);
  } else if (plot->parsed()) {
    if (!loss_log.empty()) {
      dds::cmd_plot_loss(loss_log, out_path);
    } else if (!reports.empty()) {
      std::vector<std::filesystem::path> paths(reports.begin(), reports.end());
      dds::cmd_plot_reports(paths, out_path);
    } else {
      throw dds::ConfigError("plot: pass --loss-log or --report");
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const dds::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const dds::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
}
