// fgr: facial semantic-feature experiments from the command line.
//
// Subcommands: preprocess, train, eval, sweep, weightsim, aamgen. Every
// command writes its artifacts under --out along with an outputs.txt listing
// the produced files; runs are deterministic given the config (seed
// included). Exit code 0 means no row/point-level failures.

#include <exception>
#include <iostream>

#include "CLI11.hpp"
#include "fgr/harness.hpp"
#include "fgr/parallel.hpp"

int main(int argc, char** argv) {
  CLI::App app{"facial semantic-feature CNN experiment harness"};
  app.require_subcommand(1);

  int jobs = 0;
  app.add_option("--jobs", jobs, "worker threads (0 = all cores)");

  // preprocess
  auto* pre = app.add_subcommand(
      "preprocess", "align/resize a manifest corpus and fit pixel stats");
  fgr::PreprocessOptions pre_opts;
  std::string pre_fractions = "0.8,0.1,0.1";
  pre->add_option("--manifest", pre_opts.manifest_path, "input manifest (tsv)")
      ->required();
  pre->add_option("--images-dir", pre_opts.images_dir,
                  "base directory for manifest image paths");
  pre->add_option("--out", pre_opts.out_dir, "output directory")->required();
  pre->add_option("--size", pre_opts.size, "output image size (px)");
  pre->add_flag("--fit-stats", pre_opts.fit_stats,
                "fit per-pixel stats on the train rows");
  pre->add_option("--stats", pre_opts.stats_path,
                  "validate against an existing stats sidecar");
  pre->add_flag("!--no-align", pre_opts.align,
                "skip eye-landmark alignment (pre-cropped corpora)");
  pre->add_option("--split-seed", pre_opts.split_seed,
                  "seed of the train/valid/test split used for --fit-stats");
  pre->add_option("--fractions", pre_fractions, "split fractions (a,b,c)");

  // train
  auto* tr = app.add_subcommand("train", "train one network per the config");
  std::string config_path;
  tr->add_option("--config", config_path, "run config (key=value)")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a saved model");
  std::string model_path, eval_split = "test";
  ev->add_option("--config", config_path, "run config (key=value)")->required();
  ev->add_option("--model", model_path, "model file")->required();
  ev->add_option("--split", eval_split, "train|valid|test");

  // sweep
  auto* sw = app.add_subcommand("sweep", "grid sweep over one axis pair");
  std::string axes;
  sw->add_option("--config", config_path, "run config (key=value)")->required();
  sw->add_option("--axes", axes, "depth_width|lcn_pool|dropout|input_size")
      ->required();

  // weightsim
  auto* ws = app.add_subcommand(
      "weightsim", "first-layer weight similarity across saved models");
  std::vector<std::string> ws_models;
  std::string ws_out;
  ws->add_option("--out", ws_out, "output directory")->required();
  ws->add_option("models", ws_models, "model files (>= 2)")->required();

  // aamgen
  auto* ag = app.add_subcommand(
      "aamgen", "fit the appearance model and emit synthetic faces");
  fgr::AamGenOptions ag_opts;
  ag->add_option("--manifest", ag_opts.manifest_path, "corpus manifest (tsv)")
      ->required();
  ag->add_option("--images-dir", ag_opts.images_dir,
                 "base directory for manifest image paths");
  ag->add_option("--out", ag_opts.out_dir, "output directory")->required();
  ag->add_option("--n", ag_opts.count, "number of synthetic faces");
  ag->add_option("--seed", ag_opts.seed, "sampling seed");
  ag->add_option("--variance", ag_opts.variance_target,
                 "PCA variance target in (0, 1]");
  ag->add_option("--size", ag_opts.size, "face size (px)");

  CLI11_PARSE(app, argc, argv);
  if (jobs > 0) fgr::set_parallel_jobs(jobs);

  try {
    fgr::CommandResult result;
    if (pre->parsed()) {
      const auto parts = fgr::parse_run_config("split = " + pre_fractions,
                                               "--fractions");
      pre_opts.fractions = parts.split;
      result = fgr::run_preprocess(pre_opts);
    } else if (tr->parsed()) {
      result = fgr::run_train(fgr::load_run_config(config_path));
    } else if (ev->parsed()) {
      result = fgr::run_eval(model_path, fgr::load_run_config(config_path),
                             eval_split);
    } else if (sw->parsed()) {
      result = fgr::run_sweep(fgr::load_run_config(config_path), axes);
    } else if (ws->parsed()) {
      result = fgr::run_weightsim(ws_models, ws_out);
    } else if (ag->parsed()) {
      result = fgr::run_aamgen(ag_opts);
    }
    if (result.failures > 0) {
      std::cerr << result.failures << " row(s)/point(s) failed\n";
      return 1;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
