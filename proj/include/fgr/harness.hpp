#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fgr/io.hpp"
#include "fgr/train.hpp"

namespace fgr {

// Flat key=value experiment configuration; unknown keys are rejected and
// every value is range-checked at load time.
struct RunConfig {
  std::string task = "emotion";
  std::string data;         // FER-style .csv or manifest .tsv
  std::string images_dir;   // base directory for manifest image paths
  std::string stats_path;   // pixel-stats sidecar; fitted on train when empty
  std::string out_dir = "out";
  int input_size = 48;
  bool align = false;

  // architecture overrides around the default stack
  int depth = 3;
  double width = 1.0;
  std::string lcn_placement = "100";   // after conv i
  std::string pool_placement = "100";  // after conv i (LCN first)
  double dropout_fc = 0.2;
  double dropout_conv = 0.0;

  TrainConfig train;
  std::array<double, 3> split = {0.8, 0.1, 0.1};
  double variance_target = 0.95;

  // sweep axes
  std::vector<int> sweep_depths = {2, 3, 4};
  std::vector<double> sweep_widths = {0.5, 1.0, 2.0};
  std::vector<std::string> sweep_lcn = {"000", "100", "110", "111"};
  std::vector<std::string> sweep_pool = {"000", "100", "110", "111"};
  std::vector<double> sweep_dropout_conv = {0.0, 0.1, 0.2};
  std::vector<double> sweep_dropout_fc = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<int> sweep_sizes = {24, 36, 48, 60, 72};
};

RunConfig parse_run_config(const std::string& text, const std::string& name);
RunConfig load_run_config(const std::string& path);

TaskHead head_for_task(const std::string& task, int aam_dim = 0);

// The default stack with depth/width/LCN/pool/dropout overrides applied;
// extra conv layers grow next to the second one, the FC layer stays last.
std::vector<LayerSpec> build_network_specs(const RunConfig& config,
                                           const TaskHead& head);

struct LoadedData {
  Dataset train, valid, test;
  int aam_dim = 0;  // k + 2 for the regression task
};

LoadedData load_task_dataset(const RunConfig& config);

struct CommandResult {
  std::vector<std::string> files;  // produced files, relative to the out dir
  int failures = 0;
  double headline = 0.0;  // final criterion / accuracy, command-specific
};

struct PreprocessOptions {
  std::string manifest_path;
  std::string images_dir;
  std::string out_dir;
  int size = 48;
  bool fit_stats = false;
  std::string stats_path;  // validate preprocessed output against these
  bool align = true;
  std::uint64_t split_seed = 0;
  std::array<double, 3> fractions = {0.8, 0.1, 0.1};
};

CommandResult run_preprocess(const PreprocessOptions& opts);
CommandResult run_train(const RunConfig& config);
CommandResult run_eval(const std::string& model_path, const RunConfig& config,
                       const std::string& split);
CommandResult run_sweep(const RunConfig& config, const std::string& axes);
CommandResult run_weightsim(const std::vector<std::string>& model_paths,
                            const std::string& out_dir);

struct AamGenOptions {
  std::string manifest_path;
  std::string images_dir;
  std::string out_dir;
  int count = 0;
  std::uint64_t seed = 0;
  double variance_target = 0.95;
  int size = 48;
};

CommandResult run_aamgen(const AamGenOptions& opts);

}  // namespace fgr
