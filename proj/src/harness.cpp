#include "fgr/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "fgr/appearance.hpp"
#include "fgr/metrics.hpp"
#include "fgr/parallel.hpp"
#include "fgr/preprocess.hpp"

namespace fs = std::filesystem;

namespace fgr {

namespace {

// ---------------------------------------------------------------------------
// Config parsing

const std::set<std::string> kTasks = {"emotion", "age",     "gender",
                                      "ethnicity", "glasses", "beard",
                                      "mustache", "joint",   "aam"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) items.push_back(trim(item));
  return items;
}

double to_double(const std::string& v, const std::string& where) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ParseError(where + ": not a number: '" + v + "'");
  }
}

long long to_int(const std::string& v, const std::string& where) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ParseError(where + ": not an integer: '" + v + "'");
  }
}

bool to_bool(const std::string& v, const std::string& where) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ParseError(where + ": expected 0/1/true/false, got '" + v + "'");
}

void check_mask(const std::string& mask, const std::string& where) {
  if (mask.empty()) throw ParseError(where + ": empty placement mask");
  for (char c : mask) {
    if (c != '0' && c != '1')
      throw ParseError(where + ": placement mask must be 0/1 characters");
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::string& name) {
  RunConfig config;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = name + ": line " + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(where + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (key == "task") {
      if (!kTasks.count(value))
        throw ParseError(where + ": unknown task '" + value + "'");
      config.task = value;
    } else if (key == "data") {
      config.data = value;
    } else if (key == "images_dir") {
      config.images_dir = value;
    } else if (key == "stats") {
      config.stats_path = value;
    } else if (key == "out") {
      config.out_dir = value;
    } else if (key == "input_size") {
      const long long v = to_int(value, where);
      if (v < 8 || v > 512) throw ParseError(where + ": input_size out of range");
      config.input_size = int(v);
    } else if (key == "align") {
      config.align = to_bool(value, where);
    } else if (key == "depth") {
      const long long v = to_int(value, where);
      if (v < 1 || v > 5) throw ParseError(where + ": depth must be 1..5");
      config.depth = int(v);
    } else if (key == "width") {
      const double v = to_double(value, where);
      if (v <= 0 || v > 8) throw ParseError(where + ": width must be in (0, 8]");
      config.width = v;
    } else if (key == "lcn_placement") {
      check_mask(value, where);
      config.lcn_placement = value;
    } else if (key == "pool_placement") {
      check_mask(value, where);
      config.pool_placement = value;
    } else if (key == "dropout_fc" || key == "dropout_conv") {
      const double v = to_double(value, where);
      if (v < 0 || v >= 1) throw ParseError(where + ": dropout must be in [0, 1)");
      (key == "dropout_fc" ? config.dropout_fc : config.dropout_conv) = v;
    } else if (key == "batch_size") {
      config.train.batch_size = int(to_int(value, where));
    } else if (key == "lr_start") {
      config.train.lr_start = to_double(value, where);
    } else if (key == "lr_end") {
      config.train.lr_end = to_double(value, where);
    } else if (key == "epochs") {
      config.train.epochs = int(to_int(value, where));
    } else if (key == "momentum") {
      config.train.momentum = to_double(value, where);
    } else if (key == "patience") {
      config.train.patience = int(to_int(value, where));
    } else if (key == "seed") {
      config.train.seed = std::uint64_t(to_int(value, where));
    } else if (key == "split") {
      const auto parts = split_list(value);
      if (parts.size() != 3)
        throw ParseError(where + ": split needs 3 fractions");
      for (int i = 0; i < 3; ++i)
        config.split[i] = to_double(parts[i], where);
    } else if (key == "variance_target") {
      const double v = to_double(value, where);
      if (v <= 0 || v > 1)
        throw ParseError(where + ": variance_target must be in (0, 1]");
      config.variance_target = v;
    } else if (key == "sweep_depths") {
      config.sweep_depths.clear();
      for (const auto& s : split_list(value))
        config.sweep_depths.push_back(int(to_int(s, where)));
    } else if (key == "sweep_widths") {
      config.sweep_widths.clear();
      for (const auto& s : split_list(value))
        config.sweep_widths.push_back(to_double(s, where));
    } else if (key == "sweep_lcn") {
      config.sweep_lcn = split_list(value);
      for (const auto& m : config.sweep_lcn) check_mask(m, where);
    } else if (key == "sweep_pool") {
      config.sweep_pool = split_list(value);
      for (const auto& m : config.sweep_pool) check_mask(m, where);
    } else if (key == "sweep_dropout_fc") {
      config.sweep_dropout_fc.clear();
      for (const auto& s : split_list(value))
        config.sweep_dropout_fc.push_back(to_double(s, where));
    } else if (key == "sweep_dropout_conv") {
      config.sweep_dropout_conv.clear();
      for (const auto& s : split_list(value))
        config.sweep_dropout_conv.push_back(to_double(s, where));
    } else if (key == "sweep_sizes") {
      config.sweep_sizes.clear();
      for (const auto& s : split_list(value))
        config.sweep_sizes.push_back(int(to_int(s, where)));
    } else {
      throw ParseError(where + ": unknown key '" + key + "'");
    }
  }
  config.train.validate();
  const double frac_sum = config.split[0] + config.split[1] + config.split[2];
  if (std::abs(frac_sum - 1.0) > 1e-6)
    throw ParseError(name + ": split fractions must sum to 1");
  return config;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_text_file(path), path);
}

// ---------------------------------------------------------------------------
// Architecture / head construction

TaskHead head_for_task(const std::string& task, int aam_dim) {
  if (task == "emotion") return TaskHead::exclusive(7);
  if (task == "age") return TaskHead::exclusive(17);
  if (task == "gender") return TaskHead::exclusive(2);
  if (task == "ethnicity") return TaskHead::exclusive(5);
  if (task == "glasses") return TaskHead::exclusive(2);
  if (task == "beard") return TaskHead::exclusive(3);
  if (task == "mustache") return TaskHead::exclusive(3);
  if (task == "joint") return TaskHead::joint({7, 17, 2, 5, 2, 3, 3});
  if (task == "aam") {
    if (aam_dim < 3)
      throw ParameterError("aam head needs the target dimension (k + 2)");
    return TaskHead::regression(aam_dim);
  }
  throw ParameterError("unknown task '" + task + "'");
}

std::vector<LayerSpec> build_network_specs(const RunConfig& config,
                                           const TaskHead& head) {
  // conv ladder: extra layers replicate the second conv, the last conv and
  // the FC layer keep their position
  struct ConvPlan {
    int maps, kernel;
  };
  std::vector<ConvPlan> plan;
  switch (config.depth) {
    case 1: plan = {{64, 5}}; break;
    case 2: plan = {{64, 5}, {128, 4}}; break;
    case 3: plan = {{64, 5}, {64, 5}, {128, 4}}; break;
    case 4: plan = {{64, 5}, {64, 5}, {64, 5}, {128, 4}}; break;
    case 5: plan = {{64, 5}, {64, 5}, {64, 5}, {64, 5}, {128, 4}}; break;
    default: throw ParameterError("depth must be 1..5");
  }
  const auto scaled = [&](int maps) {
    return std::max(1, int(std::lround(maps * config.width)));
  };
  const auto mask_at = [](const std::string& mask, std::size_t i) {
    return i < mask.size() && mask[i] == '1';
  };
  // masks may be shorter or longer than the stack, but every '1' must land
  // on an existing conv layer
  for (const std::string* mask : {&config.lcn_placement, &config.pool_placement}) {
    for (std::size_t i = plan.size(); i < mask->size(); ++i) {
      if ((*mask)[i] == '1') {
        throw ParameterError("placement mask '" + *mask +
                             "' addresses conv layer " + std::to_string(i + 1) +
                             " but depth is " + std::to_string(config.depth));
      }
    }
  }

  std::vector<LayerSpec> specs;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    specs.push_back(ConvSpec{scaled(plan[i].maps), plan[i].kernel,
                             plan[i].kernel, 1});
    specs.push_back(ReluSpec{});
    if (mask_at(config.lcn_placement, i)) specs.push_back(LcnSpec{});
    if (mask_at(config.pool_placement, i)) specs.push_back(MaxPoolSpec{3, 2});
    if (config.dropout_conv > 0)
      specs.push_back(DropoutSpec{float(config.dropout_conv)});
  }
  specs.push_back(FullyConnectedSpec{std::max(1, int(std::lround(3072 * config.width)))});
  specs.push_back(ReluSpec{});
  if (config.dropout_fc > 0)
    specs.push_back(DropoutSpec{float(config.dropout_fc)});
  specs.push_back(head.output_layer());
  return specs;
}

// ---------------------------------------------------------------------------
// Dataset loading

namespace {

std::string join_path(const std::string& dir, const std::string& name) {
  if (dir.empty() || fs::path(name).is_absolute()) return name;
  return (fs::path(dir) / name).string();
}

bool has_task_labels(const ManifestRow& row, const std::string& task) {
  if (task == "emotion") return row.emotion.has_value();
  if (task == "age") return row.age.has_value();
  if (task == "gender") return row.gender.has_value();
  if (task == "ethnicity") return row.ethnicity.has_value();
  if (task == "glasses") return row.glasses.has_value();
  if (task == "beard") return row.beard.has_value();
  if (task == "mustache") return row.mustache.has_value();
  if (task == "joint") {
    return row.emotion && row.age && row.gender && row.ethnicity &&
           row.glasses && row.beard && row.mustache;
  }
  if (task == "aam") return row.target.has_value();
  return false;
}

void fill_labels(Sample& sample, const ManifestRow& row,
                 const std::string& task, int aam_dim) {
  if (task == "emotion") sample.label = *row.emotion;
  else if (task == "age") sample.label = *row.age;
  else if (task == "gender") sample.label = *row.gender;
  else if (task == "ethnicity") sample.label = *row.ethnicity;
  else if (task == "glasses") sample.label = *row.glasses;
  else if (task == "beard") sample.label = *row.beard;
  else if (task == "mustache") sample.label = *row.mustache;
  else if (task == "joint") {
    sample.block_labels = {*row.emotion, *row.age,     *row.gender,
                           *row.ethnicity, *row.glasses, *row.beard,
                           *row.mustache};
  } else if (task == "aam") {
    if (int(row.target->size()) != aam_dim)
      throw DataError("manifest row '" + row.image +
                      "': regression target length " +
                      std::to_string(row.target->size()) +
                      " differs from the first row's " +
                      std::to_string(aam_dim));
    sample.target.assign(row.target->begin(), row.target->end());
    // pose angles train in units of 30 degrees so their scale matches the
    // std-normalized appearance coefficients
    sample.target[aam_dim - 2] /= 30.0f;
    sample.target[aam_dim - 1] /= 30.0f;
  }
}

Tensorf load_face_image(const std::string& path, int input_size) {
  Tensorf img = read_pgm(path);
  if (img.dim(0) != input_size || img.dim(1) != input_size)
    img = resize_bilinear(img, input_size, input_size);
  return img;
}

}  // namespace

LoadedData load_task_dataset(const RunConfig& config) {
  if (config.data.empty()) throw DataError("config has no data= path");
  LoadedData out;

  const bool is_csv = config.data.size() > 4 &&
                      config.data.substr(config.data.size() - 4) == ".csv";
  std::vector<Tensorf> images;   // raw, resized to input_size
  std::vector<Sample> skeletons; // labels only
  std::vector<std::size_t> train_idx, valid_idx, test_idx;

  if (is_csv) {
    if (config.task != "emotion")
      throw DataError("FER-style csv data only carries emotion labels");
    auto records = parse_fer_csv(config.data);
    if (records.empty()) throw DataError(config.data + ": no rows");
    for (std::size_t i = 0; i < records.size(); ++i) {
      Tensorf img = records[i].image;
      if (config.input_size != 48)
        img = resize_bilinear(img, config.input_size, config.input_size);
      images.push_back(std::move(img));
      Sample s;
      s.label = records[i].emotion;
      skeletons.push_back(std::move(s));
      switch (records[i].usage) {  // the dataset's own split tags
        case FerUsage::Training: train_idx.push_back(i); break;
        case FerUsage::PublicTest: valid_idx.push_back(i); break;
        case FerUsage::PrivateTest: test_idx.push_back(i); break;
      }
    }
    if (train_idx.empty() || valid_idx.empty() || test_idx.empty())
      throw DataError(config.data + ": a usage split is empty");
  } else {
    auto rows = read_manifest(config.data);
    std::vector<ManifestRow> usable;
    for (auto& row : rows)
      if (has_task_labels(row, config.task)) usable.push_back(std::move(row));
    if (usable.empty())
      throw DataError(config.data + ": no rows carry labels for task '" +
                      config.task + "'");
    if (config.task == "aam") out.aam_dim = int(usable.front().target->size());
    for (const auto& row : usable) {
      images.push_back(load_face_image(join_path(config.images_dir, row.image),
                                       config.input_size));
      Sample s;
      fill_labels(s, row, config.task, out.aam_dim);
      skeletons.push_back(std::move(s));
    }
    const SplitIndices split =
        split_dataset(usable.size(), config.split, config.train.seed);
    train_idx = split.train;
    valid_idx = split.valid;
    test_idx = split.test;
  }

  // gcn first, then per-pixel standardization fitted on the train split only
  for (auto& img : images) img = gcn_image(img);
  PixelStats stats;
  if (!config.stats_path.empty()) {
    stats = load_pixel_stats(config.stats_path);
    if (stats.mean.shape() != images.front().shape())
      throw DimensionError("stats " + config.stats_path + " are " +
                           stats.mean.shape().str() + ", images are " +
                           images.front().shape().str());
  } else {
    std::vector<Tensorf> train_images;
    train_images.reserve(train_idx.size());
    for (std::size_t i : train_idx) train_images.push_back(images[i]);
    stats = fit_pixel_stats(train_images, config.data);
  }

  const auto emit = [&](const std::vector<std::size_t>& idx, Dataset& dst) {
    dst.reserve(idx.size());
    for (std::size_t i : idx) {
      Sample s = skeletons[i];
      s.image = apply_pixel_stats(images[i], stats)
                    .reshaped(Shape{1, config.input_size, config.input_size});
      dst.push_back(std::move(s));
    }
  };
  emit(train_idx, out.train);
  emit(valid_idx, out.valid);
  emit(test_idx, out.test);
  return out;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir);
}

void write_outputs_manifest(const std::string& out_dir,
                            std::vector<std::string> files) {
  std::sort(files.begin(), files.end());
  std::string text;
  for (const auto& f : files) text += f + "\n";
  write_text_file(join_path(out_dir, "outputs.txt"), text);
}

std::vector<std::string> layer_shape_lines(const std::vector<LayerSpec>& specs,
                                           Shape input_shape) {
  const auto shapes = infer_shapes(specs, input_shape);
  std::vector<std::string> lines;
  lines.push_back("input: " + input_shape.str());
  for (std::size_t i = 0; i < specs.size(); ++i)
    lines.push_back(layer_name(specs[i]) + " -> " + shapes[i].str());
  return lines;
}

std::vector<int> argmax_rows(const Tensorf& outputs, int offset, int k) {
  std::vector<int> preds(outputs.dim(0));
  for (int i = 0; i < outputs.dim(0); ++i) {
    const float* row = outputs.data() + std::size_t(i) * outputs.dim(1) + offset;
    preds[i] = int(std::max_element(row, row + k) - row);
  }
  return preds;
}

double held_out_accuracy(const Tensorf& outputs, const Dataset& set,
                         const TaskHead& head) {
  if (head.kind == TaskHead::Kind::Regression) return 0.0;
  if (head.kind == TaskHead::Kind::Exclusive) {
    const auto preds = argmax_rows(outputs, 0, head.classes);
    int correct = 0;
    for (std::size_t i = 0; i < set.size(); ++i)
      correct += preds[i] == set[i].label;
    return double(correct) / set.size();
  }
  // joint: mean per-block accuracy
  double sum = 0.0;
  int offset = 0;
  for (std::size_t b = 0; b < head.block_sizes.size(); ++b) {
    const auto preds = argmax_rows(outputs, offset, head.block_sizes[b]);
    int correct = 0;
    for (std::size_t i = 0; i < set.size(); ++i)
      correct += preds[i] == set[i].block_labels[b];
    sum += double(correct) / set.size();
    offset += head.block_sizes[b];
  }
  return sum / double(head.block_sizes.size());
}

}  // namespace

CommandResult run_preprocess(const PreprocessOptions& opts) {
  CommandResult result;
  ensure_dir(opts.out_dir);
  ensure_dir(join_path(opts.out_dir, "images"));
  auto rows = read_manifest(opts.manifest_path);
  if (rows.empty()) throw DataError(opts.manifest_path + ": no rows");

  std::vector<ManifestRow> out_rows;
  std::vector<Tensorf> processed;  // quantized aligned images, written bytes
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      Tensorf img = read_pgm(join_path(opts.images_dir, rows[i].image));
      Tensorf aligned;
      if (opts.align) {
        if (!rows[i].eyes)
          throw AnnotationError("row " + std::to_string(i + 1) + " ('" +
                                rows[i].image + "'): missing eye landmarks");
        aligned = align_face(img, *rows[i].eyes, opts.size);
      } else if (img.dim(0) != opts.size || img.dim(1) != opts.size) {
        aligned = resize_bilinear(img, opts.size, opts.size);
      } else {
        aligned = img;
      }
      // quantize exactly as the PGM writer will
      Tensorf quantized(aligned.shape());
      for (long long p = 0; p < aligned.size(); ++p)
        quantized[p] = std::min(255.0f, std::max(0.0f, std::round(aligned[p])));

      const std::string name =
          fs::path(rows[i].image).stem().string() + ".pgm";
      write_pgm(quantized, join_path(join_path(opts.out_dir, "images"), name));
      result.files.push_back("images/" + name);
      processed.push_back(std::move(quantized));

      ManifestRow out_row = rows[i];
      out_row.image = "images/" + name;
      out_row.eyes.reset();  // consumed by alignment
      out_rows.push_back(std::move(out_row));
    } catch (const Error& e) {
      std::cerr << "preprocess: " << e.what() << "\n";
      ++result.failures;
    }
  }
  if (processed.empty()) throw DataError("every row failed preprocessing");

  write_manifest(out_rows, join_path(opts.out_dir, "manifest.tsv"));
  result.files.push_back("manifest.tsv");

  if (opts.fit_stats) {
    const SplitIndices split =
        split_dataset(processed.size(), opts.fractions, opts.split_seed);
    std::vector<Tensorf> train_images;
    for (std::size_t i : split.train)
      train_images.push_back(gcn_image(processed[i]));
    const PixelStats stats = fit_pixel_stats(train_images, opts.manifest_path);
    save_pixel_stats(stats, join_path(opts.out_dir, "stats.fst"));
    result.files.push_back("stats.fst");
  } else if (!opts.stats_path.empty()) {
    const PixelStats stats = load_pixel_stats(opts.stats_path);
    if (stats.mean.dim(0) != opts.size || stats.mean.dim(1) != opts.size) {
      throw DimensionError("stats " + opts.stats_path + " are " +
                           stats.mean.shape().str() + ", preprocessing to " +
                           std::to_string(opts.size) + "x" +
                           std::to_string(opts.size));
    }
  }
  write_outputs_manifest(opts.out_dir, result.files);
  return result;
}

CommandResult run_train(const RunConfig& config) {
  CommandResult result;
  ensure_dir(config.out_dir);
  LoadedData data = load_task_dataset(config);
  const TaskHead head = head_for_task(config.task, data.aam_dim);
  const std::vector<LayerSpec> specs = build_network_specs(config, head);
  const Shape input_shape{1, config.input_size, config.input_size};

  const auto header = layer_shape_lines(specs, input_shape);
  for (const auto& line : header) std::cout << line << "\n";

  auto net = init_network<float>(specs, input_shape, config.train.seed);
  auto trained = train(std::move(net), head, data.train, data.valid, config.train);

  save_model(trained.net, join_path(config.out_dir, "model.fgr"));
  write_train_log_csv(trained.log, join_path(config.out_dir, "trainlog.csv"),
                      header);
  result.files = {"model.fgr", "trainlog.csv"};
  write_outputs_manifest(config.out_dir, result.files);

  const auto& best = trained.log.rows[trained.log.best_epoch];
  result.headline = best.valid_criterion;
  std::cout << "best epoch " << best.epoch << ": validation criterion "
            << format_double(best.valid_criterion) << "\n";
  return result;
}

CommandResult run_eval(const std::string& model_path, const RunConfig& config,
                       const std::string& split) {
  CommandResult result;
  ensure_dir(config.out_dir);
  auto net = load_model(model_path);
  RunConfig data_config = config;
  data_config.input_size = net.input_shape[1];
  LoadedData data = load_task_dataset(data_config);
  const Dataset& set = split == "train"   ? data.train
                       : split == "valid" ? data.valid
                                          : data.test;
  if (set.empty()) throw DataError("split '" + split + "' is empty");
  const TaskHead head = head_for_task(config.task, data.aam_dim);
  auto eval = evaluate(net, head, set);

  const auto save = [&](const std::string& name, const std::string& text) {
    write_text_file(join_path(config.out_dir, name), text);
    result.files.push_back(name);
  };

  if (head.kind == TaskHead::Kind::Regression) {
    const int k = head.dim - 2;
    double cos_sum = 0.0;
    std::vector<std::pair<float, float>> pred_pose, true_pose;
    for (std::size_t i = 0; i < set.size(); ++i) {
      const float* row = eval.outputs.data() + i * head.dim;
      std::vector<float> pred(row, row + k);
      std::vector<float> truth(set[i].target.begin(),
                               set[i].target.begin() + k);
      cos_sum += cosine_similarity(pred, truth);
      pred_pose.push_back({row[k] * 30.0f, row[k + 1] * 30.0f});
      true_pose.push_back(
          {set[i].target[k] * 30.0f, set[i].target[k + 1] * 30.0f});
    }
    const double mean_cos = cos_sum / double(set.size());
    const PoseError pose = pose_error(pred_pose, true_pose);
    std::string csv = "metric,value\n";
    csv += "mean_cosine_similarity," + format_double(mean_cos) + "\n";
    csv += "yaw_mae_deg," + format_double(pose.yaw_mae_deg) + "\n";
    csv += "pitch_mae_deg," + format_double(pose.pitch_mae_deg) + "\n";
    save("aam_metrics.csv", csv);
    result.headline = mean_cos;
    std::cout << "cosine similarity " << format_double(mean_cos) << ", pose MAE "
              << format_double(pose.yaw_mae_deg) << "/"
              << format_double(pose.pitch_mae_deg) << " deg\n";
  } else if (head.kind == TaskHead::Kind::Exclusive) {
    std::vector<int> truths(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) truths[i] = set[i].label;
    const auto preds = argmax_rows(eval.outputs, 0, head.classes);
    const auto report = confusion_and_precision(preds, truths, head.classes);
    save("confusion.csv", confusion_to_csv(report.confusion));
    save("precision.csv", precision_to_csv(report));
    std::string aucs = "class,auc\n";
    for (int c = 0; c < head.classes; ++c) {
      try {
        const auto roc = roc_auc(eval.outputs, truths, c);
        save("roc_class" + std::to_string(c) + ".csv", roc_to_csv(roc));
        aucs += std::to_string(c) + "," + format_double(roc.auc) + "\n";
      } catch (const MetricError&) {
        aucs += std::to_string(c) + ",-\n";  // class absent from this split
      }
    }
    save("auc.csv", aucs);
    if (config.task == "age") {
      const auto ages = age_resolution_accuracy(preds, truths);
      std::string csv = "resolution,accuracy\n";
      csv += "exact_bin," + format_double(ages.exact_bin) + "\n";
      csv += "adjacent_bin," + format_double(ages.adjacent_bin) + "\n";
      save("age_resolution.csv", csv);
    }
    result.headline = report.accuracy;
    std::cout << "accuracy " << format_double(report.accuracy)
              << ", average precision " << format_double(report.average_precision)
              << "\n";
  } else {  // joint
    std::string summary = "block,classes,accuracy\n";
    static const char* kBlockNames[] = {"emotion", "age",     "gender",
                                        "ethnicity", "glasses", "beard",
                                        "mustache"};
    int offset = 0;
    double mean_acc = 0.0;
    for (std::size_t b = 0; b < head.block_sizes.size(); ++b) {
      const int k = head.block_sizes[b];
      std::vector<int> truths(set.size());
      for (std::size_t i = 0; i < set.size(); ++i)
        truths[i] = set[i].block_labels[b];
      const auto preds = argmax_rows(eval.outputs, offset, k);
      const auto report = confusion_and_precision(preds, truths, k);
      save("confusion_" + std::string(kBlockNames[b]) + ".csv",
           confusion_to_csv(report.confusion));
      summary += std::string(kBlockNames[b]) + "," + std::to_string(k) + "," +
                 format_double(report.accuracy) + "\n";
      mean_acc += report.accuracy;
      offset += k;
    }
    mean_acc /= double(head.block_sizes.size());
    summary += "mean,-," + format_double(mean_acc) + "\n";
    save("joint_accuracy.csv", summary);
    result.headline = mean_acc;
    std::cout << "mean per-block accuracy " << format_double(mean_acc) << "\n";
  }
  write_outputs_manifest(config.out_dir, result.files);
  return result;
}

CommandResult run_sweep(const RunConfig& config, const std::string& axes) {
  CommandResult result;
  ensure_dir(config.out_dir);

  struct Point {
    RunConfig config;
    std::string label;  // axis values, comma separated
  };
  std::vector<Point> grid;
  std::string axis_header;

  if (axes == "depth_width") {
    axis_header = "depth,width";
    for (int d : config.sweep_depths)
      for (double w : config.sweep_widths) {
        Point p{config, std::to_string(d) + "," + format_double(w)};
        p.config.depth = d;
        p.config.width = w;
        grid.push_back(std::move(p));
      }
  } else if (axes == "lcn_pool") {
    axis_header = "lcn,pool";
    for (const auto& lcn : config.sweep_lcn)
      for (const auto& pool : config.sweep_pool) {
        Point p{config, lcn + "," + pool};
        p.config.lcn_placement = lcn;
        p.config.pool_placement = pool;
        grid.push_back(std::move(p));
      }
  } else if (axes == "dropout") {
    axis_header = "dropout_conv,dropout_fc";
    for (double dc : config.sweep_dropout_conv)
      for (double dfc : config.sweep_dropout_fc) {
        Point p{config, format_double(dc) + "," + format_double(dfc)};
        p.config.dropout_conv = dc;
        p.config.dropout_fc = dfc;
        grid.push_back(std::move(p));
      }
  } else if (axes == "input_size") {
    axis_header = "input_size";
    for (int s : config.sweep_sizes) {
      Point p{config, std::to_string(s)};
      p.config.input_size = s;
      grid.push_back(std::move(p));
    }
  } else {
    throw ParameterError("unknown sweep axes '" + axes +
                         "' (depth_width|lcn_pool|dropout|input_size)");
  }

  struct Row {
    std::string text;
    bool failed = false;
  };
  std::vector<Row> rows(grid.size());

  // Points run independently (possibly in parallel); rows are assembled in
  // grid order afterwards, so the CSV is stable however they complete.
  parallel_for(grid.size(), [&](std::size_t i) {
    RunConfig point = grid[i].config;
    point.train.seed = config.train.seed * 1000003ull + i;  // independent run
    const auto start = std::chrono::steady_clock::now();
    try {
      LoadedData data = load_task_dataset(point);
      const TaskHead head = head_for_task(point.task, data.aam_dim);
      const auto specs = build_network_specs(point, head);
      auto net = init_network<float>(
          specs, Shape{1, point.input_size, point.input_size},
          point.train.seed);
      auto trained = train(std::move(net), head, data.train, data.valid,
                           point.train);
      auto eval = evaluate(trained.net, head, data.test);
      double score;
      if (head.kind == TaskHead::Kind::Regression) {
        TargetBatch<float> targets;
        targets.values = Tensorf(Shape{int(data.test.size()), head.dim});
        for (std::size_t s = 0; s < data.test.size(); ++s)
          for (int d = 0; d < head.dim; ++d)
            targets.values[s * head.dim + d] = data.test[s].target[d];
        score = mse_loss(eval.outputs, targets.values).loss;
      } else {
        score = held_out_accuracy(eval.outputs, data.test, head);
      }
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
              .count();
      rows[i].text = grid[i].label + "," + format_double(score) + "," +
                     format_double(secs) + ",ok";
    } catch (const std::exception& e) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
              .count();
      std::cerr << "sweep point " << i << " (" << grid[i].label
                << ") failed: " << e.what() << "\n";
      rows[i].text = grid[i].label + ",-," + format_double(secs) + ",failed";
      rows[i].failed = true;
    }
  });

  std::string csv = axis_header + ",test_score,runtime_s,status\n";
  for (const auto& row : rows) {
    csv += row.text + "\n";
    result.failures += row.failed;
  }
  write_text_file(join_path(config.out_dir, "sweep.csv"), csv);
  result.files = {"sweep.csv"};
  write_outputs_manifest(config.out_dir, result.files);
  return result;
}

CommandResult run_weightsim(const std::vector<std::string>& model_paths,
                            const std::string& out_dir) {
  if (model_paths.size() < 2)
    throw ParameterError("weightsim needs at least 2 models");
  CommandResult result;
  ensure_dir(out_dir);
  std::vector<NetworkState<float>> nets;
  nets.reserve(model_paths.size());
  for (const auto& path : model_paths) nets.push_back(load_model(path));
  std::vector<std::pair<std::string, const NetworkState<float>*>> named;
  for (std::size_t i = 0; i < nets.size(); ++i)
    named.push_back({fs::path(model_paths[i]).stem().string(), &nets[i]});

  for (const auto mode : {SimilarityMode::Flat, SimilarityMode::Matched}) {
    const std::string tag = mode == SimilarityMode::Flat ? "flat" : "matched";
    const auto table = first_layer_similarity(named, mode);
    write_text_file(join_path(out_dir, "similarity_" + tag + ".csv"),
                    similarity_to_csv(table));
    write_pgm(similarity_heatmap(table),
              join_path(out_dir, "similarity_" + tag + ".pgm"));
    result.files.push_back("similarity_" + tag + ".csv");
    result.files.push_back("similarity_" + tag + ".pgm");
  }
  write_outputs_manifest(out_dir, result.files);
  return result;
}

CommandResult run_aamgen(const AamGenOptions& opts) {
  CommandResult result;
  ensure_dir(opts.out_dir);
  auto rows = read_manifest(opts.manifest_path);
  if (rows.size() < 2)
    throw DataError(opts.manifest_path + ": PCA needs at least 2 corpus rows");
  std::vector<Tensorf> corpus;
  corpus.reserve(rows.size());
  for (const auto& row : rows)
    corpus.push_back(
        load_face_image(join_path(opts.images_dir, row.image), opts.size));

  const AppearanceModel model = fit_pca(corpus, opts.variance_target);
  save_appearance_model(model, join_path(opts.out_dir, "appearance.fam"));
  result.files.push_back("appearance.fam");
  std::cout << "appearance model: k = " << model.k << " components\n";

  if (opts.count > 0) {
    ensure_dir(join_path(opts.out_dir, "images"));
    SeededRng rng(opts.seed);
    auto samples = sample_synthetic(model, rng, opts.count);
    std::vector<ManifestRow> out_rows;
    for (int i = 0; i < opts.count; ++i) {
      // quantize the unwarped face to the 8-bit grid first and take the
      // ground truth from the quantized face; the emitted frontal image then
      // carries zero modeling error
      Tensorf face = decode(model, samples[i].target.coeffs);
      for (long long p = 0; p < face.size(); ++p)
        face[p] = std::min(255.0f, std::max(0.0f, std::round(face[p])));
      const std::vector<float> gt = encode(model, face);

      Tensorf emitted = face;
      if (samples[i].target.yaw_deg != 0.0f ||
          samples[i].target.pitch_deg != 0.0f) {
        emitted = pose_warp(face, samples[i].target.yaw_deg,
                            samples[i].target.pitch_deg);
        for (long long p = 0; p < emitted.size(); ++p)
          emitted[p] = std::min(255.0f, std::max(0.0f, std::round(emitted[p])));
      }
      char name[32];
      std::snprintf(name, sizeof name, "synth_%05d.pgm", i);
      write_pgm(emitted, join_path(join_path(opts.out_dir, "images"), name));
      result.files.push_back(std::string("images/") + name);

      ManifestRow row;
      row.image = std::string("images/") + name;
      std::vector<float> target = gt;
      target.push_back(samples[i].target.yaw_deg);
      target.push_back(samples[i].target.pitch_deg);
      row.target = std::move(target);
      out_rows.push_back(std::move(row));
    }
    write_manifest(out_rows, join_path(opts.out_dir, "synthetic.tsv"));
    result.files.push_back("synthetic.tsv");

    // encode-check against the emitted artifacts: reload model and manifest
    // from disk, render each stored target frontally and re-encode
    const AppearanceModel reloaded =
        load_appearance_model(join_path(opts.out_dir, "appearance.fam"));
    const auto written = read_manifest(join_path(opts.out_dir, "synthetic.tsv"));
    float max_recovery_err = 0.0f;
    const std::size_t check_rows = std::min<std::size_t>(written.size(), 64);
    for (std::size_t i = 0; i < check_rows; ++i) {
      const std::vector<float> coeffs(written[i].target->begin(),
                                      written[i].target->end() - 2);
      const auto recovered = encode(reloaded, decode(reloaded, coeffs));
      for (int c = 0; c < reloaded.k; ++c)
        max_recovery_err =
            std::max(max_recovery_err, std::abs(recovered[c] - coeffs[c]));
    }
    result.headline = max_recovery_err;
    std::cout << "emitted " << opts.count
              << " synthetic faces; frontal coefficient recovery error "
              << format_double(max_recovery_err) << "\n";
  }
  write_outputs_manifest(opts.out_dir, result.files);
  return result;
}

}  // namespace fgr
