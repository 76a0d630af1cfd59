#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fgr/network.hpp"
#include "fgr/tensor.hpp"

namespace fgr {

// rows = true class, columns = predicted class
struct ConfusionMatrix {
  int k = 0;
  std::vector<long long> counts;  // k x k row-major

  long long& at(int truth, int pred) { return counts[truth * k + pred]; }
  long long at(int truth, int pred) const { return counts[truth * k + pred]; }
  long long total() const {
    long long t = 0;
    for (long long c : counts) t += c;
    return t;
  }
};

struct ClassificationReport {
  ConfusionMatrix confusion;
  // Precision per class; classes that were never predicted are absent and
  // excluded from the average.
  std::vector<std::optional<double>> precision;
  double average_precision = 0.0;
  double accuracy = 0.0;
};

inline ClassificationReport confusion_and_precision(
    const std::vector<int>& preds, const std::vector<int>& truths, int k) {
  if (preds.size() != truths.size()) {
    throw DimensionError("confusion: prediction/truth length mismatch");
  }
  ClassificationReport report;
  report.confusion.k = k;
  report.confusion.counts.assign(static_cast<std::size_t>(k) * k, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= k || truths[i] < 0 || truths[i] >= k) {
      throw LabelError("class index out of range at sample " + std::to_string(i));
    }
    ++report.confusion.at(truths[i], preds[i]);
  }
  report.precision.resize(k);
  double sum = 0.0;
  int defined = 0;
  long long correct = 0;
  for (int c = 0; c < k; ++c) {
    long long tp = report.confusion.at(c, c), predicted = 0;
    for (int t = 0; t < k; ++t) predicted += report.confusion.at(t, c);
    correct += tp;
    if (predicted > 0) {
      report.precision[c] = static_cast<double>(tp) / predicted;
      sum += *report.precision[c];
      ++defined;
    }
  }
  report.average_precision = defined > 0 ? sum / defined : 0.0;
  report.accuracy = preds.empty() ? 0.0
                                  : static_cast<double>(correct) /
                                        static_cast<double>(preds.size());
  return report;
}

struct RocPoint {
  double fpr, tpr, threshold;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

// One-vs-all ROC for class c over per-class probability rows; thresholds at
// every distinct score with ties grouped, trapezoidal AUC.
template <typename S>
RocCurve roc_auc(const Tensor<S>& scores, const std::vector<int>& truths,
                 int positive_class) {
  if (scores.rank() != 2 ||
      scores.dim(0) != static_cast<int>(truths.size())) {
    throw DimensionError("roc_auc expects (n, classes) scores with n truths");
  }
  const int n = scores.dim(0), k = scores.dim(1);
  if (positive_class < 0 || positive_class >= k) {
    throw LabelError("positive class out of range");
  }
  long long positives = 0;
  std::vector<std::pair<double, int>> ranked(n);  // (score, is_positive)
  for (int i = 0; i < n; ++i) {
    const bool pos = truths[i] == positive_class;
    positives += pos;
    ranked[i] = {static_cast<double>(
                     scores[static_cast<long long>(i) * k + positive_class]),
                 pos ? 1 : 0};
  }
  const long long negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw MetricError("AUC undefined: truth vector contains a single class");
  }
  std::sort(ranked.begin(), ranked.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  long long tp = 0, fp = 0;
  double auc = 0.0, prev_fpr = 0.0, prev_tpr = 0.0;
  std::size_t i = 0;
  while (i < ranked.size()) {
    const double score = ranked[i].first;
    while (i < ranked.size() && ranked[i].first == score) {
      tp += ranked[i].second;
      fp += 1 - ranked[i].second;
      ++i;
    }
    const double fpr = static_cast<double>(fp) / negatives;
    const double tpr = static_cast<double>(tp) / positives;
    auc += 0.5 * (fpr - prev_fpr) * (tpr + prev_tpr);
    curve.points.push_back({fpr, tpr, score});
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  curve.auc = auc;
  return curve;
}

struct AgeResolutionAccuracy {
  double exact_bin;     // +-2.5 years: predicted bin equals the true bin
  double adjacent_bin;  // +-5 years: at most one bin away
};

inline constexpr int kAgeBins = 17;

inline AgeResolutionAccuracy age_resolution_accuracy(
    const std::vector<int>& preds, const std::vector<int>& truths) {
  if (preds.size() != truths.size() || preds.empty()) {
    throw DimensionError("age accuracy needs equal, non-empty inputs");
  }
  long long exact = 0, adjacent = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= kAgeBins || truths[i] < 0 ||
        truths[i] >= kAgeBins) {
      throw LabelError("age bin out of range at sample " + std::to_string(i));
    }
    exact += preds[i] == truths[i];
    adjacent += std::abs(preds[i] - truths[i]) <= 1;
  }
  const double n = static_cast<double>(preds.size());
  return {exact / n, adjacent / n};
}

struct PoseError {
  double yaw_mae_deg;
  double pitch_mae_deg;
};

inline PoseError pose_error(const std::vector<std::pair<float, float>>& pred,
                            const std::vector<std::pair<float, float>>& truth) {
  if (pred.size() != truth.size() || pred.empty()) {
    throw DimensionError("pose_error needs equal, non-empty inputs");
  }
  double yaw = 0.0, pitch = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    yaw += std::abs(double(pred[i].first) - truth[i].first);
    pitch += std::abs(double(pred[i].second) - truth[i].second);
  }
  return {yaw / pred.size(), pitch / pred.size()};
}

// ---------------------------------------------------------------------------
// First-layer weight similarity across task-specific networks

struct SimilarityTable {
  std::vector<std::string> names;
  std::vector<double> scores;  // n x n, symmetric, unit diagonal

  double at(std::size_t i, std::size_t j) const {
    return scores[i * names.size() + j];
  }
};

enum class SimilarityMode { Flat, Matched };

namespace detail {

inline double flat_cosine(const Tensorf& a, const Tensorf& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (long long i = 0; i < a.size(); ++i) {
    dot += double(a[i]) * b[i];
    na += double(a[i]) * a[i];
    nb += double(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0)
    throw MetricError("similarity undefined for zero weights");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Greedy one-to-one filter matching by cosine; the score is the mean over
// matched pairs. Deterministic: ties resolve to the lowest index pair.
inline double matched_cosine(const Tensorf& a, const Tensorf& b) {
  const int filters = a.dim(0);
  const long long stride = a.size() / filters;
  std::vector<double> cos(static_cast<std::size_t>(filters) * filters);
  for (int i = 0; i < filters; ++i) {
    for (int j = 0; j < filters; ++j) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      const float* fa = a.data() + i * stride;
      const float* fb = b.data() + j * stride;
      for (long long p = 0; p < stride; ++p) {
        dot += double(fa[p]) * fb[p];
        na += double(fa[p]) * fa[p];
        nb += double(fb[p]) * fb[p];
      }
      cos[static_cast<std::size_t>(i) * filters + j] =
          (na == 0.0 || nb == 0.0) ? 0.0 : dot / (std::sqrt(na) * std::sqrt(nb));
    }
  }
  std::vector<bool> used_a(filters, false), used_b(filters, false);
  double sum = 0.0;
  for (int round = 0; round < filters; ++round) {
    double best = -2.0;
    int bi = -1, bj = -1;
    for (int i = 0; i < filters; ++i) {
      if (used_a[i]) continue;
      for (int j = 0; j < filters; ++j) {
        if (used_b[j]) continue;
        const double c = cos[static_cast<std::size_t>(i) * filters + j];
        if (c > best) {
          best = c;
          bi = i;
          bj = j;
        }
      }
    }
    used_a[bi] = true;
    used_b[bj] = true;
    sum += best;
  }
  return sum / filters;
}

template <typename S>
const Tensor<S>& first_layer_weights(const NetworkState<S>& net) {
  for (int i = 0; i < net.num_layers(); ++i) {
    if (!net.weights[i].empty()) return net.weights[i];
  }
  throw ParameterError("network has no parameterized layers");
}

}  // namespace detail

inline SimilarityTable first_layer_similarity(
    const std::vector<std::pair<std::string, const NetworkState<float>*>>& nets,
    SimilarityMode mode) {
  if (nets.size() < 2) throw ParameterError("similarity needs >= 2 networks");
  const std::size_t n = nets.size();
  const Shape ref = detail::first_layer_weights(*nets[0].second).shape();
  for (const auto& [name, net] : nets) {
    if (detail::first_layer_weights(*net).shape() != ref) {
      throw DimensionError("first-layer shape mismatch for '" + name + "': " +
                           detail::first_layer_weights(*net).shape().str() +
                           " vs " + ref.str());
    }
  }
  SimilarityTable table;
  table.names.reserve(n);
  for (const auto& [name, net] : nets) table.names.push_back(name);
  table.scores.assign(n * n, 1.0);
  // computed once per unordered pair, so the table is exactly symmetric
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const Tensorf& a = detail::first_layer_weights(*nets[i].second);
      const Tensorf& b = detail::first_layer_weights(*nets[j].second);
      const double score = mode == SimilarityMode::Flat
                               ? detail::flat_cosine(a, b)
                               : detail::matched_cosine(a, b);
      table.scores[i * n + j] = score;
      table.scores[j * n + i] = score;
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// CSV / PGM renderings

inline std::string confusion_to_csv(const ConfusionMatrix& m) {
  std::string out = "truth\\pred";
  for (int c = 0; c < m.k; ++c) out += "," + std::to_string(c);
  out += "\n";
  for (int t = 0; t < m.k; ++t) {
    out += std::to_string(t);
    for (int c = 0; c < m.k; ++c) out += "," + std::to_string(m.at(t, c));
    out += "\n";
  }
  return out;
}

std::string format_double(double v);  // io.cpp: shortest stable form

inline std::string precision_to_csv(const ClassificationReport& report) {
  std::string out = "class,precision\n";
  for (int c = 0; c < report.confusion.k; ++c) {
    out += std::to_string(c) + ",";
    out += report.precision[c] ? format_double(*report.precision[c]) : "-";
    out += "\n";
  }
  out += "average," + format_double(report.average_precision) + "\n";
  out += "accuracy," + format_double(report.accuracy) + "\n";
  return out;
}

inline std::string roc_to_csv(const RocCurve& curve) {
  std::string out = "fpr,tpr,threshold\n";
  for (const auto& p : curve.points) {
    out += format_double(p.fpr) + "," + format_double(p.tpr) + "," +
           format_double(p.threshold) + "\n";
  }
  return out;
}

inline std::string similarity_to_csv(const SimilarityTable& table) {
  std::string out = "task";
  for (const auto& n : table.names) out += "," + n;
  out += "\n";
  const std::size_t n = table.names.size();
  for (std::size_t i = 0; i < n; ++i) {
    out += table.names[i];
    for (std::size_t j = 0; j < n; ++j)
      out += "," + format_double(table.at(i, j));
    out += "\n";
  }
  return out;
}

// Grayscale heat map: one cell block per pair, [-1, 1] mapped to 0..255.
inline Tensorf similarity_heatmap(const SimilarityTable& table,
                                  int cell_px = 24) {
  const int n = static_cast<int>(table.names.size());
  Tensorf img(Shape{n * cell_px, n * cell_px});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const float v = static_cast<float>(
          std::round((table.at(i, j) + 1.0) * 0.5 * 255.0));
      for (int y = 0; y < cell_px; ++y)
        for (int x = 0; x < cell_px; ++x)
          img.at(i * cell_px + y, j * cell_px + x) = v;
    }
  return img;
}

}  // namespace fgr
