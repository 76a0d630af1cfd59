#include <cmath>

#include "doctest.h"
#include "fgr/metrics.hpp"

using namespace fgr;

TEST_SUITE("metrics") {

TEST_CASE("perfect predictions give a diagonal matrix and unit scores") {
  const std::vector<int> truths = {0, 1, 2, 0, 1, 2};
  auto report = confusion_and_precision(truths, truths, 3);
  for (int t = 0; t < 3; ++t)
    for (int p = 0; p < 3; ++p)
      CHECK(report.confusion.at(t, p) == (t == p ? 2 : 0));
  for (int c = 0; c < 3; ++c) CHECK(*report.precision[c] == doctest::Approx(1.0));
  CHECK(report.accuracy == doctest::Approx(1.0));
  CHECK(report.average_precision == doctest::Approx(1.0));
}

TEST_CASE("hand-built 3-class counts") {
  // confusion [[2,1,0],[0,2,0],[0,1,1]]
  const std::vector<int> truths = {0, 0, 0, 1, 1, 2, 2};
  const std::vector<int> preds = {0, 0, 1, 1, 1, 1, 2};
  auto report = confusion_and_precision(preds, truths, 3);
  CHECK(report.confusion.at(0, 0) == 2);
  CHECK(report.confusion.at(0, 1) == 1);
  CHECK(report.confusion.at(1, 1) == 2);
  CHECK(report.confusion.at(2, 1) == 1);
  CHECK(report.confusion.at(2, 2) == 1);
  CHECK(*report.precision[0] == doctest::Approx(1.0));
  CHECK(*report.precision[1] == doctest::Approx(0.5));
  CHECK(*report.precision[2] == doctest::Approx(1.0));
  CHECK(report.accuracy == doctest::Approx(5.0 / 7.0));

  // row sums equal per-class truth counts
  for (int t = 0; t < 3; ++t) {
    long long row = 0;
    for (int p = 0; p < 3; ++p) row += report.confusion.at(t, p);
    long long want = 0;
    for (int v : truths) want += v == t;
    CHECK(row == want);
  }
}

TEST_CASE("classes never predicted are absent and excluded from the average") {
  const std::vector<int> truths = {0, 1, 2};
  const std::vector<int> preds = {0, 1, 1};  // class 2 never predicted
  auto report = confusion_and_precision(preds, truths, 3);
  CHECK(!report.precision[2].has_value());
  CHECK(report.average_precision == doctest::Approx((1.0 + 0.5) / 2));
}

TEST_CASE("out-of-range class indices are label errors") {
  CHECK_THROWS_AS(confusion_and_precision({3}, {0}, 3), LabelError);
  CHECK_THROWS_AS(confusion_and_precision({0}, {-1}, 3), LabelError);
}

TEST_CASE("perfectly separating scores give AUC 1, reversed give 0") {
  Tensorf scores(Shape{4, 2}, {0.9f, 0.1f, 0.8f, 0.2f, 0.2f, 0.8f, 0.1f, 0.9f});
  const std::vector<int> truths = {0, 0, 1, 1};
  auto roc = roc_auc(scores, truths, 0);
  CHECK(roc.auc == doctest::Approx(1.0));
  CHECK(roc.points.front().fpr == doctest::Approx(0.0));
  CHECK(roc.points.back().tpr == doctest::Approx(1.0));

  // swap the columns: class-0 positives now score lowest
  Tensorf reversed(Shape{4, 2},
                   {0.1f, 0.9f, 0.2f, 0.8f, 0.8f, 0.2f, 0.9f, 0.1f});
  auto anti = roc_auc(reversed, truths, 0);
  CHECK(anti.auc == doctest::Approx(0.0));
}

TEST_CASE("label-independent scores give AUC 0.5 within 0.02 at 1e4 samples") {
  SeededRng rng(3);
  const int n = 10000;
  Tensorf scores(Shape{n, 2});
  std::vector<int> truths(n);
  for (int i = 0; i < n; ++i) {
    const float p = float(rng.uniform(0.0, 1.0));
    scores.at(i, 0) = p;
    scores.at(i, 1) = 1.0f - p;
    truths[i] = int(rng.below(2));  // independent of the score
  }
  auto roc = roc_auc(scores, truths, 0);
  CHECK(roc.auc == doctest::Approx(0.5).epsilon(0.04));
  CHECK(std::abs(roc.auc - 0.5) < 0.02);
}

TEST_CASE("single-class truth vector makes AUC undefined") {
  Tensorf scores(Shape{3, 2}, {0.9f, 0.1f, 0.8f, 0.2f, 0.7f, 0.3f});
  CHECK_THROWS_AS(roc_auc(scores, {0, 0, 0}, 0), MetricError);
}

TEST_CASE("AUC is invariant under strictly monotone score transforms") {
  SeededRng rng(5);
  const int n = 500;
  Tensorf scores(Shape{n, 2});
  Tensorf transformed(Shape{n, 2});
  std::vector<int> truths(n);
  for (int i = 0; i < n; ++i) {
    const double p = rng.uniform(0.01, 0.99);
    // t(p) = p^3 / (p^3 + (1-p)^3) is strictly monotone and keeps rows
    // summing to one
    const double q = 1.0 - p;
    const double t = p * p * p / (p * p * p + q * q * q);
    scores.at(i, 0) = float(p);
    scores.at(i, 1) = float(q);
    transformed.at(i, 0) = float(t);
    transformed.at(i, 1) = float(1.0 - t);
    truths[i] = rng.next_double() < p ? 0 : 1;
  }
  auto base = roc_auc(scores, truths, 0);
  auto mapped = roc_auc(transformed, truths, 0);
  CHECK(base.auc == doctest::Approx(mapped.auc).epsilon(1e-9));
}

TEST_CASE("age resolution accuracies") {
  const std::vector<int> truths = {3, 7, 11, 16};
  auto exact = age_resolution_accuracy(truths, truths);
  CHECK(exact.exact_bin == doctest::Approx(1.0));
  CHECK(exact.adjacent_bin == doctest::Approx(1.0));

  const std::vector<int> off = {4, 6, 12, 15};
  auto adjacent = age_resolution_accuracy(off, truths);
  CHECK(adjacent.exact_bin == doctest::Approx(0.0));
  CHECK(adjacent.adjacent_bin == doctest::Approx(1.0));

  CHECK_THROWS_AS(age_resolution_accuracy({17}, {0}), LabelError);

  SeededRng rng(7);
  std::vector<int> p(200), t(200);
  for (int i = 0; i < 200; ++i) {
    p[i] = int(rng.below(17));
    t[i] = int(rng.below(17));
  }
  auto acc = age_resolution_accuracy(p, t);
  CHECK(acc.adjacent_bin >= acc.exact_bin);
}

TEST_CASE("pose error hand cases") {
  const std::vector<std::pair<float, float>> truth = {{1, 2}, {-3, 4}, {5, -6}};
  auto zero = pose_error(truth, truth);
  CHECK(zero.yaw_mae_deg == doctest::Approx(0.0));
  CHECK(zero.pitch_mae_deg == doctest::Approx(0.0));

  std::vector<std::pair<float, float>> offset = truth;
  for (auto& [y, p] : offset) y += 2.0f;
  auto two = pose_error(offset, truth);
  CHECK(two.yaw_mae_deg == doctest::Approx(2.0));
  CHECK(two.pitch_mae_deg == doctest::Approx(0.0));
}

TEST_CASE("first-layer similarity: self, negation, symmetry, matching") {
  auto base = init_network<float>({ConvSpec{4, 3, 3, 1}, ReluSpec{},
                                   OutputSoftmaxSpec{2}},
                                  Shape{1, 6, 6}, 77);
  auto negated = base;
  for (long long i = 0; i < negated.weights[0].size(); ++i)
    negated.weights[0][i] = -negated.weights[0][i];

  // same filters in permuted order: flat cosine drops, matched stays 1
  auto permuted = base;
  const long long stride = base.weights[0].size() / 4;
  for (int f = 0; f < 4; ++f)
    for (long long p = 0; p < stride; ++p)
      permuted.weights[0][f * stride + p] =
          base.weights[0][((f + 1) % 4) * stride + p];

  const std::vector<std::pair<std::string, const NetworkState<float>*>> nets =
      {{"base", &base}, {"negated", &negated}, {"permuted", &permuted}};
  auto flat = first_layer_similarity(nets, SimilarityMode::Flat);
  CHECK(flat.at(0, 0) == doctest::Approx(1.0));
  CHECK(flat.at(0, 1) == doctest::Approx(-1.0));
  CHECK(flat.at(1, 0) == flat.at(0, 1));
  CHECK(std::abs(flat.at(0, 2)) < 0.9);  // permutation destroys flat cosine

  auto matched = first_layer_similarity(nets, SimilarityMode::Matched);
  CHECK(matched.at(0, 2) == doctest::Approx(1.0).epsilon(1e-6));

  // diagonal exactly 1, table exactly symmetric
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(matched.at(i, i) == doctest::Approx(1.0).epsilon(1e-6));
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(matched.at(i, j) == matched.at(j, i));
  }
}

TEST_CASE("similarity requires matching first layers") {
  auto a = init_network<float>({ConvSpec{4, 3, 3, 1}, OutputSoftmaxSpec{2}},
                               Shape{1, 6, 6}, 1);
  auto b = init_network<float>({ConvSpec{4, 5, 5, 1}, OutputSoftmaxSpec{2}},
                               Shape{1, 8, 8}, 1);
  const std::vector<std::pair<std::string, const NetworkState<float>*>> nets =
      {{"a", &a}, {"b", &b}};
  CHECK_THROWS_AS(first_layer_similarity(nets, SimilarityMode::Flat),
                  DimensionError);
}

TEST_CASE("csv renderings carry the expected headers") {
  auto report = confusion_and_precision({0, 1}, {0, 1}, 2);
  CHECK(confusion_to_csv(report.confusion).find("truth\\pred") == 0);
  CHECK(precision_to_csv(report).find("class,precision") == 0);

  SimilarityTable table;
  table.names = {"a", "b"};
  table.scores = {1.0, 0.5, 0.5, 1.0};
  const std::string csv = similarity_to_csv(table);
  CHECK(csv.find("task,a,b") == 0);
  auto heat = similarity_heatmap(table, 8);
  CHECK(heat.shape() == Shape{16, 16});
  CHECK(heat.at(0, 0) == 255.0f);
  CHECK(heat.at(0, 8) == doctest::Approx(191.0f));
}

}  // TEST_SUITE
