#include <Eigen/Dense>
#include <cmath>

#include "doctest.h"
#include "fgr/appearance.hpp"

using namespace fgr;

namespace {

Tensorf blob_face(int size, double cx, double cy, double spread,
                  double brightness) {
  Tensorf img(Shape{size, size});
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      img.at(y, x) = float(brightness * std::exp(-d2 / spread) +
                           20.0 + 2.0 * x + 1.0 * y);
    }
  return img;
}

std::vector<Tensorf> toy_corpus(int n, int size, int seed) {
  SeededRng rng(seed);
  std::vector<Tensorf> images;
  for (int i = 0; i < n; ++i) {
    images.push_back(blob_face(size, rng.uniform(0.3, 0.7) * size,
                               rng.uniform(0.3, 0.7) * size,
                               rng.uniform(4.0, 16.0), rng.uniform(80, 180)));
  }
  return images;
}

}  // namespace

TEST_SUITE("appearance") {

TEST_CASE("two-image PCA is forced: one component along the difference") {
  Tensorf a = blob_face(8, 3, 3, 6.0, 100);
  Tensorf b = blob_face(8, 5, 5, 6.0, 100);
  auto model = fit_pca({a, b}, 0.95);
  CHECK(model.k == 1);
  // component parallel to a - b
  double dot = 0.0, norm_diff = 0.0;
  for (long long p = 0; p < a.size(); ++p) {
    const double d = double(a[p]) - b[p];
    dot += d * model.components[p];
    norm_diff += d * d;
  }
  CHECK(std::abs(dot) / std::sqrt(norm_diff) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("full-rank PCA reconstructs its training images") {
  auto images = toy_corpus(5, 8, 1);
  auto model = fit_pca(images, 1.0);
  for (const auto& img : images) {
    auto rec = decode(model, encode(model, img.reshaped(Shape{64})));
    for (long long p = 0; p < img.size(); ++p)
      CHECK(std::abs(rec[p] - img[p]) < 1e-3f);
  }
}

TEST_CASE("gram-trick eigenvalues equal direct covariance eigenvalues") {
  auto images = toy_corpus(5, 8, 2);  // 5 images, 64 pixels: gram path
  auto model = fit_pca(images, 1.0);

  // direct pixel-covariance eigendecomposition as the oracle
  const int n = int(images.size());
  const long long pixels = 64;
  Eigen::MatrixXd data(n, pixels);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(pixels);
  for (int i = 0; i < n; ++i)
    for (long long p = 0; p < pixels; ++p) mean[p] += images[i][p];
  mean /= n;
  for (int i = 0; i < n; ++i)
    for (long long p = 0; p < pixels; ++p) data(i, p) = images[i][p] - mean[p];
  Eigen::MatrixXd cov = data.transpose() * data / n;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);

  for (int i = 0; i < model.k; ++i) {
    const double direct = solver.eigenvalues()[pixels - 1 - i];
    const double gram = double(model.component_stds[i]) * model.component_stds[i];
    CHECK(gram == doctest::Approx(direct).epsilon(1e-5));
  }
}

TEST_CASE("components are orthonormal and stds non-increasing") {
  auto images = toy_corpus(12, 8, 3);
  auto model = fit_pca(images, 0.99);
  for (int i = 0; i < model.k; ++i) {
    for (int j = i; j < model.k; ++j) {
      double dot = 0.0;
      for (long long p = 0; p < 64; ++p)
        dot += double(model.components[i * 64 + p]) * model.components[j * 64 + p];
      CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-4);
    }
  }
  for (int i = 1; i < model.k; ++i)
    CHECK(model.component_stds[i] <= model.component_stds[i - 1]);
}

TEST_CASE("fit_pca needs at least two images") {
  CHECK_THROWS_AS(fit_pca({blob_face(8, 4, 4, 6.0, 90)}, 0.95), DataError);
}

TEST_CASE("encode of the mean face is the zero vector") {
  auto model = fit_pca(toy_corpus(6, 8, 4), 0.95);
  auto coeffs = encode(model, model.mean_face);
  for (float c : coeffs) CHECK(std::abs(c) < 1e-4f);
}

TEST_CASE("decode/encode are inverse on the component subspace") {
  // unit-scale images keep the float32 reconstruction error near machine
  // precision; at 0..255 scale the same relative error would look large
  auto corpus = toy_corpus(8, 8, 5);
  for (auto& img : corpus)
    for (long long p = 0; p < img.size(); ++p) img[p] /= 255.0f;
  auto model = fit_pca(corpus, 0.99);
  SeededRng rng(6);
  std::vector<float> coeffs(model.k);
  for (auto& c : coeffs) c = float(rng.uniform(-2.0, 2.0));

  // encode(decode(c)) == c
  auto recovered = encode(model, decode(model, coeffs));
  for (int i = 0; i < model.k; ++i)
    CHECK(std::abs(recovered[i] - coeffs[i]) < 1e-5f);

  // decode(encode(decode(c))) == decode(c): projection idempotence
  auto img = decode(model, coeffs);
  auto img2 = decode(model, encode(model, img));
  for (long long p = 0; p < img.size(); ++p)
    CHECK(std::abs(img2[p] - img[p]) < 1e-5f);

  CHECK_THROWS_AS(decode(model, std::vector<float>(model.k + 1, 0.0f)),
                  DimensionError);
}

TEST_CASE("projection residual decreases monotonically with k") {
  auto images = toy_corpus(10, 8, 7);
  Tensorf held_out = blob_face(8, 4.2, 3.8, 9.0, 120);
  auto model = fit_pca(images, 1.0);
  auto coeffs = encode(model, held_out.reshaped(Shape{64}));
  double prev = 1e30;
  for (int k = 0; k <= model.k; ++k) {
    std::vector<float> truncated(coeffs.begin(), coeffs.begin() + model.k);
    for (int i = k; i < model.k; ++i) truncated[i] = 0.0f;
    auto rec = decode(model, truncated);
    double residual = 0.0;
    for (long long p = 0; p < held_out.size(); ++p) {
      const double d = double(held_out[p]) - rec[p];
      residual += d * d;
    }
    CHECK(residual <= prev + 1e-6);
    prev = residual;
  }
}

TEST_CASE("synthetic samples at pose (0,0) decode exactly and re-encode") {
  auto model = fit_pca(toy_corpus(10, 8, 8), 0.99);
  SeededRng rng(9);
  auto samples = sample_synthetic(model, rng, 20);
  for (const auto& s : samples) {
    if (s.target.yaw_deg == 0.0f && s.target.pitch_deg == 0.0f) {
      auto direct = decode(model, s.target.coeffs);
      for (long long p = 0; p < direct.size(); ++p)
        CHECK(s.image[p] == direct[p]);
    }
    CHECK(std::abs(s.target.yaw_deg) <= 30.0f);
    CHECK(std::abs(s.target.pitch_deg) <= 30.0f);
    for (float c : s.target.coeffs) CHECK(std::abs(c) <= 3.0f);
    // unwarped rendering recovers the ground truth coefficients
    auto unwarped = decode(model, s.target.coeffs);
    auto recovered = encode(model, unwarped);
    for (int i = 0; i < model.k; ++i)
      CHECK(std::abs(recovered[i] - s.target.coeffs[i]) < 1e-4f);
  }
}

TEST_CASE("synthetic sampling is deterministic given the seed") {
  auto model = fit_pca(toy_corpus(6, 8, 10), 0.95);
  SeededRng r1(77), r2(77);
  auto a = sample_synthetic(model, r1, 5);
  auto b = sample_synthetic(model, r2, 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(a[i].target.yaw_deg == b[i].target.yaw_deg);
    for (long long p = 0; p < a[i].image.size(); ++p)
      CHECK(a[i].image[p] == b[i].image[p]);
  }
}

TEST_CASE("pose warp at (0,0) is the identity") {
  Tensorf img = blob_face(16, 8, 8, 10.0, 150);
  auto out = pose_warp(img, 0.0, 0.0);
  for (long long p = 0; p < img.size(); ++p) CHECK(out[p] == img[p]);
}

TEST_CASE("yaw compresses the content width by cos(yaw) and shifts it") {
  const int S = 48;
  // bright rectangle on black: rows 12..36, cols 8..40
  Tensorf img(Shape{S, S});
  for (int y = 12; y < 36; ++y)
    for (int x = 8; x < 40; ++x) img.at(y, x) = 200.0f;
  auto warped = pose_warp(img, 30.0, 0.0);
  int min_x = S, max_x = -1;
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x)
      if (warped.at(y, x) > 100.0f) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
      }
  const double width = max_x - min_x + 1;
  const double expected = 32.0 * std::cos(30.0 * 3.14159265 / 180.0);
  CHECK(width == doctest::Approx(expected).epsilon(0.08));
  // the face-plane offset shifts the content toward positive x
  const double mid = 0.5 * (min_x + max_x);
  const double expected_shift = 0.25 * S * std::sin(30.0 * 3.14159265 / 180.0);
  CHECK(mid - (S - 1) * 0.5 == doctest::Approx(expected_shift).epsilon(0.15));
}

TEST_CASE("pose warp commutes with mirroring under yaw negation") {
  Tensorf img = blob_face(24, 9, 13, 14.0, 160);
  const auto mirror = [](const Tensorf& t) {
    Tensorf out(t.shape());
    for (int y = 0; y < t.dim(0); ++y)
      for (int x = 0; x < t.dim(1); ++x)
        out.at(y, x) = t.at(y, t.dim(1) - 1 - x);
    return out;
  };
  auto lhs = pose_warp(mirror(img), -17.0, 0.0);
  auto rhs = mirror(pose_warp(img, 17.0, 0.0));
  for (long long p = 0; p < lhs.size(); ++p)
    CHECK(std::abs(lhs[p] - rhs[p]) < 1e-3f);
}

TEST_CASE("pose warp rejects out-of-range angles") {
  Tensorf img = blob_face(8, 4, 4, 6.0, 90);
  CHECK_THROWS_AS(pose_warp(img, 31.0, 0.0), ParameterError);
  CHECK_THROWS_AS(pose_warp(img, 0.0, -35.0), ParameterError);
}

TEST_CASE("cosine similarity reference points") {
  std::vector<float> a = {1, 2, 3}, b = {2, 4, 6}, c = {-1, -2, -3};
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
  CHECK(cosine_similarity(a, b) == doctest::Approx(1.0));
  CHECK(cosine_similarity(a, c) == doctest::Approx(-1.0));
  std::vector<float> x = {1, 0}, y = {0, 1};
  CHECK(cosine_similarity(x, y) == doctest::Approx(0.0));
  std::vector<float> zero = {0, 0};
  CHECK_THROWS_AS(cosine_similarity(x, zero), MetricError);
}

}  // TEST_SUITE
