#include <cmath>

#include "doctest.h"
#include "fgr/preprocess.hpp"

using namespace fgr;

namespace {

// Gradient-plus-blob test image, values 0..255, integer-valued.
Tensorf synth_face(int h, int w, int seed = 0) {
  Tensorf img(Shape{h, w});
  SeededRng rng(seed);
  const double cx = rng.uniform(0.35, 0.65) * w;
  const double cy = rng.uniform(0.35, 0.65) * h;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      double v = 40.0 + 120.0 * x / w + 60.0 * y / h +
                 90.0 * std::exp(-d2 / (0.02 * h * w));
      img.at(y, x) = float(int(std::min(255.0, v)));
    }
  return img;
}

// Rotation about a pivot with bilinear sampling; test-side reference.
Tensorf rotate_about(const Tensorf& img, double deg, double px, double py) {
  const double rad = deg * 3.14159265358979323846 / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  Tensorf out(img.shape());
  for (int y = 0; y < img.dim(0); ++y)
    for (int x = 0; x < img.dim(1); ++x) {
      // inverse rotation of the output coordinate
      const double dx = x - px, dy = y - py;
      const double sx = px + c * dx + s * dy;
      const double sy = py - s * dx + c * dy;
      out.at(y, x) = detail::bilinear_sample(img, sy, sx);
    }
  return out;
}

}  // namespace

TEST_SUITE("preprocess") {

TEST_CASE("eyes already at canonical positions leave the image unchanged") {
  const int S = 48;
  Tensorf img = synth_face(S, S, 1);
  const AlignGeometry geo(S);
  FaceAnnotation annot{float(geo.left_x), float(geo.left_y),
                       float(geo.right_x), float(geo.right_y)};
  Tensorf aligned = align_face(img, annot, S);
  for (long long i = 0; i < img.size(); ++i)
    CHECK(std::abs(aligned[i] - img[i]) < 1e-4f);
}

TEST_CASE("alignment is idempotent at the canonical annotation") {
  const int S = 48;
  Tensorf img = synth_face(64, 64, 2);
  FaceAnnotation annot{40.0f, 30.0f, 20.0f, 28.0f};
  Tensorf once = align_face(img, annot, S);
  const AlignGeometry geo(S);
  FaceAnnotation canonical{float(geo.left_x), float(geo.left_y),
                           float(geo.right_x), float(geo.right_y)};
  Tensorf twice = align_face(once, canonical, S);
  double mean_abs = 0.0;
  for (long long i = 0; i < once.size(); ++i)
    mean_abs += std::abs(once[i] - twice[i]);
  CHECK(mean_abs / once.size() < 1e-3);
}

TEST_CASE("aligning a rotated face reproduces the unrotated alignment") {
  const int S = 48;
  Tensorf img = synth_face(96, 96, 3);
  FaceAnnotation annot{60.0f, 40.0f, 36.0f, 40.0f};
  const double mid_x = (annot.left_x + annot.right_x) / 2.0;
  const double mid_y = (annot.left_y + annot.right_y) / 2.0;

  const double deg = 10.0, rad = deg * 3.14159265358979323846 / 180.0;
  Tensorf rotated = rotate_about(img, deg, mid_x, mid_y);
  // forward-rotate the eye annotations to match the rotated image
  const auto rot = [&](float x, float y, float& ox, float& oy) {
    const double dx = x - mid_x, dy = y - mid_y;
    ox = float(mid_x + std::cos(rad) * dx - std::sin(rad) * dy);
    oy = float(mid_y + std::sin(rad) * dx + std::cos(rad) * dy);
  };
  FaceAnnotation rotated_annot;
  rot(annot.left_x, annot.left_y, rotated_annot.left_x, rotated_annot.left_y);
  rot(annot.right_x, annot.right_y, rotated_annot.right_x, rotated_annot.right_y);

  Tensorf a = align_face(img, annot, S);
  Tensorf b = align_face(rotated, rotated_annot, S);
  double mean_abs = 0.0;
  long long count = 0;
  for (int y = 4; y < S - 4; ++y)
    for (int x = 4; x < S - 4; ++x) {
      mean_abs += std::abs(a.at(y, x) - b.at(y, x));
      ++count;
    }
  CHECK(mean_abs / count < 2.0);  // two gray levels over the interior
}

TEST_CASE("alignment levels the eye row") {
  SeededRng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    FaceAnnotation annot;
    annot.right_x = float(rng.uniform(10, 40));
    annot.right_y = float(rng.uniform(10, 50));
    annot.left_x = annot.right_x + float(rng.uniform(5, 30));
    annot.left_y = annot.right_y + float(rng.uniform(-15, 15));
    const auto t = eye_alignment_transform(annot, 48);
    double lx, ly, rx, ry;
    t.apply(annot.left_x, annot.left_y, lx, ly);
    t.apply(annot.right_x, annot.right_y, rx, ry);
    CHECK(std::abs(ly - ry) < 1e-6);
    CHECK(ly == doctest::Approx(0.35 * 48).epsilon(1e-9));
    CHECK(lx == doctest::Approx(0.7 * 48).epsilon(1e-9));
    CHECK(rx == doctest::Approx(0.3 * 48).epsilon(1e-9));
  }
}

TEST_CASE("degenerate eye positions are an annotation error") {
  Tensorf img = synth_face(48, 48, 7);
  FaceAnnotation annot{20.0f, 20.0f, 19.0f, 20.0f};  // 1 px apart
  CHECK_THROWS_AS(align_face(img, annot, 48), AnnotationError);
}

TEST_CASE("gcn maps a constant image to zero") {
  Tensorf img = Tensorf::full(Shape{6, 6}, 137.0f);
  auto out = gcn_image(img);
  for (long long i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0f);
}

TEST_CASE("gcn output has zero mean and norm 100") {
  Tensorf img = synth_face(48, 48, 11);
  auto out = gcn_image(img);
  double mean = 0.0, norm_sq = 0.0;
  for (long long i = 0; i < out.size(); ++i) {
    mean += out[i];
    norm_sq += double(out[i]) * out[i];
  }
  CHECK(std::abs(mean / out.size()) < 1e-5);
  CHECK(std::sqrt(norm_sq) == doctest::Approx(100.0).epsilon(1e-5));
}

TEST_CASE("gcn two-pixel hand case") {
  Tensorf img(Shape{1, 2}, {0.0f, 2.0f});
  auto out = gcn_image(img);
  CHECK(out[0] == doctest::Approx(-100.0 / std::sqrt(2.0)));
  CHECK(out[1] == doctest::Approx(100.0 / std::sqrt(2.0)));
}

TEST_CASE("gcn is invariant to pixel shifts and positive scales") {
  Tensorf img = synth_face(24, 24, 13);
  auto base = gcn_image(img);
  auto shifted = gcn_image(tensor_map(img, [](float v) { return v + 7.0f; }));
  for (long long i = 0; i < base.size(); ++i) CHECK(shifted[i] == base[i]);
  auto scaled = gcn_image(tensor_scale(img, 3.0f));
  for (long long i = 0; i < base.size(); ++i)
    CHECK(std::abs(scaled[i] - base[i]) < 1e-5f);
}

TEST_CASE("pixel stats two-image hand case") {
  Tensorf a = Tensorf::full(Shape{2, 2}, 0.0f);
  Tensorf b = Tensorf::full(Shape{2, 2}, 2.0f);
  auto stats = fit_pixel_stats({a, b});
  for (long long i = 0; i < stats.mean.size(); ++i) {
    CHECK(stats.mean[i] == doctest::Approx(1.0f));
    CHECK(stats.std[i] == doctest::Approx(1.0f));
  }
  auto za = apply_pixel_stats(a, stats);
  auto zb = apply_pixel_stats(b, stats);
  for (long long i = 0; i < za.size(); ++i) {
    CHECK(za[i] == doctest::Approx(-1.0f));
    CHECK(zb[i] == doctest::Approx(1.0f));
  }
}

TEST_CASE("standardizing the fit set yields mean 0 and std 1 per location") {
  std::vector<Tensorf> images;
  for (int i = 0; i < 50; ++i) images.push_back(gcn_image(synth_face(16, 16, 100 + i)));
  auto stats = fit_pixel_stats(images);
  std::vector<double> mean(16 * 16, 0.0), var(16 * 16, 0.0);
  for (const auto& img : images) {
    auto z = apply_pixel_stats(img, stats);
    for (long long p = 0; p < z.size(); ++p) mean[p] += z[p];
  }
  for (auto& m : mean) m /= images.size();
  for (const auto& img : images) {
    auto z = apply_pixel_stats(img, stats);
    for (long long p = 0; p < z.size(); ++p)
      var[p] += (z[p] - mean[p]) * (z[p] - mean[p]);
  }
  for (long long p = 0; p < 16 * 16; ++p) {
    CHECK(std::abs(mean[p]) < 1e-5);
    CHECK(std::sqrt(var[p] / images.size()) == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("a constant-across-dataset location standardizes to zero via the floor") {
  Tensorf a = synth_face(8, 8, 17);
  Tensorf b = a;
  b.at(3, 3) += 50.0f;  // only one location varies
  auto stats = fit_pixel_stats({a, b});
  auto z = apply_pixel_stats(a, stats);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      if (y != 3 || x != 3) CHECK(z.at(y, x) == 0.0f);
  CHECK(stats.std.at(0, 0) == doctest::Approx(1e-6f));
}

TEST_CASE("standardization followed by its inverse recovers the gcn image") {
  std::vector<Tensorf> images;
  for (int i = 0; i < 10; ++i)
    images.push_back(gcn_image(synth_face(12, 12, 300 + i)));
  auto stats = fit_pixel_stats(images);
  for (const auto& img : images) {
    auto z = apply_pixel_stats(img, stats);
    for (long long p = 0; p < z.size(); ++p) {
      const float recovered = z[p] * stats.std[p] + stats.mean[p];
      CHECK(std::abs(recovered - img[p]) < 1e-4f);
    }
  }
}

TEST_CASE("pipeline shape, determinism and the no-annotation path") {
  Tensorf img = synth_face(64, 64, 19);
  FaceAnnotation annot{42.0f, 26.0f, 24.0f, 24.0f};
  std::vector<Tensorf> train = {gcn_image(align_face(img, annot, 48))};
  auto stats = fit_pixel_stats(train);

  auto a = preprocess_pipeline(img, annot, &stats, 48);
  auto b = preprocess_pipeline(img, annot, &stats, 48);
  CHECK(a.shape() == Shape{1, 48, 48});
  for (long long i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

  // pre-cropped input with no annotation skips alignment entirely
  Tensorf cropped = synth_face(48, 48, 23);
  auto direct = preprocess_pipeline(cropped, std::nullopt, nullptr, 48);
  auto expected = gcn_image(cropped);
  for (long long i = 0; i < direct.size(); ++i)
    CHECK(direct[i] == expected[i]);
}

TEST_CASE("resize_bilinear shrinks and grows plausibly") {
  Tensorf img = synth_face(48, 48, 29);
  auto small = resize_bilinear(img, 24, 24);
  CHECK(small.shape() == Shape{24, 24});
  auto big = resize_bilinear(img, 72, 72);
  CHECK(big.shape() == Shape{72, 72});
  // downsample of a constant image stays constant
  Tensorf flat = Tensorf::full(Shape{48, 48}, 50.0f);
  auto rs = resize_bilinear(flat, 24, 24);
  for (long long i = 0; i < rs.size(); ++i)
    CHECK(rs[i] == doctest::Approx(50.0f));
}

}  // TEST_SUITE
