#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "fgr/tensor.hpp"

namespace fgr {

// Eye centers in source-image pixel coordinates. "Left" is the subject's
// left eye, which appears on the viewer's right.
struct FaceAnnotation {
  float left_x = 0, left_y = 0;
  float right_x = 0, right_y = 0;

  float eye_distance() const {
    const float dx = left_x - right_x, dy = left_y - right_y;
    return std::sqrt(dx * dx + dy * dy);
  }
};

namespace detail {

template <typename S>
S bilinear_sample(const Tensor<S>& img, double y, double x) {
  const int h = img.dim(0), w = img.dim(1);
  if (y < -1.0 || x < -1.0 || y > h || x > w) return S(0);
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0, fx = x - x0;
  const auto pixel = [&](int yy, int xx) -> double {
    if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
    return img.at(yy, xx);
  };
  const double top = pixel(y0, x0) * (1 - fx) + pixel(y0, x0 + 1) * fx;
  const double bottom = pixel(y0 + 1, x0) * (1 - fx) + pixel(y0 + 1, x0 + 1) * fx;
  return static_cast<S>(top * (1 - fy) + bottom * fy);
}

}  // namespace detail

// Plain bilinear resize; used when no landmarks are available.
template <typename S>
Tensor<S> resize_bilinear(const Tensor<S>& img, int out_h, int out_w) {
  if (img.rank() != 2) throw DimensionError("resize expects a rank-2 image");
  Tensor<S> out(Shape{out_h, out_w});
  const double sy = static_cast<double>(img.dim(0)) / out_h;
  const double sx = static_cast<double>(img.dim(1)) / out_w;
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x)
      out.at(y, x) = detail::bilinear_sample(img, (y + 0.5) * sy - 0.5,
                                             (x + 0.5) * sx - 0.5);
  return out;
}

// Canonical eye positions in the aligned frame: the subject's right eye at
// (0.3 S, 0.35 S), the left at (0.7 S, 0.35 S) -- an inter-ocular distance
// of 0.4 S, keeping brows-to-chin in frame at 48 px.
struct AlignGeometry {
  double right_x, right_y, left_x, left_y;
  explicit AlignGeometry(int out_size)
      : right_x(0.3 * out_size), right_y(0.35 * out_size),
        left_x(0.7 * out_size), left_y(0.35 * out_size) {}
};

// The similarity transform (rotation + uniform scale + translation) mapping
// the annotated eyes onto the canonical positions, solved over complex
// numbers: T(z) = a z + b with T(right) = right', T(left) = left'.
struct SimilarityTransform {
  double a_re = 1, a_im = 0, b_re = 0, b_im = 0;

  void apply(double x, double y, double& ox, double& oy) const {
    ox = a_re * x - a_im * y + b_re;
    oy = a_im * x + a_re * y + b_im;
  }

  SimilarityTransform inverse() const {
    const double d = a_re * a_re + a_im * a_im;
    SimilarityTransform inv;
    inv.a_re = a_re / d;
    inv.a_im = -a_im / d;
    inv.b_re = -(inv.a_re * b_re - inv.a_im * b_im);
    inv.b_im = -(inv.a_im * b_re + inv.a_re * b_im);
    return inv;
  }
};

inline SimilarityTransform eye_alignment_transform(const FaceAnnotation& annot,
                                                   int out_size) {
  if (annot.eye_distance() < 2.0f) {
    throw AnnotationError("degenerate eye positions (distance " +
                          std::to_string(annot.eye_distance()) + " px)");
  }
  const AlignGeometry geo(out_size);
  // a = (l' - r') / (l - r), b = r' - a r
  const double dzr = double(annot.left_x) - double(annot.right_x);
  const double dzi = double(annot.left_y) - double(annot.right_y);
  const double dwr = geo.left_x - geo.right_x;
  const double dwi = geo.left_y - geo.right_y;
  const double denom = dzr * dzr + dzi * dzi;
  SimilarityTransform t;
  t.a_re = (dwr * dzr + dwi * dzi) / denom;
  t.a_im = (dwi * dzr - dwr * dzi) / denom;
  t.b_re = geo.right_x - (t.a_re * annot.right_x - t.a_im * annot.right_y);
  t.b_im = geo.right_y - (t.a_im * annot.right_x + t.a_re * annot.right_y);
  return t;
}

// In-plane rotation, scale and crop so both eyes land on the canonical
// positions; bilinear resampling, out-of-frame source pixels fill with 0.
template <typename S>
Tensor<S> align_face(const Tensor<S>& image, const FaceAnnotation& annot,
                     int out_size) {
  if (image.rank() != 2) throw DimensionError("align_face expects a rank-2 image");
  const SimilarityTransform inv =
      eye_alignment_transform(annot, out_size).inverse();
  Tensor<S> out(Shape{out_size, out_size});
  for (int y = 0; y < out_size; ++y) {
    for (int x = 0; x < out_size; ++x) {
      double sx, sy;
      inv.apply(x, y, sx, sy);
      out.at(y, x) = detail::bilinear_sample(image, sy, sx);
    }
  }
  return out;
}

// Per-image normalization: remove the image's own mean, then fix the
// Euclidean norm of the pixel vector to exactly 100. A (near-)constant
// image maps to the zero image.
template <typename S>
Tensor<S> gcn_image(const Tensor<S>& image) {
  Tensor<S> out(image.shape());
  double mean = 0.0;
  for (long long i = 0; i < image.size(); ++i) mean += image[i];
  mean /= static_cast<double>(image.size());
  double norm_sq = 0.0;
  for (long long i = 0; i < image.size(); ++i) {
    const double v = static_cast<double>(image[i]) - mean;
    out[i] = static_cast<S>(v);
    norm_sq += v * v;
  }
  const double norm = std::sqrt(norm_sq);
  if (norm < 1e-6) return Tensor<S>(image.shape());
  const double scale = 100.0 / norm;
  for (long long i = 0; i < out.size(); ++i)
    out[i] = static_cast<S>(out[i] * scale);
  return out;
}

// Per-pixel train-set statistics (population std, floored at 1e-6).
struct PixelStats {
  Tensorf mean;  // (h, w)
  Tensorf std;   // (h, w)
  std::string source;
};

inline PixelStats fit_pixel_stats(const std::vector<Tensorf>& train_images,
                                  const std::string& source = "") {
  if (train_images.empty()) throw DataError("fit_pixel_stats: no images");
  const Shape shape = train_images.front().shape();
  for (const auto& img : train_images) {
    if (img.shape() != shape) {
      throw DimensionError("fit_pixel_stats: inconsistent image shapes " +
                           shape.str() + " vs " + img.shape().str());
    }
  }
  const long long n = shape.total();
  std::vector<double> mean(n, 0.0), var(n, 0.0);
  for (const auto& img : train_images)
    for (long long i = 0; i < n; ++i) mean[i] += img[i];
  for (long long i = 0; i < n; ++i) mean[i] /= double(train_images.size());
  for (const auto& img : train_images)
    for (long long i = 0; i < n; ++i) {
      const double d = img[i] - mean[i];
      var[i] += d * d;
    }
  PixelStats stats{Tensorf(shape), Tensorf(shape), source};
  for (long long i = 0; i < n; ++i) {
    stats.mean[i] = static_cast<float>(mean[i]);
    stats.std[i] = static_cast<float>(
        std::max(std::sqrt(var[i] / double(train_images.size())), 1e-6));
  }
  return stats;
}

inline Tensorf apply_pixel_stats(const Tensorf& image, const PixelStats& stats) {
  if (image.shape() != stats.mean.shape()) {
    throw DimensionError("apply_pixel_stats: image " + image.shape().str() +
                         " vs stats " + stats.mean.shape().str());
  }
  Tensorf out(image.shape());
  for (long long i = 0; i < image.size(); ++i)
    out[i] = (image[i] - stats.mean[i]) / stats.std[i];
  return out;
}

// align -> gcn -> per-pixel standardization, producing a (1, S, S) tensor
// ready for the network. Alignment is skipped when no annotation is given
// (pre-cropped corpora); the image is then resized if needed. Stats may be
// null only while they are being fitted.
inline Tensorf preprocess_pipeline(const Tensorf& image,
                                   const std::optional<FaceAnnotation>& annot,
                                   const PixelStats* stats, int out_size) {
  Tensorf stage = image;
  try {
    if (annot.has_value()) {
      stage = align_face(stage, *annot, out_size);
    } else if (stage.dim(0) != out_size || stage.dim(1) != out_size) {
      stage = resize_bilinear(stage, out_size, out_size);
    }
  } catch (const Error& e) {
    throw Error(std::string("align: ") + e.what());
  }
  try {
    stage = gcn_image(stage);
  } catch (const Error& e) {
    throw Error(std::string("gcn: ") + e.what());
  }
  if (stats != nullptr) {
    try {
      stage = apply_pixel_stats(stage, *stats);
    } catch (const Error& e) {
      throw Error(std::string("standardize: ") + e.what());
    }
  }
  return stage.reshaped(Shape{1, out_size, out_size});
}

}  // namespace fgr
