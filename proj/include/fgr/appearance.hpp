#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "fgr/preprocess.hpp"
#include "fgr/rng.hpp"
#include "fgr/tensor.hpp"

namespace fgr {

// Appearance-only PCA face model: a mean face plus an orthonormal component
// basis with per-component standard deviations. Coefficients are expressed
// in units of component_stds throughout.
struct AppearanceModel {
  Tensorf mean_face;            // (pixels)
  Tensorf components;           // (k, pixels), orthonormal rows
  std::vector<float> component_stds;  // non-increasing
  int k = 0;
  int image_size = 0;  // faces are square: pixels == image_size^2

  Shape face_shape() const { return Shape{image_size, image_size}; }
};

// PCA of the sample covariance. With fewer images than pixels the
// eigendecomposition runs on the n x n Gram matrix and the eigenvectors are
// mapped back through the data matrix; otherwise the pixel covariance is
// decomposed directly. k is the smallest count whose eigenvalues reach
// variance_target of the total variance.
inline AppearanceModel fit_pca(const std::vector<Tensorf>& images,
                               double variance_target = 0.95) {
  if (images.size() < 2) throw DataError("fit_pca needs at least 2 images");
  if (!(variance_target > 0.0 && variance_target <= 1.0)) {
    throw ParameterError("variance_target must be in (0, 1]");
  }
  const Shape shape = images.front().shape();
  if (shape.rank() != 2 || shape[0] != shape[1]) {
    throw DimensionError("fit_pca expects square rank-2 images");
  }
  for (const auto& img : images) {
    if (img.shape() != shape)
      throw DimensionError("fit_pca: inconsistent image shapes");
  }
  const int n = static_cast<int>(images.size());
  const long long pixels = shape.total();

  Eigen::MatrixXd centered(n, pixels);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(pixels);
  for (int i = 0; i < n; ++i)
    for (long long p = 0; p < pixels; ++p) mean[p] += images[i][p];
  mean /= n;
  for (int i = 0; i < n; ++i)
    for (long long p = 0; p < pixels; ++p)
      centered(i, p) = images[i][p] - mean[p];

  // eigenvalues ascending from Eigen; collect descending below
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd basis;  // columns = unit components in pixel space
  if (n < pixels) {
    const Eigen::MatrixXd gram = centered * centered.transpose() / n;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    eigenvalues = solver.eigenvalues();
    basis.resize(pixels, n);
    for (int i = 0; i < n; ++i) {
      const double lambda = eigenvalues[i];
      if (lambda > 1e-12) {
        basis.col(i) = centered.transpose() * solver.eigenvectors().col(i) /
                       std::sqrt(lambda * n);
      } else {
        basis.col(i).setZero();
      }
    }
  } else {
    const Eigen::MatrixXd cov = centered.transpose() * centered / n;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    eigenvalues = solver.eigenvalues();
    basis = solver.eigenvectors();
  }

  const int count = static_cast<int>(eigenvalues.size());
  double total = 0.0;
  for (int i = 0; i < count; ++i) total += std::max(eigenvalues[i], 0.0);
  if (total <= 0.0) throw DataError("fit_pca: images have no variance");

  int k = 0;
  double captured = 0.0;
  for (int i = count - 1; i >= 0; --i) {
    const double lambda = std::max(eigenvalues[i], 0.0);
    if (lambda <= 1e-12) break;
    ++k;
    captured += lambda;
    if (captured / total >= variance_target) break;
  }
  if (k == 0) k = 1;

  AppearanceModel model;
  model.k = k;
  model.image_size = shape[0];
  model.mean_face = Tensorf(Shape{static_cast<int>(pixels)});
  for (long long p = 0; p < pixels; ++p)
    model.mean_face[p] = static_cast<float>(mean[p]);
  model.components = Tensorf(Shape{k, static_cast<int>(pixels)});
  model.component_stds.resize(k);
  for (int i = 0; i < k; ++i) {
    const int src = count - 1 - i;  // descending
    model.component_stds[i] =
        static_cast<float>(std::sqrt(std::max(eigenvalues[src], 0.0)));
    for (long long p = 0; p < pixels; ++p)
      model.components[static_cast<long long>(i) * pixels + p] =
          static_cast<float>(basis(p, src));
  }
  return model;
}

// coeffs_i = <image - mean, component_i> / std_i
inline std::vector<float> encode(const AppearanceModel& model,
                                 const Tensorf& image) {
  const long long pixels = model.mean_face.size();
  if (image.size() != pixels) {
    throw DimensionError("encode: image has " + std::to_string(image.size()) +
                         " pixels, model expects " + std::to_string(pixels));
  }
  std::vector<float> coeffs(model.k);
  for (int i = 0; i < model.k; ++i) {
    double acc = 0.0;
    const float* comp = model.components.data() + static_cast<long long>(i) * pixels;
    for (long long p = 0; p < pixels; ++p)
      acc += (static_cast<double>(image[p]) - model.mean_face[p]) * comp[p];
    coeffs[i] = static_cast<float>(acc / model.component_stds[i]);
  }
  return coeffs;
}

inline Tensorf decode(const AppearanceModel& model,
                      const std::vector<float>& coeffs) {
  if (static_cast<int>(coeffs.size()) != model.k) {
    throw DimensionError("decode: got " + std::to_string(coeffs.size()) +
                         " coefficients, model has " + std::to_string(model.k));
  }
  const long long pixels = model.mean_face.size();
  Tensorf image(model.face_shape());
  for (long long p = 0; p < pixels; ++p) image[p] = model.mean_face[p];
  for (int i = 0; i < model.k; ++i) {
    const float scale = coeffs[i] * model.component_stds[i];
    const float* comp = model.components.data() + static_cast<long long>(i) * pixels;
    for (long long p = 0; p < pixels; ++p) image[p] += scale * comp[p];
  }
  return image;
}

// Out-of-plane pose proxy: the face plane sits ahead of the rotation axis,
// so a yaw/pitch both compresses the face by cos(angle) and shifts it
// sideways by depth*sin(angle). The shift keeps the sign of the angle
// observable (a pure compression would be even in the angle).
inline constexpr double kPoseDepthFraction = 0.25;  // of the image size

template <typename S>
Tensor<S> pose_warp(const Tensor<S>& image, double yaw_deg, double pitch_deg) {
  if (std::abs(yaw_deg) > 30.0 || std::abs(pitch_deg) > 30.0) {
    throw ParameterError("pose angles must lie in [-30, 30] degrees");
  }
  if (image.rank() != 2) throw DimensionError("pose_warp expects a rank-2 image");
  const int h = image.dim(0), w = image.dim(1);
  const double deg = 3.14159265358979323846 / 180.0;
  const double cy = 0.5 * (h - 1), cx = 0.5 * (w - 1);
  const double cos_yaw = std::cos(yaw_deg * deg);
  const double cos_pitch = std::cos(pitch_deg * deg);
  const double shift_x = kPoseDepthFraction * w * std::sin(yaw_deg * deg);
  const double shift_y = kPoseDepthFraction * h * std::sin(pitch_deg * deg);
  Tensor<S> out(image.shape());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double sx = cx + (x - cx - shift_x) / cos_yaw;
      const double sy = cy + (y - cy - shift_y) / cos_pitch;
      out.at(y, x) = detail::bilinear_sample(image, sy, sx);
    }
  }
  return out;
}

// Ground-truth annotation for one synthetic face.
struct AamTarget {
  std::vector<float> coeffs;  // in units of component_stds
  float yaw_deg = 0;
  float pitch_deg = 0;
};

struct SyntheticSample {
  Tensorf image;  // (S, S)
  AamTarget target;
};

// Coefficients from a standard normal truncated to +-3, pose uniform in
// +-30 degrees. The face is rendered by the model itself, so the encoding
// of an unwarped sample recovers its coefficients exactly.
inline std::vector<SyntheticSample> sample_synthetic(
    const AppearanceModel& model, SeededRng& rng, int n) {
  std::vector<SyntheticSample> samples;
  samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    SyntheticSample s;
    s.target.coeffs.resize(model.k);
    for (int c = 0; c < model.k; ++c) {
      double draw = rng.normal();
      while (std::abs(draw) > 3.0) draw = rng.normal();
      s.target.coeffs[c] = static_cast<float>(draw);
    }
    s.target.yaw_deg = static_cast<float>(rng.uniform(-30.0, 30.0));
    s.target.pitch_deg = static_cast<float>(rng.uniform(-30.0, 30.0));
    Tensorf face = decode(model, s.target.coeffs);
    if (s.target.yaw_deg != 0.0f || s.target.pitch_deg != 0.0f) {
      face = pose_warp(face, s.target.yaw_deg, s.target.pitch_deg);
    }
    s.image = std::move(face);
    samples.push_back(std::move(s));
  }
  return samples;
}

template <typename S>
double cosine_similarity(const std::vector<S>& a, const std::vector<S>& b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine_similarity: lengths " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    throw MetricError("cosine similarity undefined for a zero vector");
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace fgr
