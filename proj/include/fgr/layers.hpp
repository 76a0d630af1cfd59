#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "fgr/tensor.hpp"

namespace fgr {

// Layer stack vocabulary. Convolution is valid (no padding) cross-correlation;
// max-pooling runs in ceil mode (truncated border windows), the only
// convention under which a 44-wide map pools to 22 with kernel 3 / stride 2.
struct ConvSpec {
  int maps = 1;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
};

struct MaxPoolSpec {
  int kernel = 2;
  int stride = 2;
};

struct LcnSpec {
  int window = 9;
  float floor = 1e-4f;
};

struct ReluSpec {};

struct FullyConnectedSpec {
  int units = 1;
};

struct DropoutSpec {
  float p = 0.0f;
};

// Output heads are affine maps onto the label space; the softmax variants
// normalize (per block for the joint head), the linear head is identity.
struct OutputSoftmaxSpec {
  int classes = 2;
};

struct OutputBlockSoftmaxSpec {
  std::vector<int> block_sizes;
};

struct OutputLinearSpec {
  int dim = 1;
};

using LayerSpec =
    std::variant<ConvSpec, MaxPoolSpec, LcnSpec, ReluSpec, FullyConnectedSpec,
                 DropoutSpec, OutputSoftmaxSpec, OutputBlockSoftmaxSpec,
                 OutputLinearSpec>;

inline std::string layer_name(const LayerSpec& spec) {
  struct Namer {
    std::string operator()(const ConvSpec& s) const {
      return "Conv(" + std::to_string(s.maps) + "," + std::to_string(s.kernel_h) +
             "x" + std::to_string(s.kernel_w) + ",s" + std::to_string(s.stride) + ")";
    }
    std::string operator()(const MaxPoolSpec& s) const {
      return "MaxPool(" + std::to_string(s.kernel) + ",s" +
             std::to_string(s.stride) + ")";
    }
    std::string operator()(const LcnSpec& s) const {
      return "LCN(" + std::to_string(s.window) + ")";
    }
    std::string operator()(const ReluSpec&) const { return "ReLU"; }
    std::string operator()(const FullyConnectedSpec& s) const {
      return "FC(" + std::to_string(s.units) + ")";
    }
    std::string operator()(const DropoutSpec& s) const {
      std::string p = std::to_string(s.p);
      return "Dropout(" + p.substr(0, p.find_last_not_of('0') + 1) + ")";
    }
    std::string operator()(const OutputSoftmaxSpec& s) const {
      return "OutputSoftmax(" + std::to_string(s.classes) + ")";
    }
    std::string operator()(const OutputBlockSoftmaxSpec& s) const {
      std::string b;
      for (int v : s.block_sizes) {
        if (!b.empty()) b += ',';
        b += std::to_string(v);
      }
      return "OutputBlockSoftmax[" + b + "]";
    }
    std::string operator()(const OutputLinearSpec& s) const {
      return "OutputLinear(" + std::to_string(s.dim) + ")";
    }
  };
  return std::visit(Namer{}, spec);
}

inline bool is_output_layer(const LayerSpec& spec) {
  return std::holds_alternative<OutputSoftmaxSpec>(spec) ||
         std::holds_alternative<OutputBlockSoftmaxSpec>(spec) ||
         std::holds_alternative<OutputLinearSpec>(spec);
}

// ---------------------------------------------------------------------------
// Convolution (im2col + GEMM)

namespace detail {

// col is (out_h*out_w) x (c*kh*kw), row per output position.
template <typename S>
void im2col(const S* img, int c, int h, int w, int kh, int kw, int stride,
            int out_h, int out_w, S* col) {
  const int k = c * kh * kw;
  for (int oh = 0; oh < out_h; ++oh) {
    for (int ow = 0; ow < out_w; ++ow) {
      S* row = col + (static_cast<long long>(oh) * out_w + ow) * k;
      const int h0 = oh * stride, w0 = ow * stride;
      for (int ch = 0; ch < c; ++ch) {
        const S* plane = img + static_cast<long long>(ch) * h * w;
        for (int i = 0; i < kh; ++i) {
          const S* src = plane + static_cast<long long>(h0 + i) * w + w0;
          for (int j = 0; j < kw; ++j) *row++ = src[j];
        }
      }
    }
  }
}

template <typename S>
void col2im_add(const S* col, int c, int h, int w, int kh, int kw, int stride,
                int out_h, int out_w, S* img) {
  const int k = c * kh * kw;
  for (int oh = 0; oh < out_h; ++oh) {
    for (int ow = 0; ow < out_w; ++ow) {
      const S* row = col + (static_cast<long long>(oh) * out_w + ow) * k;
      const int h0 = oh * stride, w0 = ow * stride;
      for (int ch = 0; ch < c; ++ch) {
        S* plane = img + static_cast<long long>(ch) * h * w;
        for (int i = 0; i < kh; ++i) {
          S* dst = plane + static_cast<long long>(h0 + i) * w + w0;
          for (int j = 0; j < kw; ++j) dst[j] += *row++;
        }
      }
    }
  }
}

inline int conv_extent(int in, int kernel, int stride) {
  return (in - kernel) / stride + 1;  // valid, floor mode
}

inline int pool_extent(int in, int kernel, int stride) {
  return (in - kernel + stride - 1) / stride + 1;  // ceil mode
}

template <typename S>
void check_conv_shapes(const Tensor<S>& input, const Tensor<S>& weights,
                       const Tensor<S>& biases, int stride) {
  if (input.rank() != 4 || weights.rank() != 4 || biases.rank() != 1) {
    throw DimensionError("conv expects input rank 4, weights rank 4, biases rank 1");
  }
  if (input.dim(1) != weights.dim(1) || biases.dim(0) != weights.dim(0)) {
    throw DimensionError("conv shape mismatch: input " + input.shape().str() +
                         ", weights " + weights.shape().str());
  }
  if (stride < 1) throw ParameterError("conv stride must be >= 1");
  if (weights.dim(2) > input.dim(2) || weights.dim(3) > input.dim(3)) {
    throw DimensionError("conv kernel " + weights.shape().str() +
                         " exceeds input " + input.shape().str());
  }
}

}  // namespace detail

// input (n, c, h, w), weights (m, c, kh, kw), biases (m) -> (n, m, oh, ow).
template <typename S>
Tensor<S> conv_forward(const Tensor<S>& input, const Tensor<S>& weights,
                       const Tensor<S>& biases, int stride) {
  detail::check_conv_shapes(input, weights, biases, stride);
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int m = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
  const int oh = detail::conv_extent(h, kh, stride);
  const int ow = detail::conv_extent(w, kw, stride);
  const int positions = oh * ow;
  const int k = c * kh * kw;

  Tensor<S> out(Shape{n, m, oh, ow});
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t b) {
    std::vector<S> col(static_cast<std::size_t>(positions) * k);
    detail::im2col(input.data() + b * static_cast<long long>(c) * h * w, c, h, w,
                   kh, kw, stride, oh, ow, col.data());
    // out[b] (m x positions) = W (m x k) * col^T (k x positions)
    S* dst = out.data() + b * static_cast<long long>(m) * positions;
    gemm(m, positions, k, weights.data(), false, col.data(), true, dst);
    for (int map = 0; map < m; ++map) {
      S* row = dst + static_cast<long long>(map) * positions;
      const S bias = biases[map];
      for (int p = 0; p < positions; ++p) row[p] += bias;
    }
  });
  return out;
}

template <typename S>
struct ConvGrads {
  Tensor<S> input;
  Tensor<S> weights;
  Tensor<S> biases;
};

template <typename S>
ConvGrads<S> conv_backward(const Tensor<S>& input, const Tensor<S>& weights,
                           const Tensor<S>& grad_out, int stride) {
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int m = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
  const int oh = detail::conv_extent(h, kh, stride);
  const int ow = detail::conv_extent(w, kw, stride);
  if (grad_out.shape() != Shape{n, m, oh, ow}) {
    throw DimensionError("conv grad_out shape " + grad_out.shape().str() +
                         " does not match forward output " +
                         Shape{n, m, oh, ow}.str());
  }
  const int positions = oh * ow;
  const int k = c * kh * kw;

  ConvGrads<S> grads{Tensor<S>(input.shape()), Tensor<S>(weights.shape()),
                     Tensor<S>(Shape{m})};

  // Samples are processed in fixed chunks; per-chunk weight-gradient partials
  // are reduced on the calling thread in chunk order, keeping the result
  // bitwise independent of the worker count.
  constexpr int kChunk = 8;
  const int chunks = (n + kChunk - 1) / kChunk;
  std::vector<std::vector<S>> partial_w(chunks);
  parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t ci) {
    const int b0 = static_cast<int>(ci) * kChunk;
    const int b1 = std::min(b0 + kChunk, n);
    std::vector<S> col(static_cast<std::size_t>(positions) * k);
    std::vector<S> grad_col(static_cast<std::size_t>(positions) * k);
    std::vector<S> wsum(static_cast<std::size_t>(m) * k, S(0));
    std::vector<S> wtmp(static_cast<std::size_t>(m) * k);
    for (int b = b0; b < b1; ++b) {
      const S* img = input.data() + b * static_cast<long long>(c) * h * w;
      const S* g = grad_out.data() + b * static_cast<long long>(m) * positions;
      detail::im2col(img, c, h, w, kh, kw, stride, oh, ow, col.data());
      // dW += g (m x positions) * col (positions x k)
      gemm(m, k, positions, g, false, col.data(), false, wtmp.data());
      for (std::size_t i = 0; i < wsum.size(); ++i) wsum[i] += wtmp[i];
      // dcol (positions x k) = g^T (positions x m) * W (m x k)
      gemm(positions, k, m, g, true, weights.data(), false, grad_col.data());
      detail::col2im_add(grad_col.data(), c, h, w, kh, kw, stride, oh, ow,
                         grads.input.data() + b * static_cast<long long>(c) * h * w);
    }
    partial_w[ci] = std::move(wsum);
  });
  for (int ci = 0; ci < chunks; ++ci) {
    for (long long i = 0; i < grads.weights.size(); ++i)
      grads.weights[i] += partial_w[ci][i];
  }

  for (int map = 0; map < m; ++map) {
    double acc = 0.0;
    for (int b = 0; b < n; ++b) {
      const S* g = grad_out.data() +
                   (b * static_cast<long long>(m) + map) * positions;
      for (int p = 0; p < positions; ++p) acc += g[p];
    }
    grads.biases[map] = static_cast<S>(acc);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Max pooling (ceil mode)

template <typename S>
struct PoolResult {
  Tensor<S> output;
  Tensor<std::int32_t> argmax;  // flat h*w index of the winner, per window
};

template <typename S>
PoolResult<S> maxpool_forward(const Tensor<S>& input, int kernel, int stride) {
  if (input.rank() != 4) throw DimensionError("maxpool expects rank-4 input");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (kernel > h || kernel > w) {
    throw DimensionError("pool kernel " + std::to_string(kernel) +
                         " exceeds input " + input.shape().str());
  }
  const int oh = detail::pool_extent(h, kernel, stride);
  const int ow = detail::pool_extent(w, kernel, stride);
  PoolResult<S> res{Tensor<S>(Shape{n, c, oh, ow}),
                    Tensor<std::int32_t>(Shape{n, c, oh, ow})};
  parallel_for(static_cast<std::size_t>(n) * c, [&](std::size_t plane) {
    const S* src = input.data() + plane * static_cast<long long>(h) * w;
    S* dst = res.output.data() + plane * static_cast<long long>(oh) * ow;
    std::int32_t* arg = res.argmax.data() + plane * static_cast<long long>(oh) * ow;
    for (int i = 0; i < oh; ++i) {
      const int h0 = i * stride, h1 = std::min(h0 + kernel, h);
      for (int j = 0; j < ow; ++j) {
        const int w0 = j * stride, w1 = std::min(w0 + kernel, w);
        S best = src[h0 * w + w0];
        int best_idx = h0 * w + w0;
        for (int y = h0; y < h1; ++y) {
          for (int x = w0; x < w1; ++x) {
            const S v = src[y * w + x];
            if (v > best) {
              best = v;
              best_idx = y * w + x;
            }
          }
        }
        dst[i * ow + j] = best;
        arg[i * ow + j] = best_idx;
      }
    }
  });
  return res;
}

template <typename S>
Tensor<S> maxpool_backward(const Tensor<std::int32_t>& argmax,
                           const Tensor<S>& grad_out, Shape input_shape) {
  if (argmax.shape() != grad_out.shape()) {
    throw DimensionError("pool argmax/grad shape mismatch");
  }
  const int n = input_shape[0], c = input_shape[1];
  const long long plane_size =
      static_cast<long long>(input_shape[2]) * input_shape[3];
  const long long windows = static_cast<long long>(grad_out.dim(2)) * grad_out.dim(3);
  Tensor<S> grad_in(input_shape);
  parallel_for(static_cast<std::size_t>(n) * c, [&](std::size_t plane) {
    S* dst = grad_in.data() + plane * plane_size;
    const S* g = grad_out.data() + plane * windows;
    const std::int32_t* arg = argmax.data() + plane * windows;
    for (long long i = 0; i < windows; ++i) dst[arg[i]] += g[i];
  });
  return grad_in;
}

// ---------------------------------------------------------------------------
// Local contrast normalization
//
// Subtractive then divisive, after Jarrett-style contrast normalization:
//   v(c,s) = x(c,s) - mu(s)          mu = gaussian-smoothed channel mean
//   sigma(s) = sqrt(smooth(mean_c v^2))
//   y(c,s) = v(c,s) / max(mean(sigma), sigma(s), floor)
// The Gaussian window is renormalized over its in-bounds support at the
// borders, so a constant input maps to exactly zero everywhere.

namespace detail {

inline std::vector<double> gaussian_1d(int window) {
  const int radius = window / 2;
  const double sigma = window / 4.0;
  std::vector<double> g(window);
  double sum = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - radius;
    g[i] = std::exp(-0.5 * d * d / (sigma * sigma));
    sum += g[i];
  }
  for (auto& v : g) v /= sum;
  return g;
}

// Separable border-renormalized Gaussian smoothing of an h x w field.
template <typename S>
struct Smoother {
  int h, w, radius;
  std::vector<double> g1;
  std::vector<double> row_mass, col_mass;  // in-bounds kernel mass per index

  Smoother(int h_, int w_, int window) : h(h_), w(w_), radius(window / 2),
                                         g1(gaussian_1d(window)) {
    row_mass.resize(h);
    col_mass.resize(w);
    for (int y = 0; y < h; ++y) {
      double m = 0.0;
      for (int dy = -radius; dy <= radius; ++dy)
        if (y + dy >= 0 && y + dy < h) m += g1[dy + radius];
      row_mass[y] = m;
    }
    for (int x = 0; x < w; ++x) {
      double m = 0.0;
      for (int dx = -radius; dx <= radius; ++dx)
        if (x + dx >= 0 && x + dx < w) m += g1[dx + radius];
      col_mass[x] = m;
    }
  }

  // out = smooth(in): zero-padded correlation divided by the in-bounds mass.
  void apply(const S* in, S* out) const {
    std::vector<double> tmp(static_cast<std::size_t>(h) * w);
    pass(in, tmp.data(), true);
    finish(tmp.data(), out, true);
  }

  // out = smooth^T(in): divide by mass pointwise, then zero-padded
  // correlation (the kernel is symmetric, so no flip is needed).
  void apply_adjoint(const S* in, S* out) const {
    std::vector<double> scaled(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        scaled[y * w + x] =
            static_cast<double>(in[y * w + x]) / (row_mass[y] * col_mass[x]);
    std::vector<double> tmp(static_cast<std::size_t>(h) * w);
    pass_d(scaled.data(), tmp.data());
    finish(tmp.data(), out, false);
  }

 private:
  // Horizontal pass: tmp(y,x) = sum_dx g(dx) in(y, x+dx), zero padded.
  template <typename T>
  void pass_impl(const T* in, double* tmp) const {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        const int x0 = std::max(0, x - radius), x1 = std::min(w - 1, x + radius);
        for (int xx = x0; xx <= x1; ++xx)
          acc += g1[xx - x + radius] * static_cast<double>(in[y * w + xx]);
        tmp[y * w + x] = acc;
      }
    }
  }
  void pass(const S* in, double* tmp, bool) const { pass_impl(in, tmp); }
  void pass_d(const double* in, double* tmp) const { pass_impl(in, tmp); }

  // Vertical pass; `renormalize` divides by the local mass (forward only).
  void finish(const double* tmp, S* out, bool renormalize) const {
    for (int y = 0; y < h; ++y) {
      const int y0 = std::max(0, y - radius), y1 = std::min(h - 1, y + radius);
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int yy = y0; yy <= y1; ++yy)
          acc += g1[yy - y + radius] * tmp[yy * w + x];
        if (renormalize) acc /= row_mass[y] * col_mass[x];
        out[y * w + x] = static_cast<S>(acc);
      }
    }
  }
};

}  // namespace detail

template <typename S>
struct LcnCache {
  Tensor<S> output;    // (n, c, h, w)
  Tensor<S> centered;  // v
  Tensor<S> sigma;     // (n, h, w)
  Tensor<S> divisor;   // (n, h, w)
  std::vector<S> sigma_mean;  // per sample
};

namespace detail {
inline void check_lcn_window(int window) {
  if (window < 3 || window % 2 == 0) {
    throw ParameterError("lcn window must be odd and >= 3, got " +
                         std::to_string(window));
  }
}
}  // namespace detail

template <typename S>
LcnCache<S> lcn_forward_cached(const Tensor<S>& input, int window,
                               S floor_const) {
  detail::check_lcn_window(window);
  if (input.rank() != 4) throw DimensionError("lcn expects rank-4 input");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const long long plane = static_cast<long long>(h) * w;

  LcnCache<S> cache{Tensor<S>(input.shape()), Tensor<S>(input.shape()),
                    Tensor<S>(Shape{n, h, w}), Tensor<S>(Shape{n, h, w}),
                    std::vector<S>(n)};
  const detail::Smoother<S> smoother(h, w, window);

  parallel_for(static_cast<std::size_t>(n), [&](std::size_t b) {
    const S* x = input.data() + b * c * plane;
    S* v = cache.centered.data() + b * c * plane;
    S* sigma = cache.sigma.data() + b * plane;
    S* divisor = cache.divisor.data() + b * plane;
    S* y = cache.output.data() + b * c * plane;

    std::vector<S> mean_field(plane), mu(plane), meansq(plane), t(plane);
    for (long long s = 0; s < plane; ++s) {
      double acc = 0.0;
      for (int ch = 0; ch < c; ++ch) acc += x[ch * plane + s];
      mean_field[s] = static_cast<S>(acc / c);
    }
    smoother.apply(mean_field.data(), mu.data());
    for (int ch = 0; ch < c; ++ch)
      for (long long s = 0; s < plane; ++s)
        v[ch * plane + s] = x[ch * plane + s] - mu[s];

    for (long long s = 0; s < plane; ++s) {
      double acc = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        const double vv = v[ch * plane + s];
        acc += vv * vv;
      }
      meansq[s] = static_cast<S>(acc / c);
    }
    smoother.apply(meansq.data(), t.data());

    double sigma_sum = 0.0;
    for (long long s = 0; s < plane; ++s) {
      sigma[s] = std::sqrt(std::max(t[s], S(0)));
      sigma_sum += sigma[s];
    }
    const S c0 = static_cast<S>(sigma_sum / static_cast<double>(plane));
    cache.sigma_mean[b] = c0;

    for (long long s = 0; s < plane; ++s) {
      S d = sigma[s];
      if (c0 > d) d = c0;
      if (floor_const > d) d = floor_const;
      divisor[s] = d;
    }
    for (int ch = 0; ch < c; ++ch)
      for (long long s = 0; s < plane; ++s)
        y[ch * plane + s] = v[ch * plane + s] / divisor[s];
  });
  return cache;
}

template <typename S>
Tensor<S> lcn_forward(const Tensor<S>& input, int window, S floor_const) {
  return lcn_forward_cached(input, window, floor_const).output;
}

template <typename S>
Tensor<S> lcn_backward_cached(const Tensor<S>& input, const LcnCache<S>& cache,
                              const Tensor<S>& grad_out, int window,
                              S floor_const) {
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const long long plane = static_cast<long long>(h) * w;
  Tensor<S> grad_in(input.shape());
  const detail::Smoother<S> smoother(h, w, window);

  parallel_for(static_cast<std::size_t>(n), [&](std::size_t b) {
    const S* g = grad_out.data() + b * c * plane;
    const S* v = cache.centered.data() + b * c * plane;
    const S* sigma = cache.sigma.data() + b * plane;
    const S* divisor = cache.divisor.data() + b * plane;
    const S c0 = cache.sigma_mean[b];
    S* gx = grad_in.data() + b * c * plane;

    // d-path: d(s) = max(sigma(s), c0, floor); route the divisor gradient to
    // whichever branch the forward max picked (same comparison order).
    std::vector<S> grad_sigma(plane, S(0));
    double grad_c0 = 0.0;
    std::vector<S> grad_v(static_cast<std::size_t>(c) * plane);
    for (long long s = 0; s < plane; ++s) {
      const S d = divisor[s];
      double a = 0.0;  // sum_c g * v at s
      for (int ch = 0; ch < c; ++ch) a += static_cast<double>(g[ch * plane + s]) * v[ch * plane + s];
      const double gd = -a / (static_cast<double>(d) * d);
      S branch = sigma[s];
      if (c0 > branch) branch = c0;
      if (floor_const > branch) branch = floor_const;
      if (branch == sigma[s]) {
        grad_sigma[s] += static_cast<S>(gd);
      } else if (branch == c0) {
        grad_c0 += gd;
      }
      for (int ch = 0; ch < c; ++ch) grad_v[ch * plane + s] = g[ch * plane + s] / d;
    }
    const S c0_share = static_cast<S>(grad_c0 / static_cast<double>(plane));
    for (long long s = 0; s < plane; ++s) grad_sigma[s] += c0_share;

    // sigma = sqrt(t), t = smooth(meansq), meansq = mean_c v^2.
    std::vector<S> grad_t(plane), grad_meansq(plane);
    for (long long s = 0; s < plane; ++s)
      grad_t[s] = sigma[s] > S(0) ? grad_sigma[s] / (S(2) * sigma[s]) : S(0);
    smoother.apply_adjoint(grad_t.data(), grad_meansq.data());
    for (int ch = 0; ch < c; ++ch)
      for (long long s = 0; s < plane; ++s)
        grad_v[ch * plane + s] += grad_meansq[s] * S(2) * v[ch * plane + s] / S(c);

    // v(c,s) = x(c,s) - mu(s), mu = smooth(mean_c x).
    std::vector<S> channel_sum(plane), back(plane);
    for (long long s = 0; s < plane; ++s) {
      double acc = 0.0;
      for (int ch = 0; ch < c; ++ch) acc += grad_v[ch * plane + s];
      channel_sum[s] = static_cast<S>(acc);
    }
    smoother.apply_adjoint(channel_sum.data(), back.data());
    for (int ch = 0; ch < c; ++ch)
      for (long long s = 0; s < plane; ++s)
        gx[ch * plane + s] = grad_v[ch * plane + s] - back[s] / S(c);
  });
  return grad_in;
}

template <typename S>
Tensor<S> lcn_backward(const Tensor<S>& input, const Tensor<S>& grad_out,
                       int window, S floor_const) {
  const LcnCache<S> cache = lcn_forward_cached(input, window, floor_const);
  return lcn_backward_cached(input, cache, grad_out, window, floor_const);
}

// ---------------------------------------------------------------------------
// Fully connected / ReLU / dropout

// input (n, in_dim) -- callers flatten higher-rank activations; weights
// (units, in_dim), biases (units) -> (n, units).
template <typename S>
Tensor<S> fc_forward(const Tensor<S>& input, const Tensor<S>& weights,
                     const Tensor<S>& biases) {
  if (input.rank() != 2 || weights.rank() != 2 || input.dim(1) != weights.dim(1) ||
      biases.dim(0) != weights.dim(0)) {
    throw DimensionError("fc shape mismatch: input " + input.shape().str() +
                         ", weights " + weights.shape().str());
  }
  const int n = input.dim(0), in_dim = input.dim(1), units = weights.dim(0);
  Tensor<S> out(Shape{n, units});
  gemm(n, units, in_dim, input.data(), false, weights.data(), true, out.data());
  for (int row = 0; row < n; ++row) {
    S* dst = out.data() + static_cast<long long>(row) * units;
    for (int u = 0; u < units; ++u) dst[u] += biases[u];
  }
  return out;
}

template <typename S>
struct FcGrads {
  Tensor<S> input;
  Tensor<S> weights;
  Tensor<S> biases;
};

template <typename S>
FcGrads<S> fc_backward(const Tensor<S>& input, const Tensor<S>& weights,
                       const Tensor<S>& grad_out) {
  const int n = input.dim(0), in_dim = input.dim(1), units = weights.dim(0);
  if (grad_out.shape() != Shape{n, units}) {
    throw DimensionError("fc grad_out shape mismatch");
  }
  FcGrads<S> grads{Tensor<S>(input.shape()), Tensor<S>(weights.shape()),
                   Tensor<S>(Shape{units})};
  gemm(n, in_dim, units, grad_out.data(), false, weights.data(), false,
       grads.input.data());
  gemm(units, in_dim, n, grad_out.data(), true, input.data(), false,
       grads.weights.data());
  for (int u = 0; u < units; ++u) {
    double acc = 0.0;
    for (int row = 0; row < n; ++row)
      acc += grad_out[static_cast<long long>(row) * units + u];
    grads.biases[u] = static_cast<S>(acc);
  }
  return grads;
}

template <typename S>
Tensor<S> relu_forward(const Tensor<S>& input) {
  return tensor_map(input, [](S v) { return v > S(0) ? v : S(0); });
}

// Sub-gradient at exactly 0 is 0.
template <typename S>
Tensor<S> relu_backward(const Tensor<S>& input, const Tensor<S>& grad_out) {
  detail::check_same_shape(input, grad_out, "relu backward");
  Tensor<S> grad_in(input.shape());
  for (long long i = 0; i < input.size(); ++i)
    grad_in[i] = input[i] > S(0) ? grad_out[i] : S(0);
  return grad_in;
}

enum class Mode { Train, Eval };

template <typename S>
struct DropoutResult {
  Tensor<S> output;
  Tensor<S> mask;  // 0 or 1/(1-p); identity mask in eval mode
};

// Inverted dropout: kept activations are scaled by 1/(1-p) at train time so
// that eval mode is exactly the identity.
template <typename S>
DropoutResult<S> dropout_forward(const Tensor<S>& input, double p, Mode mode,
                                 SeededRng& rng) {
  if (p < 0.0 || p >= 1.0) {
    throw ParameterError("dropout p must be in [0, 1), got " + std::to_string(p));
  }
  if (mode == Mode::Eval || p == 0.0) {
    return {input, Tensor<S>::full(input.shape(), S(1))};
  }
  const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  DropoutResult<S> res{Tensor<S>(input.shape()), Tensor<S>(input.shape())};
  for (long long i = 0; i < input.size(); ++i) {
    const bool keep = rng.next_double() >= p;
    res.mask[i] = keep ? keep_scale : S(0);
    res.output[i] = input[i] * res.mask[i];
  }
  return res;
}

template <typename S>
Tensor<S> dropout_backward(const Tensor<S>& mask, const Tensor<S>& grad_out) {
  return tensor_hadamard(mask, grad_out);
}

// ---------------------------------------------------------------------------
// Output heads

namespace detail {
template <typename S>
void softmax_rows(const S* logits, S* probs, int rows, int cols, int stride,
                  int offset) {
  for (int r = 0; r < rows; ++r) {
    const S* in = logits + static_cast<long long>(r) * stride + offset;
    S* out = probs + static_cast<long long>(r) * stride + offset;
    S maxv = in[0];
    for (int c = 1; c < cols; ++c) maxv = std::max(maxv, in[c]);
    double sum = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double e = std::exp(static_cast<double>(in[c] - maxv));
      out[c] = static_cast<S>(e);
      sum += e;
    }
    for (int c = 0; c < cols; ++c) out[c] = static_cast<S>(out[c] / sum);
  }
}
}  // namespace detail

// logits (n, dim) -> probabilities (softmax heads) or identity (linear head).
template <typename S>
Tensor<S> output_forward(const Tensor<S>& logits, const LayerSpec& head) {
  if (logits.rank() != 2) throw DimensionError("output head expects rank-2 logits");
  const int n = logits.dim(0), dim = logits.dim(1);
  if (const auto* sm = std::get_if<OutputSoftmaxSpec>(&head)) {
    if (dim != sm->classes) {
      throw DimensionError("softmax head expects " + std::to_string(sm->classes) +
                           " logits, got " + std::to_string(dim));
    }
    Tensor<S> probs(logits.shape());
    detail::softmax_rows(logits.data(), probs.data(), n, dim, dim, 0);
    return probs;
  }
  if (const auto* bs = std::get_if<OutputBlockSoftmaxSpec>(&head)) {
    int total = 0;
    for (int b : bs->block_sizes) total += b;
    if (dim != total) {
      throw DimensionError("block softmax head expects " + std::to_string(total) +
                           " logits, got " + std::to_string(dim));
    }
    Tensor<S> probs(logits.shape());
    int offset = 0;
    for (int b : bs->block_sizes) {
      detail::softmax_rows(logits.data(), probs.data(), n, b, dim, offset);
      offset += b;
    }
    return probs;
  }
  if (const auto* lin = std::get_if<OutputLinearSpec>(&head)) {
    if (dim != lin->dim) {
      throw DimensionError("linear head expects " + std::to_string(lin->dim) +
                           " outputs, got " + std::to_string(dim));
    }
    return logits;
  }
  throw ParameterError("output_forward: spec is not an output head");
}

}  // namespace fgr
