#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fgr/layers.hpp"
#include "fgr/rng.hpp"
#include "fgr/tensor.hpp"

namespace fgr {

namespace detail {

inline void validate_layer_params(const LayerSpec& spec, int index) {
  const auto fail = [&](const std::string& msg) {
    throw ParameterError("layer " + std::to_string(index) + " (" +
                         layer_name(spec) + "): " + msg);
  };
  if (const auto* c = std::get_if<ConvSpec>(&spec)) {
    if (c->maps < 1 || c->kernel_h < 1 || c->kernel_w < 1) fail("bad kernel geometry");
    if (c->stride < 1) fail("stride must be >= 1");
  } else if (const auto* p = std::get_if<MaxPoolSpec>(&spec)) {
    if (p->kernel < 1 || p->stride < 1) fail("kernel and stride must be >= 1");
  } else if (const auto* l = std::get_if<LcnSpec>(&spec)) {
    if (l->window < 3 || l->window % 2 == 0) fail("window must be odd and >= 3");
    if (l->floor <= 0) fail("floor must be positive");
  } else if (const auto* f = std::get_if<FullyConnectedSpec>(&spec)) {
    if (f->units < 1) fail("units must be >= 1");
  } else if (const auto* d = std::get_if<DropoutSpec>(&spec)) {
    if (d->p < 0.0f || d->p >= 1.0f) fail("p must be in [0, 1)");
  } else if (const auto* s = std::get_if<OutputSoftmaxSpec>(&spec)) {
    if (s->classes < 2) fail("classes must be >= 2");
  } else if (const auto* b = std::get_if<OutputBlockSoftmaxSpec>(&spec)) {
    if (b->block_sizes.empty()) fail("needs at least one block");
    for (int v : b->block_sizes)
      if (v < 2) fail("every block size must be >= 2");
  } else if (const auto* o = std::get_if<OutputLinearSpec>(&spec)) {
    if (o->dim < 1) fail("dim must be >= 1");
  }
}

}  // namespace detail

// Per-layer output shapes for the given (channels, h, w) input. Convolution
// shrinks in floor mode, pooling in ceil mode; FC and output layers flatten.
inline std::vector<Shape> infer_shapes(const std::vector<LayerSpec>& specs,
                                       Shape input_shape) {
  if (input_shape.rank() != 3) {
    throw DimensionError("network input shape must be (channels, h, w), got " +
                         input_shape.str());
  }
  std::vector<Shape> shapes;
  shapes.reserve(specs.size());
  Shape cur = input_shape;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& spec = specs[i];
    detail::validate_layer_params(spec, static_cast<int>(i));
    const auto fail = [&](const std::string& msg) {
      throw ArchitectureError("layer " + std::to_string(i) + " (" +
                              layer_name(spec) + "): " + msg);
    };
    if (i > 0 && is_output_layer(specs[i - 1])) fail("follows an output layer");

    if (const auto* c = std::get_if<ConvSpec>(&spec)) {
      if (cur.rank() != 3) fail("needs a (c, h, w) input, got " + cur.str());
      if (c->kernel_h > cur[1] || c->kernel_w > cur[2])
        fail("kernel exceeds input " + cur.str());
      const int oh = detail::conv_extent(cur[1], c->kernel_h, c->stride);
      const int ow = detail::conv_extent(cur[2], c->kernel_w, c->stride);
      if (oh < 1 || ow < 1) fail("output collapses to " + std::to_string(oh) +
                                 "x" + std::to_string(ow));
      cur = Shape{c->maps, oh, ow};
    } else if (const auto* p = std::get_if<MaxPoolSpec>(&spec)) {
      if (cur.rank() != 3) fail("needs a (c, h, w) input, got " + cur.str());
      if (p->kernel > cur[1] || p->kernel > cur[2])
        fail("kernel exceeds input " + cur.str());
      cur = Shape{cur[0], detail::pool_extent(cur[1], p->kernel, p->stride),
                  detail::pool_extent(cur[2], p->kernel, p->stride)};
    } else if (std::get_if<LcnSpec>(&spec)) {
      if (cur.rank() != 3) fail("needs a (c, h, w) input, got " + cur.str());
      const auto* l = std::get_if<LcnSpec>(&spec);
      if (l->window > cur[1] || l->window > cur[2])
        fail("window exceeds input " + cur.str());
    } else if (std::get_if<ReluSpec>(&spec) || std::get_if<DropoutSpec>(&spec)) {
      // shape preserved
    } else if (const auto* f = std::get_if<FullyConnectedSpec>(&spec)) {
      cur = Shape{f->units};
    } else if (const auto* s = std::get_if<OutputSoftmaxSpec>(&spec)) {
      cur = Shape{s->classes};
    } else if (const auto* b = std::get_if<OutputBlockSoftmaxSpec>(&spec)) {
      int total = 0;
      for (int v : b->block_sizes) total += v;
      cur = Shape{total};
    } else if (const auto* o = std::get_if<OutputLinearSpec>(&spec)) {
      cur = Shape{o->dim};
    }
    shapes.push_back(cur);
  }
  return shapes;
}

template <typename S>
struct NetworkState {
  std::vector<LayerSpec> specs;
  Shape input_shape;  // (channels, h, w)
  std::vector<Tensor<S>> weights;  // empty tensor for parameter-free layers
  std::vector<Tensor<S>> biases;
  std::vector<Tensor<S>> vel_weights;  // momentum buffers, zero-initialized
  std::vector<Tensor<S>> vel_biases;
  Mode mode = Mode::Train;
  SeededRng rng;
  std::uint64_t seed = 0;

  int num_layers() const { return static_cast<int>(specs.size()); }

  long long num_params() const {
    long long n = 0;
    for (const auto& w : weights) n += w.size();
    for (const auto& b : biases) n += b.size();
    return n;
  }
};

// Glorot-uniform init (+-sqrt(6/(fan_in+fan_out))), zero biases; each
// parameterized layer draws from its own (seed, layer index) substream.
template <typename S>
NetworkState<S> init_network(std::vector<LayerSpec> specs, Shape input_shape,
                             std::uint64_t seed) {
  const std::vector<Shape> shapes = infer_shapes(specs, input_shape);
  NetworkState<S> net;
  net.specs = std::move(specs);
  net.input_shape = input_shape;
  net.seed = seed;
  net.rng = SeededRng(seed);
  const int n = net.num_layers();
  net.weights.resize(n);
  net.biases.resize(n);
  net.vel_weights.resize(n);
  net.vel_biases.resize(n);

  Shape cur = input_shape;
  for (int i = 0; i < n; ++i) {
    const LayerSpec& spec = net.specs[i];
    Shape w_shape, b_shape;
    long long fan_in = 0, fan_out = 0;
    if (const auto* c = std::get_if<ConvSpec>(&spec)) {
      w_shape = Shape{c->maps, cur[0], c->kernel_h, c->kernel_w};
      b_shape = Shape{c->maps};
      fan_in = static_cast<long long>(cur[0]) * c->kernel_h * c->kernel_w;
      fan_out = static_cast<long long>(c->maps) * c->kernel_h * c->kernel_w;
    } else if (std::get_if<FullyConnectedSpec>(&spec) || is_output_layer(spec)) {
      const long long flat = cur.total();
      const int units = shapes[i].total();
      w_shape = Shape{units, static_cast<int>(flat)};
      b_shape = Shape{units};
      fan_in = flat;
      fan_out = units;
    }
    if (fan_in > 0) {
      SeededRng layer_rng = net.rng.split(static_cast<std::uint64_t>(i));
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      net.weights[i] = rng_uniform<S>(layer_rng, -bound, bound, w_shape);
      net.biases[i] = Tensor<S>(b_shape);
      net.vel_weights[i] = Tensor<S>(w_shape);
      net.vel_biases[i] = Tensor<S>(b_shape);
    }
    cur = shapes[i];
  }
  return net;
}

// The best-performing stack: three conv layers with LCN+pool after the
// first, a wide FC layer with dropout 0.2, and a softmax head. ReLU follows
// every parameterized hidden layer. On 48x48 input the spatial sizes run
// 44 -> 22 -> 18 -> 15.
inline std::vector<LayerSpec> paper_net_specs(int classes = 7) {
  return {
      ConvSpec{64, 5, 5, 1}, ReluSpec{}, LcnSpec{}, MaxPoolSpec{3, 2},
      ConvSpec{64, 5, 5, 1}, ReluSpec{},
      ConvSpec{128, 4, 4, 1}, ReluSpec{},
      FullyConnectedSpec{3072}, ReluSpec{}, DropoutSpec{0.2f},
      OutputSoftmaxSpec{classes},
  };
}

template <typename S>
struct LayerActivation {
  Tensor<S> output;
  Tensor<S> flat_input;            // fc/head layers
  Tensor<S> mask;                  // dropout
  Tensor<std::int32_t> argmax;     // maxpool
  LcnCache<S> lcn;                 // lcn intermediates (output moved out)
};

template <typename S>
struct ForwardResult {
  Tensor<S> output;
  std::vector<LayerActivation<S>> cache;
};

template <typename S>
struct NetGrads {
  std::vector<Tensor<S>> weights;
  std::vector<Tensor<S>> biases;
};

namespace detail {
template <typename S>
Tensor<S> flatten_batch(const Tensor<S>& t) {
  if (t.rank() == 2) return t;
  long long flat = 1;
  for (int i = 1; i < t.rank(); ++i) flat *= t.dim(i);
  return t.reshaped(Shape{t.dim(0), static_cast<int>(flat)});
}

[[noreturn]] inline void rethrow_at_layer(int index, const LayerSpec& spec,
                                          const std::exception& e) {
  throw Error("layer " + std::to_string(index) + " (" + layer_name(spec) +
              "): " + e.what());
}
}  // namespace detail

// batch is (n, channels, h, w) matching net.input_shape.
template <typename S>
ForwardResult<S> network_forward(NetworkState<S>& net, const Tensor<S>& batch) {
  if (batch.rank() != 4 || Shape{batch.dim(1), batch.dim(2), batch.dim(3)} !=
                               net.input_shape) {
    throw DimensionError("batch shape " + batch.shape().str() +
                         " does not match network input " +
                         net.input_shape.str());
  }
  ForwardResult<S> res;
  res.cache.resize(net.specs.size());
  const Tensor<S>* cur = &batch;
  for (int i = 0; i < net.num_layers(); ++i) {
    LayerActivation<S>& act = res.cache[i];
    try {
      const LayerSpec& spec = net.specs[i];
      if (const auto* c = std::get_if<ConvSpec>(&spec)) {
        act.output = conv_forward(*cur, net.weights[i], net.biases[i], c->stride);
      } else if (const auto* p = std::get_if<MaxPoolSpec>(&spec)) {
        auto pooled = maxpool_forward(*cur, p->kernel, p->stride);
        act.output = std::move(pooled.output);
        act.argmax = std::move(pooled.argmax);
      } else if (const auto* l = std::get_if<LcnSpec>(&spec)) {
        act.lcn = lcn_forward_cached(*cur, l->window, static_cast<S>(l->floor));
        act.output = std::move(act.lcn.output);
      } else if (std::get_if<ReluSpec>(&spec)) {
        act.output = relu_forward(*cur);
      } else if (std::get_if<FullyConnectedSpec>(&spec)) {
        act.flat_input = detail::flatten_batch(*cur);
        act.output = fc_forward(act.flat_input, net.weights[i], net.biases[i]);
      } else if (const auto* d = std::get_if<DropoutSpec>(&spec)) {
        auto dropped = dropout_forward(*cur, d->p, net.mode, net.rng);
        act.output = std::move(dropped.output);
        act.mask = std::move(dropped.mask);
      } else {  // output head: affine map then normalization
        act.flat_input = detail::flatten_batch(*cur);
        Tensor<S> logits = fc_forward(act.flat_input, net.weights[i], net.biases[i]);
        act.output = output_forward(logits, spec);
      }
    } catch (const Error& e) {
      detail::rethrow_at_layer(i, net.specs[i], e);
    }
    cur = &act.output;
  }
  res.output = *cur;
  return res;
}

// grad_output follows the head convention: for softmax heads it is the
// gradient w.r.t. the pre-softmax logits (the NLL losses produce exactly
// that), for the linear head w.r.t. the outputs themselves.
template <typename S>
NetGrads<S> network_backward(NetworkState<S>& net,
                             const ForwardResult<S>& forward,
                             const Tensor<S>& batch,
                             const Tensor<S>& grad_output) {
  NetGrads<S> grads;
  grads.weights.resize(net.specs.size());
  grads.biases.resize(net.specs.size());
  Tensor<S> grad = grad_output;
  for (int i = net.num_layers() - 1; i >= 0; --i) {
    const Tensor<S>& input = i == 0 ? batch : forward.cache[i - 1].output;
    const LayerActivation<S>& act = forward.cache[i];
    try {
      const LayerSpec& spec = net.specs[i];
      if (const auto* c = std::get_if<ConvSpec>(&spec)) {
        auto g = conv_backward(input, net.weights[i], grad, c->stride);
        grads.weights[i] = std::move(g.weights);
        grads.biases[i] = std::move(g.biases);
        grad = std::move(g.input);
      } else if (std::get_if<MaxPoolSpec>(&spec)) {
        grad = maxpool_backward(act.argmax, grad, input.shape());
      } else if (const auto* l = std::get_if<LcnSpec>(&spec)) {
        grad = lcn_backward_cached(input, act.lcn, grad, l->window,
                                   static_cast<S>(l->floor));
      } else if (std::get_if<ReluSpec>(&spec)) {
        grad = relu_backward(input, grad);
      } else if (std::get_if<DropoutSpec>(&spec)) {
        grad = dropout_backward(act.mask, grad);
      } else {  // fc or output head (head backward is affine: the incoming
                // gradient is already w.r.t. the logits)
        auto g = fc_backward(act.flat_input, net.weights[i], grad);
        grads.weights[i] = std::move(g.weights);
        grads.biases[i] = std::move(g.biases);
        grad = g.input.reshaped(input.shape());
      }
    } catch (const Error& e) {
      detail::rethrow_at_layer(i, net.specs[i], e);
    }
  }
  return grads;
}

}  // namespace fgr
