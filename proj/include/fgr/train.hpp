#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "fgr/network.hpp"

namespace fgr {

struct TrainConfig {
  int batch_size = 100;
  double lr_start = 0.0025;
  double lr_end = 0.001;
  int epochs = 50;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  int patience = 10;  // epochs without improvement before stopping; 0 disables

  void validate() const {
    if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
    if (!(lr_start >= lr_end && lr_end > 0))
      throw ParameterError("need lr_start >= lr_end > 0");
    if (epochs < 1) throw ParameterError("epochs must be >= 1");
    if (momentum < 0 || momentum >= 1)
      throw ParameterError("momentum must be in [0, 1)");
    if (patience < 0) throw ParameterError("patience must be >= 0");
  }
};

struct TaskHead {
  enum class Kind { Exclusive, JointBlocks, Regression };
  Kind kind = Kind::Exclusive;
  int classes = 0;
  std::vector<int> block_sizes;
  int dim = 0;

  static TaskHead exclusive(int classes) {
    if (classes < 2) throw ParameterError("exclusive head needs >= 2 classes");
    TaskHead h;
    h.kind = Kind::Exclusive;
    h.classes = classes;
    return h;
  }
  static TaskHead joint(std::vector<int> blocks) {
    for (int b : blocks)
      if (b < 2) throw ParameterError("every block needs >= 2 classes");
    TaskHead h;
    h.kind = Kind::JointBlocks;
    h.block_sizes = std::move(blocks);
    return h;
  }
  static TaskHead regression(int dim) {
    if (dim < 1) throw ParameterError("regression head needs dim >= 1");
    TaskHead h;
    h.kind = Kind::Regression;
    h.dim = dim;
    return h;
  }

  int output_dim() const {
    switch (kind) {
      case Kind::Exclusive: return classes;
      case Kind::JointBlocks:
        return std::accumulate(block_sizes.begin(), block_sizes.end(), 0);
      case Kind::Regression: return dim;
    }
    return 0;
  }

  LayerSpec output_layer() const {
    switch (kind) {
      case Kind::Exclusive: return OutputSoftmaxSpec{classes};
      case Kind::JointBlocks: return OutputBlockSoftmaxSpec{block_sizes};
      case Kind::Regression: return OutputLinearSpec{dim};
    }
    return OutputLinearSpec{1};
  }
};

// One preprocessed image with whichever annotations its task needs.
struct Sample {
  Tensorf image;                  // (channels, h, w)
  int label = -1;                 // exclusive class index
  std::vector<int> block_labels;  // joint task, one index per block
  std::vector<float> target;      // regression target
};

using Dataset = std::vector<Sample>;

// Targets for one mini-batch, laid out to match the head.
template <typename S>
struct TargetBatch {
  std::vector<int> labels;  // exclusive: n entries; joint: n x blocks row-major
  Tensor<S> values;         // regression: (n, dim)
};

template <typename S>
struct LossGrad {
  double loss = 0.0;
  Tensor<S> grad;  // w.r.t. logits (softmax heads) or outputs (linear head)
};

// Mean negative log-likelihood; the returned gradient is w.r.t. the
// pre-softmax logits: (probs - onehot) / batch.
template <typename S>
LossGrad<S> nll_loss(const Tensor<S>& probs, const std::vector<int>& targets) {
  if (probs.rank() != 2 ||
      probs.dim(0) != static_cast<int>(targets.size())) {
    throw DimensionError("nll_loss expects (batch, classes) probs with one target per row");
  }
  const int n = probs.dim(0), k = probs.dim(1);
  LossGrad<S> res;
  res.grad = Tensor<S>(probs.shape());
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const int t = targets[i];
    if (t < 0 || t >= k) {
      throw LabelError("target " + std::to_string(t) + " out of range for " +
                       std::to_string(k) + " classes");
    }
    const S* row = probs.data() + static_cast<long long>(i) * k;
    S* g = res.grad.data() + static_cast<long long>(i) * k;
    loss -= std::log(std::max(static_cast<double>(row[t]), 1e-30));
    for (int c = 0; c < k; ++c) g[c] = row[c] / static_cast<S>(n);
    g[t] -= S(1) / static_cast<S>(n);
  }
  res.loss = loss / n;
  return res;
}

// Joint loss: sum of independent per-block NLLs, unweighted. labels is
// (n x blocks) row-major.
template <typename S>
LossGrad<S> block_nll_loss(const Tensor<S>& probs,
                           const std::vector<int>& block_sizes,
                           const std::vector<int>& labels) {
  const int n = probs.dim(0);
  const int blocks = static_cast<int>(block_sizes.size());
  if (static_cast<int>(labels.size()) != n * blocks) {
    throw DimensionError("block_nll_loss: need one label per sample per block");
  }
  const int dim = probs.dim(1);
  LossGrad<S> res;
  res.grad = Tensor<S>(probs.shape());
  double loss = 0.0;
  int offset = 0;
  for (int b = 0; b < blocks; ++b) {
    const int k = block_sizes[b];
    for (int i = 0; i < n; ++i) {
      const int t = labels[static_cast<std::size_t>(i) * blocks + b];
      if (t < 0 || t >= k) {
        throw LabelError("block " + std::to_string(b) + " target " +
                         std::to_string(t) + " out of range for " +
                         std::to_string(k) + " classes");
      }
      const S* row = probs.data() + static_cast<long long>(i) * dim + offset;
      S* g = res.grad.data() + static_cast<long long>(i) * dim + offset;
      loss -= std::log(std::max(static_cast<double>(row[t]), 1e-30));
      for (int c = 0; c < k; ++c) g[c] = row[c] / static_cast<S>(n);
      g[t] -= S(1) / static_cast<S>(n);
    }
    offset += k;
  }
  res.loss = loss / n;
  return res;
}

template <typename S>
LossGrad<S> mse_loss(const Tensor<S>& pred, const Tensor<S>& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("mse_loss shape mismatch: " + pred.shape().str() +
                         " vs " + target.shape().str());
  }
  LossGrad<S> res;
  res.grad = Tensor<S>(pred.shape());
  const long long count = pred.size();
  double loss = 0.0;
  for (long long i = 0; i < count; ++i) {
    const double d = static_cast<double>(pred[i]) - target[i];
    loss += d * d;
    res.grad[i] = static_cast<S>(2.0 * d / static_cast<double>(count));
  }
  res.loss = loss / static_cast<double>(count);
  return res;
}

template <typename S>
LossGrad<S> head_loss(const Tensor<S>& outputs, const TaskHead& head,
                      const TargetBatch<S>& targets) {
  switch (head.kind) {
    case TaskHead::Kind::Exclusive: return nll_loss(outputs, targets.labels);
    case TaskHead::Kind::JointBlocks:
      return block_nll_loss(outputs, head.block_sizes, targets.labels);
    case TaskHead::Kind::Regression: return mse_loss(outputs, targets.values);
  }
  throw ParameterError("unknown head kind");
}

// Linear decay from lr_start (epoch 0) to lr_end (epoch == epochs); clamped
// to lr_end beyond the schedule.
inline double lr_at(const TrainConfig& config, int epoch) {
  if (epoch < 0) throw ParameterError("epoch must be >= 0");
  if (epoch >= config.epochs) return config.lr_end;
  return config.lr_start + (config.lr_end - config.lr_start) *
                               static_cast<double>(epoch) / config.epochs;
}

// buffer' = momentum * buffer - lr * grad; param' = param + buffer'.
template <typename S>
void sgd_momentum_step(Tensor<S>& param, const Tensor<S>& grad,
                       Tensor<S>& buffer, double lr, double momentum) {
  if (param.shape() != grad.shape() || param.shape() != buffer.shape()) {
    throw DimensionError("sgd step shape mismatch");
  }
  const long long n = param.size();
  constexpr long long kChunk = 1 << 16;
  const long long chunks = (n + kChunk - 1) / kChunk;
  S* p = param.data();
  const S* g = grad.data();
  S* v = buffer.data();
  const S m = static_cast<S>(momentum);
  const S step = static_cast<S>(lr);
  parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t c) {
    const long long lo = static_cast<long long>(c) * kChunk;
    const long long hi = std::min(lo + kChunk, n);
    for (long long i = lo; i < hi; ++i) {
      v[i] = m * v[i] - step * g[i];
      p[i] += v[i];
    }
  });
}

struct TrainLogRow {
  int epoch;
  double train_loss;
  double valid_criterion;  // misclassification rate, or MSE for regression
  double lr;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  int best_epoch = -1;
};

template <typename S>
struct TrainResult {
  NetworkState<S> net;  // weights restored from the best epoch
  TrainLog log;
};

namespace detail {

template <typename S>
Tensor<S> assemble_batch(const Dataset& set, const std::vector<std::size_t>& order,
                         std::size_t begin, std::size_t end, Shape input_shape) {
  const int n = static_cast<int>(end - begin);
  Tensor<S> batch(Shape{n, input_shape[0], input_shape[1], input_shape[2]});
  const long long stride = input_shape.total();
  for (int i = 0; i < n; ++i) {
    const Sample& s = set[order[begin + i]];
    if (s.image.shape() != input_shape) {
      throw DimensionError("sample image shape " + s.image.shape().str() +
                           " does not match network input " + input_shape.str());
    }
    for (long long j = 0; j < stride; ++j)
      batch[i * stride + j] = static_cast<S>(s.image[j]);
  }
  return batch;
}

template <typename S>
TargetBatch<S> assemble_targets(const Dataset& set,
                                const std::vector<std::size_t>& order,
                                std::size_t begin, std::size_t end,
                                const TaskHead& head) {
  TargetBatch<S> t;
  const int n = static_cast<int>(end - begin);
  switch (head.kind) {
    case TaskHead::Kind::Exclusive:
      t.labels.reserve(n);
      for (int i = 0; i < n; ++i) t.labels.push_back(set[order[begin + i]].label);
      break;
    case TaskHead::Kind::JointBlocks: {
      const std::size_t blocks = head.block_sizes.size();
      t.labels.reserve(n * blocks);
      for (int i = 0; i < n; ++i) {
        const Sample& s = set[order[begin + i]];
        if (s.block_labels.size() != blocks)
          throw DataError("sample lacks labels for all blocks");
        for (int b : s.block_labels) t.labels.push_back(b);
      }
      break;
    }
    case TaskHead::Kind::Regression: {
      t.values = Tensor<S>(Shape{n, head.dim});
      for (int i = 0; i < n; ++i) {
        const Sample& s = set[order[begin + i]];
        if (static_cast<int>(s.target.size()) != head.dim)
          throw DataError("sample regression target has wrong length");
        for (int d = 0; d < head.dim; ++d)
          t.values[static_cast<long long>(i) * head.dim + d] =
              static_cast<S>(s.target[d]);
      }
      break;
    }
  }
  return t;
}

inline void seeded_shuffle(std::vector<std::size_t>& order, SeededRng rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
}

}  // namespace detail

template <typename S>
struct EvalResult {
  Tensor<S> outputs;  // (n, head dim): probabilities or raw regression values
};

// Dropout disabled; deterministic for a given net.
template <typename S>
EvalResult<S> evaluate(NetworkState<S>& net, const TaskHead& head,
                       const Dataset& set, int batch_size = 100) {
  const Mode saved = net.mode;
  net.mode = Mode::Eval;
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  EvalResult<S> res;
  res.outputs = Tensor<S>(Shape{static_cast<int>(set.size()), head.output_dim()});
  const int dim = head.output_dim();
  for (std::size_t b = 0; b < set.size(); b += batch_size) {
    const std::size_t e = std::min(set.size(), b + batch_size);
    Tensor<S> batch = detail::assemble_batch<S>(set, order, b, e, net.input_shape);
    ForwardResult<S> fw = network_forward(net, batch);
    if (fw.output.dim(1) != dim)
      throw DimensionError("network output dim " + std::to_string(fw.output.dim(1)) +
                           " does not match head dim " + std::to_string(dim));
    std::copy(fw.output.data(), fw.output.data() + fw.output.size(),
              res.outputs.data() + static_cast<long long>(b) * dim);
  }
  net.mode = saved;
  return res;
}

namespace detail {

template <typename S>
double validation_criterion(const EvalResult<S>& eval, const Dataset& set,
                            const TaskHead& head) {
  const int n = static_cast<int>(set.size());
  const int dim = head.output_dim();
  switch (head.kind) {
    case TaskHead::Kind::Exclusive: {
      int wrong = 0;
      for (int i = 0; i < n; ++i) {
        const S* row = eval.outputs.data() + static_cast<long long>(i) * dim;
        const int pred = static_cast<int>(
            std::max_element(row, row + dim) - row);
        wrong += pred != set[i].label;
      }
      return static_cast<double>(wrong) / n;
    }
    case TaskHead::Kind::JointBlocks: {
      // mean per-block misclassification rate
      double sum = 0.0;
      int offset = 0;
      for (std::size_t b = 0; b < head.block_sizes.size(); ++b) {
        const int k = head.block_sizes[b];
        int wrong = 0;
        for (int i = 0; i < n; ++i) {
          const S* row = eval.outputs.data() + static_cast<long long>(i) * dim + offset;
          const int pred = static_cast<int>(std::max_element(row, row + k) - row);
          wrong += pred != set[i].block_labels[b];
        }
        sum += static_cast<double>(wrong) / n;
        offset += k;
      }
      return sum / static_cast<double>(head.block_sizes.size());
    }
    case TaskHead::Kind::Regression: {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        const S* row = eval.outputs.data() + static_cast<long long>(i) * dim;
        for (int d = 0; d < dim; ++d) {
          const double diff = static_cast<double>(row[d]) - set[i].target[d];
          acc += diff * diff;
        }
      }
      return acc / (static_cast<double>(n) * dim);
    }
  }
  return 0.0;
}

}  // namespace detail

// Mini-batch SGD with momentum, seeded epoch shuffles, per-epoch validation
// and best-weights early stopping. The last partial mini-batch is processed.
template <typename S>
TrainResult<S> train(NetworkState<S> net, const TaskHead& head,
                     const Dataset& train_set, const Dataset& valid_set,
                     const TrainConfig& config) {
  config.validate();
  if (train_set.empty()) throw DataError("empty train set");
  if (valid_set.empty()) throw DataError("empty validation set");

  TrainResult<S> result;
  result.log.best_epoch = -1;
  double best_criterion = 0.0;
  std::vector<Tensor<S>> best_weights, best_biases;

  const SeededRng shuffle_base(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(config, epoch);
    detail::seeded_shuffle(order, shuffle_base.split(static_cast<std::uint64_t>(epoch)));

    net.mode = Mode::Train;
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < train_set.size();
         b += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t e =
          std::min(train_set.size(), b + static_cast<std::size_t>(config.batch_size));
      Tensor<S> batch =
          detail::assemble_batch<S>(train_set, order, b, e, net.input_shape);
      TargetBatch<S> targets =
          detail::assemble_targets<S>(train_set, order, b, e, head);
      ForwardResult<S> fw = network_forward(net, batch);
      LossGrad<S> lg = head_loss(fw.output, head, targets);
      NetGrads<S> grads = network_backward(net, fw, batch, lg.grad);
      for (int i = 0; i < net.num_layers(); ++i) {
        if (net.weights[i].empty()) continue;
        sgd_momentum_step(net.weights[i], grads.weights[i], net.vel_weights[i],
                          lr, config.momentum);
        sgd_momentum_step(net.biases[i], grads.biases[i], net.vel_biases[i],
                          lr, config.momentum);
      }
      loss_sum += lg.loss * static_cast<double>(e - b);
    }
    const double train_loss = loss_sum / static_cast<double>(train_set.size());

    EvalResult<S> val = evaluate(net, head, valid_set, config.batch_size);
    const double criterion = detail::validation_criterion(val, valid_set, head);
    result.log.rows.push_back({epoch, train_loss, criterion, lr});

    if (result.log.best_epoch < 0 || criterion < best_criterion) {
      best_criterion = criterion;
      result.log.best_epoch = epoch;
      best_weights = net.weights;
      best_biases = net.biases;
    }
    if (config.patience > 0 &&
        epoch - result.log.best_epoch >= config.patience) {
      break;
    }
  }

  net.weights = std::move(best_weights);
  net.biases = std::move(best_biases);
  net.mode = Mode::Eval;
  result.net = std::move(net);
  return result;
}

struct SplitIndices {
  std::vector<std::size_t> train, valid, test;
};

// Seeded shuffle then contiguous split. All three parts must be non-empty.
inline SplitIndices split_dataset(std::size_t count,
                                  const std::array<double, 3>& fractions,
                                  std::uint64_t seed) {
  const double sum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(sum - 1.0) > 1e-6) {
    throw ParameterError("split fractions must sum to 1, got " +
                         std::to_string(sum));
  }
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  detail::seeded_shuffle(order, SeededRng(seed));
  const auto n_train = static_cast<std::size_t>(
      std::llround(fractions[0] * static_cast<double>(count)));
  const auto n_valid = static_cast<std::size_t>(
      std::llround(fractions[1] * static_cast<double>(count)));
  if (n_train == 0 || n_valid == 0 || n_train + n_valid >= count) {
    throw DataError("split produces an empty part (count " +
                    std::to_string(count) + ")");
  }
  SplitIndices s;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.valid.assign(order.begin() + n_train, order.begin() + n_train + n_valid);
  s.test.assign(order.begin() + n_train + n_valid, order.end());
  return s;
}

}  // namespace fgr
