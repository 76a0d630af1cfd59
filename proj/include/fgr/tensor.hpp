#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cassert>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "fgr/error.hpp"
#include "fgr/parallel.hpp"
#include "fgr/rng.hpp"

namespace fgr {

inline constexpr int kMaxRank = 4;

// Rank 1..4 row-major extent list. Small enough to pass by value.
class Shape {
 public:
  Shape() = default;

  Shape(std::initializer_list<int> dims) {
    if (dims.size() < 1 || dims.size() > kMaxRank) {
      throw DimensionError("shape rank must be 1..4, got " +
                           std::to_string(dims.size()));
    }
    rank_ = static_cast<int>(dims.size());
    int i = 0;
    for (int d : dims) {
      if (d < 1) throw DimensionError("shape extent must be positive: " + str_of(dims));
      dims_[i++] = d;
    }
  }

  explicit Shape(const std::vector<int>& dims)
      : Shape(from_range(dims.begin(), dims.end())) {}

  int rank() const { return rank_; }

  int operator[](int axis) const {
    assert(axis >= 0 && axis < rank_);
    return dims_[axis];
  }

  long long total() const {
    long long n = 1;
    for (int i = 0; i < rank_; ++i) n *= dims_[i];
    return n;
  }

  bool operator==(const Shape& o) const {
    if (rank_ != o.rank_) return false;
    for (int i = 0; i < rank_; ++i)
      if (dims_[i] != o.dims_[i]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::string s;
    for (int i = 0; i < rank_; ++i) {
      if (i) s += 'x';
      s += std::to_string(dims_[i]);
    }
    return s.empty() ? "<empty>" : s;
  }

 private:
  static Shape from_range(std::vector<int>::const_iterator b,
                          std::vector<int>::const_iterator e) {
    Shape s;
    auto n = std::distance(b, e);
    if (n < 1 || n > kMaxRank)
      throw DimensionError("shape rank must be 1..4, got " + std::to_string(n));
    s.rank_ = static_cast<int>(n);
    for (int i = 0; b != e; ++b, ++i) {
      if (*b < 1) throw DimensionError("shape extent must be positive");
      s.dims_[i] = *b;
    }
    return s;
  }

  static std::string str_of(std::initializer_list<int> dims) {
    std::string s;
    for (int d : dims) {
      if (!s.empty()) s += 'x';
      s += std::to_string(d);
    }
    return s;
  }

  std::array<int, kMaxRank> dims_{};
  int rank_ = 0;
};

// Dense row-major tensor of rank 1..4. Element (i, j) of an m x n tensor
// lives at flat index i*n + j. Values are immutable in spirit: operations
// return fresh tensors rather than mutating inputs (training code mutates
// its own parameter tensors in place through data()).
template <typename S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(shape), data_(shape.total(), S(0)) {}

  Tensor(Shape shape, std::vector<S> data)
      : shape_(shape), data_(std::move(data)) {
    if (static_cast<long long>(data_.size()) != shape_.total()) {
      throw DimensionError("data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_.str());
    }
  }

  static Tensor full(Shape shape, S value) {
    Tensor t(shape);
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return shape_.rank(); }
  int dim(int axis) const { return shape_[axis]; }
  long long size() const { return static_cast<long long>(data_.size()); }
  bool empty() const { return data_.empty(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }

  S& operator[](long long i) { return data_[i]; }
  const S& operator[](long long i) const { return data_[i]; }

  S& at(int i) { assert(rank() == 1); return data_[i]; }
  S at(int i) const { assert(rank() == 1); return data_[i]; }
  S& at(int i, int j) {
    assert(rank() == 2);
    return data_[static_cast<long long>(i) * shape_[1] + j];
  }
  S at(int i, int j) const {
    assert(rank() == 2);
    return data_[static_cast<long long>(i) * shape_[1] + j];
  }
  S& at(int i, int j, int k) {
    assert(rank() == 3);
    return data_[(static_cast<long long>(i) * shape_[1] + j) * shape_[2] + k];
  }
  S at(int i, int j, int k) const {
    assert(rank() == 3);
    return data_[(static_cast<long long>(i) * shape_[1] + j) * shape_[2] + k];
  }
  S& at(int i, int j, int k, int l) {
    assert(rank() == 4);
    return data_[((static_cast<long long>(i) * shape_[1] + j) * shape_[2] + k) *
                     shape_[3] + l];
  }
  S at(int i, int j, int k, int l) const {
    assert(rank() == 4);
    return data_[((static_cast<long long>(i) * shape_[1] + j) * shape_[2] + k) *
                     shape_[3] + l];
  }

  // Same data, new extents; element count must match exactly.
  Tensor reshaped(Shape shape) const {
    if (shape.total() != shape_.total()) {
      throw DimensionError("cannot reshape " + shape_.str() + " to " +
                           shape.str());
    }
    return Tensor(shape, data_);
  }

 private:
  Shape shape_;
  std::vector<S> data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

template <typename S>
using EigenMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// C (m x n) = op(A) * op(B), all row-major. The output is split into fixed
// 64-row tiles computed independently (possibly in parallel): every element
// of C is produced by exactly one Eigen product of fixed size, so the result
// is bitwise identical for any worker count.
template <typename S>
void gemm(int m, int n, int k, const S* a, bool trans_a, const S* b,
          bool trans_b, S* c) {
  using Map = Eigen::Map<const EigenMat<S>>;
  using MutMap = Eigen::Map<EigenMat<S>>;
  constexpr int kTile = 64;
  const int tiles = (m + kTile - 1) / kTile;
  parallel_for(static_cast<std::size_t>(tiles), [&](std::size_t t) {
    const int r0 = static_cast<int>(t) * kTile;
    const int rows = std::min(kTile, m - r0);
    MutMap ct(c + static_cast<long long>(r0) * n, rows, n);
    if (!trans_a && !trans_b) {
      ct.noalias() = Map(a + static_cast<long long>(r0) * k, rows, k) * Map(b, k, n);
    } else if (!trans_a && trans_b) {
      ct.noalias() =
          Map(a + static_cast<long long>(r0) * k, rows, k) * Map(b, n, k).transpose();
    } else if (trans_a && !trans_b) {
      ct.noalias() = Map(a, k, m).middleCols(r0, rows).transpose() * Map(b, k, n);
    } else {
      ct.noalias() = Map(a, k, m).middleCols(r0, rows).transpose() *
                     Map(b, n, k).transpose();
    }
  });
}

template <typename S, typename Fn>
Tensor<S> tensor_map(const Tensor<S>& t, Fn&& f) {
  Tensor<S> out(t.shape());
  const S* src = t.data();
  S* dst = out.data();
  for (long long i = 0; i < t.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename S>
Tensor<S> tensor_matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + a.shape().str() + " vs " +
                         b.shape().str());
  }
  Tensor<S> c(Shape{a.dim(0), b.dim(1)});
  gemm(a.dim(0), b.dim(1), a.dim(1), a.data(), false, b.data(), false,
       c.data());
  return c;
}

enum class Reduce { Sum, Mean, Max, Argmax };

// Output drops the reduced axis (a rank-1 input reduces to shape {1}).
// Argmax reports the first maximal index as a value of S.
template <typename S>
Tensor<S> tensor_reduce(const Tensor<S>& t, int axis, Reduce kind) {
  if (axis < 0 || axis >= t.rank()) {
    throw DimensionError("reduce axis " + std::to_string(axis) +
                         " out of range for shape " + t.shape().str());
  }
  long long outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= t.dim(i);
  for (int i = axis + 1; i < t.rank(); ++i) inner *= t.dim(i);
  const long long extent = t.dim(axis);

  std::vector<int> out_dims;
  for (int i = 0; i < t.rank(); ++i)
    if (i != axis) out_dims.push_back(t.dim(i));
  if (out_dims.empty()) out_dims.push_back(1);
  Tensor<S> out{Shape(out_dims)};

  const S* src = t.data();
  S* dst = out.data();
  for (long long o = 0; o < outer; ++o) {
    for (long long in = 0; in < inner; ++in) {
      const S* base = src + o * extent * inner + in;
      switch (kind) {
        case Reduce::Sum:
        case Reduce::Mean: {
          double acc = 0.0;
          for (long long e = 0; e < extent; ++e) acc += base[e * inner];
          if (kind == Reduce::Mean) acc /= static_cast<double>(extent);
          dst[o * inner + in] = static_cast<S>(acc);
          break;
        }
        case Reduce::Max: {
          S best = base[0];
          for (long long e = 1; e < extent; ++e)
            best = std::max(best, base[e * inner]);
          dst[o * inner + in] = best;
          break;
        }
        case Reduce::Argmax: {
          S best = base[0];
          long long arg = 0;
          for (long long e = 1; e < extent; ++e) {
            if (base[e * inner] > best) {
              best = base[e * inner];
              arg = e;
            }
          }
          dst[o * inner + in] = static_cast<S>(arg);
          break;
        }
      }
    }
  }
  return out;
}

namespace detail {
template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b,
                      const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + " shape mismatch: " +
                         a.shape().str() + " vs " + b.shape().str());
  }
}
}  // namespace detail

// No broadcasting anywhere: shapes must match exactly.
template <typename S>
Tensor<S> tensor_add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "add");
  Tensor<S> out(a.shape());
  for (long long i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename S>
Tensor<S> tensor_sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor<S> out(a.shape());
  for (long long i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

template <typename S>
Tensor<S> tensor_hadamard(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "hadamard");
  Tensor<S> out(a.shape());
  for (long long i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

template <typename S>
Tensor<S> tensor_scale(const Tensor<S>& a, S factor) {
  return tensor_map(a, [factor](S v) { return v * factor; });
}

// Uniform draws in [low, high); deterministic for a given rng state.
template <typename S = float>
Tensor<S> rng_uniform(SeededRng& rng, double low, double high, Shape shape) {
  if (!(low < high)) {
    throw ParameterError("rng_uniform requires low < high, got [" +
                         std::to_string(low) + ", " + std::to_string(high) + ")");
  }
  Tensor<S> out(shape);
  for (long long i = 0; i < out.size(); ++i)
    out[i] = static_cast<S>(rng.uniform(low, high));
  return out;
}

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  Tensor<To> out(t.shape());
  for (long long i = 0; i < t.size(); ++i) out[i] = static_cast<To>(t[i]);
  return out;
}

}  // namespace fgr
