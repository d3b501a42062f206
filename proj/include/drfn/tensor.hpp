#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "drfn/errors.hpp"

namespace drfn {

/// Extents of a rank-4 NCHW tensor. Every extent is at least 1.
struct Dims {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t count() const noexcept { return n * c * h * w; }
  std::size_t plane() const noexcept { return h * w; }
  bool operator==(const Dims&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }
};

inline void require_valid(const Dims& d) {
  if (d.n == 0 || d.c == 0 || d.h == 0 || d.w == 0) {
    throw ShapeError("tensor dims must all be >= 1, got " + d.str());
  }
}

/// Dense NCHW array. Element (i,j,y,x) lives at ((i*c + j)*h + y)*w + x.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : data_(1, T(0)) {}

  explicit BasicTensor(Dims dims, T fill = T(0)) : dims_(dims) {
    require_valid(dims_);
    data_.assign(dims_.count(), fill);
  }

  BasicTensor(Dims dims, std::vector<T> values) : dims_(dims), data_(std::move(values)) {
    require_valid(dims_);
    if (data_.size() != dims_.count()) {
      throw ShapeError("tensor of dims " + dims_.str() + " needs " + std::to_string(dims_.count()) +
                       " values, got " + std::to_string(data_.size()));
    }
  }

  const Dims& dims() const noexcept { return dims_; }
  std::size_t n() const noexcept { return dims_.n; }
  std::size_t c() const noexcept { return dims_.c; }
  std::size_t h() const noexcept { return dims_.h; }
  std::size_t w() const noexcept { return dims_.w; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  std::size_t offset(std::size_t i, std::size_t j, std::size_t y, std::size_t x) const noexcept {
    return ((i * dims_.c + j) * dims_.h + y) * dims_.w + x;
  }

  T& operator()(std::size_t i, std::size_t j, std::size_t y, std::size_t x) noexcept {
    return data_[offset(i, j, y, x)];
  }
  T operator()(std::size_t i, std::size_t j, std::size_t y, std::size_t x) const noexcept {
    return data_[offset(i, j, y, x)];
  }

  T& at(std::size_t i, std::size_t j, std::size_t y, std::size_t x) {
    check_index(i, j, y, x);
    return (*this)(i, j, y, x);
  }
  T at(std::size_t i, std::size_t j, std::size_t y, std::size_t x) const {
    check_index(i, j, y, x);
    return (*this)(i, j, y, x);
  }

  /// Contiguous H*W plane of sample i, channel j.
  std::span<const T> plane(std::size_t i, std::size_t j) const noexcept {
    return std::span<const T>(data_).subspan(offset(i, j, 0, 0), dims_.plane());
  }
  std::span<T> plane(std::size_t i, std::size_t j) noexcept {
    return std::span<T>(data_).subspan(offset(i, j, 0, 0), dims_.plane());
  }

  /// All channels of sample i (c*h*w values).
  std::span<const T> sample(std::size_t i) const noexcept {
    const std::size_t len = dims_.c * dims_.plane();
    return std::span<const T>(data_).subspan(i * len, len);
  }
  std::span<T> sample(std::size_t i) noexcept {
    const std::size_t len = dims_.c * dims_.plane();
    return std::span<T>(data_).subspan(i * len, len);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return BasicTensor<U>(dims_, std::move(out));
  }

  bool operator==(const BasicTensor&) const = default;

 private:
  void check_index(std::size_t i, std::size_t j, std::size_t y, std::size_t x) const {
    if (i >= dims_.n || j >= dims_.c || y >= dims_.h || x >= dims_.w) {
      throw ShapeError("index out of range for tensor " + dims_.str());
    }
  }

  Dims dims_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Stacks three tensors along the channel axis, in argument order.
template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b, const BasicTensor<T>& c);

/// Concatenates any number (>= 1) of tensors along the channel axis.
template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> parts);

/// Channels [begin, begin+count) of a.
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& a, std::size_t begin, std::size_t count);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// a += b in place.
template <typename T>
void add_inplace(BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> map_unary(const BasicTensor<T>& a, const std::function<T(T)>& f);

/// Inner product accumulated in double.
template <typename T>
double dot(const BasicTensor<T>& a, const BasicTensor<T>& b);

// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_channels needs at least one tensor");
  const Dims& first = parts[0].dims();
  std::size_t channels = 0;
  for (const auto& p : parts) {
    if (p.n() != first.n || p.h() != first.h || p.w() != first.w) {
      throw ShapeError("concat_channels: " + p.dims().str() + " does not match " + first.str() +
                       " on n/h/w");
    }
    channels += p.c();
  }
  BasicTensor<T> out(Dims{first.n, channels, first.h, first.w});
  for (std::size_t i = 0; i < first.n; ++i) {
    auto dst = out.sample(i).begin();
    for (const auto& p : parts) dst = std::copy(p.sample(i).begin(), p.sample(i).end(), dst);
  }
  return out;
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b, const BasicTensor<T>& c) {
  const BasicTensor<T> parts[] = {a, b, c};
  return concat_channels<T>(std::span<const BasicTensor<T>>(parts));
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& a, std::size_t begin, std::size_t count) {
  if (count == 0 || begin + count > a.c()) {
    throw ShapeError("slice_channels: [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                     ") outside " + std::to_string(a.c()) + " channels");
  }
  BasicTensor<T> out(Dims{a.n(), count, a.h(), a.w()});
  const std::size_t plane = a.dims().plane();
  for (std::size_t i = 0; i < a.n(); ++i) {
    auto src = a.sample(i).subspan(begin * plane, count * plane);
    std::copy(src.begin(), src.end(), out.sample(i).begin());
  }
  return out;
}

template <typename T>
void add_inplace(BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.dims() != b.dims()) throw ShapeError("add: " + a.dims().str() + " vs " + b.dims().str());
  auto dst = a.data();
  auto src = b.data();
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  BasicTensor<T> out = a;
  add_inplace(out, b);
  return out;
}

template <typename T>
BasicTensor<T> map_unary(const BasicTensor<T>& a, const std::function<T(T)>& f) {
  BasicTensor<T> out = a;
  for (auto& v : out.data()) v = f(v);
  return out;
}

template <typename T>
double dot(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.dims() != b.dims()) throw ShapeError("dot: " + a.dims().str() + " vs " + b.dims().str());
  double acc = 0.0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t k = 0; k < x.size(); ++k) acc += static_cast<double>(x[k]) * static_cast<double>(y[k]);
  return acc;
}

}  // namespace drfn
