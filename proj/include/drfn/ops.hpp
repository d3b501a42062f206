#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>

#include "drfn/tensor.hpp"

namespace drfn {

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Cross-correlation layer. weight is (out_c, in_c, k, k); bias is (out_c,1,1,1).
template <typename T>
struct Conv2dParams {
  BasicTensor<T> weight;
  BasicTensor<T> bias;
  ConvGeometry geometry;

  std::size_t out_channels() const { return weight.n(); }
  std::size_t in_channels() const { return weight.c(); }
  std::size_t kernel() const { return weight.h(); }
};

/// Adjoint of strided convolution. weight is (in_c, out_c, k, k); bias is (out_c,1,1,1).
template <typename T>
struct TransposedConv2dParams {
  BasicTensor<T> weight;
  BasicTensor<T> bias;
  ConvGeometry geometry;

  std::size_t in_channels() const { return weight.n(); }
  std::size_t out_channels() const { return weight.c(); }
  std::size_t kernel() const { return weight.h(); }
};

/// Per-channel negative slopes, stored as (c,1,1,1).
template <typename T>
struct PReluParams {
  BasicTensor<T> slope;

  std::size_t channels() const { return slope.n(); }
};

template <typename T>
struct ConvGrads {
  BasicTensor<T> grad_x;
  BasicTensor<T> grad_weight;
  BasicTensor<T> grad_bias;
};

template <typename T>
struct PReluGrads {
  BasicTensor<T> grad_x;
  BasicTensor<T> grad_slope;
};

/// floor((in + 2*pad - k)/stride) + 1. Throws ShapeError when that is < 1.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, ConvGeometry g);

/// (in - 1)*stride - 2*pad + k. Throws ShapeError when that is < 1.
std::size_t transposed_conv_output_extent(std::size_t in, std::size_t kernel, ConvGeometry g);

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const Conv2dParams<T>& p);

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const Conv2dParams<T>& p, const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> transposed_conv2d_forward(const BasicTensor<T>& x, const TransposedConv2dParams<T>& p);

template <typename T>
ConvGrads<T> transposed_conv2d_backward(const BasicTensor<T>& x, const TransposedConv2dParams<T>& p,
                                        const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> prelu_forward(const BasicTensor<T>& x, const PReluParams<T>& p);

/// x == 0 takes the positive branch.
template <typename T>
PReluGrads<T> prelu_backward(const BasicTensor<T>& x, const PReluParams<T>& p, const BasicTensor<T>& grad_out);

/// Central differences (f(x+e) - f(x-e)) / (x+e - (x-e)) per element. The
/// divisor is the perturbation actually representable in T, and all
/// arithmetic on f values is done in double.
template <typename T>
TensorD finite_difference_grad(const std::function<double(const BasicTensor<T>&)>& f, const BasicTensor<T>& x,
                               double epsilon);

/// ||a - b|| / max(||a||, ||b||), with 0 when both are exactly zero.
template <typename A, typename B>
double relative_error(const BasicTensor<A>& a, const BasicTensor<B>& b) {
  if (a.dims() != b.dims()) throw ShapeError("relative_error: " + a.dims().str() + " vs " + b.dims().str());
  double diff = 0.0, na = 0.0, nb = 0.0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double u = static_cast<double>(x[k]);
    const double v = static_cast<double>(y[k]);
    diff += (u - v) * (u - v);
    na += u * u;
    nb += v * v;
  }
  const double denom = std::max(na, nb);
  if (denom == 0.0) return diff == 0.0 ? 0.0 : 1.0;
  return std::sqrt(diff / denom);
}

}  // namespace drfn
