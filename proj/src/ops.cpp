#include "drfn/ops.hpp"

#include <Eigen/Core>

#include "drfn/parallel.hpp"

namespace drfn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using MapConstMat = Eigen::Map<const RowMat<T>>;

// Geometry of one correlation window sweep: a (channels, in_h, in_w) image
// is read at out_h x out_w window positions of a k x k kernel.
struct Sweep {
  std::size_t channels, in_h, in_w, out_h, out_w, k;
  ConvGeometry g;

  std::size_t rows() const { return channels * k * k; }
  std::size_t cols() const { return out_h * out_w; }
};

// cols(row = (c*k + ky)*k + kx, col = oy*out_w + ox) = image(c, oy*s - p + ky, ox*s - p + kx), zero outside.
template <typename T>
void im2col(std::span<const T> image, const Sweep& sw, std::span<T> cols) {
  const auto s = static_cast<std::ptrdiff_t>(sw.g.stride);
  const auto pad = static_cast<std::ptrdiff_t>(sw.g.padding);
  const auto in_h = static_cast<std::ptrdiff_t>(sw.in_h);
  const auto in_w = static_cast<std::ptrdiff_t>(sw.in_w);
  std::size_t row = 0;
  for (std::size_t c = 0; c < sw.channels; ++c) {
    const T* src = image.data() + c * sw.in_h * sw.in_w;
    for (std::size_t ky = 0; ky < sw.k; ++ky) {
      for (std::size_t kx = 0; kx < sw.k; ++kx, ++row) {
        T* dst = cols.data() + row * sw.cols();
        for (std::size_t oy = 0; oy < sw.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s - pad + static_cast<std::ptrdiff_t>(ky);
          T* line = dst + oy * sw.out_w;
          if (iy < 0 || iy >= in_h) {
            std::fill(line, line + sw.out_w, T(0));
            continue;
          }
          const T* src_row = src + iy * in_w;
          for (std::size_t ox = 0; ox < sw.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * s - pad + static_cast<std::ptrdiff_t>(kx);
            line[ox] = (ix < 0 || ix >= in_w) ? T(0) : src_row[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-accumulates cols back into image (which is zeroed first).
template <typename T>
void col2im(std::span<const T> cols, const Sweep& sw, std::span<T> image) {
  std::fill(image.begin(), image.end(), T(0));
  const auto s = static_cast<std::ptrdiff_t>(sw.g.stride);
  const auto pad = static_cast<std::ptrdiff_t>(sw.g.padding);
  const auto in_h = static_cast<std::ptrdiff_t>(sw.in_h);
  const auto in_w = static_cast<std::ptrdiff_t>(sw.in_w);
  std::size_t row = 0;
  for (std::size_t c = 0; c < sw.channels; ++c) {
    T* dst = image.data() + c * sw.in_h * sw.in_w;
    for (std::size_t ky = 0; ky < sw.k; ++ky) {
      for (std::size_t kx = 0; kx < sw.k; ++kx, ++row) {
        const T* src = cols.data() + row * sw.cols();
        for (std::size_t oy = 0; oy < sw.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s - pad + static_cast<std::ptrdiff_t>(ky);
          if (iy < 0 || iy >= in_h) continue;
          const T* line = src + oy * sw.out_w;
          T* dst_row = dst + iy * in_w;
          for (std::size_t ox = 0; ox < sw.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * s - pad + static_cast<std::ptrdiff_t>(kx);
            if (ix >= 0 && ix < in_w) dst_row[ix] += line[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void check_kernel(const BasicTensor<T>& weight, const BasicTensor<T>& bias, std::size_t bias_len,
                  ConvGeometry g, const char* op) {
  if (weight.h() != weight.w()) {
    throw ShapeError(std::string(op) + ": kernel must be square, got " + weight.dims().str());
  }
  if (g.stride == 0) throw ShapeError(std::string(op) + ": stride must be >= 1");
  if (bias.size() != bias_len) {
    throw ShapeError(std::string(op) + ": bias has " + std::to_string(bias.size()) + " values, expected " +
                     std::to_string(bias_len));
  }
}

template <typename T>
Sweep conv_sweep(const BasicTensor<T>& x, const Conv2dParams<T>& p) {
  check_kernel(p.weight, p.bias, p.out_channels(), p.geometry, "conv2d");
  if (x.c() != p.in_channels()) {
    throw ShapeError("conv2d: input has " + std::to_string(x.c()) + " channels, kernel expects " +
                     std::to_string(p.in_channels()));
  }
  const std::size_t k = p.kernel();
  return Sweep{x.c(), x.h(), x.w(), conv_output_extent(x.h(), k, p.geometry),
               conv_output_extent(x.w(), k, p.geometry), k, p.geometry};
}

// For a transposed conv the "image" side of the sweep is the output.
template <typename T>
Sweep tconv_sweep(const BasicTensor<T>& x, const TransposedConv2dParams<T>& p) {
  check_kernel(p.weight, p.bias, p.out_channels(), p.geometry, "transposed_conv2d");
  if (x.c() != p.in_channels()) {
    throw ShapeError("transposed_conv2d: input has " + std::to_string(x.c()) + " channels, kernel expects " +
                     std::to_string(p.in_channels()));
  }
  const std::size_t k = p.kernel();
  return Sweep{p.out_channels(), transposed_conv_output_extent(x.h(), k, p.geometry),
               transposed_conv_output_extent(x.w(), k, p.geometry), x.h(), x.w(), k, p.geometry};
}

// Sums per-sample partial gradients in sample order, so the result does not
// depend on how samples were distributed over workers.
template <typename T>
BasicTensor<T> reduce_partials(const std::vector<BasicTensor<T>>& partials) {
  BasicTensor<T> out = partials.front();
  for (std::size_t i = 1; i < partials.size(); ++i) add_inplace(out, partials[i]);
  return out;
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, ConvGeometry g) {
  if (g.stride == 0) throw ShapeError("stride must be >= 1");
  const std::size_t padded = in + 2 * g.padding;
  if (padded < kernel) {
    throw ShapeError("convolution output would be empty: extent " + std::to_string(in) + ", kernel " +
                     std::to_string(kernel) + ", padding " + std::to_string(g.padding));
  }
  return (padded - kernel) / g.stride + 1;
}

std::size_t transposed_conv_output_extent(std::size_t in, std::size_t kernel, ConvGeometry g) {
  if (g.stride == 0) throw ShapeError("stride must be >= 1");
  const std::size_t grown = (in - 1) * g.stride + kernel;
  if (grown <= 2 * g.padding) {
    throw ShapeError("transposed convolution output would be empty: extent " + std::to_string(in) +
                     ", kernel " + std::to_string(kernel) + ", padding " + std::to_string(g.padding));
  }
  return grown - 2 * g.padding;
}

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const Conv2dParams<T>& p) {
  const Sweep sw = conv_sweep(x, p);
  const std::size_t out_c = p.out_channels();
  BasicTensor<T> out(Dims{x.n(), out_c, sw.out_h, sw.out_w});
  MapConstMat<T> weight(p.weight.data().data(), out_c, sw.rows());

  parallel_for(x.n(), [&](std::size_t i) {
    std::vector<T> cols(sw.rows() * sw.cols());
    im2col<T>(x.sample(i), sw, cols);
    MapMat<T> y(out.sample(i).data(), out_c, sw.cols());
    y.noalias() = weight * MapConstMat<T>(cols.data(), sw.rows(), sw.cols());
    for (std::size_t o = 0; o < out_c; ++o) y.row(o).array() += p.bias.data()[o];
  });
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const Conv2dParams<T>& p, const BasicTensor<T>& grad_out) {
  const Sweep sw = conv_sweep(x, p);
  const std::size_t out_c = p.out_channels();
  const Dims expected{x.n(), out_c, sw.out_h, sw.out_w};
  if (grad_out.dims() != expected) {
    throw ShapeError("conv2d_backward: grad_out " + grad_out.dims().str() + " != forward output " + expected.str());
  }

  ConvGrads<T> g{BasicTensor<T>(x.dims()), BasicTensor<T>(p.weight.dims()), BasicTensor<T>(p.bias.dims())};
  std::vector<BasicTensor<T>> gw(x.n(), BasicTensor<T>(p.weight.dims()));
  std::vector<BasicTensor<T>> gb(x.n(), BasicTensor<T>(p.bias.dims()));
  MapConstMat<T> weight(p.weight.data().data(), out_c, sw.rows());

  parallel_for(x.n(), [&](std::size_t i) {
    std::vector<T> cols(sw.rows() * sw.cols());
    im2col<T>(x.sample(i), sw, cols);
    MapConstMat<T> go(grad_out.sample(i).data(), out_c, sw.cols());
    MapMat<T>(gw[i].data().data(), out_c, sw.rows()).noalias() =
        go * MapConstMat<T>(cols.data(), sw.rows(), sw.cols()).transpose();
    for (std::size_t o = 0; o < out_c; ++o) gb[i].data()[o] = go.row(o).sum();
    MapMat<T>(cols.data(), sw.rows(), sw.cols()).noalias() = weight.transpose() * go;
    col2im<T>(cols, sw, g.grad_x.sample(i));
  });
  g.grad_weight = reduce_partials(gw);
  g.grad_bias = reduce_partials(gb);
  return g;
}

template <typename T>
BasicTensor<T> transposed_conv2d_forward(const BasicTensor<T>& x, const TransposedConv2dParams<T>& p) {
  const Sweep sw = tconv_sweep(x, p);
  const std::size_t out_c = p.out_channels();
  BasicTensor<T> out(Dims{x.n(), out_c, sw.in_h, sw.in_w});
  MapConstMat<T> weight(p.weight.data().data(), x.c(), sw.rows());

  parallel_for(x.n(), [&](std::size_t i) {
    std::vector<T> cols(sw.rows() * sw.cols());
    MapMat<T>(cols.data(), sw.rows(), sw.cols()).noalias() =
        weight.transpose() * MapConstMat<T>(x.sample(i).data(), x.c(), sw.cols());
    col2im<T>(cols, sw, out.sample(i));
    for (std::size_t o = 0; o < out_c; ++o) {
      for (auto& v : out.plane(i, o)) v += p.bias.data()[o];
    }
  });
  return out;
}

template <typename T>
ConvGrads<T> transposed_conv2d_backward(const BasicTensor<T>& x, const TransposedConv2dParams<T>& p,
                                        const BasicTensor<T>& grad_out) {
  const Sweep sw = tconv_sweep(x, p);
  const std::size_t out_c = p.out_channels();
  const Dims expected{x.n(), out_c, sw.in_h, sw.in_w};
  if (grad_out.dims() != expected) {
    throw ShapeError("transposed_conv2d_backward: grad_out " + grad_out.dims().str() + " != forward output " +
                     expected.str());
  }

  ConvGrads<T> g{BasicTensor<T>(x.dims()), BasicTensor<T>(p.weight.dims()), BasicTensor<T>(p.bias.dims())};
  std::vector<BasicTensor<T>> gw(x.n(), BasicTensor<T>(p.weight.dims()));
  std::vector<BasicTensor<T>> gb(x.n(), BasicTensor<T>(p.bias.dims()));
  MapConstMat<T> weight(p.weight.data().data(), x.c(), sw.rows());

  parallel_for(x.n(), [&](std::size_t i) {
    // grad_x is an ordinary strided convolution of grad_out with the same kernel.
    std::vector<T> cols(sw.rows() * sw.cols());
    im2col<T>(grad_out.sample(i), sw, cols);
    MapConstMat<T> gcols(cols.data(), sw.rows(), sw.cols());
    MapConstMat<T> xi(x.sample(i).data(), x.c(), sw.cols());
    MapMat<T>(g.grad_x.sample(i).data(), x.c(), sw.cols()).noalias() = weight * gcols;
    MapMat<T>(gw[i].data().data(), x.c(), sw.rows()).noalias() = xi * gcols.transpose();
    for (std::size_t o = 0; o < out_c; ++o) {
      T acc = 0;
      for (T v : grad_out.plane(i, o)) acc += v;
      gb[i].data()[o] = acc;
    }
  });
  g.grad_weight = reduce_partials(gw);
  g.grad_bias = reduce_partials(gb);
  return g;
}

template <typename T>
BasicTensor<T> prelu_forward(const BasicTensor<T>& x, const PReluParams<T>& p) {
  if (p.slope.size() != x.c()) {
    throw ShapeError("prelu: " + std::to_string(p.slope.size()) + " slopes for " + std::to_string(x.c()) +
                     " channels");
  }
  BasicTensor<T> out = x;
  for (std::size_t i = 0; i < x.n(); ++i) {
    for (std::size_t j = 0; j < x.c(); ++j) {
      const T a = p.slope.data()[j];
      for (auto& v : out.plane(i, j)) {
        if (v < T(0)) v *= a;
      }
    }
  }
  return out;
}

template <typename T>
PReluGrads<T> prelu_backward(const BasicTensor<T>& x, const PReluParams<T>& p, const BasicTensor<T>& grad_out) {
  if (p.slope.size() != x.c()) {
    throw ShapeError("prelu_backward: " + std::to_string(p.slope.size()) + " slopes for " +
                     std::to_string(x.c()) + " channels");
  }
  if (grad_out.dims() != x.dims()) {
    throw ShapeError("prelu_backward: grad_out " + grad_out.dims().str() + " != input " + x.dims().str());
  }
  PReluGrads<T> g{grad_out, BasicTensor<T>(p.slope.dims())};
  for (std::size_t j = 0; j < x.c(); ++j) {
    const T a = p.slope.data()[j];
    T acc = 0;
    for (std::size_t i = 0; i < x.n(); ++i) {
      auto xs = x.plane(i, j);
      auto gs = g.grad_x.plane(i, j);
      for (std::size_t k = 0; k < xs.size(); ++k) {
        if (xs[k] < T(0)) {
          acc += gs[k] * xs[k];
          gs[k] *= a;
        }
      }
    }
    g.grad_slope.data()[j] = acc;
  }
  return g;
}

template <typename T>
TensorD finite_difference_grad(const std::function<double(const BasicTensor<T>&)>& f, const BasicTensor<T>& x,
                               double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("finite_difference_grad: epsilon must be > 0");
  TensorD grad(x.dims());
  BasicTensor<T> probe = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const T orig = x.data()[k];
    const T up = static_cast<T>(static_cast<double>(orig) + epsilon);
    const T down = static_cast<T>(static_cast<double>(orig) - epsilon);
    probe.data()[k] = up;
    const double f_up = f(probe);
    probe.data()[k] = down;
    const double f_down = f(probe);
    probe.data()[k] = orig;
    grad.data()[k] = (f_up - f_down) / (static_cast<double>(up) - static_cast<double>(down));
  }
  return grad;
}

#define DRFN_INSTANTIATE_OPS(T)                                                                              \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const Conv2dParams<T>&);                     \
  template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const Conv2dParams<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> transposed_conv2d_forward(const BasicTensor<T>&, const TransposedConv2dParams<T>&); \
  template ConvGrads<T> transposed_conv2d_backward(const BasicTensor<T>&, const TransposedConv2dParams<T>&,   \
                                                   const BasicTensor<T>&);                                   \
  template BasicTensor<T> prelu_forward(const BasicTensor<T>&, const PReluParams<T>&);                        \
  template PReluGrads<T> prelu_backward(const BasicTensor<T>&, const PReluParams<T>&, const BasicTensor<T>&); \
  template TensorD finite_difference_grad(const std::function<double(const BasicTensor<T>&)>&,               \
                                          const BasicTensor<T>&, double);

DRFN_INSTANTIATE_OPS(float)
DRFN_INSTANTIATE_OPS(double)

}  // namespace drfn
