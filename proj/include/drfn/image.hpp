#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "drfn/tensor.hpp"

namespace drfn {

/// Single-channel image with values clamped to [0,1], row-major.
class ImageY {
 public:
  ImageY() = default;
  ImageY(std::size_t h, std::size_t w, float fill = 0.0f);
  /// Values outside [0,1] are clamped; NaN becomes 0.
  ImageY(std::size_t h, std::size_t w, std::vector<float> values);

  std::size_t h() const noexcept { return h_; }
  std::size_t w() const noexcept { return w_; }
  bool empty() const noexcept { return values_.empty(); }

  float operator()(std::size_t y, std::size_t x) const noexcept { return values_[y * w_ + x]; }
  std::span<const float> values() const noexcept { return values_; }

  /// Copy of the rows [y, y+hh) and columns [x, x+ww).
  ImageY crop(std::size_t y, std::size_t x, std::size_t hh, std::size_t ww) const;

  Tensor to_tensor() const;
  /// Builds an image from a (1,1,H,W) tensor, clamping into [0,1].
  static ImageY from_tensor(const Tensor& t);

  bool operator==(const ImageY&) const = default;

 private:
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::vector<float> values_;
};

/// 8-bit image with 1 (gray) or 3 (RGB, interleaved) channels.
struct Image8 {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t ch) const { return pixels[(y * w + x) * channels + ch]; }
};

/// Decodes PNG (any bit depth / colour type, reduced to 8-bit gray or RGB)
/// and binary PGM/PPM. Throws FormatError / IoError.
Image8 read_image(const std::filesystem::path& path);

/// Encodes by extension: .png, .pgm (gray only) or .ppm (RGB only).
void write_image(const std::filesystem::path& path, const Image8& img);

/// BT.601 studio-swing luma: Y = (65.481 R + 128.553 G + 24.966 B)/255 + 16,
/// returned divided by 255. Gray inputs are treated as R = G = B.
ImageY rgb_to_luminance(const Image8& img);

struct YCbCrPlanes {
  ImageY y, cb, cr;
};

/// Full BT.601 conversion, every plane scaled to [0,1] by /255.
YCbCrPlanes rgb_to_ycbcr(const Image8& img);

/// Inverse of rgb_to_ycbcr, rounded and saturated to 8 bits.
Image8 ycbcr_to_rgb(const YCbCrPlanes& planes);

/// Inverse of the gray-input luma mapping: gray = (255*Y - 16) * 255/219.
Image8 luminance_to_gray(const ImageY& y);

/// Rounds every value to the nearest multiple of 1/255.
ImageY quantize_8bit(const ImageY& img);

/// Crops the bottom/right edges so both dims are multiples of scale.
ImageY modcrop(const ImageY& img, std::size_t scale);

/// Separable cubic-convolution resize (Keys kernel, a = -0.5). When
/// shrinking, the kernel is stretched by 1/ratio so it also low-pass filters.
/// Source coordinates outside the image are clamped to the edge.
ImageY bicubic_resize(const ImageY& img, std::size_t out_h, std::size_t out_w);

/// Element k of the dihedral group: k%4 quarter turns counter-clockwise,
/// followed by a horizontal flip when k >= 4.
ImageY orient(const ImageY& img, int k);

/// Index j with orient(orient(img, k), j) == img.
int inverse_orientation(int k);

/// All eight orientations, index k = orient(img, k).
std::array<ImageY, 8> augment_eightfold(const ImageY& img);

}  // namespace drfn
