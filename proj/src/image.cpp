#include "drfn/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <cctype>

#include "binary_io.hpp"

namespace drfn {
namespace {

float clamp01(float v) {
  if (!(v > 0.0f)) return 0.0f;  // also maps NaN to 0
  return v > 1.0f ? 1.0f : v;
}

std::uint8_t saturate8(double v) {
  const double r = std::round(v);
  if (r < 0.0) return 0;
  if (r > 255.0) return 255;
  return static_cast<std::uint8_t>(r);
}

// --- PNG ---------------------------------------------------------------------

Image8 read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw FormatError(path.string() + ": " + png.message, 0);
  }
  Image8 img;
  img.h = png.height;
  img.w = png.width;
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  img.channels = color ? 3 : 1;
  img.pixels.resize(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw FormatError(path.string() + ": " + msg, 0);
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Image8& img) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.w);
  png.height = static_cast<png_uint_32>(img.h);
  png.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, img.pixels.data(), 0, nullptr)) {
    throw IoError("cannot write " + path.string() + ": " + png.message);
  }
}

// --- PGM / PPM (binary P5 / P6, maxval 255) ----------------------------------

Image8 read_pnm(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::size_t pos = 2;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* field) {
    skip_space();
    std::size_t v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    if (pos == start) throw FormatError(path.string() + ": bad " + field, pos);
    return v;
  };
  Image8 img;
  img.channels = bytes[1] == '5' ? 1 : 3;
  img.w = number("width");
  img.h = number("height");
  const std::size_t maxval = number("maxval");
  if (maxval != 255) throw FormatError(path.string() + ": only maxval 255 is supported", pos);
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError(path.string() + ": bad header", pos);
  ++pos;
  const std::size_t need = img.w * img.h * img.channels;
  if (img.w == 0 || img.h == 0) throw FormatError(path.string() + ": empty image", pos);
  if (bytes.size() - pos < need) throw FormatError(path.string() + ": truncated pixel data", bytes.size());
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return img;
}

void write_pnm(const std::filesystem::path& path, const Image8& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << (img.channels == 1 ? "P5" : "P6") << "\n" << img.w << " " << img.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("short write to " + path.string());
}

// --- cubic convolution -------------------------------------------------------

double keys_cubic(double x) {
  const double ax = std::abs(x);
  const double ax2 = ax * ax;
  const double ax3 = ax2 * ax;
  if (ax <= 1.0) return 1.5 * ax3 - 2.5 * ax2 + 1.0;
  if (ax <= 2.0) return -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0;
  return 0.0;
}

struct Contribution {
  std::vector<std::size_t> index;
  std::vector<double> weight;
};

// Source taps and weights for each output sample along one axis.
std::vector<Contribution> contributions(std::size_t in_len, std::size_t out_len) {
  const double ratio = static_cast<double>(out_len) / static_cast<double>(in_len);
  const bool shrink = ratio < 1.0;
  const double width = shrink ? 4.0 / ratio : 4.0;
  const auto taps = static_cast<std::ptrdiff_t>(std::ceil(width)) + 2;
  std::vector<Contribution> out(out_len);
  for (std::size_t j = 0; j < out_len; ++j) {
    // 1-based output position mapped into 1-based input coordinates (pixel centres aligned).
    const double u = static_cast<double>(j + 1) / ratio + 0.5 * (1.0 - 1.0 / ratio);
    const auto left = static_cast<std::ptrdiff_t>(std::floor(u - width / 2.0));
    Contribution& c = out[j];
    double total = 0.0;
    for (std::ptrdiff_t t = 0; t < taps; ++t) {
      const std::ptrdiff_t idx = left + t;
      const double d = u - static_cast<double>(idx);
      const double wgt = shrink ? ratio * keys_cubic(ratio * d) : keys_cubic(d);
      if (wgt == 0.0) continue;
      const std::ptrdiff_t clamped = std::clamp<std::ptrdiff_t>(idx, 1, static_cast<std::ptrdiff_t>(in_len));
      c.index.push_back(static_cast<std::size_t>(clamped - 1));
      c.weight.push_back(wgt);
      total += wgt;
    }
    for (auto& wgt : c.weight) wgt /= total;
  }
  return out;
}

}  // namespace

// --- ImageY ------------------------------------------------------------------

ImageY::ImageY(std::size_t h, std::size_t w, float fill) : h_(h), w_(w), values_(h * w, clamp01(fill)) {}

ImageY::ImageY(std::size_t h, std::size_t w, std::vector<float> values) : h_(h), w_(w), values_(std::move(values)) {
  if (values_.size() != h_ * w_) {
    throw ShapeError("ImageY " + std::to_string(h_) + "x" + std::to_string(w_) + " given " +
                     std::to_string(values_.size()) + " values");
  }
  for (auto& v : values_) v = clamp01(v);
}

ImageY ImageY::crop(std::size_t y, std::size_t x, std::size_t hh, std::size_t ww) const {
  if (y + hh > h_ || x + ww > w_) throw ShapeError("crop outside image bounds");
  std::vector<float> out(hh * ww);
  for (std::size_t r = 0; r < hh; ++r) {
    std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>((y + r) * w_ + x), ww,
                out.begin() + static_cast<std::ptrdiff_t>(r * ww));
  }
  return ImageY(hh, ww, std::move(out));
}

Tensor ImageY::to_tensor() const { return Tensor(Dims{1, 1, h_, w_}, values_); }

ImageY ImageY::from_tensor(const Tensor& t) {
  if (t.n() != 1 || t.c() != 1) throw ShapeError("from_tensor expects (1,1,H,W), got " + t.dims().str());
  return ImageY(t.h(), t.w(), t.values());
}

// --- I/O -----------------------------------------------------------------------

Image8 read_image(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return read_png(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) return read_pnm(path, bytes);
  throw FormatError(path.string() + ": not a PNG, PGM or PPM file", 0);
}

void write_image(const std::filesystem::path& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3) throw ShapeError("write_image: channels must be 1 or 3");
  if (img.pixels.size() != img.h * img.w * img.channels) throw ShapeError("write_image: pixel buffer size mismatch");
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (ext == ".png") return write_png(path, img);
  if ((ext == ".pgm" && img.channels == 1) || (ext == ".ppm" && img.channels == 3)) return write_pnm(path, img);
  throw IoError("cannot encode a " + std::to_string(img.channels) + "-channel image as '" + ext + "'");
}

// --- colour --------------------------------------------------------------------

namespace {

struct Rgb {
  double r, g, b;
};

Rgb pixel_rgb(const Image8& img, std::size_t y, std::size_t x) {
  if (img.channels == 1) {
    const double v = img.at(y, x, 0);
    return {v, v, v};
  }
  return {double(img.at(y, x, 0)), double(img.at(y, x, 1)), double(img.at(y, x, 2))};
}

double luma(const Rgb& p) { return (65.481 * p.r + 128.553 * p.g + 24.966 * p.b) / 255.0 + 16.0; }
double chroma_b(const Rgb& p) { return (-37.797 * p.r - 74.203 * p.g + 112.0 * p.b) / 255.0 + 128.0; }
double chroma_r(const Rgb& p) { return (112.0 * p.r - 93.786 * p.g - 18.214 * p.b) / 255.0 + 128.0; }

void require_channels(const Image8& img) {
  if (img.channels != 1 && img.channels != 3) throw ShapeError("expected a gray or RGB image");
  if (img.pixels.size() != img.h * img.w * img.channels) throw ShapeError("pixel buffer size mismatch");
}

}  // namespace

ImageY rgb_to_luminance(const Image8& img) {
  require_channels(img);
  std::vector<float> v(img.h * img.w);
  for (std::size_t y = 0; y < img.h; ++y) {
    for (std::size_t x = 0; x < img.w; ++x) v[y * img.w + x] = static_cast<float>(luma(pixel_rgb(img, y, x)) / 255.0);
  }
  return ImageY(img.h, img.w, std::move(v));
}

YCbCrPlanes rgb_to_ycbcr(const Image8& img) {
  require_channels(img);
  const std::size_t n = img.h * img.w;
  std::vector<float> y(n), cb(n), cr(n);
  for (std::size_t r = 0; r < img.h; ++r) {
    for (std::size_t c = 0; c < img.w; ++c) {
      const Rgb p = pixel_rgb(img, r, c);
      y[r * img.w + c] = static_cast<float>(luma(p) / 255.0);
      cb[r * img.w + c] = static_cast<float>(chroma_b(p) / 255.0);
      cr[r * img.w + c] = static_cast<float>(chroma_r(p) / 255.0);
    }
  }
  return {ImageY(img.h, img.w, std::move(y)), ImageY(img.h, img.w, std::move(cb)), ImageY(img.h, img.w, std::move(cr))};
}

Image8 ycbcr_to_rgb(const YCbCrPlanes& planes) {
  const std::size_t h = planes.y.h(), w = planes.y.w();
  if (planes.cb.h() != h || planes.cb.w() != w || planes.cr.h() != h || planes.cr.w() != w) {
    throw ShapeError("ycbcr_to_rgb: plane dims differ");
  }
  // Inverse of the forward BT.601 matrix (rows R, G, B; columns Y-16, Cb-128, Cr-128), times 255.
  constexpr double m[3][3] = {{1.16438356, 0.0, 1.59602679},
                              {1.16438356, -0.39176229, -0.81296765},
                              {1.16438356, 2.01723214, 0.0}};
  Image8 out{h, w, 3, std::vector<std::uint8_t>(h * w * 3)};
  for (std::size_t k = 0; k < h * w; ++k) {
    const double yy = planes.y.values()[k] * 255.0 - 16.0;
    const double cb = planes.cb.values()[k] * 255.0 - 128.0;
    const double cr = planes.cr.values()[k] * 255.0 - 128.0;
    for (int ch = 0; ch < 3; ++ch) out.pixels[k * 3 + ch] = saturate8(m[ch][0] * yy + m[ch][1] * cb + m[ch][2] * cr);
  }
  return out;
}

Image8 luminance_to_gray(const ImageY& y) {
  Image8 out{y.h(), y.w(), 1, std::vector<std::uint8_t>(y.h() * y.w())};
  for (std::size_t k = 0; k < out.pixels.size(); ++k) {
    out.pixels[k] = saturate8((y.values()[k] * 255.0 - 16.0) * 255.0 / 219.0);
  }
  return out;
}

ImageY quantize_8bit(const ImageY& img) {
  std::vector<float> v(img.values().begin(), img.values().end());
  for (auto& x : v) x = static_cast<float>(std::round(static_cast<double>(x) * 255.0) / 255.0);
  return ImageY(img.h(), img.w(), std::move(v));
}

ImageY modcrop(const ImageY& img, std::size_t scale) {
  if (scale == 0) throw ConfigError("modcrop: scale must be >= 1");
  return img.crop(0, 0, img.h() - img.h() % scale, img.w() - img.w() % scale);
}

// --- resampling ----------------------------------------------------------------

ImageY bicubic_resize(const ImageY& img, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ShapeError("bicubic_resize: output dims must be >= 1");
  if (img.empty()) throw ShapeError("bicubic_resize: empty input");
  const std::size_t in_h = img.h(), in_w = img.w();

  // Vertical pass into (out_h, in_w), then horizontal pass, in double.
  const auto rows = contributions(in_h, out_h);
  std::vector<double> mid(out_h * in_w, 0.0);
  for (std::size_t j = 0; j < out_h; ++j) {
    const Contribution& c = rows[j];
    double* dst = mid.data() + j * in_w;
    for (std::size_t t = 0; t < c.index.size(); ++t) {
      const float* src = img.values().data() + c.index[t] * in_w;
      for (std::size_t x = 0; x < in_w; ++x) dst[x] += c.weight[t] * src[x];
    }
  }
  const auto cols = contributions(in_w, out_w);
  std::vector<float> out(out_h * out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double* src = mid.data() + y * in_w;
    for (std::size_t i = 0; i < out_w; ++i) {
      const Contribution& c = cols[i];
      double acc = 0.0;
      for (std::size_t t = 0; t < c.index.size(); ++t) acc += c.weight[t] * src[c.index[t]];
      out[y * out_w + i] = static_cast<float>(acc);
    }
  }
  return ImageY(out_h, out_w, std::move(out));
}

// --- augmentation ------------------------------------------------------------------

namespace {

ImageY rotate_ccw(const ImageY& img) {
  const std::size_t h = img.h(), w = img.w();
  std::vector<float> out(h * w);
  // Result is w x h; out(y, x) = in(x, w-1-y).
  for (std::size_t y = 0; y < w; ++y) {
    for (std::size_t x = 0; x < h; ++x) out[y * h + x] = img(x, w - 1 - y);
  }
  return ImageY(w, h, std::move(out));
}

ImageY flip_horizontal(const ImageY& img) {
  const std::size_t h = img.h(), w = img.w();
  std::vector<float> out(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) out[y * w + x] = img(y, w - 1 - x);
  }
  return ImageY(h, w, std::move(out));
}

}  // namespace

ImageY orient(const ImageY& img, int k) {
  if (k < 0 || k > 7) throw ConfigError("orientation index must be in [0,7]");
  ImageY out = img;
  for (int r = 0; r < k % 4; ++r) out = rotate_ccw(out);
  if (k >= 4) out = flip_horizontal(out);
  return out;
}

int inverse_orientation(int k) {
  if (k < 0 || k > 7) throw ConfigError("orientation index must be in [0,7]");
  // Flip-after-rotation elements are involutions; pure rotations invert to the opposite turn.
  return k >= 4 ? k : (4 - k) % 4;
}

std::array<ImageY, 8> augment_eightfold(const ImageY& img) {
  std::array<ImageY, 8> out;
  for (int k = 0; k < 8; ++k) out[static_cast<std::size_t>(k)] = orient(img, k);
  return out;
}

}  // namespace drfn
