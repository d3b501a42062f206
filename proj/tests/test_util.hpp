#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "drfn/image.hpp"
#include "drfn/tensor.hpp"

namespace testutil {

template <typename T>
drfn::BasicTensor<T> random_tensor(drfn::Dims d, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  drfn::BasicTensor<T> t(d);
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

// Fresh, empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("drfn-" + tag + "-" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Smooth-ish deterministic test picture: gradients, a disc and stripes.
inline drfn::Image8 synthetic_gray(std::size_t h, std::size_t w, int variant) {
  drfn::Image8 img{h, w, 1, std::vector<std::uint8_t>(h * w)};
  const double cx = w * (0.3 + 0.1 * variant), cy = h * (0.6 - 0.05 * variant), r = 0.25 * std::min(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double v = 60.0 + 120.0 * double(x) / double(w) + 40.0 * double(y) / double(h);
      if (std::hypot(double(x) - cx, double(y) - cy) < r) v = 230.0 - v * 0.5;
      v += 20.0 * std::sin(0.5 * double(x + 2 * y) + variant);
      img.pixels[y * w + x] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  return img;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace testutil
