#include "drfn/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "drfn/dataset.hpp"

namespace drfn {
namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_taps() {
  std::vector<double> g(kWindow);
  const double centre = (kWindow - 1) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    const double d = static_cast<double>(i) - centre;
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return g;
}

// 'valid' separable filtering of an h x w field.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                 const std::vector<double>& taps) {
  const std::size_t oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<double> rows(oh * w, 0.0);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t t = 0; t < kWindow; ++t) {
      const double* s = src.data() + (y + t) * w;
      double* d = rows.data() + y * w;
      for (std::size_t x = 0; x < w; ++x) d[x] += taps[t] * s[x];
    }
  }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t t = 0; t < kWindow; ++t) acc += taps[t] * rows[y * w + x + t];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

void require_same_dims(const ImageY& a, const ImageY& b, const char* op) {
  if (a.h() != b.h() || a.w() != b.w()) {
    throw ShapeError(std::string(op) + ": " + std::to_string(a.h()) + "x" + std::to_string(a.w()) + " vs " +
                     std::to_string(b.h()) + "x" + std::to_string(b.w()));
  }
}

std::string format_db(double v) {
  if (std::isinf(v)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

ImageY shave_border(const ImageY& img, std::size_t pixels) {
  if (2 * pixels >= std::min(img.h(), img.w())) {
    throw ShapeError("shave_border: cannot remove " + std::to_string(pixels) + " px from each side of " +
                     std::to_string(img.h()) + "x" + std::to_string(img.w()));
  }
  return img.crop(pixels, pixels, img.h() - 2 * pixels, img.w() - 2 * pixels);
}

double psnr(const ImageY& a, const ImageY& b) {
  require_same_dims(a, b, "psnr");
  if (a.empty()) throw ShapeError("psnr: empty images");
  double sse = 0.0;
  for (std::size_t k = 0; k < a.values().size(); ++k) {
    const double d = static_cast<double>(a.values()[k]) - static_cast<double>(b.values()[k]);
    sse += d * d;
  }
  if (sse == 0.0) return kPsnrIdentical;
  const double mse = sse / static_cast<double>(a.values().size());
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const ImageY& a, const ImageY& b) {
  require_same_dims(a, b, "ssim");
  if (a.h() < kWindow || a.w() < kWindow) {
    throw ShapeError("ssim: images must be at least 11x11, got " + std::to_string(a.h()) + "x" + std::to_string(a.w()));
  }
  const std::size_t h = a.h(), w = a.w(), n = h * w;
  std::vector<double> va(n), vb(n), aa(n), bb(n), ab(n);
  for (std::size_t k = 0; k < n; ++k) {
    va[k] = a.values()[k];
    vb[k] = b.values()[k];
    aa[k] = va[k] * va[k];
    bb[k] = vb[k] * vb[k];
    ab[k] = va[k] * vb[k];
  }
  const auto taps = gaussian_taps();
  const auto mu_a = filter_valid(va, h, w, taps);
  const auto mu_b = filter_valid(vb, h, w, taps);
  const auto e_aa = filter_valid(aa, h, w, taps);
  const auto e_bb = filter_valid(bb, h, w, taps);
  const auto e_ab = filter_valid(ab, h, w, taps);

  double total = 0.0;
  for (std::size_t k = 0; k < mu_a.size(); ++k) {
    const double ma = mu_a[k], mb = mu_b[k];
    const double var_a = e_aa[k] - ma * ma;
    const double var_b = e_bb[k] - mb * mb;
    const double cov = e_ab[k] - ma * mb;
    total += ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (var_a + var_b + kC2));
  }
  return total / static_cast<double>(mu_a.size());
}

std::size_t EvalReport::failures() const {
  std::size_t n = 0;
  for (const auto& s : per_image) n += s.error.has_value();
  return n;
}

std::string EvalReport::to_text() const {
  std::size_t width = 4;
  for (const auto& s : per_image) width = std::max(width, s.name.size());
  std::ostringstream out;
  char line[512];
  std::snprintf(line, sizeof line, "%-*s  %10s  %8s\n", int(width), "name", "PSNR(dB)", "SSIM");
  out << line;
  for (const auto& s : per_image) {
    if (s.error) {
      std::snprintf(line, sizeof line, "%-*s  ERROR: %s\n", int(width), s.name.c_str(), s.error->c_str());
    } else {
      std::snprintf(line, sizeof line, "%-*s  %10s  %8.4f\n", int(width), s.name.c_str(), format_db(s.psnr).c_str(),
                    s.ssim);
    }
    out << line;
  }
  std::snprintf(line, sizeof line, "%-*s  %10s  %8.4f\n", int(width), "MEAN", format_db(mean_psnr).c_str(), mean_ssim);
  out << line;
  out << "scale " << scale << ", shave " << shave << " px, " << per_image.size() - failures() << " scored, "
      << failures() << " failed\n";
  return out.str();
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "name,psnr,ssim\n";
  char buf[64];
  for (const auto& s : per_image) {
    if (s.error) {
      out << s.name << ",,\n";
      continue;
    }
    std::snprintf(buf, sizeof buf, "%.6f", s.ssim);
    out << s.name << "," << (std::isinf(s.psnr) ? "inf" : std::to_string(s.psnr)) << "," << buf << "\n";
  }
  std::snprintf(buf, sizeof buf, "%.6f", mean_ssim);
  out << "MEAN," << (std::isinf(mean_psnr) ? "inf" : std::to_string(mean_psnr)) << "," << buf << "\n";
  return out.str();
}

ImageScore score_pair(const ImageY& sr, const ImageY& gt, std::size_t shave) {
  const ImageY a = shave_border(sr, shave);
  const ImageY b = shave_border(gt, shave);
  return ImageScore{"", psnr(a, b), ssim(a, b), std::nullopt};
}

void finalize_means(EvalReport& report) {
  double sum_psnr = 0.0, sum_ssim = 0.0;
  std::size_t n = 0;
  for (const auto& s : report.per_image) {
    if (s.error) continue;
    sum_psnr += s.psnr;
    sum_ssim += s.ssim;
    ++n;
  }
  report.mean_psnr = n ? sum_psnr / static_cast<double>(n) : 0.0;
  report.mean_ssim = n ? sum_ssim / static_cast<double>(n) : 0.0;
}

EvalReport evaluate_dataset(const std::filesystem::path& sr_dir, const std::filesystem::path& gt_dir,
                            std::size_t scale) {
  if (scale < 1) throw ConfigError("evaluate_dataset: scale must be >= 1");
  EvalReport report;
  report.scale = scale;
  report.shave = scale;

  for (const auto& gt_path : list_files(gt_dir)) {
    ImageScore score;
    score.name = gt_path.filename().string();
    const auto sr_path = sr_dir / gt_path.filename();
    try {
      if (!std::filesystem::exists(sr_path)) throw IoError("missing counterpart " + sr_path.string());
      const ImageY sr = rgb_to_luminance(read_image(sr_path));
      ImageY gt = rgb_to_luminance(read_image(gt_path));
      if (gt.h() != sr.h() || gt.w() != sr.w()) gt = modcrop(gt, scale);
      const ImageScore s = score_pair(sr, gt, scale);
      score.psnr = s.psnr;
      score.ssim = s.ssim;
    } catch (const Error& e) {
      score.error = e.what();
    }
    report.per_image.push_back(std::move(score));
  }
  finalize_means(report);
  return report;
}

ImageY bicubic_baseline(const ImageY& hr, std::size_t scale) {
  const ImageY gt = modcrop(hr, scale);
  const ImageY lr = quantize_8bit(bicubic_resize(gt, gt.h() / scale, gt.w() / scale));
  return quantize_8bit(bicubic_resize(lr, gt.h(), gt.w()));
}

}  // namespace drfn
