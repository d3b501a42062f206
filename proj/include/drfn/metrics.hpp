#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "drfn/image.hpp"

namespace drfn {

/// PSNR reported for identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// Removes `pixels` rows/columns from every side. Requires 2*pixels < min(h, w).
ImageY shave_border(const ImageY& img, std::size_t pixels);

/// 10*log10(1/mse) for images in [0,1]; kPsnrIdentical when mse == 0.
double psnr(const ImageY& a, const ImageY& b);

/// Mean SSIM over all valid positions of an 11x11 Gaussian window
/// (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1.
double ssim(const ImageY& a, const ImageY& b);

struct ImageScore {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<std::string> error;  ///< set when the pair could not be scored
};

struct EvalReport {
  std::vector<ImageScore> per_image;  ///< ordered by name
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::size_t scale = 0;
  std::size_t shave = 0;

  std::size_t failures() const;
  std::string to_text() const;
  std::string to_csv() const;
};

/// Shaves `shave` pixels from both images and scores them.
ImageScore score_pair(const ImageY& sr, const ImageY& gt, std::size_t shave);

/// Recomputes the means over the entries without an error.
void finalize_means(EvalReport& report);

/// Scores every ground-truth file against the same-named file in sr_dir
/// (luminance, border shaved by `scale`). Ground truth is cropped to a
/// multiple of scale when that makes the dims agree. Missing or undecodable
/// counterparts are listed with an error and excluded from the means.
EvalReport evaluate_dataset(const std::filesystem::path& sr_dir, const std::filesystem::path& gt_dir,
                            std::size_t scale);

/// Downscale by `scale` then upscale back with bicubic_resize, storing each
/// intermediate as 8-bit. Input is cropped to a multiple of scale first.
ImageY bicubic_baseline(const ImageY& hr, std::size_t scale);

}  // namespace drfn
