#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "drfn/image.hpp"
#include "drfn/tensor.hpp"

namespace drfn {

/// Aligned low/high resolution training sample; hr is scale times lr in both dims.
struct PatchPair {
  Tensor lr;
  Tensor hr;
};

/// LR patch edge used when none is given: 32 for x2/x3/x4, 16 for x8.
std::size_t default_lr_patch(std::uint32_t scale);

/// Crops hr to a multiple of scale, bicubic-downscales it, and cuts LR patches
/// on a stride grid together with the HR patches at scale times the offset.
/// Patches are ordered by (y, x). Returns nothing when no whole patch fits.
std::vector<PatchPair> extract_patch_pairs(const ImageY& hr, std::uint32_t scale, std::size_t lr_patch,
                                           std::size_t stride);

inline constexpr std::uint32_t kArchiveVersion = 1;

struct PatchArchive {
  std::uint32_t scale = 0;
  std::uint32_t lr_patch = 0;
  std::vector<PatchPair> pairs;
};

std::vector<std::uint8_t> encode_archive(const PatchArchive& archive);
PatchArchive decode_archive(std::span<const std::uint8_t> bytes);
void save_archive(const PatchArchive& archive, const std::filesystem::path& path);
PatchArchive load_archive(const std::filesystem::path& path);

struct DatasetOptions {
  std::uint32_t scale = 4;
  std::size_t lr_patch = 0;  ///< 0 selects default_lr_patch(scale)
  std::size_t stride = 4;
  bool augment = false;
};

struct DatasetBuild {
  PatchArchive archive;
  std::vector<std::string> used;      ///< file names that contributed, sorted
  std::vector<std::string> warnings;  ///< one entry per skipped file
};

/// Reads every regular file of a flat directory (sorted by name), converts to
/// luminance and extracts patch pairs; with augment each image contributes
/// all eight orientations. Undecodable files are skipped with a warning.
/// Throws IoError when the directory is missing or holds no decodable image.
DatasetBuild build_dataset(const std::filesystem::path& hr_dir, const DatasetOptions& opts);

/// Sorted regular files of a flat directory.
std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir);

}  // namespace drfn
