#include "drfn/dataset.hpp"

#include <algorithm>

#include "binary_io.hpp"

namespace drfn {
namespace {

constexpr std::string_view kArchiveMagic = "DRFP";

}  // namespace

std::size_t default_lr_patch(std::uint32_t scale) { return scale >= 8 ? 16 : 32; }

std::vector<PatchPair> extract_patch_pairs(const ImageY& hr, std::uint32_t scale, std::size_t lr_patch,
                                           std::size_t stride) {
  if (scale < 1) throw ConfigError("extract_patch_pairs: scale must be >= 1");
  if (lr_patch < 1 || stride < 1) throw ConfigError("extract_patch_pairs: patch and stride must be >= 1");
  std::vector<PatchPair> pairs;
  if (hr.h() < scale * lr_patch || hr.w() < scale * lr_patch) return pairs;

  const ImageY cropped = modcrop(hr, scale);
  const ImageY lr = bicubic_resize(cropped, cropped.h() / scale, cropped.w() / scale);
  const std::size_t hp = lr_patch * scale;
  for (std::size_t y = 0; y + lr_patch <= lr.h(); y += stride) {
    for (std::size_t x = 0; x + lr_patch <= lr.w(); x += stride) {
      pairs.push_back({lr.crop(y, x, lr_patch, lr_patch).to_tensor(),
                       cropped.crop(y * scale, x * scale, hp, hp).to_tensor()});
    }
  }
  return pairs;
}

std::vector<std::uint8_t> encode_archive(const PatchArchive& archive) {
  detail::ByteWriter w;
  w.raw(kArchiveMagic);
  w.u32(kArchiveVersion);
  w.u32(archive.scale);
  w.u32(archive.lr_patch);
  w.u64(archive.pairs.size());
  const std::size_t lr_len = std::size_t(archive.lr_patch) * archive.lr_patch;
  const std::size_t hr_len = lr_len * archive.scale * archive.scale;
  for (const auto& p : archive.pairs) {
    if (p.lr.size() != lr_len || p.hr.size() != hr_len) {
      throw ShapeError("encode_archive: pair dims do not match the archive's scale / lr_patch");
    }
    w.f32s(p.lr.data());
    w.f32s(p.hr.data());
  }
  return w.take();
}

PatchArchive decode_archive(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "patch archive");
  r.expect_magic(kArchiveMagic);
  const std::uint32_t version = r.u32("version");
  if (version != kArchiveVersion) r.fail("unsupported version " + std::to_string(version));
  PatchArchive a;
  a.scale = r.u32("scale");
  a.lr_patch = r.u32("lr_patch");
  if (a.scale < 1 || a.lr_patch < 1) r.fail("scale and lr_patch must be >= 1");
  const std::uint64_t count = r.u64("pair count");
  const std::size_t p = a.lr_patch;
  const std::size_t hp = p * a.scale;
  const std::uint64_t pair_bytes = 4ull * (p * p + hp * hp);
  if (count > r.remaining() / pair_bytes) r.fail("truncated payload for " + std::to_string(count) + " pairs");
  a.pairs.reserve(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    PatchPair pair{Tensor(Dims{1, 1, p, p}), Tensor(Dims{1, 1, hp, hp})};
    r.f32s(pair.lr.data(), "lr patch");
    r.f32s(pair.hr.data(), "hr patch");
    a.pairs.push_back(std::move(pair));
  }
  if (r.remaining() != 0) r.fail("trailing bytes after last pair");
  return a;
}

void save_archive(const PatchArchive& archive, const std::filesystem::path& path) {
  detail::write_file(path, encode_archive(archive));
}

PatchArchive load_archive(const std::filesystem::path& path) { return decode_archive(detail::read_file(path)); }

std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
  std::sort(files.begin(), files.end());
  return files;
}

DatasetBuild build_dataset(const std::filesystem::path& hr_dir, const DatasetOptions& opts) {
  DatasetBuild out;
  out.archive.scale = opts.scale;
  const std::size_t lr_patch = opts.lr_patch == 0 ? default_lr_patch(opts.scale) : opts.lr_patch;
  out.archive.lr_patch = static_cast<std::uint32_t>(lr_patch);

  for (const auto& path : list_files(hr_dir)) {
    ImageY y;
    try {
      y = rgb_to_luminance(read_image(path));
    } catch (const Error& e) {
      out.warnings.push_back("skipping " + path.filename().string() + ": " + e.what());
      continue;
    }
    out.used.push_back(path.filename().string());
    const int orientations = opts.augment ? 8 : 1;
    for (int k = 0; k < orientations; ++k) {
      auto pairs = extract_patch_pairs(orient(y, k), opts.scale, lr_patch, opts.stride);
      std::move(pairs.begin(), pairs.end(), std::back_inserter(out.archive.pairs));
    }
  }
  if (out.used.empty()) throw IoError("no decodable images in " + hr_dir.string());
  return out;
}

}  // namespace drfn
