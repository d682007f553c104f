#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace milkit {

/// Raster image with per-channel intensities in [0, 255] and a binary bag
/// label. Intensities are stored as doubles: downscaling produces fractional
/// values and the 8-bit quantization only happens at file I/O boundaries.
struct SlideImage {
  std::string id;
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 (grayscale) or 3 (RGB)
  std::vector<double> pixels;  // row-major, channel-interleaved
  int label = 0;

  std::size_t size() const { return pixels.size(); }
  double at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  /// Throws if dimensions are non-positive, channels unsupported, or the
  /// pixel buffer disagrees with width*height*channels.
  void validate() const;
};

/// Binary PGM (P5, grayscale) / PPM (P6, RGB), maxval 255. Values are
/// clamped to [0, 255] and rounded on write.
SlideImage read_image(const std::filesystem::path& path);
void write_image(const SlideImage& image, const std::filesystem::path& path);

struct ManifestEntry {
  std::string id;
  std::string image_path;
  int label = 0;
};

/// Slide manifest: one `id,image_path,label` record per line. Blank lines
/// and lines starting with '#' are skipped.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& path);

}  // namespace milkit
