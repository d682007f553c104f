#include "milkit/tiling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace milkit {

std::pair<int, int> tile_grid_dims(long long width, long long height, long long tile_size) {
  if (width < 1 || height < 1) {
    throw std::invalid_argument("tile_grid_dims: image must be at least 1x1");
  }
  if (tile_size < 1) throw std::invalid_argument("tile_grid_dims: tile_size must be >= 1");
  const long long rows = (height + tile_size - 1) / tile_size;
  const long long cols = (width + tile_size - 1) / tile_size;
  return {static_cast<int>(rows), static_cast<int>(cols)};
}

std::vector<Patch> tile_image(const SlideImage& image, int tile_size, double pad_value) {
  image.validate();
  if (tile_size < 1) throw std::invalid_argument("tile_image: tile_size must be >= 1");

  const auto [rows, cols] = tile_grid_dims(image.width, image.height, tile_size);
  std::vector<Patch> patches;
  patches.reserve(static_cast<std::size_t>(rows) * cols);
  const int t = tile_size;
  const int ch = image.channels;

  for (int r = 0; r < rows; ++r) {
    const int y0 = r * t;
    const int ylim = std::min(image.height - y0, t);  // source rows in this strip
    for (int c = 0; c < cols; ++c) {
      const int x0 = c * t;
      const int xlim = std::min(image.width - x0, t);
      Patch p;
      p.slide_id = image.id;
      p.grid_row = r;
      p.grid_col = c;
      p.tile_size = t;
      p.channels = ch;
      p.pixels.assign(static_cast<std::size_t>(t) * t * ch, pad_value);
      for (int y = 0; y < ylim; ++y) {
        const double* src = &image.pixels[(static_cast<std::size_t>(y0 + y) * image.width + x0) * ch];
        double* dst = &p.pixels[static_cast<std::size_t>(y) * t * ch];
        std::copy(src, src + static_cast<std::size_t>(xlim) * ch, dst);
      }
      p.source_pixels = ylim * xlim;
      p.padded_fraction = 1.0 - static_cast<double>(p.source_pixels) / (static_cast<double>(t) * t);
      patches.push_back(std::move(p));
    }
  }
  return patches;
}

double patch_intensity(const Patch& patch) {
  double sum = 0.0;
  for (double v : patch.pixels) sum += v;
  return sum / static_cast<double>(patch.pixels.size());
}

std::pair<std::vector<Patch>, TileFilterStats> filter_background(
    const std::vector<Patch>& patches, double retain_ratio) {
  if (patches.empty()) throw std::invalid_argument("filter_background: empty patch list");
  if (!(retain_ratio > 0.0 && retain_ratio <= 1.0)) {
    throw std::invalid_argument("filter_background: retain_ratio must be in (0, 1]");
  }

  TileFilterStats stats;
  stats.intensities.reserve(patches.size());
  for (const auto& p : patches) stats.intensities.push_back(patch_intensity(p));
  stats.c_max = *std::max_element(stats.intensities.begin(), stats.intensities.end());
  stats.threshold = retain_ratio * stats.c_max;

  std::vector<Patch> kept;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    if (stats.intensities[i] <= stats.threshold) kept.push_back(patches[i]);
  }
  if (kept.empty()) {
    // keep the darkest patch, first on ties
    const std::size_t darkest =
        std::min_element(stats.intensities.begin(), stats.intensities.end()) -
        stats.intensities.begin();
    kept.push_back(patches[darkest]);
  }
  return {std::move(kept), std::move(stats)};
}

Tensor patch_to_tensor(const Patch& patch) {
  const int t = patch.tile_size, ch = patch.channels;
  Tensor out({ch, t, t});
  for (int y = 0; y < t; ++y) {
    for (int x = 0; x < t; ++x) {
      for (int c = 0; c < ch; ++c) {
        out[(static_cast<std::size_t>(c) * t + y) * t + x] = patch.at(y, x, c);
      }
    }
  }
  return out;
}

Tensor normalize_tile(const Tensor& tile) {
  const std::size_t n = tile.size();
  if (n == 0) throw std::invalid_argument("normalize_tile: empty tile");
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += tile[i];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = tile[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  const double denom = std::max(std::sqrt(var), kNormalizeStdFloor);
  Tensor out(tile.shape());
  for (std::size_t i = 0; i < n; ++i) out[i] = (tile[i] - mean) / denom;
  return out;
}

}  // namespace milkit
