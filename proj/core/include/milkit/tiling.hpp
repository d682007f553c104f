#pragma once

#include <string>
#include <utility>
#include <vector>

#include "milkit/image.hpp"
#include "milkit/tensor.hpp"

namespace milkit {

struct Patch {
  std::string slide_id;
  int grid_row = 0;
  int grid_col = 0;
  int tile_size = 0;
  int channels = 1;
  std::vector<double> pixels;  // tile_size * tile_size * channels, interleaved
  double padded_fraction = 0.0;
  int source_pixels = 0;  // pixel positions covered by the source image

  double at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * tile_size + x) * channels + c];
  }
};

struct TileFilterStats {
  std::vector<double> intensities;  // c_p per input patch, input order
  double c_max = 0.0;
  double threshold = 0.0;  // retain_ratio * c_max
};

constexpr double kDefaultPadValue = 255.0;  // white, counted as background
constexpr double kDefaultRetainRatio = 0.95;
constexpr int kDefaultTileSize = 224;
constexpr double kNormalizeStdFloor = 1e-6;

/// Tile grid dimensions {rows, cols} = {ceil(h/t), ceil(w/t)}.
std::pair<int, int> tile_grid_dims(long long width, long long height, long long tile_size);

/// Splits the image into a full row-major grid of tile_size x tile_size
/// patches; border patches are padded with pad_value. Every source pixel
/// lands in exactly one patch.
std::vector<Patch> tile_image(const SlideImage& image, int tile_size,
                              double pad_value = kDefaultPadValue);

/// Mean intensity over all pixels and channels, padding included.
double patch_intensity(const Patch& patch);

/// Keeps patches with c_p <= retain_ratio * c_max (order preserved). If the
/// rule would discard everything, the single darkest patch is kept so no
/// slide produces an empty bag.
std::pair<std::vector<Patch>, TileFilterStats> filter_background(
    const std::vector<Patch>& patches, double retain_ratio);

/// Planar [channels, tile, tile] view of a patch (conv layout).
Tensor patch_to_tensor(const Patch& patch);

/// Zero-mean unit-variance over the whole tile; constant tiles map to zero
/// via the std floor.
Tensor normalize_tile(const Tensor& tile);

inline Tensor normalize_patch(const Patch& patch) {
  return normalize_tile(patch_to_tensor(patch));
}

}  // namespace milkit
