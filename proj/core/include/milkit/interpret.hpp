#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "milkit/attention.hpp"
#include "milkit/autodiff.hpp"
#include "milkit/bag.hpp"

namespace milkit {

enum class AttributionMode { attention, integrated_gradients };

std::string attribution_mode_name(AttributionMode mode);

/// Grid (attention) or pixel (IG) field of relevance scores for one slide.
/// Attention maps are non-negative and sum to 1 over non-background cells;
/// IG maps are signed per-pixel attributions summed over channels.
struct AttributionMap {
  std::string slide_id;
  AttributionMode mode = AttributionMode::attention;
  int rows = 0;
  int cols = 0;
  std::vector<double> values;  // row-major
  std::string normalization_note;

  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
};

/// Places each instance's attention weight at its grid cell; cells that were
/// filtered out as background carry 0.
AttributionMap attention_heatmap(const Bag& bag, const AttentionWeights& weights);

/// Scalar-output differentiable function of one input tensor.
using ScalarFn = std::function<ad::Var(const ad::Var& input)>;

/// Integrated Gradients along the straight path from baseline to input with
/// a midpoint Riemann rule:
///   attribution = (x - x') * mean_s dF/dx( x' + (s+0.5)/steps * (x - x') ).
/// Returns per-element attributions with the input's shape.
Tensor integrated_gradients_raw(const ScalarFn& f, const Tensor& input, const Tensor& baseline,
                                int steps);

/// IG attribution map over a [C, H, W] (or [1, C, H, W]) input; per-pixel
/// values are summed over channels.
AttributionMap integrated_gradients(const ScalarFn& f, const std::string& slide_id,
                                    const Tensor& input, const Tensor& baseline, int steps);

constexpr int kDefaultIgSteps = 256;

/// Machine-readable map {slide_id, mode, rows, cols, values row-major}.
void write_map_json(const AttributionMap& map, const std::filesystem::path& path);
AttributionMap read_map_json(const std::filesystem::path& path);

/// 8-bit grayscale rendering, per-map min-max scaled; the applied scaling is
/// recorded in the map's normalization note on write.
void write_map_pgm(AttributionMap& map, const std::filesystem::path& path);

}  // namespace milkit
