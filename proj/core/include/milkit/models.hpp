#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "milkit/autodiff.hpp"
#include "milkit/image.hpp"
#include "milkit/rng.hpp"
#include "milkit/tensor.hpp"

namespace milkit {

constexpr double kSeluLambda = 1.0507009873554805;
constexpr double kSeluAlpha = 1.6732632423543772;

/// Self-normalizing activation: lambda*x for x > 0, lambda*alpha*(e^x - 1)
/// otherwise.
inline double selu(double x) {
  return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * std::expm1(x);
}

enum class Activation { selu, relu, tanh };

Activation parse_activation(const std::string& name);
std::string activation_name(Activation a);

/// Patch feature encoder: conv blocks with stride-2 max pooling, then a
/// linear layer to feature_dim. Stands in for the VGG11 feature-extractor
/// role; precomputed features can bypass it entirely via bag files.
struct EncoderConfig {
  std::vector<std::pair<int, int>> conv_blocks = {{16, 3}, {32, 3}, {64, 3}};  // (out_ch, kernel)
  Activation activation = Activation::selu;
  int feature_dim = 64;  // M
  int input_tile = 16;
  int in_channels = 1;

  void validate() const;
};

class Encoder {
 public:
  Encoder(EncoderConfig config, Rng& rng);

  /// tiles: [K, in_channels, input_tile, input_tile] -> features [K, feature_dim].
  ad::Var forward(const ad::Var& tiles) const;

  /// Value-only forward for a stack of tiles.
  Tensor encode(const Tensor& tiles) const;

  std::vector<ad::Var>& params() { return params_; }
  const std::vector<ad::Var>& params() const { return params_; }
  const EncoderConfig& config() const { return config_; }

 private:
  EncoderConfig config_;
  std::vector<ad::Var> params_;  // per block: conv w, conv b; then head w, head b
};

/// Downscaled whole-image classifier: five conv-conv-maxpool blocks with
/// SELU activations and a linear head with sigmoid output.
struct BaselineConfig {
  int input_size = 1024;
  int in_channels = 1;
  std::vector<int> channels = {8, 16, 32, 64, 64};  // exactly 5 blocks
  int kernel = 3;

  void validate() const;
};

class BaselineNet {
 public:
  BaselineNet(BaselineConfig config, Rng& rng);

  /// input: [1, in_channels, input_size, input_size] -> probability [1].
  ad::Var forward(const ad::Var& input) const;

  double predict(const Tensor& input) const;

  std::vector<ad::Var>& params() { return params_; }
  const std::vector<ad::Var>& params() const { return params_; }
  const BaselineConfig& config() const { return config_; }

 private:
  BaselineConfig config_;
  std::vector<ad::Var> params_;
};

/// Area-averaged resize of a [h, w] matrix to [th, tw]; exact fractional
/// box overlap weights, so constant inputs stay constant and the identity
/// case is a no-op.
Tensor area_resize(const Tensor& src, int target_h, int target_w);

/// Pads to square with pad value 255 (white), then area-averages down (or
/// up) to target x target. Channels are resized independently.
SlideImage downscale(const SlideImage& image, int target);

/// [channels, size, size] tensor from an image, optionally standardized to
/// zero mean / unit variance over the whole raster.
Tensor image_to_tensor(const SlideImage& image, bool standardize);

/// Fan-in-scaled normal initialization (variance 1/fan_in).
Tensor init_normal(std::vector<int> shape, int fan_in, Rng& rng);

}  // namespace milkit
