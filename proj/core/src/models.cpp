#include "milkit/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace milkit {

Activation parse_activation(const std::string& name) {
  if (name == "selu") return Activation::selu;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::selu: return "selu";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

namespace {

ad::Var apply_activation(const ad::Var& x, Activation a) {
  switch (a) {
    case Activation::selu: return ad::selu_v(x);
    case Activation::relu: return ad::relu_v(x);
    case Activation::tanh: return ad::tanh_v(x);
  }
  throw std::logic_error("unreachable activation");
}

}  // namespace

Tensor init_normal(std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double stddev = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = stddev * rng.normal();
  return t;
}

void EncoderConfig::validate() const {
  if (feature_dim < 1) throw std::invalid_argument("encoder: feature_dim must be >= 1");
  if (input_tile < 1) throw std::invalid_argument("encoder: input_tile must be >= 1");
  if (in_channels != 1 && in_channels != 3) {
    throw std::invalid_argument("encoder: in_channels must be 1 or 3");
  }
  if (conv_blocks.empty()) throw std::invalid_argument("encoder: at least one conv block");
  for (const auto& [out_ch, kernel] : conv_blocks) {
    if (out_ch < 1 || kernel < 1 || kernel % 2 == 0) {
      throw std::invalid_argument("encoder: conv blocks need out_channels >= 1 and odd kernel");
    }
  }
}

Encoder::Encoder(EncoderConfig config, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  int ch = config_.in_channels;
  int spatial = config_.input_tile;
  for (const auto& [out_ch, kernel] : config_.conv_blocks) {
    params_.push_back(ad::Var::leaf(
        init_normal({out_ch, ch, kernel, kernel}, ch * kernel * kernel, rng), true));
    params_.push_back(ad::Var::leaf(Tensor::zeros({out_ch}), true));
    ch = out_ch;
    spatial = (spatial + 1) / 2;
  }
  const int flat = ch * spatial * spatial;
  params_.push_back(ad::Var::leaf(init_normal({config_.feature_dim, flat}, flat, rng), true));
  params_.push_back(ad::Var::leaf(Tensor::zeros({config_.feature_dim}), true));
}

ad::Var Encoder::forward(const ad::Var& tiles) const {
  const Tensor& tv = tiles.value();
  if (tv.rank() != 4 || tv.dim(1) != config_.in_channels || tv.dim(2) != config_.input_tile ||
      tv.dim(3) != config_.input_tile) {
    throw std::invalid_argument(
        "encoder input layer: expected [K," + std::to_string(config_.in_channels) + "," +
        std::to_string(config_.input_tile) + "," + std::to_string(config_.input_tile) +
        "], got " + tv.shape_str());
  }
  ad::Var x = tiles;
  for (std::size_t b = 0; b < config_.conv_blocks.size(); ++b) {
    x = ad::conv2d(x, params_[2 * b], params_[2 * b + 1]);
    x = apply_activation(x, config_.activation);
    x = ad::maxpool2x2(x);
  }
  ad::Var flat = ad::flatten2(x);
  const ad::Var& hw = params_[params_.size() - 2];
  const ad::Var& hb = params_[params_.size() - 1];
  if (flat.value().dim(1) != hw.value().dim(1)) {
    throw std::invalid_argument("encoder head layer: flattened width " +
                                std::to_string(flat.value().dim(1)) + " does not match weights " +
                                hw.value().shape_str());
  }
  return apply_activation(ad::linear(flat, hw, hb), config_.activation);
}

Tensor Encoder::encode(const Tensor& tiles) const {
  return forward(ad::Var::leaf(tiles)).value();
}

void BaselineConfig::validate() const {
  if (input_size < 32) {
    throw std::invalid_argument("baseline: input_size must be >= 32 (five pooling stages)");
  }
  if (channels.size() != 5) {
    throw std::invalid_argument("baseline: exactly five conv-conv-maxpool blocks required");
  }
  for (int c : channels) {
    if (c < 1) throw std::invalid_argument("baseline: channels must be >= 1");
  }
  if (in_channels != 1 && in_channels != 3) {
    throw std::invalid_argument("baseline: in_channels must be 1 or 3");
  }
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("baseline: kernel must be odd");
}

BaselineNet::BaselineNet(BaselineConfig config, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  int ch = config_.in_channels;
  int spatial = config_.input_size;
  const int k = config_.kernel;
  for (int out_ch : config_.channels) {
    params_.push_back(ad::Var::leaf(init_normal({out_ch, ch, k, k}, ch * k * k, rng), true));
    params_.push_back(ad::Var::leaf(Tensor::zeros({out_ch}), true));
    params_.push_back(ad::Var::leaf(init_normal({out_ch, out_ch, k, k}, out_ch * k * k, rng), true));
    params_.push_back(ad::Var::leaf(Tensor::zeros({out_ch}), true));
    ch = out_ch;
    spatial = (spatial + 1) / 2;
  }
  const int flat = ch * spatial * spatial;
  params_.push_back(ad::Var::leaf(init_normal({1, flat}, flat, rng), true));
  params_.push_back(ad::Var::leaf(Tensor::zeros({1}), true));
}

ad::Var BaselineNet::forward(const ad::Var& input) const {
  const Tensor& iv = input.value();
  if (iv.rank() != 4 || iv.dim(0) != 1 || iv.dim(1) != config_.in_channels ||
      iv.dim(2) != config_.input_size || iv.dim(3) != config_.input_size) {
    throw std::invalid_argument(
        "baseline input layer: expected [1," + std::to_string(config_.in_channels) + "," +
        std::to_string(config_.input_size) + "," + std::to_string(config_.input_size) +
        "], got " + iv.shape_str());
  }
  ad::Var x = input;
  for (std::size_t b = 0; b < 5; ++b) {
    x = ad::selu_v(ad::conv2d(x, params_[4 * b], params_[4 * b + 1]));
    x = ad::selu_v(ad::conv2d(x, params_[4 * b + 2], params_[4 * b + 3]));
    x = ad::maxpool2x2(x);
  }
  ad::Var flat = ad::flatten2(x);
  ad::Var logit = ad::linear(flat, params_[params_.size() - 2], params_[params_.size() - 1]);
  return ad::sigmoid_v(ad::flatten2(logit));  // [1,1] -> [1]
}

double BaselineNet::predict(const Tensor& input) const {
  return forward(ad::Var::leaf(input)).value().item();
}

namespace {

struct AxisWeights {
  // for each output index: first source index and per-source weights
  std::vector<int> start;
  std::vector<std::vector<double>> weights;
};

AxisWeights axis_overlap(int src, int dst) {
  AxisWeights aw;
  aw.start.resize(dst);
  aw.weights.resize(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    const double lo = i * scale;
    const double hi = (i + 1) * scale;
    const int first = static_cast<int>(std::floor(lo));
    const int last = std::min(src - 1, static_cast<int>(std::ceil(hi)) - 1);
    aw.start[i] = first;
    for (int s = first; s <= last; ++s) {
      const double overlap = std::min<double>(hi, s + 1) - std::max<double>(lo, s);
      aw.weights[i].push_back(std::max(overlap, 0.0));
    }
  }
  return aw;
}

}  // namespace

Tensor area_resize(const Tensor& src, int target_h, int target_w) {
  if (src.rank() != 2) throw std::invalid_argument("area_resize: expected [h, w] matrix");
  if (target_h < 1 || target_w < 1) throw std::invalid_argument("area_resize: target must be >= 1");
  const int h = src.dim(0), w = src.dim(1);
  const AxisWeights rows = axis_overlap(h, target_h);
  const AxisWeights cols = axis_overlap(w, target_w);
  Tensor out({target_h, target_w});
  for (int i = 0; i < target_h; ++i) {
    for (int j = 0; j < target_w; ++j) {
      double acc = 0.0, wsum = 0.0;
      for (std::size_t a = 0; a < rows.weights[i].size(); ++a) {
        const int sy = rows.start[i] + static_cast<int>(a);
        const double wy = rows.weights[i][a];
        for (std::size_t b = 0; b < cols.weights[j].size(); ++b) {
          const int sx = cols.start[j] + static_cast<int>(b);
          const double wgt = wy * cols.weights[j][b];
          acc += wgt * src.at2(sy, sx);
          wsum += wgt;
        }
      }
      out.at2(i, j) = acc / wsum;
    }
  }
  return out;
}

SlideImage downscale(const SlideImage& image, int target) {
  image.validate();
  if (target < 1) throw std::invalid_argument("downscale: target must be >= 1");
  const int side = std::max(image.width, image.height);

  SlideImage out;
  out.id = image.id;
  out.label = image.label;
  out.channels = image.channels;
  out.width = target;
  out.height = target;
  out.pixels.assign(static_cast<std::size_t>(target) * target * image.channels, 0.0);

  for (int c = 0; c < image.channels; ++c) {
    Tensor plane = Tensor::full({side, side}, 255.0);  // white pad before scaling
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) plane.at2(y, x) = image.at(y, x, c);
    }
    Tensor resized = area_resize(plane, target, target);
    for (int y = 0; y < target; ++y) {
      for (int x = 0; x < target; ++x) out.at(y, x, c) = resized.at2(y, x);
    }
  }
  return out;
}

Tensor image_to_tensor(const SlideImage& image, bool standardize) {
  image.validate();
  Tensor out({image.channels, image.height, image.width});
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        out[(static_cast<std::size_t>(c) * image.height + y) * image.width + x] =
            image.at(y, x, c);
      }
    }
  }
  if (!standardize) return out;
  double mean = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) mean += out[i];
  mean /= static_cast<double>(out.size());
  double var = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) var += (out[i] - mean) * (out[i] - mean);
  var /= static_cast<double>(out.size());
  const double denom = std::max(std::sqrt(var), 1e-6);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - mean) / denom;
  return out;
}

}  // namespace milkit
