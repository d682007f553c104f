#include "milkit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace milkit {

void SynthSpec::validate() const {
  if (n_bags < 1) throw std::invalid_argument("synth: n_bags must be >= 1");
  if (instances_per_bag < 1) throw std::invalid_argument("synth: K must be >= 1");
  if (feature_dim < 1) throw std::invalid_argument("synth: M must be >= 1");
  if (!(signal_fraction > 0.0 && signal_fraction <= 1.0)) {
    throw std::invalid_argument("synth: signal_fraction must be in (0, 1]");
  }
  if (!(signal_shift >= 0.0)) throw std::invalid_argument("synth: signal_shift must be >= 0");
  if (!(noise_std > 0.0)) throw std::invalid_argument("synth: noise_std must be > 0");
  if (!(positive_rate > 0.0 && positive_rate < 1.0)) {
    throw std::invalid_argument("synth: positive_rate must be in (0, 1)");
  }
}

int SynthSpec::signal_count() const {
  return std::max(1, static_cast<int>(std::llround(instances_per_bag * signal_fraction)));
}

SynthBags generate_bags(const SynthSpec& spec) {
  spec.validate();
  const int k = spec.instances_per_bag;
  const int m = spec.feature_dim;
  const int grid_cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(k))));

  SynthBags out;
  out.bags.reserve(spec.n_bags);
  out.signal_masks.reserve(spec.n_bags);

  // one fixed signal direction per dataset
  Rng master(spec.seed);
  out.signal_direction = Tensor({m});
  double norm = 0.0;
  for (int j = 0; j < m; ++j) {
    out.signal_direction[j] = master.normal();
    norm += out.signal_direction[j] * out.signal_direction[j];
  }
  norm = std::sqrt(norm);
  for (int j = 0; j < m; ++j) out.signal_direction[j] /= norm;

  const int n_signal = spec.signal_count();
  for (int b = 0; b < spec.n_bags; ++b) {
    Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(b)));
    Bag bag;
    char name[32];
    std::snprintf(name, sizeof(name), "synth_%06d", b);
    bag.slide_id = name;
    bag.label = rng.bernoulli(spec.positive_rate) ? 1 : 0;
    bag.features = Tensor({k, m});
    for (std::size_t i = 0; i < bag.features.size(); ++i) {
      bag.features[i] = spec.noise_std * rng.normal();
    }
    bag.coords.reserve(k);
    for (int i = 0; i < k; ++i) bag.coords.emplace_back(i / grid_cols, i % grid_cols);

    std::vector<int> mask;
    if (bag.label == 1) {
      std::vector<int> indices(k);
      std::iota(indices.begin(), indices.end(), 0);
      rng.shuffle(indices);
      mask.assign(indices.begin(), indices.begin() + n_signal);
      std::sort(mask.begin(), mask.end());
      for (int idx : mask) {
        for (int j = 0; j < m; ++j) {
          bag.features.at2(idx, j) += spec.signal_shift * out.signal_direction[j];
        }
      }
    }
    out.bags.push_back(std::move(bag));
    out.signal_masks.push_back(std::move(mask));
  }
  return out;
}

SlideImage generate_slide(int width, int height, const std::vector<LesionRect>& lesion_rects,
                          std::uint64_t seed) {
  if (width < 1 || height < 1) throw std::invalid_argument("generate_slide: empty image");
  for (const auto& r : lesion_rects) {
    if (r.width < 1 || r.height < 1 || r.x < 0 || r.y < 0 || r.x + r.width > width ||
        r.y + r.height > height) {
      throw std::invalid_argument("generate_slide: lesion rectangle out of bounds");
    }
  }

  SlideImage img;
  img.width = width;
  img.height = height;
  img.channels = 1;
  img.label = lesion_rects.empty() ? 0 : 1;
  img.pixels.resize(static_cast<std::size_t>(width) * height);

  Rng rng(seed);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      img.at(y, x, 0) = std::clamp(rng.normal(230.0, 8.0), 0.0, 255.0);
    }
  }
  for (const auto& r : lesion_rects) {
    for (int y = r.y; y < r.y + r.height; ++y) {
      for (int x = r.x; x < r.x + r.width; ++x) {
        img.at(y, x, 0) = std::clamp(rng.normal(120.0, 20.0), 0.0, 255.0);
      }
    }
  }
  return img;
}

}  // namespace milkit
