#pragma once

#include <cstdint>
#include <vector>

#include "milkit/bag.hpp"
#include "milkit/image.hpp"
#include "milkit/rng.hpp"

namespace milkit {

/// Synthetic weak-label bag generator: negative bags are isotropic Gaussian
/// noise; positive bags carry a handful of instances shifted along one fixed
/// random direction. The fraction of shifted instances controls how weak the
/// bag label is.
struct SynthSpec {
  int n_bags = 300;
  int instances_per_bag = 50;  // K
  int feature_dim = 64;        // M
  double signal_fraction = 0.05;
  double signal_shift = 2.0;
  double noise_std = 1.0;
  double positive_rate = 0.77;  // matches the 647/838 class balance
  std::uint64_t seed = 1;

  void validate() const;

  /// Signal instances per positive bag: max(1, round(K * signal_fraction)).
  int signal_count() const;
};

struct SynthBags {
  std::vector<Bag> bags;
  std::vector<std::vector<int>> signal_masks;  // instance indices carrying signal
  Tensor signal_direction;                     // unit vector, length M
};

/// Deterministic per seed; bags are generated from independent derived seeds
/// so they are order-independent and parallelizable.
SynthBags generate_bags(const SynthSpec& spec);

struct LesionRect {
  int x = 0, y = 0, width = 0, height = 0;
};

/// Bright textured background (mean ~230) with darker textured rectangles
/// (mean ~120); label 1 iff any rectangle is present.
SlideImage generate_slide(int width, int height, const std::vector<LesionRect>& lesion_rects,
                          std::uint64_t seed);

}  // namespace milkit
