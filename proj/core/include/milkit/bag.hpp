#pragma once

#include <string>
#include <utility>
#include <vector>

#include "milkit/tensor.hpp"

namespace milkit {

/// A slide's set of instance feature vectors with their patch grid
/// coordinates and the bag-level label.
struct Bag {
  std::string slide_id;
  Tensor features;  // [K, M]
  std::vector<std::pair<int, int>> coords;  // (grid_row, grid_col) per instance
  int label = 0;

  int instance_count() const { return features.rank() == 2 ? features.dim(0) : 0; }
  int feature_dim() const { return features.rank() == 2 ? features.dim(1) : 0; }

  /// Checks K >= 1, coord list length/uniqueness, and finite features.
  void validate() const;
};

}  // namespace milkit
