#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "milkit/bag.hpp"
#include "milkit/training.hpp"

namespace milkit {

// Bag container, little-endian throughout:
//   magic 'MILB', u32 version,
//   u32 id length + id bytes, u8 label,
//   u32 K, u32 M,
//   K x (u32 row, u32 col),
//   K*M float32 features, row-major.
// Features are persisted at 32-bit precision; training promotes to doubles.

constexpr std::uint32_t kBagFileVersion = 1;
constexpr std::uint32_t kCheckpointVersion = 1;

void write_bag_file(const Bag& bag, const std::filesystem::path& path);
Bag read_bag_file(const std::filesystem::path& path);

/// Reads every *.bag in the directory, ordered by filename.
std::vector<Bag> read_bag_dir(const std::filesystem::path& dir);

/// Model checkpoint 'MILM': u32 version, u8 variant, a per-variant config
/// block (dimensions and tensor shapes), then every tensor as 64-bit
/// little-endian reals in declaration order.
struct Checkpoint {
  Variant variant = Variant::attention;
  int attention_dim = 0;  // L, attention variant only
  int feature_dim = 0;    // M, instance-feature variants
  int raster_size = 0;    // baseline variant input side
  std::vector<int> baseline_channels;
  std::vector<Tensor> tensors;
};

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Snapshot of a trained classifier plus the dimensions needed to rebuild it.
Checkpoint make_checkpoint(BagClassifier& model, const TrainConfig& config,
                           const std::vector<Tensor>& params);

/// Rebuilds the classifier and loads the stored tensors.
std::unique_ptr<BagClassifier> classifier_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace milkit
