#include "milkit/bagfile.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace milkit {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw std::runtime_error("truncated file while reading " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float get_f32(std::istream& in, const std::string& what) {
  const std::uint32_t bits = get_u32(in, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

double get_f64(std::istream& in, const std::string& what) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (in.gcount() != 8) throw std::runtime_error("truncated file while reading " + what);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void expect_magic(std::istream& in, const char* magic, const std::string& path) {
  char buf[4];
  in.read(buf, 4);
  if (in.gcount() != 4 || std::memcmp(buf, magic, 4) != 0) {
    throw std::runtime_error("bad magic in " + path + " (expected " + magic + ")");
  }
}

void expect_eof(std::istream& in, const std::string& path) {
  if (in.peek() != EOF) throw std::runtime_error("trailing bytes in " + path);
}

constexpr std::uint64_t kMaxElements = 1ull << 30;  // refuse absurd payload claims

}  // namespace

void write_bag_file(const Bag& bag, const std::filesystem::path& path) {
  bag.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write bag file: " + path.string());

  out.write("MILB", 4);
  put_u32(out, kBagFileVersion);
  put_u32(out, static_cast<std::uint32_t>(bag.slide_id.size()));
  out.write(bag.slide_id.data(), static_cast<std::streamsize>(bag.slide_id.size()));
  out.put(static_cast<char>(bag.label));
  const int k = bag.instance_count(), m = bag.feature_dim();
  put_u32(out, static_cast<std::uint32_t>(k));
  put_u32(out, static_cast<std::uint32_t>(m));
  for (const auto& [row, col] : bag.coords) {
    if (row < 0 || col < 0) throw std::invalid_argument("bag file: negative coordinate");
    put_u32(out, static_cast<std::uint32_t>(row));
    put_u32(out, static_cast<std::uint32_t>(col));
  }
  for (std::size_t i = 0; i < bag.features.size(); ++i) {
    put_f32(out, static_cast<float>(bag.features[i]));
  }
  if (!out) throw std::runtime_error("failed writing bag file: " + path.string());
}

Bag read_bag_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open bag file: " + path.string());
  expect_magic(in, "MILB", path.string());
  const std::uint32_t version = get_u32(in, "version");
  if (version != kBagFileVersion) {
    throw std::runtime_error("unsupported bag file version " + std::to_string(version) + " in " +
                             path.string());
  }
  const std::uint32_t id_len = get_u32(in, "id length");
  if (id_len > 4096) throw std::runtime_error("unreasonable slide id length in " + path.string());
  std::string id(id_len, '\0');
  in.read(id.data(), id_len);
  if (static_cast<std::uint32_t>(in.gcount()) != id_len) {
    throw std::runtime_error("truncated slide id in " + path.string());
  }
  const int label = in.get();
  if (label != 0 && label != 1) {
    throw std::runtime_error("bag label must be 0 or 1 in " + path.string());
  }
  const std::uint32_t k = get_u32(in, "K");
  const std::uint32_t m = get_u32(in, "M");
  if (k == 0 || m == 0 || static_cast<std::uint64_t>(k) * m > kMaxElements) {
    throw std::runtime_error("bad bag dimensions K=" + std::to_string(k) + " M=" +
                             std::to_string(m) + " in " + path.string());
  }

  Bag bag;
  bag.slide_id = std::move(id);
  bag.label = label;
  bag.coords.reserve(k);
  for (std::uint32_t i = 0; i < k; ++i) {
    const int row = static_cast<int>(get_u32(in, "coordinate row"));
    const int col = static_cast<int>(get_u32(in, "coordinate col"));
    bag.coords.emplace_back(row, col);
  }
  bag.features = Tensor({static_cast<int>(k), static_cast<int>(m)});
  for (std::size_t i = 0; i < bag.features.size(); ++i) {
    bag.features[i] = static_cast<double>(get_f32(in, "feature"));
  }
  expect_eof(in, path.string());
  bag.validate();
  return bag;
}

std::vector<Bag> read_bag_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("not a bag directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".bag") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no .bag files in " + dir.string());
  std::vector<Bag> bags;
  bags.reserve(files.size());
  for (const auto& f : files) bags.push_back(read_bag_file(f));
  return bags;
}

namespace {

constexpr std::uint8_t kVariantCode[] = {0, 1, 2, 3};  // attention, mean, max, baseline

std::uint8_t variant_code(Variant v) { return kVariantCode[static_cast<int>(v)]; }

Variant variant_from_code(std::uint8_t code, const std::string& path) {
  switch (code) {
    case 0: return Variant::attention;
    case 1: return Variant::mean_pool;
    case 2: return Variant::max_pool;
    case 3: return Variant::baseline;
  }
  throw std::runtime_error("unknown variant code in " + path);
}

}  // namespace

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());

  out.write("MILM", 4);
  put_u32(out, kCheckpointVersion);
  out.put(static_cast<char>(variant_code(checkpoint.variant)));
  switch (checkpoint.variant) {
    case Variant::attention:
      put_u32(out, static_cast<std::uint32_t>(checkpoint.attention_dim));
      put_u32(out, static_cast<std::uint32_t>(checkpoint.feature_dim));
      break;
    case Variant::mean_pool:
    case Variant::max_pool:
      put_u32(out, static_cast<std::uint32_t>(checkpoint.feature_dim));
      break;
    case Variant::baseline:
      put_u32(out, static_cast<std::uint32_t>(checkpoint.feature_dim));
      put_u32(out, static_cast<std::uint32_t>(checkpoint.raster_size));
      put_u32(out, static_cast<std::uint32_t>(checkpoint.baseline_channels.size()));
      for (int c : checkpoint.baseline_channels) put_u32(out, static_cast<std::uint32_t>(c));
      break;
  }
  put_u32(out, static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const auto& t : checkpoint.tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (const auto& t : checkpoint.tensors) {
    for (std::size_t i = 0; i < t.size(); ++i) put_f64(out, t[i]);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  expect_magic(in, "MILM", path.string());
  const std::uint32_t version = get_u32(in, "version");
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version in " + path.string());
  }
  Checkpoint ck;
  ck.variant = variant_from_code(static_cast<std::uint8_t>(in.get()), path.string());
  switch (ck.variant) {
    case Variant::attention:
      ck.attention_dim = static_cast<int>(get_u32(in, "attention dim"));
      ck.feature_dim = static_cast<int>(get_u32(in, "feature dim"));
      break;
    case Variant::mean_pool:
    case Variant::max_pool:
      ck.feature_dim = static_cast<int>(get_u32(in, "feature dim"));
      break;
    case Variant::baseline: {
      ck.feature_dim = static_cast<int>(get_u32(in, "feature dim"));
      ck.raster_size = static_cast<int>(get_u32(in, "raster size"));
      const std::uint32_t blocks = get_u32(in, "block count");
      if (blocks != 5) throw std::runtime_error("baseline checkpoint must have 5 blocks");
      for (std::uint32_t i = 0; i < blocks; ++i) {
        ck.baseline_channels.push_back(static_cast<int>(get_u32(in, "block channels")));
      }
      break;
    }
  }
  const std::uint32_t n_tensors = get_u32(in, "tensor count");
  if (n_tensors > 4096) throw std::runtime_error("unreasonable tensor count in " + path.string());
  std::vector<std::vector<int>> shapes(n_tensors);
  for (auto& shape : shapes) {
    const std::uint32_t rank = get_u32(in, "tensor rank");
    if (rank > 8) throw std::runtime_error("unreasonable tensor rank in " + path.string());
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<int>(get_u32(in, "tensor dim")));
      numel *= static_cast<std::uint64_t>(shape.back());
    }
    if (numel > kMaxElements) throw std::runtime_error("unreasonable tensor size in " + path.string());
  }
  for (const auto& shape : shapes) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = get_f64(in, "tensor data");
    ck.tensors.push_back(std::move(t));
  }
  expect_eof(in, path.string());
  return ck;
}

Checkpoint make_checkpoint(BagClassifier& model, const TrainConfig& config,
                           const std::vector<Tensor>& params) {
  Checkpoint ck;
  ck.variant = model.variant();
  ck.feature_dim = model.feature_dim();
  if (ck.variant == Variant::attention) ck.attention_dim = config.attention_dim;
  if (ck.variant == Variant::baseline) {
    ck.raster_size = config.baseline_raster;
    ck.baseline_channels = config.baseline_channels;
  }
  ck.tensors = params;
  return ck;
}

std::unique_ptr<BagClassifier> classifier_from_checkpoint(const Checkpoint& checkpoint) {
  TrainConfig cfg;
  cfg.variant = checkpoint.variant;
  if (checkpoint.variant == Variant::attention) cfg.attention_dim = checkpoint.attention_dim;
  if (checkpoint.variant == Variant::baseline) {
    cfg.baseline_raster = checkpoint.raster_size;
    cfg.baseline_channels = checkpoint.baseline_channels;
  }
  Rng rng(0);  // placeholder init, immediately overwritten
  auto model = make_classifier(cfg, checkpoint.feature_dim, rng);
  load_params(*model, checkpoint.tensors);
  return model;
}

}  // namespace milkit
