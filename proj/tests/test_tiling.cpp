#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "milkit/image.hpp"
#include "milkit/rng.hpp"
#include "milkit/tiling.hpp"

using namespace milkit;

namespace {

SlideImage make_image(int w, int h, int channels, double value) {
  SlideImage img;
  img.id = "img";
  img.width = w;
  img.height = h;
  img.channels = channels;
  img.pixels.assign(static_cast<std::size_t>(w) * h * channels, value);
  return img;
}

SlideImage random_image(int w, int h, int channels, Rng& rng) {
  SlideImage img = make_image(w, h, channels, 0.0);
  for (auto& p : img.pixels) p = std::floor(rng.uniform(0.0, 256.0));
  return img;
}

Patch constant_patch(int t, double value, int channels = 1) {
  Patch p;
  p.slide_id = "s";
  p.tile_size = t;
  p.channels = channels;
  p.pixels.assign(static_cast<std::size_t>(t) * t * channels, value);
  p.source_pixels = t * t;
  return p;
}

}  // namespace

TEST_CASE("exact-fit image produces one unpadded patch") {
  auto patches = tile_image(make_image(224, 224, 1, 10.0), 224);
  REQUIRE(patches.size() == 1);
  CHECK(patches[0].padded_fraction == 0.0);
  CHECK(patches[0].grid_row == 0);
  CHECK(patches[0].grid_col == 0);
}

TEST_CASE("448x300 at tile 224 gives 2x2 grid with padded bottom row") {
  auto patches = tile_image(make_image(448, 300, 1, 10.0), 224);
  REQUIRE(patches.size() == 4);
  const double expected = (224.0 - 76.0) / 224.0;
  CHECK(patches[0].padded_fraction == 0.0);
  CHECK(patches[1].padded_fraction == 0.0);
  CHECK(patches[2].padded_fraction == doctest::Approx(expected));
  CHECK(patches[3].padded_fraction == doctest::Approx(expected));
  // row-major unique grid coordinates
  CHECK(patches[2].grid_row == 1);
  CHECK(patches[2].grid_col == 0);
  CHECK(patches[3].grid_col == 1);
}

TEST_CASE("median WSI dimensions give 254 x 117 = 29718 patches") {
  auto [rows, cols] = tile_grid_dims(56896, 26198, 224);
  CHECK(cols == 254);
  CHECK(rows == 117);
  CHECK(static_cast<long long>(rows) * cols == 29718);
}

TEST_CASE("zero-dimension image is rejected") {
  SlideImage img = make_image(1, 1, 1, 0.0);
  img.width = 0;
  img.pixels.clear();
  CHECK_THROWS_AS(tile_image(img, 16), std::invalid_argument);
  CHECK_THROWS_AS(tile_grid_dims(0, 5, 4), std::invalid_argument);
  CHECK_THROWS_AS(tile_image(make_image(4, 4, 1, 0.0), 0), std::invalid_argument);
}

TEST_CASE("property: patch count and pixel partition over random sizes") {
  Rng rng(123);
  for (int iter = 0; iter < 500; ++iter) {
    const int w = 1 + static_cast<int>(rng.next_below(90));
    const int h = 1 + static_cast<int>(rng.next_below(90));
    const int t = 1 + static_cast<int>(rng.next_below(40));
    auto [rows, cols] = tile_grid_dims(w, h, t);
    CHECK(rows == (h + t - 1) / t);
    CHECK(cols == (w + t - 1) / t);
    auto patches = tile_image(make_image(w, h, 1, 7.0), t);
    CHECK(patches.size() == static_cast<std::size_t>(rows) * cols);
    long long covered = 0;
    for (const auto& p : patches) covered += p.source_pixels;
    CHECK(covered == static_cast<long long>(w) * h);
  }
}

TEST_CASE("every source pixel appears exactly once") {
  Rng rng(5);
  SlideImage img = random_image(37, 23, 1, rng);
  auto patches = tile_image(img, 7, -1.0);  // sentinel pad value
  std::vector<int> seen(static_cast<std::size_t>(img.width) * img.height, 0);
  for (const auto& p : patches) {
    for (int y = 0; y < p.tile_size; ++y) {
      for (int x = 0; x < p.tile_size; ++x) {
        const int sy = p.grid_row * p.tile_size + y;
        const int sx = p.grid_col * p.tile_size + x;
        const double v = p.at(y, x, 0);
        if (sy < img.height && sx < img.width) {
          CHECK(v == img.at(sy, sx, 0));
          seen[static_cast<std::size_t>(sy) * img.width + sx]++;
        } else {
          CHECK(v == -1.0);
        }
      }
    }
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
}

TEST_CASE("patch intensity: constants and half-half") {
  CHECK(patch_intensity(constant_patch(8, 255.0)) == 255.0);
  CHECK(patch_intensity(constant_patch(8, 0.0)) == 0.0);
  Patch half = constant_patch(8, 0.0);
  for (std::size_t i = 0; i < half.pixels.size() / 2; ++i) half.pixels[i] = 255.0;
  CHECK(patch_intensity(half) == doctest::Approx(127.5));
}

TEST_CASE("background filter keeps patches at or below 95% of c_max") {
  std::vector<Patch> patches;
  for (double c : {100.0, 200.0, 240.0, 250.0}) patches.push_back(constant_patch(4, c));
  auto [kept, stats] = filter_background(patches, 0.95);
  CHECK(stats.c_max == 250.0);
  CHECK(stats.threshold == doctest::Approx(237.5));
  REQUIRE(kept.size() == 2);
  CHECK(patch_intensity(kept[0]) == 100.0);
  CHECK(patch_intensity(kept[1]) == 200.0);
}

TEST_CASE("identical patches trigger the darkest-patch fallback") {
  std::vector<Patch> patches(5, constant_patch(4, 180.0));
  for (int i = 0; i < 5; ++i) patches[static_cast<std::size_t>(i)].grid_col = i;
  auto [kept, stats] = filter_background(patches, 0.95);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].grid_col == 0);  // first on ties
  CHECK(stats.threshold < 180.0);
}

TEST_CASE("retain_ratio 1.0 keeps everything") {
  std::vector<Patch> patches = {constant_patch(4, 10.0), constant_patch(4, 20.0)};
  auto [kept, stats] = filter_background(patches, 1.0);
  CHECK(kept.size() == 2);
}

TEST_CASE("filter rejects empty input and bad ratios") {
  CHECK_THROWS_AS(filter_background({}, 0.95), std::invalid_argument);
  std::vector<Patch> one = {constant_patch(2, 3.0)};
  CHECK_THROWS_AS(filter_background(one, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(filter_background(one, 1.5), std::invalid_argument);
}

TEST_CASE("property: filter is monotone in retain_ratio and preserves order") {
  Rng rng(77);
  for (int iter = 0; iter < 100; ++iter) {
    std::vector<Patch> patches;
    const int n = 2 + static_cast<int>(rng.next_below(20));
    for (int i = 0; i < n; ++i) {
      Patch p = constant_patch(3, rng.uniform(0.0, 255.0));
      p.grid_col = i;
      patches.push_back(std::move(p));
    }
    const double lo = rng.uniform(0.05, 0.95);
    const double hi = rng.uniform(lo, 1.0);
    auto [kept_lo, s1] = filter_background(patches, lo);
    auto [kept_hi, s2] = filter_background(patches, hi);
    // order/identity: kept is a subsequence of the input
    int prev = -1;
    for (const auto& p : kept_hi) {
      CHECK(p.grid_col > prev);
      prev = p.grid_col;
    }
    // monotone: everything kept at lo survives at hi (fallback aside)
    if (kept_lo.size() > 1 || patch_intensity(kept_lo[0]) <= s1.threshold) {
      for (const auto& p : kept_lo) {
        CHECK(std::any_of(kept_hi.begin(), kept_hi.end(),
                          [&](const Patch& q) { return q.grid_col == p.grid_col; }));
      }
    }
  }
}

TEST_CASE("normalization: two-level patch maps to plus/minus one") {
  Patch p = constant_patch(4, 0.0);
  for (std::size_t i = 0; i < p.pixels.size(); i += 2) p.pixels[i] = 2.0;
  Tensor out = normalize_patch(p);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(std::abs(out[i]) == doctest::Approx(1.0));
  }
}

TEST_CASE("normalization: constant patch maps to all zeros") {
  Tensor out = normalize_patch(constant_patch(6, 128.0));
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("normalization: random patch has mean 0 and std 1, and is idempotent") {
  Rng rng(31);
  for (int iter = 0; iter < 20; ++iter) {
    Patch p = constant_patch(8, 0.0, iter % 2 ? 3 : 1);
    for (auto& v : p.pixels) v = std::floor(rng.uniform(0.0, 256.0));
    Tensor out = normalize_patch(p);
    double mean = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) mean += out[i];
    mean /= static_cast<double>(out.size());
    double var = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) var += (out[i] - mean) * (out[i] - mean);
    var /= static_cast<double>(out.size());
    CHECK(std::abs(mean) <= 1e-6);
    CHECK(std::abs(std::sqrt(var) - 1.0) <= 1e-6);

    Tensor twice = normalize_tile(out);
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(std::abs(twice[i] - out[i]) <= 1e-6);
    }
  }
}

TEST_CASE("image round trip through PGM and PPM") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "milkit_tiling_test";
  fs::create_directories(dir);
  Rng rng(9);
  for (int channels : {1, 3}) {
    SlideImage img = random_image(21, 13, channels, rng);
    const fs::path file = dir / (channels == 1 ? "t.pgm" : "t.ppm");
    write_image(img, file);
    SlideImage back = read_image(file);
    REQUIRE(back.width == img.width);
    REQUIRE(back.height == img.height);
    REQUIRE(back.channels == img.channels);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) CHECK(back.pixels[i] == img.pixels[i]);
  }
  fs::remove_all(dir);
}

TEST_CASE("manifest round trip and validation") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "milkit_manifest_test";
  fs::create_directories(dir);
  const fs::path file = dir / "manifest.csv";
  std::vector<ManifestEntry> entries = {{"a", "/tmp/a.pgm", 1}, {"b", "/tmp/b.pgm", 0}};
  write_manifest(entries, file);
  auto back = read_manifest(file);
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "a");
  CHECK(back[1].label == 0);
  CHECK_THROWS(read_manifest(dir / "missing.csv"));
  fs::remove_all(dir);
}
