#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "milkit/interpret.hpp"
#include "milkit/models.hpp"

using namespace milkit;

namespace {

Bag grid_bag(int rows, int cols, int m, Rng& rng) {
  Bag bag;
  bag.slide_id = "grid";
  bag.features = Tensor({rows * cols, m});
  for (std::size_t i = 0; i < bag.features.size(); ++i) bag.features[i] = rng.normal();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) bag.coords.emplace_back(r, c);
  }
  return bag;
}

}  // namespace

TEST_CASE("attention heatmap: uniform weights give a flat map") {
  Rng rng(1);
  Bag bag = grid_bag(3, 4, 2, rng);
  const int k = bag.instance_count();
  AttentionWeights w{std::vector<double>(k, 1.0 / k)};
  auto map = attention_heatmap(bag, w);
  REQUIRE(map.rows == 3);
  REQUIRE(map.cols == 4);
  for (double v : map.values) CHECK(v == doctest::Approx(1.0 / k).epsilon(1e-12));
}

TEST_CASE("attention heatmap: one-hot weights give a single hot cell") {
  Rng rng(2);
  Bag bag = grid_bag(2, 3, 2, rng);
  AttentionWeights w{{0.0, 0.0, 0.0, 0.0, 1.0, 0.0}};
  auto map = attention_heatmap(bag, w);
  CHECK(map.at(1, 1) == 1.0);
  double total = 0.0;
  for (double v : map.values) total += v;
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("attention heatmap: background cells carry zero, instances map bijectively") {
  // sparse bag on a 3x3 grid: cells (0,0), (1,2), (2,1) only
  Bag bag;
  bag.slide_id = "sparse";
  bag.features = Tensor({3, 2}, {1, 2, 3, 4, 5, 6});
  bag.coords = {{0, 0}, {1, 2}, {2, 1}};
  AttentionWeights w{{0.2, 0.5, 0.3}};
  auto map = attention_heatmap(bag, w);
  REQUIRE(map.rows == 3);
  REQUIRE(map.cols == 3);
  int nonzero = 0;
  double sum = 0.0;
  for (double v : map.values) {
    if (v != 0.0) ++nonzero;
    sum += v;
  }
  CHECK(nonzero == 3);  // bijection between instances and nonzero cells
  CHECK(std::abs(sum - 1.0) <= 1e-6);
  CHECK(map.at(1, 2) == 0.5);

  CHECK_THROWS_AS(attention_heatmap(bag, AttentionWeights{{0.5, 0.5}}), std::invalid_argument);
}

TEST_CASE("integrated gradients: identical input and baseline attribute zero") {
  Rng rng(3);
  Tensor input({1, 4});
  for (std::size_t i = 0; i < input.size(); ++i) input[i] = rng.normal();
  ScalarFn f = [](const ad::Var& x) {
    return ad::mean1d(ad::sigmoid_v(ad::flatten2(ad::scale(x, 2.0))));
  };
  // flatten2 keeps [1,4]; reduce to scalar via mean of the row
  ScalarFn g = [](const ad::Var& x) {
    return ad::mean1d(ad::sigmoid_v(ad::matvec(x, ad::Var::leaf(Tensor({4}, {1, 2, 3, 4})))));
  };
  Tensor attr = integrated_gradients_raw(g, input, input, 16);
  for (std::size_t i = 0; i < attr.size(); ++i) CHECK(attr[i] == 0.0);
  (void)f;
}

TEST_CASE("integrated gradients: linear model is exact for any step count") {
  Rng rng(4);
  Tensor c({6});
  for (int i = 0; i < 6; ++i) c[i] = rng.normal();
  ScalarFn f = [&](const ad::Var& x) { return ad::dot(x, ad::Var::leaf(c)); };

  Tensor input({6}), baseline({6});
  for (int i = 0; i < 6; ++i) {
    input[i] = rng.normal();
    baseline[i] = rng.normal();
  }
  for (int steps : {1, 3, 64}) {
    Tensor attr = integrated_gradients_raw(f, input, baseline, steps);
    for (int i = 0; i < 6; ++i) {
      CHECK(attr[i] == doctest::Approx(c[i] * (input[i] - baseline[i])).epsilon(1e-12));
    }
  }
}

TEST_CASE("integrated gradients: completeness on small baseline models") {
  Rng rng(5);
  for (int trial = 0; trial < 3; ++trial) {
    BaselineConfig cfg;
    cfg.input_size = 32;
    cfg.channels = {1, 1, 2, 2, 2};
    BaselineNet net(cfg, rng);
    ScalarFn f = [&](const ad::Var& x) { return net.forward(x); };

    Tensor input({1, 1, 32, 32});
    for (std::size_t i = 0; i < input.size(); ++i) input[i] = rng.normal();
    Tensor baseline = Tensor::zeros(input.shape());

    const double fx = net.predict(input);
    const double fb = net.predict(baseline);
    Tensor attr = integrated_gradients_raw(f, input, baseline, 256);
    double total = 0.0;
    for (std::size_t i = 0; i < attr.size(); ++i) total += attr[i];
    const double target = fx - fb;
    CHECK(std::abs(total - target) <= 1e-3 * std::abs(target) + 1e-6);

    // doubling the steps moves the sum by less than the completeness tolerance
    Tensor attr2 = integrated_gradients_raw(f, input, baseline, 512);
    double total2 = 0.0;
    for (std::size_t i = 0; i < attr2.size(); ++i) total2 += attr2[i];
    CHECK(std::abs(total2 - total) <= 1e-3 * std::abs(target) + 1e-6);
  }
}

TEST_CASE("integrated gradients: channel-summed map and shape checks") {
  ScalarFn f = [](const ad::Var& x) {
    ad::Var flat = ad::flatten2(x);  // [1, CHW]
    Tensor ones({flat.value().dim(1)});
    ones.fill(1.0);
    return ad::mean1d(ad::matvec(flat, ad::Var::leaf(ones)));
  };
  Tensor input({1, 2, 3, 3});
  for (std::size_t i = 0; i < input.size(); ++i) input[i] = static_cast<double>(i);
  Tensor baseline = Tensor::zeros(input.shape());
  auto map = integrated_gradients(f, "slide", input, baseline, 8);
  CHECK(map.rows == 3);
  CHECK(map.cols == 3);
  // linear sum model: attribution equals input itself, summed over channels
  CHECK(map.at(0, 0) == doctest::Approx(input[0] + input[9]).epsilon(1e-9));

  CHECK_THROWS_AS(integrated_gradients_raw(f, input, Tensor({1, 2, 3, 2}), 8),
                  std::invalid_argument);
  CHECK_THROWS_AS(integrated_gradients_raw(f, input, baseline, 0), std::invalid_argument);
}

TEST_CASE("attribution map JSON round trip and PGM rendering") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "milkit_interpret_test";
  fs::create_directories(dir);

  AttributionMap map;
  map.slide_id = "s1";
  map.mode = AttributionMode::attention;
  map.rows = 2;
  map.cols = 3;
  map.values = {0.0, 0.1, 0.2, 0.3, 0.25, 0.15};
  map.normalization_note = "test";
  write_map_json(map, dir / "map.json");
  auto back = read_map_json(dir / "map.json");
  CHECK(back.slide_id == map.slide_id);
  CHECK(back.rows == map.rows);
  CHECK(back.values == map.values);

  write_map_pgm(map, dir / "map.pgm");
  CHECK(map.normalization_note.find("pgm scale") != std::string::npos);
  SlideImage img = read_image(dir / "map.pgm");
  CHECK(img.width == 3);
  CHECK(img.height == 2);
  CHECK(img.pixels[0] == 0.0);    // min maps to 0
  CHECK(img.pixels[3] == 255.0);  // max maps to 255
  fs::remove_all(dir);
}
