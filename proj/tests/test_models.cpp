#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "milkit/models.hpp"
#include "support/gradcheck.hpp"

using namespace milkit;

namespace {

Tensor random_tiles(int k, int c, int t, Rng& rng) {
  Tensor tiles({k, c, t, t});
  for (std::size_t i = 0; i < tiles.size(); ++i) tiles[i] = rng.normal();
  return tiles;
}

EncoderConfig tiny_encoder_config() {
  EncoderConfig cfg;
  cfg.conv_blocks = {{3, 3}, {4, 3}};
  cfg.feature_dim = 5;
  cfg.input_tile = 8;
  cfg.in_channels = 1;
  return cfg;
}

BaselineConfig tiny_baseline_config() {
  BaselineConfig cfg;
  cfg.input_size = 32;
  cfg.in_channels = 1;
  cfg.channels = {2, 3, 3, 4, 4};
  return cfg;
}

}  // namespace

TEST_CASE("selu values and limit") {
  CHECK(selu(0.0) == 0.0);
  CHECK(selu(1.0) == doctest::Approx(1.0507009873554805).epsilon(1e-15));
  // far-negative evaluation approaches -lambda*alpha
  const double limit = -kSeluLambda * kSeluAlpha;
  CHECK(limit == doctest::Approx(-1.7580993408473766).epsilon(1e-12));
  CHECK(selu(-40.0) == doctest::Approx(limit).epsilon(1e-12));
}

TEST_CASE("selu is continuous at zero and monotone increasing") {
  CHECK(selu(1e-12) == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(selu(-1e-12) == doctest::Approx(0.0).epsilon(1e-10));
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const double a = rng.uniform(-10.0, 10.0);
    const double b = rng.uniform(-10.0, 10.0);
    if (a < b) CHECK(selu(a) < selu(b));
    if (a > b) CHECK(selu(a) > selu(b));
  }
}

TEST_CASE("zero-weight encoder maps everything to zero features") {
  Rng rng(1);
  Encoder enc(tiny_encoder_config(), rng);
  for (auto& p : enc.params()) p.value().fill(0.0);
  Tensor tiles = random_tiles(3, 1, 8, rng);
  Tensor features = enc.encode(tiles);
  REQUIRE(features.shape() == std::vector<int>{3, 5});
  for (std::size_t i = 0; i < features.size(); ++i) CHECK(features[i] == 0.0);
}

TEST_CASE("encoder is deterministic and per-patch independent") {
  Rng rng(2);
  Encoder enc(tiny_encoder_config(), rng);
  Tensor tiles = random_tiles(4, 1, 8, rng);
  Tensor f1 = enc.encode(tiles);
  Tensor f2 = enc.encode(tiles);
  for (std::size_t i = 0; i < f1.size(); ++i) CHECK(f1[i] == f2[i]);

  // identical patches produce identical features regardless of batch position
  Tensor pair({2, 1, 8, 8});
  for (int i = 0; i < 64; ++i) {
    pair[i] = tiles[i];
    pair[64 + i] = tiles[i];
  }
  Tensor fp = enc.encode(pair);
  for (int j = 0; j < 5; ++j) CHECK(fp.at2(0, j) == fp.at2(1, j));
}

TEST_CASE("encoder rejects mismatched input shapes naming the layer") {
  Rng rng(4);
  Encoder enc(tiny_encoder_config(), rng);
  try {
    enc.encode(Tensor({2, 1, 7, 7}));
    FAIL("expected exception");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("input layer") != std::string::npos);
  }
}

TEST_CASE("encoder gradients match central differences") {
  Rng rng(5);
  EncoderConfig cfg = tiny_encoder_config();
  cfg.conv_blocks = {{2, 3}};
  cfg.input_tile = 6;
  cfg.feature_dim = 3;
  Encoder enc(cfg, rng);
  ad::Var tiles = ad::Var::leaf(random_tiles(2, 1, 6, rng), true);

  std::vector<ad::Var> leaves = enc.params();
  leaves.push_back(tiles);
  Tensor probe({3}, {0.3, -0.7, 0.5});
  auto build = [&]() {
    ad::Var features = enc.forward(tiles);            // [2,3]
    ad::Var scores = ad::matvec(features, ad::Var::leaf(probe));
    return ad::bce(ad::sigmoid_v(ad::mean1d(scores)), 1.0);
  };
  CHECK(testsupport::grad_check(leaves, build) < 1e-4);
}

TEST_CASE("baseline head reduces to sigmoid(bias) with zero final weights") {
  Rng rng(6);
  BaselineNet net(tiny_baseline_config(), rng);
  auto& params = net.params();
  params[params.size() - 2].value().fill(0.0);
  params[params.size() - 1].value().fill(0.25);
  Tensor input({1, 1, 32, 32});
  for (std::size_t i = 0; i < input.size(); ++i) input[i] = rng.normal();
  CHECK(net.predict(input) == doctest::Approx(1.0 / (1.0 + std::exp(-0.25))).epsilon(1e-12));
}

TEST_CASE("baseline is deterministic and rejects wrong input size") {
  Rng rng(7);
  BaselineNet net(tiny_baseline_config(), rng);
  Tensor input({1, 1, 32, 32});
  for (std::size_t i = 0; i < input.size(); ++i) input[i] = rng.normal();
  CHECK(net.predict(input) == net.predict(input));
  CHECK_THROWS_AS(net.predict(Tensor({1, 1, 16, 16})), std::invalid_argument);
}

TEST_CASE("baseline config invariants: exactly five blocks") {
  BaselineConfig cfg = tiny_baseline_config();
  cfg.channels = {2, 3, 4};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("baseline gradients match central differences") {
  Rng rng(8);
  BaselineConfig cfg;
  cfg.input_size = 32;
  cfg.channels = {1, 1, 2, 2, 2};
  BaselineNet net(cfg, rng);
  ad::Var input = ad::Var::leaf(Tensor({1, 1, 32, 32}), true);
  for (std::size_t i = 0; i < input.value().size(); ++i) input.value()[i] = rng.normal();

  std::vector<ad::Var> leaves = net.params();
  leaves.push_back(input);
  auto build = [&]() { return ad::bce(net.forward(input), 0.0); };
  CHECK(testsupport::grad_check(leaves, build) < 1e-4);
}

TEST_CASE("downscale: constant image stays constant") {
  SlideImage img;
  img.id = "c";
  img.width = 10;
  img.height = 10;
  img.channels = 1;
  img.pixels.assign(100, 42.0);
  SlideImage out = downscale(img, 4);
  for (double v : out.pixels) CHECK(v == doctest::Approx(42.0).epsilon(1e-12));
}

TEST_CASE("downscale: 2x2 zero/255 image averages to 127.5") {
  SlideImage img;
  img.id = "m";
  img.width = 2;
  img.height = 2;
  img.channels = 1;
  img.pixels = {0.0, 0.0, 255.0, 255.0};
  SlideImage out = downscale(img, 1);
  REQUIRE(out.pixels.size() == 1);
  CHECK(out.pixels[0] == doctest::Approx(127.5).epsilon(1e-12));
}

TEST_CASE("downscale: matching target is the identity") {
  Rng rng(9);
  SlideImage img;
  img.id = "i";
  img.width = 24;
  img.height = 24;
  img.channels = 3;
  img.pixels.resize(24 * 24 * 3);
  for (auto& p : img.pixels) p = std::floor(rng.uniform(0.0, 256.0));
  SlideImage out = downscale(img, 24);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    CHECK(out.pixels[i] == doctest::Approx(img.pixels[i]).epsilon(1e-12));
  }
}

TEST_CASE("downscale pads non-square input with white") {
  SlideImage img;
  img.id = "p";
  img.width = 2;
  img.height = 1;
  img.channels = 1;
  img.pixels = {0.0, 0.0};
  // 2x2 padded square has one black row, one white row
  SlideImage out = downscale(img, 1);
  CHECK(out.pixels[0] == doctest::Approx(127.5).epsilon(1e-12));
}
