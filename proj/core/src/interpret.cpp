#include "milkit/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "milkit/image.hpp"

namespace milkit {

std::string attribution_mode_name(AttributionMode mode) {
  return mode == AttributionMode::attention ? "attention" : "integrated_gradients";
}

AttributionMap attention_heatmap(const Bag& bag, const AttentionWeights& weights) {
  bag.validate();
  if (weights.a.size() != static_cast<std::size_t>(bag.instance_count())) {
    throw std::invalid_argument("attention_heatmap: " + std::to_string(weights.a.size()) +
                                " weights for K=" + std::to_string(bag.instance_count()));
  }
  AttributionMap map;
  map.slide_id = bag.slide_id;
  map.mode = AttributionMode::attention;
  int max_row = 0, max_col = 0;
  for (const auto& [r, c] : bag.coords) {
    if (r < 0 || c < 0) throw std::invalid_argument("attention_heatmap: negative coordinate");
    max_row = std::max(max_row, r);
    max_col = std::max(max_col, c);
  }
  map.rows = max_row + 1;
  map.cols = max_col + 1;
  map.values.assign(static_cast<std::size_t>(map.rows) * map.cols, 0.0);
  for (std::size_t i = 0; i < weights.a.size(); ++i) {
    map.values[static_cast<std::size_t>(bag.coords[i].first) * map.cols + bag.coords[i].second] =
        weights.a[i];
  }
  map.normalization_note = "attention weights, background cells 0";
  return map;
}

Tensor integrated_gradients_raw(const ScalarFn& f, const Tensor& input, const Tensor& baseline,
                                int steps) {
  if (!input.same_shape(baseline)) {
    throw std::invalid_argument("integrated_gradients: input shape " + input.shape_str() +
                                " != baseline shape " + baseline.shape_str());
  }
  if (steps < 1) throw std::invalid_argument("integrated_gradients: steps must be >= 1");

  Tensor grad_sum = Tensor::zeros(input.shape());
  Tensor point(input.shape());
  for (int s = 0; s < steps; ++s) {
    const double alpha = (s + 0.5) / static_cast<double>(steps);
    for (std::size_t i = 0; i < point.size(); ++i) {
      point[i] = baseline[i] + alpha * (input[i] - baseline[i]);
    }
    ad::Var x = ad::Var::leaf(point, true);
    ad::Var out = f(x);
    if (out.value().size() != 1) {
      throw std::invalid_argument("integrated_gradients: model output must be scalar");
    }
    ad::backward(out);
    const Tensor& g = x.grad();
    if (!g.all_finite()) {
      throw std::runtime_error("integrated_gradients: non-finite gradient at step " +
                               std::to_string(s));
    }
    for (std::size_t i = 0; i < g.size(); ++i) grad_sum[i] += g[i];
  }

  Tensor attribution(input.shape());
  for (std::size_t i = 0; i < attribution.size(); ++i) {
    attribution[i] = (input[i] - baseline[i]) * grad_sum[i] / static_cast<double>(steps);
  }
  return attribution;
}

AttributionMap integrated_gradients(const ScalarFn& f, const std::string& slide_id,
                                    const Tensor& input, const Tensor& baseline, int steps) {
  Tensor attribution = integrated_gradients_raw(f, input, baseline, steps);
  int channels, height, width;
  if (attribution.rank() == 3) {
    channels = attribution.dim(0);
    height = attribution.dim(1);
    width = attribution.dim(2);
  } else if (attribution.rank() == 4 && attribution.dim(0) == 1) {
    channels = attribution.dim(1);
    height = attribution.dim(2);
    width = attribution.dim(3);
  } else {
    throw std::invalid_argument("integrated_gradients: expected [C,H,W] or [1,C,H,W] input");
  }

  AttributionMap map;
  map.slide_id = slide_id;
  map.mode = AttributionMode::integrated_gradients;
  map.rows = height;
  map.cols = width;
  map.values.assign(static_cast<std::size_t>(height) * width, 0.0);
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        map.values[static_cast<std::size_t>(y) * width + x] +=
            attribution[(static_cast<std::size_t>(c) * height + y) * width + x];
      }
    }
  }
  map.normalization_note = "signed attributions summed over channels";
  return map;
}

void write_map_json(const AttributionMap& map, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["slide_id"] = map.slide_id;
  j["mode"] = attribution_mode_name(map.mode);
  j["rows"] = map.rows;
  j["cols"] = map.cols;
  j["values"] = map.values;
  j["normalization_note"] = map.normalization_note;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write attribution map: " + path.string());
  out << j.dump(2) << '\n';
}

AttributionMap read_map_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open attribution map: " + path.string());
  nlohmann::json j;
  in >> j;
  AttributionMap map;
  map.slide_id = j.at("slide_id").get<std::string>();
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "attention") map.mode = AttributionMode::attention;
  else if (mode == "integrated_gradients") map.mode = AttributionMode::integrated_gradients;
  else throw std::runtime_error("unknown attribution mode '" + mode + "'");
  map.rows = j.at("rows").get<int>();
  map.cols = j.at("cols").get<int>();
  map.values = j.at("values").get<std::vector<double>>();
  map.normalization_note = j.value("normalization_note", "");
  if (map.values.size() != static_cast<std::size_t>(map.rows) * map.cols) {
    throw std::runtime_error("attribution map size mismatch in " + path.string());
  }
  return map;
}

void write_map_pgm(AttributionMap& map, const std::filesystem::path& path) {
  if (map.values.empty()) throw std::invalid_argument("write_map_pgm: empty map");
  const auto [lo_it, hi_it] = std::minmax_element(map.values.begin(), map.values.end());
  const double lo = *lo_it, hi = *hi_it;
  const double span = hi > lo ? hi - lo : 1.0;

  SlideImage img;
  img.id = map.slide_id;
  img.width = map.cols;
  img.height = map.rows;
  img.channels = 1;
  img.pixels.resize(map.values.size());
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    img.pixels[i] = 255.0 * (map.values[i] - lo) / span;
  }
  write_image(img, path);

  char note[160];
  std::snprintf(note, sizeof(note), "pgm scale: value = min + (gray/255) * (max - min), min=%.9g max=%.9g",
                lo, hi);
  map.normalization_note = note;
}

}  // namespace milkit
