#include "milkit/attention.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "milkit/models.hpp"

namespace milkit {

void Bag::validate() const {
  if (features.rank() != 2 || features.dim(0) < 1 || features.dim(1) < 1) {
    throw std::invalid_argument("bag '" + slide_id + "': features must be [K>=1, M>=1], got " +
                                features.shape_str());
  }
  if (coords.size() != static_cast<std::size_t>(features.dim(0))) {
    throw std::invalid_argument("bag '" + slide_id + "': coordinate count " +
                                std::to_string(coords.size()) + " != K=" +
                                std::to_string(features.dim(0)));
  }
  std::set<std::pair<int, int>> unique(coords.begin(), coords.end());
  if (unique.size() != coords.size()) {
    throw std::invalid_argument("bag '" + slide_id + "': duplicate grid coordinates");
  }
  if (!features.all_finite()) {
    throw std::invalid_argument("bag '" + slide_id + "': non-finite feature values");
  }
}

void AttentionParams::validate() const {
  if (V.rank() != 2 || V.dim(0) < 1 || V.dim(1) < 1) {
    throw std::invalid_argument("attention params: V must be [L, M], got " + V.shape_str());
  }
  if (w.rank() != 1 || w.dim(0) != V.dim(0)) {
    throw std::invalid_argument("attention params: w must be [L], got " + w.shape_str());
  }
  if (v.rank() != 1 || v.dim(0) != V.dim(1)) {
    throw std::invalid_argument("attention params: v must be [M], got " + v.shape_str());
  }
  if (!V.all_finite() || !w.all_finite() || !v.all_finite()) {
    throw std::invalid_argument("attention params: non-finite entries");
  }
}

AttentionParams AttentionParams::init(int attention_dim, int feature_dim, Rng& rng) {
  if (attention_dim < 1 || feature_dim < 1) {
    throw std::invalid_argument("attention params: dims must be >= 1");
  }
  AttentionParams p;
  p.V = init_normal({attention_dim, feature_dim}, feature_dim, rng);
  // near-uniform attention at init: the pooled embedding starts as the bag
  // mean, which carries the only label-correlated signal before v is learned
  p.w = init_normal({attention_dim}, attention_dim, rng);
  for (std::size_t i = 0; i < p.w.size(); ++i) p.w[i] *= 0.1;
  p.v = init_normal({feature_dim}, feature_dim, rng);
  return p;
}

namespace {

void check_bag_params(const Bag& bag, const AttentionParams& params) {
  bag.validate();
  params.validate();
  if (bag.feature_dim() != params.feature_dim()) {
    throw std::invalid_argument("bag feature dim " + std::to_string(bag.feature_dim()) +
                                " does not match attention params M=" +
                                std::to_string(params.feature_dim()));
  }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

AttentionWeights attention_weights(const Bag& bag, const AttentionParams& params) {
  check_bag_params(bag, params);
  const int k = bag.instance_count();
  const int m = bag.feature_dim();
  const int l = params.attention_dim();

  std::vector<double> logits(k);
  for (int i = 0; i < k; ++i) {
    const double* h = bag.features.data() + static_cast<std::size_t>(i) * m;
    double logit = 0.0;
    for (int j = 0; j < l; ++j) {
      const double* vrow = params.V.data() + static_cast<std::size_t>(j) * m;
      double acc = 0.0;
      for (int t = 0; t < m; ++t) acc += vrow[t] * h[t];
      logit += params.w[j] * std::tanh(acc);
    }
    logits[i] = logit;
  }

  const double mx = *std::max_element(logits.begin(), logits.end());
  AttentionWeights out;
  out.a.resize(k);
  double denom = 0.0;
  for (int i = 0; i < k; ++i) {
    out.a[i] = std::exp(logits[i] - mx);
    denom += out.a[i];
  }
  for (int i = 0; i < k; ++i) out.a[i] /= denom;
  return out;
}

PooledEmbedding pool(const Bag& bag, const AttentionWeights& weights) {
  bag.validate();
  const int k = bag.instance_count();
  const int m = bag.feature_dim();
  if (weights.a.size() != static_cast<std::size_t>(k)) {
    throw std::invalid_argument("pool: " + std::to_string(weights.a.size()) +
                                " weights for K=" + std::to_string(k) + " instances");
  }
  PooledEmbedding out;
  out.z.assign(m, 0.0);
  for (int i = 0; i < k; ++i) {
    const double ai = weights.a[i];
    const double* h = bag.features.data() + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) out.z[j] += ai * h[j];
  }
  return out;
}

double classify(const PooledEmbedding& z, const AttentionParams& params) {
  params.validate();
  if (z.z.size() != static_cast<std::size_t>(params.feature_dim())) {
    throw std::invalid_argument("classify: embedding length " + std::to_string(z.z.size()) +
                                " does not match v");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < z.z.size(); ++i) s += params.v[i] * z.z[i];
  return sigmoid(s);
}

double predict_attention(const Bag& bag, const AttentionParams& params) {
  return classify(pool(bag, attention_weights(bag, params)), params);
}

double instance_probability(const Bag& bag, int instance, const Tensor& v) {
  const int m = bag.feature_dim();
  if (v.rank() != 1 || v.dim(0) != m) {
    throw std::invalid_argument("instance_probability: classifier length mismatch");
  }
  const double* h = bag.features.data() + static_cast<std::size_t>(instance) * m;
  double s = 0.0;
  for (int j = 0; j < m; ++j) s += v[j] * h[j];
  return sigmoid(s);
}

double predict_mean(const Bag& bag, const Tensor& v) {
  bag.validate();
  double acc = 0.0;
  for (int i = 0; i < bag.instance_count(); ++i) acc += instance_probability(bag, i, v);
  return acc / bag.instance_count();
}

double predict_max(const Bag& bag, const Tensor& v, int* arg_instance) {
  bag.validate();
  double best = instance_probability(bag, 0, v);
  int arg = 0;
  for (int i = 1; i < bag.instance_count(); ++i) {
    const double p = instance_probability(bag, i, v);
    if (p > best) {
      best = p;
      arg = i;
    }
  }
  if (arg_instance) *arg_instance = arg;
  return best;
}

ad::Var attention_graph(const ad::Var& features, const ad::Var& V, const ad::Var& w,
                        const ad::Var& v) {
  ad::Var transformed = ad::tanh_v(ad::matmul_nt(features, V));  // [K, L]
  ad::Var logits = ad::matvec(transformed, w);                   // [K]
  ad::Var a = ad::softmax1d(logits);                             // [K]
  ad::Var z = ad::weighted_rows(a, features);                    // [M]
  return ad::sigmoid_v(ad::dot(v, z));                           // [1]
}

ad::Var mean_pool_graph(const ad::Var& features, const ad::Var& v) {
  return ad::mean1d(ad::sigmoid_v(ad::matvec(features, v)));
}

ad::Var max_pool_graph(const ad::Var& features, const ad::Var& v) {
  return ad::max1d(ad::sigmoid_v(ad::matvec(features, v)));
}

void write_attention_record(const Bag& bag, const AttentionWeights& weights,
                            const std::filesystem::path& path) {
  if (weights.a.size() != static_cast<std::size_t>(bag.instance_count())) {
    throw std::invalid_argument("attention record: weight count mismatch");
  }
  nlohmann::ordered_json j;
  j["slide_id"] = bag.slide_id;
  auto& list = j["weights"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < weights.a.size(); ++i) {
    list.push_back({bag.coords[i].first, bag.coords[i].second, weights.a[i]});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write attention record: " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace milkit
