#pragma once

#include <filesystem>
#include <vector>

#include "milkit/autodiff.hpp"
#include "milkit/bag.hpp"
#include "milkit/rng.hpp"

namespace milkit {

/// Trainable parameters of the attention pooling head: the attention weight
/// a_k = softmax_k( w^T tanh(V h_k) ), the pooled embedding z = sum a_k h_k,
/// and the classifier y = sigmoid(v^T z).
struct AttentionParams {
  Tensor V;  // [L, M]
  Tensor w;  // [L]
  Tensor v;  // [M]

  int attention_dim() const { return V.rank() == 2 ? V.dim(0) : 0; }  // L
  int feature_dim() const { return V.rank() == 2 ? V.dim(1) : 0; }    // M

  void validate() const;
  static AttentionParams init(int attention_dim, int feature_dim, Rng& rng);
};

struct AttentionWeights {
  std::vector<double> a;  // strictly positive, sums to 1
};

struct PooledEmbedding {
  std::vector<double> z;  // length M
};

constexpr int kDefaultAttentionDim = 128;  // L
constexpr int kDefaultFeatureDim = 64;     // M

/// Softmax over k of w^T tanh(V h_k), max-subtraction stabilized.
AttentionWeights attention_weights(const Bag& bag, const AttentionParams& params);

/// z = sum_k a_k h_k accumulated in instance order.
PooledEmbedding pool(const Bag& bag, const AttentionWeights& weights);

/// sigmoid(v^T z).
double classify(const PooledEmbedding& z, const AttentionParams& params);

/// Convenience composition of the three steps above.
double predict_attention(const Bag& bag, const AttentionParams& params);

/// Per-instance probability sigmoid(v^T h_k).
double instance_probability(const Bag& bag, int instance, const Tensor& v);

/// Mean of per-instance probabilities (pooling over predictions).
double predict_mean(const Bag& bag, const Tensor& v);

/// Max of per-instance probabilities; ties resolve to the lowest index,
/// reported through arg_instance when non-null.
double predict_max(const Bag& bag, const Tensor& v, int* arg_instance = nullptr);

// Graph-building forwards used by training; numerically equivalent to the
// plain functions above.
ad::Var attention_graph(const ad::Var& features, const ad::Var& V, const ad::Var& w,
                        const ad::Var& v);                       // -> probability [1]
ad::Var mean_pool_graph(const ad::Var& features, const ad::Var& v);
ad::Var max_pool_graph(const ad::Var& features, const ad::Var& v);

/// Structured-text export {slide_id, [(row, col, weight)]} consumed by the
/// interpretation tooling.
void write_attention_record(const Bag& bag, const AttentionWeights& weights,
                            const std::filesystem::path& path);

}  // namespace milkit
