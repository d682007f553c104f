#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "milkit/attention.hpp"
#include "milkit/bag.hpp"
#include "milkit/metrics.hpp"
#include "milkit/models.hpp"

namespace milkit {

enum class Variant { attention, mean_pool, max_pool, baseline };

Variant parse_variant(const std::string& name);  // attention | mean | max | baseline
std::string variant_name(Variant v);

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  int epochs = 50;
  double weight_decay = 1e-4;
  std::uint64_t seed = 1;
  Variant variant = Variant::attention;

  // model dimensions
  int attention_dim = kDefaultAttentionDim;  // L
  int baseline_raster = 32;                  // bag-raster side for the baseline variant
  std::vector<int> baseline_channels = {4, 8, 16, 32, 32};

  void validate() const;
};

/// Plain binary cross-entropy with the prediction clamped to
/// [1e-7, 1 - 1e-7].
double bce_loss(double y_hat, int label);

/// A trainable bag-level classifier. The attention / mean / max variants
/// operate on instance features; the baseline variant renders the bag's
/// feature matrix as a square raster and runs the five-block CNN on it.
class BagClassifier {
 public:
  virtual ~BagClassifier() = default;
  virtual Variant variant() const = 0;
  virtual int feature_dim() const = 0;
  virtual ad::Var predict_graph(const Bag& bag) = 0;
  virtual std::vector<ad::Var>& params() = 0;

  double predict(const Bag& bag) { return predict_graph(bag).value().item(); }
};

std::unique_ptr<BagClassifier> make_classifier(const TrainConfig& config, int feature_dim,
                                               Rng& rng);

std::vector<Tensor> snapshot_params(const BagClassifier& model);
void load_params(BagClassifier& model, const std::vector<Tensor>& tensors);
void load_param_tensors(std::vector<ad::Var>& params, const std::vector<Tensor>& tensors);

/// Bag features [K, M] placed on a zero-padded square and area-averaged to
/// [1, 1, raster, raster]; the baseline variant's input.
Tensor render_bag_raster(const Bag& bag, int raster);

/// SGD with momentum and weight decay folded into the gradient:
///   velocity <- momentum * velocity + grad + weight_decay * param
///   param    <- param - learning_rate * velocity
class SgdOptimizer {
 public:
  explicit SgdOptimizer(const TrainConfig& config);

  /// One update from the gradients currently stored on the parameters.
  /// Throws on non-finite gradients (run aborted with diagnostics).
  void step(std::vector<ad::Var>& params);

 private:
  double learning_rate_, momentum_, weight_decay_;
  std::vector<Tensor> velocity_;
};

struct RunHistory {
  Variant variant = Variant::attention;
  std::uint64_t seed = 0;
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_loss;
  std::vector<double> val_auc;
  std::vector<Tensor> final_params;
  std::vector<Tensor> best_params;  // highest validation AUC, earliest epoch on ties
  int best_epoch = -1;
  std::vector<std::string> flags;
};

/// One optimization step per bag per epoch, bag order reshuffled each epoch
/// from the run seed. Fully deterministic given (seed, config, data).
RunHistory train(const std::vector<Bag>& train_bags, const std::vector<Bag>& val_bags,
                 const TrainConfig& config);

/// n_runs independent trainings with seeds seed+0 .. seed+(n_runs-1).
/// Runs execute in parallel with disjoint state; results are ordered by
/// run index.
std::vector<RunHistory> rerun(const std::vector<Bag>& train_bags,
                              const std::vector<Bag>& val_bags, const TrainConfig& config,
                              int n_runs);

std::vector<ScoredExample> score_bags(BagClassifier& model, const std::vector<Bag>& bags);

/// RunHistory as CSV: epoch,train_loss,val_loss,val_auc.
void write_history_csv(const RunHistory& history, const std::filesystem::path& path);

}  // namespace milkit
