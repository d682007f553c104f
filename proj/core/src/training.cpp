#include "milkit/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace milkit {

Variant parse_variant(const std::string& name) {
  if (name == "attention") return Variant::attention;
  if (name == "mean") return Variant::mean_pool;
  if (name == "max") return Variant::max_pool;
  if (name == "baseline") return Variant::baseline;
  throw std::invalid_argument("unknown variant '" + name +
                              "' (expected attention|mean|max|baseline)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::attention: return "attention";
    case Variant::mean_pool: return "mean";
    case Variant::max_pool: return "max";
    case Variant::baseline: return "baseline";
  }
  return "?";
}

void TrainConfig::validate() const {
  // learning_rate 0 is allowed as an explicit no-op optimizer
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("train: learning_rate must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw std::invalid_argument("train: momentum must be in [0, 1)");
  }
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (weight_decay < 0.0) throw std::invalid_argument("train: weight_decay must be >= 0");
  if (attention_dim < 1) throw std::invalid_argument("train: attention_dim must be >= 1");
  if (baseline_raster < 32) throw std::invalid_argument("train: baseline_raster must be >= 32");
}

double bce_loss(double y_hat, int label) {
  const double p = std::clamp(y_hat, ad::kBceEps, 1.0 - ad::kBceEps);
  return -(label * std::log(p) + (1 - label) * std::log(1.0 - p));
}

Tensor render_bag_raster(const Bag& bag, int raster) {
  bag.validate();
  const int k = bag.instance_count(), m = bag.feature_dim();
  const int side = std::max(k, m);
  Tensor square({side, side});
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < m; ++j) square.at2(i, j) = bag.features.at2(i, j);
  }
  Tensor resized = area_resize(square, raster, raster);
  Tensor out({1, 1, raster, raster});
  for (std::size_t i = 0; i < resized.size(); ++i) out[i] = resized[i];
  return out;
}

namespace {

class AttentionClassifier final : public BagClassifier {
 public:
  AttentionClassifier(int attention_dim, int feature_dim, Rng& rng) : m_(feature_dim) {
    AttentionParams p = AttentionParams::init(attention_dim, feature_dim, rng);
    params_ = {ad::Var::leaf(std::move(p.V), true), ad::Var::leaf(std::move(p.w), true),
               ad::Var::leaf(std::move(p.v), true)};
  }
  Variant variant() const override { return Variant::attention; }
  int feature_dim() const override { return m_; }
  ad::Var predict_graph(const Bag& bag) override {
    return attention_graph(ad::Var::leaf(bag.features), params_[0], params_[1], params_[2]);
  }
  std::vector<ad::Var>& params() override { return params_; }

 private:
  int m_;
  std::vector<ad::Var> params_;  // V, w, v
};

class InstancePoolClassifier final : public BagClassifier {
 public:
  InstancePoolClassifier(Variant variant, int feature_dim, Rng& rng)
      : variant_(variant), m_(feature_dim) {
    params_ = {ad::Var::leaf(init_normal({feature_dim}, feature_dim, rng), true)};
  }
  Variant variant() const override { return variant_; }
  int feature_dim() const override { return m_; }
  ad::Var predict_graph(const Bag& bag) override {
    ad::Var h = ad::Var::leaf(bag.features);
    return variant_ == Variant::mean_pool ? mean_pool_graph(h, params_[0])
                                          : max_pool_graph(h, params_[0]);
  }
  std::vector<ad::Var>& params() override { return params_; }

 private:
  Variant variant_;
  int m_;
  std::vector<ad::Var> params_;  // v
};

class BaselineBagClassifier final : public BagClassifier {
 public:
  BaselineBagClassifier(const TrainConfig& config, int feature_dim, Rng& rng)
      : m_(feature_dim), raster_(config.baseline_raster) {
    BaselineConfig bc;
    bc.input_size = config.baseline_raster;
    bc.in_channels = 1;
    bc.channels = config.baseline_channels;
    net_ = std::make_unique<BaselineNet>(bc, rng);
  }
  Variant variant() const override { return Variant::baseline; }
  int feature_dim() const override { return m_; }
  ad::Var predict_graph(const Bag& bag) override {
    return net_->forward(ad::Var::leaf(render_bag_raster(bag, raster_)));
  }
  std::vector<ad::Var>& params() override { return net_->params(); }
  BaselineNet& net() { return *net_; }

 private:
  int m_;
  int raster_;
  std::unique_ptr<BaselineNet> net_;
};

}  // namespace

std::unique_ptr<BagClassifier> make_classifier(const TrainConfig& config, int feature_dim,
                                               Rng& rng) {
  switch (config.variant) {
    case Variant::attention:
      return std::make_unique<AttentionClassifier>(config.attention_dim, feature_dim, rng);
    case Variant::mean_pool:
    case Variant::max_pool:
      return std::make_unique<InstancePoolClassifier>(config.variant, feature_dim, rng);
    case Variant::baseline:
      return std::make_unique<BaselineBagClassifier>(config, feature_dim, rng);
  }
  throw std::logic_error("unreachable variant");
}

std::vector<Tensor> snapshot_params(const BagClassifier& model) {
  std::vector<Tensor> out;
  for (const auto& p : const_cast<BagClassifier&>(model).params()) out.push_back(p.value());
  return out;
}

void load_param_tensors(std::vector<ad::Var>& params, const std::vector<Tensor>& tensors) {
  if (params.size() != tensors.size()) {
    throw std::invalid_argument("load_params: expected " + std::to_string(params.size()) +
                                " tensors, got " + std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].value().same_shape(tensors[i])) {
      throw std::invalid_argument("load_params: tensor " + std::to_string(i) +
                                  " shape mismatch " + params[i].value().shape_str() + " vs " +
                                  tensors[i].shape_str());
    }
    params[i].value() = tensors[i];
  }
}

void load_params(BagClassifier& model, const std::vector<Tensor>& tensors) {
  load_param_tensors(model.params(), tensors);
}

SgdOptimizer::SgdOptimizer(const TrainConfig& config)
    : learning_rate_(config.learning_rate),
      momentum_(config.momentum),
      weight_decay_(config.weight_decay) {}

void SgdOptimizer::step(std::vector<ad::Var>& params) {
  if (velocity_.empty()) {
    for (const auto& p : params) velocity_.push_back(Tensor::zeros(p.value().shape()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& g = params[i].grad();
    if (!g.all_finite()) {
      throw std::runtime_error("sgd_step: non-finite gradient in parameter " +
                               std::to_string(i) + " " + g.shape_str() + "; run aborted");
    }
    Tensor& p = params[i].value();
    Tensor& vel = velocity_[i];
    for (std::size_t t = 0; t < p.size(); ++t) {
      vel[t] = momentum_ * vel[t] + g[t] + weight_decay_ * p[t];
      p[t] -= learning_rate_ * vel[t];
    }
  }
}

std::vector<ScoredExample> score_bags(BagClassifier& model, const std::vector<Bag>& bags) {
  std::vector<ScoredExample> out;
  out.reserve(bags.size());
  for (const auto& bag : bags) out.push_back({bag.slide_id, model.predict(bag), bag.label});
  return out;
}

RunHistory train(const std::vector<Bag>& train_bags, const std::vector<Bag>& val_bags,
                 const TrainConfig& config) {
  config.validate();
  if (train_bags.empty() || val_bags.empty()) {
    throw std::invalid_argument("train: train and validation splits must be non-empty");
  }
  const int m = train_bags.front().feature_dim();
  for (const auto& bag : train_bags) {
    bag.validate();
    if (bag.feature_dim() != m) throw std::invalid_argument("train: inconsistent feature dims");
  }
  for (const auto& bag : val_bags) bag.validate();

  Rng rng(config.seed);
  auto model = make_classifier(config, m, rng);
  SgdOptimizer optimizer(config);

  RunHistory history;
  history.variant = config.variant;
  history.seed = config.seed;

  bool val_has_both_classes = false;
  {
    bool pos = false, neg = false;
    for (const auto& bag : val_bags) (bag.label ? pos : neg) = true;
    val_has_both_classes = pos && neg;
    if (!val_has_both_classes) history.flags.push_back("val_single_class");
  }

  std::vector<std::size_t> order(train_bags.size());
  std::iota(order.begin(), order.end(), 0);

  double best_auc = -1.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t idx : order) {
      const Bag& bag = train_bags[idx];
      for (auto& p : model->params()) p.zero_grad();
      ad::Var loss = ad::bce(model->predict_graph(bag), bag.label);
      loss_sum += loss.value().item();
      ad::backward(loss);
      try {
        optimizer.step(model->params());
      } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                                 ", bag '" + bag.slide_id + "', variant " +
                                 variant_name(config.variant) + ")");
      }
    }
    history.train_loss.push_back(loss_sum / static_cast<double>(train_bags.size()));

    double val_loss_sum = 0.0;
    std::vector<ScoredExample> val_scores;
    val_scores.reserve(val_bags.size());
    for (const auto& bag : val_bags) {
      const double p = model->predict(bag);
      val_loss_sum += bce_loss(p, bag.label);
      val_scores.push_back({bag.slide_id, p, bag.label});
    }
    history.val_loss.push_back(val_loss_sum / static_cast<double>(val_bags.size()));
    const double epoch_auc = val_has_both_classes ? auc(val_scores) : 0.5;
    history.val_auc.push_back(epoch_auc);

    if (epoch_auc > best_auc) {
      best_auc = epoch_auc;
      history.best_epoch = epoch;
      history.best_params = snapshot_params(*model);
    }
  }
  history.final_params = snapshot_params(*model);
  return history;
}

std::vector<RunHistory> rerun(const std::vector<Bag>& train_bags,
                              const std::vector<Bag>& val_bags, const TrainConfig& config,
                              int n_runs) {
  if (n_runs < 1) throw std::invalid_argument("rerun: n_runs must be >= 1");
  std::vector<RunHistory> results(n_runs);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  const unsigned workers =
      std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()),
                         static_cast<unsigned>(n_runs));
  auto worker = [&]() {
    for (int i = next.fetch_add(1); i < n_runs; i = next.fetch_add(1)) {
      try {
        TrainConfig run_config = config;
        run_config.seed = config.seed + static_cast<std::uint64_t>(i);
        results[static_cast<std::size_t>(i)] = train(train_bags, val_bags, run_config);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };

  std::vector<std::thread> pool;
  for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

void write_history_csv(const RunHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write history: " + path.string());
  out << "epoch,train_loss,val_loss,val_auc\n";
  char buf[128];
  for (std::size_t e = 0; e < history.train_loss.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", e, history.train_loss[e],
                  history.val_loss[e], history.val_auc[e]);
    out << buf;
  }
}

}  // namespace milkit
