#include "milkit/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "milkit/bagfile.hpp"

namespace milkit {

CompareReport compare_methods(const std::vector<Bag>& bags, const CompareOptions& options) {
  if (options.variants.empty()) throw std::invalid_argument("compare: no variants");
  if (options.runs < 1) throw std::invalid_argument("compare: runs must be >= 1");

  IndexSplit idx = split_indices(bags.size(), options.split);
  std::vector<Bag> train_bags, val_bags, test_bags;
  for (std::size_t i : idx.train) train_bags.push_back(bags[i]);
  for (std::size_t i : idx.val) val_bags.push_back(bags[i]);
  for (std::size_t i : idx.test) test_bags.push_back(bags[i]);

  CompareReport report;
  report.n_train = train_bags.size();
  report.n_val = val_bags.size();
  report.n_test = test_bags.size();
  report.runs = options.runs;
  report.threshold = options.threshold;

  for (Variant variant : options.variants) {
    TrainConfig cfg = options.train;
    cfg.variant = variant;
    auto histories = rerun(train_bags, val_bags, cfg, options.runs);

    MethodSummary summary;
    summary.variant = variant;
    for (const auto& history : histories) {
      TrainConfig run_cfg = cfg;
      run_cfg.seed = history.seed;
      Rng rebuild_rng(history.seed);
      auto model = make_classifier(run_cfg, train_bags.front().feature_dim(), rebuild_rng);
      load_params(*model, history.best_params);
      auto scores = score_bags(*model, test_bags);
      MetricsReport metrics = confusion_metrics(scores, options.threshold);
      summary.test_auc.push_back(metrics.auc);
      summary.per_run.push_back(std::move(metrics));
    }
    summary.aggregate = aggregate_runs(summary.per_run);
    report.methods.push_back(std::move(summary));
  }

  // Wilcoxon signed-rank of per-run AUC against the attention method
  const auto attention_it =
      std::find_if(report.methods.begin(), report.methods.end(),
                   [](const MethodSummary& m) { return m.variant == Variant::attention; });
  if (attention_it != report.methods.end()) {
    for (auto& method : report.methods) {
      if (method.variant == Variant::attention) continue;
      try {
        WilcoxonResult res = wilcoxon_signed_rank(attention_it->test_auc, method.test_auc);
        method.p_vs_attention = res.p_value;
        method.p_flags = res.flags;
      } catch (const std::invalid_argument&) {
        method.p_flags.push_back("too_few_paired_runs");
      }
    }
  }
  return report;
}

namespace {

std::string method_label(Variant v) {
  switch (v) {
    case Variant::attention: return "MIL attention";
    case Variant::max_pool: return "MIL max pooling";
    case Variant::mean_pool: return "MIL mean pooling";
    case Variant::baseline: return "end-to-end CNN (raster)";
  }
  return "?";
}

std::string band(const Aggregate& a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f (%.3f-%.3f)", a.mean, a.mean - a.stddev,
                a.mean + a.stddev);
  return buf;
}

std::string p_label(double p) {
  if (std::isnan(p)) return "-";
  if (p < 0.001) return "<0.001";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", p);
  return buf;
}

}  // namespace

std::string format_compare_table(const CompareReport& report) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%-24s %-21s %-21s %-21s %s\n", "method", "accuracy", "F1",
                "AUC", "p-value");
  os << line;
  os << std::string(96, '-') << '\n';
  for (const auto& m : report.methods) {
    std::snprintf(line, sizeof(line), "%-24s %-21s %-21s %-21s %s\n",
                  method_label(m.variant).c_str(), band(m.aggregate.accuracy).c_str(),
                  band(m.aggregate.f1).c_str(), band(m.aggregate.auc).c_str(),
                  p_label(m.p_vs_attention).c_str());
    os << line;
  }
  std::snprintf(line, sizeof(line),
                "runs=%d per method, split train/val/test = %zu/%zu/%zu, threshold=%.2f, "
                "bands are mean +/- sample std, p-values: Wilcoxon signed-rank of AUC vs "
                "attention\n",
                report.runs, report.n_train, report.n_val, report.n_test, report.threshold);
  os << line;
  return os.str();
}

std::string compare_report_json(const CompareReport& report) {
  nlohmann::ordered_json j;
  j["runs"] = report.runs;
  j["split"] = {{"train", report.n_train}, {"val", report.n_val}, {"test", report.n_test}};
  j["threshold"] = report.threshold;
  auto& methods = j["methods"] = nlohmann::ordered_json::array();
  for (const auto& m : report.methods) {
    nlohmann::ordered_json mj;
    mj["variant"] = variant_name(m.variant);
    auto agg = [](const Aggregate& a) {
      return nlohmann::ordered_json{{"mean", a.mean}, {"std", a.stddev}};
    };
    mj["accuracy"] = agg(m.aggregate.accuracy);
    mj["f1"] = agg(m.aggregate.f1);
    mj["auc"] = agg(m.aggregate.auc);
    mj["sensitivity"] = agg(m.aggregate.sensitivity);
    mj["specificity"] = agg(m.aggregate.specificity);
    if (!std::isnan(m.p_vs_attention)) mj["p_vs_attention"] = m.p_vs_attention;
    if (!m.p_flags.empty()) mj["p_flags"] = m.p_flags;
    mj["auc_per_run"] = m.test_auc;
    methods.push_back(std::move(mj));
  }
  return j.dump(2) + "\n";
}

}  // namespace milkit
