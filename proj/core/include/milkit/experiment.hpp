#pragma once

#include <limits>
#include <string>
#include <vector>

#include "milkit/bag.hpp"
#include "milkit/metrics.hpp"
#include "milkit/training.hpp"

namespace milkit {

/// Multi-method comparison: one shared split, n independent re-runs per
/// method (seeds paired across methods by run index), metrics on the test
/// split using each run's best-validation-AUC parameters.
struct CompareOptions {
  std::vector<Variant> variants = {Variant::attention, Variant::max_pool, Variant::mean_pool,
                                   Variant::baseline};
  int runs = 20;
  TrainConfig train;  // per-method variant field is overwritten
  SplitSpec split;
  double threshold = kDefaultThreshold;
};

struct MethodSummary {
  Variant variant = Variant::attention;
  std::vector<MetricsReport> per_run;
  std::vector<double> test_auc;  // run-indexed, pairs with other methods
  MetricsAggregate aggregate;
  double p_vs_attention = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> p_flags;
};

struct CompareReport {
  std::vector<MethodSummary> methods;
  std::size_t n_train = 0, n_val = 0, n_test = 0;
  int runs = 0;
  double threshold = kDefaultThreshold;
};

CompareReport compare_methods(const std::vector<Bag>& bags, const CompareOptions& options);

/// Fixed-width text table shaped like the usual method-comparison tables:
/// rows are methods; columns are accuracy, F1, AUC as mean (mean-std -
/// mean+std), and the Wilcoxon p-value of AUC against the attention row.
std::string format_compare_table(const CompareReport& report);

/// Full-precision JSON rendering of the report (deterministic key order).
std::string compare_report_json(const CompareReport& report);

}  // namespace milkit
