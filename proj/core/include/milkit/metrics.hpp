#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace milkit {

struct ScoredExample {
  std::string id;
  double score = 0.0;
  int label = 0;  // 0 or 1
};

struct MetricsReport {
  double accuracy = 0.0;
  double f1 = 0.0;
  double auc = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double threshold = 0.5;
  std::vector<std::string> flags;  // degenerate-definition markers
};

constexpr double kDefaultThreshold = 0.5;

/// Mann-Whitney AUC: the fraction of positive/negative pairs where the
/// positive scores higher, ties counted 1/2. Computed via midranks in
/// O(n log n); equals the exhaustive pairwise statistic exactly.
/// Requires at least one positive and one negative example.
double auc(const std::vector<ScoredExample>& examples);

/// O(n^2) pairwise oracle for the statistic above (test/reference use).
double auc_pairwise(const std::vector<ScoredExample>& examples);

/// Threshold rule: score >= threshold predicts positive. F1 is reported as 0
/// with a flag when TP+FP+FN = 0; AUC is filled in when both classes are
/// present, else flagged.
MetricsReport confusion_metrics(const std::vector<ScoredExample>& examples, double threshold);

struct WilcoxonResult {
  double p_value = 1.0;
  double w_plus = 0.0;
  double w_minus = 0.0;
  int n_used = 0;   // pairs remaining after dropping zero differences
  bool exact = false;
  std::vector<std::string> flags;
};

/// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences
/// are dropped; |differences| are midranked. Exact null enumeration for
/// n <= 25 (dynamic program over the 2^n sign assignments), normal
/// approximation with tie and continuity correction beyond that.
/// All-zero differences are reported as p = 1 with a flag; otherwise fewer
/// than 5 usable pairs is an error.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& paired_a,
                                    const std::vector<double>& paired_b);

constexpr int kWilcoxonExactLimit = 25;

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // sample std, n-1 denominator
};

struct MetricsAggregate {
  Aggregate accuracy, f1, auc, sensitivity, specificity;
  int n_runs = 0;
  std::vector<std::string> flags;
};

/// Per-metric sample mean and standard deviation across re-runs; a single
/// run yields std 0 with a flag.
MetricsAggregate aggregate_runs(const std::vector<MetricsReport>& reports);

Aggregate aggregate_values(const std::vector<double>& values);

struct SplitSpec {
  double test_fraction = 0.15;
  double val_fraction_of_train = 0.20;
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<std::string> train, val, test;
};

struct IndexSplit {
  std::vector<std::size_t> train, val, test;
};

/// Seeded-shuffle split: |test| = round(n * test_fraction) first, then
/// |val| = round(remaining * val_fraction_of_train); the rest is train.
/// Rounding is half-up. Rejects inputs with fewer than 5 items or fractions
/// that leave any part empty.
IndexSplit split_indices(std::size_t n, const SplitSpec& spec);
Split split_dataset(const std::vector<std::string>& ids, const SplitSpec& spec);

}  // namespace milkit
