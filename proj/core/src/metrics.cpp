#include "milkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "milkit/rng.hpp"

namespace milkit {

namespace {

void count_classes(const std::vector<ScoredExample>& examples, long long& n_pos,
                   long long& n_neg) {
  n_pos = n_neg = 0;
  for (const auto& e : examples) {
    if (e.label == 1) ++n_pos;
    else if (e.label == 0) ++n_neg;
    else throw std::invalid_argument("auc: labels must be 0 or 1");
    if (!std::isfinite(e.score)) throw std::invalid_argument("auc: non-finite score");
  }
}

}  // namespace

double auc(const std::vector<ScoredExample>& examples) {
  long long n_pos, n_neg;
  count_classes(examples, n_pos, n_neg);
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument("auc undefined: needs at least one positive and one negative");
  }

  const std::size_t n = examples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return examples[a].score < examples[b].score;
  });

  // midranks over tie groups; rank sum of positives
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && examples[order[j]].score == examples[order[i]].score) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // (first + last) / 2, 1-based
    for (std::size_t t = i; t < j; ++t) {
      if (examples[order[t]].label == 1) rank_sum_pos += midrank;
    }
    i = j;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auc_pairwise(const std::vector<ScoredExample>& examples) {
  long long n_pos, n_neg;
  count_classes(examples, n_pos, n_neg);
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument("auc undefined: needs at least one positive and one negative");
  }
  double wins = 0.0;
  for (const auto& p : examples) {
    if (p.label != 1) continue;
    for (const auto& q : examples) {
      if (q.label != 0) continue;
      if (p.score > q.score) wins += 1.0;
      else if (p.score == q.score) wins += 0.5;
    }
  }
  return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

MetricsReport confusion_metrics(const std::vector<ScoredExample>& examples, double threshold) {
  if (examples.empty()) throw std::invalid_argument("confusion_metrics: empty input");
  if (!std::isfinite(threshold)) throw std::invalid_argument("confusion_metrics: bad threshold");

  long long tp = 0, fp = 0, tn = 0, fn = 0;
  for (const auto& e : examples) {
    const bool pred = e.score >= threshold;
    if (e.label == 1) {
      pred ? ++tp : ++fn;
    } else if (e.label == 0) {
      pred ? ++fp : ++tn;
    } else {
      throw std::invalid_argument("confusion_metrics: labels must be 0 or 1");
    }
  }

  MetricsReport r;
  r.threshold = threshold;
  r.accuracy = static_cast<double>(tp + tn) / static_cast<double>(examples.size());
  if (tp + fp + fn == 0) {
    r.f1 = 0.0;
    r.flags.push_back("f1_undefined");
  } else {
    r.f1 = 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
  }
  if (tp + fn == 0) {
    r.sensitivity = 0.0;
    r.flags.push_back("sensitivity_undefined");
  } else {
    r.sensitivity = static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  if (tn + fp == 0) {
    r.specificity = 0.0;
    r.flags.push_back("specificity_undefined");
  } else {
    r.specificity = static_cast<double>(tn) / static_cast<double>(tn + fp);
  }
  if (tp + fn > 0 && tn + fp > 0) {
    r.auc = auc(examples);
  } else {
    r.auc = 0.5;
    r.flags.push_back("auc_undefined");
  }
  return r;
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& paired_a,
                                    const std::vector<double>& paired_b) {
  if (paired_a.size() != paired_b.size()) {
    throw std::invalid_argument("wilcoxon: paired samples must have equal length");
  }
  std::vector<double> diffs;
  diffs.reserve(paired_a.size());
  for (std::size_t i = 0; i < paired_a.size(); ++i) {
    const double d = paired_a[i] - paired_b[i];
    if (!std::isfinite(d)) throw std::invalid_argument("wilcoxon: non-finite difference");
    if (d != 0.0) diffs.push_back(d);
  }

  WilcoxonResult res;
  res.n_used = static_cast<int>(diffs.size());
  if (diffs.empty()) {
    res.p_value = 1.0;
    res.flags.push_back("all_differences_zero");
    return res;
  }
  if (diffs.size() < 5) {
    throw std::invalid_argument("wilcoxon: needs at least 5 non-zero differences, got " +
                                std::to_string(diffs.size()));
  }

  const int n = static_cast<int>(diffs.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(diffs[a]) < std::abs(diffs[b]);
  });

  // midranks of |d|; doubled so tied midranks (x.5) stay integral
  std::vector<long long> rank2(n);
  std::vector<long long> tie_sizes;
  int i = 0;
  while (i < n) {
    int j = i;
    while (j < n && std::abs(diffs[order[j]]) == std::abs(diffs[order[i]])) ++j;
    const long long r2 = i + 1 + j;  // 2 * midrank
    for (int t = i; t < j; ++t) rank2[order[t]] = r2;
    tie_sizes.push_back(j - i);
    i = j;
  }

  long long w2_plus = 0, w2_total = 0;
  for (int t = 0; t < n; ++t) {
    w2_total += rank2[t];
    if (diffs[t] > 0.0) w2_plus += rank2[t];
  }
  res.w_plus = 0.5 * static_cast<double>(w2_plus);
  res.w_minus = 0.5 * static_cast<double>(w2_total - w2_plus);

  if (n <= kWilcoxonExactLimit) {
    // Exact null: all 2^n sign assignments are equally likely. Count the
    // assignments reaching each doubled rank sum with a subset-sum DP; the
    // two-sided p-value doubles the smaller tail at the observed statistic.
    res.exact = true;
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(w2_total) + 1, 0);
    counts[0] = 1;
    long long reach = 0;
    for (int t = 0; t < n; ++t) {
      const long long r = rank2[t];
      reach += r;
      for (long long s = reach; s >= r; --s) counts[s] += counts[s - r];
    }
    std::uint64_t below = 0, above = 0;
    for (long long s = 0; s <= w2_total; ++s) {
      if (s <= w2_plus) below += counts[s];
      if (s >= w2_plus) above += counts[s];
    }
    const double total = std::ldexp(1.0, n);  // 2^n
    const double tail = static_cast<double>(std::min(below, above)) / total;
    res.p_value = std::min(1.0, 2.0 * tail);
  } else {
    // Normal approximation with tie correction and continuity correction.
    const double nn = n;
    const double mean = nn * (nn + 1.0) / 4.0;
    double tie_term = 0.0;
    for (long long t : tie_sizes) {
      tie_term += static_cast<double>(t) * t * t - static_cast<double>(t);
    }
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    if (var <= 0.0) {
      res.p_value = 1.0;
      res.flags.push_back("zero_variance");
      return res;
    }
    const double w = res.w_plus;
    const double cc = (w > mean) ? -0.5 : (w < mean ? 0.5 : 0.0);
    const double z = (w - mean + cc) / std::sqrt(var);
    res.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
  }
  return res;
}

Aggregate aggregate_values(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("aggregate: no values");
  Aggregate a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return a;
}

MetricsAggregate aggregate_runs(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("aggregate_runs: no reports");
  auto collect = [&](double MetricsReport::*field) {
    std::vector<double> values;
    values.reserve(reports.size());
    for (const auto& r : reports) values.push_back(r.*field);
    return aggregate_values(values);
  };
  MetricsAggregate agg;
  agg.n_runs = static_cast<int>(reports.size());
  agg.accuracy = collect(&MetricsReport::accuracy);
  agg.f1 = collect(&MetricsReport::f1);
  agg.auc = collect(&MetricsReport::auc);
  agg.sensitivity = collect(&MetricsReport::sensitivity);
  agg.specificity = collect(&MetricsReport::specificity);
  if (reports.size() == 1) agg.flags.push_back("single_run_std_zero");
  return agg;
}

IndexSplit split_indices(std::size_t n, const SplitSpec& spec) {
  if (n < 5) throw std::invalid_argument("split: needs at least 5 items");
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) ||
      !(spec.val_fraction_of_train > 0.0 && spec.val_fraction_of_train < 1.0)) {
    throw std::invalid_argument("split: fractions must be in (0, 1)");
  }

  const auto round_half_up = [](double x) {
    return static_cast<std::size_t>(std::floor(x + 0.5));
  };
  const std::size_t n_test = round_half_up(static_cast<double>(n) * spec.test_fraction);
  const std::size_t remaining = n - n_test;
  const std::size_t n_val =
      round_half_up(static_cast<double>(remaining) * spec.val_fraction_of_train);
  if (n_test == 0 || n_val == 0 || n_val >= remaining) {
    throw std::invalid_argument("split: fractions produce an empty train, val, or test set");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(spec.seed);
  rng.shuffle(order);

  IndexSplit split;
  split.test.assign(order.begin(), order.begin() + n_test);
  split.val.assign(order.begin() + n_test, order.begin() + n_test + n_val);
  split.train.assign(order.begin() + n_test + n_val, order.end());
  return split;
}

Split split_dataset(const std::vector<std::string>& ids, const SplitSpec& spec) {
  IndexSplit idx = split_indices(ids.size(), spec);
  Split out;
  auto map = [&](const std::vector<std::size_t>& from, std::vector<std::string>& to) {
    to.reserve(from.size());
    for (std::size_t i : from) to.push_back(ids[i]);
  };
  map(idx.train, out.train);
  map(idx.val, out.val);
  map(idx.test, out.test);
  return out;
}

}  // namespace milkit
