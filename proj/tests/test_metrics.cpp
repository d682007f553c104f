#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "milkit/metrics.hpp"
#include "milkit/rng.hpp"

using namespace milkit;

namespace {

std::vector<ScoredExample> scored(const std::vector<double>& scores,
                                  const std::vector<int>& labels) {
  std::vector<ScoredExample> out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out.push_back({"e" + std::to_string(i), scores[i], labels[i]});
  }
  return out;
}

// Independent oracle: full 2^n enumeration of sign assignments over midranks.
double wilcoxon_enumeration_oracle(const std::vector<double>& diffs) {
  const int n = static_cast<int>(diffs.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return std::abs(diffs[a]) < std::abs(diffs[b]); });
  std::vector<long long> rank2(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j < n && std::abs(diffs[order[j]]) == std::abs(diffs[order[i]])) ++j;
    for (int t = i; t < j; ++t) rank2[order[t]] = i + 1 + j;
    i = j;
  }
  long long observed = 0;
  for (int t = 0; t < n; ++t) {
    if (diffs[t] > 0.0) observed += rank2[t];
  }
  std::uint64_t below = 0, above = 0;
  for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
    long long w = 0;
    for (int t = 0; t < n; ++t) {
      if (mask & (1ULL << t)) w += rank2[t];
    }
    if (w <= observed) ++below;
    if (w >= observed) ++above;
  }
  return std::min(1.0, 2.0 * (static_cast<double>(std::min(below, above)) /
                              std::ldexp(1.0, n)));
}

}  // namespace

TEST_CASE("auc: perfect ranking, all ties, and the worked example") {
  CHECK(auc(scored({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0})) == 1.0);
  CHECK(auc(scored({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0})) == 0.5);
  // pairs: (0.9,0.4)=1, (0.9,0.1)=1, (0.4,0.4)=0.5, (0.4,0.1)=1 -> 3.5/4
  CHECK(auc(scored({0.9, 0.4, 0.4, 0.1}, {1, 1, 0, 0})) == doctest::Approx(0.875).epsilon(1e-15));
}

TEST_CASE("auc rejects single-class input") {
  CHECK_THROWS_AS(auc(scored({0.1, 0.9}, {1, 1})), std::invalid_argument);
  CHECK_THROWS_AS(auc(scored({0.1, 0.9}, {0, 0})), std::invalid_argument);
}

TEST_CASE("property: rank AUC equals the pairwise oracle exactly, with ties") {
  Rng rng(21);
  for (int iter = 0; iter < 500; ++iter) {
    const int n = 2 + static_cast<int>(rng.next_below(199));
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool has_pos = false, has_neg = false;
    for (int i = 0; i < n; ++i) {
      // coarse grid forces plenty of score ties
      scores[i] = std::floor(rng.uniform(0.0, 10.0)) / 10.0;
      labels[i] = rng.bernoulli(0.5) ? 1 : 0;
      (labels[i] ? has_pos : has_neg) = true;
    }
    if (!has_pos) labels[0] = 1;
    if (!has_neg) labels[n > 1 ? 1 : 0] = 0;
    if (n == 1) continue;
    auto ex = scored(scores, labels);
    CHECK(std::abs(auc(ex) - auc_pairwise(ex)) <= 1e-12);
  }
}

TEST_CASE("property: auc is invariant under strictly monotone transforms") {
  Rng rng(22);
  for (int iter = 0; iter < 50; ++iter) {
    const int n = 10 + static_cast<int>(rng.next_below(50));
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
      scores[i] = rng.uniform(-4.0, 4.0);
      labels[i] = i % 2;
    }
    auto base = scored(scores, labels);
    auto transformed = base;
    for (auto& e : transformed) e.score = std::exp(0.5 * e.score) + 3.0;
    CHECK(auc(base) == doctest::Approx(auc(transformed)).epsilon(1e-12));
  }
}

TEST_CASE("confusion metrics: all correct") {
  auto r = confusion_metrics(scored({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}), 0.5);
  CHECK(r.accuracy == 1.0);
  CHECK(r.f1 == 1.0);
  CHECK(r.sensitivity == 1.0);
  CHECK(r.specificity == 1.0);
}

TEST_CASE("confusion metrics: degenerate all-positive classifier") {
  auto r = confusion_metrics(scored({0.9, 0.8, 0.9, 0.8}, {1, 1, 0, 0}), 0.5);
  CHECK(r.sensitivity == 1.0);
  CHECK(r.specificity == 0.0);
  CHECK(r.accuracy == 0.5);
}

TEST_CASE("confusion metrics: worked confusion matrix") {
  // TP=3, FP=1, FN=1, TN=5
  std::vector<double> scores = {0.9, 0.8, 0.7, 0.6,   // predicted positive: TP TP TP FP
                                0.2, 0.3, 0.1, 0.2, 0.3, 0.4};  // predicted negative
  std::vector<int> labels = {1, 1, 1, 0, 1, 0, 0, 0, 0, 0};
  auto r = confusion_metrics(scored(scores, labels), 0.5);
  CHECK(r.accuracy == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(r.f1 == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(r.sensitivity == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(r.specificity == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("confusion metrics: F1 flagged when no positives anywhere") {
  auto r = confusion_metrics(scored({0.1, 0.2}, {0, 0}), 0.5);
  CHECK(r.f1 == 0.0);
  CHECK(std::find(r.flags.begin(), r.flags.end(), "f1_undefined") != r.flags.end());
  CHECK(std::find(r.flags.begin(), r.flags.end(), "auc_undefined") != r.flags.end());
}

TEST_CASE("wilcoxon: equal samples are flagged with p = 1") {
  std::vector<double> a = {1, 2, 3, 4, 5, 6};
  auto res = wilcoxon_signed_rank(a, a);
  CHECK(res.p_value == 1.0);
  CHECK(res.n_used == 0);
  REQUIRE(res.flags.size() == 1);
  CHECK(res.flags[0] == "all_differences_zero");
}

TEST_CASE("wilcoxon: n = 6 all-positive differences give exactly 2/64") {
  std::vector<double> a = {1.1, 2.2, 3.3, 4.4, 5.5, 6.6};
  std::vector<double> b = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  auto res = wilcoxon_signed_rank(a, b);
  CHECK(res.exact);
  CHECK(res.w_minus == 0.0);
  CHECK(res.p_value == 0.03125);
}

TEST_CASE("wilcoxon preconditions") {
  CHECK_THROWS_AS(wilcoxon_signed_rank({1, 2}, {1, 2, 3}), std::invalid_argument);
  // four non-zero differences after dropping the zero
  CHECK_THROWS_AS(wilcoxon_signed_rank({1, 2, 3, 4, 5}, {1, 1, 1, 1, 1}),
                  std::invalid_argument);
}

TEST_CASE("property: exact p matches full sign-assignment enumeration, n <= 12") {
  Rng rng(23);
  int tested = 0;
  while (tested < 200) {
    const int n = 5 + static_cast<int>(rng.next_below(8));  // 5..12
    std::vector<double> a(n), b(n, 0.0);
    for (int i = 0; i < n; ++i) {
      // half-integer grid forces ties in |d|
      double d = 0.0;
      while (d == 0.0) d = 0.5 * (std::floor(rng.uniform(-4.0, 5.0)));
      a[i] = d;
    }
    auto res = wilcoxon_signed_rank(a, b);
    REQUIRE(res.exact);
    const double oracle = wilcoxon_enumeration_oracle(a);
    CHECK(res.p_value == oracle);
    ++tested;
  }
}

TEST_CASE("wilcoxon: large-n normal approximation with tie correction") {
  // consistent positive shift over 100 paired runs -> tiny p
  Rng rng(24);
  std::vector<double> a(100), b(100);
  for (int i = 0; i < 100; ++i) {
    b[i] = rng.uniform(0.90, 0.95);
    a[i] = b[i] + 0.02 + 0.005 * rng.normal();
  }
  auto res = wilcoxon_signed_rank(a, b);
  CHECK_FALSE(res.exact);
  CHECK(res.p_value < 0.001);

  // symmetric differences -> comfortably non-significant
  std::vector<double> c(40), d(40);
  for (int i = 0; i < 40; ++i) {
    c[i] = (i % 2 == 0) ? 1.0 : -1.0;
    d[i] = 0.0;
  }
  auto res2 = wilcoxon_signed_rank(c, d);
  CHECK(res2.p_value > 0.5);
}

TEST_CASE("aggregate_runs: identical, two-point, and single-run cases") {
  MetricsReport r;
  r.accuracy = 0.9;
  r.f1 = 0.8;
  r.auc = 0.98;
  r.sensitivity = 0.95;
  r.specificity = 0.85;

  auto same = aggregate_runs({r, r, r});
  CHECK(same.auc.mean == doctest::Approx(0.98).epsilon(1e-15));
  CHECK(same.auc.stddev == 0.0);

  MetricsReport r2 = r;
  r2.auc = 1.00;
  r.auc = 0.98;
  auto two = aggregate_runs({r, r2});
  CHECK(two.auc.mean == doctest::Approx(0.99).epsilon(1e-12));
  CHECK(two.auc.stddev == doctest::Approx(std::sqrt(2e-4)).epsilon(1e-9));

  auto single = aggregate_runs({r});
  CHECK(single.auc.mean == r.auc);
  CHECK(single.auc.stddev == 0.0);
  REQUIRE(single.flags.size() == 1);
  CHECK(single.flags[0] == "single_run_std_zero");
}

TEST_CASE("split: documented sizes for n = 20 and n = 838") {
  std::vector<std::string> ids;
  for (int i = 0; i < 20; ++i) ids.push_back("s" + std::to_string(i));
  SplitSpec spec;
  spec.seed = 3;
  auto s = split_dataset(ids, spec);
  CHECK(s.test.size() == 3);                      // round(20 * 0.15)
  CHECK(s.val.size() == 3);                       // round(17 * 0.2) = round(3.4)
  CHECK(s.train.size() == 14);

  auto big = split_indices(838, spec);
  CHECK(big.test.size() == 126);                  // round(125.7)
  CHECK(big.train.size() + big.val.size() == 712);
}

TEST_CASE("split: deterministic, disjoint, exhaustive over seeds") {
  std::vector<std::string> ids;
  for (int i = 0; i < 53; ++i) ids.push_back("id" + std::to_string(i));
  for (std::uint64_t seed : {0ULL, 1ULL, 99ULL, 4096ULL}) {
    SplitSpec spec;
    spec.seed = seed;
    auto s1 = split_dataset(ids, spec);
    auto s2 = split_dataset(ids, spec);
    CHECK(s1.train == s2.train);
    CHECK(s1.val == s2.val);
    CHECK(s1.test == s2.test);

    std::set<std::string> all;
    all.insert(s1.train.begin(), s1.train.end());
    all.insert(s1.val.begin(), s1.val.end());
    all.insert(s1.test.begin(), s1.test.end());
    CHECK(all.size() == ids.size());
    CHECK(s1.train.size() + s1.val.size() + s1.test.size() == ids.size());
  }
}

TEST_CASE("split rejects empty parts and tiny inputs") {
  std::vector<std::string> ids = {"a", "b", "c", "d"};
  CHECK_THROWS_AS(split_dataset(ids, SplitSpec{}), std::invalid_argument);
  std::vector<std::string> five = {"a", "b", "c", "d", "e"};
  SplitSpec tiny;
  tiny.test_fraction = 0.01;  // round(0.05) = 0 -> empty test
  CHECK_THROWS_AS(split_dataset(five, tiny), std::invalid_argument);
}
