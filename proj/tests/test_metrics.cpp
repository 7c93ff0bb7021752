#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "support.hpp"
#include "truncnet/core/errors.hpp"
#include "truncnet/core/rng.hpp"
#include "truncnet/eval/metrics.hpp"

using namespace truncnet;
using testsupport::brute_force_auc;

namespace {

// Scores = signal * truth + noise, for `tasks` columns.
LabelMatrix noisy_matrix(std::size_t n, std::size_t tasks, double signal, std::uint64_t seed) {
  Rng rng(seed);
  LabelMatrix m;
  m.rows = n;
  m.cols = tasks;
  for (std::size_t k = 0; k < tasks; ++k) m.task_names.push_back("task" + std::to_string(k));
  for (std::size_t i = 0; i < n; ++i) {
    m.example_ids.push_back("ex" + std::to_string(i));
    for (std::size_t k = 0; k < tasks; ++k) {
      const bool y = rng.bernoulli(0.4);
      m.truth.push_back(y);
      m.scores.push_back(signal * y + rng.normal());
    }
  }
  return m;
}

double avg_over(const LabelMatrix& m, std::span<const std::size_t> rows) { return matrix_avg_auc(m, rows).value; }

}  // namespace

TEST(Auroc, EqualsPairwiseCountOnIntegerScoresExactly) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(99);
    std::vector<double> scores(n);
    std::vector<std::uint8_t> truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng.below(8));  // plenty of ties
      truth[i] = rng.bernoulli(0.5);
    }
    truth[0] = 1;
    truth[1] = 0;
    const auto c = brute_force_auc(scores, truth);
    EXPECT_EQ(auroc(scores, truth), static_cast<double>(c.twice_numerator) / static_cast<double>(2 * c.pairs))
        << "trial " << trial;
  }
}

TEST(Auroc, MatchesPairwiseCountOnContinuousScores) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(99);
    std::vector<double> scores(n);
    std::vector<std::uint8_t> truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = rng.normal();
      truth[i] = rng.bernoulli(0.3);
    }
    truth[0] = 1;
    truth[1] = 0;
    const auto c = brute_force_auc(scores, truth);
    EXPECT_NEAR(auroc(scores, truth), 0.5 * c.twice_numerator / c.pairs, 1e-12);
  }
}

TEST(Auroc, InvariantUnderStrictlyIncreasingTransforms) {
  Rng rng(3);
  std::vector<double> s(60), t(60);
  std::vector<std::uint8_t> y(60);
  for (std::size_t i = 0; i < 60; ++i) {
    s[i] = rng.normal();
    t[i] = std::exp(3 * s[i]) + 7;
    y[i] = i % 3 == 0;
  }
  EXPECT_EQ(auroc(s, y), auroc(t, y));
  // Reversing the scores mirrors the AUC.
  for (auto& v : t) v = -v;
  EXPECT_NEAR(auroc(t, y), 1.0 - auroc(s, y), 1e-15);
}

TEST(Auroc, BoundaryCases) {
  const std::vector<std::uint8_t> y = {0, 0, 1, 1};
  EXPECT_EQ(auroc(std::vector<double>{1, 2, 3, 4}, y), 1.0);
  EXPECT_EQ(auroc(std::vector<double>{4, 3, 2, 1}, y), 0.0);
  EXPECT_EQ(auroc(std::vector<double>{5, 5, 5, 5}, y), 0.5);
  EXPECT_THROW(auroc(std::vector<double>{1, 2}, std::vector<std::uint8_t>{1, 1}), UndefinedAucError);
  EXPECT_THROW(auroc(std::vector<double>{1, 2}, std::vector<std::uint8_t>{0, 0}), UndefinedAucError);
}

TEST(AvgAuc, SkipsUndefinedTasksAndReportsThem) {
  const auto r = avg_auc({"a", "b", "c"}, {0.8, std::nullopt, 0.6});
  EXPECT_DOUBLE_EQ(r.value, 0.7);
  EXPECT_EQ(r.excluded, std::vector<std::string>{"b"});
  EXPECT_THROW(avg_auc({"a"}, {std::nullopt}), UndefinedAucError);
}

TEST(Percentile, LinearInterpolationBetweenOrderStatistics) {
  const std::vector<double> v = {1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(percentile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(percentile(v, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(percentile(v, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(percentile(v, 0.025), 1.075);
  EXPECT_DOUBLE_EQ(percentile(v, 0.975), 3.925);
  EXPECT_DOUBLE_EQ(percentile(std::vector<double>{7}, 0.3), 7.0);
}

TEST(Bootstrap, ConstantStatisticGivesDegenerateInterval) {
  const auto m = noisy_matrix(50, 2, 1.0, 4);
  const auto r = bootstrap_ci([](const LabelMatrix&, std::span<const std::size_t>) { return 0.42; }, m, 1000, 9);
  EXPECT_EQ(r.lower, 0.42);
  EXPECT_EQ(r.upper, 0.42);
}

TEST(Bootstrap, ExactReplicateCountAndPercentileEndpoints) {
  const auto m = noisy_matrix(80, 3, 1.0, 5);
  const auto r = bootstrap_ci(avg_over, m, 1000, 11);
  ASSERT_EQ(r.replicate_values.size(), 1000u);
  auto sorted = r.replicate_values;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(r.lower, percentile(sorted, 0.025));
  EXPECT_EQ(r.upper, percentile(sorted, 0.975));
  EXPECT_EQ(r.seed, 11u);
}

TEST(Bootstrap, BitIdenticalForAFixedSeedAndSeedSensitive) {
  const auto m = noisy_matrix(60, 2, 1.0, 6);
  const auto a = bootstrap_ci(avg_over, m, 300, 3);
  const auto b = bootstrap_ci(avg_over, m, 300, 3);
  EXPECT_EQ(a.replicate_values, b.replicate_values);
  EXPECT_NE(a.replicate_values, bootstrap_ci(avg_over, m, 300, 4).replicate_values);
}

TEST(Bootstrap, ReplicatesUseTheirOwnStreams) {
  // Replicate r's first draw is replicate_rows(n, seed, r), whatever n says.
  const auto m = noisy_matrix(40, 1, 2.0, 7);
  const auto r = bootstrap_ci(avg_over, m, 50, 21);
  if (r.redraws == 0) {
    for (std::size_t i = 0; i < 50; ++i) {
      const auto rows = replicate_rows(m.rows, 21, i);
      EXPECT_EQ(r.replicate_values[i], avg_over(m, rows));
    }
  }
  const auto shorter = bootstrap_ci(avg_over, m, 20, 21);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(shorter.replicate_values[i], r.replicate_values[i]);
}

TEST(Bootstrap, UndefinedReplicatesAreRedrawn) {
  // One positive among 30 rows: many resamples lose it and must be redrawn.
  LabelMatrix m;
  m.rows = 30;
  m.cols = 1;
  m.task_names = {"t"};
  for (std::size_t i = 0; i < 30; ++i) {
    m.truth.push_back(i == 0);
    m.scores.push_back(static_cast<double>(i));
  }
  const auto r = bootstrap_ci(avg_over, m, 200, 1);
  EXPECT_EQ(r.replicate_values.size(), 200u);
  EXPECT_GT(r.redraws, 0u);
  for (double v : r.replicate_values) EXPECT_TRUE(std::isfinite(v));
}

TEST(Bootstrap, IntervalWidthHalvesWhenExamplesQuadruple) {
  const auto small = noisy_matrix(250, 6, 1.0, 8);
  const auto large = noisy_matrix(1000, 6, 1.0, 8);
  const auto a = bootstrap_ci(avg_over, small, 1000, 2);
  const auto b = bootstrap_ci(avg_over, large, 1000, 2);
  const double ratio = (a.upper - a.lower) / (b.upper - b.lower);
  EXPECT_NEAR(ratio, 2.0, 0.3);
}

TEST(PairedDifference, SelfComparisonIsExactlyZero) {
  const auto m = noisy_matrix(70, 3, 1.0, 9);
  const auto d = paired_difference(m, m, 200, 5);
  EXPECT_EQ(d.diff, 0.0);
  EXPECT_EQ(d.lower, 0.0);
  EXPECT_EQ(d.upper, 0.0);
  EXPECT_FALSE(d.significant);
}

TEST(PairedDifference, SharesResampledRowsAcrossModels) {
  const auto a = noisy_matrix(90, 2, 1.5, 10);
  auto b = a;
  Rng rng(1);
  for (auto& s : b.scores) s += rng.normal();
  const auto d = paired_difference(a, b, 200, 6);
  EXPECT_DOUBLE_EQ(d.diff, avg_over(a, {}) - avg_over(b, {}));
  ASSERT_EQ(d.bootstrap.replicate_values.size(), 200u);
  if (d.bootstrap.redraws == 0) {
    for (std::size_t r = 0; r < 200; ++r) {
      const auto rows = replicate_rows(a.rows, 6, r);
      EXPECT_DOUBLE_EQ(d.bootstrap.replicate_values[r], avg_over(a, rows) - avg_over(b, rows));
    }
  }
  EXPECT_EQ(d.significant, d.lower > 0 || d.upper < 0);
}

TEST(PairedDifference, AntisymmetricInItsArguments) {
  const auto a = noisy_matrix(60, 2, 1.5, 12);
  const auto b = noisy_matrix(60, 2, 0.5, 12);
  const auto ab = paired_difference(a, b, 300, 1);
  const auto ba = paired_difference(b, a, 300, 1);
  EXPECT_DOUBLE_EQ(ab.diff, -ba.diff);
  EXPECT_NEAR(ab.lower, -ba.upper, 1e-12);
}

TEST(PairedDifference, RejectsDifferentExampleSets) {
  const auto a = noisy_matrix(30, 2, 1.0, 1);
  auto b = a;
  b.example_ids[3] = "other";
  EXPECT_THROW(paired_difference(a, b, 10, 0), InputError);
  EXPECT_THROW(paired_difference(a, noisy_matrix(31, 2, 1.0, 1), 10, 0), InputError);
}

TEST(PairedDifference, Formatting) {
  PairedDifference d;
  d.diff = -0.002;
  d.lower = -0.0081;
  d.upper = 0.0042;
  EXPECT_EQ(format_difference(d), "-0.002 (-0.008, 0.004)");
}

TEST(Evaluate, ReportRoundTripsThroughJsonAndCsv) {
  const auto m = noisy_matrix(100, 3, 1.0, 13);
  const auto r = evaluate(m, "Toy", 200, 4);
  EXPECT_EQ(r.n_examples, 100u);
  EXPECT_EQ(r.n_replicates, 200u);
  EXPECT_DOUBLE_EQ(r.avg_auc, avg_over(m, {}));
  ASSERT_TRUE(r.ci.count("avg_auc"));
  EXPECT_LE(r.ci.at("avg_auc").first, r.avg_auc);
  EXPECT_GE(r.ci.at("avg_auc").second, r.avg_auc);
  for (const auto& t : m.task_names) EXPECT_TRUE(r.per_task_auc.count(t));
  const nlohmann::json j = r;
  const auto back = j.get<EvalReport>();
  EXPECT_EQ(back.avg_auc, r.avg_auc);
  EXPECT_EQ(back.ci, r.ci);
  EXPECT_EQ(back.per_task_auc, r.per_task_auc);
  const auto header = eval_csv_header(r.tasks);
  const auto row = eval_csv_row(r);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
}

TEST(LabelMatrix, ValidationCatchesInconsistentShapes) {
  auto m = noisy_matrix(10, 2, 1.0, 1);
  EXPECT_NO_THROW(m.validate());
  m.scores.pop_back();
  EXPECT_THROW(m.validate(), ShapeError);
  EXPECT_THROW(noisy_matrix(10, 2, 1.0, 1).task_index("missing"), NotFoundError);
}

TEST(PairedDifference, OracleBeatsNoiseSignificantly) {
  auto oracle = noisy_matrix(200, 2, 0.0, 14);
  auto noise = oracle;
  for (std::size_t i = 0; i < oracle.scores.size(); ++i) oracle.scores[i] = oracle.truth[i];
  const auto d = paired_difference(oracle, noise, 500, 2);
  EXPECT_GT(d.diff, 0.3);
  EXPECT_GT(d.lower, 0.0);
  EXPECT_TRUE(d.significant);
  PairedDifference straddle;
  straddle.lower = -0.008;
  straddle.upper = 0.004;
  EXPECT_FALSE(straddle.lower > 0 || straddle.upper < 0);
}

TEST(Bootstrap, ManyReplicatesAreStableAcrossSeeds) {
  const auto m = noisy_matrix(300, 2, 1.0, 15);
  const auto a = bootstrap_ci(avg_over, m, 10000, 1);
  const auto b = bootstrap_ci(avg_over, m, 10000, 2);
  EXPECT_NEAR(a.lower, b.lower, 0.01);
  EXPECT_NEAR(a.upper, b.upper, 0.01);
  EXPECT_LE(a.lower, a.upper);
}
