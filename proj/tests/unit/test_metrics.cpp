#include "apf/errors.hpp"
#include "apf/metrics.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace apf;

namespace {

using D = std::vector<double>;
using L = std::vector<int>;

}  // namespace

TEST(Auroc, HandValues) {
  EXPECT_DOUBLE_EQ(auroc(D{0.9, 0.1}, L{1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(auroc(D{0.3, 0.3, 0.3}, L{1, 0, 1}), 0.5);
  EXPECT_DOUBLE_EQ(auroc(D{0.9, 0.8, 0.7}, L{1, 0, 1}), 0.5);
  EXPECT_DOUBLE_EQ(auroc(D{0.9, 0.8, 0.7}, L{1, 1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(auroc(D{0.9, 0.7, 0.8}, L{1, 0, 1}), 1.0);
  EXPECT_DOUBLE_EQ(auroc(D{0.9, 0.8, 0.7, 0.6}, L{1, 0, 1, 0}), 0.75);
}

TEST(Auprc, HandValues) {
  EXPECT_DOUBLE_EQ(auprc(D{0.9, 0.1}, L{1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(auprc(D{0.4, 0.3, 0.2, 0.1}, L{0, 0, 0, 1}), 0.25);
  EXPECT_NEAR(auprc(D{0.9, 0.8, 0.7}, L{1, 0, 1}), (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
}

TEST(RecAtK, HandValues) {
  EXPECT_DOUBLE_EQ(rec_at_k(D{0.9, 0.8, 0.1}, L{1, 1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(rec_at_k(D{0.1, 0.2, 0.8, 0.9}, L{1, 0, 0, 0}), 0.0);
  EXPECT_DOUBLE_EQ(rec_at_k(D{0.9, 0.85, 0.2, 0.1}, L{1, 0, 1, 0}), 0.5);
  EXPECT_EQ(evaluate(D{0.9, 0.85, 0.2, 0.1}, L{1, 0, 1, 0}).k_used, 2u);
}

TEST(Metrics, MatchBruteForceOnAllLabelings) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> coarse(0, 3);
  std::normal_distribution<double> fine;
  for (std::size_t n = 2; n <= 8; ++n) {
    for (int draw = 0; draw < 4; ++draw) {
      D s(n);
      for (auto& v : s) v = draw % 2 == 0 ? coarse(rng) : fine(rng);  // half with ties
      for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
        L y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(mask >> i & 1);
        const auto pos = std::count(y.begin(), y.end(), 1);
        if (pos == 0) continue;
        EXPECT_NEAR(auprc(s, y), oracle::brute_auprc(s, y), 1e-12);
        EXPECT_NEAR(rec_at_k(s, y), oracle::brute_rec_at_k(s, y), 1e-12);
        if (pos < static_cast<long>(n)) {
          EXPECT_NEAR(auroc(s, y), oracle::brute_auroc(s, y), 1e-12);
        }
      }
    }
  }
}

TEST(Metrics, InputErrors) {
  EXPECT_THROW(auroc(D{0.1, 0.2}, L{1, 1}), ValidationError);
  EXPECT_THROW(auprc(D{0.1, 0.2}, L{0, 0}), ValidationError);
  EXPECT_THROW(auroc(D{0.1}, L{1, 0}), ValidationError);
  EXPECT_THROW(auroc(D{0.1, 0.2}, L{1, 2}), ValidationError);
  EXPECT_THROW(auroc(D{NAN, 0.2}, L{1, 0}), NumericError);
}

TEST(Quartiles, EvenSplitAndUniformScores) {
  D s(18, 0.5);
  L y(18, 0);
  std::vector<std::optional<double>> h(18);
  for (int i = 0; i < 8; ++i) {
    y[i] = 1;
    h[i] = 0.1 * i;
  }
  const auto t = quartile_analysis(s, y, h);
  ASSERT_EQ(t.rows.size(), 4u);
  EXPECT_EQ(t.normals, 10u);
  for (const auto& r : t.rows) {
    EXPECT_EQ(r.anomalies, 2u);
    EXPECT_DOUBLE_EQ(r.metrics.auroc, 0.5);
  }
  EXPECT_EQ(t.rows[0].name, "Q1");
  EXPECT_DOUBLE_EQ(t.rows[0].h_max, 0.7);
  EXPECT_DOUBLE_EQ(t.rows[3].h_min, 0.0);
}

TEST(Quartiles, HighHomophilyScoredHigherRanksFirst) {
  D s;
  L y;
  std::vector<std::optional<double>> h;
  for (int i = 0; i < 8; ++i) {  // anomalies: score grows with homophily
    s.push_back(0.2 + 0.1 * i);
    y.push_back(1);
    h.push_back(0.1 * i);
  }
  for (int i = 0; i < 8; ++i) {
    s.push_back(0.05 + 0.1 * i);
    y.push_back(0);
    h.push_back(1.0);
  }
  s.push_back(0.0);
  y.push_back(1);
  h.push_back(std::nullopt);
  const auto t = quartile_analysis(s, y, h);
  EXPECT_EQ(t.skipped_anomalies, 1u);
  EXPECT_GE(t.rows[0].metrics.auroc, t.rows[3].metrics.auroc);
  EXPECT_GE(t.rows[0].metrics.auprc, t.rows[3].metrics.auprc);
  EXPECT_DOUBLE_EQ(t.rows[0].diff_from_q1.auroc, 0.0);
  EXPECT_DOUBLE_EQ(t.rows[3].diff_from_q1.auroc,
                   t.rows[0].metrics.auroc - t.rows[3].metrics.auroc);
}

TEST(Quartiles, FewAnomaliesFallBackToSingleRow) {
  const D s{0.9, 0.8, 0.1, 0.2};
  const L y{1, 1, 0, 0};
  const std::vector<std::optional<double>> h{0.5, 0.2, 1.0, 1.0};
  const auto t = quartile_analysis(s, y, h);
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0].name, "all");
  EXPECT_TRUE(t.warning.has_value());
}
