//
// Copyright 2026 The dpmf Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "dpmf/noise.hpp"
#include "oracles.hpp"

namespace dpmf {
namespace {

TEST(GaussianTable, DeterministicAndFinite) {
  GaussianTable a(1000, 3), b(1000, 3), c(1000, 4);
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  EXPECT_FALSE(std::equal(a.values().begin(), a.values().end(), c.values().begin()));
  for (double x : a.values()) EXPECT_TRUE(std::isfinite(x));
  EXPECT_THROW(GaussianTable(0, 1), std::invalid_argument);
}

TEST(GaussianTable, PoolMomentsAndShape) {
  GaussianTable t(10000, 5);
  double mean = std::accumulate(t.values().begin(), t.values().end(), 0.0) / 10000;
  double var = 0;
  for (double x : t.values()) var += (x - mean) * (x - mean);
  var /= 9999;
  EXPECT_NEAR(mean, 0.0, 3 / std::sqrt(10000.0));
  EXPECT_NEAR(var, 1.0, 3 * std::sqrt(2.0 / 10000));
  std::vector<double> pool(t.values().begin(), t.values().end());
  EXPECT_LT(testing::ks_statistic(pool), testing::ks_critical_001(pool.size()));
}

TEST(TableNormals, SegmentReadsAreContiguousAndWrap) {
  auto table = std::make_shared<const GaussianTable>(10, 1);
  TableNormals n(table, 7, 25);
  std::vector<double> out(25);
  n.fill(out);
  std::size_t start = 0;
  while ((*table)[start] != out[0]) ++start;
  for (std::size_t i = 0; i < 25; ++i) EXPECT_EQ(out[i], (*table)[(start + i) % 10]);
}

TEST(TableNormals, MomentsOfManyReads) {
  auto table = std::make_shared<const GaussianTable>(10000, 2);
  TableNormals n(table, 9);
  const std::size_t count = 1'000'000;
  std::vector<double> xs(count);
  n.fill(xs);
  double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / count;
  double var = 0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= count - 1;
  EXPECT_NEAR(mean, 0.0, 3 / std::sqrt(double(count)));
  EXPECT_NEAR(var, 1.0, 3 * std::sqrt(2.0 / count));
  EXPECT_LT(testing::ks_statistic(xs), testing::ks_critical_001(count));
}

TEST(TrueNormals, Moments) {
  TrueNormals n(3);
  const std::size_t count = 200000;
  double s = 0, ss = 0;
  for (std::size_t i = 0; i < count; ++i) {
    double x = n.next();
    s += x;
    ss += x * x;
  }
  EXPECT_NEAR(s / count, 0.0, 3 / std::sqrt(double(count)));
  EXPECT_NEAR(ss / count, 1.0, 4 * std::sqrt(2.0 / count));
}

TEST(NoiseLedger, PrefixSumsAcrossRounds) {
  NoiseLedger ledger(2, 2);
  ledger.begin_round(0.5);
  for (int i = 0; i < 4; ++i) ledger.tick();
  ledger.begin_round(0.25);
  for (int i = 0; i < 2; ++i) ledger.tick();
  EXPECT_EQ(ledger.clock(), 6u);
  EXPECT_DOUBLE_EQ(ledger.prefix(0), 0.0);
  EXPECT_DOUBLE_EQ(ledger.prefix(3), 1.5);
  EXPECT_DOUBLE_EQ(ledger.prefix(4), 2.0);
  EXPECT_DOUBLE_EQ(ledger.prefix(6), 2.5);
  EXPECT_DOUBLE_EQ(ledger.variance(2, 5), 1.0 + 0.25);
  EXPECT_EQ(ledger.variance(5, 5), 0.0);
  double prev = 0;
  for (std::uint64_t t = 0; t <= 6; ++t) {
    EXPECT_GE(ledger.prefix(t), prev);
    prev = ledger.prefix(t);
  }
  EXPECT_THROW(ledger.begin_round(-1.0), std::invalid_argument);
}

TEST(NoiseLedger, RoundWithoutStepsIsReplaced) {
  NoiseLedger ledger(1, 1);
  ledger.begin_round(9.0);
  ledger.begin_round(1.0);
  ledger.tick();
  EXPECT_DOUBLE_EQ(ledger.prefix(1), 1.0);
}

TEST(CatchUp, NoOpWhenCurrent) {
  NoiseLedger ledger(1, 1);
  ledger.begin_round(1.0);
  AggregateNoise<testing::UnitNormals> noise(ledger, {});
  std::vector<double> row{1.0, 2.0};
  catch_up(row, {RowKind::kUser, 0}, ledger, noise, 0);
  EXPECT_EQ(row, (std::vector<double>{1.0, 2.0}));
}

TEST(CatchUp, UnitDrawsAddSqrtOfOwedVariance) {
  NoiseLedger ledger(1, 3);
  ledger.begin_round(0.02);
  for (int i = 0; i < 7; ++i) ledger.tick();
  ledger.begin_round(0.01);
  for (int i = 0; i < 5; ++i) ledger.tick();
  AggregateNoise<testing::UnitNormals> noise(ledger, {});
  std::vector<double> row{0.0, 1.0, -1.0};
  RowRef ref{RowKind::kItem, 2};
  ledger.set_last(ref, 3);
  catch_up(row, ref, ledger, noise, ledger.clock());
  double sd = std::sqrt(ledger.prefix(12) - ledger.prefix(3));
  EXPECT_EQ(row[0], 0.0 + sd);
  EXPECT_EQ(row[1], 1.0 + sd);
  EXPECT_EQ(row[2], -1.0 + sd);
  EXPECT_NEAR(sd * sd, 4 * 0.02 + 5 * 0.01, 1e-15);
  EXPECT_EQ(ledger.last(ref), 12u);
  EXPECT_EQ(ledger.last({RowKind::kUser, 0}), 0u);
}

TEST(CatchUp, IdleStepsGiveVarianceCTimesEta) {
  // zeta = 1 and a constant eta: c idle steps owe variance c * eta.
  const double eta = 0.003;
  const std::uint64_t c = 40;
  NoiseLedger ledger(1, 1);
  ledger.begin_round(eta);
  for (std::uint64_t i = 0; i < c; ++i) ledger.tick();
  AggregateNoise<TrueNormals> noise(ledger, TrueNormals(11));
  const int reps = 20000;
  double s = 0, ss = 0;
  RowRef ref{RowKind::kUser, 0};
  for (int r = 0; r < reps; ++r) {
    std::vector<double> row{0.0};
    ledger.set_last(ref, 0);
    catch_up(row, ref, ledger, noise, c);
    s += row[0];
    ss += row[0] * row[0];
  }
  double var = ss / reps - (s / reps) * (s / reps);
  EXPECT_NEAR(ledger.variance(0, c), c * eta, 1e-15);
  EXPECT_NEAR(var, c * eta, 5 * c * eta * std::sqrt(2.0 / reps));
}

}  // namespace
}  // namespace dpmf
