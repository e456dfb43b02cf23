// Copyright 2026 The AnoShift Toolkit Authors
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

#include "anoshift/evaluate.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "anoshift/detectors.hpp"
#include "anoshift/hash.hpp"
#include "anoshift/ingest.hpp"
#include "anoshift/protocol.hpp"
#include "oracles.hpp"

namespace anoshift {
namespace {

// Uniform scores keyed by (seed, record); ignores the data otherwise.
class RandomScorer : public AnomalyScorer {
 public:
  std::string name() const override { return "random"; }
  void fit(std::span<const RawRecord>, const Vocabulary&, std::uint64_t seed) override { seed_ = seed; }
  std::vector<double> score(std::span<const RawRecord> records) const override {
    std::vector<double> out;
    for (const auto& r : records) {
      std::string key = r.timestamp.to_string();
      for (std::size_t f = 0; f < kNumFeatures; ++f) {
        if (!is_categorical(static_cast<Feature>(f))) key += "," + std::to_string(r.numeric(static_cast<Feature>(f)));
      }
      Rng rng(derive_seed(seed_, fnv1a64(key)));
      out.push_back(rng.uniform());
    }
    return out;
  }
  nlohmann::json state() const override { return {{"seed", seed_}}; }

 private:
  std::uint64_t seed_ = 0;
};

std::vector<RawRecord> Corpus(int normals_per_month, int months, double ratio = 0.3) {
  SyntheticConfig c;
  c.n_years = 6;
  c.months_per_year = months;
  c.normals_per_month = normals_per_month;
  c.anomaly_ratio_per_year.assign(6, ratio);
  c.seed = 5;
  return generate_synthetic(c);
}

SplitConfig DeskSplits(std::size_t train_quota, std::size_t iid_quota) {
  SplitConfig s;
  s.train_years = {2006, 2007, 2008};
  s.near_years = {2009, 2010};
  s.far_years = {2011};
  s.normals_per_month_train = train_quota;
  s.normals_per_month_iid = iid_quota;
  return s;
}

TEST(ComputeMetricsTest, MatchesOracles) {
  Rng rng(1);
  std::vector<RawRecord> recs(300);
  std::vector<double> scores(300);
  std::vector<std::uint8_t> labels(300);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const bool anomaly = rng.bernoulli(0.3);
    recs[i].label = label_from_code(anomaly ? -1 : 1);
    labels[i] = anomaly;
    scores[i] = std::round(rng.normal(anomaly ? 1.0 : 0.0, 1.0) * 4) / 4;  // ties on purpose
  }
  const auto m = compute_metrics(scores, recs);
  EXPECT_NEAR(*m.roc_auc, oracle::roc_auc_pairs(scores, labels), 1e-12);
  EXPECT_NEAR(*m.pr_auc_out, oracle::average_precision_thresholds(scores, labels), 1e-12);
  std::vector<double> neg(scores.size());
  std::vector<std::uint8_t> flipped(labels.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    neg[i] = -scores[i];
    flipped[i] = !labels[i];
  }
  EXPECT_NEAR(*m.pr_auc_in, oracle::average_precision_thresholds(neg, flipped), 1e-12);
  EXPECT_EQ(m.n_out + m.n_in, recs.size());
}

TEST(ComputeMetricsTest, SingleClassGivesNulls) {
  std::vector<RawRecord> recs(5);
  for (auto& r : recs) r.label = label_from_code(1);
  const std::vector<double> s = {1, 2, 3, 4, 5};
  const auto m = compute_metrics(s, recs);
  EXPECT_FALSE(m.roc_auc);
  EXPECT_FALSE(m.pr_auc_in);
  EXPECT_FALSE(m.pr_auc_out);
  EXPECT_EQ(m.n_in, 5u);
}

TEST(SummarizeTest, SampleStandardDeviation) {
  const auto s = summarize({0.5, 0.7, 0.9});
  EXPECT_NEAR(*s.mean, 0.7, 1e-15);
  EXPECT_NEAR(s.std, 0.2, 1e-15);
  EXPECT_EQ(summarize({0.4}).std, 0.0);
  EXPECT_FALSE(summarize({0.4, std::nullopt}).mean);
  EXPECT_FALSE(summarize({}).mean);
}

TEST(EvaluateBenchmarkTest, RandomScoresGiveChanceAuc) {
  const auto recs = Corpus(2500, 2);
  const auto splits = plan_splits(recs, DeskSplits(2500, 900));
  for (auto s : kTestSplits) {
    std::size_t n = 0;
    for (const auto& ys : splits.split(s)) n += ys.records.size();
    ASSERT_GE(n, 5000u) << split_name(s);
  }
  const Vocabulary vocab = build_vocabulary(splits.train_records());
  const std::vector<std::uint64_t> seeds = {1, 2, 3};
  const auto report = evaluate_benchmark({[] { return std::make_unique<RandomScorer>(); }}, splits, vocab, seeds);
  ASSERT_EQ(report.splits.size(), 3u);
  for (const auto& s : report.splits) {
    for (const auto& v : s.roc_auc_per_seed) EXPECT_NEAR(*v, 0.5, 0.03) << split_name(s.split);
  }
}

TEST(EvaluateBenchmarkTest, AggregationInvariantAndDuplicatedYear) {
  const auto recs = Corpus(300, 2);
  auto splits = plan_splits(recs, DeskSplits(200, 60));
  splits.far.push_back(splits.near.front());  // same year in two splits
  const Vocabulary vocab = build_vocabulary(splits.train_records());
  DetectorOptions opt;
  opt.mode = VectorMode::kRawNumeric;
  opt.isoforest_trees = 30;
  const std::vector<std::uint64_t> seeds = {4, 5, 6};
  const auto report =
      evaluate_benchmark({[&] { return make_vector_scorer("isoforest", opt); }, [] { return std::make_unique<RandomScorer>(); }},
                         splits, vocab, seeds);
  ASSERT_EQ(report.years.size(), 2 * (3 + 2 + 2u));
  ASSERT_EQ(report.splits.size(), 6u);

  const YearRow* near_row = nullptr;
  const YearRow* far_dup = nullptr;
  for (const auto& y : report.years) {
    if (y.detector != "isoforest-raw" || y.year != splits.near.front().year) continue;
    (y.split == SplitName::kNear ? near_row : far_dup) = &y;
  }
  ASSERT_TRUE(near_row && far_dup);
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    EXPECT_EQ(near_row->per_seed[s].roc_auc, far_dup->per_seed[s].roc_auc);
    EXPECT_EQ(near_row->per_seed[s].pr_auc_in, far_dup->per_seed[s].pr_auc_in);
  }
  EXPECT_EQ(near_row->n_in, far_dup->n_in);

  for (const auto& sr : report.splits) {
    std::vector<std::optional<double>> per_seed;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      double sum = 0;
      int k = 0;
      for (const auto& y : report.years) {
        if (y.detector == sr.detector && y.split == sr.split) {
          sum += *y.per_seed[s].roc_auc;
          ++k;
        }
      }
      EXPECT_EQ(k, static_cast<int>(sr.years.size()));
      EXPECT_NEAR(*sr.roc_auc_per_seed[s], sum / k, 1e-15);
      per_seed.push_back(sum / k);
    }
    const auto st = summarize(per_seed);
    EXPECT_NEAR(*sr.roc_auc.mean, *st.mean, 1e-15);
    EXPECT_NEAR(sr.roc_auc.std, st.std, 1e-15);
  }
  EXPECT_TRUE(report.find("random", SplitName::kFar));
  EXPECT_FALSE(report.find("lof", SplitName::kFar));

  // Same inputs, same report.
  const auto again =
      evaluate_benchmark({[&] { return make_vector_scorer("isoforest", opt); }, [] { return std::make_unique<RandomScorer>(); }},
                         splits, vocab, seeds);
  EXPECT_EQ(to_json(again).dump(), to_json(report).dump());
}

TEST(EvaluateBenchmarkTest, SingleClassYearPropagatesNull) {
  const auto recs = Corpus(100, 1);
  auto splits = plan_splits(recs, DeskSplits(80, 20));
  std::erase_if(splits.far.front().records, [](const RawRecord& r) { return r.label.is_anomaly(); });
  const Vocabulary vocab = build_vocabulary(splits.train_records());
  const std::vector<std::uint64_t> seeds = {1};
  const auto report = evaluate_benchmark({[] { return std::make_unique<RandomScorer>(); }}, splits, vocab, seeds);
  const auto* far = report.find("random", SplitName::kFar);
  ASSERT_TRUE(far);
  EXPECT_FALSE(far->roc_auc.mean);
  EXPECT_TRUE(report.find("random", SplitName::kNear)->roc_auc.mean);
  const auto j = to_json(report);
  bool saw_null = false;
  for (const auto& s : j["splits"]) saw_null |= s["split"] == "far" && s["roc_auc"]["mean"].is_null();
  EXPECT_TRUE(saw_null);
  EXPECT_NE(to_text(report).find("null"), std::string::npos);
  EXPECT_THROW(evaluate_benchmark({[] { return std::make_unique<RandomScorer>(); }}, splits, vocab, {}), Error);
}

TEST(MonthlyBreakdownTest, PartitionAndSingleClassMonths) {
  const auto recs = Corpus(40, 12);
  std::vector<RawRecord> year;
  for (const auto& r : recs) {
    if (r.timestamp.year == 2007) year.push_back(r);
  }
  // Strip anomalies from March so one month is single-class.
  std::erase_if(year, [](const RawRecord& r) { return r.timestamp.month == 3 && r.label.is_anomaly(); });
  std::vector<double> scores(year.size());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = static_cast<double>(i % 17);
  const auto rows = monthly_breakdown(scores, year);
  ASSERT_EQ(rows.size(), 12u);
  std::size_t total = 0;
  for (std::size_t m = 0; m < rows.size(); ++m) {
    EXPECT_EQ(rows[m].month.month, static_cast<int>(m) + 1);
    total += rows[m].metrics.n_in + rows[m].metrics.n_out;
    EXPECT_EQ(rows[m].metrics.roc_auc.has_value(), m != 2);
  }
  EXPECT_EQ(total, year.size());
  const auto csv = monthly_csv(rows);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 13);
  EXPECT_NE(csv.find("2007-03,40,0,,,\n"), std::string::npos);

  std::vector<RawRecord> one;
  for (const auto& r : year) {
    if (r.timestamp.month == 5) one.push_back(r);
  }
  EXPECT_EQ(monthly_breakdown(std::vector<double>(one.size(), 0.0), one).size(), 1u);
}

TEST(MonthlyBreakdownTest, RecordWeightedMeanTracksPooledAuc) {
  const auto recs = Corpus(150, 12);
  std::vector<RawRecord> train, year;
  for (const auto& r : recs) {
    if (r.timestamp.year == 2006 && !r.label.is_anomaly()) train.push_back(r);
    if (r.timestamp.year == 2009) year.push_back(r);
  }
  DetectorOptions opt;
  opt.mode = VectorMode::kRawNumeric;
  auto det = make_vector_scorer("isoforest", opt);
  det->fit(train, build_vocabulary(train), 1);
  const auto rows = monthly_breakdown(*det, year);
  const auto pooled = compute_metrics(det->score(year), year);
  double weighted = 0, n = 0;
  for (const auto& r : rows) {
    const double k = static_cast<double>(r.metrics.n_in + r.metrics.n_out);
    weighted += k * *r.metrics.roc_auc;
    n += k;
  }
  EXPECT_NEAR(weighted / n, *pooled.roc_auc, 0.05);
}

}  // namespace
}  // namespace anoshift
