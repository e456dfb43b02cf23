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

#include "anoshift/driftstats.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "anoshift/ingest.hpp"
#include "anoshift/vectorize.hpp"
#include "oracles.hpp"

namespace anoshift {
namespace {

Histogram RandomHistogram(Rng& rng, std::size_t k) {
  std::vector<TokenId> support(k);
  std::iota(support.begin(), support.end(), TokenId{0});
  std::vector<double> counts(k);
  for (auto& c : counts) c = rng.bernoulli(0.3) ? 0.0 : static_cast<double>(rng.below(50));
  return Histogram::from_counts(support, counts);
}

TEST(HistogramTest, NormalizedAndPositive) {
  Rng rng(1);
  for (int k = 0; k < 100; ++k) {
    const auto h = RandomHistogram(rng, 1 + rng.below(40));
    EXPECT_NEAR(std::accumulate(h.probs.begin(), h.probs.end(), 0.0), 1.0, 1e-12);
    for (double p : h.probs) EXPECT_GT(p, 0.0);
  }
}

TEST(JeffreysTest, HandEvaluatedTwoBins) {
  const std::vector<TokenId> support = {0, 1};
  const std::vector<double> pc = {1, 0}, qc = {1, 1};
  const auto p = Histogram::from_counts(support, pc);
  const auto q = Histogram::from_counts(support, qc);
  const double z = 1 + 2e-6;
  const double p0 = (1 + 1e-6) / z, p1 = 1e-6 / z, q0 = 0.5, q1 = 0.5;
  const double expect = (p0 - q0) * std::log(p0 / q0) + (p1 - q1) * std::log(p1 / q1);
  EXPECT_NEAR(jeffreys(p, q), expect, 1e-12);
  EXPECT_EQ(jeffreys(p, p), 0.0);
}

TEST(JeffreysTest, SupportMismatch) {
  const auto p = Histogram::from_counts({0, 1}, std::vector<double>{1, 2});
  const auto q = Histogram::from_counts({0, 2}, std::vector<double>{1, 2});
  try {
    jeffreys(p, q);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSupportMismatch);
  }
}

TEST(JeffreysTest, DivergenceProperties) {
  Rng rng(2);
  for (int k = 0; k < 10000; ++k) {
    const std::size_t n = 2 + rng.below(20);
    const auto p = RandomHistogram(rng, n);
    const auto q = RandomHistogram(rng, n);
    const double pq = jeffreys(p, q);
    EXPECT_EQ(pq, jeffreys(q, p));
    EXPECT_GE(pq, 0.0);
    EXPECT_EQ(jeffreys(p, p), 0.0);
    if (p.probs != q.probs) EXPECT_GT(pq, 0.0);
  }
}

std::vector<YearTokens> YearlyTokens(const std::vector<RawRecord>& recs, const Vocabulary& v, bool normals_only) {
  std::map<int, YearTokens> by;
  for (const auto& r : recs) {
    if (normals_only && r.label.is_anomaly()) continue;
    auto& yt = by[r.timestamp.year];
    yt.year = r.timestamp.year;
    yt.records.push_back(encode(r, v));
  }
  std::vector<YearTokens> out;
  for (auto& [y, t] : by) out.push_back(std::move(t));
  return out;
}

double Spearman(std::vector<double> a, std::vector<double> b) {
  auto ranks = [](const std::vector<double>& x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return x[i] < x[j]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j < idx.size() && x[idx[j]] == x[idx[i]]) ++j;
      for (std::size_t k = i; k < j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j - 1);
      i = j;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size();
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  return num / std::sqrt(da * db);
}

TEST(DivergenceMatrixTest, IdenticalYearsAndSymmetry) {
  SyntheticConfig c;
  c.n_years = 2;
  c.months_per_year = 1;
  c.normals_per_month = 300;
  const auto recs = generate_synthetic(c);
  const auto v = build_vocabulary(recs);
  auto years = YearlyTokens(recs, v, false);
  years[1].records = years[0].records;
  years[1].year = 2099;
  const auto m = divergence_matrix(years, 1, v);
  EXPECT_EQ(m.at(0, 1), 0.0);
  EXPECT_EQ(m.at(0, 0), 0.0);
  auto years3 = YearlyTokens(recs, v, false);
  years3.push_back(years3[0]);
  years3.back().year = 2030;
  const auto m3 = divergence_matrix(years3, 6, v);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(m3.at(i, j), m3.at(j, i));
  }
  EXPECT_THROW(divergence_matrix(std::span(years).first(1), 1, v), Error);
}

TEST(DivergenceMatrixTest, MonotoneDriftOrdersEntries) {
  SyntheticConfig c;
  c.n_years = 6;
  c.months_per_year = 2;
  c.normals_per_month = 2000;
  c.drift_rate = 0.2;
  const auto recs = generate_synthetic(c);
  const auto v = build_vocabulary(recs);
  const auto years = YearlyTokens(recs, v, true);
  for (auto f : {Feature::kService, Feature::kDstHostCount, Feature::kSrcBytes}) {
    const auto m = divergence_matrix(years, static_cast<std::size_t>(f), v);
    std::vector<double> gap, value;
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = i + 1; j < 6; ++j) {
        gap.push_back(static_cast<double>(j - i));
        value.push_back(m.at(i, j));
      }
    }
    EXPECT_GT(Spearman(gap, value), 0.8) << feature_name(f);
  }
}

Eigen::MatrixXd RandomPoints(Rng& rng, int n, int d) {
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();
  return x;
}

TEST(SinkhornTest, SelfDivergenceIsZero) {
  Rng rng(3);
  for (int k = 0; k < 10; ++k) {
    const auto x = RandomPoints(rng, 30, 4);
    EXPECT_LT(std::abs(sinkhorn_divergence(x, x).value), 1e-6);
  }
}

TEST(SinkhornTest, SingletonsCostSquaredDistance) {
  Eigen::MatrixXd a(1, 3), b(1, 3);
  a << 0.1, 2.0, -1.0;
  b << 1.1, 0.5, 0.0;
  EXPECT_NEAR(sinkhorn_divergence(a, b).value, (a - b).squaredNorm(), 1e-6);
}

TEST(SinkhornTest, SixPointsMatchExactAssignment) {
  Rng rng(4);
  SinkhornOptions opt;
  opt.epsilon = 1e-3;
  opt.max_iters = 1000000;  // near-tied assignments converge slowly at small eps
  for (int k = 0; k < 25; ++k) {
    const auto x = RandomPoints(rng, 6, 2), y = RandomPoints(rng, 6, 2);
    std::vector<std::vector<double>> xs, ys;
    for (int i = 0; i < 6; ++i) {
      xs.push_back({x(i, 0), x(i, 1)});
      ys.push_back({y(i, 0), y(i, 1)});
    }
    const double exact = oracle::exact_ot_uniform(xs, ys);
    const auto s = sinkhorn_divergence(x, y, opt);
    EXPECT_TRUE(s.converged) << s.marginal_error;
    EXPECT_NEAR(s.value, exact, 0.05 * exact);
  }
}

TEST(SinkhornTest, PlanMarginalsAreUniform) {
  Rng rng(5);
  SinkhornOptions opt;
  opt.epsilon = 0.01;
  opt.tol = 1e-8;
  opt.max_iters = 200000;
  const auto x = RandomPoints(rng, 20, 3), y = RandomPoints(rng, 15, 3);
  const auto r = sinkhorn_ot(x, y, opt);
  ASSERT_TRUE(r.converged);
  const auto c = squared_distances(x, y);
  Eigen::MatrixXd plan(20, 15);
  for (int i = 0; i < 20; ++i) {
    for (int j = 0; j < 15; ++j) {
      plan(i, j) = std::exp((r.f[i] + r.g[j] - c(i, j)) / opt.epsilon) / (20.0 * 15.0);
    }
  }
  EXPECT_LT((plan.rowwise().sum().array() - 1.0 / 20).abs().sum(), opt.tol);
  EXPECT_LT((plan.colwise().sum().array() - 1.0 / 15).abs().sum(), 1e-9);
}

TEST(SinkhornTest, NonNegativeAndSymmetricEnough) {
  Rng rng(6);
  for (int k = 0; k < 20; ++k) {
    const auto x = RandomPoints(rng, 10 + static_cast<int>(rng.below(10)), 3);
    const auto y = RandomPoints(rng, 10 + static_cast<int>(rng.below(10)), 3);
    const double xy = sinkhorn_divergence(x, y).value, yx = sinkhorn_divergence(y, x).value;
    EXPECT_GE(xy, -1e-9);
    EXPECT_NEAR(xy, yx, 1e-6);
  }
}

std::vector<YearPoints> SwapCorpusPoints(int normals_per_month) {
  SyntheticConfig c;
  c.n_years = 6;
  c.months_per_year = 1;
  c.normals_per_month = normals_per_month;
  c.swap_year = 4;
  const auto recs = generate_synthetic(c);
  std::vector<RawRecord> train;
  for (const auto& r : recs) {
    if (r.timestamp.year == 2006 && !r.label.is_anomaly()) train.push_back(r);
  }
  FeatureVectorizer vec(VectorMode::kOneHot);
  vec.fit(train);
  std::vector<YearPoints> out;
  for (int y = 2006; y < 2012; ++y) {
    std::vector<RawRecord> in, outl;
    for (const auto& r : recs) {
      if (r.timestamp.year == y) (r.label.is_anomaly() ? outl : in).push_back(r);
    }
    out.push_back({y, vec.transform(in), vec.transform(outl)});
  }
  return out;
}

TEST(DatasetDistanceTest, DuplicatedYearsNearZero) {
  auto years = SwapCorpusPoints(60);
  years[1] = years[0];
  years[1].year = 2099;
  DatasetDistanceOptions opt;
  opt.sample_size = 1000;  // keep every point
  opt.repeats = 1;
  const auto m = dataset_distance_report(std::span(years).first(2), opt);
  EXPECT_LT(std::abs(m.at(0, 1)), 1e-6);
  EXPECT_EQ(m.conditioning, "inlier-inlier");
}

TEST(DatasetDistanceTest, FarOutliersResembleTrainInliers) {
  const auto years = SwapCorpusPoints(150);
  DatasetDistanceOptions opt;
  opt.row_class = ClassSide::kOutlier;
  opt.col_class = ClassSide::kInlier;
  opt.sample_size = 120;
  opt.repeats = 2;
  opt.seed = 3;
  const auto m = dataset_distance_report(years, opt);
  // Rows: outlier year; column 0: TRAIN-year inliers.
  EXPECT_LT(m.at(5, 0), m.at(0, 0));
  EXPECT_LT(m.at(4, 0), m.at(1, 0));
}

TEST(DatasetDistanceTest, DeterministicThreadIndependentAndGuarded) {
  auto years = SwapCorpusPoints(40);
  DatasetDistanceOptions opt;
  opt.sample_size = 30;
  opt.repeats = 2;
  opt.seed = 9;
  const auto a = dataset_distance_report(std::span(years).first(3), opt);
  opt.threads = 3;
  const auto b = dataset_distance_report(std::span(years).first(3), opt);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.to_csv(), b.to_csv());
  years[1].outliers.resize(0, years[1].outliers.cols());
  opt.row_class = ClassSide::kOutlier;
  try {
    dataset_distance_report(std::span(years).first(3), opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyClassSubset);
  }
}

TEST(PcaTest, LineCapturesAllVariance) {
  Rng rng(7);
  Eigen::MatrixXd x(50, 3);
  for (int i = 0; i < 50; ++i) {
    const double t = rng.normal();
    x.row(i) << 1 + 2 * t, -3 * t, 0.5 * t + 4;
  }
  const auto r = pca_project(x, 2);
  EXPECT_GT(r.eigenvalues[0] / r.total_variance, 0.999);
}

TEST(PcaTest, FullRankPlanePreservesDistances) {
  Rng rng(8);
  Eigen::MatrixXd x(30, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  x.col(1) *= 0.3;
  const auto r = pca_project(x, 2);
  for (int i = 0; i < 30; ++i) {
    for (int j = 0; j < 30; ++j) {
      EXPECT_NEAR((x.row(i) - x.row(j)).norm(), (r.coordinates.row(i) - r.coordinates.row(j)).norm(), 1e-9);
    }
  }
}

TEST(PcaTest, EigenvaluesMatchDenseSolverAndAreOrthogonal) {
  Rng rng(9);
  for (int k = 0; k < 20; ++k) {
    Eigen::MatrixXd x(10, 5);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal() * (1 + (i % 5));
    const auto r = pca_project(x, 2);
    const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd cov = centered.transpose() * centered / 9.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    EXPECT_NEAR(r.eigenvalues[0], es.eigenvalues()[4], 1e-8);
    EXPECT_NEAR(r.eigenvalues[1], es.eigenvalues()[3], 1e-8);
    EXPECT_NEAR(r.components.col(0).dot(r.components.col(1)), 0.0, 1e-8);
    Eigen::Index arg;
    r.components.col(0).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(r.components(arg, 0), 0.0);
  }
}

TEST(PcaTest, RankDeficientReturnsAvailableComponents) {
  Eigen::MatrixXd x(5, 3);
  for (int i = 0; i < 5; ++i) x.row(i) << i, 2 * i, -i;
  const auto r = pca_project(x, 2);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.components.cols(), 1);
}

}  // namespace
}  // namespace anoshift
