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

#include "anoshift/ingest.hpp"

#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <filesystem>
#include <map>

#include "anoshift/tokenize.hpp"

namespace anoshift {
namespace {

std::string Row(const std::string& service = "http", const std::string& label = "1",
                const std::string& rate = "0.5") {
  // 14 features, timestamp, 3 flags, label, protocol.
  return "0.5\t" + service + "\t100\t200\t3\t" + rate +
         "\t0\t0\t10\t12\t0.1\t0\t0\tSF\t2007-03-04 05:06:07\t0\t0\t0\t" + label + "\ttcp\n";
}

TEST(ReadDatasetTest, TwoWellFormedRows) {
  const auto r = parse_dataset(Row() + Row("dns", "-1"), SchemaDescriptor::kyoto());
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.rows, 2u);
  EXPECT_TRUE(r.malformed.empty());
  EXPECT_EQ(r.records[1].service, "dns");
  EXPECT_TRUE(r.records[1].label.is_anomaly());
  EXPECT_EQ(r.records[0].timestamp.to_string(), "2007-03-04 05:06:07");
  EXPECT_EQ(r.records[0].dst_host_srv_count, 12);
}

TEST(ReadDatasetTest, OneBadRowInTenIsTolerated) {
  std::string text;
  for (int i = 0; i < 9; ++i) text += Row();
  text += Row("http", "5");
  const auto r = parse_dataset(text, SchemaDescriptor::kyoto());
  EXPECT_EQ(r.records.size(), 9u);
  ASSERT_EQ(r.malformed.size(), 1u);
  EXPECT_EQ(r.malformed[0].line_no, 10u);
}

TEST(ReadDatasetTest, FiveBadRowsInTenFail) {
  std::string text;
  for (int i = 0; i < 5; ++i) text += Row() + Row("http", "1", "1.7");
  try {
    parse_dataset(text, SchemaDescriptor::kyoto());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedRow);
  }
}

TEST(ReadDatasetTest, OnePercentOfLargeFile) {
  std::string text;
  for (int i = 0; i < 400; ++i) text += (i % 100 == 0) ? "truncated\n" : Row();
  EXPECT_EQ(parse_dataset(text, SchemaDescriptor::kyoto()).records.size(), 396u);
  text += "truncated\n";
  EXPECT_THROW(parse_dataset(text, SchemaDescriptor::kyoto()), Error);
}

TEST(SchemaDescriptorTest, ValidationAndJson) {
  auto s = SchemaDescriptor::kyoto();
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(SchemaDescriptor::from_json(s.to_json()).to_json(), s.to_json());
  auto bad = s;
  bad.columns[18].role = ColumnRole::kIgnored;
  EXPECT_THROW(bad.validate(), Error);
  bad = s;
  bad.columns[3] = bad.columns[2];
  EXPECT_THROW(bad.validate(), Error);
}

TEST(ReadDatasetTest, CustomDelimiterAndHeader) {
  auto s = SchemaDescriptor::kyoto();
  s.delimiter = ',';
  s.has_header = true;
  SyntheticConfig c;
  c.n_years = 2;
  c.months_per_year = 1;
  c.normals_per_month = 20;
  const auto recs = generate_synthetic(c);
  const auto text = format_dataset(recs, s);
  EXPECT_EQ(text.substr(0, 9), "duration,");
  EXPECT_EQ(parse_dataset(text, s).records, recs);
}

TEST(SyntheticTest, CountArithmetic) {
  SyntheticConfig c;
  c.n_years = 2;
  c.months_per_year = 1;
  c.normals_per_month = 100;
  c.anomaly_ratio_per_year = {0.5, 0.5};
  const auto rs = generate_synthetic(c);
  std::size_t normals = 0, anomalies = 0;
  std::set<YearMonth> months;
  for (const auto& r : rs) {
    (r.label.is_anomaly() ? anomalies : normals) += 1;
    months.insert(r.timestamp.year_month());
  }
  EXPECT_EQ(months.size(), 2u);
  EXPECT_EQ(normals, 200u);
  EXPECT_EQ(anomalies, 200u);
}

TEST(SyntheticTest, AnomalyFractionWithinOneRecord) {
  SyntheticConfig c;
  c.n_years = 4;
  c.months_per_year = 3;
  c.normals_per_month = 137;
  c.anomaly_ratio_per_year = {0.1, 0.33, 0.5, 0.9};
  const auto rs = generate_synthetic(c);
  std::map<int, std::pair<double, double>> per_year;
  for (const auto& r : rs) (r.label.is_anomaly() ? per_year[r.timestamp.year].second : per_year[r.timestamp.year].first) += 1;
  int y = 0;
  for (const auto& [year, counts] : per_year) {
    const double total = counts.first + counts.second;
    EXPECT_LE(std::abs(counts.second - c.anomaly_ratio_per_year[static_cast<std::size_t>(y)] * total), 1.0) << year;
    ++y;
  }
}

TEST(SyntheticTest, DeterministicAndRoundTrips) {
  SyntheticConfig c;
  c.n_years = 2;
  c.months_per_year = 2;
  c.normals_per_month = 50;
  c.seed = 9;
  const auto a = generate_synthetic(c);
  EXPECT_EQ(a, generate_synthetic(c));
  const auto schema = SchemaDescriptor::kyoto();
  const auto text = format_dataset(a, schema);
  EXPECT_EQ(text, format_dataset(generate_synthetic(c), schema));
  const auto back = parse_dataset(text, schema);
  EXPECT_EQ(back.records, a);
  EXPECT_EQ(format_dataset(back.records, schema), text);
  const auto dir = std::filesystem::temp_directory_path() / "anoshift_ingest_test";
  std::filesystem::create_directories(dir);
  write_dataset(dir / "d.tsv", a, schema);
  EXPECT_EQ(read_dataset(dir / "d.tsv", schema).records, a);
  std::filesystem::remove_all(dir);
}

TEST(SyntheticTest, InvalidConfig) {
  SyntheticConfig c;
  c.n_years = 1;
  EXPECT_THROW(generate_synthetic(c), Error);
  c.n_years = 3;
  c.anomaly_ratio_per_year = {0.5, 0.5};
  EXPECT_THROW(generate_synthetic(c), Error);
  c.anomaly_ratio_per_year = {0.5, 1.0, 0.5};
  EXPECT_THROW(generate_synthetic(c), Error);
}

// Two-sample chi-square homogeneity test on token histograms; sparse cells
// (expected < 5 in either sample) are pooled.
double ChiSquarePValue(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
  double na = 0, nb = 0;
  for (auto& [k, v] : a) na += v;
  for (auto& [k, v] : b) nb += v;
  std::set<std::string> keys;
  for (auto& [k, v] : a) keys.insert(k);
  for (auto& [k, v] : b) keys.insert(k);
  std::vector<std::pair<double, double>> cells;
  std::pair<double, double> pooled{0, 0};
  for (const auto& k : keys) {
    const double x = a.count(k) ? a.at(k) : 0, y = b.count(k) ? b.at(k) : 0;
    const double total = x + y;
    if (total * na / (na + nb) < 5 || total * nb / (na + nb) < 5) {
      pooled.first += x;
      pooled.second += y;
    } else {
      cells.emplace_back(x, y);
    }
  }
  if (pooled.first + pooled.second > 0) cells.push_back(pooled);
  if (cells.size() < 2) return 1.0;
  double stat = 0;
  for (auto [x, y] : cells) {
    const double t = x + y;
    const double ex = t * na / (na + nb), ey = t * nb / (na + nb);
    stat += (x - ex) * (x - ex) / ex + (y - ey) * (y - ey) / ey;
  }
  boost::math::chi_squared dist(static_cast<double>(cells.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

TEST(SyntheticTest, NoDriftMeansYearsMatchInDistribution) {
  SyntheticConfig c;
  c.n_years = 2;
  c.months_per_year = 10;
  c.normals_per_month = 1000;
  c.drift_rate = 0.0;
  c.swap_year = 10;
  c.seed = 3;
  const auto rs = generate_synthetic(c);
  const auto table = default_treatments();
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    std::map<std::string, double> y0, y1;
    for (const auto& r : rs) {
      if (r.label.is_anomaly()) continue;
      (r.timestamp.year == 2006 ? y0 : y1)[feature_token(f, r, table[f])] += 1;
    }
    EXPECT_GT(ChiSquarePValue(y0, y1), 0.01) << kFeatureNames[f];
  }
}

TEST(SyntheticTest, DriftMovesNormalsApart) {
  SyntheticConfig c;
  c.n_years = 2;
  c.months_per_year = 2;
  c.normals_per_month = 2000;
  c.drift_rate = 0.8;
  const auto rs = generate_synthetic(c);
  std::map<std::string, double> y0, y1;
  for (const auto& r : rs) {
    if (!r.label.is_anomaly()) (r.timestamp.year == 2006 ? y0 : y1)[r.service] += 1;
  }
  EXPECT_LT(ChiSquarePValue(y0, y1), 1e-6);
}

TEST(SyntheticTest, TimestampsInsideTheirMonthAndSorted) {
  SyntheticConfig c;
  c.n_years = 2;
  c.months_per_year = 12;
  c.normals_per_month = 20;
  const auto rs = generate_synthetic(c);
  for (std::size_t i = 1; i < rs.size(); ++i) EXPECT_LE(rs[i - 1].timestamp, rs[i].timestamp);
  for (const auto& r : rs) EXPECT_TRUE(Timestamp::parse(r.timestamp.to_string()));
}

}  // namespace
}  // namespace anoshift
