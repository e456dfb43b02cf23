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

// Chronological benchmark splits: TRAIN and IID from the early years, NEAR
// and FAR from later periods, with per-month normal quotas and per-year
// anomaly proportions carried over from the source data.

#ifndef ANOSHIFT_PROTOCOL_HPP_
#define ANOSHIFT_PROTOCOL_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "anoshift/error.hpp"
#include "anoshift/ingest.hpp"
#include "anoshift/io.hpp"
#include "anoshift/rng.hpp"
#include "anoshift/schema.hpp"
#include "json.hpp"

namespace anoshift {

enum class SplitName { kTrain, kIid, kNear, kFar };

inline constexpr std::array<SplitName, 4> kAllSplits = {SplitName::kTrain, SplitName::kIid,
                                                        SplitName::kNear, SplitName::kFar};
inline constexpr std::array<SplitName, 3> kTestSplits = {SplitName::kIid, SplitName::kNear,
                                                         SplitName::kFar};

inline std::string_view split_name(SplitName s) {
  switch (s) {
    case SplitName::kTrain: return "train";
    case SplitName::kIid: return "iid";
    case SplitName::kNear: return "near";
    case SplitName::kFar: return "far";
  }
  return "?";
}

inline std::optional<SplitName> split_from_name(std::string_view s) {
  for (auto n : kAllSplits) {
    if (split_name(n) == s) return n;
  }
  return std::nullopt;
}

struct SplitConfig {
  std::vector<int> train_years = {2006, 2007, 2008, 2009, 2010};
  std::vector<int> near_years = {2011, 2012, 2013};
  std::vector<int> far_years = {2014, 2015};
  std::size_t normals_per_month_train = 25000;  // also the NEAR/FAR quota
  std::size_t normals_per_month_iid = 2500;
  double contamination_rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidConfig, m); };
    if (train_years.empty() || near_years.empty() || far_years.empty()) {
      fail("every split needs at least one year");
    }
    std::vector<int> all;
    for (const auto* ys : {&train_years, &near_years, &far_years}) {
      if (!std::is_sorted(ys->begin(), ys->end())) fail("split years must be ascending");
      all.insert(all.end(), ys->begin(), ys->end());
    }
    for (std::size_t i = 1; i < all.size(); ++i) {
      if (all[i] <= all[i - 1]) fail("split years must be disjoint and chronologically ordered");
    }
    if (normals_per_month_train == 0 || normals_per_month_iid == 0) fail("quotas must be > 0");
    if (!(contamination_rate >= 0.0 && contamination_rate < 1.0)) {
      fail("contamination_rate must be in [0,1)");
    }
  }

  nlohmann::json to_json() const {
    return {{"train_years", train_years},
            {"near_years", near_years},
            {"far_years", far_years},
            {"normals_per_month_train", normals_per_month_train},
            {"normals_per_month_iid", normals_per_month_iid},
            {"contamination_rate", contamination_rate},
            {"seed", seed}};
  }

  static SplitConfig from_json(const nlohmann::json& j) {
    SplitConfig c;
    try {
      c.train_years = j.value("train_years", c.train_years);
      c.near_years = j.value("near_years", c.near_years);
      c.far_years = j.value("far_years", c.far_years);
      c.normals_per_month_train = j.value("normals_per_month_train", c.normals_per_month_train);
      c.normals_per_month_iid = j.value("normals_per_month_iid", c.normals_per_month_iid);
      c.contamination_rate = j.value("contamination_rate", c.contamination_rate);
      c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kInvalidConfig, e.what());
    }
    return c;
  }
};

// One (split, year) collection. `source_rows` holds the index of each record
// in the sequence handed to plan_splits, which is the record identity.
struct YearSet {
  int year = 0;
  std::size_t months = 0;
  std::vector<RawRecord> records;
  std::vector<std::size_t> source_rows;
  double source_anomaly_ratio = 0.0;  // anomalies / normals in the source year

  std::size_t n_anomaly() const {
    return static_cast<std::size_t>(std::count_if(
        records.begin(), records.end(), [](const RawRecord& r) { return r.label.is_anomaly(); }));
  }
  std::size_t n_normal() const { return records.size() - n_anomaly(); }
};

struct Injection {
  std::size_t train_set = 0;  // index into BenchmarkSplits::train
  std::size_t position = 0;   // index within that set's records
  std::size_t source_row = 0;
  int true_raw_code = -1;
};

struct BenchmarkSplits {
  std::vector<YearSet> train;
  std::vector<YearSet> iid;
  std::vector<YearSet> near;
  std::vector<YearSet> far;
  // Train-year anomalies not placed in IID; the supply for contamination.
  std::vector<YearSet> anomaly_reserve;
  std::vector<Injection> injected;
  std::vector<std::string> warnings;
  SplitConfig config;

  const std::vector<YearSet>& split(SplitName s) const {
    switch (s) {
      case SplitName::kTrain: return train;
      case SplitName::kIid: return iid;
      case SplitName::kNear: return near;
      case SplitName::kFar: return far;
    }
    return train;
  }
  std::vector<YearSet>& split(SplitName s) {
    return const_cast<std::vector<YearSet>&>(std::as_const(*this).split(s));
  }

  std::vector<RawRecord> train_records() const {
    std::vector<RawRecord> out;
    for (const auto& ys : train) out.insert(out.end(), ys.records.begin(), ys.records.end());
    return out;
  }
};

namespace detail {

struct YearPool {
  std::vector<std::size_t> normals;
  std::vector<std::size_t> anomalies;
  std::set<int> months;
};

inline YearSet take(int year, std::size_t months, double ratio, std::span<const RawRecord> records,
                    std::vector<std::size_t> rows) {
  std::sort(rows.begin(), rows.end());
  YearSet ys;
  ys.year = year;
  ys.months = months;
  ys.source_anomaly_ratio = ratio;
  ys.records.reserve(rows.size());
  for (auto r : rows) ys.records.push_back(records[r]);
  ys.source_rows = std::move(rows);
  return ys;
}

}  // namespace detail

// Replaces floor(rate * |train|) random train records with anomalies from the
// reserve of the same year. Injected records are relabeled normal (training is
// unsupervised) and their true label is kept in `injected`.
inline BenchmarkSplits contaminate(BenchmarkSplits splits, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "contamination rate must be in [0,1)");
  }
  std::size_t total = 0;
  for (const auto& ys : splits.train) total += ys.records.size();
  const auto n_inject = static_cast<std::size_t>(std::floor(rate * static_cast<double>(total)));
  if (n_inject == 0) return splits;

  Rng rng(seed);
  // Global positions over the concatenated train sets; skip already injected.
  std::set<std::pair<std::size_t, std::size_t>> taken;
  for (const auto& inj : splits.injected) taken.insert({inj.train_set, inj.position});
  std::vector<std::pair<std::size_t, std::size_t>> candidates;
  for (std::size_t s = 0; s < splits.train.size(); ++s) {
    for (std::size_t p = 0; p < splits.train[s].records.size(); ++p) {
      if (!taken.count({s, p})) candidates.push_back({s, p});
    }
  }
  if (candidates.size() < n_inject) {
    throw Error(ErrorCode::kInsufficientAnomalySupply, "not enough train records to replace");
  }
  rng.shuffle(std::span(candidates));
  candidates.resize(n_inject);
  std::sort(candidates.begin(), candidates.end());

  std::map<std::size_t, std::size_t> needed;
  for (const auto& c : candidates) ++needed[c.first];
  for (const auto& [s, n] : needed) {
    const int year = splits.train[s].year;
    auto it = std::find_if(splits.anomaly_reserve.begin(), splits.anomaly_reserve.end(),
                           [&](const YearSet& r) { return r.year == year; });
    if (it == splits.anomaly_reserve.end() || it->records.size() < n) {
      throw Error(ErrorCode::kInsufficientAnomalySupply,
                  "year " + std::to_string(year) + " needs " + std::to_string(n) +
                      " spare anomalies");
    }
  }
  for (const auto& [s, p] : candidates) {
    YearSet& set = splits.train[s];
    YearSet& reserve = *std::find_if(splits.anomaly_reserve.begin(), splits.anomaly_reserve.end(),
                                     [&](const YearSet& r) { return r.year == set.year; });
    const auto pick = static_cast<std::size_t>(rng.below(reserve.records.size()));
    RawRecord rec = reserve.records[pick];
    const std::size_t row = reserve.source_rows[pick];
    reserve.records.erase(reserve.records.begin() + static_cast<std::ptrdiff_t>(pick));
    reserve.source_rows.erase(reserve.source_rows.begin() + static_cast<std::ptrdiff_t>(pick));
    splits.injected.push_back({s, p, row, rec.label.raw_code});
    rec.label = label_from_code(1);
    set.records[p] = std::move(rec);
    set.source_rows[p] = row;
  }
  return splits;
}

inline BenchmarkSplits plan_splits(std::span<const RawRecord> records, const SplitConfig& config) {
  config.validate();
  std::map<int, detail::YearPool> pools;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    auto& pool = pools[r.timestamp.year];
    (r.label.is_anomaly() ? pool.anomalies : pool.normals).push_back(i);
    pool.months.insert(r.timestamp.month);
  }

  BenchmarkSplits out;
  out.config = config;
  auto warn = [&](std::string m) { out.warnings.push_back(std::move(m)); };

  auto pool_for = [&](int year) -> detail::YearPool& {
    auto it = pools.find(year);
    if (it == pools.end() || it->second.normals.empty()) {
      throw Error(ErrorCode::kNoRecordsForYear, "no normal records for year " + std::to_string(year));
    }
    return it->second;
  };
  auto ratio_of = [](const detail::YearPool& p) {
    return static_cast<double>(p.anomalies.size()) / static_cast<double>(p.normals.size());
  };
  auto anomaly_quota = [](std::size_t normals, double ratio, std::size_t supply) {
    return std::min<std::size_t>(
        supply, static_cast<std::size_t>(std::llround(static_cast<double>(normals) * ratio)));
  };

  for (int year : config.train_years) {
    auto& pool = pool_for(year);
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(year)));
    const std::size_t months = pool.months.size();
    std::size_t q_train = months * config.normals_per_month_train;
    std::size_t q_iid = months * config.normals_per_month_iid;
    auto normals = pool.normals;
    rng.shuffle(std::span(normals));
    if (normals.size() < q_train + q_iid) {
      const std::size_t supply = normals.size();
      const auto shrunk = static_cast<std::size_t>(
          std::floor(static_cast<double>(supply) * static_cast<double>(q_train) /
                     static_cast<double>(q_train + q_iid)));
      warn("year " + std::to_string(year) + ": " + std::to_string(supply) +
           " normals for TRAIN+IID quota " + std::to_string(q_train + q_iid) + ", shrinking");
      q_train = shrunk;
      q_iid = supply - shrunk;
    }
    std::vector<std::size_t> train_rows(normals.begin(), normals.begin() + static_cast<std::ptrdiff_t>(q_train));
    std::vector<std::size_t> iid_rows(normals.begin() + static_cast<std::ptrdiff_t>(q_train),
                                      normals.begin() + static_cast<std::ptrdiff_t>(q_train + q_iid));
    const double ratio = ratio_of(pool);
    auto anomalies = pool.anomalies;
    rng.shuffle(std::span(anomalies));
    const std::size_t k = anomaly_quota(q_iid, ratio, anomalies.size());
    iid_rows.insert(iid_rows.end(), anomalies.begin(), anomalies.begin() + static_cast<std::ptrdiff_t>(k));
    std::vector<std::size_t> reserve(anomalies.begin() + static_cast<std::ptrdiff_t>(k), anomalies.end());

    out.train.push_back(detail::take(year, months, ratio, records, std::move(train_rows)));
    out.iid.push_back(detail::take(year, months, ratio, records, std::move(iid_rows)));
    out.anomaly_reserve.push_back(detail::take(year, months, ratio, records, std::move(reserve)));
  }

  for (auto [name, years] : {std::pair{SplitName::kNear, &config.near_years},
                             std::pair{SplitName::kFar, &config.far_years}}) {
    for (int year : *years) {
      auto& pool = pool_for(year);
      Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(year)));
      const std::size_t months = pool.months.size();
      std::size_t q = months * config.normals_per_month_train;
      auto normals = pool.normals;
      rng.shuffle(std::span(normals));
      if (normals.size() < q) {
        warn("year " + std::to_string(year) + ": " + std::to_string(normals.size()) +
             " normals for quota " + std::to_string(q) + ", shrinking");
        q = normals.size();
      }
      std::vector<std::size_t> rows(normals.begin(), normals.begin() + static_cast<std::ptrdiff_t>(q));
      const double ratio = ratio_of(pool);
      auto anomalies = pool.anomalies;
      rng.shuffle(std::span(anomalies));
      const std::size_t k = anomaly_quota(q, ratio, anomalies.size());
      rows.insert(rows.end(), anomalies.begin(), anomalies.begin() + static_cast<std::ptrdiff_t>(k));
      out.split(name).push_back(detail::take(year, months, ratio, records, std::move(rows)));
    }
  }

  if (config.contamination_rate > 0.0) {
    out = contaminate(std::move(out), config.contamination_rate, derive_seed(config.seed, 0xC0417A));
  }
  return out;
}

inline std::string split_file_name(SplitName s, int year) {
  return std::string(split_name(s)) + "_" + std::to_string(year) + ".txt";
}

inline nlohmann::json splits_manifest(const BenchmarkSplits& splits) {
  nlohmann::json sets = nlohmann::json::array();
  for (auto s : kAllSplits) {
    for (const auto& ys : splits.split(s)) {
      const double n = static_cast<double>(ys.n_normal());
      sets.push_back({{"split", std::string(split_name(s))},
                      {"year", ys.year},
                      {"file", split_file_name(s, ys.year)},
                      {"months", ys.months},
                      {"n_normal", ys.n_normal()},
                      {"n_anomaly", ys.n_anomaly()},
                      {"realized_anomaly_ratio", n > 0 ? static_cast<double>(ys.n_anomaly()) / n : 0.0},
                      {"source_anomaly_ratio", ys.source_anomaly_ratio}});
    }
  }
  nlohmann::json injected = nlohmann::json::array();
  for (const auto& inj : splits.injected) {
    injected.push_back({{"train_year", splits.train[inj.train_set].year},
                        {"position", inj.position},
                        {"source_row", inj.source_row},
                        {"true_raw_code", inj.true_raw_code}});
  }
  return {{"split_config", splits.config.to_json()},
          {"sets", sets},
          {"injected", injected},
          {"warnings", splits.warnings}};
}

// One file per (split, year) in the ingest layout.
inline void write_split_files(const std::filesystem::path& dir, const BenchmarkSplits& splits,
                              const SchemaDescriptor& schema) {
  std::filesystem::create_directories(dir);
  for (auto s : kAllSplits) {
    for (const auto& ys : splits.split(s)) {
      write_dataset(dir / split_file_name(s, ys.year), ys.records, schema);
    }
  }
}

// Reloads the per-(split, year) files listed in a manifest.
inline BenchmarkSplits load_splits(const std::filesystem::path& dir, const nlohmann::json& manifest,
                                   const SchemaDescriptor& schema) {
  BenchmarkSplits out;
  try {
    out.config = SplitConfig::from_json(manifest.at("split_config"));
    for (const auto& entry : manifest.at("sets")) {
      auto s = split_from_name(entry.at("split").get<std::string>());
      if (!s) throw Error(ErrorCode::kFormat, "unknown split in manifest");
      YearSet ys;
      ys.year = entry.at("year").get<int>();
      ys.months = entry.at("months").get<std::size_t>();
      ys.source_anomaly_ratio = entry.at("source_anomaly_ratio").get<double>();
      ys.records = read_dataset(dir / entry.at("file").get<std::string>(), schema).records;
      out.split(*s).push_back(std::move(ys));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("bad split manifest: ") + e.what());
  }
  return out;
}

}  // namespace anoshift

#endif  // ANOSHIFT_PROTOCOL_HPP_
