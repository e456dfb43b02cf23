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

// Benchmark evaluation: per-(detector, split, year) metrics over seeds,
// split aggregates and per-month breakdowns.

#ifndef ANOSHIFT_EVALUATE_HPP_
#define ANOSHIFT_EVALUATE_HPP_

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anoshift/detectors.hpp"
#include "anoshift/io.hpp"
#include "anoshift/metrics.hpp"
#include "anoshift/protocol.hpp"
#include "anoshift/tokenize.hpp"
#include "json.hpp"

namespace anoshift {

struct Metrics {
  std::optional<double> roc_auc, pr_auc_in, pr_auc_out;
  std::size_t n_in = 0, n_out = 0;
};

// Metrics are null when a class is missing.
inline Metrics compute_metrics(std::span<const double> scores, std::span<const RawRecord> records) {
  Metrics m;
  std::vector<std::uint8_t> anomalous(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    anomalous[i] = records[i].label.is_anomaly();
    (anomalous[i] ? m.n_out : m.n_in) += 1;
  }
  if (m.n_in > 0 && m.n_out > 0) {
    m.roc_auc = roc_auc(scores, anomalous);
    m.pr_auc_in = pr_auc(scores, anomalous, PositiveClass::kInlier);
    m.pr_auc_out = pr_auc(scores, anomalous, PositiveClass::kOutlier);
  }
  return m;
}

struct Stat {
  std::optional<double> mean;
  double std = 0.0;  // sample standard deviation across seeds
};

inline Stat summarize(const std::vector<std::optional<double>>& values) {
  std::vector<double> v;
  for (const auto& x : values) {
    if (!x) return {};
    v.push_back(*x);
  }
  if (v.empty()) return {};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0};
}

struct YearRow {
  std::string detector;
  SplitName split = SplitName::kIid;
  int year = 0;
  std::size_t n_in = 0, n_out = 0;
  std::vector<Metrics> per_seed;
  Stat roc_auc, pr_auc_in, pr_auc_out;
};

struct SplitRow {
  std::string detector;
  SplitName split = SplitName::kIid;
  std::vector<int> years;
  // Per seed: the equal-weight mean over the split's years.
  std::vector<std::optional<double>> roc_auc_per_seed, pr_auc_in_per_seed, pr_auc_out_per_seed;
  Stat roc_auc, pr_auc_in, pr_auc_out;
};

struct EvalReport {
  std::vector<YearRow> years;
  std::vector<SplitRow> splits;
  std::vector<std::uint64_t> seeds;
  nlohmann::json metadata = nlohmann::json::object();

  const SplitRow* find(const std::string& detector, SplitName split) const {
    for (const auto& r : splits) {
      if (r.detector == detector && r.split == split) return &r;
    }
    return nullptr;
  }
};

using ScorerFactory = std::function<std::unique_ptr<AnomalyScorer>()>;

namespace detail {

inline std::optional<double> mean_over(const std::vector<std::optional<double>>& v) {
  if (v.empty()) return std::nullopt;
  double s = 0.0;
  for (const auto& x : v) {
    if (!x) return std::nullopt;
    s += *x;
  }
  return s / static_cast<double>(v.size());
}

}  // namespace detail

// Fits each detector on TRAIN once per seed and scores every test year.
inline EvalReport evaluate_benchmark(const std::vector<ScorerFactory>& detectors, const BenchmarkSplits& splits,
                                     const Vocabulary& vocab, std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw Error(ErrorCode::kInvalidConfig, "at least one seed is required");
  EvalReport report;
  report.seeds.assign(seeds.begin(), seeds.end());
  const auto train = splits.train_records();
  for (const auto& factory : detectors) {
    std::vector<YearRow> rows;
    for (auto split : kTestSplits) {
      for (const auto& ys : splits.split(split)) {
        YearRow r;
        r.split = split;
        r.year = ys.year;
        rows.push_back(std::move(r));
      }
    }
    std::string name;
    for (std::uint64_t seed : seeds) {
      auto scorer = factory();
      name = scorer->name();
      scorer->fit(train, vocab, seed);
      std::size_t k = 0;
      for (auto split : kTestSplits) {
        for (const auto& ys : splits.split(split)) {
          const auto scores = scorer->score(ys.records);
          rows[k++].per_seed.push_back(compute_metrics(scores, ys.records));
        }
      }
    }
    for (auto split : kTestSplits) {
      SplitRow sr;
      sr.detector = name;
      sr.split = split;
      for (std::size_t s = 0; s < seeds.size(); ++s) {
        std::vector<std::optional<double>> roc, in, out;
        for (const auto& r : rows) {
          if (r.split != split) continue;
          roc.push_back(r.per_seed[s].roc_auc);
          in.push_back(r.per_seed[s].pr_auc_in);
          out.push_back(r.per_seed[s].pr_auc_out);
        }
        sr.roc_auc_per_seed.push_back(detail::mean_over(roc));
        sr.pr_auc_in_per_seed.push_back(detail::mean_over(in));
        sr.pr_auc_out_per_seed.push_back(detail::mean_over(out));
      }
      for (const auto& r : rows) {
        if (r.split == split) sr.years.push_back(r.year);
      }
      sr.roc_auc = summarize(sr.roc_auc_per_seed);
      sr.pr_auc_in = summarize(sr.pr_auc_in_per_seed);
      sr.pr_auc_out = summarize(sr.pr_auc_out_per_seed);
      report.splits.push_back(std::move(sr));
    }
    for (auto& r : rows) {
      r.detector = name;
      r.n_in = r.per_seed.front().n_in;
      r.n_out = r.per_seed.front().n_out;
      std::vector<std::optional<double>> roc, in, out;
      for (const auto& m : r.per_seed) {
        roc.push_back(m.roc_auc);
        in.push_back(m.pr_auc_in);
        out.push_back(m.pr_auc_out);
      }
      r.roc_auc = summarize(roc);
      r.pr_auc_in = summarize(in);
      r.pr_auc_out = summarize(out);
      report.years.push_back(std::move(r));
    }
  }
  report.metadata["split_aggregate"] = "equal-weight mean over the split's yearly values";
  return report;
}

struct MonthRow {
  YearMonth month;
  Metrics metrics;
};

// Groups records by month; single-class months keep null metrics.
inline std::vector<MonthRow> monthly_breakdown(std::span<const double> scores, std::span<const RawRecord> records) {
  std::map<YearMonth, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) groups[records[i].timestamp.year_month()].push_back(i);
  std::vector<MonthRow> out;
  for (const auto& [ym, idx] : groups) {
    std::vector<double> s;
    std::vector<RawRecord> r;
    for (auto i : idx) {
      s.push_back(scores[i]);
      r.push_back(records[i]);
    }
    out.push_back({ym, compute_metrics(s, r)});
  }
  return out;
}

inline std::vector<MonthRow> monthly_breakdown(const AnomalyScorer& scorer, std::span<const RawRecord> records) {
  const auto scores = scorer.score(records);
  return monthly_breakdown(scores, records);
}

// ---------------------------------------------------------------------------
// Serialization.

namespace detail {

inline nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json stat_json(const Stat& s) { return {{"mean", opt_json(s.mean)}, {"std", s.std}}; }

inline std::string opt_text(const std::optional<double>& v, const char* fmt = "%.4f") {
  if (!v) return "null";
  char buf[32];
  std::snprintf(buf, sizeof(buf), fmt, *v);
  return buf;
}

inline std::string stat_text(const Stat& s) {
  if (!s.mean) return "null";
  return opt_text(s.mean) + " +- " + opt_text(s.std);
}

}  // namespace detail

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["seeds"] = r.seeds;
  j["metadata"] = r.metadata;
  auto& years = j["years"] = nlohmann::json::array();
  for (const auto& y : r.years) {
    nlohmann::json per_seed = nlohmann::json::array();
    for (const auto& m : y.per_seed) {
      per_seed.push_back({{"roc_auc", detail::opt_json(m.roc_auc)},
                          {"pr_auc_in", detail::opt_json(m.pr_auc_in)},
                          {"pr_auc_out", detail::opt_json(m.pr_auc_out)}});
    }
    years.push_back({{"detector", y.detector},
                     {"split", split_name(y.split)},
                     {"year", y.year},
                     {"n_in", y.n_in},
                     {"n_out", y.n_out},
                     {"roc_auc", detail::stat_json(y.roc_auc)},
                     {"pr_auc_in", detail::stat_json(y.pr_auc_in)},
                     {"pr_auc_out", detail::stat_json(y.pr_auc_out)},
                     {"per_seed", per_seed}});
  }
  auto& splits = j["splits"] = nlohmann::json::array();
  for (const auto& s : r.splits) {
    splits.push_back({{"detector", s.detector},
                      {"split", split_name(s.split)},
                      {"years", s.years},
                      {"roc_auc", detail::stat_json(s.roc_auc)},
                      {"pr_auc_in", detail::stat_json(s.pr_auc_in)},
                      {"pr_auc_out", detail::stat_json(s.pr_auc_out)}});
  }
  return j;
}

inline std::string to_text(const EvalReport& r) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-16s %-5s %-22s %-22s %-22s\n", "detector", "split", "roc_auc", "pr_auc_in",
                "pr_auc_out");
  out += buf;
  for (const auto& s : r.splits) {
    std::snprintf(buf, sizeof(buf), "%-16s %-5s %-22s %-22s %-22s\n", s.detector.c_str(),
                  std::string(split_name(s.split)).c_str(), detail::stat_text(s.roc_auc).c_str(),
                  detail::stat_text(s.pr_auc_in).c_str(), detail::stat_text(s.pr_auc_out).c_str());
    out += buf;
  }
  out += "\n";
  std::snprintf(buf, sizeof(buf), "%-16s %-5s %-6s %8s %8s %-22s\n", "detector", "split", "year", "n_in", "n_out",
                "roc_auc");
  out += buf;
  for (const auto& y : r.years) {
    std::snprintf(buf, sizeof(buf), "%-16s %-5s %-6d %8zu %8zu %-22s\n", y.detector.c_str(),
                  std::string(split_name(y.split)).c_str(), y.year, y.n_in, y.n_out,
                  detail::stat_text(y.roc_auc).c_str());
    out += buf;
  }
  return out;
}

inline std::string monthly_csv(const std::vector<MonthRow>& rows) {
  std::string out = "month,n_in,n_out,roc_auc,pr_auc_in,pr_auc_out\n";
  auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : rows) {
    out += r.month.to_string() + "," + std::to_string(r.metrics.n_in) + "," + std::to_string(r.metrics.n_out) +
           "," + cell(r.metrics.roc_auc) + "," + cell(r.metrics.pr_auc_in) + "," + cell(r.metrics.pr_auc_out) +
           "\n";
  }
  return out;
}

}  // namespace anoshift

#endif  // ANOSHIFT_EVALUATE_HPP_
