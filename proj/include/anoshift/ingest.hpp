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

// Delimited-text ingestion in the Kyoto-2006+ preprocessed layout, and the
// synthetic drifting-traffic generator that emits the same layout.

#ifndef ANOSHIFT_INGEST_HPP_
#define ANOSHIFT_INGEST_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anoshift/error.hpp"
#include "anoshift/io.hpp"
#include "anoshift/rng.hpp"
#include "anoshift/schema.hpp"
#include "json.hpp"

namespace anoshift {

enum class ColumnRole { kFeature, kTimestamp, kLabel, kIgnored };

struct Column {
  ColumnRole role = ColumnRole::kIgnored;
  Feature feature = Feature::kDuration;  // meaningful for kFeature only

  bool operator==(const Column&) const = default;
};

struct SchemaDescriptor {
  std::vector<Column> columns;
  char delimiter = '\t';
  bool has_header = false;
  TreatmentTable treatments = default_treatments();

  // Columns 0-13 features, 14 timestamp, 15-17 detector flags, 18 label,
  // 19 protocol.
  static SchemaDescriptor kyoto() {
    SchemaDescriptor s;
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      s.columns.push_back({ColumnRole::kFeature, static_cast<Feature>(i)});
    }
    s.columns.push_back({ColumnRole::kTimestamp});
    for (int i = 0; i < 3; ++i) s.columns.push_back({ColumnRole::kIgnored});
    s.columns.push_back({ColumnRole::kLabel});
    s.columns.push_back({ColumnRole::kIgnored});
    return s;
  }

  void validate() const {
    std::size_t labels = 0, stamps = 0;
    std::array<int, kNumFeatures> seen{};
    for (const auto& c : columns) {
      if (c.role == ColumnRole::kLabel) ++labels;
      if (c.role == ColumnRole::kTimestamp) ++stamps;
      if (c.role == ColumnRole::kFeature) ++seen[static_cast<std::size_t>(c.feature)];
    }
    if (labels != 1) throw Error(ErrorCode::kInvalidSchema, "exactly one label column required");
    if (stamps != 1) {
      throw Error(ErrorCode::kInvalidSchema, "exactly one timestamp column required");
    }
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      if (seen[i] != 1) {
        throw Error(ErrorCode::kInvalidSchema,
                    "feature " + std::string(kFeatureNames[i]) + " must be assigned exactly once");
      }
    }
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      const auto f = static_cast<Feature>(i);
      const bool cat_kind = treatments[i].kind == FeatureKind::kCategorical;
      if (cat_kind != is_categorical(f)) {
        throw Error(ErrorCode::kInvalidSchema,
                    "treatment of " + std::string(kFeatureNames[i]) + " does not fit its value type");
      }
      if (treatments[i].kind == FeatureKind::kCappedCount && !(treatments[i].cap > 0.0)) {
        throw Error(ErrorCode::kInvalidSchema, "capped_count needs cap > 0");
      }
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : columns) {
      switch (c.role) {
        case ColumnRole::kFeature: cols.push_back(std::string(feature_name(c.feature))); break;
        case ColumnRole::kTimestamp: cols.push_back("timestamp"); break;
        case ColumnRole::kLabel: cols.push_back("label"); break;
        case ColumnRole::kIgnored: cols.push_back("ignore"); break;
      }
    }
    nlohmann::json treat = nlohmann::json::object();
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      nlohmann::json t = {{"kind", std::string(feature_kind_name(treatments[i].kind))}};
      if (treatments[i].kind == FeatureKind::kCappedCount) t["cap"] = treatments[i].cap;
      treat[std::string(kFeatureNames[i])] = t;
    }
    return {{"columns", cols},
            {"delimiter", std::string(1, delimiter)},
            {"has_header", has_header},
            {"treatments", treat}};
  }

  // Missing keys fall back to the Kyoto layout.
  static SchemaDescriptor from_json(const nlohmann::json& j) {
    SchemaDescriptor s = kyoto();
    try {
      if (j.contains("columns")) {
        s.columns.clear();
        for (const auto& item : j.at("columns")) {
          const std::string name = item.get<std::string>();
          if (name == "timestamp") {
            s.columns.push_back({ColumnRole::kTimestamp});
          } else if (name == "label") {
            s.columns.push_back({ColumnRole::kLabel});
          } else if (name == "ignore") {
            s.columns.push_back({ColumnRole::kIgnored});
          } else if (auto f = feature_from_name(name)) {
            s.columns.push_back({ColumnRole::kFeature, *f});
          } else {
            throw Error(ErrorCode::kInvalidSchema, "unknown column role '" + name + "'");
          }
        }
      }
      if (j.contains("delimiter")) {
        const std::string d = j.at("delimiter").get<std::string>();
        if (d.size() != 1) throw Error(ErrorCode::kInvalidSchema, "delimiter must be one character");
        s.delimiter = d[0];
      }
      if (j.contains("has_header")) s.has_header = j.at("has_header").get<bool>();
      if (j.contains("treatments")) {
        for (const auto& [name, t] : j.at("treatments").items()) {
          auto f = feature_from_name(name);
          if (!f) throw Error(ErrorCode::kInvalidSchema, "unknown feature '" + name + "'");
          auto kind = feature_kind_from_name(t.at("kind").get<std::string>());
          if (!kind) throw Error(ErrorCode::kInvalidSchema, "unknown treatment for " + name);
          auto& slot = s.treatments[static_cast<std::size_t>(*f)];
          slot.kind = *kind;
          slot.cap = *kind == FeatureKind::kCappedCount ? t.value("cap", 100.0) : 0.0;
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kInvalidSchema, e.what());
    }
    s.validate();
    return s;
  }
};

struct MalformedRow {
  std::size_t line_no = 0;  // 1-based line number in the file
  std::string reason;
};

struct ReadResult {
  std::vector<RawRecord> records;
  std::size_t rows = 0;  // data rows seen, well-formed or not
  std::vector<MalformedRow> malformed;
};

// Parses one data row; returns the failure reason instead of throwing.
inline std::optional<std::string> parse_row(std::string_view line, const SchemaDescriptor& schema,
                                            RawRecord& out) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto fields = split_line(line, schema.delimiter);
  if (fields.size() != schema.columns.size()) {
    return "expected " + std::to_string(schema.columns.size()) + " columns, got " +
           std::to_string(fields.size());
  }
  out = RawRecord{};
  for (std::size_t c = 0; c < fields.size(); ++c) {
    const Column& col = schema.columns[c];
    const std::string_view text = fields[c];
    switch (col.role) {
      case ColumnRole::kIgnored: break;
      case ColumnRole::kTimestamp: {
        auto ts = Timestamp::parse(text);
        if (!ts) return "bad timestamp '" + std::string(text) + "'";
        out.timestamp = *ts;
        break;
      }
      case ColumnRole::kLabel: {
        int code = 0;
        if (!parse_int(text, code)) return "bad label '" + std::string(text) + "'";
        try {
          out.label = label_from_code(code);
        } catch (const Error& e) {
          return e.what();
        }
        break;
      }
      case ColumnRole::kFeature: {
        if (is_categorical(col.feature)) {
          if (text.empty()) return std::string(feature_name(col.feature)) + " is empty";
          out.categorical(col.feature) = std::string(text);
        } else {
          double v = 0.0;
          if (!parse_double(text, v)) {
            return "bad number '" + std::string(text) + "' for " +
                   std::string(feature_name(col.feature));
          }
          out.set_numeric(col.feature, v);
        }
        break;
      }
    }
  }
  return normalize_and_validate(out);
}

struct ReadOptions {
  // Largest tolerated malformed fraction; at least one bad row is always
  // tolerated so tiny files are not failed by a single truncated line.
  double max_malformed_fraction = 0.01;
};

inline ReadResult parse_dataset(std::string_view text, const SchemaDescriptor& schema,
                                const ReadOptions& options = {}) {
  schema.validate();
  ReadResult result;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_pending = schema.has_header;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    ++result.rows;
    RawRecord rec;
    if (auto err = parse_row(line, schema, rec)) {
      result.malformed.push_back({line_no, *err});
    } else {
      result.records.push_back(std::move(rec));
    }
  }
  const auto allowed = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(options.max_malformed_fraction *
                                             static_cast<double>(result.rows))));
  if (result.malformed.size() > allowed) {
    const auto& first = result.malformed.front();
    throw Error(ErrorCode::kMalformedRow,
                std::to_string(result.malformed.size()) + " of " + std::to_string(result.rows) +
                    " rows malformed (first at line " + std::to_string(first.line_no) + ": " +
                    first.reason + ")");
  }
  return result;
}

inline ReadResult read_dataset(const std::filesystem::path& path, const SchemaDescriptor& schema,
                               const ReadOptions& options = {}) {
  return parse_dataset(read_file(path), schema, options);
}

inline std::string format_dataset(std::span<const RawRecord> records,
                                  const SchemaDescriptor& schema) {
  schema.validate();
  std::string out;
  const char d = schema.delimiter;
  if (schema.has_header) {
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      if (c) out += d;
      const Column& col = schema.columns[c];
      switch (col.role) {
        case ColumnRole::kFeature: out += feature_name(col.feature); break;
        case ColumnRole::kTimestamp: out += "timestamp"; break;
        case ColumnRole::kLabel: out += "label"; break;
        case ColumnRole::kIgnored: out += "ignore"; break;
      }
    }
    out += '\n';
  }
  for (const RawRecord& r : records) {
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      if (c) out += d;
      const Column& col = schema.columns[c];
      switch (col.role) {
        case ColumnRole::kIgnored: out += '0'; break;
        case ColumnRole::kTimestamp: out += r.timestamp.to_string(); break;
        case ColumnRole::kLabel: out += std::to_string(r.label.raw_code); break;
        case ColumnRole::kFeature:
          if (is_categorical(col.feature)) {
            out += r.categorical(col.feature);
          } else {
            out += format_double(r.numeric(col.feature));
          }
          break;
      }
    }
    out += '\n';
  }
  return out;
}

inline void write_dataset(const std::filesystem::path& path, std::span<const RawRecord> records,
                          const SchemaDescriptor& schema) {
  write_file_atomic(path, format_dataset(records, schema));
}

// ---------------------------------------------------------------------------
// Synthetic drifting traffic.

struct SyntheticConfig {
  int n_years = 6;
  int start_year = 2006;
  int months_per_year = 12;
  int normals_per_month = 1000;
  std::vector<double> anomaly_ratio_per_year;  // empty means 0.5 every year
  double drift_rate = 0.2;
  int swap_year = 5;  // year index; >= n_years disables the swap
  std::uint64_t seed = 0;

  std::vector<double> ratios() const {
    if (anomaly_ratio_per_year.empty()) return std::vector<double>(static_cast<std::size_t>(n_years), 0.5);
    return anomaly_ratio_per_year;
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidConfig, m); };
    if (n_years < 2) fail("n_years must be >= 2");
    if (months_per_year < 1 || months_per_year > 12) fail("months_per_year must be in [1,12]");
    if (normals_per_month < 1) fail("normals_per_month must be >= 1");
    const auto r = ratios();
    if (r.size() != static_cast<std::size_t>(n_years)) {
      fail("anomaly_ratio_per_year must have n_years entries");
    }
    for (double v : r) {
      if (!(v > 0.0 && v < 1.0)) fail("anomaly ratios must lie in (0,1)");
    }
    if (!(drift_rate >= 0.0) || !std::isfinite(drift_rate)) fail("drift_rate must be >= 0");
    if (swap_year < 0) fail("swap_year must be >= 0");
  }

  nlohmann::json to_json() const {
    return {{"n_years", n_years},
            {"start_year", start_year},
            {"months_per_year", months_per_year},
            {"normals_per_month", normals_per_month},
            {"anomaly_ratio_per_year", ratios()},
            {"drift_rate", drift_rate},
            {"swap_year", swap_year},
            {"seed", seed}};
  }

  static SyntheticConfig from_json(const nlohmann::json& j) {
    SyntheticConfig c;
    try {
      c.n_years = j.value("n_years", c.n_years);
      c.start_year = j.value("start_year", c.start_year);
      c.months_per_year = j.value("months_per_year", c.months_per_year);
      c.normals_per_month = j.value("normals_per_month", c.normals_per_month);
      c.anomaly_ratio_per_year =
          j.value("anomaly_ratio_per_year", c.anomaly_ratio_per_year);
      c.drift_rate = j.value("drift_rate", c.drift_rate);
      c.swap_year = j.value("swap_year", c.swap_year);
      c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kInvalidConfig, e.what());
    }
    return c;
  }
};

namespace synthetic {

inline const std::vector<std::string>& services() {
  static const std::vector<std::string> kServices = {"http", "dns",  "smtp", "ssh",
                                                     "ftp-data", "snmp", "sip",  "other"};
  return kServices;
}

inline const std::vector<std::string>& flags() {
  static const std::vector<std::string> kFlags = {"SF", "S0", "REJ", "RSTO", "SH", "OTH"};
  return kFlags;
}

// Parameters of one traffic class. Numerics are Gaussian in a transformed
// space: log1p for durations, bytes and counts; logit for rates.
struct Profile {
  std::vector<double> service_w;
  std::vector<double> flag_w;
  std::array<double, kNumFeatures> mu{};
  std::array<double, kNumFeatures> sigma{};
  // Sign and strength of the service/flag dependence of the numerics:
  // +1 for normal traffic, -1 (reversed pairing) for anomalies.
  double coupling = 1.0;
};

inline Profile lerp(const Profile& a, const Profile& b, double t) {
  Profile p = a;
  for (std::size_t i = 0; i < p.service_w.size(); ++i) {
    p.service_w[i] = (1 - t) * a.service_w[i] + t * b.service_w[i];
  }
  for (std::size_t i = 0; i < p.flag_w.size(); ++i) {
    p.flag_w[i] = (1 - t) * a.flag_w[i] + t * b.flag_w[i];
  }
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    p.mu[i] = (1 - t) * a.mu[i] + t * b.mu[i];
    p.sigma[i] = (1 - t) * a.sigma[i] + t * b.sigma[i];
  }
  p.coupling = (1 - t) * a.coupling + t * b.coupling;
  return p;
}

inline Profile make_profile(std::vector<double> service_w, std::vector<double> flag_w,
                            std::array<std::pair<double, double>, 12> numerics, double coupling = 1.0) {
  Profile p{std::move(service_w), std::move(flag_w), {}, {}, coupling};
  std::size_t k = 0;
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    if (is_categorical(static_cast<Feature>(i))) continue;
    p.mu[i] = numerics[k].first;
    p.sigma[i] = numerics[k].second;
    ++k;
  }
  return p;
}

// Numeric order: duration, src_bytes, dst_bytes, count, same_srv_rate,
// serror_rate, srv_serror_rate, dst_host_count, dst_host_srv_count,
// dst_host_same_src_port_rate, dst_host_serror_rate, dst_host_srv_serror_rate.
inline Profile normal_start() {
  return make_profile({0.45, 0.05, 0.20, 0.05, 0.05, 0.05, 0.05, 0.10},
                      {0.85, 0.03, 0.04, 0.04, 0.02, 0.02},
                      {{{0.5, 1.0}, {6.0, 1.2}, {7.5, 1.5}, {1.5, 0.8}, {1.5, 1.0}, {-4.0, 1.0},
                        {-4.0, 1.0}, {2.5, 1.0}, {3.0, 1.0}, {-2.0, 1.0}, {-4.0, 1.0},
                        {-4.0, 1.0}}});
}

inline Profile normal_end() {
  return make_profile({0.10, 0.45, 0.10, 0.05, 0.02, 0.08, 0.10, 0.10},
                      {0.60, 0.10, 0.10, 0.10, 0.05, 0.05},
                      {{{0.1, 0.5}, {4.0, 1.0}, {5.0, 1.2}, {3.0, 0.8}, {0.0, 1.0}, {-2.0, 1.0},
                        {-2.0, 1.0}, {4.0, 0.6}, {1.5, 1.0}, {0.5, 1.0}, {-2.0, 1.0},
                        {-2.0, 1.0}}});
}

inline Profile anomaly_base() {
  return make_profile({0.25, 0.10, 0.10, 0.15, 0.05, 0.05, 0.05, 0.25},
                      {0.45, 0.25, 0.15, 0.08, 0.05, 0.02},
                      {{{0.2, 0.6}, {4.0, 1.5}, {5.0, 2.0}, {2.5, 0.9}, {0.5, 1.2}, {-1.5, 1.5},
                        {-1.5, 1.5}, {3.5, 0.8}, {2.0, 1.2}, {0.0, 1.2}, {-1.5, 1.5},
                        {-1.5, 1.5}}},
                      -1.0);
}

inline Profile normal_profile(const SyntheticConfig& c, int year_index) {
  const double t = std::min(1.0, year_index * c.drift_rate);
  return lerp(normal_start(), normal_end(), t);
}

// Before the swap year anomalies keep their own profile; from the swap year
// on they converge geometrically toward the year-0 normal profile.
inline Profile anomaly_profile(const SyntheticConfig& c, int year_index) {
  if (year_index < c.swap_year) return anomaly_base();
  const double t = 1.0 - std::pow(0.25, year_index - c.swap_year + 1);
  return lerp(anomaly_base(), normal_start(), t);
}

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Per-service shift of a numeric feature, in units of its sigma.
inline double service_offset(std::size_t service, std::size_t feature) {
  return 0.4 * (static_cast<double>((service * 5 + feature * 3) % 7) - 3.0);
}

inline bool is_error_rate(Feature f) {
  return f == Feature::kSerrorRate || f == Feature::kSrvSerrorRate || f == Feature::kDstHostSerrorRate ||
         f == Feature::kDstHostSrvSerrorRate;
}

inline RawRecord sample_record(const Profile& p, Rng& rng) {
  RawRecord r;
  const std::size_t service = rng.categorical(p.service_w);
  const std::size_t flag = rng.categorical(p.flag_w);
  r.service = services()[service];
  r.flag = flags()[flag];
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    const auto f = static_cast<Feature>(i);
    if (is_categorical(f)) continue;
    // Anything but SF pushes error rates up (down when coupling < 0).
    double shift = service_offset(service, i);
    if (is_error_rate(f)) shift += flag == 0 ? -0.8 : 1.6;
    const double z = p.mu[i] + p.sigma[i] * (p.coupling * shift + 0.7 * rng.normal());
    double v = 0.0;
    switch (value_type(f)) {
      case ValueType::kReal:
        v = std::round(std::max(0.0, std::expm1(std::min(z, 20.0))) * 1000.0) / 1000.0;
        break;
      case ValueType::kInteger: {
        double cap = 1e9;
        if (f == Feature::kCount) cap = 500.0;
        if (f == Feature::kDstHostCount || f == Feature::kDstHostSrvCount) cap = 100.0;
        v = std::round(std::clamp(std::expm1(std::min(z, 25.0)), 0.0, cap));
        break;
      }
      case ValueType::kRate: v = std::round(logistic(z) * 100.0) / 100.0; break;
      case ValueType::kCategorical: break;
    }
    r.set_numeric(f, v);
  }
  return r;
}

inline Timestamp random_time_in_month(int year, int month, Rng& rng) {
  Timestamp ts;
  ts.year = year;
  ts.month = month;
  ts.day = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(days_in_month(year, month))));
  const auto sec = static_cast<int>(rng.below(86400));
  ts.hour = sec / 3600;
  ts.minute = (sec / 60) % 60;
  ts.second = sec % 60;
  return ts;
}

}  // namespace synthetic

// Anomaly count for a year holding `normals` normal records at `ratio`.
inline std::size_t anomalies_for_ratio(std::size_t normals, double ratio) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(normals) * ratio / (1.0 - ratio)));
}

inline std::vector<RawRecord> generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const auto ratios = config.ratios();
  std::vector<RawRecord> out;
  for (int y = 0; y < config.n_years; ++y) {
    const int year = config.start_year + y;
    const auto normal = synthetic::normal_profile(config, y);
    const auto anomaly = synthetic::anomaly_profile(config, y);
    const auto months = static_cast<std::size_t>(config.months_per_year);
    const auto normals_year = months * static_cast<std::size_t>(config.normals_per_month);
    const std::size_t anomalies_year = anomalies_for_ratio(normals_year, ratios[static_cast<std::size_t>(y)]);
    for (std::size_t m = 0; m < months; ++m) {
      const std::size_t n_anom = anomalies_year / months + (m < anomalies_year % months ? 1 : 0);
      std::vector<RawRecord> month_records;
      month_records.reserve(static_cast<std::size_t>(config.normals_per_month) + n_anom);
      for (int i = 0; i < config.normals_per_month; ++i) {
        RawRecord r = synthetic::sample_record(normal, rng);
        r.label = label_from_code(1);
        r.timestamp = synthetic::random_time_in_month(year, static_cast<int>(m) + 1, rng);
        month_records.push_back(std::move(r));
      }
      for (std::size_t i = 0; i < n_anom; ++i) {
        RawRecord r = synthetic::sample_record(anomaly, rng);
        r.label = label_from_code(rng.bernoulli(0.2) ? -2 : -1);
        r.timestamp = synthetic::random_time_in_month(year, static_cast<int>(m) + 1, rng);
        month_records.push_back(std::move(r));
      }
      std::stable_sort(month_records.begin(), month_records.end(),
                       [](const RawRecord& a, const RawRecord& b) { return a.timestamp < b.timestamp; });
      for (auto& r : month_records) out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace anoshift

#endif  // ANOSHIFT_INGEST_HPP_
