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

// Record model shared by every stage: the 14 conventional Kyoto-2006+
// connection features, the calendar timestamp and the label.

#ifndef ANOSHIFT_SCHEMA_HPP_
#define ANOSHIFT_SCHEMA_HPP_

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "anoshift/error.hpp"

namespace anoshift {

enum class LabelClass { kNormal, kAnomaly };

struct Label {
  LabelClass cls = LabelClass::kNormal;
  int raw_code = 1;

  bool is_anomaly() const { return cls == LabelClass::kAnomaly; }
  bool operator==(const Label&) const = default;
};

// Kyoto convention: 1 is normal traffic, -1 (known attack) and -2 (unknown
// attack) are both anomalies.
inline Label label_from_code(int code) {
  switch (code) {
    case 1: return {LabelClass::kNormal, code};
    case -1:
    case -2: return {LabelClass::kAnomaly, code};
    default:
      throw Error(ErrorCode::kUnknownLabelCode,
                  "label code " + std::to_string(code) + " is not one of {1,-1,-2}");
  }
}

struct YearMonth {
  int year = 0;
  int month = 1;

  auto operator<=>(const YearMonth&) const = default;

  std::string to_string() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d", year, month);
    return buf;
  }
};

inline bool is_leap_year(int year) {
  return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
}

inline int days_in_month(int year, int month) {
  static constexpr std::array<int, 12> kDays = {31, 28, 31, 30, 31, 30,
                                                31, 31, 30, 31, 30, 31};
  if (month == 2 && is_leap_year(year)) return 29;
  return kDays[static_cast<std::size_t>(month - 1)];
}

struct Timestamp {
  int year = 2006;
  int month = 1;
  int day = 1;
  int hour = 0;
  int minute = 0;
  int second = 0;

  auto operator<=>(const Timestamp&) const = default;

  YearMonth year_month() const { return {year, month}; }

  // Canonical form "YYYY-MM-DD HH:MM:SS".
  std::string to_string() const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d %02d:%02d:%02d", year, month,
                  day, hour, minute, second);
    return buf;
  }

  // Accepts "YYYY-MM-DD", "YYYY-MM-DD HH:MM:SS" and "YYYY-MM-DDTHH:MM:SS".
  static std::optional<Timestamp> parse(std::string_view text) {
    auto num = [&](std::size_t pos, std::size_t len, int& out) {
      if (pos + len > text.size()) return false;
      for (std::size_t i = pos; i < pos + len; ++i) {
        if (text[i] < '0' || text[i] > '9') return false;
      }
      auto res = std::from_chars(text.data() + pos, text.data() + pos + len, out);
      return res.ec == std::errc();
    };
    Timestamp ts;
    if (text.size() != 10 && text.size() != 19) return std::nullopt;
    if (!num(0, 4, ts.year) || text[4] != '-' || !num(5, 2, ts.month) ||
        text[7] != '-' || !num(8, 2, ts.day)) {
      return std::nullopt;
    }
    if (text.size() == 19) {
      if ((text[10] != ' ' && text[10] != 'T') || !num(11, 2, ts.hour) ||
          text[13] != ':' || !num(14, 2, ts.minute) || text[16] != ':' ||
          !num(17, 2, ts.second)) {
        return std::nullopt;
      }
    }
    if (ts.month < 1 || ts.month > 12) return std::nullopt;
    if (ts.day < 1 || ts.day > days_in_month(ts.year, ts.month)) return std::nullopt;
    if (ts.hour > 23 || ts.minute > 59 || ts.second > 59) return std::nullopt;
    return ts;
  }
};

// Canonical feature order (the Kyoto conventional-feature order).
enum class Feature : std::size_t {
  kDuration = 0,
  kService,
  kSrcBytes,
  kDstBytes,
  kCount,
  kSameSrvRate,
  kSerrorRate,
  kSrvSerrorRate,
  kDstHostCount,
  kDstHostSrvCount,
  kDstHostSameSrcPortRate,
  kDstHostSerrorRate,
  kDstHostSrvSerrorRate,
  kFlag,
};

inline constexpr std::size_t kNumFeatures = 14;

inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "duration",
    "service",
    "src_bytes",
    "dst_bytes",
    "count",
    "same_srv_rate",
    "serror_rate",
    "srv_serror_rate",
    "dst_host_count",
    "dst_host_srv_count",
    "dst_host_same_src_port_rate",
    "dst_host_serror_rate",
    "dst_host_srv_serror_rate",
    "flag",
};

inline std::string_view feature_name(Feature f) {
  return kFeatureNames[static_cast<std::size_t>(f)];
}

inline std::optional<Feature> feature_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    if (kFeatureNames[i] == name) return static_cast<Feature>(i);
  }
  return std::nullopt;
}

// What the raw value of a feature is.
enum class ValueType { kCategorical, kReal, kInteger, kRate };

inline constexpr std::array<ValueType, kNumFeatures> kValueTypes = {
    ValueType::kReal,     ValueType::kCategorical, ValueType::kInteger,
    ValueType::kInteger,  ValueType::kInteger,     ValueType::kRate,
    ValueType::kRate,     ValueType::kRate,        ValueType::kInteger,
    ValueType::kInteger,  ValueType::kRate,        ValueType::kRate,
    ValueType::kRate,     ValueType::kCategorical,
};

inline ValueType value_type(Feature f) {
  return kValueTypes[static_cast<std::size_t>(f)];
}

inline bool is_categorical(Feature f) {
  return value_type(f) == ValueType::kCategorical;
}

// How a feature becomes a token.
enum class FeatureKind {
  kCategorical,  // passed through as its string value
  kExpBinned,    // exponential bins, basis 1.1
  kPercentage,   // rate in [0,1] discretized to 100 values
  kCappedCount,  // integer count capped at `cap`, then handled as a percentage
};

struct FeatureTreatment {
  FeatureKind kind = FeatureKind::kPercentage;
  double cap = 100.0;

  bool operator==(const FeatureTreatment&) const = default;
};

using TreatmentTable = std::array<FeatureTreatment, kNumFeatures>;

// Three unbounded numerics are binned; the nine remaining numerics carry
// 100 values each (Kyoto host counts saturate at 100).
inline TreatmentTable default_treatments() {
  TreatmentTable t{};
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    switch (kValueTypes[i]) {
      case ValueType::kCategorical: t[i] = {FeatureKind::kCategorical, 0.0}; break;
      case ValueType::kRate: t[i] = {FeatureKind::kPercentage, 0.0}; break;
      case ValueType::kInteger: t[i] = {FeatureKind::kCappedCount, 100.0}; break;
      case ValueType::kReal: t[i] = {FeatureKind::kExpBinned, 0.0}; break;
    }
  }
  t[static_cast<std::size_t>(Feature::kSrcBytes)] = {FeatureKind::kExpBinned, 0.0};
  t[static_cast<std::size_t>(Feature::kDstBytes)] = {FeatureKind::kExpBinned, 0.0};
  return t;
}

inline std::string_view feature_kind_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::kCategorical: return "categorical";
    case FeatureKind::kExpBinned: return "exp_binned";
    case FeatureKind::kPercentage: return "percentage";
    case FeatureKind::kCappedCount: return "capped_count";
  }
  return "?";
}

inline std::optional<FeatureKind> feature_kind_from_name(std::string_view s) {
  if (s == "categorical") return FeatureKind::kCategorical;
  if (s == "exp_binned") return FeatureKind::kExpBinned;
  if (s == "percentage") return FeatureKind::kPercentage;
  if (s == "capped_count") return FeatureKind::kCappedCount;
  return std::nullopt;
}

struct RawRecord {
  double duration = 0.0;
  std::string service;
  double src_bytes = 0.0;
  double dst_bytes = 0.0;
  double count = 0.0;
  double same_srv_rate = 0.0;
  double serror_rate = 0.0;
  double srv_serror_rate = 0.0;
  double dst_host_count = 0.0;
  double dst_host_srv_count = 0.0;
  double dst_host_same_src_port_rate = 0.0;
  double dst_host_serror_rate = 0.0;
  double dst_host_srv_serror_rate = 0.0;
  std::string flag;
  Timestamp timestamp;
  Label label;

  bool operator==(const RawRecord&) const = default;

  // Numeric feature by position; categorical positions are a logic error.
  double numeric(Feature f) const { return *numeric_slot(const_cast<RawRecord*>(this), f); }
  void set_numeric(Feature f, double v) { *numeric_slot(this, f) = v; }

  const std::string& categorical(Feature f) const {
    return f == Feature::kService ? service : flag;
  }
  std::string& categorical(Feature f) { return f == Feature::kService ? service : flag; }

 private:
  static double* numeric_slot(RawRecord* r, Feature f) {
    switch (f) {
      case Feature::kDuration: return &r->duration;
      case Feature::kSrcBytes: return &r->src_bytes;
      case Feature::kDstBytes: return &r->dst_bytes;
      case Feature::kCount: return &r->count;
      case Feature::kSameSrvRate: return &r->same_srv_rate;
      case Feature::kSerrorRate: return &r->serror_rate;
      case Feature::kSrvSerrorRate: return &r->srv_serror_rate;
      case Feature::kDstHostCount: return &r->dst_host_count;
      case Feature::kDstHostSrvCount: return &r->dst_host_srv_count;
      case Feature::kDstHostSameSrcPortRate: return &r->dst_host_same_src_port_rate;
      case Feature::kDstHostSerrorRate: return &r->dst_host_serror_rate;
      case Feature::kDstHostSrvSerrorRate: return &r->dst_host_srv_serror_rate;
      case Feature::kService:
      case Feature::kFlag: break;
    }
    throw std::logic_error("numeric access to categorical feature");
  }
};

// Rates parsed slightly outside [0,1] (source rounding) are clamped; anything
// further out is an invalid record.
inline constexpr double kRateSlack = 1e-3;

// Checks the field invariants and normalizes rates in place. Returns an
// explanation on failure.
inline std::optional<std::string> normalize_and_validate(RawRecord& r) {
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    const auto f = static_cast<Feature>(i);
    switch (kValueTypes[i]) {
      case ValueType::kCategorical:
        if (r.categorical(f).empty()) {
          return std::string(kFeatureNames[i]) + " is empty";
        }
        break;
      case ValueType::kReal:
      case ValueType::kInteger: {
        const double v = r.numeric(f);
        if (!std::isfinite(v) || v < 0.0) {
          return std::string(kFeatureNames[i]) + " must be finite and >= 0";
        }
        if (kValueTypes[i] == ValueType::kInteger && v != std::floor(v)) {
          return std::string(kFeatureNames[i]) + " must be an integer";
        }
        break;
      }
      case ValueType::kRate: {
        double v = r.numeric(f);
        if (!std::isfinite(v) || v < -kRateSlack || v > 1.0 + kRateSlack) {
          return std::string(kFeatureNames[i]) + " must be a rate in [0,1]";
        }
        r.set_numeric(f, std::clamp(v, 0.0, 1.0));
        break;
      }
    }
  }
  return std::nullopt;
}

}  // namespace anoshift

#endif  // ANOSHIFT_SCHEMA_HPP_
