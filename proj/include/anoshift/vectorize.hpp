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

#ifndef ANOSHIFT_VECTORIZE_HPP_
#define ANOSHIFT_VECTORIZE_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "anoshift/error.hpp"
#include "anoshift/schema.hpp"
#include "anoshift/tokenize.hpp"
#include "json.hpp"

namespace anoshift {

enum class VectorMode {
  kOneHot,      // every token position one-hot encoded
  kRawNumeric,  // the 12 numerics unbinned, categoricals one-hot
};

inline std::string_view vector_mode_name(VectorMode m) {
  return m == VectorMode::kOneHot ? "one_hot" : "raw_numeric";
}

inline VectorMode vector_mode_from_name(std::string_view s) {
  if (s == "one_hot") return VectorMode::kOneHot;
  if (s == "raw_numeric") return VectorMode::kRawNumeric;
  throw Error(ErrorCode::kInvalidConfig, "unknown vector mode '" + std::string(s) + "'");
}

// Maps records to standardized real vectors. One-hot columns exist for every
// token seen at fit time plus one "unseen" column per position; mean and
// standard deviation come from the fit records (zero-variance columns are
// only centered).
class FeatureVectorizer {
 public:
  FeatureVectorizer() = default;
  FeatureVectorizer(VectorMode mode, TreatmentTable treatments = default_treatments())
      : mode_(mode), treatments_(treatments) {}

  VectorMode mode() const { return mode_; }
  bool fitted() const { return !mean_.empty(); }
  std::size_t dimension() const { return mean_.size(); }

  void fit(std::span<const RawRecord> records) {
    if (records.empty()) throw Error(ErrorCode::kEmptyInput, "vectorizer fit on no records");
    columns_.clear();
    column_of_.clear();
    for (std::size_t p = 0; p < kNumFeatures; ++p) {
      if (!one_hot_position(p)) {
        column_of_["f" + std::to_string(p) + ":value"] = columns_.size();
        columns_.push_back("f" + std::to_string(p) + ":value");
        continue;
      }
      std::set<std::string> seen;
      for (const auto& r : records) seen.insert(token_at(r, p));
      for (const auto& t : seen) {
        column_of_[t] = columns_.size();
        columns_.push_back(t);
      }
      column_of_[unseen_column(p)] = columns_.size();
      columns_.push_back(unseen_column(p));
    }
    mean_.assign(columns_.size(), 0.0);
    scale_.assign(columns_.size(), 1.0);
    Eigen::MatrixXd raw = assemble(records);
    const double n = static_cast<double>(records.size());
    for (Eigen::Index c = 0; c < raw.cols(); ++c) {
      const auto k = static_cast<std::size_t>(c);
      if (!columns_[k].ends_with(":value")) {
        // Indicator columns use add-one smoothed frequencies, so an unseen
        // token lands farther out than the rarest seen one.
        const double p = (raw.col(c).sum() + 1.0) / (n + 2.0);
        mean_[k] = p;
        scale_[k] = std::sqrt(p * (1.0 - p));
        continue;
      }
      const double m = raw.col(c).mean();
      const double var = (raw.col(c).array() - m).square().sum() / n;
      mean_[k] = m;
      scale_[k] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
  }

  Eigen::MatrixXd transform(std::span<const RawRecord> records) const {
    if (!fitted()) throw Error(ErrorCode::kNotFitted, "vectorizer used before fit");
    Eigen::MatrixXd x = assemble(records);
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      x.col(c) = (x.col(c).array() - mean_[static_cast<std::size_t>(c)]) /
                 scale_[static_cast<std::size_t>(c)];
    }
    return x;
  }

  nlohmann::json to_json() const {
    return {{"mode", std::string(vector_mode_name(mode_))},
            {"columns", columns_},
            {"mean", mean_},
            {"scale", scale_},
            {"treatments", treatments_json()}};
  }

  static FeatureVectorizer from_json(const nlohmann::json& j) {
    FeatureVectorizer v;
    try {
      v.mode_ = vector_mode_from_name(j.at("mode").get<std::string>());
      v.columns_ = j.at("columns").get<std::vector<std::string>>();
      v.mean_ = j.at("mean").get<std::vector<double>>();
      v.scale_ = j.at("scale").get<std::vector<double>>();
      const auto& t = j.at("treatments");
      for (std::size_t i = 0; i < kNumFeatures; ++i) {
        v.treatments_[i].kind = *feature_kind_from_name(t.at(i).at("kind").get<std::string>());
        v.treatments_[i].cap = t.at(i).at("cap").get<double>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kFormat, std::string("bad vectorizer state: ") + e.what());
    }
    for (std::size_t c = 0; c < v.columns_.size(); ++c) v.column_of_[v.columns_[c]] = c;
    return v;
  }

 private:
  bool one_hot_position(std::size_t p) const {
    return mode_ == VectorMode::kOneHot || is_categorical(static_cast<Feature>(p));
  }

  std::string token_at(const RawRecord& r, std::size_t p) const {
    return feature_token(p, r, treatments_[p]);
  }

  static std::string unseen_column(std::size_t p) { return "f" + std::to_string(p) + ":<unseen>"; }

  Eigen::MatrixXd assemble(std::span<const RawRecord> records) const {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(records.size()),
                                              static_cast<Eigen::Index>(columns_.size()));
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      for (std::size_t p = 0; p < kNumFeatures; ++p) {
        std::size_t col;
        double value = 1.0;
        if (one_hot_position(p)) {
          auto it = column_of_.find(token_at(r, p));
          col = it != column_of_.end() ? it->second : column_of_.at(unseen_column(p));
        } else {
          col = column_of_.at("f" + std::to_string(p) + ":value");
          value = r.numeric(static_cast<Feature>(p));
        }
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col)) = value;
      }
    }
    return x;
  }

  nlohmann::json treatments_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& t : treatments_) {
      out.push_back({{"kind", std::string(feature_kind_name(t.kind))}, {"cap", t.cap}});
    }
    return out;
  }

  VectorMode mode_ = VectorMode::kOneHot;
  TreatmentTable treatments_ = default_treatments();
  std::vector<std::string> columns_;
  std::map<std::string, std::size_t> column_of_;
  std::vector<double> mean_;
  std::vector<double> scale_;
};

}  // namespace anoshift

#endif  // ANOSHIFT_VECTORIZE_HPP_
