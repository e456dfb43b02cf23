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

#ifndef ANOSHIFT_METRICS_HPP_
#define ANOSHIFT_METRICS_HPP_

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "anoshift/error.hpp"

namespace anoshift {

enum class PositiveClass { kInlier, kOutlier };

namespace detail {

template <class Labels>
std::size_t count_anomalies(std::span<const double> scores, const Labels& is_anomaly) {
  if (scores.size() != std::size(is_anomaly)) {
    throw Error(ErrorCode::kInvalidConfig, "scores and labels differ in length");
  }
  std::size_t n = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) n += static_cast<bool>(is_anomaly[i]);
  return n;
}

inline std::vector<std::size_t> order_by_score(std::span<const double> scores, bool descending) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return idx;
}

}  // namespace detail

// Mann-Whitney form: P(anomaly outscores normal) + 0.5 P(tie), via mid-ranks
// over one sort. Higher scores mean more anomalous.
template <class Labels>
double roc_auc(std::span<const double> scores, const Labels& is_anomaly) {
  const std::size_t n_anom = detail::count_anomalies(scores, is_anomaly);
  const std::size_t n_norm = scores.size() - n_anom;
  if (n_anom == 0 || n_norm == 0) throw Error(ErrorCode::kSingleClass, "roc_auc needs both classes");
  const auto idx = detail::order_by_score(scores, false);
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    std::size_t anomalies_in_group = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      anomalies_in_group += static_cast<bool>(is_anomaly[idx[j]]);
      ++j;
    }
    // Ranks i+1..j share the mid-rank.
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += mid_rank * static_cast<double>(anomalies_in_group);
    i = j;
  }
  const double na = static_cast<double>(n_anom);
  return (rank_sum - na * (na + 1.0) / 2.0) / (na * static_cast<double>(n_norm));
}

// Average precision: sum over distinct thresholds of (recall step) x
// precision. For the inlier class, scores are negated so that low anomaly
// scores rank first.
template <class Labels>
double pr_auc(std::span<const double> scores, const Labels& is_anomaly, PositiveClass positive) {
  const std::size_t n_anom = detail::count_anomalies(scores, is_anomaly);
  const bool outlier = positive == PositiveClass::kOutlier;
  const std::size_t n_pos = outlier ? n_anom : scores.size() - n_anom;
  if (n_pos == 0) throw Error(ErrorCode::kSingleClass, "pr_auc needs the positive class");
  std::vector<double> s(scores.begin(), scores.end());
  if (!outlier) {
    for (auto& v : s) v = -v;
  }
  const auto idx = detail::order_by_score(s, true);
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, seen = 0, i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && s[idx[j]] == s[idx[i]]) {
      const bool is_pos = static_cast<bool>(is_anomaly[idx[j]]) == outlier;
      tp += is_pos;
      ++seen;
      ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

}  // namespace anoshift

#endif  // ANOSHIFT_METRICS_HPP_
