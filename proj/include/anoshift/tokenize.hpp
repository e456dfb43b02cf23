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

// Record -> fixed-length token sequence. Unbounded numerics fall into
// exponentially widening bins, rates into 100 buckets, categoricals pass
// through. Every token is namespaced by feature position ("f2:bin17").

#ifndef ANOSHIFT_TOKENIZE_HPP_
#define ANOSHIFT_TOKENIZE_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "anoshift/error.hpp"
#include "anoshift/hash.hpp"
#include "anoshift/io.hpp"
#include "anoshift/schema.hpp"

namespace anoshift {

inline constexpr double kDefaultBinBasis = 1.1;
inline constexpr int kNumExpBins = 233;
inline constexpr int kNumPercentageValues = 100;

// Lower edges basis^i - 1 for i in [0, kNumExpBins], powers accumulated by
// repeated multiplication so edges are identical on every platform.
inline std::array<double, kNumExpBins + 1> exp_bin_edges(double basis) {
  std::array<double, kNumExpBins + 1> edges{};
  double power = 1.0;
  for (int i = 0; i <= kNumExpBins; ++i) {
    edges[static_cast<std::size_t>(i)] = power - 1.0;
    power *= basis;
  }
  return edges;
}

inline const std::array<double, kNumExpBins + 1>& default_bin_edges() {
  static const auto kEdges = exp_bin_edges(kDefaultBinBasis);
  return kEdges;
}

inline int bin_index(double x, const std::array<double, kNumExpBins + 1>& edges, double basis) {
  if (!(x >= 0.0)) throw Error(ErrorCode::kNegativeInput, "bin_index of negative or NaN value");
  constexpr int kLast = kNumExpBins - 1;
  double guess = std::floor(std::log1p(x) / std::log(basis));
  int i = guess >= kLast ? kLast : static_cast<int>(std::max(0.0, guess));
  // The logarithm can land one off at an edge; settle against exact edges.
  while (i > 0 && x < edges[static_cast<std::size_t>(i)]) --i;
  while (i < kLast && x >= edges[static_cast<std::size_t>(i + 1)]) ++i;
  return i;
}

inline int bin_index(double x, double basis = kDefaultBinBasis) {
  if (basis == kDefaultBinBasis) return bin_index(x, default_bin_edges(), basis);
  if (!(basis > 1.0)) throw Error(ErrorCode::kInvalidConfig, "bin basis must be > 1");
  return bin_index(x, exp_bin_edges(basis), basis);
}

// floor(100 x) with x clamped to [0,1] and 1.0 folded into the top bucket.
// The 1e-9 nudge keeps decimal inputs such as 0.57 (0.5699999...) in their
// intended bucket.
inline int discretize_percentage(double x) {
  if (!(x >= 0.0)) x = 0.0;
  x = std::min(x, 1.0);
  const int v = static_cast<int>(std::floor(x * kNumPercentageValues + 1e-9));
  return std::min(v, kNumPercentageValues - 1);
}

inline std::string feature_token(std::size_t position, const RawRecord& r,
                                 const FeatureTreatment& t) {
  const auto f = static_cast<Feature>(position);
  std::string prefix = "f" + std::to_string(position) + ":";
  switch (t.kind) {
    case FeatureKind::kCategorical: return prefix + r.categorical(f);
    case FeatureKind::kExpBinned: return prefix + "bin" + std::to_string(bin_index(r.numeric(f)));
    case FeatureKind::kPercentage:
      return prefix + "pct" + std::to_string(discretize_percentage(r.numeric(f)));
    case FeatureKind::kCappedCount:
      return prefix + "pct" +
             std::to_string(discretize_percentage(std::min(r.numeric(f), t.cap) / t.cap));
  }
  return prefix;
}

inline std::array<std::string, kNumFeatures> record_tokens(const RawRecord& r,
                                                           const TreatmentTable& table) {
  std::array<std::string, kNumFeatures> out;
  for (std::size_t i = 0; i < kNumFeatures; ++i) out[i] = feature_token(i, r, table[i]);
  return out;
}

using TokenId = std::uint32_t;

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kMask = 2;
  static constexpr std::size_t kNumSpecial = 3;

  Vocabulary() : id_to_token_{"[PAD]", "[UNK]", "[MASK]"} {
    for (TokenId i = 0; i < kNumSpecial; ++i) token_to_id_[id_to_token_[i]] = i;
  }

  // Ids are assigned in sorted token order after the specials.
  static Vocabulary from_tokens(const std::set<std::string>& tokens) {
    Vocabulary v;
    for (const auto& t : tokens) v.add(t);
    return v;
  }

  std::size_t size() const { return id_to_token_.size(); }

  TokenId id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

  const std::string& token(TokenId id) const { return id_to_token_.at(id); }

  bool operator==(const Vocabulary& o) const { return id_to_token_ == o.id_to_token_; }

  // "token<TAB>id" per line, ids ascending.
  std::string serialize() const {
    std::string out;
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
      out += id_to_token_[i];
      out += '\t';
      out += std::to_string(i);
      out += '\n';
    }
    return out;
  }

  std::uint64_t fingerprint() const { return fnv1a64(serialize()); }

  static Vocabulary parse(std::string_view text) {
    Vocabulary v;
    v.id_to_token_.clear();
    v.token_to_id_.clear();
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      std::string_view line = text.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (line.empty()) continue;
      const auto tab = line.rfind('\t');
      int id = -1;
      if (tab == std::string_view::npos || !parse_int(line.substr(tab + 1), id) ||
          id != static_cast<int>(v.id_to_token_.size())) {
        throw Error(ErrorCode::kFormat, "vocabulary line " + std::to_string(line_no) +
                                            " is not 'token<TAB>next-id'");
      }
      std::string tok(line.substr(0, tab));
      if (!v.token_to_id_.emplace(tok, static_cast<TokenId>(id)).second) {
        throw Error(ErrorCode::kFormat, "duplicate vocabulary token " + tok);
      }
      v.id_to_token_.push_back(std::move(tok));
    }
    if (v.id_to_token_.size() < kNumSpecial || v.id_to_token_[kPad] != "[PAD]" ||
        v.id_to_token_[kUnk] != "[UNK]" || v.id_to_token_[kMask] != "[MASK]") {
      throw Error(ErrorCode::kFormat, "vocabulary must start with [PAD], [UNK], [MASK]");
    }
    return v;
  }

  void save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }
  static Vocabulary load(const std::filesystem::path& path) { return parse(read_file(path)); }

 private:
  void add(const std::string& t) {
    if (token_to_id_.count(t)) return;
    token_to_id_[t] = static_cast<TokenId>(id_to_token_.size());
    id_to_token_.push_back(t);
  }

  std::vector<std::string> id_to_token_;
  std::map<std::string, TokenId> token_to_id_;
};

// Closed token space per position: all bins / percentage buckets, plus the
// categorical values actually observed in `records`.
inline Vocabulary build_vocabulary(std::span<const RawRecord> records,
                                   const TreatmentTable& table = default_treatments()) {
  if (records.empty()) throw Error(ErrorCode::kEmptyInput, "cannot build a vocabulary from no records");
  std::set<std::string> tokens;
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    const std::string prefix = "f" + std::to_string(i) + ":";
    switch (table[i].kind) {
      case FeatureKind::kExpBinned:
        for (int b = 0; b < kNumExpBins; ++b) tokens.insert(prefix + "bin" + std::to_string(b));
        break;
      case FeatureKind::kPercentage:
      case FeatureKind::kCappedCount:
        for (int b = 0; b < kNumPercentageValues; ++b) tokens.insert(prefix + "pct" + std::to_string(b));
        break;
      case FeatureKind::kCategorical:
        for (const auto& r : records) tokens.insert(feature_token(i, r, table[i]));
        break;
    }
  }
  return Vocabulary::from_tokens(tokens);
}

struct TokenizedRecord {
  std::array<TokenId, kNumFeatures> tokens{};
  Label label;
  YearMonth year_month;

  bool operator==(const TokenizedRecord&) const = default;
};

inline TokenizedRecord encode(const RawRecord& r, const Vocabulary& vocab,
                              const TreatmentTable& table = default_treatments()) {
  TokenizedRecord out;
  for (std::size_t i = 0; i < kNumFeatures; ++i) out.tokens[i] = vocab.id(feature_token(i, r, table[i]));
  out.label = r.label;
  out.year_month = r.timestamp.year_month();
  return out;
}

inline std::vector<TokenizedRecord> encode_all(std::span<const RawRecord> records,
                                               const Vocabulary& vocab,
                                               const TreatmentTable& table = default_treatments()) {
  std::vector<TokenizedRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(encode(r, vocab, table));
  return out;
}

inline std::array<std::string, kNumFeatures> decode(const TokenizedRecord& t, const Vocabulary& vocab) {
  std::array<std::string, kNumFeatures> out;
  for (std::size_t i = 0; i < kNumFeatures; ++i) out[i] = vocab.token(t.tokens[i]);
  return out;
}

}  // namespace anoshift

#endif  // ANOSHIFT_TOKENIZE_HPP_
