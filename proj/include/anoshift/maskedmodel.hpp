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

#ifndef ANOSHIFT_MASKEDMODEL_HPP_
#define ANOSHIFT_MASKEDMODEL_HPP_

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anoshift/detectors.hpp"
#include "anoshift/maskedmodel/checkpoint.hpp"
#include "anoshift/maskedmodel/model.hpp"
#include "anoshift/maskedmodel/training.hpp"
#include "anoshift/tokenize.hpp"

namespace anoshift::mlm {

enum class Strategy { kIid, kFinetune, kDistill };

inline std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kIid: return "iid";
    case Strategy::kFinetune: return "finetune";
    case Strategy::kDistill: return "distill";
  }
  return "iid";
}

inline Strategy strategy_from_name(std::string_view s) {
  if (s == "iid") return Strategy::kIid;
  if (s == "finetune") return Strategy::kFinetune;
  if (s == "distill") return Strategy::kDistill;
  throw Error(ErrorCode::kInvalidConfig, "unknown strategy '" + std::string(s) + "'");
}

// Yearly sets in chronological order. Distillation needs a first teacher,
// which is an iid model of the first set.
inline ModelParams train_with_strategy(Strategy strategy, const std::vector<SequenceSet>& sets,
                                       const ModelConfig& config, std::uint64_t seed) {
  if (sets.empty()) throw Error(ErrorCode::kEmptyInput, "no training sets");
  switch (strategy) {
    case Strategy::kIid: return train_iid(sets, config, seed);
    case Strategy::kFinetune:
      return train_finetune(init_model(config, derive_seed(seed, kInitStream)), sets, config, seed);
    case Strategy::kDistill: {
      ModelParams first = train_iid({sets.front()}, config, seed);
      return train_distill(std::move(first), {sets.begin() + 1, sets.end()}, config, seed);
    }
  }
  return train_iid(sets, config, seed);
}

// Masked-model detector behind the common scorer interface. fit() trains
// with the iid strategy unless the scorer was built from trained params.
class MaskedModelScorer : public AnomalyScorer {
 public:
  explicit MaskedModelScorer(ModelConfig config, TreatmentTable treatments = default_treatments(),
                             unsigned threads = 1)
      : config_(std::move(config)), treatments_(treatments), threads_(threads) {}

  MaskedModelScorer(ModelParams trained, Vocabulary vocab, TreatmentTable treatments = default_treatments(),
                    unsigned threads = 1)
      : config_(trained.config),
        treatments_(treatments),
        threads_(threads),
        pretrained_(true),
        params_(std::move(trained)),
        vocab_(std::move(vocab)) {}

  std::string name() const override { return "bert"; }

  void fit(std::span<const RawRecord> train, const Vocabulary& vocab, std::uint64_t seed) override {
    seed_ = seed;
    if (pretrained_) {
      if (vocab.fingerprint() != vocab_->fingerprint()) {
        throw Error(ErrorCode::kVocabularyMismatch, "pretrained model uses a different vocabulary");
      }
      return;
    }
    vocab_ = vocab;
    ModelConfig c = config_;
    c.vocab_size = vocab.size();
    const auto records = encode_all(train, vocab, treatments_);
    params_ = train_iid({to_sequences(records)}, c, seed);
  }

  std::vector<double> score(std::span<const RawRecord> records) const override {
    if (!params_) throw Error(ErrorCode::kNotFitted, "masked model is not trained");
    const auto enc = encode_all(records, *vocab_, treatments_);
    return score_sequences(*params_, to_sequences(enc), derive_seed(seed_, 0x73636f7265), threads_);
  }

  nlohmann::json state() const override {
    nlohmann::json j = {{"name", name()}, {"config", config_.to_json()}, {"pretrained", pretrained_}};
    if (params_) {
      j["parameter_count"] = params_->parameter_count();
      j["vocab_fingerprint"] = hex64(vocab_->fingerprint());
    }
    return j;
  }

  const std::optional<ModelParams>& params() const { return params_; }

 private:
  ModelConfig config_;
  TreatmentTable treatments_;
  unsigned threads_;
  bool pretrained_ = false;
  std::uint64_t seed_ = 0;
  std::optional<ModelParams> params_;
  std::optional<Vocabulary> vocab_;
};

}  // namespace anoshift::mlm

#endif  // ANOSHIFT_MASKEDMODEL_HPP_
