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

// Masking, losses, the masked-reconstruction anomaly score, AdamW and the
// iid / finetune / distill training strategies.

#ifndef ANOSHIFT_MASKEDMODEL_TRAINING_HPP_
#define ANOSHIFT_MASKEDMODEL_TRAINING_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string_view>
#include <vector>

#include "anoshift/error.hpp"
#include "anoshift/hash.hpp"
#include "anoshift/maskedmodel/model.hpp"
#include "anoshift/parallel.hpp"
#include "anoshift/rng.hpp"
#include "anoshift/tokenize.hpp"

namespace anoshift::mlm {

using Sequence = std::vector<TokenId>;
using SequenceSet = std::vector<Sequence>;

inline SequenceSet to_sequences(std::span<const TokenizedRecord> records) {
  SequenceSet out;
  out.reserve(records.size());
  for (const auto& r : records) out.emplace_back(r.tokens.begin(), r.tokens.end());
  return out;
}

struct MaskSample {
  std::vector<std::uint8_t> mask;
  Sequence masked;

  std::size_t count() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)); }
};

// Masks each position with probability p. An all-clear draw is retried once,
// then a single uniform position is forced.
inline MaskSample apply_mask(std::span<const TokenId> tokens, double p, Rng& rng) {
  MaskSample s;
  s.mask.assign(tokens.size(), 0);
  s.masked.assign(tokens.begin(), tokens.end());
  if (tokens.empty()) return s;
  bool any = false;
  for (int attempt = 0; attempt < 2 && !any; ++attempt) {
    for (auto& m : s.mask) {
      m = rng.uniform() < p ? 1 : 0;
      any = any || m;
    }
  }
  if (!any) s.mask[static_cast<std::size_t>(rng.below(tokens.size()))] = 1;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (s.mask[i]) s.masked[i] = Vocabulary::kMask;
  }
  return s;
}

// Mean -log P(target) over masked positions. `predictions` holds one
// probability row per position.
inline double mlm_loss(const Matrix& predictions, std::span<const TokenId> targets,
                       std::span<const std::uint8_t> mask) {
  double sum = 0.0;
  std::size_t m = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    sum -= std::log(predictions(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(targets[i])));
    ++m;
  }
  if (m == 0) throw Error(ErrorCode::kEmptyMask, "no masked position");
  return sum / static_cast<double>(m);
}

// Mean over rows of KL(teacher || student).
inline double distill_loss(const Matrix& teacher, const Matrix& student) {
  if (teacher.rows() == 0) throw Error(ErrorCode::kEmptyMask, "no masked position");
  double sum = 0.0;
  for (Eigen::Index r = 0; r < teacher.rows(); ++r) {
    for (Eigen::Index c = 0; c < teacher.cols(); ++c) {
      const double t = teacher(r, c);
      if (t > 0) sum += t * (std::log(t) - std::log(student(r, c)));
    }
  }
  return sum / static_cast<double>(teacher.rows());
}

// ---------------------------------------------------------------------------
// Anomaly score.

// Sum over samplings of sum over masked positions of (1 - P(true token)),
// divided by the number of samplings. probabilities[i][j] is read only where
// masks[i].mask[j] is set.
inline double score_from_probabilities(std::span<const MaskSample> masks,
                                       const std::vector<std::vector<double>>& probabilities,
                                       bool normalize_by_mask_count) {
  if (masks.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    double s = 0.0;
    std::size_t m = 0;
    for (std::size_t j = 0; j < masks[i].mask.size(); ++j) {
      if (!masks[i].mask[j]) continue;
      s += 1.0 - probabilities[i][j];
      ++m;
    }
    if (normalize_by_mask_count && m > 0) s /= static_cast<double>(m);
    total += s;
  }
  return total / static_cast<double>(masks.size());
}

// Score under any predictor: predict(masked_sequence) returns, per position,
// the probability assigned to the original token at that position.
template <class Predictor>
double anomaly_score_with(Predictor&& predict, std::span<const TokenId> tokens,
                          std::span<const MaskSample> masks, bool normalize_by_mask_count = false) {
  std::vector<std::vector<double>> probs;
  probs.reserve(masks.size());
  for (const auto& m : masks) {
    std::vector<double> p = predict(std::span<const TokenId>(m.masked), tokens);
    probs.push_back(std::move(p));
  }
  return score_from_probabilities(masks, probs, normalize_by_mask_count);
}

inline std::uint64_t sequence_hash(std::span<const TokenId> tokens) {
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(tokens.data()), tokens.size_bytes()));
}

// The n mask samplings used to score `tokens`; seeded by (seed, tokens) so a
// record's score does not depend on its position in a batch.
inline std::vector<MaskSample> scoring_masks(std::span<const TokenId> tokens, double p, int n,
                                             std::uint64_t seed) {
  Rng rng(derive_seed(seed, sequence_hash(tokens)));
  std::vector<MaskSample> masks;
  masks.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) masks.push_back(apply_mask(tokens, p, rng));
  return masks;
}

// Model score for explicit masks; all samplings go through one batched
// evaluation-mode forward pass.
inline double anomaly_score_masks(const ModelParams& params, std::span<const TokenId> tokens,
                                  std::span<const MaskSample> masks) {
  if (masks.empty()) return 0.0;
  const std::size_t t = tokens.size();
  std::vector<TokenId> ids;
  ids.reserve(masks.size() * t);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    ids.insert(ids.end(), masks[i].masked.begin(), masks[i].masked.end());
    for (std::size_t j = 0; j < t; ++j) {
      if (masks[i].mask[j]) rows.push_back(i * t + j);
    }
  }
  const Matrix hidden = encode(params, ids, nullptr, nullptr);
  const Matrix probs = softmax(project_rows(params, hidden, rows));
  std::vector<std::vector<double>> p(masks.size(), std::vector<double>(t, 1.0));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t i = rows[r] / t, j = rows[r] % t;
    p[i][j] = probs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(tokens[j]));
  }
  return score_from_probabilities(masks, p, params.config.normalize_by_mask_count);
}

inline double anomaly_score(const ModelParams& params, std::span<const TokenId> tokens, double p, int n,
                            std::uint64_t seed) {
  const auto masks = scoring_masks(tokens, p, n, seed);
  return anomaly_score_masks(params, tokens, masks);
}

inline std::vector<double> score_sequences(const ModelParams& params, const SequenceSet& sequences,
                                           std::uint64_t seed, unsigned threads = 1) {
  std::vector<double> out(sequences.size());
  parallel_for(sequences.size(), threads, [&](std::size_t i) {
    out[i] = anomaly_score(params, sequences[i], params.config.mask_prob, params.config.eval_mask_samplings,
                           seed);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer.

inline std::vector<Matrix*> tensors(ModelParams& p) {
  std::vector<Matrix*> out;
  p.visit([&](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

inline std::vector<const Matrix*> tensors(const ModelParams& p) {
  std::vector<const Matrix*> out;
  p.visit([&](const std::string&, const Matrix& m) { out.push_back(&m); });
  return out;
}

// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW(const ModelConfig& c, const ModelParams& shape)
      : lr_(c.learning_rate),
        b1_(c.adam_beta1),
        b2_(c.adam_beta2),
        eps_(c.adam_eps),
        wd_(c.weight_decay),
        m_(shape.zeros_like()),
        v_(shape.zeros_like()) {}

  void step(ModelParams& params, const ModelParams& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    auto p = tensors(params);
    auto g = tensors(grads);
    auto m = tensors(m_);
    auto v = tensors(v_);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i]->array() = b1_ * m[i]->array() + (1.0 - b1_) * g[i]->array();
      v[i]->array() = b2_ * v[i]->array() + (1.0 - b2_) * g[i]->array().square();
      p[i]->array() *= 1.0 - lr_ * wd_;
      p[i]->array() -= lr_ * (m[i]->array() / c1) / ((v[i]->array() / c2).sqrt() + eps_);
    }
  }

  std::uint64_t steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_, wd_;
  ModelParams m_, v_;
  std::uint64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Training.

struct MaskedBatch {
  std::vector<TokenId> targets;
  MaskSample sample;
  std::vector<std::size_t> rows;  // masked positions
};

inline MaskedBatch make_batch(const SequenceSet& set, std::span<const std::size_t> order, double p, Rng& rng) {
  MaskedBatch b;
  for (std::size_t idx : order) b.targets.insert(b.targets.end(), set[idx].begin(), set[idx].end());
  b.sample = apply_mask(b.targets, p, rng);
  for (std::size_t i = 0; i < b.sample.mask.size(); ++i) {
    if (b.sample.mask[i]) b.rows.push_back(i);
  }
  return b;
}

struct StepLoss {
  double mlm = 0.0;
  double distill = 0.0;
};

// Loss on one masked batch, accumulating parameter gradients. `rng` null
// disables dropout (used by the gradient check).
inline StepLoss loss_and_gradient(const ModelParams& params, const MaskedBatch& batch, Rng* rng,
                                  const ModelParams* teacher, ModelParams& grads) {
  ForwardCache cache;
  const Matrix hidden = encode(params, batch.sample.masked, rng, &cache);
  const Matrix logits = project_rows(params, hidden, batch.rows);
  const Matrix logp = log_softmax(logits);
  const Matrix probs = logp.array().exp();
  const auto m = static_cast<double>(batch.rows.size());
  StepLoss loss;
  Matrix dlogits = probs;
  for (std::size_t r = 0; r < batch.rows.size(); ++r) {
    const auto target = static_cast<Eigen::Index>(batch.targets[batch.rows[r]]);
    loss.mlm -= logp(static_cast<Eigen::Index>(r), target);
    dlogits(static_cast<Eigen::Index>(r), target) -= 1.0;
  }
  loss.mlm /= m;
  if (teacher) {
    const Matrix th = encode(*teacher, batch.sample.masked, nullptr, nullptr);
    const Matrix tp = softmax(project_rows(*teacher, th, batch.rows));
    for (Eigen::Index r = 0; r < tp.rows(); ++r) {
      for (Eigen::Index c = 0; c < tp.cols(); ++c) {
        const double t = tp(r, c);
        if (t > 0) loss.distill += t * (std::log(t) - logp(r, c));
      }
    }
    loss.distill /= m;
    dlogits += probs - tp;
  }
  dlogits /= m;
  backward(params, cache, batch.rows, dlogits, grads);
  return loss;
}

struct TrainingLog {
  // One entry per (set, epoch): mean total batch loss.
  std::vector<std::vector<double>> epoch_loss;
};

// Epochs over one set: reshuffle, mask per batch, one AdamW step per batch.
// A fresh optimizer per call.
inline void run_epochs(ModelParams& params, const SequenceSet& set, const ModelParams* teacher,
                       std::uint64_t seed, TrainingLog* log) {
  const auto& c = params.config;
  if (set.empty()) throw Error(ErrorCode::kEmptyInput, "empty training set");
  for (const auto& s : set) {
    if (s.size() != static_cast<std::size_t>(c.seq_len)) {
      throw Error(ErrorCode::kInvalidConfig, "sequence length differs from seq_len");
    }
  }
  Rng rng(seed);
  AdamW opt(c, params);
  std::vector<std::size_t> order(set.size());
  std::vector<double> losses;
  ModelParams grads = params.zeros_like();
  const auto bs = static_cast<std::size_t>(c.batch_size);
  for (int e = 0; e < c.epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t len = std::min(bs, order.size() - start);
      const MaskedBatch batch = make_batch(set, std::span(order).subspan(start, len), c.mask_prob, rng);
      grads.visit([](const std::string&, Matrix& m) { m.setZero(); });
      const StepLoss l = loss_and_gradient(params, batch, &rng, teacher, grads);
      opt.step(params, grads);
      total += l.mlm + l.distill;
      ++batches;
    }
    losses.push_back(total / static_cast<double>(batches));
  }
  if (log) log->epoch_loss.push_back(std::move(losses));
}

inline constexpr std::uint64_t kInitStream = 0x696e6974;  // "init"

// Fresh model trained on the shuffled concatenation of every set.
inline ModelParams train_iid(const std::vector<SequenceSet>& sets, const ModelConfig& config, std::uint64_t seed,
                             TrainingLog* log = nullptr) {
  SequenceSet all;
  for (const auto& s : sets) all.insert(all.end(), s.begin(), s.end());
  ModelParams params = init_model(config, derive_seed(seed, kInitStream));
  run_epochs(params, all, nullptr, derive_seed(seed, 0), log);
  return params;
}

// Keeps optimizing the same parameters over the sets in order.
inline ModelParams train_finetune(ModelParams params, const std::vector<SequenceSet>& sets,
                                  const ModelConfig& config, std::uint64_t seed, TrainingLog* log = nullptr) {
  if (!params.config.same_shape(config)) throw Error(ErrorCode::kConfigMismatch, "config does not fit params");
  params.config = config;
  for (std::size_t k = 0; k < sets.size(); ++k) run_epochs(params, sets[k], nullptr, derive_seed(seed, k), log);
  return params;
}

// Per set: a freshly initialized student trained with the MLM loss plus
// KL(teacher || student) at masked positions; the student then becomes the
// teacher for the next set.
inline ModelParams train_distill(ModelParams teacher, const std::vector<SequenceSet>& sets,
                                 const ModelConfig& config, std::uint64_t seed, TrainingLog* log = nullptr) {
  if (!teacher.config.same_shape(config)) {
    throw Error(ErrorCode::kConfigMismatch, "teacher and student shapes differ");
  }
  for (std::size_t k = 0; k < sets.size(); ++k) {
    ModelParams student = init_model(config, derive_seed(derive_seed(seed, kInitStream), k + 1));
    run_epochs(student, sets[k], &teacher, derive_seed(seed, k), log);
    teacher = std::move(student);
  }
  return teacher;
}

}  // namespace anoshift::mlm

#endif  // ANOSHIFT_MASKEDMODEL_TRAINING_HPP_
