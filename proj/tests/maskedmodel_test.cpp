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

#include "anoshift/maskedmodel.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"

namespace anoshift::mlm {
namespace {

ModelConfig Toy(std::size_t vocab = 7) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.hidden = 8;
  c.intermediate = 16;
  c.n_layers = 1;
  c.n_heads = 1;
  c.seq_len = 5;
  c.dropout = 0.0;
  c.attention_dropout = 0.0;
  return c;
}

MaskedBatch FixedBatch(const SequenceSet& set, std::vector<std::uint8_t> mask) {
  MaskedBatch b;
  for (const auto& s : set) b.targets.insert(b.targets.end(), s.begin(), s.end());
  b.sample.mask = std::move(mask);
  b.sample.masked = b.targets;
  for (std::size_t i = 0; i < b.targets.size(); ++i) {
    if (b.sample.mask[i]) {
      b.sample.masked[i] = Vocabulary::kMask;
      b.rows.push_back(i);
    }
  }
  return b;
}

const SequenceSet kToySet = {{3, 4, 5, 6, 0}, {1, 6, 6, 3, 4}, {5, 5, 2, 3, 6}};
const std::vector<std::uint8_t> kToyMask = {1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0};

TEST(ModelConfigTest, RejectsIndivisibleHeads) {
  ModelConfig c = Toy();
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), Error);
  try {
    init_model(c, 1);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidConfig);
  }
}

TEST(ModelConfigTest, JsonRoundTrip) {
  ModelConfig c = Toy();
  c.normalize_by_mask_count = true;
  c.learning_rate = 3e-4;
  EXPECT_EQ(ModelConfig::from_json(c.to_json()).to_json(), c.to_json());
}

TEST(InitModelTest, SameSeedSameParams) {
  EXPECT_TRUE(init_model(Toy(), 5) == init_model(Toy(), 5));
  EXPECT_FALSE(init_model(Toy(), 5) == init_model(Toy(), 6));
}

TEST(InitModelTest, WeightsTruncatedBiasesZeroGainsOne) {
  ModelConfig c = Toy();
  c.hidden = 32;
  c.n_heads = 4;
  const auto p = init_model(c, 3);
  EXPECT_LE(p.token_embedding.cwiseAbs().maxCoeff(), 2 * c.init_std);
  EXPECT_EQ(p.layers[0].bq.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(p.out_b.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(p.layers[0].ln2_g.minCoeff(), 1.0);
  // Sample sd of a 2-sigma truncated normal is sd * 0.8796.
  const auto& w = p.token_embedding;
  const double sd = std::sqrt(w.array().square().mean());
  EXPECT_NEAR(sd, c.init_std * 0.8796, 0.1 * c.init_std);
}

TEST(InitModelTest, ToyParameterCountByHand) {
  ModelConfig c = Toy(10);
  c.seq_len = 14;
  const auto p = init_model(c, 0);
  // token 10x8, position 14x8, embedding LayerNorm 2x8,
  // attention 4 x (8x8 + 8), LayerNorm 2x8, FFN 8x16 + 16 + 16x8 + 8,
  // LayerNorm 2x8, output 8x10 + 10.
  const std::size_t by_hand = 80 + 112 + 16 + 4 * 72 + 16 + (128 + 16 + 128 + 8) + 16 + 90;
  EXPECT_EQ(by_hand, 898u);
  EXPECT_EQ(p.parameter_count(), by_hand);
  EXPECT_EQ(parameter_count_formula(c), by_hand);
}

TEST(InitModelTest, FormulaMatchesCountAcrossShapes) {
  for (int layers : {1, 2, 3}) {
    for (std::size_t v : {4u, 50u, 951u}) {
      ModelConfig c;
      c.vocab_size = v;
      c.n_layers = layers;
      c.hidden = 12;
      c.n_heads = 3;
      c.intermediate = 20;
      EXPECT_EQ(init_model(c, 1).parameter_count(), parameter_count_formula(c));
    }
  }
}

TEST(ApplyMaskTest, UnmaskedPositionsKeepInput) {
  Rng rng(9);
  const Sequence s = {10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23};
  for (int k = 0; k < 200; ++k) {
    const auto m = apply_mask(s, 0.3, rng);
    ASSERT_EQ(m.masked.size(), s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      EXPECT_EQ(m.masked[i], m.mask[i] ? Vocabulary::kMask : s[i]);
    }
  }
}

TEST(ApplyMaskTest, TinyProbabilityForcesOnePosition) {
  Rng rng(2);
  const Sequence s(14, 7);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(apply_mask(s, 1e-12, rng).count(), 1u);
}

TEST(ApplyMaskTest, EmpiricalRateOnBatchSpans) {
  Rng rng(77);
  const Sequence span(64 * 14, 5);
  double masked = 0.0;
  const int draws = 2000;
  for (int k = 0; k < draws; ++k) masked += static_cast<double>(apply_mask(span, 0.15, rng).count());
  EXPECT_NEAR(masked / (draws * static_cast<double>(span.size())), 0.15, 0.01);
}

TEST(ForwardTest, RowsAreDistributions) {
  const auto p = init_model(Toy(), 4);
  const Matrix out = forward(p, kToySet[0]);
  ASSERT_EQ(out.rows(), 5);
  ASSERT_EQ(out.cols(), 7);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    EXPECT_NEAR(out.row(r).sum(), 1.0, 1e-6);
    EXPECT_GE(out.row(r).minCoeff(), 0.0);
  }
}

TEST(ForwardTest, EvalModeDeterministic) {
  const auto p = init_model(Toy(), 4);
  EXPECT_EQ(forward(p, kToySet[1]), forward(p, kToySet[1]));
}

TEST(ForwardTest, SwappingTokensAndPositionRowsPermutesOutputs) {
  ModelConfig c = Toy();
  c.init_std = 0.5;
  const auto p = init_model(c, 8);
  Sequence s = kToySet[0];
  const Matrix base = forward(p, s);
  auto q = p;
  q.position_embedding.row(1).swap(q.position_embedding.row(3));
  std::swap(s[1], s[3]);
  Matrix swapped = forward(q, s);
  swapped.row(1).swap(swapped.row(3));
  EXPECT_LT((swapped - base).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MlmLossTest, OneHotIsZeroUniformIsLogV) {
  const Sequence targets = {1, 2, 3, 4};
  const std::vector<std::uint8_t> mask = {1, 0, 1, 1};
  Matrix onehot = Matrix::Zero(4, 6);
  for (int i = 0; i < 4; ++i) onehot(i, targets[static_cast<std::size_t>(i)]) = 1.0;
  EXPECT_EQ(mlm_loss(onehot, targets, mask), 0.0);
  const Matrix uniform = Matrix::Constant(4, 6, 1.0 / 6);
  EXPECT_NEAR(mlm_loss(uniform, targets, mask), std::log(6.0), 1e-12);
}

TEST(MlmLossTest, EmptyMaskThrows) {
  const Matrix uniform = Matrix::Constant(2, 3, 1.0 / 3);
  const Sequence t = {0, 1};
  const std::vector<std::uint8_t> none = {0, 0};
  try {
    mlm_loss(uniform, t, none);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyMask);
  }
}

TEST(DistillLossTest, ZeroWhenEqualNonNegativeOtherwise) {
  Rng rng(3);
  for (int k = 0; k < 200; ++k) {
    Matrix a(3, 5), b(3, 5);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a.data()[i] = rng.uniform() + 1e-3;
      b.data()[i] = rng.uniform() + 1e-3;
    }
    for (int r = 0; r < 3; ++r) {
      a.row(r) /= a.row(r).sum();
      b.row(r) /= b.row(r).sum();
    }
    EXPECT_NEAR(distill_loss(a, a), 0.0, 1e-15);
    EXPECT_GE(distill_loss(a, b), 0.0);
  }
}

TEST(GradientTest, MatchesFiniteDifferences) {
  ModelConfig c = Toy();
  c.init_std = 0.5;
  const auto p = init_model(c, 21);
  const auto r = oracle::check_gradients(p, FixedBatch(kToySet, kToyMask), nullptr, 0, false);
  EXPECT_EQ(r.checked, p.parameter_count());
  EXPECT_EQ(r.failed, 0u) << "worst " << r.worst << " at " << r.worst_name;
}

TEST(GradientTest, MatchesFiniteDifferencesWithDropout) {
  ModelConfig c = Toy();
  c.init_std = 0.5;
  c.dropout = 0.2;
  c.attention_dropout = 0.2;
  const auto p = init_model(c, 22);
  const auto r = oracle::check_gradients(p, FixedBatch(kToySet, kToyMask), nullptr, 99, true);
  EXPECT_EQ(r.failed, 0u) << "worst " << r.worst << " at " << r.worst_name;
}

TEST(GradientTest, MatchesFiniteDifferencesWithTeacher) {
  ModelConfig c = Toy();
  c.init_std = 0.5;
  ModelConfig tc = c;
  const auto p = init_model(c, 23);
  const auto teacher = init_model(tc, 24);
  const auto r = oracle::check_gradients(p, FixedBatch(kToySet, kToyMask), &teacher, 0, false);
  EXPECT_EQ(r.failed, 0u) << "worst " << r.worst << " at " << r.worst_name;
}

TEST(GradientTest, MultiHeadTwoLayers) {
  ModelConfig c = Toy();
  c.init_std = 0.5;
  c.n_heads = 2;
  c.n_layers = 2;
  const auto p = init_model(c, 25);
  const auto r = oracle::check_gradients(p, FixedBatch(kToySet, kToyMask), nullptr, 0, false);
  EXPECT_EQ(r.failed, 0u) << "worst " << r.worst << " at " << r.worst_name;
}

TEST(AnomalyScoreTest, OracleModelScoresZero) {
  const Sequence s = {3, 4, 5, 6, 3};
  Rng rng(1);
  std::vector<MaskSample> masks;
  for (int i = 0; i < 10; ++i) masks.push_back(apply_mask(s, 0.5, rng));
  auto oracle_model = [](std::span<const TokenId> masked, std::span<const TokenId>) {
    return std::vector<double>(masked.size(), 1.0);
  };
  EXPECT_EQ(anomaly_score_with(oracle_model, s, masks), 0.0);
}

TEST(AnomalyScoreTest, UniformModelFixedMaskCount) {
  const std::size_t v = 9;
  const Sequence s(14, 4);
  Rng rng(5);
  for (std::size_t m = 1; m <= 14; ++m) {
    std::vector<MaskSample> masks;
    for (int i = 0; i < 10; ++i) {
      MaskSample ms;
      ms.mask.assign(14, 0);
      std::vector<std::size_t> pos(14);
      std::iota(pos.begin(), pos.end(), std::size_t{0});
      rng.shuffle(std::span<std::size_t>(pos));
      for (std::size_t k = 0; k < m; ++k) ms.mask[pos[k]] = 1;
      ms.masked = s;
      masks.push_back(ms);
    }
    auto uniform = [&](std::span<const TokenId> masked, std::span<const TokenId>) {
      return std::vector<double>(masked.size(), 1.0 / static_cast<double>(v));
    };
    EXPECT_NEAR(anomaly_score_with(uniform, s, masks), static_cast<double>(m) * (1.0 - 1.0 / v), 1e-12);
  }
}

TEST(AnomalyScoreTest, SingleMaskEqualsHandSumFromForward) {
  const auto p = init_model(Toy(), 31);
  const Sequence s = kToySet[1];
  MaskSample ms;
  ms.mask = {0, 1, 0, 1, 1};
  ms.masked = s;
  for (std::size_t i = 0; i < 5; ++i) {
    if (ms.mask[i]) ms.masked[i] = Vocabulary::kMask;
  }
  const Matrix probs = forward(p, ms.masked);
  double by_hand = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    if (ms.mask[i]) by_hand += 1.0 - probs(static_cast<Eigen::Index>(i), s[i]);
  }
  const std::vector<MaskSample> masks = {ms};
  EXPECT_NEAR(anomaly_score_masks(p, s, masks), by_hand, 1e-12);
}

TEST(AnomalyScoreTest, NormalizeByMaskCount) {
  ModelConfig c = Toy();
  c.normalize_by_mask_count = true;
  const auto p = init_model(c, 31);
  const Sequence s = kToySet[2];
  Rng rng(4);
  std::vector<MaskSample> masks;
  for (int i = 0; i < 4; ++i) masks.push_back(apply_mask(s, 0.5, rng));
  double expect = 0.0;
  for (const auto& m : masks) {
    const Matrix probs = forward(p, m.masked);
    double sum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (m.mask[i]) sum += 1.0 - probs(static_cast<Eigen::Index>(i), s[i]);
    }
    expect += sum / static_cast<double>(m.count());
  }
  EXPECT_NEAR(anomaly_score_masks(p, s, masks), expect / 4, 1e-12);
}

TEST(AnomalyScoreTest, BoundedOverFuzzedInputs) {
  ModelConfig c = Toy(30);
  c.seq_len = 14;
  c.init_std = 1.0;
  const auto p = init_model(c, 2);
  Rng rng(6);
  for (int k = 0; k < 200; ++k) {
    Sequence s(14);
    for (auto& t : s) t = static_cast<TokenId>(rng.below(30));
    const double score = anomaly_score(p, s, rng.uniform(0.01, 0.99), 1 + static_cast<int>(rng.below(12)), rng.next());
    EXPECT_GE(score, 0.0);
    EXPECT_LE(score, 14.0);
  }
}

TEST(AnomalyScoreTest, DeterministicGivenSeed) {
  const auto p = init_model(Toy(), 3);
  EXPECT_EQ(anomaly_score(p, kToySet[0], 0.15, 10, 4), anomaly_score(p, kToySet[0], 0.15, 10, 4));
}

TEST(AnomalyScoreTest, RaisingTrueTokenProbabilityNeverRaisesScore) {
  const auto p = init_model(Toy(), 12);
  const Sequence s(5, 4);
  double prev = anomaly_score(p, s, 0.4, 10, 1);
  auto q = p;
  for (int step = 0; step < 10; ++step) {
    q.out_b(0, 4) += 0.5;
    const double now = anomaly_score(q, s, 0.4, 10, 1);
    EXPECT_LE(now, prev);
    prev = now;
  }
}

TEST(AnomalyScoreTest, BatchScoringMatchesSingleAndIgnoresThreads) {
  const auto p = init_model(Toy(), 12);
  const auto one = score_sequences(p, kToySet, 8, 1);
  const auto three = score_sequences(p, kToySet, 8, 3);
  EXPECT_EQ(one, three);
  for (std::size_t i = 0; i < kToySet.size(); ++i) {
    EXPECT_EQ(one[i], anomaly_score(p, kToySet[i], p.config.mask_prob, p.config.eval_mask_samplings, 8));
  }
}

SequenceSet ToyCorpus(std::uint64_t seed, std::size_t n = 100) {
  // Two templates with light noise.
  Rng rng(seed);
  SequenceSet out;
  for (std::size_t i = 0; i < n; ++i) {
    Sequence s = (i % 2) ? Sequence{3, 4, 5, 6, 3} : Sequence{6, 5, 4, 3, 6};
    if (rng.bernoulli(0.1)) s[rng.below(5)] = static_cast<TokenId>(3 + rng.below(4));
    out.push_back(s);
  }
  return out;
}

ModelConfig TrainToy() {
  ModelConfig c = Toy();
  c.hidden = 16;
  c.n_heads = 2;
  c.intermediate = 32;
  c.batch_size = 10;
  c.epochs = 5;
  c.mask_prob = 0.3;
  c.dropout = 0.1;
  c.attention_dropout = 0.1;
  return c;
}

TEST(TrainIidTest, LossDecreasesInMostSeeds) {
  int decreased = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrainingLog log;
    train_iid({ToyCorpus(seed)}, TrainToy(), seed, &log);
    ASSERT_EQ(log.epoch_loss.size(), 1u);
    ASSERT_EQ(log.epoch_loss[0].size(), 5u);
    decreased += log.epoch_loss[0][4] < log.epoch_loss[0][0];
  }
  EXPECT_GE(decreased, 4);
}

TEST(TrainIidTest, SameSeedIdenticalParams) {
  const auto a = train_iid({ToyCorpus(1)}, TrainToy(), 3);
  const auto b = train_iid({ToyCorpus(1)}, TrainToy(), 3);
  EXPECT_TRUE(a == b);
  EXPECT_TRUE(a.all_finite());
}

TEST(TrainIidTest, RepeatedTokenCorpusSeparatesUnseenSequence) {
  ModelConfig c = TrainToy();
  c.epochs = 20;
  const SequenceSet set(100, Sequence(5, 5));
  const auto p = train_iid({set}, c, 2);
  const Sequence seen(5, 5);
  const Sequence unseen = {3, 6, 4, 3, 6};
  EXPECT_LT(anomaly_score(p, seen, 0.15, 10, 0), anomaly_score(p, unseen, 0.15, 10, 0));
}

TEST(TrainFinetuneTest, SingleSetParityWithIid) {
  const auto c = TrainToy();
  const auto iid = train_iid({ToyCorpus(4)}, c, 11);
  const auto ft = train_finetune(init_model(c, derive_seed(11, kInitStream)), {ToyCorpus(4)}, c, 11);
  EXPECT_TRUE(iid == ft);
}

TEST(TrainFinetuneTest, SecondSetChangesParamsAndIsDeterministic) {
  const auto c = TrainToy();
  const auto init = init_model(c, 1);
  const auto one = train_finetune(init, {ToyCorpus(4)}, c, 2);
  const auto two = train_finetune(init, {ToyCorpus(4), ToyCorpus(4)}, c, 2);
  EXPECT_FALSE(one == two);
  EXPECT_TRUE(two == train_finetune(init, {ToyCorpus(4), ToyCorpus(4)}, c, 2));
}

TEST(TrainDistillTest, ShapeMismatchThrows) {
  const auto c = TrainToy();
  ModelConfig other = c;
  other.hidden = 8;
  other.n_heads = 1;
  try {
    train_distill(init_model(other, 1), {ToyCorpus(1)}, c, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfigMismatch);
  }
}

TEST(TrainDistillTest, DeterministicAndDistinctFromIid) {
  const auto c = TrainToy();
  const auto teacher = train_iid({ToyCorpus(1)}, c, 1);
  const auto a = train_distill(teacher, {ToyCorpus(2), ToyCorpus(3)}, c, 5);
  const auto b = train_distill(teacher, {ToyCorpus(2), ToyCorpus(3)}, c, 5);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == teacher);
  EXPECT_TRUE(a.all_finite());
}

TEST(AdamWTest, FirstStepMovesByLearningRate) {
  ModelConfig c = Toy();
  c.weight_decay = 0.0;
  auto p = init_model(c, 1);
  const auto before = p;
  auto g = p.zeros_like();
  g.out_b.setConstant(3.0);
  AdamW opt(c, p);
  opt.step(p, g);
  // Bias-corrected first step is lr * sign(g) (up to eps).
  EXPECT_NEAR((before.out_b - p.out_b).maxCoeff(), c.learning_rate, 1e-10);
  EXPECT_EQ(before.token_embedding, p.token_embedding);
}

TEST(AdamWTest, DecoupledWeightDecayWithZeroGradient) {
  ModelConfig c = Toy();
  auto p = init_model(c, 1);
  const auto before = p;
  AdamW opt(c, p);
  opt.step(p, p.zeros_like());
  EXPECT_LT((p.token_embedding - before.token_embedding * (1 - c.learning_rate * c.weight_decay))
                .cwiseAbs()
                .maxCoeff(),
            1e-15);
}

TEST(CheckpointTest, RoundTripAndVocabularyGuard) {
  const auto p = init_model(Toy(), 44);
  Checkpoint ck{p, 0xabcdef, {{"strategy", "iid"}}};
  const auto bytes = serialize_checkpoint(ck);
  const auto back = parse_checkpoint(bytes, 0xabcdef);
  EXPECT_TRUE(back.params == p);
  EXPECT_EQ(back.metadata["strategy"], "iid");
  EXPECT_EQ(back.params.config.to_json(), p.config.to_json());
  try {
    parse_checkpoint(bytes, 0x1234);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kVocabularyMismatch);
  }
  try {
    parse_checkpoint(bytes.substr(0, bytes.size() - 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormat);
  }
}

TEST(CheckpointTest, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "anoshift_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto p = init_model(Toy(), 45);
  save_checkpoint(dir / "m.ckpt", {p, 7, {}});
  EXPECT_TRUE(load_checkpoint(dir / "m.ckpt", 7).params == p);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace anoshift::mlm
