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

// A small post-LayerNorm transformer encoder with a vocabulary projection,
// written out by hand with its exact backward pass. Everything runs in
// double precision on row blocks of shape (batch * seq_len) x hidden.

#ifndef ANOSHIFT_MASKEDMODEL_MODEL_HPP_
#define ANOSHIFT_MASKEDMODEL_MODEL_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "anoshift/error.hpp"
#include "anoshift/rng.hpp"
#include "anoshift/tokenize.hpp"
#include "json.hpp"

namespace anoshift::mlm {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct ModelConfig {
  int n_layers = 2;
  int hidden = 120;
  int intermediate = 192;
  int n_heads = 6;
  double dropout = 0.1;
  double attention_dropout = 0.1;
  double layernorm_eps = 1e-12;
  double init_std = 0.02;
  int seq_len = static_cast<int>(kNumFeatures);
  double mask_prob = 0.15;
  int eval_mask_samplings = 10;
  std::size_t vocab_size = 0;
  // Divide each sampling's sum by its masked count (the "average of the
  // probabilities" reading) instead of only by the number of samplings.
  bool normalize_by_mask_count = false;

  // Optimizer and schedule.
  double learning_rate = 1e-3;
  int batch_size = 64;
  int epochs = 5;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  int head_dim() const { return hidden / n_heads; }

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidConfig, m); };
    if (n_layers < 1 || hidden < 1 || intermediate < 1 || n_heads < 1) fail("model sizes must be positive");
    if (hidden % n_heads != 0) fail("hidden must be divisible by n_heads");
    if (seq_len < 1) fail("seq_len must be positive");
    if (vocab_size <= Vocabulary::kNumSpecial) fail("vocab_size must exceed the special tokens");
    if (!(dropout >= 0 && dropout < 1) || !(attention_dropout >= 0 && attention_dropout < 1)) {
      fail("dropout must be in [0,1)");
    }
    if (!(mask_prob > 0 && mask_prob < 1)) fail("mask_prob must be in (0,1)");
    if (eval_mask_samplings < 1) fail("eval_mask_samplings must be >= 1");
    if (!(layernorm_eps > 0) || !(init_std > 0)) fail("layernorm_eps and init_std must be > 0");
    if (!(learning_rate > 0) || batch_size < 1 || epochs < 0) fail("bad training schedule");
  }

  nlohmann::json to_json() const {
    return {{"n_layers", n_layers},
            {"hidden", hidden},
            {"intermediate", intermediate},
            {"n_heads", n_heads},
            {"dropout", dropout},
            {"attention_dropout", attention_dropout},
            {"layernorm_eps", layernorm_eps},
            {"init_std", init_std},
            {"seq_len", seq_len},
            {"mask_prob", mask_prob},
            {"eval_mask_samplings", eval_mask_samplings},
            {"vocab_size", vocab_size},
            {"normalize_by_mask_count", normalize_by_mask_count},
            {"learning_rate", learning_rate},
            {"batch_size", batch_size},
            {"epochs", epochs},
            {"weight_decay", weight_decay},
            {"adam_beta1", adam_beta1},
            {"adam_beta2", adam_beta2},
            {"adam_eps", adam_eps}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
#define ANOSHIFT_READ(field) c.field = j.value(#field, c.field)
      ANOSHIFT_READ(n_layers);
      ANOSHIFT_READ(hidden);
      ANOSHIFT_READ(intermediate);
      ANOSHIFT_READ(n_heads);
      ANOSHIFT_READ(dropout);
      ANOSHIFT_READ(attention_dropout);
      ANOSHIFT_READ(layernorm_eps);
      ANOSHIFT_READ(init_std);
      ANOSHIFT_READ(seq_len);
      ANOSHIFT_READ(mask_prob);
      ANOSHIFT_READ(eval_mask_samplings);
      ANOSHIFT_READ(vocab_size);
      ANOSHIFT_READ(normalize_by_mask_count);
      ANOSHIFT_READ(learning_rate);
      ANOSHIFT_READ(batch_size);
      ANOSHIFT_READ(epochs);
      ANOSHIFT_READ(weight_decay);
      ANOSHIFT_READ(adam_beta1);
      ANOSHIFT_READ(adam_beta2);
      ANOSHIFT_READ(adam_eps);
#undef ANOSHIFT_READ
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kInvalidConfig, e.what());
    }
    return c;
  }

  // Same tensor shapes (the only thing checkpoints and distillation need).
  bool same_shape(const ModelConfig& o) const {
    return n_layers == o.n_layers && hidden == o.hidden && intermediate == o.intermediate &&
           n_heads == o.n_heads && seq_len == o.seq_len && vocab_size == o.vocab_size;
  }
};

struct LayerParams {
  Matrix wq, wk, wv, wo;  // hidden x hidden
  Matrix bq, bk, bv, bo;  // 1 x hidden
  Matrix ln1_g, ln1_b;
  Matrix w1, b1;  // hidden x intermediate, 1 x intermediate
  Matrix w2, b2;  // intermediate x hidden, 1 x hidden
  Matrix ln2_g, ln2_b;
};

struct ModelParams {
  ModelConfig config;
  Matrix token_embedding;     // vocab x hidden
  Matrix position_embedding;  // seq_len x hidden
  Matrix emb_ln_g, emb_ln_b;
  std::vector<LayerParams> layers;
  Matrix out_w;  // hidden x vocab
  Matrix out_b;  // 1 x vocab

  // Visits every tensor in a fixed order with a stable name.
  template <class Self, class Fn>
  static void visit_impl(Self& self, Fn&& fn) {
    fn("token_embedding", self.token_embedding);
    fn("position_embedding", self.position_embedding);
    fn("emb_ln_g", self.emb_ln_g);
    fn("emb_ln_b", self.emb_ln_b);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      auto& L = self.layers[l];
      const std::string p = "layer" + std::to_string(l) + ".";
      fn(p + "wq", L.wq);
      fn(p + "bq", L.bq);
      fn(p + "wk", L.wk);
      fn(p + "bk", L.bk);
      fn(p + "wv", L.wv);
      fn(p + "bv", L.bv);
      fn(p + "wo", L.wo);
      fn(p + "bo", L.bo);
      fn(p + "ln1_g", L.ln1_g);
      fn(p + "ln1_b", L.ln1_b);
      fn(p + "w1", L.w1);
      fn(p + "b1", L.b1);
      fn(p + "w2", L.w2);
      fn(p + "b2", L.b2);
      fn(p + "ln2_g", L.ln2_g);
      fn(p + "ln2_b", L.ln2_b);
    }
    fn("out_w", self.out_w);
    fn("out_b", self.out_b);
  }
  template <class Fn>
  void visit(Fn&& fn) { visit_impl(*this, fn); }
  template <class Fn>
  void visit(Fn&& fn) const { visit_impl(*this, fn); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  // Zero tensors with this model's shapes (gradient buffers).
  ModelParams zeros_like() const {
    ModelParams z = *this;
    z.visit([](const std::string&, Matrix& m) { m.setZero(); });
    return z;
  }

  bool all_finite() const {
    bool ok = true;
    visit([&](const std::string&, const Matrix& m) { ok = ok && m.allFinite(); });
    return ok;
  }

  bool operator==(const ModelParams& o) const {
    if (!config.same_shape(o.config)) return false;
    std::vector<const Matrix*> mine, theirs;
    visit([&](const std::string&, const Matrix& m) { mine.push_back(&m); });
    o.visit([&](const std::string&, const Matrix& m) { theirs.push_back(&m); });
    for (std::size_t i = 0; i < mine.size(); ++i) {
      if (*mine[i] != *theirs[i]) return false;
    }
    return true;
  }
};

// V(2H + 1) + T H + 2H + L (4H^2 + 2 H I + 9H + I).
inline std::size_t parameter_count_formula(const ModelConfig& c) {
  const std::size_t v = c.vocab_size, h = static_cast<std::size_t>(c.hidden),
                    t = static_cast<std::size_t>(c.seq_len), i = static_cast<std::size_t>(c.intermediate),
                    l = static_cast<std::size_t>(c.n_layers);
  return v * (2 * h + 1) + t * h + 2 * h + l * (4 * h * h + 2 * h * i + 9 * h + i);
}

// Weights truncated-normal(0, init_std) at 2 sd; biases zero; LayerNorm
// gains one.
inline ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const auto v = static_cast<Eigen::Index>(config.vocab_size);
  const auto h = static_cast<Eigen::Index>(config.hidden);
  const auto t = static_cast<Eigen::Index>(config.seq_len);
  const auto in = static_cast<Eigen::Index>(config.intermediate);
  auto weight = [&](Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.truncated_normal(config.init_std);
    return m;
  };
  auto zeros = [](Eigen::Index c) { return Matrix::Zero(1, c).eval(); };
  auto ones = [](Eigen::Index c) { return Matrix::Ones(1, c).eval(); };
  ModelParams p;
  p.config = config;
  p.token_embedding = weight(v, h);
  p.position_embedding = weight(t, h);
  p.emb_ln_g = ones(h);
  p.emb_ln_b = zeros(h);
  for (int l = 0; l < config.n_layers; ++l) {
    LayerParams L;
    L.wq = weight(h, h);
    L.bq = zeros(h);
    L.wk = weight(h, h);
    L.bk = zeros(h);
    L.wv = weight(h, h);
    L.bv = zeros(h);
    L.wo = weight(h, h);
    L.bo = zeros(h);
    L.ln1_g = ones(h);
    L.ln1_b = zeros(h);
    L.w1 = weight(h, in);
    L.b1 = zeros(in);
    L.w2 = weight(in, h);
    L.b2 = zeros(h);
    L.ln2_g = ones(h);
    L.ln2_b = zeros(h);
    p.layers.push_back(std::move(L));
  }
  p.out_w = weight(h, v);
  p.out_b = zeros(v);
  return p;
}

// ---------------------------------------------------------------------------
// Forward / backward.

struct LayerNormCache {
  Matrix xhat;
  Vector inv_std;
};

struct LayerCache {
  Matrix x_in;
  Matrix q, k, v;
  std::vector<Matrix> attn;       // per (sequence, head), softmax output
  std::vector<Matrix> attn_drop;  // matching dropout scales, empty when off
  Matrix ctx;
  Matrix ao_drop;
  LayerNormCache ln1;
  Matrix x1;
  Matrix f1;
  Matrix gelu;
  Matrix ff_drop;
  LayerNormCache ln2;
};

struct ForwardCache {
  std::vector<TokenId> ids;
  LayerNormCache emb_ln;
  Matrix emb_drop;
  std::vector<LayerCache> layers;
  Matrix hidden;  // final encoder output
};

namespace detail {

inline Matrix layer_norm(const Matrix& x, const Matrix& g, const Matrix& b, double eps,
                         LayerNormCache* cache) {
  const Vector mean = x.rowwise().mean();
  Matrix xc = x.colwise() - mean;
  const Vector var = xc.array().square().rowwise().mean();
  const Vector inv = (var.array() + eps).rsqrt();
  Matrix xhat = xc.array().colwise() * inv.array();
  Matrix y = (xhat.array().rowwise() * g.row(0).array()).rowwise() + b.row(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = inv;
  }
  return y;
}

// Returns dx; accumulates dg, db.
inline Matrix layer_norm_backward(const Matrix& dy, const LayerNormCache& c, const Matrix& g,
                                  Matrix& dg, Matrix& db) {
  dg.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  db.row(0) += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * g.row(0).array();
  const Vector m1 = dxhat.rowwise().mean();
  const Vector m2 = (dxhat.array() * c.xhat.array()).rowwise().mean();
  Matrix dx = dxhat;
  dx.colwise() -= m1;
  dx -= (c.xhat.array().colwise() * m2.array()).matrix();
  return dx.array().colwise() * c.inv_std.array();
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }
inline double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * std::exp(-0.5 * x * x) * (0.5 * M_2_SQRTPI * M_SQRT1_2);
}

inline Matrix dropout_mask(Eigen::Index r, Eigen::Index c, double p, Rng& rng) {
  Matrix m(r, c);
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() < p ? 0.0 : keep;
  return m;
}

inline void add_bias(Matrix& x, const Matrix& b) { x.rowwise() += b.row(0); }

inline void softmax_rows(Matrix& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double mx = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - mx).exp();
    s.row(r) /= s.row(r).sum();
  }
}

}  // namespace detail

// Encodes `ids` (a flattened batch of whole sequences). Dropout is applied
// only when `rng` is given (training mode). `cache` may be null.
inline Matrix encode(const ModelParams& p, std::span<const TokenId> ids, Rng* rng, ForwardCache* cache) {
  const auto& c = p.config;
  const auto t = static_cast<Eigen::Index>(c.seq_len);
  const auto n = static_cast<Eigen::Index>(ids.size());
  if (n == 0 || n % t != 0) throw Error(ErrorCode::kInvalidConfig, "input is not whole sequences");
  const Eigen::Index batch = n / t;
  const Eigen::Index h = c.hidden;
  const int heads = c.n_heads;
  const Eigen::Index dh = c.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool train = rng != nullptr;

  Matrix x(n, h);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto id = static_cast<Eigen::Index>(ids[static_cast<std::size_t>(i)]);
    if (id >= p.token_embedding.rows()) throw Error(ErrorCode::kInvalidConfig, "token id outside vocabulary");
    x.row(i) = p.token_embedding.row(id) + p.position_embedding.row(i % t);
  }
  if (cache) {
    cache->ids.assign(ids.begin(), ids.end());
    cache->layers.assign(p.layers.size(), {});
  }
  x = detail::layer_norm(x, p.emb_ln_g, p.emb_ln_b, c.layernorm_eps, cache ? &cache->emb_ln : nullptr);
  if (train && c.dropout > 0) {
    Matrix m = detail::dropout_mask(n, h, c.dropout, *rng);
    x.array() *= m.array();
    if (cache) cache->emb_drop = std::move(m);
  }

  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const LayerParams& L = p.layers[l];
    LayerCache* lc = cache ? &cache->layers[l] : nullptr;
    Matrix q = x * L.wq, k = x * L.wk, v = x * L.wv;
    detail::add_bias(q, L.bq);
    detail::add_bias(k, L.bk);
    detail::add_bias(v, L.bv);
    Matrix ctx(n, h);
    for (Eigen::Index s = 0; s < batch; ++s) {
      for (int hd = 0; hd < heads; ++hd) {
        const auto qb = q.block(s * t, hd * dh, t, dh);
        const auto kb = k.block(s * t, hd * dh, t, dh);
        const auto vb = v.block(s * t, hd * dh, t, dh);
        Matrix a = (qb * kb.transpose()) * scale;
        detail::softmax_rows(a);
        if (train && c.attention_dropout > 0) {
          Matrix m = detail::dropout_mask(t, t, c.attention_dropout, *rng);
          ctx.block(s * t, hd * dh, t, dh) = (a.array() * m.array()).matrix() * vb;
          if (lc) lc->attn_drop.push_back(std::move(m));
        } else {
          ctx.block(s * t, hd * dh, t, dh) = a * vb;
        }
        if (lc) lc->attn.push_back(std::move(a));
      }
    }
    Matrix ao = ctx * L.wo;
    detail::add_bias(ao, L.bo);
    if (train && c.dropout > 0) {
      Matrix m = detail::dropout_mask(n, h, c.dropout, *rng);
      ao.array() *= m.array();
      if (lc) lc->ao_drop = std::move(m);
    }
    Matrix x1 = detail::layer_norm(x + ao, L.ln1_g, L.ln1_b, c.layernorm_eps, lc ? &lc->ln1 : nullptr);
    Matrix f1 = x1 * L.w1;
    detail::add_bias(f1, L.b1);
    Matrix g = f1.unaryExpr([](double z) { return detail::gelu(z); });
    Matrix f2 = g * L.w2;
    detail::add_bias(f2, L.b2);
    if (train && c.dropout > 0) {
      Matrix m = detail::dropout_mask(n, h, c.dropout, *rng);
      f2.array() *= m.array();
      if (lc) lc->ff_drop = std::move(m);
    }
    Matrix out = detail::layer_norm(x1 + f2, L.ln2_g, L.ln2_b, c.layernorm_eps, lc ? &lc->ln2 : nullptr);
    if (lc) {
      lc->x_in = std::move(x);
      lc->q = std::move(q);
      lc->k = std::move(k);
      lc->v = std::move(v);
      lc->ctx = std::move(ctx);
      lc->x1 = std::move(x1);
      lc->f1 = std::move(f1);
      lc->gelu = std::move(g);
    }
    x = std::move(out);
  }
  if (cache) cache->hidden = x;
  return x;
}

// Logits for the selected encoder rows.
inline Matrix project_rows(const ModelParams& p, const Matrix& hidden, std::span<const std::size_t> rows) {
  Matrix sel(static_cast<Eigen::Index>(rows.size()), hidden.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    sel.row(static_cast<Eigen::Index>(i)) = hidden.row(static_cast<Eigen::Index>(rows[i]));
  }
  Matrix logits = sel * p.out_w;
  detail::add_bias(logits, p.out_b);
  return logits;
}

inline Matrix softmax(Matrix logits) {
  detail::softmax_rows(logits);
  return logits;
}

inline Matrix log_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

// Per-position vocabulary distributions (seq_len x vocab) for one sequence,
// evaluation mode.
inline Matrix forward(const ModelParams& p, std::span<const TokenId> sequence) {
  const Matrix hidden = encode(p, sequence, nullptr, nullptr);
  std::vector<std::size_t> rows(sequence.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return softmax(project_rows(p, hidden, rows));
}

// Backpropagates d(loss)/d(logits) of `rows` through the head and encoder,
// accumulating into `grads`.
inline void backward(const ModelParams& p, const ForwardCache& cache, std::span<const std::size_t> rows,
                     const Matrix& dlogits, ModelParams& grads) {
  const auto& c = p.config;
  const auto t = static_cast<Eigen::Index>(c.seq_len);
  const auto n = static_cast<Eigen::Index>(cache.ids.size());
  const Eigen::Index batch = n / t;
  const Eigen::Index h = c.hidden;
  const Eigen::Index dh = c.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix sel(static_cast<Eigen::Index>(rows.size()), h);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    sel.row(static_cast<Eigen::Index>(i)) = cache.hidden.row(static_cast<Eigen::Index>(rows[i]));
  }
  grads.out_w.noalias() += sel.transpose() * dlogits;
  grads.out_b.row(0) += dlogits.colwise().sum();
  const Matrix dsel = dlogits * p.out_w.transpose();
  Matrix dx = Matrix::Zero(n, h);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    dx.row(static_cast<Eigen::Index>(rows[i])) += dsel.row(static_cast<Eigen::Index>(i));
  }

  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const LayerParams& L = p.layers[li];
    const LayerCache& lc = cache.layers[li];
    LayerParams& G = grads.layers[li];

    const Matrix dpre2 = detail::layer_norm_backward(dx, lc.ln2, L.ln2_g, G.ln2_g, G.ln2_b);
    Matrix dx1 = dpre2;
    Matrix df2 = dpre2;
    if (lc.ff_drop.size()) df2.array() *= lc.ff_drop.array();
    G.w2.noalias() += lc.gelu.transpose() * df2;
    G.b2.row(0) += df2.colwise().sum();
    Matrix df1 = df2 * L.w2.transpose();
    df1.array() *= lc.f1.unaryExpr([](double z) { return detail::gelu_grad(z); }).array();
    G.w1.noalias() += lc.x1.transpose() * df1;
    G.b1.row(0) += df1.colwise().sum();
    dx1.noalias() += df1 * L.w1.transpose();

    const Matrix dpre1 = detail::layer_norm_backward(dx1, lc.ln1, L.ln1_g, G.ln1_g, G.ln1_b);
    Matrix dx_in = dpre1;
    Matrix dao = dpre1;
    if (lc.ao_drop.size()) dao.array() *= lc.ao_drop.array();
    G.wo.noalias() += lc.ctx.transpose() * dao;
    G.bo.row(0) += dao.colwise().sum();
    const Matrix dctx = dao * L.wo.transpose();

    Matrix dq(n, h), dk(n, h), dv(n, h);
    std::size_t block = 0;
    for (Eigen::Index s = 0; s < batch; ++s) {
      for (int hd = 0; hd < c.n_heads; ++hd, ++block) {
        const Matrix& a = lc.attn[block];
        const auto qb = lc.q.block(s * t, hd * dh, t, dh);
        const auto kb = lc.k.block(s * t, hd * dh, t, dh);
        const auto vb = lc.v.block(s * t, hd * dh, t, dh);
        const auto dcb = dctx.block(s * t, hd * dh, t, dh);
        Matrix da;
        if (!lc.attn_drop.empty()) {
          const Matrix& m = lc.attn_drop[block];
          const Matrix ad = a.array() * m.array();
          dv.block(s * t, hd * dh, t, dh) = ad.transpose() * dcb;
          da = (dcb * vb.transpose()).array() * m.array();
        } else {
          dv.block(s * t, hd * dh, t, dh) = a.transpose() * dcb;
          da = dcb * vb.transpose();
        }
        const Vector inner = (da.array() * a.array()).rowwise().sum();
        Matrix ds = a.array() * (da.colwise() - inner).array();
        ds *= scale;
        dq.block(s * t, hd * dh, t, dh) = ds * kb;
        dk.block(s * t, hd * dh, t, dh) = ds.transpose() * qb;
      }
    }
    G.wq.noalias() += lc.x_in.transpose() * dq;
    G.bq.row(0) += dq.colwise().sum();
    G.wk.noalias() += lc.x_in.transpose() * dk;
    G.bk.row(0) += dk.colwise().sum();
    G.wv.noalias() += lc.x_in.transpose() * dv;
    G.bv.row(0) += dv.colwise().sum();
    dx_in.noalias() += dq * L.wq.transpose();
    dx_in.noalias() += dk * L.wk.transpose();
    dx_in.noalias() += dv * L.wv.transpose();
    dx = std::move(dx_in);
  }

  if (cache.emb_drop.size()) dx.array() *= cache.emb_drop.array();
  const Matrix de = detail::layer_norm_backward(dx, cache.emb_ln, p.emb_ln_g, grads.emb_ln_g, grads.emb_ln_b);
  for (Eigen::Index i = 0; i < n; ++i) {
    grads.token_embedding.row(static_cast<Eigen::Index>(cache.ids[static_cast<std::size_t>(i)])) += de.row(i);
    grads.position_embedding.row(i % t) += de.row(i);
  }
}

}  // namespace anoshift::mlm

#endif  // ANOSHIFT_MASKEDMODEL_MODEL_HPP_
