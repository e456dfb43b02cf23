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

// Classical unsupervised detectors over real feature vectors, and the
// record-level scorer interface every detector (including the masked model)
// implements. Scores follow one convention: higher is more anomalous.

#ifndef ANOSHIFT_DETECTORS_HPP_
#define ANOSHIFT_DETECTORS_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "anoshift/error.hpp"
#include "anoshift/parallel.hpp"
#include "anoshift/rng.hpp"
#include "anoshift/tokenize.hpp"
#include "anoshift/vectorize.hpp"
#include "json.hpp"

namespace anoshift {

// Sorted per-dimension samples with the +1-smoothed tail convention
// F(x) = (#{X <= x} + 1) / (n + 1), so no tail probability is ever 0.
class TailModel {
 public:
  void fit(const Eigen::MatrixXd& x) {
    if (x.rows() < 2) throw Error(ErrorCode::kEmptyInput, "tail model needs >= 2 points");
    columns_.assign(static_cast<std::size_t>(x.cols()), {});
    skew_.assign(columns_.size(), 0.0);
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      auto& col = columns_[static_cast<std::size_t>(c)];
      col.assign(x.col(c).data(), x.col(c).data() + x.rows());
      std::sort(col.begin(), col.end());
      const double n = static_cast<double>(col.size());
      const double mean = std::accumulate(col.begin(), col.end(), 0.0) / n;
      double m2 = 0.0, m3 = 0.0;
      for (double v : col) {
        m2 += (v - mean) * (v - mean);
        m3 += (v - mean) * (v - mean) * (v - mean);
      }
      m2 /= n;
      m3 /= n;
      skew_[static_cast<std::size_t>(c)] = m2 > 1e-300 ? m3 / std::pow(m2, 1.5) : 0.0;
    }
  }

  bool fitted() const { return !columns_.empty(); }
  std::size_t dimension() const { return columns_.size(); }

  // -log left tail, -log right tail, -log skewness-selected tail.
  struct Tails {
    double left, right, automatic;
  };

  Tails tails(std::size_t dim, double v) const {
    const auto& col = columns_[dim];
    const double n1 = static_cast<double>(col.size()) + 1.0;
    const auto le = static_cast<double>(std::upper_bound(col.begin(), col.end(), v) - col.begin());
    const auto ge = static_cast<double>(col.end() - std::lower_bound(col.begin(), col.end(), v));
    const double left = -std::log((le + 1.0) / n1);
    const double right = -std::log((ge + 1.0) / n1);
    return {left, right, skew_[dim] < 0.0 ? left : right};
  }

  nlohmann::json to_json() const { return {{"columns", columns_}, {"skew", skew_}}; }
  void from_json(const nlohmann::json& j) {
    columns_ = j.at("columns").get<std::vector<std::vector<double>>>();
    skew_ = j.at("skew").get<std::vector<double>>();
  }

 private:
  std::vector<std::vector<double>> columns_;
  std::vector<double> skew_;
};

// ECOD: per dimension the most extreme of the left, right and
// skewness-selected tail scores, summed over dimensions.
class Ecod {
 public:
  static constexpr std::string_view kName = "ecod";

  void fit(const Eigen::MatrixXd& x, std::uint64_t /*seed*/ = 0) { tails_.fit(x); }

  double score(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    if (!tails_.fitted()) throw Error(ErrorCode::kNotFitted, "ecod used before fit");
    double s = 0.0;
    for (std::size_t d = 0; d < tails_.dimension(); ++d) {
      const auto t = tails_.tails(d, row[static_cast<Eigen::Index>(d)]);
      s += std::max({t.left, t.right, t.automatic});
    }
    return s;
  }

  nlohmann::json to_json() const { return tails_.to_json(); }
  void from_json(const nlohmann::json& j) { tails_.from_json(j); }

 private:
  TailModel tails_;
};

// COPOD: empirical-copula tail probabilities aggregated as the maximum of the
// three dimension sums (left, right, skewness-corrected).
class Copod {
 public:
  static constexpr std::string_view kName = "copod";

  void fit(const Eigen::MatrixXd& x, std::uint64_t /*seed*/ = 0) { tails_.fit(x); }

  double score(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    if (!tails_.fitted()) throw Error(ErrorCode::kNotFitted, "copod used before fit");
    double left = 0.0, right = 0.0, automatic = 0.0;
    for (std::size_t d = 0; d < tails_.dimension(); ++d) {
      const auto t = tails_.tails(d, row[static_cast<Eigen::Index>(d)]);
      left += t.left;
      right += t.right;
      automatic += t.automatic;
    }
    return std::max({left, right, automatic});
  }

  nlohmann::json to_json() const { return tails_.to_json(); }
  void from_json(const nlohmann::json& j) { tails_.from_json(j); }

 private:
  TailModel tails_;
};

// Average unsuccessful-search path length of a BST over n points.
inline double average_path_length(double n) {
  if (n <= 1.0) return 0.0;
  if (n <= 2.0) return 1.0;
  constexpr double kEulerGamma = 0.5772156649015329;
  return 2.0 * (std::log(n - 1.0) + kEulerGamma) - 2.0 * (n - 1.0) / n;
}

class IsolationForest {
 public:
  static constexpr std::string_view kName = "isoforest";

  struct Options {
    int n_trees = 100;
    std::size_t subsample = 256;
  };

  IsolationForest() = default;
  explicit IsolationForest(Options opt) : opt_(opt) {}

  void fit(const Eigen::MatrixXd& x, std::uint64_t seed) {
    if (x.rows() < 2) throw Error(ErrorCode::kEmptyInput, "isolation forest needs >= 2 points");
    if (opt_.n_trees < 1 || opt_.subsample < 2) {
      throw Error(ErrorCode::kInvalidConfig, "need n_trees >= 1 and subsample >= 2");
    }
    psi_ = std::min<std::size_t>(opt_.subsample, static_cast<std::size_t>(x.rows()));
    height_limit_ = static_cast<int>(std::ceil(std::log2(static_cast<double>(psi_))));
    trees_.clear();
    Rng rng(seed);
    std::vector<std::size_t> all(static_cast<std::size_t>(x.rows()));
    for (int t = 0; t < opt_.n_trees; ++t) {
      std::iota(all.begin(), all.end(), 0);
      for (std::size_t i = 0; i < psi_; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(all.size() - i));
        std::swap(all[i], all[j]);
      }
      std::vector<std::size_t> sample(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(psi_));
      Tree tree;
      build(tree, x, sample, 0, rng);
      trees_.push_back(std::move(tree));
    }
  }

  double path_length(const Eigen::Ref<const Eigen::RowVectorXd>& row, std::size_t tree) const {
    const auto& nodes = trees_[tree].nodes;
    std::size_t i = 0;
    int depth = 0;
    while (nodes[i].feature >= 0) {
      i = row[nodes[i].feature] <= nodes[i].threshold ? static_cast<std::size_t>(nodes[i].left)
                                                      : static_cast<std::size_t>(nodes[i].right);
      ++depth;
    }
    return depth + average_path_length(static_cast<double>(nodes[i].size));
  }

  // 2^(-E[h(x)] / c(psi)), in (0, 1).
  double score(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    if (trees_.empty()) throw Error(ErrorCode::kNotFitted, "isolation forest used before fit");
    double total = 0.0;
    for (std::size_t t = 0; t < trees_.size(); ++t) total += path_length(row, t);
    const double mean = total / static_cast<double>(trees_.size());
    return std::exp2(-mean / average_path_length(static_cast<double>(psi_)));
  }

  std::size_t subsample_size() const { return psi_; }
  int height_limit() const { return height_limit_; }

  nlohmann::json to_json() const {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : trees_) {
      nlohmann::json nodes = nlohmann::json::array();
      for (const auto& n : t.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.size});
      trees.push_back(nodes);
    }
    return {{"n_trees", opt_.n_trees}, {"subsample", opt_.subsample}, {"psi", psi_},
            {"height_limit", height_limit_}, {"trees", trees}};
  }

  void from_json(const nlohmann::json& j) {
    opt_.n_trees = j.at("n_trees").get<int>();
    opt_.subsample = j.at("subsample").get<std::size_t>();
    psi_ = j.at("psi").get<std::size_t>();
    height_limit_ = j.at("height_limit").get<int>();
    trees_.clear();
    for (const auto& t : j.at("trees")) {
      Tree tree;
      for (const auto& n : t) {
        tree.nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(),
                              n.at(3).get<int>(), n.at(4).get<std::size_t>()});
      }
      trees_.push_back(std::move(tree));
    }
  }

 private:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::size_t size = 0;
  };
  struct Tree {
    std::vector<Node> nodes;
  };

  // Split feature drawn uniformly among the features that still vary in the
  // node; threshold uniform in [min, max); `<= threshold` goes left.
  int build(Tree& tree, const Eigen::MatrixXd& x, std::vector<std::size_t>& idx, int depth, Rng& rng) {
    const int self = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({-1, 0.0, -1, -1, idx.size()});
    if (depth >= height_limit_ || idx.size() <= 1) return self;
    std::vector<int> varying;
    std::vector<double> lo, hi;
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
      double mn = x(static_cast<Eigen::Index>(idx[0]), f), mx = mn;
      for (auto i : idx) {
        const double v = x(static_cast<Eigen::Index>(i), f);
        mn = std::min(mn, v);
        mx = std::max(mx, v);
      }
      if (mx > mn) {
        varying.push_back(static_cast<int>(f));
        lo.push_back(mn);
        hi.push_back(mx);
      }
    }
    if (varying.empty()) return self;
    const auto pick = static_cast<std::size_t>(rng.below(varying.size()));
    const int feature = varying[pick];
    double threshold = rng.uniform(lo[pick], hi[pick]);
    if (threshold >= hi[pick]) threshold = lo[pick];
    std::vector<std::size_t> left, right;
    for (auto i : idx) {
      (x(static_cast<Eigen::Index>(i), feature) <= threshold ? left : right).push_back(i);
    }
    const int l = build(tree, x, left, depth + 1, rng);
    const int r = build(tree, x, right, depth + 1, rng);
    tree.nodes[static_cast<std::size_t>(self)].feature = feature;
    tree.nodes[static_cast<std::size_t>(self)].threshold = threshold;
    tree.nodes[static_cast<std::size_t>(self)].left = l;
    tree.nodes[static_cast<std::size_t>(self)].right = r;
    return self;
  }

  Options opt_;
  std::size_t psi_ = 0;
  int height_limit_ = 0;
  std::vector<Tree> trees_;
};

// Local outlier factor in novelty mode: reachability over exact k nearest
// neighbours found by a brute-force scan of the training set.
class Lof {
 public:
  static constexpr std::string_view kName = "lof";

  explicit Lof(int k = 20) : k_(k) {}

  void fit(const Eigen::MatrixXd& x, std::uint64_t /*seed*/ = 0) {
    if (k_ < 1) throw Error(ErrorCode::kInvalidConfig, "k must be >= 1");
    if (x.rows() <= k_) {
      throw Error(ErrorCode::kKTooLarge, "LOF needs more than k = " + std::to_string(k_) + " points");
    }
    train_ = x;
    const auto n = static_cast<std::size_t>(x.rows());
    k_distance_.assign(n, 0.0);
    std::vector<std::vector<std::pair<double, std::size_t>>> neighbours(n);
    for_each_knn(x, /*exclude_self=*/true, [&](std::size_t i, auto&& nn) {
      neighbours[i] = nn;
      k_distance_[i] = nn.back().first;
    });
    lrd_.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) lrd_[i] = local_density(neighbours[i]);
  }

  double score(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    Eigen::MatrixXd one = row;
    return score_rows(one)[0];
  }

  Eigen::VectorXd score_rows(const Eigen::MatrixXd& x) const {
    if (lrd_.empty()) throw Error(ErrorCode::kNotFitted, "lof used before fit");
    Eigen::VectorXd out(x.rows());
    for_each_knn(x, /*exclude_self=*/false, [&](std::size_t i, auto&& nn) {
      double mean_lrd = 0.0;
      for (const auto& [d, j] : nn) mean_lrd += lrd_[j];
      mean_lrd /= static_cast<double>(nn.size());
      out[static_cast<Eigen::Index>(i)] = mean_lrd / local_density(nn);
    });
    return out;
  }

  int k() const { return k_; }

  nlohmann::json to_json() const {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(train_.rows()));
    for (Eigen::Index i = 0; i < train_.rows(); ++i) {
      for (Eigen::Index c = 0; c < train_.cols(); ++c) rows[static_cast<std::size_t>(i)].push_back(train_(i, c));
    }
    return {{"k", k_}, {"train", rows}, {"k_distance", k_distance_}, {"lrd", lrd_}};
  }

  void from_json(const nlohmann::json& j) {
    k_ = j.at("k").get<int>();
    const auto rows = j.at("train").get<std::vector<std::vector<double>>>();
    train_.resize(static_cast<Eigen::Index>(rows.size()),
                  rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t c = 0; c < rows[i].size(); ++c) {
        train_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
      }
    }
    k_distance_ = j.at("k_distance").get<std::vector<double>>();
    lrd_ = j.at("lrd").get<std::vector<double>>();
  }

 private:
  double local_density(const std::vector<std::pair<double, std::size_t>>& nn) const {
    double reach = 0.0;
    for (const auto& [d, j] : nn) reach += std::max(k_distance_[j], d);
    return 1.0 / (reach / static_cast<double>(nn.size()) + 1e-10);
  }

  // Calls fn(query index, k nearest (distance, train index) ascending) with
  // distance ties broken by index. Distances come in row blocks via Gram
  // products.
  template <class Fn>
  void for_each_knn(const Eigen::MatrixXd& q, bool exclude_self, Fn&& fn) const {
    const Eigen::VectorXd tn = train_.rowwise().squaredNorm();
    const auto n_train = static_cast<std::size_t>(train_.rows());
    constexpr Eigen::Index kBlock = 256;
    std::vector<std::pair<double, std::size_t>> cand;
    for (Eigen::Index start = 0; start < q.rows(); start += kBlock) {
      const Eigen::Index len = std::min(kBlock, q.rows() - start);
      const Eigen::MatrixXd qb = q.middleRows(start, len);
      Eigen::MatrixXd d2 = -2.0 * qb * train_.transpose();
      d2.colwise() += qb.rowwise().squaredNorm();
      d2.rowwise() += tn.transpose();
      for (Eigen::Index r = 0; r < len; ++r) {
        const auto qi = static_cast<std::size_t>(start + r);
        cand.clear();
        for (std::size_t j = 0; j < n_train; ++j) {
          if (exclude_self && j == qi) continue;
          cand.push_back({std::sqrt(std::max(0.0, d2(r, static_cast<Eigen::Index>(j)))), j});
        }
        const auto k = static_cast<std::size_t>(k_);
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
        fn(qi, std::vector<std::pair<double, std::size_t>>(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k)));
      }
    }
  }

  int k_;
  Eigen::MatrixXd train_;
  std::vector<double> k_distance_;
  std::vector<double> lrd_;
};

template <class Algo>
Eigen::VectorXd score_rows(const Algo& algo, const Eigen::MatrixXd& x, unsigned threads = 1) {
  if constexpr (requires { algo.score_rows(x); }) {
    return algo.score_rows(x);
  } else {
    Eigen::VectorXd out(x.rows());
    parallel_for(static_cast<std::size_t>(x.rows()), threads, [&](std::size_t i) {
      out[static_cast<Eigen::Index>(i)] = algo.score(x.row(static_cast<Eigen::Index>(i)));
    });
    return out;
  }
}

// ---------------------------------------------------------------------------
// Record-level scorers.

class AnomalyScorer {
 public:
  virtual ~AnomalyScorer() = default;
  virtual std::string name() const = 0;
  // Deterministic given (train, vocab, seed).
  virtual void fit(std::span<const RawRecord> train, const Vocabulary& vocab, std::uint64_t seed) = 0;
  // Pure given the fitted state.
  virtual std::vector<double> score(std::span<const RawRecord> records) const = 0;
  virtual nlohmann::json state() const = 0;
};

// A vector detector behind a FeatureVectorizer.
template <class Algo>
class VectorScorer : public AnomalyScorer {
 public:
  VectorScorer(Algo algo, VectorMode mode, TreatmentTable treatments = default_treatments(),
               unsigned threads = 1)
      : algo_(std::move(algo)), vectorizer_(mode, treatments), threads_(threads) {}

  std::string name() const override {
    std::string n(Algo::kName);
    if (vectorizer_.mode() == VectorMode::kRawNumeric) n += "-raw";
    return n;
  }

  void fit(std::span<const RawRecord> train, const Vocabulary& /*vocab*/, std::uint64_t seed) override {
    vectorizer_.fit(train);
    algo_.fit(vectorizer_.transform(train), seed);
  }

  std::vector<double> score(std::span<const RawRecord> records) const override {
    const Eigen::VectorXd s = score_rows(algo_, vectorizer_.transform(records), threads_);
    return {s.data(), s.data() + s.size()};
  }

  nlohmann::json state() const override {
    return {{"format", "anoshift-detector"},
            {"version", 1},
            {"detector", std::string(Algo::kName)},
            {"vectorizer", vectorizer_.to_json()},
            {"model", algo_.to_json()}};
  }

  void load_state(const nlohmann::json& j) {
    vectorizer_ = FeatureVectorizer::from_json(j.at("vectorizer"));
    algo_.from_json(j.at("model"));
  }

  const Algo& algorithm() const { return algo_; }

 private:
  Algo algo_;
  FeatureVectorizer vectorizer_;
  unsigned threads_;
};

struct DetectorOptions {
  VectorMode mode = VectorMode::kOneHot;
  TreatmentTable treatments = default_treatments();
  int isoforest_trees = 100;
  std::size_t isoforest_subsample = 256;
  int lof_k = 20;
  unsigned threads = 1;
};

inline std::unique_ptr<AnomalyScorer> make_vector_scorer(std::string_view name,
                                                         const DetectorOptions& opt = {}) {
  if (name == "ecod") return std::make_unique<VectorScorer<Ecod>>(Ecod{}, opt.mode, opt.treatments, opt.threads);
  if (name == "copod") return std::make_unique<VectorScorer<Copod>>(Copod{}, opt.mode, opt.treatments, opt.threads);
  if (name == "isoforest") {
    return std::make_unique<VectorScorer<IsolationForest>>(
        IsolationForest({opt.isoforest_trees, opt.isoforest_subsample}), opt.mode, opt.treatments,
        opt.threads);
  }
  if (name == "lof") return std::make_unique<VectorScorer<Lof>>(Lof(opt.lof_k), opt.mode, opt.treatments, opt.threads);
  return nullptr;
}

// Restores a scorer from the blob written by VectorScorer::state().
inline std::unique_ptr<AnomalyScorer> load_vector_scorer(const nlohmann::json& j, unsigned threads = 1) {
  try {
    if (j.at("format") != "anoshift-detector" || j.at("version") != 1) {
      throw Error(ErrorCode::kFormat, "not a version-1 detector state");
    }
    const auto name = j.at("detector").get<std::string>();
    const auto mode = vector_mode_from_name(j.at("vectorizer").at("mode").get<std::string>());
    DetectorOptions opt;
    opt.mode = mode;
    opt.threads = threads;
    auto make = [&]<class Algo>(Algo algo) -> std::unique_ptr<AnomalyScorer> {
      auto s = std::make_unique<VectorScorer<Algo>>(std::move(algo), mode, default_treatments(), threads);
      s->load_state(j);
      return s;
    };
    if (name == "ecod") return make(Ecod{});
    if (name == "copod") return make(Copod{});
    if (name == "isoforest") return make(IsolationForest{});
    if (name == "lof") return make(Lof{});
    throw Error(ErrorCode::kFormat, "unknown detector '" + name + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("bad detector state: ") + e.what());
  }
}

}  // namespace anoshift

#endif  // ANOSHIFT_DETECTORS_HPP_
