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

// Distribution-shift statistics: per-feature Jeffreys divergence between
// yearly histograms, class-conditional debiased Sinkhorn distances between
// yearly point clouds, and a PCA projection for plotting.

#ifndef ANOSHIFT_DRIFTSTATS_HPP_
#define ANOSHIFT_DRIFTSTATS_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "anoshift/error.hpp"
#include "anoshift/io.hpp"
#include "anoshift/parallel.hpp"
#include "anoshift/rng.hpp"
#include "anoshift/tokenize.hpp"
#include "json.hpp"

namespace anoshift {

inline constexpr double kHistogramSmoothing = 1e-6;

// A smoothed probability vector over an explicit support (token ids).
struct Histogram {
  std::vector<TokenId> support;
  std::vector<double> probs;

  // p_i proportional to counts_i / total + eps, renormalized.
  static Histogram from_counts(std::vector<TokenId> support, std::span<const double> counts,
                               double eps = kHistogramSmoothing) {
    if (support.size() != counts.size() || support.empty()) {
      throw Error(ErrorCode::kSupportMismatch, "histogram support and counts differ");
    }
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    Histogram h{std::move(support), std::vector<double>(counts.size())};
    for (std::size_t i = 0; i < counts.size(); ++i) {
      h.probs[i] = (total > 0 ? counts[i] / total : 0.0) + eps;
    }
    const double z = std::accumulate(h.probs.begin(), h.probs.end(), 0.0);
    for (auto& p : h.probs) p /= z;
    return h;
  }
};

// Vocabulary ids belonging to one feature position, plus UNK.
inline std::vector<TokenId> position_support(const Vocabulary& vocab, std::size_t position) {
  const std::string prefix = "f" + std::to_string(position) + ":";
  std::vector<TokenId> ids = {Vocabulary::kUnk};
  for (TokenId id = Vocabulary::kNumSpecial; id < vocab.size(); ++id) {
    if (vocab.token(id).rfind(prefix, 0) == 0) ids.push_back(id);
  }
  return ids;
}

inline Histogram feature_histogram(std::span<const TokenizedRecord> records, std::size_t position,
                                   const std::vector<TokenId>& support,
                                   double eps = kHistogramSmoothing) {
  std::vector<double> counts(support.size(), 0.0);
  for (const auto& r : records) {
    const auto it = std::lower_bound(support.begin(), support.end(), r.tokens[position]);
    if (it != support.end() && *it == r.tokens[position]) {
      counts[static_cast<std::size_t>(it - support.begin())] += 1.0;
    } else {
      counts[0] += 1.0;  // UNK bucket
    }
  }
  return Histogram::from_counts(support, counts, eps);
}

// KL(p,q) + KL(q,p) = sum (p - q) log(p / q).
inline double jeffreys(const Histogram& p, const Histogram& q) {
  if (p.support != q.support) throw Error(ErrorCode::kSupportMismatch, "histogram supports differ");
  double d = 0.0;
  for (std::size_t i = 0; i < p.probs.size(); ++i) {
    if (p.probs[i] == q.probs[i]) continue;
    d += (p.probs[i] - q.probs[i]) * (std::log(p.probs[i]) - std::log(q.probs[i]));
  }
  return d;
}

struct DistanceMatrix {
  std::vector<int> years;
  std::vector<double> values;  // row-major, years.size()^2
  std::string metric;          // "jeffreys" | "sinkhorn"
  std::string conditioning;    // "none", or "<row class>-<col class>"
  std::vector<bool> converged;  // per cell (sinkhorn); all true for jeffreys
  double max_marginal_error = 0.0;

  std::size_t size() const { return years.size(); }
  double at(std::size_t i, std::size_t j) const { return values[i * years.size() + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * years.size() + j]; }

  std::string to_csv() const {
    std::string out = "year";
    for (int y : years) out += "," + std::to_string(y);
    out += '\n';
    for (std::size_t i = 0; i < size(); ++i) {
      out += std::to_string(years[i]);
      for (std::size_t j = 0; j < size(); ++j) out += "," + format_double(at(i, j));
      out += '\n';
    }
    return out;
  }
};

struct YearTokens {
  int year = 0;
  std::vector<TokenizedRecord> records;
};

inline DistanceMatrix divergence_matrix(std::span<const YearTokens> years, std::size_t position,
                                        const Vocabulary& vocab, double eps = kHistogramSmoothing) {
  if (years.size() < 2) throw Error(ErrorCode::kInvalidConfig, "divergence matrix needs >= 2 years");
  const auto support = position_support(vocab, position);
  std::vector<Histogram> hists;
  for (const auto& y : years) hists.push_back(feature_histogram(y.records, position, support, eps));
  DistanceMatrix m;
  m.metric = "jeffreys";
  m.conditioning = "none";
  for (const auto& y : years) m.years.push_back(y.year);
  m.values.assign(years.size() * years.size(), 0.0);
  m.converged.assign(m.values.size(), true);
  for (std::size_t i = 0; i < years.size(); ++i) {
    for (std::size_t j = i + 1; j < years.size(); ++j) {
      m.at(i, j) = m.at(j, i) = jeffreys(hists[i], hists[j]);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Entropic optimal transport.

struct SinkhornOptions {
  double epsilon = 0.05;
  int max_iters = 10000;
  double tol = 1e-3;  // L1 error of the row marginal
};

struct SinkhornResult {
  double value = 0.0;           // regularized OT cost (dual objective)
  double marginal_error = 0.0;
  int iterations = 0;
  bool converged = false;
  // Dual potentials; the plan is a_i b_j exp((f_i + g_j - C_ij) / eps).
  Eigen::VectorXd f, g;
};

inline Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  const Eigen::VectorXd xn = x.rowwise().squaredNorm();
  const Eigen::VectorXd yn = y.rowwise().squaredNorm();
  Eigen::MatrixXd c = -2.0 * x * y.transpose();
  c.colwise() += xn;
  c.rowwise() += yn.transpose();
  return c.cwiseMax(0.0);
}

namespace detail {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// out_i = -eps * log sum_j w_j exp((pot_j - C_ij) / eps), over rows of C.
inline void soft_min(const RowMajorMatrix& cost, const Eigen::VectorXd& pot, double log_w, double eps,
                     Eigen::VectorXd& out) {
  out.resize(cost.rows());
  Eigen::ArrayXd z(cost.cols());
  for (Eigen::Index i = 0; i < cost.rows(); ++i) {
    z = (pot.array() - cost.row(i).transpose().array()) / eps;
    const double best = z.maxCoeff();
    out[i] = -eps * (log_w + best + std::log((z - best).exp().sum()));
  }
}

// L1 error of the row marginal given the pending f update.
inline double row_error(const Eigen::VectorXd& f, const Eigen::VectorXd& f_next, double eps) {
  return (((f - f_next).array() / eps).exp() - 1.0).abs().mean();
}

}  // namespace detail

// Log-domain Sinkhorn between uniform measures on the rows of x and y with
// squared Euclidean cost. Epsilon is annealed geometrically from the cost
// scale down to the target, warm-starting the potentials at each stage.
inline SinkhornResult sinkhorn_ot(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                  const SinkhornOptions& opt) {
  if (x.rows() == 0 || y.rows() == 0 || x.cols() != y.cols()) {
    throw Error(ErrorCode::kInvalidConfig, "sinkhorn needs non-empty point sets of equal dimension");
  }
  if (!(opt.epsilon > 0.0)) throw Error(ErrorCode::kInvalidConfig, "epsilon must be > 0");
  const detail::RowMajorMatrix cost = squared_distances(x, y);
  const detail::RowMajorMatrix cost_t = cost.transpose();
  const double n = static_cast<double>(x.rows());
  const double m = static_cast<double>(y.rows());
  const double log_a = -std::log(n), log_b = -std::log(m);

  Eigen::VectorXd f = Eigen::VectorXd::Zero(x.rows());
  Eigen::VectorXd g = Eigen::VectorXd::Zero(y.rows());
  Eigen::VectorXd f_next;

  SinkhornResult res;
  // Each stage runs to tolerance (or a share of the budget) before eps halves.
  auto run = [&](double eps, int budget) {
    detail::soft_min(cost, g, log_b, eps, f);
    detail::soft_min(cost_t, f, log_a, eps, g);
    for (int k = 1;; ++k, ++res.iterations) {
      // Columns are exact after the g update; the pending f update measures
      // the row marginal: row_i = a_i exp((f_i - f_next_i) / eps).
      detail::soft_min(cost, g, log_b, eps, f_next);
      res.marginal_error = detail::row_error(f, f_next, eps);
      if (res.marginal_error < opt.tol) return true;
      if (k >= budget) return false;
      f = f_next;
      detail::soft_min(cost_t, f, log_a, eps, g);
    }
  };
  const int stage_budget = std::max(1, opt.max_iters / 20);
  for (double e = std::max(cost.maxCoeff(), opt.epsilon) / 2; e > opt.epsilon; e *= 0.5) {
    run(e, stage_budget);
  }
  res.converged = run(opt.epsilon, opt.max_iters);
  res.value = f.mean() + g.mean();
  res.f = std::move(f);
  res.g = std::move(g);
  return res;
}

struct SinkhornDivergence {
  double value = 0.0;
  double marginal_error = 0.0;
  bool converged = false;
};

// S(X,Y) = OT(X,Y) - OT(X,X)/2 - OT(Y,Y)/2; zero when X equals Y.
inline SinkhornDivergence sinkhorn_divergence(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                              const SinkhornOptions& opt = {}) {
  const auto xy = sinkhorn_ot(x, y, opt);
  const auto xx = sinkhorn_ot(x, x, opt);
  const auto yy = sinkhorn_ot(y, y, opt);
  return {xy.value - 0.5 * xx.value - 0.5 * yy.value,
          std::max({xy.marginal_error, xx.marginal_error, yy.marginal_error}),
          xy.converged && xx.converged && yy.converged};
}

enum class ClassSide { kInlier, kOutlier };

inline std::string_view class_side_name(ClassSide c) {
  return c == ClassSide::kInlier ? "inlier" : "outlier";
}

struct YearPoints {
  int year = 0;
  Eigen::MatrixXd inliers;
  Eigen::MatrixXd outliers;

  const Eigen::MatrixXd& side(ClassSide c) const { return c == ClassSide::kInlier ? inliers : outliers; }
};

struct DatasetDistanceOptions {
  ClassSide row_class = ClassSide::kInlier;
  ClassSide col_class = ClassSide::kInlier;
  std::size_t sample_size = 5000;
  int repeats = 3;
  std::uint64_t seed = 0;
  SinkhornOptions sinkhorn;
  unsigned threads = 1;
};

inline Eigen::MatrixXd subsample_rows(const Eigen::MatrixXd& x, std::size_t k, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (k >= n) return x;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span(idx));
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(k), x.cols());
  for (std::size_t i = 0; i < k; ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

// Mean over repeats of the Sinkhorn divergence between seeded subsamples of
// the row-class points of year i and the col-class points of year j. Each
// (year, class, repeat) is subsampled once, so same-class diagonals are 0.
inline DistanceMatrix dataset_distance_report(std::span<const YearPoints> years,
                                              const DatasetDistanceOptions& opt) {
  const std::size_t n = years.size();
  if (n == 0) throw Error(ErrorCode::kInvalidConfig, "no years given");
  if (opt.repeats < 1) throw Error(ErrorCode::kInvalidConfig, "repeats must be >= 1");
  for (const auto& y : years) {
    for (auto side : {opt.row_class, opt.col_class}) {
      if (y.side(side).rows() == 0) {
        throw Error(ErrorCode::kEmptyClassSubset, std::string(class_side_name(side)) +
                                                      " subset of year " + std::to_string(y.year) +
                                                      " is empty");
      }
    }
  }
  auto sample = [&](std::size_t year_idx, ClassSide side, int rep) {
    const std::uint64_t stream = (static_cast<std::uint64_t>(years[year_idx].year) << 20) ^
                                 (static_cast<std::uint64_t>(side) << 16) ^
                                 static_cast<std::uint64_t>(rep);
    return subsample_rows(years[year_idx].side(side), opt.sample_size, derive_seed(opt.seed, stream));
  };
  const bool symmetric = opt.row_class == opt.col_class;
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = symmetric ? i : 0; j < n; ++j) cells.push_back({i, j});
  }
  std::vector<double> value(cells.size(), 0.0), err(cells.size(), 0.0);
  std::vector<char> ok(cells.size(), 1);
  parallel_for(cells.size(), opt.threads, [&](std::size_t c) {
    const auto [i, j] = cells[c];
    for (int r = 0; r < opt.repeats; ++r) {
      const auto x = sample(i, opt.row_class, r);
      const auto y = sample(j, opt.col_class, r);
      const auto s = sinkhorn_divergence(x, y, opt.sinkhorn);
      value[c] += s.value / opt.repeats;
      err[c] = std::max(err[c], s.marginal_error);
      ok[c] = ok[c] && s.converged;
    }
  });
  DistanceMatrix m;
  m.metric = "sinkhorn";
  m.conditioning = std::string(class_side_name(opt.row_class)) + "-" +
                   std::string(class_side_name(opt.col_class));
  for (const auto& y : years) m.years.push_back(y.year);
  m.values.assign(n * n, 0.0);
  m.converged.assign(n * n, true);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto [i, j] = cells[c];
    m.at(i, j) = value[c];
    m.converged[i * n + j] = ok[c];
    if (symmetric) {
      m.at(j, i) = value[c];
      m.converged[j * n + i] = ok[c];
    }
    m.max_marginal_error = std::max(m.max_marginal_error, err[c]);
  }
  return m;
}

// ---------------------------------------------------------------------------
// PCA by power iteration with deflation.

struct PcaResult {
  Eigen::MatrixXd coordinates;  // n x k'
  Eigen::MatrixXd components;   // d x k', unit columns
  Eigen::VectorXd eigenvalues;  // k', descending
  double total_variance = 0.0;
  bool degenerate = false;      // fewer than k components available
};

inline PcaResult pca_project(const Eigen::MatrixXd& x, int k = 2) {
  if (k < 1) throw Error(ErrorCode::kInvalidConfig, "k must be >= 1");
  if (x.rows() < k + 1) throw Error(ErrorCode::kInvalidConfig, "pca needs at least k+1 points");
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  const Eigen::Index d = cov.rows();
  PcaResult res;
  res.total_variance = cov.trace();
  std::vector<Eigen::VectorXd> comps;
  std::vector<double> vals;
  Rng rng(0x5EED);
  for (int c = 0; c < k && c < d; ++c) {
    Eigen::VectorXd v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = rng.normal();
    auto orthogonalize = [&](Eigen::VectorXd& u) {
      for (const auto& p : comps) u -= p.dot(u) * p;
    };
    orthogonalize(v);
    v.normalize();
    double lambda = 0.0;
    const double scale = std::max(1e-300, res.total_variance);
    for (int it = 0; it < 100000; ++it) {
      Eigen::VectorXd w = cov * v;
      orthogonalize(w);
      lambda = v.dot(w);
      const double residual = (w - lambda * v).norm();
      const double norm = w.norm();
      if (norm <= 1e-300) break;
      v = w / norm;
      if (residual <= 1e-13 * scale) break;
    }
    lambda = v.dot(cov * v);
    if (lambda <= 1e-12 * std::max(1.0, res.total_variance)) {
      res.degenerate = true;
      break;
    }
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    comps.push_back(v);
    vals.push_back(lambda);
    cov -= lambda * v * v.transpose();
  }
  if (static_cast<int>(comps.size()) < k) res.degenerate = true;
  const auto kk = static_cast<Eigen::Index>(comps.size());
  res.components.resize(d, kk);
  res.eigenvalues.resize(kk);
  for (Eigen::Index c = 0; c < kk; ++c) {
    res.components.col(c) = comps[static_cast<std::size_t>(c)];
    res.eigenvalues[c] = vals[static_cast<std::size_t>(c)];
  }
  res.coordinates = centered * res.components;
  return res;
}

}  // namespace anoshift

#endif  // ANOSHIFT_DRIFTSTATS_HPP_
