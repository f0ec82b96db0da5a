#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pmvge/model.hpp"

namespace pmvge {

struct Embedding {
  std::vector<Eigen::VectorXd> y;
  std::vector<ViewId> views;
  std::vector<std::string> ext_ids;

  int n() const { return static_cast<int>(y.size()); }
  int K() const { return y.empty() ? 0 : static_cast<int>(y[0].size()); }
};

// y_i = f^(d_i)(x_i) for every node. Inductive: works for any dataset whose
// views match the trained encoders, including nodes unseen in training.
inline Embedding embed_all(const ModelState& state, const Dataset& ds) {
  state.validate();
  Embedding emb;
  emb.y.reserve(ds.nodes.size());
  for (const auto& nd : ds.nodes) {
    emb.y.push_back(forward(state.encoders, nd.view, nd.x));
    emb.views.push_back(nd.view);
    emb.ext_ids.push_back(nd.ext_id);
  }
  return emb;
}

inline void write_embedding(const Embedding& emb, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out.precision(17);
  for (int i = 0; i < emb.n(); ++i) {
    out << emb.ext_ids[static_cast<std::size_t>(i)] << '\t'
        << emb.views[static_cast<std::size_t>(i)] << '\t';
    const auto& v = emb.y[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      if (k) out << ',';
      out << v[k];
    }
    out << '\n';
  }
}

inline Embedding read_embedding(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  Embedding emb;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto f = detail::split(line, '\t');
    if (f.size() != 3) throw DataError("embedding row needs 3 fields: " + line);
    emb.ext_ids.push_back(f[0]);
    emb.views.push_back(static_cast<ViewId>(detail::parse_int(f[1], "view")));
    auto vals = detail::split(f[2], ',');
    Eigen::VectorXd v(static_cast<Eigen::Index>(vals.size()));
    for (std::size_t k = 0; k < vals.size(); ++k)
      v[static_cast<Eigen::Index>(k)] = detail::parse_real(vals[k], "entry");
    emb.y.push_back(std::move(v));
  }
  return emb;
}

// ---------------------------------------------------------------------------
// Average precision of a cosine-ranked retrieval list. Ties break by
// candidate index ascending so the metric is deterministic.

inline double average_precision(const Eigen::VectorXd& query,
                                const std::vector<Eigen::VectorXd>& candidates,
                                const std::set<int>& relevant) {
  if (candidates.empty()) throw UsageError("average_precision: no candidates");
  if (relevant.empty())
    throw UsageError("average_precision: no relevant items");
  const double qn = query.norm();
  if (qn == 0.0) throw NumericError("zero-norm query vector");
  std::vector<std::pair<double, int>> scored;
  scored.reserve(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const double cn = candidates[c].norm();
    if (cn == 0.0)
      throw NumericError("zero-norm candidate vector at index " +
                         std::to_string(c));
    scored.emplace_back(query.dot(candidates[c]) / (qn * cn),
                        static_cast<int>(c));
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  double ap = 0.0;
  int hits = 0;
  for (std::size_t rank = 0; rank < scored.size(); ++rank) {
    if (relevant.count(scored[rank].second)) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return ap / static_cast<double>(relevant.size());
}

// ---------------------------------------------------------------------------
// k-means with k-means++ seeding, best-of-restarts by within-cluster SSE,
// then NMI against labels with geometric-mean normalization (natural logs).

namespace detail {

struct KmeansResult {
  std::vector<int> assignment;
  double sse = 0.0;
};

inline KmeansResult kmeans_once(const std::vector<Eigen::VectorXd>& pts, int k,
                                Rng& rng) {
  const int n = static_cast<int>(pts.size());
  std::vector<Eigen::VectorXd> centers;
  centers.reserve(static_cast<std::size_t>(k));
  // k-means++ seeding
  centers.push_back(pts[rng.uniform_int(static_cast<std::uint64_t>(n))]);
  std::vector<double> d2(static_cast<std::size_t>(n));
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers)
        best = std::min(best, (pts[static_cast<std::size_t>(i)] - c).squaredNorm());
      d2[static_cast<std::size_t>(i)] = best;
      total += best;
    }
    if (total <= 0.0) {
      // all remaining points coincide with a center
      centers.push_back(pts[rng.uniform_int(static_cast<std::uint64_t>(n))]);
      continue;
    }
    double u = rng.uniform() * total;
    int pick = n - 1;
    for (int i = 0; i < n; ++i) {
      u -= d2[static_cast<std::size_t>(i)];
      if (u <= 0.0) {
        pick = i;
        break;
      }
    }
    centers.push_back(pts[static_cast<std::size_t>(pick)]);
  }

  KmeansResult res;
  res.assignment.assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int bi = 0;
      for (int c = 0; c < k; ++c) {
        double d = (pts[static_cast<std::size_t>(i)] -
                    centers[static_cast<std::size_t>(c)])
                       .squaredNorm();
        if (d < best) {
          best = d;
          bi = c;
        }
      }
      if (res.assignment[static_cast<std::size_t>(i)] != bi) {
        res.assignment[static_cast<std::size_t>(i)] = bi;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<Eigen::VectorXd> sums(
        static_cast<std::size_t>(k),
        Eigen::VectorXd::Zero(pts[0].size()));
    std::vector<int> cnt(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      sums[static_cast<std::size_t>(res.assignment[static_cast<std::size_t>(i)])] +=
          pts[static_cast<std::size_t>(i)];
      ++cnt[static_cast<std::size_t>(res.assignment[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c)
      if (cnt[static_cast<std::size_t>(c)] > 0)
        centers[static_cast<std::size_t>(c)] =
            sums[static_cast<std::size_t>(c)] / cnt[static_cast<std::size_t>(c)];
  }
  res.sse = 0.0;
  for (int i = 0; i < n; ++i)
    res.sse += (pts[static_cast<std::size_t>(i)] -
                centers[static_cast<std::size_t>(
                    res.assignment[static_cast<std::size_t>(i)])])
                   .squaredNorm();
  return res;
}

}  // namespace detail

// NMI = I(a;b) / sqrt(H(a) H(b)), natural logs; 0 when either entropy is 0.
inline double nmi(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty())
    throw UsageError("nmi: partitions must be nonempty and aligned");
  const double n = static_cast<double>(a.size());
  std::map<int, double> ca, cb;
  std::map<std::pair<int, int>, double> cab;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca[a[i]] += 1.0;
    cb[b[i]] += 1.0;
    cab[{a[i], b[i]}] += 1.0;
  }
  double ha = 0.0, hb = 0.0, mi = 0.0;
  for (auto& [k, c] : ca) ha -= c / n * std::log(c / n);
  for (auto& [k, c] : cb) hb -= c / n * std::log(c / n);
  for (auto& [kk, c] : cab)
    mi += c / n * std::log((c / n) / (ca[kk.first] / n * cb[kk.second] / n));
  if (ha <= 0.0 || hb <= 0.0) return 0.0;
  return mi / std::sqrt(ha * hb);
}

inline double kmeans_nmi(const Embedding& emb, const std::vector<int>& labels,
                         int k, std::uint64_t seed, int restarts = 10) {
  if (k < 2) throw UsageError("kmeans_nmi: k must be >= 2");
  if (emb.n() < k) throw UsageError("kmeans_nmi: fewer points than clusters");
  if (static_cast<int>(labels.size()) != emb.n())
    throw UsageError("kmeans_nmi: labels must align with embedding");
  bool all_same = true;
  for (int i = 1; i < emb.n() && all_same; ++i)
    all_same = emb.y[static_cast<std::size_t>(i)]
                   .isApprox(emb.y[0]);
  if (all_same) return 0.0;  // degenerate embedding

  detail::KmeansResult best;
  best.sse = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Rng rng = Rng::substream(seed, "kmeans-restart-" + std::to_string(r));
    auto res = detail::kmeans_once(emb.y, k, rng);
    if (res.sse < best.sse) best = res;  // tie keeps lowest restart index
  }
  return nmi(best.assignment, labels);
}

// ---------------------------------------------------------------------------
// Multinomial logistic regression on embeddings, full-batch gradient descent
// with L2 regularization; returns test accuracy.

inline double softmax_classify(const std::vector<Eigen::VectorXd>& train_x,
                               const std::vector<int>& train_y,
                               const std::vector<Eigen::VectorXd>& test_x,
                               const std::vector<int>& test_y, double reg = 1e-4,
                               std::uint64_t seed = 0, int max_iters = 2000,
                               double grad_tol = 1e-6) {
  (void)seed;  // deterministic zero init; seed kept for interface stability
  if (train_x.empty() || train_x.size() != train_y.size())
    throw UsageError("softmax_classify: bad training data");
  if (test_x.size() != test_y.size())
    throw UsageError("softmax_classify: bad test data");
  const int C = *std::max_element(train_y.begin(), train_y.end());
  if (C < 2) throw UsageError("softmax_classify: need >= 2 classes");
  std::set<int> seen(train_y.begin(), train_y.end());
  for (int c = 1; c <= C; ++c)
    if (!seen.count(c))
      throw UsageError("softmax_classify: class " + std::to_string(c) +
                       " absent from training set");
  for (int c : test_y)
    if (c < 1 || c > C)
      throw UsageError("softmax_classify: test label outside training classes");

  const int K = static_cast<int>(train_x[0].size());
  const int n = static_cast<int>(train_x.size());
  Eigen::MatrixXd X(K, n);
  for (int i = 0; i < n; ++i) X.col(i) = train_x[static_cast<std::size_t>(i)];
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(C, K);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(C);

  auto objective = [&](const Eigen::MatrixXd& Wc, const Eigen::VectorXd& bc,
                       Eigen::MatrixXd* gW, Eigen::VectorXd* gb) {
    Eigen::MatrixXd S = Wc * X;  // C x n
    S.colwise() += bc;
    double loss = 0.0;
    Eigen::MatrixXd P(C, n);
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd s = S.col(i);
      const double smax = s.maxCoeff();
      Eigen::VectorXd e = (s.array() - smax).exp();
      const double z = e.sum();
      P.col(i) = e / z;
      loss -= s[train_y[static_cast<std::size_t>(i)] - 1] - smax - std::log(z);
    }
    loss /= n;
    loss += 0.5 * reg * Wc.squaredNorm();
    if (gW) {
      Eigen::MatrixXd T = P;
      for (int i = 0; i < n; ++i)
        T(train_y[static_cast<std::size_t>(i)] - 1, i) -= 1.0;
      *gW = T * X.transpose() / n + reg * Wc;
      *gb = T.rowwise().sum() / n;
    }
    return loss;
  };

  double lr = 1.0;
  Eigen::MatrixXd gW;
  Eigen::VectorXd gb;
  double loss = objective(W, b, &gW, &gb);
  for (int it = 0; it < max_iters; ++it) {
    const double gnorm = std::sqrt(gW.squaredNorm() + gb.squaredNorm());
    if (gnorm < grad_tol) break;
    // backtracking: shrink until the step decreases the loss
    for (;;) {
      Eigen::MatrixXd Wn = W - lr * gW;
      Eigen::VectorXd bn = b - lr * gb;
      double ln = objective(Wn, bn, nullptr, nullptr);
      if (ln <= loss || lr < 1e-12) {
        W = Wn;
        b = bn;
        loss = ln;
        lr *= 1.1;
        break;
      }
      lr *= 0.5;
    }
    loss = objective(W, b, &gW, &gb);
  }

  if (test_x.empty()) return 1.0;
  int correct = 0;
  for (std::size_t i = 0; i < test_x.size(); ++i) {
    Eigen::VectorXd s = W * test_x[i] + b;
    Eigen::Index arg;
    s.maxCoeff(&arg);
    if (static_cast<int>(arg) + 1 == test_y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_x.size());
}

// ---------------------------------------------------------------------------
// Spearman rank correlation with average ranks for ties.

namespace detail {

inline std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

inline double spearman(const std::vector<double>& a,
                       const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw UsageError("spearman: need >= 2 aligned samples");
  auto ra = detail::average_ranks(a);
  auto rb = detail::average_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double num = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va <= 0.0 || vb <= 0.0)
    throw NumericError("spearman undefined for a constant series");
  return num / std::sqrt(va * vb);
}

// Locality diagnostic: correlation between input inner products and feature
// inner products over sampled within-view node pairs.
inline double spearman_locality(const Dataset& ds, const Embedding& emb,
                                ViewId view, int sample_pairs,
                                std::uint64_t seed) {
  if (sample_pairs < 2) throw UsageError("spearman_locality: need >= 2 pairs");
  std::vector<NodeId> members;
  for (const auto& nd : ds.nodes)
    if (nd.view == view) members.push_back(nd.node_id);
  if (members.size() < 2)
    throw UsageError("spearman_locality: view has fewer than 2 nodes");
  Rng rng = Rng::substream(seed, "spearman-pairs");
  std::vector<double> xin, yin;
  for (int k = 0; k < sample_pairs; ++k) {
    std::uint64_t a, b;
    do {
      a = rng.uniform_int(members.size());
      b = rng.uniform_int(members.size());
    } while (a == b);
    NodeId i = members[a], j = members[b];
    xin.push_back(ds.nodes[static_cast<std::size_t>(i)].x.dot(
        ds.nodes[static_cast<std::size_t>(j)].x));
    yin.push_back(emb.y[static_cast<std::size_t>(i)].dot(
        emb.y[static_cast<std::size_t>(j)]));
  }
  return spearman(xin, yin);
}

}  // namespace pmvge
