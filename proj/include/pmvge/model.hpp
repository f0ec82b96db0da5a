#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pmvge/dataset.hpp"
#include "pmvge/encoder.hpp"

namespace pmvge {

// Symmetric D x D sparseness scales alpha^(d,e), zero outside the observed
// view-pair set.
class AlphaMatrix {
 public:
  AlphaMatrix() = default;
  AlphaMatrix(int D, const ViewPairSet& mask, double init = 1.0)
      : values_(Eigen::MatrixXd::Zero(D, D)), mask_(mask) {
    for (const auto& de : mask.pairs()) {
      if (de.second > D) throw UsageError("alpha mask references unknown view");
      set(de.first, de.second, init);
    }
  }

  int dim() const { return static_cast<int>(values_.rows()); }
  const ViewPairSet& mask() const { return mask_; }

  double get(ViewId d, ViewId e) const {
    if (!mask_.contains(d, e)) return 0.0;
    return values_(d - 1, e - 1);
  }

  void set(ViewId d, ViewId e, double v) {
    if (!mask_.contains(d, e))
      throw UsageError("alpha set outside observed view pairs");
    if (!(v >= 0.0) || !is_finite(v))
      throw NumericError("alpha must be finite and nonnegative");
    values_(d - 1, e - 1) = v;
    values_(e - 1, d - 1) = v;
  }

  const Eigen::MatrixXd& values() const { return values_; }

 private:
  Eigen::MatrixXd values_;
  ViewPairSet mask_;
};

struct ModelState {
  AlphaMatrix alpha;
  EncoderStack encoders;

  void validate() const {
    encoders.validate();
    if (alpha.dim() != encoders.num_views())
      throw UsageError("alpha dimension != encoder view count");
  }
};

// mu_ij = alpha^(d_i,d_j) exp(<y_i, y_j>); zero for unobserved view pairs.
// inner_cap < inf clamps the inner product (training path); with the default
// infinity an overflowing exp is reported instead.
inline double mu(const AlphaMatrix& alpha, const Eigen::VectorXd& yi,
                 const Eigen::VectorXd& yj, ViewId di, ViewId dj,
                 double inner_cap = std::numeric_limits<double>::infinity()) {
  if (!alpha.mask().contains(di, dj)) return 0.0;
  double g = 0.0;
  for (Eigen::Index k = 0; k < yi.size(); ++k) g += yi[k] * yj[k];
  if (g > inner_cap) g = inner_cap;
  const double v = alpha.get(di, dj) * std::exp(g);
  if (!is_finite(v))
    throw NumericError("mu overflow: inner product " + std::to_string(g));
  return v;
}

// l_n = sum over I_n of [w log mu - mu]. One deterministic pass in ascending
// pair order; embeddings are computed once per node up front.
inline double log_likelihood(const Dataset& ds, const ModelState& state) {
  state.validate();
  const int n = ds.n();
  std::vector<Eigen::VectorXd> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& nd = ds.nodes[static_cast<std::size_t>(i)];
    y[static_cast<std::size_t>(i)] = forward(state.encoders, nd.view, nd.x);
  }
  PairIndex idx(ds);
  double ll = 0.0;
  idx.for_each([&](NodeId i, NodeId j) {
    const auto& ni = ds.nodes[static_cast<std::size_t>(i)];
    const auto& nj = ds.nodes[static_cast<std::size_t>(j)];
    const double m = mu(state.alpha, y[static_cast<std::size_t>(i)],
                        y[static_cast<std::size_t>(j)], ni.view, nj.view);
    const double w = ds.weights.get(i, j);
    if (w > 0.0) {
      if (m <= 0.0)
        throw NumericError("degenerate likelihood: w>0 with mu=0 on pair (" +
                           std::to_string(i) + "," + std::to_string(j) + ")");
      ll += w * std::log(m);
    }
    ll -= m;
  });
  if (!is_finite(ll)) throw NumericError("log-likelihood is not finite");
  return ll;
}

// ---------------------------------------------------------------------------
// Stochastic block model special case: mu_ij = beta^(c_i, c_j).

struct SbmParams {
  int C = 0;
  Eigen::MatrixXd beta;            // C x C, symmetric, nonnegative
  std::vector<int> memberships;    // node -> cluster in 1..C

  void validate() const {
    if (beta.rows() != C || beta.cols() != C)
      throw UsageError("beta must be C x C");
    if (!beta.isApprox(beta.transpose()))
      throw UsageError("beta must be symmetric");
    if ((beta.array() < 0.0).any()) throw UsageError("beta must be nonnegative");
    for (int c : memberships)
      if (c < 1 || c > C) throw UsageError("membership outside 1..C");
  }
};

inline double sbm_mu(const SbmParams& p, NodeId i, NodeId j) {
  if (i < 0 || j < 0 || i >= static_cast<NodeId>(p.memberships.size()) ||
      j >= static_cast<NodeId>(p.memberships.size()))
    throw UsageError("sbm_mu: unknown node");
  return p.beta(p.memberships[static_cast<std::size_t>(i)] - 1,
                p.memberships[static_cast<std::size_t>(j)] - 1);
}

// ---------------------------------------------------------------------------
// Draw w_ij ~ Po(mu_ij) independently, one draw per unordered pair.

inline LinkWeights sample_weights(
    const std::function<double(NodeId, NodeId)>& mu_of, const PairIndex& pairs,
    std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "sample-weights");
  LinkWeights w;
  pairs.for_each([&](NodeId i, NodeId j) {
    const double m = mu_of(i, j);
    if (!(m >= 0.0) || !is_finite(m))
      throw NumericError("sample_weights: bad mean on pair (" +
                         std::to_string(i) + "," + std::to_string(j) + ")");
    const auto k = rng.poisson(m);
    if (k > 0) w.add(i, j, static_cast<double>(k));
  });
  return w;
}

// ---------------------------------------------------------------------------
// ModelState checkpoint = encoder block + alpha block.

inline void save_model(const ModelState& state, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path);
  save_encoder(state.encoders, os);
  const int D = state.alpha.dim();
  detail::write_u32(os, static_cast<std::uint32_t>(D));
  detail::write_u32(os, static_cast<std::uint32_t>(state.alpha.mask().size()));
  for (const auto& de : state.alpha.mask().pairs()) {
    detail::write_u32(os, static_cast<std::uint32_t>(de.first));
    detail::write_u32(os, static_cast<std::uint32_t>(de.second));
    double v = state.alpha.get(de.first, de.second);
    detail::write_doubles(os, &v, 1);
  }
  write_dims_manifest(state.encoders, path + ".dims");
}

inline ModelState load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  ModelState state;
  state.encoders = load_encoder(is);
  const int D = static_cast<int>(detail::read_u32(is));
  const std::uint32_t npairs = detail::read_u32(is);
  ViewPairSet mask;
  std::vector<std::tuple<ViewId, ViewId, double>> vals;
  for (std::uint32_t k = 0; k < npairs; ++k) {
    ViewId d = static_cast<ViewId>(detail::read_u32(is));
    ViewId e = static_cast<ViewId>(detail::read_u32(is));
    double v;
    detail::read_doubles(is, &v, 1);
    mask.insert(d, e);
    vals.emplace_back(d, e, v);
  }
  if (!is) throw DataError("truncated checkpoint: " + path);
  state.alpha = AlphaMatrix(D, mask);
  for (auto& [d, e, v] : vals) state.alpha.set(d, e, v);
  state.validate();
  return state;
}

}  // namespace pmvge
