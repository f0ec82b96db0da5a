#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pmvge/model.hpp"

namespace pmvge {

// ---------------------------------------------------------------------------
// Generative model: d_i ~ eta, x_i | d_i ~ q^(d), w_ij ~ Po(mu*_ij) with
// mu* evaluated under a known true ModelState.

enum class SamplerKind { UniformBox, TruncatedGaussian };

struct ViewSampler {
  SamplerKind kind = SamplerKind::UniformBox;
  int dim = 1;
  double lo = -1.0;
  double hi = 1.0;
  double sigma = 1.0;  // TruncatedGaussian only
};

struct GenerativeSpec {
  int D = 1;
  std::vector<double> eta;          // view probabilities, sums to 1
  std::vector<ViewSampler> samplers;
  ModelState truth;                 // alpha*, psi*
  int n = 0;

  void validate() const {
    if (D < 1 || static_cast<int>(eta.size()) != D ||
        static_cast<int>(samplers.size()) != D)
      throw UsageError("generative spec: eta/samplers must have D entries");
    double s = 0.0;
    for (double e : eta) {
      if (!(e > 0.0 && e < 1.0) && !(D == 1 && e == 1.0))
        throw UsageError("eta entries must lie in (0,1)");
      s += e;
    }
    if (std::fabs(s - 1.0) > 1e-12) throw UsageError("eta must sum to 1");
    if (n < 1) throw UsageError("n must be >= 1");
    truth.validate();
  }
};

struct GeneratedData {
  Dataset ds;
  std::function<double(NodeId, NodeId)> mu_star;
};

inline GeneratedData gen_pmvge(const GenerativeSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = Rng::substream(seed, "gen-pmvge");

  GeneratedData out;
  out.ds.observed_pairs = spec.truth.alpha.mask();
  for (int d = 1; d <= spec.D; ++d)
    out.ds.views.push_back({d, spec.samplers[static_cast<std::size_t>(d - 1)].dim});

  for (int i = 0; i < spec.n; ++i) {
    double u = rng.uniform();
    int d = spec.D;
    double acc = 0.0;
    for (int k = 1; k <= spec.D; ++k) {
      acc += spec.eta[static_cast<std::size_t>(k - 1)];
      if (u < acc) {
        d = k;
        break;
      }
    }
    const auto& q = spec.samplers[static_cast<std::size_t>(d - 1)];
    NodeRecord nd;
    nd.node_id = i;
    nd.ext_id = std::to_string(i);
    nd.view = d;
    nd.x.resize(q.dim);
    for (int k = 0; k < q.dim; ++k) {
      if (q.kind == SamplerKind::UniformBox) {
        nd.x[k] = rng.uniform(q.lo, q.hi);
      } else {
        double v;
        do {
          v = q.sigma * rng.normal();
        } while (v < q.lo || v > q.hi);
        nd.x[k] = v;
      }
    }
    out.ds.nodes.push_back(std::move(nd));
  }

  // mu* oracle over generated nodes
  auto y = std::make_shared<std::vector<Eigen::VectorXd>>();
  auto views = std::make_shared<std::vector<ViewId>>();
  y->reserve(static_cast<std::size_t>(spec.n));
  for (const auto& nd : out.ds.nodes) {
    y->push_back(forward(spec.truth.encoders, nd.view, nd.x));
    views->push_back(nd.view);
  }
  AlphaMatrix alpha = spec.truth.alpha;
  out.mu_star = [y, views, alpha](NodeId i, NodeId j) {
    return mu(alpha, (*y)[static_cast<std::size_t>(i)],
              (*y)[static_cast<std::size_t>(j)],
              (*views)[static_cast<std::size_t>(i)],
              (*views)[static_cast<std::size_t>(j)]);
  };

  PairIndex pairs(out.ds);
  out.ds.weights = sample_weights(out.mu_star, pairs, seed);
  out.ds.validate();
  return out;
}

// ---------------------------------------------------------------------------
// SBM graph with 1-hot inputs and attached cluster labels.

inline Dataset gen_sbm(int n, int C, const Eigen::MatrixXd& beta,
                       std::uint64_t seed) {
  if (C < 1 || beta.rows() != C || beta.cols() != C)
    throw UsageError("gen_sbm: beta must be C x C");
  if (!beta.isApprox(beta.transpose()) || (beta.array() < 0.0).any())
    throw UsageError("gen_sbm: beta must be symmetric nonnegative");
  Rng rng = Rng::substream(seed, "gen-sbm");

  Dataset ds;
  ds.views.push_back({1, C});
  ds.observed_pairs.insert(1, 1);
  SbmParams params{C, beta, {}};
  for (int i = 0; i < n; ++i) {
    int c = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(C))) + 1;
    NodeRecord nd;
    nd.node_id = i;
    nd.ext_id = std::to_string(i);
    nd.view = 1;
    nd.x = Eigen::VectorXd::Zero(C);
    nd.x[c - 1] = 1.0;
    ds.nodes.push_back(std::move(nd));
    ds.labels[i] = c;
    params.memberships.push_back(c);
  }
  PairIndex pairs(ds);
  ds.weights = sample_weights(
      [&](NodeId i, NodeId j) { return sbm_mu(params, i, j); }, pairs, seed);
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Cosine-similarity grid: G*(s,t) = cos(f*(s e1), f*(t e2)) with
// f*(x) = (x1, cos x2, exp(-x3), sin(x4 - x5)), e1 = (1,1,1,0,0),
// e2 = (0,0,1,1,1).

struct SimGridSpec {
  double range = 2.0;   // grid on [-range, range]
  int resolution = 21;  // points per axis

  void validate() const {
    if (resolution < 2) throw UsageError("grid resolution must be >= 2");
    if (!(range > 0.0)) throw UsageError("grid range must be > 0");
  }
};

inline Eigen::VectorXd sim_f_star(const Eigen::VectorXd& x) {
  if (x.size() != 5) throw UsageError("f* expects p = 5");
  Eigen::VectorXd y(4);
  y << x[0], std::cos(x[1]), std::exp(-x[2]), std::sin(x[3] - x[4]);
  return y;
}

inline Eigen::VectorXd sim_probe_e1() {
  Eigen::VectorXd e(5);
  e << 1, 1, 1, 0, 0;
  return e;
}

inline Eigen::VectorXd sim_probe_e2() {
  Eigen::VectorXd e(5);
  e << 0, 0, 1, 1, 1;
  return e;
}

inline double cosine_similarity(const Eigen::VectorXd& a,
                                const Eigen::VectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0)
    throw NumericError("cosine similarity of a zero-norm vector");
  return a.dot(b) / (na * nb);
}

inline double sim_g_star(double s, double t) {
  return cosine_similarity(sim_f_star(s * sim_probe_e1()),
                           sim_f_star(t * sim_probe_e2()));
}

struct SimGrid {
  Eigen::VectorXd coords;  // shared s/t axis
  Eigen::MatrixXd values;  // values(a,b) = G*(coords[a], coords[b])
};

inline SimGrid gen_sim_grid(const SimGridSpec& spec) {
  spec.validate();
  SimGrid grid;
  grid.coords.resize(spec.resolution);
  for (int k = 0; k < spec.resolution; ++k)
    grid.coords[k] =
        -spec.range + 2.0 * spec.range * k / (spec.resolution - 1);
  grid.values.resize(spec.resolution, spec.resolution);
  for (int a = 0; a < spec.resolution; ++a)
    for (int b = 0; b < spec.resolution; ++b)
      grid.values(a, b) = sim_g_star(grid.coords[a], grid.coords[b]);
  return grid;
}

// Training data for fitting the similarity surface: n data vectors split
// across the two views, cross weights w_ij = exp(cos(f*(x_i), f*(x_j))) so
// the Poisson mean targets recover <y, y'> = cosine similarity in the true
// feature space. Per view, inputs alternate between ray samples (s e1 in
// view 1, t e2 in view 2, covering the evaluation probes) and generic
// x ~ U[-range, range]^5. The generic half matters: restricted to the rays
// the surface is exactly rank 2, so a K=2 encoder could fit it perfectly;
// the full 4-dim f* cosine kernel has rank 4 and small K genuinely
// underfits.
inline Dataset gen_simfit_train(const SimGridSpec& spec, int n,
                                std::uint64_t seed) {
  spec.validate();
  if (n < 4) throw UsageError("gen_simfit_train: n must be >= 4");
  Rng rng = Rng::substream(seed, "gen-simfit");
  Dataset ds;
  ds.views.push_back({1, 5});
  ds.views.push_back({2, 5});
  ds.observed_pairs.insert(1, 2);
  const int n1 = n / 2;
  std::vector<Eigen::VectorXd> f(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    NodeRecord nd;
    nd.node_id = i;
    nd.ext_id = std::to_string(i);
    nd.view = i < n1 ? 1 : 2;
    const bool ray = (nd.view == 1 ? i : i - n1) % 2 == 0;
    if (ray) {
      nd.x = rng.uniform(-spec.range, spec.range) *
             (nd.view == 1 ? sim_probe_e1() : sim_probe_e2());
    } else {
      nd.x.resize(5);
      for (int k = 0; k < 5; ++k)
        nd.x[k] = rng.uniform(-spec.range, spec.range);
    }
    f[static_cast<std::size_t>(i)] = sim_f_star(nd.x);
    ds.nodes.push_back(std::move(nd));
  }
  for (int i = 0; i < n1; ++i)
    for (int j = n1; j < n; ++j)
      ds.weights.add(i, j,
                     std::exp(cosine_similarity(f[static_cast<std::size_t>(i)],
                                                f[static_cast<std::size_t>(j)])));
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Classifier construction: samples in view 1, class one-hots in view 2,
// unit weight from each sample to its class node.

inline Dataset classifier_dataset(const std::vector<Eigen::VectorXd>& X,
                                  const std::vector<int>& labels, int C) {
  if (X.empty() || X.size() != labels.size())
    throw UsageError("classifier_dataset: X and labels must align");
  const int p = static_cast<int>(X[0].size());
  Dataset ds;
  ds.views.push_back({1, p});
  ds.views.push_back({2, C});
  ds.observed_pairs.insert(1, 2);
  const int n = static_cast<int>(X.size());
  for (int i = 0; i < n; ++i) {
    if (labels[static_cast<std::size_t>(i)] < 1 ||
        labels[static_cast<std::size_t>(i)] > C)
      throw UsageError("classifier_dataset: label outside 1..C");
    NodeRecord nd;
    nd.node_id = i;
    nd.ext_id = std::to_string(i);
    nd.view = 1;
    nd.x = X[static_cast<std::size_t>(i)];
    ds.nodes.push_back(std::move(nd));
    ds.labels[i] = labels[static_cast<std::size_t>(i)];
  }
  for (int c = 1; c <= C; ++c) {
    NodeRecord nd;
    nd.node_id = n + c - 1;
    nd.ext_id = "class" + std::to_string(c);
    nd.view = 2;
    nd.x = Eigen::VectorXd::Zero(C);
    nd.x[c - 1] = 1.0;
    ds.nodes.push_back(std::move(nd));
  }
  for (int i = 0; i < n; ++i)
    ds.weights.add(i, n + labels[static_cast<std::size_t>(i)] - 1, 1.0);
  ds.validate();
  return ds;
}

}  // namespace pmvge
