#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Core>

#include "pmvge/model.hpp"

namespace pmvge {

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  int m = 512;                   // minibatch size
  double r = 1.0;                // negative sampling rate
  double tau = 1.0;              // weight on the negative-sample term
  bool tau_unbiased = false;     // tau = |I_n| / (r |W_n|) instead
  Optimizer optimizer = Optimizer::Adam;
  double lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double lr_decay = 0.1;         // multiplicative factor
  int lr_decay_period = 100;     // iterations between decays; 0 disables
  int iterations = 200;
  int alpha_update_period = 10;  // 0 disables the alpha step
  std::uint64_t seed = 0;
  double clamp = 40.0;           // inner-product cap inside training

  void validate() const {
    if (m < 2) throw UsageError("minibatch size must be >= 2");
    if (!(r > 0.0)) throw UsageError("negative sampling rate must be > 0");
    if (!(tau > 0.0)) throw UsageError("tau must be > 0");
    if (!(lr > 0.0)) throw UsageError("learning rate must be > 0");
    if (iterations < 0) throw UsageError("iterations must be >= 0");
  }
};

struct Minibatch {
  std::vector<std::tuple<NodeId, NodeId, double>> positives;  // W'_n with w_ij
  std::vector<std::pair<NodeId, NodeId>> negatives;           // I'_n
};

// Split m into |W'| and |I'| with |I'|/|W'| = r up to rounding.
// Round-half-up, then clamp so both sides are >= 1.
inline std::pair<int, int> minibatch_split(int m, double r) {
  int npos = static_cast<int>(std::floor(m / (1.0 + r) + 0.5));
  npos = std::max(1, std::min(m - 1, npos));
  return {npos, m - npos};
}

inline Minibatch sample_minibatch(
    const PairIndex& pairs,
    const std::vector<std::tuple<NodeId, NodeId, double>>& positives, int m,
    double r, Rng& rng) {
  if (positives.empty()) throw UsageError("sample_minibatch: W_n is empty");
  if (pairs.count() == 0) throw UsageError("sample_minibatch: I_n is empty");
  auto [npos, nneg] = minibatch_split(m, r);
  Minibatch batch;
  batch.positives.reserve(static_cast<std::size_t>(npos));
  batch.negatives.reserve(static_cast<std::size_t>(nneg));
  for (int k = 0; k < npos; ++k)
    batch.positives.push_back(positives[rng.uniform_int(positives.size())]);
  for (int k = 0; k < nneg; ++k)
    batch.negatives.push_back(pairs.sample_uniform(rng));
  return batch;
}

// ---------------------------------------------------------------------------
// Minibatch objective  sum_{W'} w log mu - tau sum_{I'} mu  and its exact
// gradient over psi. Pair endpoints are forwarded per view in one batch; a
// node appearing in several pairs occupies several columns, so its gradient
// accumulates through the shared parameters.

struct ObjectiveResult {
  double value = 0.0;
  EncoderGrads grads;
};

namespace detail {

struct BatchSlots {
  // per view: input columns; per pair: (view, column) of each endpoint
  std::vector<std::vector<NodeId>> cols_by_view;
  std::vector<std::pair<int, int>> slot_i, slot_j;  // (view-1, col)

  void add_pair(const Dataset& ds, NodeId i, NodeId j) {
    slot_i.push_back(add_node(ds, i));
    slot_j.push_back(add_node(ds, j));
  }

  std::pair<int, int> add_node(const Dataset& ds, NodeId id) {
    int v = ds.nodes[static_cast<std::size_t>(id)].view - 1;
    auto& cols = cols_by_view[static_cast<std::size_t>(v)];
    cols.push_back(id);
    return {v, static_cast<int>(cols.size()) - 1};
  }
};

}  // namespace detail

inline ObjectiveResult minibatch_objective(const Dataset& ds,
                                           const ModelState& state,
                                           const Minibatch& batch, double tau,
                                           double clamp = 40.0) {
  const int D = state.encoders.num_views();
  detail::BatchSlots slots;
  slots.cols_by_view.resize(static_cast<std::size_t>(D));
  for (auto& [i, j, w] : batch.positives) slots.add_pair(ds, i, j);
  for (auto& [i, j] : batch.negatives) slots.add_pair(ds, i, j);

  // forward all endpoint columns per view
  std::vector<ForwardCache> caches(static_cast<std::size_t>(D));
  std::vector<Eigen::MatrixXd> dY(static_cast<std::size_t>(D));
  for (int v = 0; v < D; ++v) {
    const auto& cols = slots.cols_by_view[static_cast<std::size_t>(v)];
    if (cols.empty()) continue;
    Eigen::MatrixXd X(state.encoders.input_dim(v + 1),
                      static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c)
      X.col(static_cast<Eigen::Index>(c)) =
          ds.nodes[static_cast<std::size_t>(cols[c])].x;
    caches[static_cast<std::size_t>(v)] =
        forward_batch(state.encoders, v + 1, X);
    dY[static_cast<std::size_t>(v)] = Eigen::MatrixXd::Zero(
        state.encoders.output_dim(), static_cast<Eigen::Index>(cols.size()));
  }

  auto y_of = [&](std::pair<int, int> s) {
    return caches[static_cast<std::size_t>(s.first)].output().col(s.second);
  };

  ObjectiveResult res;
  std::size_t p = 0;
  for (; p < batch.positives.size(); ++p) {
    auto [i, j, w] = batch.positives[p];
    auto si = slots.slot_i[p];
    auto sj = slots.slot_j[p];
    const auto yi = y_of(si);
    const auto yj = y_of(sj);
    double g = yi.dot(yj);
    const bool capped = g > clamp;
    if (capped) g = clamp;
    ViewId di = ds.nodes[static_cast<std::size_t>(i)].view;
    ViewId dj = ds.nodes[static_cast<std::size_t>(j)].view;
    const double a = state.alpha.get(di, dj);
    if (a <= 0.0)
      throw NumericError("degenerate objective: positive pair with alpha=0");
    res.value += w * (std::log(a) + g);
    if (!capped) {
      dY[static_cast<std::size_t>(si.first)].col(si.second) += w * yj;
      dY[static_cast<std::size_t>(sj.first)].col(sj.second) += w * yi;
    }
  }
  for (std::size_t q = 0; q < batch.negatives.size(); ++q, ++p) {
    auto [i, j] = batch.negatives[q];
    auto si = slots.slot_i[p];
    auto sj = slots.slot_j[p];
    const auto yi = y_of(si);
    const auto yj = y_of(sj);
    double g = yi.dot(yj);
    const bool capped = g > clamp;
    if (capped) g = clamp;
    ViewId di = ds.nodes[static_cast<std::size_t>(i)].view;
    ViewId dj = ds.nodes[static_cast<std::size_t>(j)].view;
    const double m = state.alpha.get(di, dj) * std::exp(g);
    if (!is_finite(m))
      throw NumericError("mu overflow in minibatch objective");
    res.value -= tau * m;
    if (!capped) {
      dY[static_cast<std::size_t>(si.first)].col(si.second) -= tau * m * yj;
      dY[static_cast<std::size_t>(sj.first)].col(sj.second) -= tau * m * yi;
    }
  }
  if (!is_finite(res.value))
    throw NumericError("minibatch objective is not finite");

  res.grads = zero_grads(state.encoders);
  for (int v = 0; v < D; ++v) {
    if (slots.cols_by_view[static_cast<std::size_t>(v)].empty()) continue;
    backward_batch(state.encoders, v + 1, caches[static_cast<std::size_t>(v)],
                   dY[static_cast<std::size_t>(v)],
                   res.grads.views[static_cast<std::size_t>(v)]);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Closed-form alpha refresh from a sample of index pairs:
//   alpha^(d,e) = sum w_ij / sum exp(<f(x_i), f(x_j)>)  per stratum.
// Empty strata keep the previous value.

struct AlphaUpdateResult {
  AlphaMatrix alpha;
  std::vector<std::pair<ViewId, ViewId>> empty_strata;
};

inline AlphaUpdateResult update_alpha(
    const std::vector<std::pair<NodeId, NodeId>>& sampled_pairs,
    const Dataset& ds, const EncoderStack& encoders, const AlphaMatrix& prev,
    double clamp = std::numeric_limits<double>::infinity()) {
  std::map<std::pair<ViewId, ViewId>, std::pair<double, double>> sums;
  for (const auto& de : prev.mask().pairs()) sums[de] = {0.0, 0.0};

  // embed each distinct endpoint once
  std::map<NodeId, Eigen::VectorXd> y;
  auto embed = [&](NodeId id) -> const Eigen::VectorXd& {
    auto it = y.find(id);
    if (it == y.end()) {
      const auto& nd = ds.nodes[static_cast<std::size_t>(id)];
      it = y.emplace(id, forward(encoders, nd.view, nd.x)).first;
    }
    return it->second;
  };

  for (auto& [i, j] : sampled_pairs) {
    ViewId di = ds.nodes[static_cast<std::size_t>(i)].view;
    ViewId dj = ds.nodes[static_cast<std::size_t>(j)].view;
    auto key = ViewPairSet::ordered(di, dj);
    auto it = sums.find(key);
    if (it == sums.end())
      throw UsageError("sampled pair outside observed view pairs");
    double g = embed(i).dot(embed(j));
    if (g > clamp) g = clamp;
    it->second.first += ds.weights.get(i, j);
    it->second.second += std::exp(g);
  }

  AlphaUpdateResult out{prev, {}};
  for (auto& [de, nd] : sums) {
    if (nd.second > 0.0)
      out.alpha.set(de.first, de.second, nd.first / nd.second);
    else
      out.empty_strata.push_back(de);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Alternating estimation loop.

struct TrainReport {
  std::vector<double> objectives;  // per iteration
  std::vector<std::pair<int, Eigen::MatrixXd>> alpha_history;
  ModelState state;
  double wall_seconds = 0.0;
};

namespace detail {

// First-moment/second-moment buffers matching the parameter layout.
struct AdamState {
  EncoderGrads m, v;
  long t = 0;
};

inline void ascent_step(ModelState& state, const EncoderGrads& grads,
                        const TrainConfig& cfg, double lr, AdamState& adam) {
  if (cfg.optimizer == Optimizer::Sgd) {
    for (std::size_t vi = 0; vi < grads.views.size(); ++vi)
      for (std::size_t l = 0; l < grads.views[vi].size(); ++l) {
        state.encoders.params.views[vi][l].W += lr * grads.views[vi][l].W;
        state.encoders.params.views[vi][l].b += lr * grads.views[vi][l].b;
      }
    return;
  }
  ++adam.t;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam.t));
  for (std::size_t vi = 0; vi < grads.views.size(); ++vi)
    for (std::size_t l = 0; l < grads.views[vi].size(); ++l) {
      auto step = [&](Eigen::MatrixXd& p, Eigen::MatrixXd& m,
                      Eigen::MatrixXd& v, const Eigen::MatrixXd& g) {
        m = b1 * m + (1.0 - b1) * g;
        v = (b2 * v.array() + (1.0 - b2) * g.array().square()).matrix();
        p += (lr * (m.array() / bc1) /
              ((v.array() / bc2).sqrt() + cfg.adam_eps))
                 .matrix();
      };
      step(state.encoders.params.views[vi][l].W, adam.m.views[vi][l].W,
           adam.v.views[vi][l].W, grads.views[vi][l].W);
      Eigen::MatrixXd pb = state.encoders.params.views[vi][l].b,
                      mb = adam.m.views[vi][l].b, vb = adam.v.views[vi][l].b,
                      gb = grads.views[vi][l].b;
      step(pb, mb, vb, gb);
      state.encoders.params.views[vi][l].b = pb.col(0);
      adam.m.views[vi][l].b = mb.col(0);
      adam.v.views[vi][l].b = vb.col(0);
    }
}

}  // namespace detail

inline TrainReport train(const Dataset& ds, const std::vector<ViewSpecs>& specs,
                         const TrainConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  TrainReport rep;
  rep.state.encoders = make_stack(specs, cfg.seed);
  rep.state.alpha =
      AlphaMatrix(static_cast<int>(specs.size()), ds.observed_pairs, 1.0);
  rep.state.validate();

  if (cfg.iterations == 0) return rep;

  PairIndex pairs(ds);
  const auto positives = pairs.positives();
  if (positives.empty()) throw UsageError("train: no positive link weights");

  double tau = cfg.tau;
  if (cfg.tau_unbiased)
    tau = static_cast<double>(pairs.count()) /
          (cfg.r * static_cast<double>(positives.size()));

  // strata that carry positive weight in the full data; for those, a
  // zero-numerator refresh is an uninformative sample (alpha=0 would make
  // every positive pair's log-likelihood -inf), so the previous value is kept
  std::set<std::pair<ViewId, ViewId>> positive_strata;
  for (auto& [i, j, w] : positives)
    positive_strata.insert(ViewPairSet::ordered(
        ds.nodes[static_cast<std::size_t>(i)].view,
        ds.nodes[static_cast<std::size_t>(j)].view));

  Rng rng_mb = Rng::substream(cfg.seed, "minibatch");
  Rng rng_neg = Rng::substream(cfg.seed, "negatives");
  detail::AdamState adam{zero_grads(rep.state.encoders),
                         zero_grads(rep.state.encoders), 0};

  for (int it = 0; it < cfg.iterations; ++it) {
    double lr = cfg.lr;
    if (cfg.lr_decay_period > 0)
      lr *= std::pow(cfg.lr_decay, static_cast<double>(it / cfg.lr_decay_period));

    Minibatch batch = sample_minibatch(pairs, positives, cfg.m, cfg.r, rng_mb);
    ObjectiveResult obj;
    try {
      obj = minibatch_objective(ds, rep.state, batch, tau, cfg.clamp);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at iteration " +
                         std::to_string(it));
    }
    rep.objectives.push_back(obj.value);
    detail::ascent_step(rep.state, obj.grads, cfg, lr, adam);

    if (cfg.alpha_update_period > 0 &&
        (it + 1) % cfg.alpha_update_period == 0) {
      std::vector<std::pair<NodeId, NodeId>> neg;
      neg.reserve(static_cast<std::size_t>(cfg.m));
      for (int k = 0; k < cfg.m; ++k)
        neg.push_back(pairs.sample_uniform(rng_neg));
      auto upd = update_alpha(neg, ds, rep.state.encoders, rep.state.alpha,
                              cfg.clamp);
      for (const auto& de : positive_strata)
        if (upd.alpha.get(de.first, de.second) == 0.0)
          upd.alpha.set(de.first, de.second,
                        rep.state.alpha.get(de.first, de.second));
      rep.state.alpha = upd.alpha;
      rep.alpha_history.emplace_back(it + 1, rep.state.alpha.values());
    }
  }

  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return rep;
}

// CSV log: iter,objective,alpha_(d,e)...,lr
inline void write_train_log(const TrainReport& rep, const TrainConfig& cfg,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out.precision(17);
  out << "iter,objective";
  for (const auto& de : rep.state.alpha.mask().pairs())
    out << ",alpha_" << de.first << "_" << de.second;
  out << ",lr\n";
  Eigen::MatrixXd alpha0 = Eigen::MatrixXd::Constant(
      rep.state.alpha.dim(), rep.state.alpha.dim(), 1.0);
  std::size_t ai = 0;
  Eigen::MatrixXd cur = alpha0;
  for (std::size_t it = 0; it < rep.objectives.size(); ++it) {
    while (ai < rep.alpha_history.size() &&
           static_cast<std::size_t>(rep.alpha_history[ai].first) <= it)
      cur = rep.alpha_history[ai++].second;
    double lr = cfg.lr;
    if (cfg.lr_decay_period > 0)
      lr *= std::pow(cfg.lr_decay,
                     static_cast<double>(static_cast<int>(it) / cfg.lr_decay_period));
    out << it << ',' << rep.objectives[it];
    for (const auto& de : rep.state.alpha.mask().pairs())
      out << ',' << cur(de.first - 1, de.second - 1);
    out << ',' << lr << '\n';
  }
}

}  // namespace pmvge
