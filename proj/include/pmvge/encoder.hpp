#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pmvge/common.hpp"
#include "pmvge/rng.hpp"

namespace pmvge {

enum class Activation { Identity, Tanh, Sigmoid, Relu };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Relu: return "relu";
  }
  return "?";
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "tanh") return Activation::Tanh;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "relu") return Activation::Relu;
  throw UsageError("unknown activation: " + s);
}

struct LayerSpec {
  int in_dim = 0;
  int out_dim = 0;
  Activation activation = Activation::Identity;
};

struct Layer {
  Eigen::MatrixXd W;  // out_dim x in_dim
  Eigen::VectorXd b;  // out_dim
};

using ViewSpecs = std::vector<LayerSpec>;          // one chain per view
using ViewParams = std::vector<Layer>;

struct EncoderParams {
  std::vector<ViewParams> views;  // index 0 == view 1
};

// Gradients share the parameter layout.
using EncoderGrads = EncoderParams;

namespace detail {

inline void apply_activation(Activation a, Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::Identity:
      break;
    case Activation::Tanh:
      z = z.array().tanh();
      break;
    case Activation::Sigmoid:
      z = (1.0 / (1.0 + (-z.array()).exp()));
      break;
    case Activation::Relu:
      z = z.cwiseMax(0.0);
      break;
  }
}

// Derivative expressed through the activation output y = sigma(z).
// ReLU derivative at the kink is 0.
inline Eigen::MatrixXd activation_deriv(Activation a, const Eigen::MatrixXd& y) {
  switch (a) {
    case Activation::Identity:
      return Eigen::MatrixXd::Ones(y.rows(), y.cols());
    case Activation::Tanh:
      return (1.0 - y.array().square()).matrix();
    case Activation::Sigmoid:
      return (y.array() * (1.0 - y.array())).matrix();
    case Activation::Relu:
      return (y.array() > 0.0).cast<double>().matrix();
  }
  return {};
}

}  // namespace detail

// Per-view transformation chains f^(d): R^{p_d} -> R^K. All views must end
// in the same output dimension K.
struct EncoderStack {
  std::vector<ViewSpecs> specs;
  EncoderParams params;

  int num_views() const { return static_cast<int>(specs.size()); }

  int output_dim() const {
    if (specs.empty() || specs[0].empty()) throw UsageError("empty encoder stack");
    return specs[0].back().out_dim;
  }

  int input_dim(ViewId d) const {
    return specs[static_cast<std::size_t>(d - 1)].front().in_dim;
  }

  void validate() const {
    if (specs.size() != params.views.size())
      throw UsageError("spec/param view count mismatch");
    int K = -1;
    for (std::size_t v = 0; v < specs.size(); ++v) {
      const auto& chain = specs[v];
      if (chain.empty()) throw UsageError("view encoder has no layers");
      for (std::size_t l = 0; l < chain.size(); ++l) {
        if (chain[l].in_dim < 1 || chain[l].out_dim < 1)
          throw UsageError("layer dims must be >= 1");
        if (l > 0 && chain[l].in_dim != chain[l - 1].out_dim)
          throw UsageError("layer dim chain mismatch in view " +
                           std::to_string(v + 1));
        const auto& L = params.views[v][l];
        if (L.W.rows() != chain[l].out_dim || L.W.cols() != chain[l].in_dim ||
            L.b.size() != chain[l].out_dim)
          throw UsageError("parameter shape mismatch in view " +
                           std::to_string(v + 1));
      }
      if (K < 0)
        K = chain.back().out_dim;
      else if (K != chain.back().out_dim)
        throw UsageError("all views must share the final output dimension");
    }
  }
};

// Uniform fan-in init: W ~ U[-a, a], a = sqrt(6/(in+out)); biases zero.
inline EncoderParams init_params(const std::vector<ViewSpecs>& specs,
                                 std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "encoder-init");
  EncoderParams p;
  for (const auto& chain : specs) {
    ViewParams vp;
    for (std::size_t l = 0; l < chain.size(); ++l) {
      if (l > 0 && chain[l].in_dim != chain[l - 1].out_dim)
        throw UsageError("layer dim chain mismatch");
      const double a =
          std::sqrt(6.0 / (chain[l].in_dim + chain[l].out_dim));
      Layer L;
      L.W.resize(chain[l].out_dim, chain[l].in_dim);
      for (Eigen::Index r = 0; r < L.W.rows(); ++r)
        for (Eigen::Index c = 0; c < L.W.cols(); ++c)
          L.W(r, c) = rng.uniform(-a, a);
      L.b = Eigen::VectorXd::Zero(chain[l].out_dim);
      vp.push_back(std::move(L));
    }
    p.views.push_back(std::move(vp));
  }
  return p;
}

inline EncoderStack make_stack(std::vector<ViewSpecs> specs, std::uint64_t seed) {
  EncoderStack st;
  st.specs = std::move(specs);
  st.params = init_params(st.specs, seed);
  st.validate();
  return st;
}

// Post-activation outputs of every layer; acts[0] is the input batch.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> acts;
  const Eigen::MatrixXd& output() const { return acts.back(); }
};

// X holds one column per sample.
inline ForwardCache forward_batch(const EncoderStack& st, ViewId d,
                                  const Eigen::MatrixXd& X) {
  const auto& chain = st.specs[static_cast<std::size_t>(d - 1)];
  const auto& vp = st.params.views[static_cast<std::size_t>(d - 1)];
  if (X.rows() != chain.front().in_dim)
    throw UsageError("forward: input dim " + std::to_string(X.rows()) +
                     " != " + std::to_string(chain.front().in_dim));
  ForwardCache cache;
  cache.acts.reserve(chain.size() + 1);
  cache.acts.push_back(X);
  for (std::size_t l = 0; l < chain.size(); ++l) {
    Eigen::MatrixXd z = vp[l].W * cache.acts.back();
    z.colwise() += vp[l].b;
    detail::apply_activation(chain[l].activation, z);
    cache.acts.push_back(std::move(z));
  }
  return cache;
}

inline Eigen::VectorXd forward(const EncoderStack& st, ViewId d,
                               const Eigen::VectorXd& x) {
  return forward_batch(st, d, x).output().col(0);
}

// Reverse-mode gradient of the chain for view d. dY has one column per
// sample; gradients over W/b accumulate into `grads` (same layout as params).
// Returns dL/dX when want_dx is set.
inline Eigen::MatrixXd backward_batch(const EncoderStack& st, ViewId d,
                                      const ForwardCache& cache,
                                      const Eigen::MatrixXd& dY,
                                      ViewParams& grads, bool want_dx = false) {
  const auto& chain = st.specs[static_cast<std::size_t>(d - 1)];
  const auto& vp = st.params.views[static_cast<std::size_t>(d - 1)];
  if (grads.size() != chain.size()) {
    grads.resize(chain.size());
    for (std::size_t l = 0; l < chain.size(); ++l) {
      grads[l].W = Eigen::MatrixXd::Zero(vp[l].W.rows(), vp[l].W.cols());
      grads[l].b = Eigen::VectorXd::Zero(vp[l].b.size());
    }
  }
  Eigen::MatrixXd delta = dY;
  for (std::size_t li = chain.size(); li-- > 0;) {
    delta = delta.cwiseProduct(
        detail::activation_deriv(chain[li].activation, cache.acts[li + 1]));
    grads[li].W.noalias() += delta * cache.acts[li].transpose();
    grads[li].b += delta.rowwise().sum();
    if (li > 0 || want_dx) delta = vp[li].W.transpose() * delta;
  }
  return want_dx ? delta : Eigen::MatrixXd();
}

inline EncoderGrads zero_grads(const EncoderStack& st) {
  EncoderGrads g;
  g.views.resize(st.specs.size());
  for (std::size_t v = 0; v < st.specs.size(); ++v) {
    g.views[v].resize(st.specs[v].size());
    for (std::size_t l = 0; l < st.specs[v].size(); ++l) {
      const auto& L = st.params.views[v][l];
      g.views[v][l].W = Eigen::MatrixXd::Zero(L.W.rows(), L.W.cols());
      g.views[v][l].b = Eigen::VectorXd::Zero(L.b.size());
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Checkpoint: binary header (magic, version, D, layer specs) followed by
// row-major little-endian doubles, one matrix/vector at a time.

namespace detail {

constexpr char kCheckpointMagic[8] = {'P', 'M', 'V', 'G', 'E', 'C', 'K', '1'};

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

inline void write_doubles(std::ostream& os, const double* p, std::size_t count) {
  // assumes IEEE-754 little-endian host (checked at build time elsewhere)
  os.write(reinterpret_cast<const char*>(p),
           static_cast<std::streamsize>(count * sizeof(double)));
}

inline void read_doubles(std::istream& is, double* p, std::size_t count) {
  is.read(reinterpret_cast<char*>(p),
          static_cast<std::streamsize>(count * sizeof(double)));
}

inline void write_matrix(std::ostream& os, const Eigen::MatrixXd& M) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> R = M;
  write_doubles(os, R.data(), static_cast<std::size_t>(R.size()));
}

inline void read_matrix(std::istream& is, Eigen::MatrixXd& M) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> R(
      M.rows(), M.cols());
  read_doubles(is, R.data(), static_cast<std::size_t>(R.size()));
  M = R;
}

}  // namespace detail

inline void save_encoder(const EncoderStack& st, std::ostream& os) {
  os.write(detail::kCheckpointMagic, 8);
  detail::write_u32(os, 1);  // version
  detail::write_u32(os, static_cast<std::uint32_t>(st.num_views()));
  for (const auto& chain : st.specs) {
    detail::write_u32(os, static_cast<std::uint32_t>(chain.size()));
    for (const auto& ls : chain) {
      detail::write_u32(os, static_cast<std::uint32_t>(ls.in_dim));
      detail::write_u32(os, static_cast<std::uint32_t>(ls.out_dim));
      detail::write_u32(os, static_cast<std::uint32_t>(ls.activation));
    }
  }
  for (const auto& vp : st.params.views)
    for (const auto& L : vp) {
      detail::write_matrix(os, L.W);
      Eigen::MatrixXd b = L.b;
      detail::write_matrix(os, b);
    }
}

inline EncoderStack load_encoder(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != std::string(detail::kCheckpointMagic, 8))
    throw DataError("bad checkpoint magic");
  std::uint32_t version = detail::read_u32(is);
  if (version != 1) throw DataError("unsupported checkpoint version");
  std::uint32_t D = detail::read_u32(is);
  EncoderStack st;
  for (std::uint32_t v = 0; v < D; ++v) {
    std::uint32_t L = detail::read_u32(is);
    ViewSpecs chain;
    for (std::uint32_t l = 0; l < L; ++l) {
      LayerSpec ls;
      ls.in_dim = static_cast<int>(detail::read_u32(is));
      ls.out_dim = static_cast<int>(detail::read_u32(is));
      ls.activation = static_cast<Activation>(detail::read_u32(is));
      chain.push_back(ls);
    }
    st.specs.push_back(std::move(chain));
  }
  st.params.views.resize(D);
  for (std::uint32_t v = 0; v < D; ++v)
    for (const auto& ls : st.specs[v]) {
      Layer L;
      L.W.resize(ls.out_dim, ls.in_dim);
      detail::read_matrix(is, L.W);
      Eigen::MatrixXd b(ls.out_dim, 1);
      detail::read_matrix(is, b);
      L.b = b.col(0);
      st.params.views[v].push_back(std::move(L));
    }
  if (!is) throw DataError("truncated checkpoint");
  st.validate();
  return st;
}

// Plain-text dims manifest, for eyeballing checkpoints.
inline void write_dims_manifest(const EncoderStack& st, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "views " << st.num_views() << "\n";
  for (int v = 1; v <= st.num_views(); ++v) {
    out << "view " << v << "\n";
    for (const auto& ls : st.specs[static_cast<std::size_t>(v - 1)])
      out << "  layer " << ls.in_dim << " -> " << ls.out_dim << " "
          << activation_name(ls.activation) << "\n";
  }
}

}  // namespace pmvge
