#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "pmvge/dataset.hpp"

namespace pmvge {

// Simple-coded design: per-view-centered data vectors stacked into block
// vectors of length p = sum p_d, with G = X'X and H = X'WX.
struct AugmentedDesign {
  Eigen::MatrixXd X;  // n x p
  Eigen::MatrixXd G;  // p x p
  Eigen::MatrixXd H;  // p x p
  std::vector<int> view_offset;  // column offset of each view's block
  int p = 0;
};

inline AugmentedDesign build_augmented(const Dataset& ds) {
  AugmentedDesign out;
  const int D = ds.num_views();
  out.view_offset.resize(static_cast<std::size_t>(D) + 1, 0);
  for (int d = 1; d <= D; ++d)
    out.view_offset[static_cast<std::size_t>(d)] =
        out.view_offset[static_cast<std::size_t>(d - 1)] + ds.view(d).dim;
  out.p = out.view_offset[static_cast<std::size_t>(D)];

  // center each view
  std::vector<Eigen::VectorXd> mean(static_cast<std::size_t>(D));
  std::vector<int> cnt(static_cast<std::size_t>(D), 0);
  for (int d = 0; d < D; ++d)
    mean[static_cast<std::size_t>(d)] =
        Eigen::VectorXd::Zero(ds.views[static_cast<std::size_t>(d)].dim);
  for (const auto& nd : ds.nodes) {
    mean[static_cast<std::size_t>(nd.view - 1)] += nd.x;
    ++cnt[static_cast<std::size_t>(nd.view - 1)];
  }
  for (int d = 0; d < D; ++d)
    if (cnt[static_cast<std::size_t>(d)] > 0)
      mean[static_cast<std::size_t>(d)] /= cnt[static_cast<std::size_t>(d)];

  const int n = ds.n();
  out.X = Eigen::MatrixXd::Zero(n, out.p);
  for (const auto& nd : ds.nodes) {
    const int off = out.view_offset[static_cast<std::size_t>(nd.view - 1)];
    out.X.row(nd.node_id).segment(off, nd.x.size()) =
        (nd.x - mean[static_cast<std::size_t>(nd.view - 1)]).transpose();
  }

  out.G = out.X.transpose() * out.X;
  // H = X' W X accumulated from the sparse symmetric weights
  out.H = Eigen::MatrixXd::Zero(out.p, out.p);
  for (auto& [ij, w] : ds.weights.entries()) {
    const auto xi = out.X.row(ij.first);
    const auto xj = out.X.row(ij.second);
    out.H.noalias() += w * (xi.transpose() * xj + xj.transpose() * xi);
  }
  return out;
}

struct SpectralSolution {
  Eigen::MatrixXd psi;           // p x K
  Eigen::VectorXd eigenvalues;   // descending
  Eigen::VectorXd gammas;        // lambda_k / alpha0 (PMvGE variant only)
  bool degenerate = false;       // H == 0
  std::vector<int> dropped;      // columns zeroed for negative eigenvalues
};

namespace detail {

constexpr int kMaxDenseP = 4096;

// Pseudo-inverse square root of a symmetric PSD matrix; eigenvalues below
// threshold are treated as zero.
inline Eigen::MatrixXd inv_sqrt_psd(const Eigen::MatrixXd& G, double thresh) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
  if (es.info() != Eigen::Success)
    throw NumericError("eigendecomposition of G failed");
  Eigen::VectorXd inv = es.eigenvalues();
  for (Eigen::Index k = 0; k < inv.size(); ++k)
    inv[k] = inv[k] > thresh ? 1.0 / std::sqrt(inv[k]) : 0.0;
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

// Largest-absolute-magnitude component made positive.
inline void fix_signs(Eigen::MatrixXd& U) {
  for (Eigen::Index c = 0; c < U.cols(); ++c) {
    Eigen::Index imax;
    U.col(c).cwiseAbs().maxCoeff(&imax);
    if (U(imax, c) < 0.0) U.col(c) = -U.col(c);
  }
}

}  // namespace detail

inline double default_ridge(const AugmentedDesign& design) {
  return 1e-8 * design.G.trace() / static_cast<double>(design.p);
}

// Modified-CDMCA closed form: psi = (G+eps I)^{-1/2} U_K with U_K the top-K
// eigenvectors of (G+eps I)^{-1/2} H (G+eps I)^{-1/2}.
inline SpectralSolution cdmca_solve(const AugmentedDesign& design, int K,
                                    double eps) {
  if (design.p > detail::kMaxDenseP)
    throw UsageError("dense spectral path limited to p <= 4096; use SGD");
  if (K < 1 || K > design.p) throw UsageError("K out of range");
  Eigen::MatrixXd Gr = design.G;
  Gr.diagonal().array() += eps;
  const double thresh = 1e-12 * std::max(1.0, Gr.trace() / design.p);
  Eigen::MatrixXd Gis = detail::inv_sqrt_psd(Gr, thresh);
  Eigen::MatrixXd M = Gis * design.H * Gis;
  M = 0.5 * (M + M.transpose());  // symmetrize roundoff
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  if (es.info() != Eigen::Success)
    throw NumericError("eigendecomposition of whitened H failed");

  SpectralSolution sol;
  sol.degenerate = design.H.cwiseAbs().maxCoeff() == 0.0;
  sol.eigenvalues.resize(K);
  Eigen::MatrixXd U(design.p, K);
  for (int k = 0; k < K; ++k) {
    // eigen returns ascending order
    sol.eigenvalues[k] = es.eigenvalues()[design.p - 1 - k];
    U.col(k) = es.eigenvectors().col(design.p - 1 - k);
  }
  detail::fix_signs(U);
  sol.psi = Gis * U;
  return sol;
}

// Quadratic-approximation PMvGE solution: psi = G^{-1/2} U_K Gamma_K^{1/2}
// with gamma_k = lambda_k / alpha0. Columns with negative eigenvalues are
// zeroed and reported.
inline SpectralSolution approx_pmvge_linear(const AugmentedDesign& design,
                                            int K, double alpha0, double eps) {
  if (!(alpha0 > 0.0)) throw UsageError("alpha0 must be > 0");
  SpectralSolution sol = cdmca_solve(design, K, eps);
  sol.gammas = sol.eigenvalues / alpha0;
  int usable = 0;
  for (int k = 0; k < K; ++k) {
    if (sol.gammas[k] < 0.0) {
      sol.gammas[k] = 0.0;
      sol.psi.col(k).setZero();
      sol.dropped.push_back(k);
    } else {
      sol.psi.col(k) *= std::sqrt(sol.gammas[k]);
      ++usable;
    }
  }
  if (usable == 0)
    throw NumericError("all retained eigenvalues are negative");
  return sol;
}

struct EquivalenceReport {
  double max_column_deviation = 0.0;   // pmvge col vs sqrt(gamma) * cdmca col
  double max_inner_deviation = 0.0;    // <y^,y^'> vs sum gamma_k y_k y'_k
  bool pass = false;
};

// Checks psi_pmvge(:,k) == sqrt(gamma_k) psi_cdmca(:,k) up to sign, and the
// weighted inner-product identity on the embedded rows of the design.
inline EquivalenceReport scaling_equivalence_check(
    const SpectralSolution& cdmca, const SpectralSolution& pmvge,
    const AugmentedDesign& design, double tol = 1e-8) {
  if (cdmca.psi.cols() != pmvge.psi.cols())
    throw UsageError("solutions have different K");
  EquivalenceReport rep;
  const int K = static_cast<int>(cdmca.psi.cols());
  for (int k = 0; k < K; ++k) {
    Eigen::VectorXd scaled = std::sqrt(pmvge.gammas[k]) * cdmca.psi.col(k);
    double dev = std::min((pmvge.psi.col(k) - scaled).cwiseAbs().maxCoeff(),
                          (pmvge.psi.col(k) + scaled).cwiseAbs().maxCoeff());
    rep.max_column_deviation = std::max(rep.max_column_deviation, dev);
  }
  Eigen::MatrixXd Yc = design.X * cdmca.psi;   // n x K, CDMCA features
  Eigen::MatrixXd Yp = design.X * pmvge.psi;   // n x K, PMvGE features
  const int n = static_cast<int>(design.X.rows());
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      double lhs = Yp.row(i).dot(Yp.row(j));
      double rhs = 0.0;
      for (int k = 0; k < K; ++k)
        rhs += pmvge.gammas[k] * Yc(i, k) * Yc(j, k);
      rep.max_inner_deviation =
          std::max(rep.max_inner_deviation, std::fabs(lhs - rhs));
    }
  rep.pass = rep.max_column_deviation < tol && rep.max_inner_deviation < tol;
  return rep;
}

// Per-node feature vectors under a spectral solution (simple-coded rows).
inline Eigen::MatrixXd spectral_embed(const AugmentedDesign& design,
                                      const SpectralSolution& sol) {
  return design.X * sol.psi;  // n x K
}

}  // namespace pmvge
