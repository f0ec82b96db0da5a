#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <unistd.h>

#include <filesystem>

#include "pmvge/model.hpp"

using namespace pmvge;

namespace {

// One-view dataset of n scalar nodes with given values; all pairs observed.
Dataset scalar_dataset(const std::vector<double>& xs) {
  Dataset ds;
  ds.views.push_back({1, 1});
  ds.observed_pairs.insert(1, 1);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    NodeRecord nd;
    nd.node_id = static_cast<NodeId>(i);
    nd.ext_id = std::to_string(i);
    nd.view = 1;
    nd.x = Eigen::VectorXd::Constant(1, xs[i]);
    ds.nodes.push_back(std::move(nd));
  }
  ds.validate();
  return ds;
}

// Linear scalar model y = x with the given alpha on (1,1).
ModelState scalar_model(double alpha) {
  ModelState st;
  st.encoders.specs = {{LayerSpec{1, 1, Activation::Identity}}};
  Layer L;
  L.W = Eigen::MatrixXd::Constant(1, 1, 1.0);
  L.b = Eigen::VectorXd::Zero(1);
  st.encoders.params.views = {{L}};
  st.alpha = AlphaMatrix(1, ViewPairSet{{1, 1}}, alpha);
  return st;
}

// Regularized upper incomplete gamma Q(a,x): chi-square tail probability is
// Q(df/2, x/2). Series for x < a+1, continued fraction otherwise.
double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q");
  if (x == 0.0) return 1.0;
  const double lg = std::lgamma(a);
  if (x < a + 1.0) {
    double sum = 1.0 / a, term = sum, ap = a;
    for (int k = 0; k < 500; ++k) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::fabs(term) < std::fabs(sum) * 1e-15) break;
    }
    return 1.0 - sum * std::exp(-x + a * std::log(x) - lg);
  }
  double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int k = 1; k < 500; ++k) {
    const double an = -k * (k - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::fabs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - lg) * h;
}

double chi2_pvalue(double stat, int df) {
  return gamma_q(0.5 * df, 0.5 * stat);
}

double poisson_pmf(int k, double mu) {
  return std::exp(k * std::log(mu) - mu - std::lgamma(k + 1.0));
}

}  // namespace

TEST_CASE("mu basic values") {
  AlphaMatrix alpha(2, ViewPairSet{{1, 1}, {1, 2}}, 1.0);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(3);
  CHECK(mu(alpha, z, z, 1, 1) == 1.0);
  CHECK(mu(alpha, z, z, 2, 2) == 0.0);  // (2,2) not observed
  alpha.set(1, 1, 0.5);
  Eigen::VectorXd a(1), b(1);
  a << std::log(2.0);
  b << 1.0;
  CHECK(mu(alpha, a, b, 1, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mu symmetric in its arguments") {
  AlphaMatrix alpha(2, ViewPairSet{{1, 2}}, 0.7);
  Eigen::VectorXd a = Eigen::VectorXd::Random(4), b = Eigen::VectorXd::Random(4);
  CHECK(mu(alpha, a, b, 1, 2) == doctest::Approx(mu(alpha, b, a, 2, 1)).epsilon(1e-15));
}

TEST_CASE("mu overflow reported") {
  AlphaMatrix alpha(1, ViewPairSet{{1, 1}}, 1.0);
  Eigen::VectorXd big = Eigen::VectorXd::Constant(1, 1e3);
  CHECK_THROWS_AS(mu(alpha, big, big, 1, 1), NumericError);
}

TEST_CASE("log-likelihood single-pair values") {
  SUBCASE("w=0, mu=3 gives -3") {
    Dataset ds = scalar_dataset({0.0, 0.0});
    ModelState st = scalar_model(3.0);
    CHECK(log_likelihood(ds, st) == doctest::Approx(-3.0).epsilon(1e-12));
  }
  SUBCASE("w=2, mu=1 gives -1") {
    Dataset ds = scalar_dataset({0.0, 0.0});
    ds.weights.add(0, 1, 2.0);
    ModelState st = scalar_model(1.0);
    CHECK(log_likelihood(ds, st) == doctest::Approx(-1.0).epsilon(1e-12));
  }
  SUBCASE("empty index set gives 0") {
    Dataset ds;
    ds.views = {{1, 1}, {2, 1}};
    ds.observed_pairs.insert(2, 2);
    for (int i = 0; i < 2; ++i) {
      NodeRecord nd;
      nd.node_id = i;
      nd.ext_id = std::to_string(i);
      nd.view = i + 1;
      nd.x = Eigen::VectorXd::Zero(1);
      ds.nodes.push_back(std::move(nd));
    }
    ds.validate();
    ModelState st;
    st.encoders = make_stack({{LayerSpec{1, 2, Activation::Identity}},
                              {LayerSpec{1, 2, Activation::Identity}}}, 0);
    st.alpha = AlphaMatrix(2, ds.observed_pairs, 1.0);
    CHECK(log_likelihood(ds, st) == 0.0);
  }
}

TEST_CASE("degenerate likelihood: w>0 with mu=0") {
  Dataset ds = scalar_dataset({0.0, 0.0});
  ds.weights.add(0, 1, 1.0);
  ModelState st = scalar_model(0.0);
  CHECK_THROWS_AS(log_likelihood(ds, st), NumericError);
}

TEST_CASE("log-likelihood decomposition identity") {
  Rng rng(5);
  std::vector<double> xs(8);
  for (auto& v : xs) v = rng.uniform(-1.0, 1.0);
  Dataset ds = scalar_dataset(xs);
  ds.weights.add(0, 3, 2.0);
  ds.weights.add(1, 5, 1.0);
  ds.weights.add(2, 7, 3.0);
  ds.validate();
  ModelState st = scalar_model(0.8);

  const double ll = log_likelihood(ds, st);
  // recompute the two terms separately
  double pos = 0.0, neg = 0.0;
  PairIndex idx(ds);
  idx.for_each([&](NodeId i, NodeId j) {
    const double m = mu(st.alpha, ds.nodes[i].x, ds.nodes[j].x, 1, 1);
    const double w = ds.weights.get(i, j);
    if (w > 0.0) pos += w * std::log(m);
    neg += m;
  });
  CHECK(ll == doctest::Approx(pos - neg).epsilon(1e-12));
}

TEST_CASE("sbm_mu lookup and symmetry") {
  SbmParams p;
  p.C = 2;
  p.beta.resize(2, 2);
  p.beta << 2.5, 0.3, 0.3, 1.0;
  p.memberships = {1, 1, 2};
  p.validate();
  CHECK(sbm_mu(p, 0, 1) == 2.5);
  CHECK(sbm_mu(p, 0, 2) == sbm_mu(p, 2, 0));
  CHECK_THROWS_AS(sbm_mu(p, 0, 9), UsageError);

  SbmParams one;
  one.C = 1;
  one.beta = Eigen::MatrixXd::Constant(1, 1, 1.7);
  one.memberships = {1, 1, 1};
  one.validate();
  CHECK(sbm_mu(one, 0, 1) == sbm_mu(one, 1, 2));
}

TEST_CASE("SBM-as-PMvGE cross-check on random psi") {
  // 1-hot memberships with a linear encoder whose columns are psi^c:
  // mu = alpha * exp(<psi^{c_i}, psi^{c_j}>)
  Rng rng(11);
  const int C = 3, K = 4;
  Eigen::MatrixXd psi(K, C);
  for (int r = 0; r < K; ++r)
    for (int c = 0; c < C; ++c) psi(r, c) = rng.uniform(-0.5, 0.5);
  AlphaMatrix alpha(1, ViewPairSet{{1, 1}}, 0.6);
  for (int ci = 1; ci <= C; ++ci)
    for (int cj = 1; cj <= C; ++cj) {
      Eigen::VectorXd xi = Eigen::VectorXd::Zero(C), xj = Eigen::VectorXd::Zero(C);
      xi[ci - 1] = 1.0;
      xj[cj - 1] = 1.0;
      const double direct =
          0.6 * std::exp(psi.col(ci - 1).dot(psi.col(cj - 1)));
      CHECK(mu(alpha, psi * xi, psi * xj, 1, 1) ==
            doctest::Approx(direct).epsilon(1e-12));
    }
}

TEST_CASE("sample_weights basics") {
  Dataset ds = scalar_dataset(std::vector<double>(10, 0.0));
  PairIndex idx(ds);
  SUBCASE("zero mean gives no weights") {
    auto w = sample_weights([](NodeId, NodeId) { return 0.0; }, idx, 3);
    CHECK(w.size() == 0);
  }
  SUBCASE("seed determinism") {
    auto w1 = sample_weights([](NodeId, NodeId) { return 2.0; }, idx, 3);
    auto w2 = sample_weights([](NodeId, NodeId) { return 2.0; }, idx, 3);
    CHECK(w1.entries() == w2.entries());
    auto w3 = sample_weights([](NodeId, NodeId) { return 2.0; }, idx, 4);
    CHECK(w1.entries() != w3.entries());
  }
  SUBCASE("bad mean rejected") {
    CHECK_THROWS_AS(
        sample_weights([](NodeId, NodeId) { return -1.0; }, idx, 3),
        NumericError);
  }
}

TEST_CASE("sample_weights mean matches Poisson statistics") {
  // star bipartite layout: 500 x 200 = 100000 cross pairs, constant mu = 4
  Dataset ds;
  ds.views = {{1, 1}, {2, 1}};
  ds.observed_pairs.insert(1, 2);
  for (int i = 0; i < 700; ++i) {
    NodeRecord nd;
    nd.node_id = i;
    nd.ext_id = std::to_string(i);
    nd.view = i < 500 ? 1 : 2;
    nd.x = Eigen::VectorXd::Zero(1);
    ds.nodes.push_back(std::move(nd));
  }
  ds.validate();
  PairIndex idx(ds);
  REQUIRE(idx.count() == 100000);
  auto w = sample_weights([](NodeId, NodeId) { return 4.0; }, idx, 99);
  double total = 0.0;
  for (auto& [ij, v] : w.entries()) total += v;
  const double mean = total / 100000.0;
  CHECK(std::fabs(mean - 4.0) < 3.0 * std::sqrt(4.0 / 100000.0));
}

TEST_CASE("Poisson sampler chi-square goodness of fit") {
  const int N = 100000;
  for (double mus : {0.5, 2.0, 10.0}) {
    Rng rng(static_cast<std::uint64_t>(mus * 1000) + 17);
    std::vector<int> counts(200, 0);
    for (int k = 0; k < N; ++k) {
      auto v = rng.poisson(mus);
      if (v < counts.size()) ++counts[static_cast<std::size_t>(v)];
    }
    // bin expected counts; merge tail so each expected >= 5
    double stat = 0.0;
    int df = -1;  // parameters known, df = bins - 1
    double tail_obs = N, tail_exp = N;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      const double e = N * poisson_pmf(static_cast<int>(k), mus);
      if (tail_exp - e < 5.0) break;  // fold the rest into the tail bin
      stat += (counts[k] - e) * (counts[k] - e) / e;
      ++df;
      tail_obs -= counts[k];
      tail_exp -= e;
    }
    stat += (tail_obs - tail_exp) * (tail_obs - tail_exp) / tail_exp;
    ++df;
    REQUIRE(df >= 1);
    const double p = chi2_pvalue(stat, df);
    INFO("mu=", mus, " stat=", stat, " df=", df, " p=", p);
    CHECK(p > 0.001);
  }
}

TEST_CASE("model checkpoint round trip") {
  ModelState st;
  st.encoders = make_stack({{LayerSpec{3, 4, Activation::Tanh},
                             LayerSpec{4, 2, Activation::Identity}},
                            {LayerSpec{2, 2, Activation::Identity}}}, 21);
  st.alpha = AlphaMatrix(2, ViewPairSet{{1, 1}, {1, 2}}, 1.0);
  st.alpha.set(1, 2, 0.25);
  const std::string path =
      (std::filesystem::temp_directory_path() /
       ("pmvge_model_" + std::to_string(::getpid()) + ".ckpt")).string();
  save_model(st, path);
  ModelState st2 = load_model(path);
  CHECK(st2.alpha.get(1, 1) == 1.0);
  CHECK(st2.alpha.get(1, 2) == 0.25);
  CHECK(st2.alpha.get(2, 2) == 0.0);
  CHECK(st2.encoders.params.views[0][0].W == st.encoders.params.views[0][0].W);
  CHECK(st2.encoders.params.views[1][0].b == st.encoders.params.views[1][0].b);
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".dims");
}
