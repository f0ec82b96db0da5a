#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <unistd.h>

#include "pmvge/eval.hpp"

using namespace pmvge;

namespace {

ModelState identity_model(int p) {
  ModelState st;
  st.encoders.specs = {{LayerSpec{p, p, Activation::Identity}}};
  Layer L;
  L.W = Eigen::MatrixXd::Identity(p, p);
  L.b = Eigen::VectorXd::Zero(p);
  st.encoders.params.views = {{L}};
  st.alpha = AlphaMatrix(1, ViewPairSet{{1, 1}}, 1.0);
  return st;
}

Dataset vector_dataset(const std::vector<Eigen::VectorXd>& xs) {
  Dataset ds;
  ds.views.push_back({1, static_cast<int>(xs[0].size())});
  ds.observed_pairs.insert(1, 1);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    NodeRecord nd;
    nd.node_id = static_cast<NodeId>(i);
    nd.ext_id = std::to_string(i);
    nd.view = 1;
    nd.x = xs[i];
    ds.nodes.push_back(std::move(nd));
  }
  ds.validate();
  return ds;
}

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("embed_all with the identity encoder reproduces inputs") {
  std::vector<Eigen::VectorXd> xs = {vec2(1, 2), vec2(-1, 0.5)};
  Dataset ds = vector_dataset(xs);
  ModelState st = identity_model(2);
  Embedding emb = embed_all(st, ds);
  CHECK(emb.n() == 2);
  CHECK(emb.K() == 2);
  CHECK(emb.y[0] == xs[0]);
  CHECK(emb.y[1] == xs[1]);
  // inductive purity: a new node with the same x embeds identically
  Dataset ds2 = vector_dataset({xs[1]});
  CHECK(embed_all(st, ds2).y[0] == emb.y[1]);
}

TEST_CASE("embedding file round trip") {
  std::vector<Eigen::VectorXd> xs = {vec2(0.125, -3), vec2(7, 0.25)};
  Embedding emb;
  emb.y = xs;
  emb.views = {1, 1};
  emb.ext_ids = {"a", "b"};
  const std::string path =
      (std::filesystem::temp_directory_path() /
       ("pmvge_emb_" + std::to_string(::getpid()) + ".tsv")).string();
  write_embedding(emb, path);
  Embedding back = read_embedding(path);
  CHECK(back.ext_ids == emb.ext_ids);
  CHECK(back.views == emb.views);
  CHECK(back.y[0] == emb.y[0]);
  CHECK(back.y[1] == emb.y[1]);
  std::filesystem::remove(path);
}

TEST_CASE("average precision examples") {
  Eigen::VectorXd q = vec2(1, 0);
  SUBCASE("all relevant ranked first") {
    std::vector<Eigen::VectorXd> cands = {vec2(1, 0.1), vec2(1, 0.2),
                                          vec2(-1, 0)};
    CHECK(average_precision(q, cands, {0, 1}) == doctest::Approx(1.0));
  }
  SUBCASE("one relevant ranked second of two") {
    std::vector<Eigen::VectorXd> cands = {vec2(1, 0), vec2(0.5, 0.5)};
    CHECK(average_precision(q, cands, {1}) == doctest::Approx(0.5));
  }
  SUBCASE("error paths") {
    std::vector<Eigen::VectorXd> cands = {vec2(1, 0)};
    CHECK_THROWS_AS(average_precision(q, cands, {}), UsageError);
    CHECK_THROWS_AS(average_precision(q, {}, {0}), UsageError);
    CHECK_THROWS_AS(average_precision(vec2(0, 0), cands, {0}), NumericError);
    std::vector<Eigen::VectorXd> zc = {vec2(0, 0)};
    CHECK_THROWS_AS(average_precision(q, zc, {0}), NumericError);
  }
  SUBCASE("invariant to positive rescaling") {
    std::vector<Eigen::VectorXd> cands = {vec2(0.3, 0.8), vec2(0.9, 0.1),
                                          vec2(-0.5, 0.4)};
    const double ap = average_precision(q, cands, {1, 2});
    for (auto& c : cands) c *= 7.5;
    CHECK(average_precision(3.0 * q, cands, {1, 2}) == doctest::Approx(ap));
  }
}

TEST_CASE("nmi basics") {
  CHECK(nmi({1, 1, 2, 2}, {1, 1, 2, 2}) == doctest::Approx(1.0));
  CHECK(nmi({1, 1, 2, 2}, {5, 5, 9, 9}) == doctest::Approx(1.0));  // relabeling
  CHECK(nmi({1, 1, 1, 1}, {1, 2, 1, 2}) == 0.0);  // zero entropy side
  // symmetry
  std::vector<int> a = {1, 2, 1, 3, 2, 1}, b = {2, 2, 1, 3, 3, 1};
  CHECK(nmi(a, b) == doctest::Approx(nmi(b, a)));
  CHECK_THROWS_AS(nmi({1}, {1, 2}), UsageError);
}

TEST_CASE("kmeans_nmi separates two Gaussian blobs") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 1);
    Embedding emb;
    std::vector<int> labels;
    for (int i = 0; i < 60; ++i) {
      const int c = i < 30 ? 1 : 2;
      Eigen::VectorXd y(2);
      y << (c == 1 ? -5.0 : 5.0) + 0.3 * rng.normal(), 0.3 * rng.normal();
      emb.y.push_back(y);
      emb.views.push_back(1);
      emb.ext_ids.push_back(std::to_string(i));
      labels.push_back(c);
    }
    CHECK(kmeans_nmi(emb, labels, 2, seed) > 0.95);
  }
}

TEST_CASE("kmeans_nmi degenerate embedding returns 0") {
  Embedding emb;
  std::vector<int> labels;
  for (int i = 0; i < 8; ++i) {
    emb.y.push_back(vec2(1, 1));
    emb.views.push_back(1);
    emb.ext_ids.push_back(std::to_string(i));
    labels.push_back(1 + i % 2);
  }
  CHECK(kmeans_nmi(emb, labels, 2, 0) == 0.0);
  CHECK_THROWS_AS(kmeans_nmi(emb, labels, 1, 0), UsageError);
}

TEST_CASE("softmax classifier on separable data") {
  std::vector<Eigen::VectorXd> trx, tex;
  std::vector<int> try_, tey;
  for (int i = 0; i < 20; ++i) {
    const int c = i % 2 + 1;
    trx.push_back(vec2(c == 1 ? -1.0 : 1.0, 0.01 * i));
    try_.push_back(c);
  }
  tex = {vec2(-1.2, 0.05), vec2(0.9, -0.1)};
  tey = {1, 2};
  CHECK(softmax_classify(trx, try_, tex, tey) == doctest::Approx(1.0));

  // a test point identical to a training point predicts its class
  CHECK(softmax_classify(trx, try_, {trx[0]}, {try_[0]}) ==
        doctest::Approx(1.0));

  // label swap symmetry: flipping class ids flips nothing about accuracy
  std::vector<int> try_swapped, tey_swapped = {2, 1};
  for (int c : try_) try_swapped.push_back(3 - c);
  CHECK(softmax_classify(trx, try_swapped, tex, tey_swapped) ==
        doctest::Approx(1.0));
}

TEST_CASE("softmax classifier at chance level on shuffled labels") {
  double acc_sum = 0.0;
  const int reps = 10;
  for (std::uint64_t seed = 0; seed < reps; ++seed) {
    Rng rng(seed + 100);
    std::vector<Eigen::VectorXd> trx, tex;
    std::vector<int> try_, tey;
    for (int i = 0; i < 200; ++i) {
      Eigen::VectorXd x = vec2(rng.normal(), rng.normal());
      int label = 1 + static_cast<int>(rng.uniform_int(2));
      if (i < 160) {
        trx.push_back(x);
        try_.push_back(label);
      } else {
        tex.push_back(x);
        tey.push_back(label);
      }
    }
    acc_sum += softmax_classify(trx, try_, tex, tey);
  }
  CHECK(std::fabs(acc_sum / reps - 0.5) < 0.1);
}

TEST_CASE("softmax classifier error paths") {
  std::vector<Eigen::VectorXd> trx = {vec2(0, 0), vec2(1, 1)};
  CHECK_THROWS_AS(softmax_classify(trx, {1, 3}, {}, {}), UsageError);
  CHECK_THROWS_AS(softmax_classify(trx, {1, 1}, {}, {}), UsageError);
}

TEST_CASE("spearman examples and properties") {
  std::vector<double> a = {1, 2, 3, 4, 5};
  std::vector<double> up = {10, 20, 30, 40, 50};
  std::vector<double> down = {5, 4, 3, 2, 1};
  CHECK(spearman(a, up) == doctest::Approx(1.0));
  CHECK(spearman(a, down) == doctest::Approx(-1.0));
  // invariance under strictly increasing transforms
  std::vector<double> b = {0.3, -2.0, 1.5, 0.0, 7.0};
  std::vector<double> eb;
  for (double v : b) eb.push_back(std::exp(v));
  CHECK(spearman(a, b) == doctest::Approx(spearman(a, eb)));
  CHECK_THROWS_AS(spearman({1, 1, 1}, {1, 2, 3}), NumericError);
  CHECK_THROWS_AS(spearman({1.0}, {2.0}), UsageError);
}

TEST_CASE("spearman with ties matches a brute-force rank oracle") {
  std::vector<double> a = {3, 1, 4, 1, 5, 9, 2, 6, 5, 3};
  std::vector<double> b = {2, 7, 1, 8, 2, 8, 1, 8, 2, 8};
  // brute-force average ranks
  auto brute_ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0, equal = 0;
      for (std::size_t j = 0; j < v.size(); ++j) {
        if (v[j] < v[i]) ++less;
        if (v[j] == v[i]) ++equal;
      }
      r[i] = less + 0.5 * (equal + 1);
    }
    return r;
  };
  auto ra = brute_ranks(a), rb = brute_ranks(b);
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= ra.size();
  mb /= rb.size();
  double num = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  CHECK(spearman(a, b) == doctest::Approx(num / std::sqrt(va * vb)).epsilon(1e-12));
}

TEST_CASE("spearman locality diagnostic") {
  Rng rng(31);
  std::vector<Eigen::VectorXd> xs;
  for (int i = 0; i < 30; ++i) {
    Eigen::VectorXd x(3);
    for (int k = 0; k < 3; ++k) x[k] = rng.uniform(-1.0, 1.0);
    xs.push_back(x);
  }
  Dataset ds = vector_dataset(xs);
  ModelState st;
  st.encoders.specs = {{LayerSpec{3, 3, Activation::Identity}}};
  Layer L;
  L.W = Eigen::MatrixXd::Identity(3, 3);
  L.b = Eigen::VectorXd::Zero(3);
  st.encoders.params.views = {{L}};
  st.alpha = AlphaMatrix(1, ViewPairSet{{1, 1}}, 1.0);
  Embedding emb = embed_all(st, ds);
  CHECK(spearman_locality(ds, emb, 1, 400, 0) == doctest::Approx(1.0));
  // negated inner-product series reverses the ordering
  std::vector<double> xin, yin;
  for (int i = 0; i < 10; ++i)
    for (int j = i + 1; j < 10; ++j) {
      xin.push_back(xs[i].dot(xs[j]));
      yin.push_back(-xs[i].dot(xs[j]));
    }
  CHECK(spearman(xin, yin) == doctest::Approx(-1.0));
}
