// Command-line front end: synthetic data generation, training, embedding,
// evaluation, the exact linear solvers, and the similarity-surface fit.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>

#include "pmvge/eval.hpp"
#include "pmvge/io.hpp"
#include "pmvge/spectral.hpp"
#include "pmvge/synthetic.hpp"
#include "pmvge/training.hpp"

namespace fs = std::filesystem;
using namespace pmvge;

namespace {

int thread_cap() {
  if (const char* env = std::getenv("MVGE_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

ViewPairSet read_pairs_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pairs file: " + path);
  ViewPairSet ps;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto f = detail::split(line, '\t');
    if (f.size() != 2) throw DataError("pairs row needs 2 fields: " + line);
    ps.insert(static_cast<ViewId>(detail::parse_int(f[0], "view")),
              static_cast<ViewId>(detail::parse_int(f[1], "view")));
  }
  if (ps.empty()) throw DataError("pairs file is empty: " + path);
  return ps;
}

void write_pairs_file(const ViewPairSet& ps, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& de : ps.pairs()) out << de.first << '\t' << de.second << '\n';
}

// Nodes-only dataset for inductive embedding; the view-pair mask comes from
// the model checkpoint.
Dataset load_nodes_only(const std::string& node_path, const ViewPairSet& mask) {
  // reuse the full loader with an empty edges file
  const fs::path tmp =
      fs::temp_directory_path() / ("pmvge_empty_edges_" +
                                   std::to_string(::getpid()) + ".tsv");
  {
    std::ofstream out(tmp);
    out << "# no edges\n";
  }
  Dataset ds = load_dataset(node_path, tmp.string(), mask);
  fs::remove(tmp);
  return ds;
}

// Encoder architecture string: per-view chains separated by ';', each chain
// a comma list of "<width><activation>" elements, e.g. "64tanh,8identity".
// The input dim of the first layer comes from the view's data dim. An empty
// string means one identity (linear) layer p_d -> K per view.
std::vector<ViewSpecs> parse_arch(const Dataset& ds, const std::string& arch,
                                  int K) {
  std::vector<ViewSpecs> specs;
  if (arch.empty()) {
    for (const auto& v : ds.views)
      specs.push_back({LayerSpec{v.dim, K, Activation::Identity}});
    return specs;
  }
  auto chains = detail::split(arch, ';');
  if (static_cast<int>(chains.size()) != ds.num_views())
    throw UsageError("arch must have one chain per view");
  for (int d = 0; d < ds.num_views(); ++d) {
    ViewSpecs chain;
    int in_dim = ds.views[static_cast<std::size_t>(d)].dim;
    for (auto& el : detail::split(chains[static_cast<std::size_t>(d)], ',')) {
      std::size_t pos = 0;
      while (pos < el.size() && std::isdigit(static_cast<unsigned char>(el[pos])))
        ++pos;
      if (pos == 0 || pos == el.size())
        throw UsageError("bad arch element: " + el);
      int width = std::stoi(el.substr(0, pos));
      chain.push_back({in_dim, width, activation_from_name(el.substr(pos))});
      in_dim = width;
    }
    if (chain.back().out_dim != K)
      throw UsageError("arch chain must end in K=" + std::to_string(K));
    specs.push_back(std::move(chain));
  }
  return specs;
}

void ensure_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (!fs::is_directory(out)) throw UsageError("cannot create out dir: " + out);
}

void write_grid_csv(const SimGrid& grid, const Eigen::MatrixXd& values,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out.precision(17);
  out << "s,t,value\n";
  for (int a = 0; a < grid.coords.size(); ++a)
    for (int b = 0; b < grid.coords.size(); ++b)
      out << grid.coords[a] << ',' << grid.coords[b] << ',' << values(a, b)
          << '\n';
}

// ---------------------------------------------------------------------------

struct SynthOpts {
  std::string kind, out;
  std::uint64_t seed = 0;
  int n = 300, c = 3, p = 5, k = 2, d = 2;
  double beta_diag = 5.0, beta_off = 0.1;
  double alpha0 = 0.5;
  double range = 2.0;
  int resolution = 21;
};

int cmd_synth(const SynthOpts& o) {
  ensure_out_dir(o.out);
  RunManifest man;
  man.command = "synth";
  man.seed = o.seed;
  man.config = {{"kind", o.kind}, {"n", o.n},      {"c", o.c},
                {"p", o.p},       {"k", o.k},      {"d", o.d},
                {"beta_diag", o.beta_diag},        {"beta_off", o.beta_off},
                {"alpha0", o.alpha0},              {"range", o.range},
                {"resolution", o.resolution},      {"seed", o.seed},
                {"threads", thread_cap()}};
  const fs::path out(o.out);

  if (o.kind == "sbm") {
    man.outputs = {"nodes.tsv", "edges.tsv", "labels.tsv", "pairs.tsv",
                   "truth.txt"};
    man.write((out / "manifest.json").string());
    Eigen::MatrixXd beta =
        Eigen::MatrixXd::Constant(o.c, o.c, o.beta_off);
    beta.diagonal().setConstant(o.beta_diag);
    Dataset ds = gen_sbm(o.n, o.c, beta, o.seed);
    write_nodes(ds, (out / "nodes.tsv").string());
    write_edges(ds, (out / "edges.tsv").string());
    write_labels(ds, (out / "labels.tsv").string());
    write_pairs_file(ds.observed_pairs, (out / "pairs.tsv").string());
    std::ofstream truth(out / "truth.txt");
    truth.precision(17);
    truth << "kind: sbm\nc: " << o.c << "\nbeta_diag: " << o.beta_diag
          << "\nbeta_off: " << o.beta_off << "\nseed: " << o.seed << "\n";
    return 0;
  }
  if (o.kind == "pmvge") {
    man.outputs = {"nodes.tsv", "edges.tsv", "pairs.tsv", "truth.model",
                   "truth.txt"};
    man.write((out / "manifest.json").string());
    GenerativeSpec spec;
    spec.D = o.d;
    spec.n = o.n;
    spec.eta.assign(static_cast<std::size_t>(o.d), 1.0 / o.d);
    ViewPairSet all;
    for (int a = 1; a <= o.d; ++a)
      for (int b = a; b <= o.d; ++b) all.insert(a, b);
    for (int v = 0; v < o.d; ++v)
      spec.samplers.push_back({SamplerKind::UniformBox, o.p, -1.0, 1.0, 1.0});
    // true linear model with entries scaled so mu* stays well conditioned
    std::vector<ViewSpecs> specs;
    for (int v = 0; v < o.d; ++v)
      specs.push_back({LayerSpec{o.p, o.k, Activation::Identity}});
    spec.truth.encoders = make_stack(specs, o.seed ^ 0x7457ULL);
    Rng trng = Rng::substream(o.seed, "true-psi");
    for (auto& vp : spec.truth.encoders.params.views)
      for (auto& L : vp)
        for (Eigen::Index r = 0; r < L.W.rows(); ++r)
          for (Eigen::Index c2 = 0; c2 < L.W.cols(); ++c2)
            L.W(r, c2) = trng.uniform(-0.5, 0.5);
    spec.truth.alpha = AlphaMatrix(o.d, all, o.alpha0);
    GeneratedData gen = gen_pmvge(spec, o.seed);
    write_nodes(gen.ds, (out / "nodes.tsv").string());
    write_edges(gen.ds, (out / "edges.tsv").string());
    write_pairs_file(gen.ds.observed_pairs, (out / "pairs.tsv").string());
    save_model(spec.truth, (out / "truth.model").string());
    std::ofstream truth(out / "truth.txt");
    truth.precision(17);
    truth << "kind: pmvge\nd: " << o.d << "\nk: " << o.k << "\np: " << o.p
          << "\nalpha0: " << o.alpha0 << "\nseed: " << o.seed << "\n";
    return 0;
  }
  if (o.kind == "simgrid") {
    man.outputs = {"gstar.csv"};
    man.write((out / "manifest.json").string());
    SimGridSpec spec{o.range, o.resolution};
    SimGrid grid = gen_sim_grid(spec);
    write_grid_csv(grid, grid.values, (out / "gstar.csv").string());
    return 0;
  }
  if (o.kind == "classifier") {
    man.outputs = {"nodes.tsv", "edges.tsv", "labels.tsv", "pairs.tsv",
                   "truth.txt"};
    man.write((out / "manifest.json").string());
    // Gaussian blobs, one per class, run through the classifier construction
    Rng rng = Rng::substream(o.seed, "gen-classifier");
    std::vector<Eigen::VectorXd> centers;
    for (int c = 0; c < o.c; ++c) {
      Eigen::VectorXd mu(o.p);
      for (int j = 0; j < o.p; ++j) mu[j] = rng.uniform(-3.0, 3.0);
      centers.push_back(mu);
    }
    std::vector<Eigen::VectorXd> X;
    std::vector<int> labels;
    for (int i = 0; i < o.n; ++i) {
      int c = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(o.c)));
      Eigen::VectorXd x = centers[static_cast<std::size_t>(c)];
      for (int j = 0; j < o.p; ++j) x[j] += 0.5 * rng.normal();
      X.push_back(x);
      labels.push_back(c + 1);
    }
    Dataset ds = classifier_dataset(X, labels, o.c);
    write_nodes(ds, (out / "nodes.tsv").string());
    write_edges(ds, (out / "edges.tsv").string());
    write_labels(ds, (out / "labels.tsv").string());
    write_pairs_file(ds.observed_pairs, (out / "pairs.tsv").string());
    std::ofstream truth(out / "truth.txt");
    truth << "kind: classifier\nc: " << o.c << "\np: " << o.p
          << "\nseed: " << o.seed << "\n";
    return 0;
  }
  throw UsageError("unknown synth kind: " + o.kind);
}

// ---------------------------------------------------------------------------

struct TrainOpts {
  std::string nodes, edges, pairs, labels, config, out, arch;
  std::vector<std::string> overrides;
  int k = 2;
};

int cmd_train(const TrainOpts& o) {
  ensure_out_dir(o.out);
  std::map<std::string, std::string> kv;
  if (!o.config.empty()) kv = read_config(o.config);
  for (const auto& ov : o.overrides) {
    auto eq = ov.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value");
    kv[ov.substr(0, eq)] = ov.substr(eq + 1);
  }
  TrainConfig cfg = train_config_from_map(kv);

  RunManifest man;
  man.command = "train";
  man.seed = cfg.seed;
  man.config = train_config_to_json(cfg);
  man.config["arch"] = o.arch;
  man.config["k"] = o.k;
  man.config["threads"] = thread_cap();
  man.input_hashes[o.nodes] = file_hash(o.nodes);
  man.input_hashes[o.edges] = file_hash(o.edges);
  man.input_hashes[o.pairs] = file_hash(o.pairs);
  if (!o.labels.empty()) man.input_hashes[o.labels] = file_hash(o.labels);
  if (!o.config.empty()) man.input_hashes[o.config] = file_hash(o.config);
  man.outputs = {"model.ckpt", "train_log.csv", "id_table.tsv"};
  const fs::path out(o.out);
  man.write((out / "manifest.json").string());

  Dataset ds = load_dataset(o.nodes, o.edges, read_pairs_file(o.pairs), o.labels);
  auto specs = parse_arch(ds, o.arch, o.k);
  TrainReport rep = train(ds, specs, cfg);
  save_model(rep.state, (out / "model.ckpt").string());
  write_train_log(rep, cfg, (out / "train_log.csv").string());
  write_id_table(ds, (out / "id_table.tsv").string());
  if (!rep.objectives.empty())
    std::cerr << "final minibatch objective " << rep.objectives.back() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_embed(const std::string& model_path, const std::string& nodes,
              const std::string& out_dir) {
  ensure_out_dir(out_dir);
  ModelState state = load_model(model_path);
  RunManifest man;
  man.command = "embed";
  man.config = {{"threads", thread_cap()}};
  man.input_hashes[model_path] = file_hash(model_path);
  man.input_hashes[nodes] = file_hash(nodes);
  man.outputs = {"embedding.tsv"};
  const fs::path out(out_dir);
  man.write((out / "manifest.json").string());
  Dataset ds = load_nodes_only(nodes, state.alpha.mask());
  Embedding emb = embed_all(state, ds);
  write_embedding(emb, (out / "embedding.tsv").string());
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalOpts {
  std::string task, embedding, labels, edges, nodes, out;
  int k = 2, restarts = 10, pairs_count = 1000;
  int query_view = 1, candidate_view = 2;
  ViewId view = 1;
  double reg = 1e-4, test_fraction = 0.2;
  std::uint64_t seed = 0;
};

std::map<std::string, int> read_label_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open labels file: " + path);
  std::map<std::string, int> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto f = detail::split(line, '\t');
    if (f.size() != 2) throw DataError("labels row needs 2 fields: " + line);
    out[f[0]] = static_cast<int>(detail::parse_int(f[1], "class id"));
  }
  return out;
}

int cmd_eval(const EvalOpts& o) {
  ensure_out_dir(o.out);
  RunManifest man;
  man.command = "eval";
  man.seed = o.seed;
  man.config = {{"task", o.task},       {"k", o.k},
                {"restarts", o.restarts}, {"reg", o.reg},
                {"test_fraction", o.test_fraction},
                {"pairs_count", o.pairs_count},
                {"view", o.view},
                {"seed", o.seed},
                {"threads", thread_cap()}};
  man.input_hashes[o.embedding] = file_hash(o.embedding);
  if (!o.labels.empty()) man.input_hashes[o.labels] = file_hash(o.labels);
  if (!o.edges.empty()) man.input_hashes[o.edges] = file_hash(o.edges);
  if (!o.nodes.empty()) man.input_hashes[o.nodes] = file_hash(o.nodes);
  man.outputs = {"report.csv"};
  const fs::path out(o.out);
  man.write((out / "manifest.json").string());

  Embedding emb = read_embedding(o.embedding);
  double metric = 0.0;
  std::string metric_name;

  if (o.task == "nmi") {
    if (o.labels.empty()) throw UsageError("nmi needs --labels");
    auto lm = read_label_map(o.labels);
    std::vector<int> labels;
    std::vector<Eigen::VectorXd> pts;
    Embedding sub;
    for (int i = 0; i < emb.n(); ++i) {
      auto it = lm.find(emb.ext_ids[static_cast<std::size_t>(i)]);
      if (it == lm.end()) continue;
      sub.y.push_back(emb.y[static_cast<std::size_t>(i)]);
      sub.views.push_back(emb.views[static_cast<std::size_t>(i)]);
      sub.ext_ids.push_back(emb.ext_ids[static_cast<std::size_t>(i)]);
      labels.push_back(it->second);
    }
    metric = kmeans_nmi(sub, labels, o.k, o.seed, o.restarts);
    metric_name = "nmi";
  } else if (o.task == "classify") {
    if (o.labels.empty()) throw UsageError("classify needs --labels");
    auto lm = read_label_map(o.labels);
    std::vector<Eigen::VectorXd> xs;
    std::vector<int> ys;
    for (int i = 0; i < emb.n(); ++i) {
      auto it = lm.find(emb.ext_ids[static_cast<std::size_t>(i)]);
      if (it == lm.end()) continue;
      xs.push_back(emb.y[static_cast<std::size_t>(i)]);
      ys.push_back(it->second);
    }
    if (xs.size() < 5) throw UsageError("classify: too few labeled nodes");
    // deterministic shuffled split
    Rng rng = Rng::substream(o.seed, "classify-split");
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i-- > 1;)
      std::swap(order[i], order[rng.uniform_int(i + 1)]);
    std::size_t ntest =
        static_cast<std::size_t>(o.test_fraction * static_cast<double>(xs.size()));
    ntest = std::max<std::size_t>(1, std::min(xs.size() - 1, ntest));
    std::vector<Eigen::VectorXd> trx, tex;
    std::vector<int> try_, tey;
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (i < ntest) {
        tex.push_back(xs[order[i]]);
        tey.push_back(ys[order[i]]);
      } else {
        trx.push_back(xs[order[i]]);
        try_.push_back(ys[order[i]]);
      }
    }
    metric = softmax_classify(trx, try_, tex, tey, o.reg, o.seed);
    metric_name = "accuracy";
  } else if (o.task == "ap") {
    if (o.edges.empty()) throw UsageError("ap needs --edges ground truth");
    // rank candidate-view nodes for each query-view node; relevant = linked
    std::map<std::string, int> pos;
    for (int i = 0; i < emb.n(); ++i)
      pos[emb.ext_ids[static_cast<std::size_t>(i)]] = i;
    std::vector<int> cands;
    for (int i = 0; i < emb.n(); ++i)
      if (emb.views[static_cast<std::size_t>(i)] == o.candidate_view)
        cands.push_back(i);
    if (cands.empty()) throw UsageError("ap: candidate view is empty");
    std::map<int, std::set<int>> relevant;  // query node -> candidate indices
    std::ifstream ef(o.edges);
    if (!ef) throw DataError("cannot open edges file: " + o.edges);
    std::map<int, int> cand_index;
    for (std::size_t c = 0; c < cands.size(); ++c)
      cand_index[cands[c]] = static_cast<int>(c);
    std::string line;
    while (std::getline(ef, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      auto f = detail::split(line, '\t');
      if (f.size() != 3) throw DataError("edges row needs 3 fields: " + line);
      if (detail::parse_real(f[2], "weight") <= 0.0) continue;
      auto a = pos.find(f[0]);
      auto b = pos.find(f[1]);
      if (a == pos.end() || b == pos.end())
        throw DataError("unknown node id in edge row: " + line);
      for (auto [qi, ci] : {std::pair{a->second, b->second},
                            std::pair{b->second, a->second}}) {
        if (emb.views[static_cast<std::size_t>(qi)] == o.query_view &&
            emb.views[static_cast<std::size_t>(ci)] == o.candidate_view)
          relevant[qi].insert(cand_index[ci]);
      }
    }
    if (relevant.empty()) throw UsageError("ap: no query has relevant items");
    std::vector<Eigen::VectorXd> cand_vecs;
    for (int c : cands) cand_vecs.push_back(emb.y[static_cast<std::size_t>(c)]);
    double sum = 0.0;
    for (auto& [qi, rel] : relevant)
      sum += average_precision(emb.y[static_cast<std::size_t>(qi)], cand_vecs, rel);
    metric = sum / static_cast<double>(relevant.size());
    metric_name = "map";
  } else if (o.task == "spearman") {
    if (o.nodes.empty()) throw UsageError("spearman needs --nodes");
    Dataset ds = load_nodes_only(o.nodes, ViewPairSet{{1, 1}});
    if (ds.n() != emb.n()) throw UsageError("embedding/nodes size mismatch");
    metric = spearman_locality(ds, emb, o.view, o.pairs_count, o.seed);
    metric_name = "spearman";
  } else {
    throw UsageError("unknown eval task: " + o.task);
  }

  std::ofstream rep(out / "report.csv");
  rep.precision(17);
  rep << "task,metric,value,seed\n"
      << o.task << ',' << metric_name << ',' << metric << ',' << o.seed << '\n';
  std::cout << o.task << ' ' << metric_name << ' ' << metric << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct CdmcaOpts {
  std::string nodes, edges, pairs, out, variant = "cdmca";
  int k = 2;
  double alpha0 = 1.0;
  double eps = -1.0;  // <0: default ridge
  bool check_equivalence = false;
};

int cmd_cdmca(const CdmcaOpts& o) {
  ensure_out_dir(o.out);
  if (o.variant != "cdmca" && o.variant != "pmvge-linear")
    throw UsageError("unknown cdmca variant: " + o.variant);
  RunManifest man;
  man.command = "cdmca";
  man.config = {{"variant", o.variant}, {"k", o.k},
                {"alpha0", o.alpha0},   {"eps", o.eps},
                {"check_equivalence", o.check_equivalence},
                {"threads", thread_cap()}};
  man.input_hashes[o.nodes] = file_hash(o.nodes);
  man.input_hashes[o.edges] = file_hash(o.edges);
  man.input_hashes[o.pairs] = file_hash(o.pairs);
  man.outputs = {"psi.tsv", "embedding.tsv", "report.txt"};
  const fs::path out(o.out);
  man.write((out / "manifest.json").string());

  Dataset ds = load_dataset(o.nodes, o.edges, read_pairs_file(o.pairs));
  AugmentedDesign design = build_augmented(ds);
  const double eps = o.eps < 0.0 ? default_ridge(design) : o.eps;
  SpectralSolution sol = o.variant == "cdmca"
                             ? cdmca_solve(design, o.k, eps)
                             : approx_pmvge_linear(design, o.k, o.alpha0, eps);

  std::ofstream psi(out / "psi.tsv");
  psi.precision(17);
  for (int rix = 0; rix < design.p; ++rix) {
    psi << rix << '\t';
    for (int c = 0; c < o.k; ++c) {
      if (c) psi << ',';
      psi << sol.psi(rix, c);
    }
    psi << '\n';
  }
  Eigen::MatrixXd Y = spectral_embed(design, sol);
  Embedding emb;
  for (int i = 0; i < ds.n(); ++i) {
    emb.y.push_back(Y.row(i).transpose());
    emb.views.push_back(ds.nodes[static_cast<std::size_t>(i)].view);
    emb.ext_ids.push_back(ds.nodes[static_cast<std::size_t>(i)].ext_id);
  }
  write_embedding(emb, (out / "embedding.tsv").string());

  std::ofstream rep(out / "report.txt");
  rep.precision(17);
  rep << "variant: " << o.variant << "\nk: " << o.k << "\neps: " << eps
      << "\ndegenerate: " << (sol.degenerate ? 1 : 0) << "\n";
  for (int k2 = 0; k2 < o.k; ++k2)
    rep << "lambda_" << (k2 + 1) << ": " << sol.eigenvalues[k2] << "\n";
  if (o.variant == "pmvge-linear")
    for (int k2 = 0; k2 < o.k; ++k2)
      rep << "gamma_" << (k2 + 1) << ": " << sol.gammas[k2] << "\n";
  if (o.check_equivalence) {
    SpectralSolution c = cdmca_solve(design, o.k, eps);
    SpectralSolution p = approx_pmvge_linear(design, o.k, o.alpha0, eps);
    auto eq = scaling_equivalence_check(c, p, design);
    rep << "equivalence_max_column_deviation: " << eq.max_column_deviation
        << "\nequivalence_max_inner_deviation: " << eq.max_inner_deviation
        << "\nequivalence_pass: " << (eq.pass ? 1 : 0) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct SimfitOpts {
  std::string out;
  double range = 2.0;
  int resolution = 21;
  int n = 1000;
  int t_hidden = 1000;
  int k = 50;
  std::uint64_t seed = 0;
  int iterations = 1500;
  double lr = 1e-3;
  int m = 512;
};

int cmd_simfit(const SimfitOpts& o) {
  ensure_out_dir(o.out);
  RunManifest man;
  man.command = "simfit";
  man.seed = o.seed;
  man.config = {{"range", o.range}, {"resolution", o.resolution},
                {"n", o.n},         {"t_hidden", o.t_hidden},
                {"k", o.k},         {"seed", o.seed},
                {"iterations", o.iterations},
                {"lr", o.lr},       {"m", o.m},
                {"threads", thread_cap()}};
  man.outputs = {"ghat.csv", "gstar.csv", "summary.txt"};
  const fs::path out(o.out);
  man.write((out / "manifest.json").string());

  SimGridSpec gspec{o.range, o.resolution};
  Dataset ds = gen_simfit_train(gspec, o.n, o.seed);

  std::vector<ViewSpecs> specs;
  for (int v = 0; v < 2; ++v)
    specs.push_back({LayerSpec{5, o.t_hidden, Activation::Relu},
                     LayerSpec{o.t_hidden, o.k, Activation::Identity}});
  TrainConfig cfg;
  cfg.m = o.m;
  cfg.r = 1.0;
  cfg.tau = 1.0;
  cfg.optimizer = Optimizer::Adam;
  cfg.lr = o.lr;
  cfg.lr_decay = 0.5;
  cfg.lr_decay_period = std::max(1, o.iterations / 3);
  cfg.iterations = o.iterations;
  // alpha stays fixed at 1: the weights are exp(G*), so any alpha drift
  // shifts the learned inner-product surface by -log(alpha)
  cfg.alpha_update_period = 0;
  cfg.seed = o.seed;
  TrainReport rep = train(ds, specs, cfg);
  for (double obj : rep.objectives)
    if (!is_finite(obj)) throw NumericError("training diverged");

  SimGrid grid = gen_sim_grid(gspec);
  Eigen::MatrixXd ghat(o.resolution, o.resolution);
  Eigen::MatrixXd Y1(o.k, o.resolution), Y2(o.k, o.resolution);
  for (int a = 0; a < o.resolution; ++a) {
    Y1.col(a) = forward(rep.state.encoders, 1, grid.coords[a] * sim_probe_e1());
    Y2.col(a) = forward(rep.state.encoders, 2, grid.coords[a] * sim_probe_e2());
  }
  for (int a = 0; a < o.resolution; ++a)
    for (int b = 0; b < o.resolution; ++b)
      ghat(a, b) = Y1.col(a).dot(Y2.col(b));

  write_grid_csv(grid, ghat, (out / "ghat.csv").string());
  write_grid_csv(grid, grid.values, (out / "gstar.csv").string());
  const Eigen::MatrixXd err = (ghat - grid.values).cwiseAbs();
  std::ofstream sum(out / "summary.txt");
  sum.precision(17);
  sum << "k: " << o.k << "\nt_hidden: " << o.t_hidden
      << "\nmean_abs_error: " << err.mean()
      << "\nmax_abs_error: " << err.maxCoeff() << "\n";
  std::cout << "simfit k=" << o.k << " mean_abs_error " << err.mean() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic multi-view graph embedding toolkit"};
  app.require_subcommand(1);

  SynthOpts so;
  auto* synth = app.add_subcommand("synth", "generate synthetic datasets");
  synth->add_option("--kind", so.kind, "sbm | pmvge | simgrid | classifier")
      ->required();
  synth->add_option("--out", so.out)->required();
  synth->add_option("--seed", so.seed);
  synth->add_option("--n", so.n);
  synth->add_option("--c", so.c);
  synth->add_option("--p", so.p);
  synth->add_option("--k", so.k);
  synth->add_option("--d", so.d);
  synth->add_option("--beta-diag", so.beta_diag);
  synth->add_option("--beta-off", so.beta_off);
  synth->add_option("--alpha0", so.alpha0);
  synth->add_option("--range", so.range);
  synth->add_option("--resolution", so.resolution);

  TrainOpts to;
  auto* tr = app.add_subcommand("train", "alternating estimation of (alpha, psi)");
  tr->add_option("--nodes", to.nodes)->required();
  tr->add_option("--edges", to.edges)->required();
  tr->add_option("--pairs", to.pairs)->required();
  tr->add_option("--labels", to.labels);
  tr->add_option("--config", to.config);
  tr->add_option("--set", to.overrides, "config overrides key=value");
  tr->add_option("--arch", to.arch, "per-view layer chains");
  tr->add_option("--k", to.k, "shared-space dimension");
  tr->add_option("--out", to.out)->required();

  std::string em_model, em_nodes, em_out;
  auto* embd = app.add_subcommand("embed", "compute feature vectors");
  embd->add_option("--model", em_model)->required();
  embd->add_option("--nodes", em_nodes)->required();
  embd->add_option("--out", em_out)->required();

  EvalOpts eo;
  auto* ev = app.add_subcommand("eval", "evaluation tasks");
  ev->add_option("--task", eo.task, "ap | nmi | classify | spearman")->required();
  ev->add_option("--embedding", eo.embedding)->required();
  ev->add_option("--labels", eo.labels);
  ev->add_option("--edges", eo.edges);
  ev->add_option("--nodes", eo.nodes);
  ev->add_option("--k", eo.k);
  ev->add_option("--restarts", eo.restarts);
  ev->add_option("--reg", eo.reg);
  ev->add_option("--test-fraction", eo.test_fraction);
  ev->add_option("--pairs-count", eo.pairs_count);
  ev->add_option("--view", eo.view);
  ev->add_option("--query-view", eo.query_view);
  ev->add_option("--candidate-view", eo.candidate_view);
  ev->add_option("--seed", eo.seed);
  ev->add_option("--out", eo.out)->required();

  CdmcaOpts co;
  auto* cd = app.add_subcommand("cdmca", "exact linear/eigendecomposition path");
  cd->add_option("--nodes", co.nodes)->required();
  cd->add_option("--edges", co.edges)->required();
  cd->add_option("--pairs", co.pairs)->required();
  cd->add_option("--variant", co.variant, "cdmca | pmvge-linear");
  cd->add_option("--k", co.k);
  cd->add_option("--alpha0", co.alpha0);
  cd->add_option("--eps", co.eps);
  cd->add_flag("--check-equivalence", co.check_equivalence);
  cd->add_option("--out", co.out)->required();

  SimfitOpts fo;
  auto* sf = app.add_subcommand("simfit", "fit the similarity surface");
  sf->add_option("--out", fo.out)->required();
  sf->add_option("--range", fo.range);
  sf->add_option("--resolution", fo.resolution);
  sf->add_option("--n", fo.n);
  sf->add_option("--t-hidden", fo.t_hidden);
  sf->add_option("--k", fo.k);
  sf->add_option("--seed", fo.seed);
  sf->add_option("--iterations", fo.iterations);
  sf->add_option("--lr", fo.lr);
  sf->add_option("--m", fo.m);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) return cmd_synth(so);
    if (*tr) return cmd_train(to);
    if (*embd) return cmd_embed(em_model, em_nodes, em_out);
    if (*ev) return cmd_eval(eo);
    if (*cd) return cmd_cdmca(co);
    if (*sf) return cmd_simfit(fo);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
