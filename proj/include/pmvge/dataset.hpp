#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "pmvge/common.hpp"
#include "pmvge/rng.hpp"

namespace pmvge {

struct ViewSpec {
  ViewId view_id = 0;
  int dim = 0;  // p_d
};

struct NodeRecord {
  NodeId node_id = 0;
  ViewId view = 0;
  std::string ext_id;  // id as it appeared in the input file
  Eigen::VectorXd x;
};

// Unordered view pairs (d,e), stored with d <= e.
class ViewPairSet {
 public:
  ViewPairSet() = default;
  explicit ViewPairSet(std::initializer_list<std::pair<ViewId, ViewId>> ps) {
    for (auto& p : ps) insert(p.first, p.second);
  }

  void insert(ViewId d, ViewId e) {
    if (d < 1 || e < 1) throw DataError("view pair ids must be >= 1");
    pairs_.insert(ordered(d, e));
  }
  bool contains(ViewId d, ViewId e) const {
    return pairs_.count(ordered(d, e)) > 0;
  }
  bool empty() const { return pairs_.empty(); }
  std::size_t size() const { return pairs_.size(); }
  const std::set<std::pair<ViewId, ViewId>>& pairs() const { return pairs_; }

  static std::pair<ViewId, ViewId> ordered(ViewId d, ViewId e) {
    return d <= e ? std::make_pair(d, e) : std::make_pair(e, d);
  }

 private:
  std::set<std::pair<ViewId, ViewId>> pairs_;
};

// Sparse symmetric weights keyed by unordered pair (i<j). No self-loops.
// Duplicate insertions sum: weights are event counts.
class LinkWeights {
 public:
  using Map = std::map<std::pair<NodeId, NodeId>, double>;

  void add(NodeId i, NodeId j, double w) {
    if (i == j)
      throw DataError("self-loop weight at node " + std::to_string(i));
    if (!(w >= 0.0) || !is_finite(w))
      throw DataError("negative or non-finite weight on pair (" +
                      std::to_string(i) + "," + std::to_string(j) + ")");
    auto key = i < j ? std::make_pair(i, j) : std::make_pair(j, i);
    entries_[key] += w;
  }

  double get(NodeId i, NodeId j) const {
    if (i == j) return 0.0;
    auto key = i < j ? std::make_pair(i, j) : std::make_pair(j, i);
    auto it = entries_.find(key);
    return it == entries_.end() ? 0.0 : it->second;
  }

  const Map& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  Map entries_;
};

struct Dataset {
  std::vector<ViewSpec> views;            // contiguous view_id 1..D
  std::vector<NodeRecord> nodes;          // node_id == index
  LinkWeights weights;
  ViewPairSet observed_pairs;             // the set D
  std::map<NodeId, int> labels;           // optional, class id in 1..C

  int n() const { return static_cast<int>(nodes.size()); }
  int num_views() const { return static_cast<int>(views.size()); }

  const ViewSpec& view(ViewId d) const {
    if (d < 1 || d > num_views())
      throw DataError("unknown view id " + std::to_string(d));
    return views[static_cast<std::size_t>(d - 1)];
  }

  void validate() const {
    if (observed_pairs.empty()) throw DataError("observed view-pair set is empty");
    for (int d = 0; d < num_views(); ++d) {
      if (views[d].view_id != d + 1)
        throw DataError("view ids must be contiguous 1..D");
      if (views[d].dim < 1) throw DataError("view dim must be >= 1");
    }
    for (const auto& de : observed_pairs.pairs()) {
      if (de.second > num_views())
        throw DataError("observed pair references unknown view");
    }
    for (int i = 0; i < n(); ++i) {
      const auto& nd = nodes[static_cast<std::size_t>(i)];
      if (nd.node_id != i) throw DataError("node ids must be dense 0..n-1");
      if (nd.view < 1 || nd.view > num_views())
        throw DataError("node " + nd.ext_id + " has unknown view");
      if (nd.x.size() != view(nd.view).dim)
        throw DataError("dimension mismatch for node " + nd.ext_id);
      for (Eigen::Index k = 0; k < nd.x.size(); ++k)
        if (!is_finite(nd.x[k]))
          throw DataError("non-finite entry in data vector of node " + nd.ext_id);
    }
    for (auto& [ij, w] : weights.entries()) {
      if (ij.first < 0 || ij.second >= n())
        throw DataError("edge references unknown node id");
      ViewId di = nodes[static_cast<std::size_t>(ij.first)].view;
      ViewId dj = nodes[static_cast<std::size_t>(ij.second)].view;
      if (!observed_pairs.contains(di, dj))
        throw DataError("weight on pair (" + std::to_string(ij.first) + "," +
                        std::to_string(ij.second) +
                        ") whose view pair is not observed");
      (void)w;
    }
    for (auto& [id, c] : labels) {
      if (id < 0 || id >= n()) throw DataError("label references unknown node");
      if (c < 1) throw DataError("class ids must be >= 1");
    }
  }
};

// ---------------------------------------------------------------------------
// Enumeration of I_n = {(i,j) | i<j, (d_i,d_j) in D} without materializing it.

struct PairStratum {
  ViewId d, e;                 // d <= e
  std::uint64_t count;         // |I_n^{(d,e)}|
};

class PairIndex {
 public:
  explicit PairIndex(const Dataset& ds) : ds_(&ds) {
    nodes_by_view_.resize(static_cast<std::size_t>(ds.num_views()) + 1);
    for (const auto& nd : ds.nodes)
      nodes_by_view_[static_cast<std::size_t>(nd.view)].push_back(nd.node_id);
    for (const auto& de : ds.observed_pairs.pairs()) {
      auto nd = nodes_by_view_[static_cast<std::size_t>(de.first)].size();
      auto ne = nodes_by_view_[static_cast<std::size_t>(de.second)].size();
      std::uint64_t c = de.first == de.second ? nd * (nd - 1) / 2 : nd * ne;
      if (c > 0) strata_.push_back({de.first, de.second, c});
      total_ += c;
    }
  }

  std::uint64_t count() const { return total_; }  // n-tilde = |I_n|

  // Positive subset W_n, ascending (i,j).
  std::vector<std::tuple<NodeId, NodeId, double>> positives() const {
    std::vector<std::tuple<NodeId, NodeId, double>> out;
    for (auto& [ij, w] : ds_->weights.entries())
      if (w > 0.0) out.emplace_back(ij.first, ij.second, w);
    return out;
  }

  // Visit every pair of I_n once, ascending i then j.
  template <typename F>
  void for_each(F&& f) const {
    const int n = ds_->n();
    for (int i = 0; i < n; ++i) {
      ViewId di = ds_->nodes[static_cast<std::size_t>(i)].view;
      for (int j = i + 1; j < n; ++j) {
        ViewId dj = ds_->nodes[static_cast<std::size_t>(j)].view;
        if (ds_->observed_pairs.contains(di, dj)) f(i, j);
      }
    }
  }

  // Uniform draw from I_n by stratum selection + index arithmetic.
  std::pair<NodeId, NodeId> sample_uniform(Rng& rng) const {
    if (total_ == 0) throw UsageError("sample_uniform: I_n is empty");
    std::uint64_t t = rng.uniform_int(total_);
    for (const auto& s : strata_) {
      if (t < s.count) return sample_in_stratum(s, rng);
      t -= s.count;
    }
    return sample_in_stratum(strata_.back(), rng);  // unreachable
  }

  const std::vector<NodeId>& nodes_in_view(ViewId d) const {
    return nodes_by_view_[static_cast<std::size_t>(d)];
  }

 private:
  std::pair<NodeId, NodeId> sample_in_stratum(const PairStratum& s, Rng& rng) const {
    const auto& vd = nodes_by_view_[static_cast<std::size_t>(s.d)];
    const auto& ve = nodes_by_view_[static_cast<std::size_t>(s.e)];
    NodeId i, j;
    if (s.d == s.e) {
      std::uint64_t a, b;
      do {
        a = rng.uniform_int(vd.size());
        b = rng.uniform_int(vd.size());
      } while (a == b);
      i = vd[a];
      j = vd[b];
    } else {
      i = vd[rng.uniform_int(vd.size())];
      j = ve[rng.uniform_int(ve.size())];
    }
    return i < j ? std::make_pair(i, j) : std::make_pair(j, i);
  }

  const Dataset* ds_;
  std::vector<std::vector<NodeId>> nodes_by_view_;
  std::vector<PairStratum> strata_;
  std::uint64_t total_ = 0;
};

// ---------------------------------------------------------------------------
// TSV ingestion. Formats:
//   nodes:  node_id <TAB> view_id <TAB> v1,v2,...,vp
//   edges:  node_i  <TAB> node_j  <TAB> weight
//   labels: node_id <TAB> class_id
// '#'-prefixed lines ignored. External node ids may be arbitrary strings;
// they are mapped to dense 0-based ids in order of first appearance.

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  return out;
}

inline double parse_real(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw DataError("trailing junk");
    return v;
  } catch (const std::exception&) {
    throw DataError("cannot parse " + what + ": '" + s + "'");
  }
}

inline long parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size()) throw DataError("trailing junk");
    return v;
  } catch (const std::exception&) {
    throw DataError("cannot parse " + what + ": '" + s + "'");
  }
}

inline bool usable_line(const std::string& line) {
  return !line.empty() && line[0] != '#' && line != "\r";
}

}  // namespace detail

inline Dataset load_dataset(const std::string& node_path,
                            const std::string& edge_path,
                            const ViewPairSet& pair_spec,
                            const std::string& label_path = "") {
  Dataset ds;
  ds.observed_pairs = pair_spec;

  std::ifstream nf(node_path);
  if (!nf) throw DataError("cannot open nodes file: " + node_path);
  std::map<std::string, NodeId> id_table;
  int max_view = 0;
  std::string line;
  while (std::getline(nf, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!detail::usable_line(line)) continue;
    auto f = detail::split(line, '\t');
    if (f.size() != 3) throw DataError("nodes row needs 3 fields: " + line);
    NodeRecord nd;
    nd.ext_id = f[0];
    nd.node_id = static_cast<NodeId>(ds.nodes.size());
    if (!id_table.emplace(nd.ext_id, nd.node_id).second)
      throw DataError("duplicate node id: " + nd.ext_id);
    nd.view = static_cast<ViewId>(detail::parse_int(f[1], "view id"));
    auto vals = detail::split(f[2], ',');
    nd.x.resize(static_cast<Eigen::Index>(vals.size()));
    for (std::size_t k = 0; k < vals.size(); ++k)
      nd.x[static_cast<Eigen::Index>(k)] =
          detail::parse_real(vals[k], "vector entry");
    max_view = std::max(max_view, static_cast<int>(nd.view));
    ds.nodes.push_back(std::move(nd));
  }
  // Infer view dims from the data; every node of a view must agree.
  ds.views.resize(static_cast<std::size_t>(max_view));
  std::vector<int> dim(static_cast<std::size_t>(max_view) + 1, -1);
  for (const auto& nd : ds.nodes) {
    int& d = dim[static_cast<std::size_t>(nd.view)];
    if (d < 0)
      d = static_cast<int>(nd.x.size());
    else if (d != static_cast<int>(nd.x.size()))
      throw DataError("dimension mismatch in view " + std::to_string(nd.view) +
                      " at node " + nd.ext_id);
  }
  for (int d = 1; d <= max_view; ++d) {
    if (dim[static_cast<std::size_t>(d)] < 0)
      throw DataError("view " + std::to_string(d) + " has no nodes");
    ds.views[static_cast<std::size_t>(d - 1)] = {d, dim[static_cast<std::size_t>(d)]};
  }

  std::ifstream ef(edge_path);
  if (!ef) throw DataError("cannot open edges file: " + edge_path);
  while (std::getline(ef, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!detail::usable_line(line)) continue;
    auto f = detail::split(line, '\t');
    if (f.size() != 3) throw DataError("edges row needs 3 fields: " + line);
    auto it_i = id_table.find(f[0]);
    auto it_j = id_table.find(f[1]);
    if (it_i == id_table.end() || it_j == id_table.end())
      throw DataError("unknown node id in edge row: " + line);
    double w = detail::parse_real(f[2], "weight");
    ds.weights.add(it_i->second, it_j->second, w);
  }

  if (!label_path.empty()) {
    std::ifstream lf(label_path);
    if (!lf) throw DataError("cannot open labels file: " + label_path);
    while (std::getline(lf, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!detail::usable_line(line)) continue;
      auto f = detail::split(line, '\t');
      if (f.size() != 2) throw DataError("labels row needs 2 fields: " + line);
      auto it = id_table.find(f[0]);
      if (it == id_table.end())
        throw DataError("unknown node id in label row: " + line);
      ds.labels[it->second] = static_cast<int>(detail::parse_int(f[1], "class id"));
    }
  }

  ds.validate();
  return ds;
}

inline void write_nodes(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out.precision(17);
  for (const auto& nd : ds.nodes) {
    out << nd.ext_id << '\t' << nd.view << '\t';
    for (Eigen::Index k = 0; k < nd.x.size(); ++k) {
      if (k) out << ',';
      out << nd.x[k];
    }
    out << '\n';
  }
}

inline void write_edges(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out.precision(17);
  for (auto& [ij, w] : ds.weights.entries())
    out << ds.nodes[static_cast<std::size_t>(ij.first)].ext_id << '\t'
        << ds.nodes[static_cast<std::size_t>(ij.second)].ext_id << '\t' << w
        << '\n';
}

inline void write_labels(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (auto& [id, c] : ds.labels)
    out << ds.nodes[static_cast<std::size_t>(id)].ext_id << '\t' << c << '\n';
}

// External-id table, persisted next to derived outputs.
inline void write_id_table(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& nd : ds.nodes) out << nd.node_id << '\t' << nd.ext_id << '\n';
}

}  // namespace pmvge
