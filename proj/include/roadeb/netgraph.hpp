#pragma once

#include <algorithm>
#include <cstddef>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace roadeb {

// Undirected road network. Vertices are 0-based internally, edges keep file order.
class Graph {
public:
  struct Edge {
    int a; // v_a, the smaller endpoint
    int o; // v_o, the larger endpoint
  };

  Graph() = default;

  // edges given with 1-based endpoints
  Graph(int vertex_count, const std::vector<std::pair<int, int>>& edges,
        std::vector<double> lengths = {})
      : p_(vertex_count), lengths_(std::move(lengths)) {
    if (p_ < 1) throw InputError("graph needs at least one vertex");
    if (lengths_.empty()) lengths_.assign(edges.size(), 1.0);
    if (lengths_.size() != edges.size())
      throw InputError("length list does not match edge list");
    std::set<std::pair<int, int>> seen;
    for (std::size_t k = 0; k < edges.size(); ++k) {
      auto [u, v] = edges[k];
      if (u < 1 || v < 1 || u > p_ || v > p_)
        throw InputError("edge " + std::to_string(k + 1) + " has vertex out of range");
      if (u == v) throw InputError("edge " + std::to_string(k + 1) + " is a self-loop");
      if (!(lengths_[k] > 0.0))
        throw InputError("edge " + std::to_string(k + 1) + " has non-positive length");
      Edge e{std::min(u, v) - 1, std::max(u, v) - 1};
      if (!seen.insert({e.a, e.o}).second)
        throw InputError("edge " + std::to_string(k + 1) + " duplicates an earlier edge");
      edges_.push_back(e);
    }
    if (!connected()) throw InputError("graph is not connected");
  }

  int vertex_count() const { return p_; }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(int i) const { return edges_.at(i); }
  const std::vector<double>& lengths() const { return lengths_; }
  double length(int i) const { return lengths_.at(i); }

  std::vector<int> degrees() const {
    std::vector<int> d(p_, 0);
    for (auto& e : edges_) { ++d[e.a]; ++d[e.o]; }
    return d;
  }

  // edge index between two 0-based vertices, or -1
  int find_edge(int u, int v) const {
    int a = std::min(u, v), o = std::max(u, v);
    for (int k = 0; k < edge_count(); ++k)
      if (edges_[k].a == a && edges_[k].o == o) return k;
    return -1;
  }

private:
  bool connected() const {
    std::vector<std::vector<int>> adj(p_);
    for (auto& e : edges_) { adj[e.a].push_back(e.o); adj[e.o].push_back(e.a); }
    std::vector<char> mark(p_, 0);
    std::vector<int> stack{0};
    mark[0] = 1;
    int reached = 1;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (int w : adj[v])
        if (!mark[w]) { mark[w] = 1; ++reached; stack.push_back(w); }
    }
    return reached == p_;
  }

  int p_ = 0;
  std::vector<Edge> edges_;
  std::vector<double> lengths_;
};

// L = D - A
inline Eigen::MatrixXd laplacian(const Graph& g) {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(g.vertex_count(), g.vertex_count());
  for (auto& e : g.edges()) {
    L(e.a, e.a) += 1; L(e.o, e.o) += 1;
    L(e.a, e.o) -= 1; L(e.o, e.a) -= 1;
  }
  return L;
}

// Vertices of the result are the edges of g. Does not require connectivity of
// the input's edge set beyond what Graph already enforces.
inline Graph line_graph(const Graph& g) {
  const int q = g.edge_count();
  if (q < 1) throw InputError("empty line graph");
  std::vector<std::pair<int, int>> le;
  for (int i = 0; i < q; ++i)
    for (int j = i + 1; j < q; ++j) {
      auto& x = g.edge(i);
      auto& y = g.edge(j);
      if (x.a == y.a || x.a == y.o || x.o == y.a || x.o == y.o) le.push_back({i + 1, j + 1});
    }
  return Graph(q, le);
}

struct ResolutionSpec {
  std::vector<int> r;
  double rho = 0.25; // allowed relative spread of sub-segment lengths

  static ResolutionSpec uniform(int q, int value, double rho = 0.25) {
    return {std::vector<int>(q, value), rho};
  }
};

struct SubEdge {
  int parent;   // 0-based edge of G
  int position; // 1-based, counted from v_a towards v_o
};

class HighResGraph {
public:
  HighResGraph() = default;

  const Graph& parent() const { return g_; }
  const ResolutionSpec& resolution() const { return res_; }
  const std::vector<SubEdge>& sub_edges() const { return sub_; }
  int p_r() const { return p_r_; }
  int q_r() const { return static_cast<int>(sub_.size()); }
  int q() const { return g_.edge_count(); }
  int r(int i) const { return res_.r.at(i); }
  const Eigen::MatrixXd& line_laplacian() const { return lbar_; }
  const Eigen::MatrixXd& projection() const { return S_; }
  int first(int i) const { return offset_.at(i); }
  int count(int i) const { return res_.r.at(i) + 1; }
  int owner(int k) const { return sub_.at(k).parent; }
  double sub_length(int k) const {
    int i = owner(k);
    return g_.length(i) / (res_.r[i] + 1);
  }

  // 1-based (parent, position) to 1-based sub-edge index
  int edge_index(int parent, int position) const {
    if (parent < 1 || parent > q())
      throw InputError("parent edge " + std::to_string(parent) + " out of range");
    if (position < 1 || position > res_.r[parent - 1] + 1)
      throw InputError("position " + std::to_string(position) + " out of range for edge " +
                       std::to_string(parent));
    return offset_[parent - 1] + position;
  }

  std::pair<int, int> edge_index_inverse(int sub) const {
    if (sub < 1 || sub > q_r()) throw InputError("sub-edge " + std::to_string(sub) + " out of range");
    auto& s = sub_[sub - 1];
    return {s.parent + 1, s.position};
  }

  // endpoints (0-based vertices of G_r) of every sub-edge
  const std::vector<std::pair<int, int>>& sub_edge_vertices() const { return ends_; }

private:
  friend HighResGraph refine(const Graph&, const ResolutionSpec&);

  Graph g_;
  ResolutionSpec res_;
  std::vector<SubEdge> sub_;
  std::vector<int> offset_;
  std::vector<std::pair<int, int>> ends_;
  int p_r_ = 0;
  Eigen::MatrixXd lbar_;
  Eigen::MatrixXd S_;
};

inline void check_length_balance(const Graph& g, const ResolutionSpec& res) {
  const int q = g.edge_count();
  int lo = 0, hi = 0;
  auto sl = [&](int i) { return g.length(i) / (res.r[i] + 1); };
  for (int i = 1; i < q; ++i) {
    if (sl(i) < sl(lo)) lo = i;
    if (sl(i) > sl(hi)) hi = i;
  }
  double spread = (sl(hi) - sl(lo)) / sl(hi);
  if (spread > res.rho + 1e-12)
    throw InputError("sub-segment lengths unbalanced: edge " + std::to_string(hi + 1) + " (" +
                     std::to_string(sl(hi)) + " km) vs edge " + std::to_string(lo + 1) + " (" +
                     std::to_string(sl(lo)) + " km)");
}

inline HighResGraph refine(const Graph& g, const ResolutionSpec& res) {
  const int q = g.edge_count();
  if (static_cast<int>(res.r.size()) != q)
    throw InputError("resolution vector has length " + std::to_string(res.r.size()) +
                     ", expected " + std::to_string(q));
  for (int v : res.r)
    if (v < 0) throw InputError("resolution entries must be non-negative");
  check_length_balance(g, res);

  HighResGraph h;
  h.g_ = g;
  h.res_ = res;
  int next_vertex = g.vertex_count();
  for (int i = 0; i < q; ++i) {
    h.offset_.push_back(static_cast<int>(h.sub_.size()));
    int prev = g.edge(i).a;
    for (int j = 1; j <= res.r[i] + 1; ++j) {
      int nxt = (j == res.r[i] + 1) ? g.edge(i).o : next_vertex++;
      h.sub_.push_back({i, j});
      h.ends_.push_back({prev, nxt});
      prev = nxt;
    }
  }
  h.p_r_ = next_vertex;

  const int qr = h.q_r();
  std::vector<std::vector<int>> incident(h.p_r_);
  for (int k = 0; k < qr; ++k) {
    incident[h.ends_[k].first].push_back(k);
    incident[h.ends_[k].second].push_back(k);
  }
  h.lbar_ = Eigen::MatrixXd::Zero(qr, qr);
  for (auto& inc : incident)
    for (std::size_t x = 0; x < inc.size(); ++x)
      for (std::size_t y = x + 1; y < inc.size(); ++y) {
        int a = inc[x], b = inc[y];
        h.lbar_(a, b) -= 1; h.lbar_(b, a) -= 1;
        h.lbar_(a, a) += 1; h.lbar_(b, b) += 1;
      }

  h.S_ = Eigen::MatrixXd::Zero(q, qr);
  for (int k = 0; k < qr; ++k) h.S_(h.sub_[k].parent, k) = 1.0;
  return h;
}

} // namespace roadeb
