#include "gul/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <string>

namespace gul::graph {

NodeSet::NodeSet(std::vector<NodeId> ids) : ids_(std::move(ids)) {
  for (NodeId v : ids_) {
    if (v < 0) throw UsageError("node set contains negative id " + std::to_string(v));
  }
  std::sort(ids_.begin(), ids_.end());
  ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
}

NodeSet NodeSet::complement(const NodeSet& s, NodeId n) {
  std::vector<NodeId> out;
  out.reserve(static_cast<std::size_t>(n) - std::min<std::size_t>(s.size(), n));
  auto it = s.ids_.begin();
  for (NodeId v = 0; v < n; ++v) {
    while (it != s.ids_.end() && *it < v) ++it;
    if (it == s.ids_.end() || *it != v) out.push_back(v);
  }
  NodeSet res;
  res.ids_ = std::move(out);  // already sorted and unique
  return res;
}

bool NodeSet::contains(NodeId v) const {
  return std::binary_search(ids_.begin(), ids_.end(), v);
}

namespace {

void check_node_range(NodeId v, NodeId n, const char* what) {
  if (v < 0 || v >= n)
    throw UsageError(std::string(what) + " id " + std::to_string(v) + " out of range [0, " +
                     std::to_string(n) + ")");
}

Graph from_directed_pairs(NodeId n, std::vector<std::pair<NodeId, NodeId>>& dir,
                          bool allow_self_loops) {
  std::sort(dir.begin(), dir.end());
  dir.erase(std::unique(dir.begin(), dir.end()), dir.end());

  Graph g;
  g.num_nodes = n;
  g.allow_self_loops = allow_self_loops;
  g.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  for (const auto& [u, v] : dir) g.row_ptr[static_cast<std::size_t>(u) + 1]++;
  std::partial_sum(g.row_ptr.begin(), g.row_ptr.end(), g.row_ptr.begin());
  g.col_idx.resize(dir.size());
  std::vector<std::int64_t> cursor(g.row_ptr.begin(), g.row_ptr.end() - 1);
  for (const auto& [u, v] : dir) g.col_idx[static_cast<std::size_t>(cursor[u]++)] = v;
  g.degrees.resize(static_cast<std::size_t>(n));
  for (NodeId i = 0; i < n; ++i)
    g.degrees[i] = static_cast<NodeId>(g.row_ptr[i + 1] - g.row_ptr[i]);
  return g;
}

}  // namespace

Graph build_graph(NodeId num_nodes, const std::vector<std::pair<NodeId, NodeId>>& edges,
                  bool allow_self_loops) {
  if (num_nodes < 0) throw UsageError("num_nodes must be non-negative");
  std::vector<std::pair<NodeId, NodeId>> dir;
  dir.reserve(edges.size() * 2);
  for (const auto& [u, v] : edges) {
    check_node_range(u, num_nodes, "edge endpoint");
    check_node_range(v, num_nodes, "edge endpoint");
    if (u == v) {
      if (!allow_self_loops)
        throw UsageError("self-loop at node " + std::to_string(u) +
                         " but self-loops are not enabled");
      dir.emplace_back(u, v);
    } else {
      dir.emplace_back(u, v);
      dir.emplace_back(v, u);
    }
  }
  return from_directed_pairs(num_nodes, dir, allow_self_loops);
}

PropagationMatrix build_propagation(const Graph& g, PropagationMode mode, bool add_self_loops) {
  const NodeId n = g.num_nodes;

  // Effective adjacency rows: stored neighbours plus an optional unit diagonal.
  std::vector<std::vector<NodeId>> rows(static_cast<std::size_t>(n));
  for (NodeId i = 0; i < n; ++i) {
    bool has_diag = false;
    rows[i].reserve(static_cast<std::size_t>(g.degrees[i]) + 1);
    for (std::int64_t k = g.row_ptr[i]; k < g.row_ptr[i + 1]; ++k) {
      rows[i].push_back(g.col_idx[static_cast<std::size_t>(k)]);
      if (g.col_idx[static_cast<std::size_t>(k)] == i) has_diag = true;
    }
    if (add_self_loops && !has_diag) {
      rows[i].push_back(i);
      std::sort(rows[i].begin(), rows[i].end());
    }
  }

  std::vector<double> deg(static_cast<std::size_t>(n));
  for (NodeId i = 0; i < n; ++i) deg[i] = static_cast<double>(rows[i].size());

  PropagationMatrix p;
  p.mode = mode;
  p.num_nodes = n;
  p.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  for (NodeId i = 0; i < n; ++i)
    p.row_ptr[static_cast<std::size_t>(i) + 1] = p.row_ptr[i] + static_cast<std::int64_t>(rows[i].size());
  p.col_idx.reserve(static_cast<std::size_t>(p.row_ptr[n]));
  p.values.reserve(static_cast<std::size_t>(p.row_ptr[n]));
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j : rows[i]) {
      p.col_idx.push_back(j);
      if (mode == PropagationMode::row) {
        p.values.push_back(1.0 / deg[i]);
      } else {
        p.values.push_back(1.0 / std::sqrt(deg[i] * deg[j]));
      }
    }
  }
  return p;
}

Matrix propagate(const PropagationMatrix& p, const Matrix& x, int hops) {
  if (hops < 0) throw UsageError("hops must be non-negative");
  if (x.rows() != p.num_nodes)
    throw IncompatibilityError("feature rows (" + std::to_string(x.rows()) +
                               ") do not match propagation size (" +
                               std::to_string(p.num_nodes) + ")");
  Matrix cur = x;
  Matrix next(x.rows(), x.cols());
  for (int h = 0; h < hops; ++h) {
    for (NodeId i = 0; i < p.num_nodes; ++i) {
      auto row = next.row(i);
      row.setZero();
      for (std::int64_t k = p.row_ptr[i]; k < p.row_ptr[i + 1]; ++k) {
        row += p.values[static_cast<std::size_t>(k)] *
               cur.row(p.col_idx[static_cast<std::size_t>(k)]);
      }
    }
    cur.swap(next);
  }
  return cur;
}

Matrix multi_hop_features(const PropagationMatrix& p, const Matrix& x, int max_hop) {
  if (max_hop < 1) throw UsageError("max_hop must be at least 1");
  const auto d = x.cols();
  Matrix out(x.rows(), d * max_hop);
  Matrix cur = x;
  for (int h = 0; h < max_hop; ++h) {
    if (h > 0) cur = propagate(p, cur, 1);
    out.middleCols(static_cast<Eigen::Index>(h) * d, d) = cur;
  }
  return out;
}

DeleteResult delete_nodes(const Graph& g, const NodeSet& deleted) {
  for (NodeId v : deleted) check_node_range(v, g.num_nodes, "deleted node");
  if (static_cast<NodeId>(deleted.size()) >= g.num_nodes && g.num_nodes > 0)
    throw EmptyRemainingError("deletion removes every node");

  DeleteResult res;
  res.index_map.assign(static_cast<std::size_t>(g.num_nodes), -1);
  NodeId next = 0;
  for (NodeId v = 0; v < g.num_nodes; ++v) {
    if (!deleted.contains(v)) res.index_map[v] = next++;
  }

  std::vector<std::pair<NodeId, NodeId>> dir;
  for (NodeId u = 0; u < g.num_nodes; ++u) {
    if (res.index_map[u] < 0) continue;
    for (std::int64_t k = g.row_ptr[u]; k < g.row_ptr[u + 1]; ++k) {
      const NodeId v = g.col_idx[static_cast<std::size_t>(k)];
      if (res.index_map[v] < 0) continue;
      dir.emplace_back(res.index_map[u], res.index_map[v]);
    }
  }
  res.graph = from_directed_pairs(next, dir, g.allow_self_loops);
  return res;
}

Graph zero_out_nodes(const Graph& g, const NodeSet& nodes) {
  for (NodeId v : nodes) check_node_range(v, g.num_nodes, "zeroed node");
  std::vector<std::pair<NodeId, NodeId>> dir;
  dir.reserve(g.col_idx.size());
  for (NodeId u = 0; u < g.num_nodes; ++u) {
    if (nodes.contains(u)) continue;
    for (std::int64_t k = g.row_ptr[u]; k < g.row_ptr[u + 1]; ++k) {
      const NodeId v = g.col_idx[static_cast<std::size_t>(k)];
      if (nodes.contains(v)) continue;
      dir.emplace_back(u, v);
    }
  }
  return from_directed_pairs(g.num_nodes, dir, g.allow_self_loops);
}

NodeSet affected_set(const Graph& g, const NodeSet& deleted, int hops) {
  if (hops < 1) throw UsageError("affected_set requires hops >= 1");
  for (NodeId v : deleted) check_node_range(v, g.num_nodes, "deleted node");

  std::vector<int> dist(static_cast<std::size_t>(g.num_nodes), -1);
  std::deque<NodeId> queue;
  for (NodeId v : deleted) {
    dist[v] = 0;
    queue.push_back(v);
  }
  std::vector<NodeId> found;
  while (!queue.empty()) {
    const NodeId u = queue.front();
    queue.pop_front();
    if (dist[u] >= hops - 1) continue;  // neighbours would be at distance >= hops
    for (std::int64_t k = g.row_ptr[u]; k < g.row_ptr[u + 1]; ++k) {
      const NodeId v = g.col_idx[static_cast<std::size_t>(k)];
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  for (NodeId v = 0; v < g.num_nodes; ++v) {
    if (dist[v] >= 0 && dist[v] < hops) found.push_back(v);
  }
  return NodeSet(std::move(found));
}

CsbmData generate_csbm(const CsbmParams& params) {
  if (params.n < 1) throw UsageError("csbm: n must be positive");
  if (!(0.0 <= params.q && params.q <= params.p && params.p <= 1.0))
    throw UsageError("csbm: require 0 <= q <= p <= 1");
  if (params.mu_plus.size() != params.mu_minus.size() || params.mu_plus.size() == 0)
    throw UsageError("csbm: class means must be non-empty and equal-dimensional");
  if (params.feature_noise_scale < 0.0)
    throw UsageError("csbm: feature_noise_scale must be non-negative");

  const NodeId n = params.n;
  const auto d = params.mu_plus.size();
  auto rng = make_rng(params.seed);

  CsbmData data;
  data.labels.resize(static_cast<std::size_t>(n));
  std::bernoulli_distribution coin(0.5);
  for (NodeId i = 0; i < n; ++i) data.labels[i] = coin(rng) ? 1 : -1;

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j = i + 1; j < n; ++j) {
      const double prob = (data.labels[i] == data.labels[j]) ? params.p : params.q;
      if (unif(rng) < prob) edges.emplace_back(i, j);
    }
  }
  data.graph = build_graph(n, edges, false);

  std::normal_distribution<double> gauss(0.0, 1.0);
  data.features.resize(n, d);
  for (NodeId i = 0; i < n; ++i) {
    const Vector& mu = data.labels[i] > 0 ? params.mu_plus : params.mu_minus;
    for (Eigen::Index c = 0; c < d; ++c)
      data.features(i, c) = mu[c] + params.feature_noise_scale * gauss(rng);
  }
  return data;
}

}  // namespace gul::graph
