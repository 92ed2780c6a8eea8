#pragma once

#include "gul/common.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace gul::graph {

using NodeId = std::int32_t;

/// Sorted, duplicate-free set of node ids. Construction sorts and dedups;
/// negative ids are rejected.
class NodeSet {
 public:
  NodeSet() = default;
  explicit NodeSet(std::vector<NodeId> ids);

  /// Every id in [0, n) that is not in `s`.
  static NodeSet complement(const NodeSet& s, NodeId n);

  bool contains(NodeId v) const;
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<NodeId>& ids() const { return ids_; }
  auto begin() const { return ids_.begin(); }
  auto end() const { return ids_.end(); }

 private:
  std::vector<NodeId> ids_;
};

/// Undirected graph in CSR form. Each undirected edge {u,v} is stored in both
/// adjacency rows; rows are sorted and duplicate-free. Self-loops are only
/// present when the graph was built with allow_self_loops.
struct Graph {
  NodeId num_nodes = 0;
  std::vector<std::int64_t> row_ptr;  // size num_nodes + 1
  std::vector<NodeId> col_idx;        // sorted within each row
  std::vector<NodeId> degrees;        // degrees[i] == row_ptr[i+1] - row_ptr[i]
  bool allow_self_loops = false;

  std::int64_t num_edges_directed() const { return static_cast<std::int64_t>(col_idx.size()); }
};

/// Builds a Graph from an undirected edge list (each pair listed once, either
/// orientation). Duplicate pairs collapse to a single edge. Self-loop pairs
/// are rejected unless allow_self_loops is set.
Graph build_graph(NodeId num_nodes, const std::vector<std::pair<NodeId, NodeId>>& edges,
                  bool allow_self_loops = false);

enum class PropagationMode { row, symmetric };

/// Normalized propagation operator in CSR form. Row mode scales each
/// adjacency row to sum to one; symmetric mode uses 1/sqrt(deg_i * deg_j).
/// Zero-degree nodes get an all-zero row in both modes.
struct PropagationMatrix {
  PropagationMode mode = PropagationMode::row;
  int hops = 1;  // default exponent applied by pipelines; propagate() takes it explicitly
  NodeId num_nodes = 0;
  std::vector<std::int64_t> row_ptr;
  std::vector<NodeId> col_idx;
  std::vector<double> values;
};

/// add_self_loops inserts a unit diagonal into the adjacency before
/// normalization (nodes that already have a stored self-loop are not doubled).
PropagationMatrix build_propagation(const Graph& g, PropagationMode mode,
                                    bool add_self_loops = false);

/// Applies the operator `hops` times: returns P^hops * X. hops == 0 copies X.
Matrix propagate(const PropagationMatrix& p, const Matrix& x, int hops);

/// Concatenates [X | PX | P^2 X | ... | P^(max_hop-1) X] column-wise,
/// ascending hop order. max_hop >= 1; output is n x (d * max_hop).
Matrix multi_hop_features(const PropagationMatrix& p, const Matrix& x, int max_hop);

struct DeleteResult {
  Graph graph;                     // induced subgraph on the kept nodes
  std::vector<NodeId> index_map;   // old id -> new id, -1 for deleted nodes
};

/// Induced subgraph after removing `deleted`. Kept nodes are renumbered in
/// ascending old-id order. Deleting every node is an error.
DeleteResult delete_nodes(const Graph& g, const NodeSet& deleted);

/// Same node set, but every edge incident to `nodes` removed. Equivalent to
/// delete_nodes up to renumbering; keeps indices aligned with the original.
Graph zero_out_nodes(const Graph& g, const NodeSet& nodes);

/// Nodes whose shortest-path distance to `deleted` is strictly less than
/// `hops` (multi-source BFS; the deleted nodes themselves are at distance 0).
NodeSet affected_set(const Graph& g, const NodeSet& deleted, int hops);

/// Two-block stochastic generator: labels are +/-1 uniform, an edge joins a
/// same-label pair with probability p and a cross-label pair with probability
/// q, and features are the class mean plus isotropic Gaussian noise.
struct CsbmParams {
  NodeId n = 0;
  double p = 0.0;
  double q = 0.0;
  Vector mu_plus;
  Vector mu_minus;
  double feature_noise_scale = 1.0;
  std::uint64_t seed = 0;
};

struct CsbmData {
  Graph graph;
  Matrix features;          // n x d
  std::vector<int> labels;  // +1 / -1
};

/// Deterministic for a fixed seed: one RNG stream drawn in the fixed order
/// labels, edges (unordered pairs, i < j), features.
CsbmData generate_csbm(const CsbmParams& params);

}  // namespace gul::graph
