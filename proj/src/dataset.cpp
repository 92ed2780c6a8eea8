#include "gul/dataset.hpp"

#include <string>

namespace gul {

void validate_dataset(const Dataset& data) {
  const auto n = static_cast<Eigen::Index>(data.graph.num_nodes);
  if (data.x.rows() != n)
    throw IncompatibilityError("dataset: feature rows (" + std::to_string(data.x.rows()) +
                               ") do not match node count (" + std::to_string(n) + ")");
  if (static_cast<Eigen::Index>(data.labels.size()) != n)
    throw IncompatibilityError("dataset: label count does not match node count");
  if (data.hops < 1) throw UsageError("dataset: hops must be >= 1");
  for (const auto* set : {&data.train_set, &data.test_set}) {
    if (!set->empty() && *std::prev(set->end()) >= data.graph.num_nodes)
      throw UsageError("dataset: node set references an id outside the graph");
  }
  if (data.train_set.empty()) throw UsageError("dataset: empty training set");
}

Matrix dataset_embeddings(const Dataset& data) { return embeddings_on(data, data.graph); }

Matrix embeddings_on(const Dataset& data, const graph::Graph& g) {
  const auto p = graph::build_propagation(g, data.mode, data.add_self_loops);
  return graph::propagate(p, data.x, data.hops);
}

}  // namespace gul
