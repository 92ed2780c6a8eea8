#pragma once

#include "gul/common.hpp"
#include "gul/graph.hpp"

#include <vector>

namespace gul {

/// One node-classification problem: graph, raw node features, per-node
/// labels, the train/test split, and the propagation recipe the model was
/// trained with. The unlearning engines and the evaluation harness all
/// operate on this bundle so that pre- and post-deletion pipelines agree on
/// every knob.
struct Dataset {
  graph::Graph graph;
  Matrix x;                 // num_nodes x d raw features
  std::vector<int> labels;  // one label per node
  graph::NodeSet train_set;
  graph::NodeSet test_set;
  graph::PropagationMode mode = graph::PropagationMode::row;
  int hops = 2;
  bool add_self_loops = false;
};

/// Shape/range checks: features and labels sized to the graph, node sets in
/// range, hops >= 1. Throws UsageError / IncompatibilityError.
void validate_dataset(const Dataset& data);

/// P^hops X on the dataset's own graph.
Matrix dataset_embeddings(const Dataset& data);

/// P^hops X with the dataset's propagation options on another graph over the
/// same node ids (e.g. the zero-out graph after a deletion).
Matrix embeddings_on(const Dataset& data, const graph::Graph& g);

}  // namespace gul
