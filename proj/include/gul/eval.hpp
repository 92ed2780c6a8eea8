#pragma once

#include "gul/dataset.hpp"
#include "gul/unlearn.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gul::eval {

// ---------------------------------------------------------------------------
// Feature injection experiment. A probe channel (1 on deleted nodes, 0
// elsewhere) is appended to the features and the deleted nodes are relabeled
// so that training has to use it: multi-class mode moves them to a fresh
// class, binary mode flips their +/-1 label. After pre-training on the
// modified data, each strategy unlearns the deleted nodes and the report
// records how much weight mass survives on the probe channel.
// ---------------------------------------------------------------------------

struct InjectionOptions {
  model::TrainConfig train;
  bool binary_mode = false;  // flip labels instead of adding a class
  double noise_std = 0.0;    // forwarded to the noise-bearing strategies
  std::uint64_t noise_seed = 0;
};

struct InjectionStrategyRow {
  unlearn::Strategy strategy = unlearn::Strategy::projector;
  double injected_norm_before = 0.0;
  double injected_norm_after = 0.0;
  double accuracy_before = 0.0;
  double accuracy_after = 0.0;
  double unlearn_seconds = 0.0;
};

struct InjectionReport {
  std::vector<InjectionStrategyRow> rows;  // one per requested strategy
  double retrain_seconds = 0.0;
  double retrain_accuracy = 0.0;
  graph::NodeSet deleted;
  Eigen::Index injected_channel = -1;  // column index of the probe
};

/// Runs the probe-channel protocol on a copy of `data`. The deleted set is
/// drawn from the training set (delete_fraction in (0,1), at least one
/// node); accuracies are measured on the test set, falling back to the
/// remaining training nodes when no test set is present. Post-unlearning
/// accuracy uses the deleted-graph propagation. Multi-class mode expects
/// labels in 0..C-1 and trains one-vs-rest; binary mode expects -1/+1.
InjectionReport feature_injection_experiment(const Dataset& data, double delete_fraction,
                                             const std::vector<unlearn::Strategy>& strategies,
                                             const InjectionOptions& options,
                                             std::uint64_t seed);

// ---------------------------------------------------------------------------
// Closeness report: how far an unlearned model sits from the retrained one,
// in weight space and through the sigmoid activations.
// ---------------------------------------------------------------------------

struct SubsetDistance {
  double value = 0.0;
  bool present = false;  // false when the subset was empty (entry omitted)
};

struct NodeSubsets {
  graph::NodeSet deleted;
  graph::NodeSet remaining;
  graph::NodeSet test;
};

struct ClosenessReport {
  double normalized_weight_diff = 0.0;  // ||w_u - w_p|| / ||w||
  SubsetDistance deleted;
  SubsetDistance remaining;
  SubsetDistance test;
};

/// normalized_weight_diff = ||w_u - w_p|| / ||w||, and per nonempty subset
/// the mean over nodes of ||sigmoid(w_p h_i) - sigmoid(w_u h_i)||_2 (bounded
/// by sqrt(C); by 1 for a single-output model). Deterministic; invariant
/// under any relabeling that permutes `h` rows and the subsets together.
ClosenessReport closeness_report(const model::ModelWeights& w, const model::ModelWeights& w_p,
                                 const model::ModelWeights& w_u, const Matrix& h,
                                 const NodeSubsets& subsets);

// ---------------------------------------------------------------------------
// Robustness sweep over deletion ratios: one long-form row per
// (ratio, seed, strategy) cell, always exactly |ratios|*|seeds|*|strategies|
// rows. Per seed the deleted sets are nested across ratios (a fixed random
// order of the training nodes, truncated per ratio), so growing the ratio
// only ever adds deletions.
// ---------------------------------------------------------------------------

struct SweepRow {
  double ratio = 0.0;
  std::uint64_t seed = 0;
  unlearn::Strategy strategy = unlearn::Strategy::projector;
  double test_accuracy = 0.0;
  double weight_distance = 0.0;  // || w_strategy - w_retrain ||
  double unlearn_seconds = 0.0;
};

/// Trains one base model per seed (config.seed replaced by the sweep seed),
/// retrains once per (ratio, seed) cell as the reference, then records every
/// strategy's test accuracy and weight distance to that reference. Cells run
/// on `jobs` threads (each cell single-threaded); row order is independent
/// of the thread count. Ratios must lie in (0,1).
std::vector<SweepRow> robustness_sweep(const Dataset& data, const std::vector<double>& ratios,
                                       const std::vector<unlearn::Strategy>& strategies,
                                       const std::vector<std::uint64_t>& seeds,
                                       const model::TrainConfig& config, int jobs = 1);

// ---------------------------------------------------------------------------
// Nonlinear feature mode: a fixed two-layer MLP applied row-wise to the
// features, trained only on nodes that never need to be forgotten. The
// output keeps the input width so it can stand in for the raw features in
// propagation, training, and projection.
// ---------------------------------------------------------------------------

enum class MlpActivation { tanh_act, identity };

struct MlpConfig {
  Eigen::Index hidden = 16;
  MlpActivation activation = MlpActivation::tanh_act;
  bool identity_init = false;  // identity weights, zero bias; needs hidden == input dim
  int epochs = 50;
  double lr = 0.1;
  std::uint64_t seed = 0;
  graph::NodeSet train_set;  // must be a subset of the remaining nodes
};

struct MlpFeatures {
  Matrix z;  // n x d transformed features
  // Trained parameters, exposed so callers can persist or audit the map.
  Matrix w1, w2;
  Vector b1, b2;
  // Caveat recorded with the output: downstream projection certifies removal
  // with respect to rows of z, which is meaningful only because the map was
  // never fit on deleted rows.
  std::string note;
};

/// Trains z = act(act(X W1 + b1) W2 + b2) through a temporary linear
/// cross-entropy head (discarded afterwards) by full-batch gradient descent
/// on config.train_set, then evaluates the map on every row. Throws
/// UsageError if config.train_set reaches outside remain_set, or if
/// identity_init is requested with hidden != input width.
MlpFeatures mlp_feature_mode(const Dataset& data, const graph::NodeSet& remain_set,
                             const MlpConfig& config);

}  // namespace gul::eval
