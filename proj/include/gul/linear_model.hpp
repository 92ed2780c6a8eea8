#pragma once

#include "gul/common.hpp"
#include "gul/graph.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gul::model {

enum class LossKind { logistic, softmax, ovr_logistic, hinge };

const char* loss_kind_name(LossKind kind);
LossKind loss_kind_from_name(const std::string& name);

/// Training hyperparameters recorded with the weights, sufficient to retrain
/// an identical model (same zero init, same data order).
struct Provenance {
  double lambda = 0.0;
  double eta = 0.0;
  int epochs = 0;
  Eigen::Index batch_size = 0;  // 0 means full batch
  std::uint64_t seed = 0;
  std::string init_kind = "zero";
};

struct ModelWeights {
  Matrix weights;  // C x d; C == 1 for binary losses
  LossKind loss_kind = LossKind::logistic;
  Provenance provenance;

  Eigen::Index num_classes() const { return weights.rows(); }
  Eigen::Index dim() const { return weights.cols(); }
};

/// Per-epoch objective / gradient-norm / cumulative wall-clock trace.
/// objectives[0] is the initial objective; objectives[t] the value after
/// epoch t, so the vector has epochs+1 entries.
struct TrainTrace {
  std::vector<double> objectives;
  std::vector<double> grad_norms;
  std::vector<double> seconds;
};

struct LossGrad {
  double objective = 0.0;
  Matrix gradient;  // same shape as weights
};

struct TrainConfig {
  double lambda = 1e-4;
  double eta = 0.1;
  int epochs = 100;
  Eigen::Index batch_size = 0;  // 0 or >= |train| selects full-batch GD
  std::uint64_t seed = 0;
};

/// Number of weight rows implied by the loss kind and labels; validates the
/// label range (binary losses need -1/+1, multi-class need 0..C-1 with C>=2).
Eigen::Index num_classes_for(LossKind kind, const std::vector<int>& labels);

/// Zero-initialized model (the default init: trivially inside the feature
/// span, which the exact-unlearning projection relies on).
ModelWeights zero_model(LossKind kind, Eigen::Index dim, const std::vector<int>& labels);

/// Regularized mean loss over train_set and its (sub)gradient.
/// logistic: (lambda/2)||w||^2 + mean log(1+exp(-y_i w.h_i)).
/// softmax:  (lambda/2)||W||_F^2 + mean cross-entropy.
/// ovr_logistic: sum over classes of independent binary objectives.
/// hinge:    (lambda/2)||w||^2 + mean max(0, 1 - y_i w.h_i).
LossGrad loss_and_grad(const ModelWeights& weights, const Matrix& h,
                       const std::vector<int>& labels, const graph::NodeSet& train_set,
                       double lambda);

/// Full-batch GD (batch_size 0 / >= |train|) or seeded mini-batch SGD with
/// uniform without-replacement shuffling per epoch. Throws DivergenceError
/// (with the epoch index) when the objective turns non-finite.
std::pair<ModelWeights, TrainTrace> train(const ModelWeights& init, const Matrix& h,
                                          const std::vector<int>& labels,
                                          const graph::NodeSet& train_set,
                                          const TrainConfig& config);

/// lambda I + mean over node_set of s_i (1 - s_i) h_i h_i^T with
/// s_i = sigmoid(y_i w_c . h_i). Binary logistic (class_index 0) or one
/// OvR class. Empty node_set gives lambda I. Min eigenvalue >= lambda.
Eigen::MatrixXd hessian(const ModelWeights& weights, const Matrix& h,
                        const std::vector<int>& labels, const graph::NodeSet& node_set,
                        double lambda, Eigen::Index class_index = 0);

/// K full-batch GD steps on the remaining data at rate lr_override, or the
/// smoothness-based default 1/(lambda + max_i ||h_i||^2) estimated from the
/// supplied rows (an upper bound proxy for the feature/propagation norms).
ModelWeights finetune(const ModelWeights& weights, const Matrix& h_remain,
                      const std::vector<int>& labels, const graph::NodeSet& remain_set,
                      int k, std::optional<double> lr_override = std::nullopt);

/// Projected subgradient descent on the hinge objective: step t uses rate
/// 1/(lambda t) and re-projects onto the ball of radius 1/sqrt(lambda).
/// Zero init, so the iterate stays in the span of the training features.
ModelWeights pegasos_train(const Matrix& h, const std::vector<int>& labels,
                           const graph::NodeSet& train_set, const TrainConfig& config);

/// Predicted class labels for the rows in node_set. Binary: sign of the
/// margin with ties toward class -1; multi-class: argmax with ties toward
/// the lower class index.
std::vector<int> predict(const ModelWeights& weights, const Matrix& h,
                         const graph::NodeSet& node_set);

struct Evaluation {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  Matrix scores;  // |node_set| x C raw scores (binary: single margin column)
};

Evaluation evaluate(const ModelWeights& weights, const Matrix& h,
                    const std::vector<int>& labels, const graph::NodeSet& node_set);

}  // namespace gul::model
