#include "gul/linear_model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace gul::model {

namespace {

using Clock = std::chrono::steady_clock;

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// log(1 + exp(u)) without overflow.
double softplus(double u) {
  return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u)));
}

bool is_binary(LossKind kind) { return kind == LossKind::logistic || kind == LossKind::hinge; }

int binary_label(int y, const char* ctx) {
  if (y != 1 && y != -1)
    throw IncompatibilityError(std::string(ctx) + ": binary losses need -1/+1 labels, got " +
                               std::to_string(y));
  return y;
}

void check_inputs(const ModelWeights& weights, const Matrix& h, const std::vector<int>& labels,
                  const graph::NodeSet& set) {
  if (weights.weights.cols() != h.cols())
    throw IncompatibilityError("weights dimension " + std::to_string(weights.weights.cols()) +
                               " does not match feature dimension " + std::to_string(h.cols()));
  if (static_cast<Eigen::Index>(labels.size()) != h.rows())
    throw IncompatibilityError("labels count does not match feature rows");
  if (!set.empty() && *std::prev(set.end()) >= h.rows())
    throw IncompatibilityError("node set references rows beyond the feature matrix");
}

}  // namespace

const char* loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::logistic: return "logistic";
    case LossKind::softmax: return "softmax";
    case LossKind::ovr_logistic: return "ovr_logistic";
    case LossKind::hinge: return "hinge";
  }
  return "unknown";
}

LossKind loss_kind_from_name(const std::string& name) {
  if (name == "logistic") return LossKind::logistic;
  if (name == "softmax") return LossKind::softmax;
  if (name == "ovr_logistic") return LossKind::ovr_logistic;
  if (name == "hinge") return LossKind::hinge;
  throw UsageError("unknown loss kind '" + name + "'");
}

Eigen::Index num_classes_for(LossKind kind, const std::vector<int>& labels) {
  if (labels.empty()) throw UsageError("empty label vector");
  if (is_binary(kind)) {
    for (int y : labels) binary_label(y, "num_classes_for");
    return 1;
  }
  int max_label = 0;
  for (int y : labels) {
    if (y < 0)
      throw IncompatibilityError("multi-class losses need labels in 0..C-1, got " +
                                 std::to_string(y));
    max_label = std::max(max_label, y);
  }
  if (max_label < 1)
    throw IncompatibilityError("multi-class losses need at least two classes in the labels");
  return max_label + 1;
}

ModelWeights zero_model(LossKind kind, Eigen::Index dim, const std::vector<int>& labels) {
  ModelWeights m;
  m.loss_kind = kind;
  m.weights = Matrix::Zero(num_classes_for(kind, labels), dim);
  m.provenance.init_kind = "zero";
  return m;
}

LossGrad loss_and_grad(const ModelWeights& weights, const Matrix& h,
                       const std::vector<int>& labels, const graph::NodeSet& train_set,
                       double lambda) {
  check_inputs(weights, h, labels, train_set);
  if (lambda < 0.0) throw UsageError("lambda must be non-negative");

  LossGrad out;
  out.gradient = Matrix::Zero(weights.num_classes(), weights.dim());
  double data_term = 0.0;
  const double inv_n = train_set.empty() ? 0.0 : 1.0 / static_cast<double>(train_set.size());

  switch (weights.loss_kind) {
    case LossKind::logistic: {
      const auto w = weights.weights.row(0);
      for (graph::NodeId i : train_set) {
        const double y = binary_label(labels[i], "loss_and_grad");
        const double z = y * w.dot(h.row(i));
        data_term += softplus(-z);
        out.gradient.row(0) += (-y * sigmoid(-z)) * h.row(i);
      }
      break;
    }
    case LossKind::hinge: {
      const auto w = weights.weights.row(0);
      for (graph::NodeId i : train_set) {
        const double y = binary_label(labels[i], "loss_and_grad");
        const double z = y * w.dot(h.row(i));
        if (z < 1.0) {
          data_term += 1.0 - z;
          out.gradient.row(0) += -y * h.row(i);
        }
      }
      break;
    }
    case LossKind::softmax: {
      const Eigen::Index c = weights.num_classes();
      Vector scores(c), p(c);
      for (graph::NodeId i : train_set) {
        const int y = labels[i];
        if (y < 0 || y >= c)
          throw IncompatibilityError("label " + std::to_string(y) + " outside 0.." +
                                     std::to_string(c - 1));
        scores.noalias() = weights.weights * h.row(i).transpose();
        const double m = scores.maxCoeff();
        p = (scores.array() - m).exp();
        const double z = p.sum();
        p /= z;
        data_term += -(scores[y] - m - std::log(z));
        for (Eigen::Index k = 0; k < c; ++k) {
          const double coeff = p[k] - (k == y ? 1.0 : 0.0);
          out.gradient.row(k) += coeff * h.row(i);
        }
      }
      break;
    }
    case LossKind::ovr_logistic: {
      const Eigen::Index c = weights.num_classes();
      for (graph::NodeId i : train_set) {
        const int label = labels[i];
        if (label < 0 || label >= c)
          throw IncompatibilityError("label " + std::to_string(label) + " outside 0.." +
                                     std::to_string(c - 1));
        for (Eigen::Index k = 0; k < c; ++k) {
          const double y = (label == k) ? 1.0 : -1.0;
          const double z = y * weights.weights.row(k).dot(h.row(i));
          data_term += softplus(-z);
          out.gradient.row(k) += (-y * sigmoid(-z)) * h.row(i);
        }
      }
      break;
    }
  }

  out.gradient *= inv_n;
  out.gradient += lambda * weights.weights;
  out.objective = 0.5 * lambda * weights.weights.squaredNorm() + data_term * inv_n;
  return out;
}

std::pair<ModelWeights, TrainTrace> train(const ModelWeights& init, const Matrix& h,
                                          const std::vector<int>& labels,
                                          const graph::NodeSet& train_set,
                                          const TrainConfig& config) {
  if (config.eta <= 0.0) throw UsageError("train: eta must be positive");
  if (config.epochs < 0) throw UsageError("train: epochs must be non-negative");
  if (train_set.empty()) throw EmptyRemainingError("train: empty training set");
  check_inputs(init, h, labels, train_set);

  const auto start = Clock::now();
  ModelWeights model = init;
  model.provenance.lambda = config.lambda;
  model.provenance.eta = config.eta;
  model.provenance.epochs = config.epochs;
  model.provenance.batch_size = config.batch_size;
  model.provenance.seed = config.seed;
  if (init.weights.isZero(0.0)) model.provenance.init_kind = "zero";

  TrainTrace trace;
  auto record = [&] {
    auto lg = loss_and_grad(model, h, labels, train_set, config.lambda);
    trace.objectives.push_back(lg.objective);
    trace.grad_norms.push_back(lg.gradient.norm());
    trace.seconds.push_back(std::chrono::duration<double>(Clock::now() - start).count());
    return lg.objective;
  };
  record();

  const bool full_batch = config.batch_size <= 0 ||
                          config.batch_size >= static_cast<Eigen::Index>(train_set.size());
  std::vector<graph::NodeId> order(train_set.begin(), train_set.end());
  auto rng = make_rng(config.seed);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (full_batch) {
      auto lg = loss_and_grad(model, h, labels, train_set, config.lambda);
      model.weights -= config.eta * lg.gradient;
    } else {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t off = 0; off < order.size();
           off += static_cast<std::size_t>(config.batch_size)) {
        const std::size_t end =
            std::min(order.size(), off + static_cast<std::size_t>(config.batch_size));
        graph::NodeSet batch(std::vector<graph::NodeId>(order.begin() + off, order.begin() + end));
        auto lg = loss_and_grad(model, h, labels, batch, config.lambda);
        model.weights -= config.eta * lg.gradient;
      }
    }
    const double objective = record();
    if (!std::isfinite(objective) || !model.weights.allFinite())
      throw DivergenceError("training diverged (non-finite objective) at epoch " +
                                std::to_string(epoch),
                            epoch);
  }
  return {std::move(model), std::move(trace)};
}

Eigen::MatrixXd hessian(const ModelWeights& weights, const Matrix& h,
                        const std::vector<int>& labels, const graph::NodeSet& node_set,
                        double lambda, Eigen::Index class_index) {
  if (weights.loss_kind != LossKind::logistic && weights.loss_kind != LossKind::ovr_logistic)
    throw IncompatibilityError("hessian is defined for logistic and ovr_logistic losses only");
  if (class_index < 0 || class_index >= weights.num_classes())
    throw IncompatibilityError("hessian: class index out of range");
  check_inputs(weights, h, labels, node_set);

  const Eigen::Index d = weights.dim();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d, d);
  if (!node_set.empty()) {
    const auto w = weights.weights.row(class_index);
    for (graph::NodeId i : node_set) {
      double y;
      if (weights.loss_kind == LossKind::logistic) {
        y = binary_label(labels[i], "hessian");
      } else {
        y = (labels[i] == class_index) ? 1.0 : -1.0;
      }
      const double s = sigmoid(y * w.dot(h.row(i)));
      out.noalias() += (s * (1.0 - s)) * (h.row(i).transpose() * h.row(i));
    }
    out /= static_cast<double>(node_set.size());
  }
  out.diagonal().array() += lambda;
  return (0.5 * (out + out.transpose())).eval();
}

ModelWeights finetune(const ModelWeights& weights, const Matrix& h_remain,
                      const std::vector<int>& labels, const graph::NodeSet& remain_set,
                      int k, std::optional<double> lr_override) {
  if (k < 0) throw UsageError("finetune: K must be non-negative");
  if (k == 0) return weights;
  if (remain_set.empty()) throw EmptyRemainingError("finetune: empty remaining set");
  check_inputs(weights, h_remain, labels, remain_set);

  double lr;
  if (lr_override) {
    lr = *lr_override;
    if (lr <= 0.0) throw UsageError("finetune: lr_override must be positive");
  } else {
    double max_row_sq = 0.0;
    for (graph::NodeId i : remain_set)
      max_row_sq = std::max(max_row_sq, h_remain.row(i).squaredNorm());
    lr = 1.0 / (weights.provenance.lambda + max_row_sq);
  }

  ModelWeights out = weights;
  for (int step = 1; step <= k; ++step) {
    auto lg = loss_and_grad(out, h_remain, labels, remain_set, weights.provenance.lambda);
    out.weights -= lr * lg.gradient;
    if (!std::isfinite(lg.objective) || !out.weights.allFinite())
      throw DivergenceError("finetune diverged at step " + std::to_string(step), step);
  }
  return out;
}

ModelWeights pegasos_train(const Matrix& h, const std::vector<int>& labels,
                           const graph::NodeSet& train_set, const TrainConfig& config) {
  if (config.lambda <= 0.0) throw UsageError("pegasos_train: lambda must be positive");
  if (config.epochs < 0) throw UsageError("pegasos_train: epochs must be non-negative");
  if (train_set.empty()) throw EmptyRemainingError("pegasos_train: empty training set");

  ModelWeights model = zero_model(LossKind::hinge, h.cols(), labels);
  model.provenance.lambda = config.lambda;
  model.provenance.eta = config.eta;
  model.provenance.epochs = config.epochs;
  model.provenance.batch_size = config.batch_size;
  model.provenance.seed = config.seed;
  check_inputs(model, h, labels, train_set);

  const bool full_batch = config.batch_size <= 0 ||
                          config.batch_size >= static_cast<Eigen::Index>(train_set.size());
  std::vector<graph::NodeId> order(train_set.begin(), train_set.end());
  auto rng = make_rng(config.seed);
  const double radius = 1.0 / std::sqrt(config.lambda);
  std::int64_t t = 0;

  auto subgradient_step = [&](const std::vector<graph::NodeId>& batch) {
    ++t;
    const double lr = 1.0 / (config.lambda * static_cast<double>(t));
    Eigen::RowVectorXd pull = Eigen::RowVectorXd::Zero(h.cols());
    for (graph::NodeId i : batch) {
      const double y = binary_label(labels[i], "pegasos_train");
      if (y * model.weights.row(0).dot(h.row(i)) < 1.0) pull += y * h.row(i);
    }
    pull /= static_cast<double>(batch.size());
    model.weights.row(0) = (1.0 - lr * config.lambda) * model.weights.row(0) + lr * pull;
    const double norm = model.weights.row(0).norm();
    if (norm > radius) model.weights.row(0) *= radius / norm;
  };

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (full_batch) {
      subgradient_step(order);
    } else {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t off = 0; off < order.size();
           off += static_cast<std::size_t>(config.batch_size)) {
        const std::size_t end =
            std::min(order.size(), off + static_cast<std::size_t>(config.batch_size));
        subgradient_step(std::vector<graph::NodeId>(order.begin() + off, order.begin() + end));
      }
    }
    if (!model.weights.allFinite())
      throw DivergenceError("pegasos diverged at epoch " + std::to_string(epoch), epoch);
  }
  return model;
}

std::vector<int> predict(const ModelWeights& weights, const Matrix& h,
                         const graph::NodeSet& node_set) {
  std::vector<int> out;
  out.reserve(node_set.size());
  for (graph::NodeId i : node_set) {
    if (i >= h.rows()) throw IncompatibilityError("predict: node id beyond feature rows");
    if (weights.num_classes() == 1) {
      const double margin = weights.weights.row(0).dot(h.row(i));
      out.push_back(margin > 0.0 ? 1 : -1);  // tie at 0 resolves to the lower class
    } else {
      Vector scores = weights.weights * h.row(i).transpose();
      Eigen::Index best = 0;
      for (Eigen::Index k = 1; k < scores.size(); ++k)
        if (scores[k] > scores[best]) best = k;  // strict: ties keep the lower index
      out.push_back(static_cast<int>(best));
    }
  }
  return out;
}

Evaluation evaluate(const ModelWeights& weights, const Matrix& h, const std::vector<int>& labels,
                    const graph::NodeSet& node_set) {
  Evaluation ev;
  const Eigen::Index c_eff = weights.num_classes() == 1 ? 2 : weights.num_classes();
  ev.scores = Matrix::Zero(static_cast<Eigen::Index>(node_set.size()),
                           weights.num_classes());
  if (node_set.empty()) return ev;

  const std::vector<int> preds = predict(weights, h, node_set);
  auto class_of = [&](int label) {
    return weights.num_classes() == 1 ? (label > 0 ? 1 : 0) : label;
  };

  std::vector<std::int64_t> tp(c_eff, 0), fp(c_eff, 0), fn(c_eff, 0);
  Eigen::Index row = 0;
  std::int64_t correct = 0;
  for (graph::NodeId i : node_set) {
    if (weights.num_classes() == 1) {
      ev.scores(row, 0) = weights.weights.row(0).dot(h.row(i));
    } else {
      ev.scores.row(row) = (weights.weights * h.row(i).transpose()).transpose();
    }
    const int want = class_of(labels[i]);
    const int got = class_of(preds[static_cast<std::size_t>(row)]);
    if (want == got) {
      ++correct;
      ++tp[want];
    } else {
      ++fn[want];
      ++fp[got];
    }
    ++row;
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(node_set.size());

  double f1_sum = 0.0;
  for (Eigen::Index k = 0; k < c_eff; ++k) {
    const double denom = static_cast<double>(2 * tp[k] + fp[k] + fn[k]);
    f1_sum += denom > 0.0 ? 2.0 * static_cast<double>(tp[k]) / denom : 0.0;
  }
  ev.macro_f1 = f1_sum / static_cast<double>(c_eff);
  return ev;
}

}  // namespace gul::model
