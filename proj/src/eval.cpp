#include "gul/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <thread>

namespace gul::eval {

namespace {

// Accuracy is reported on the test set when one exists, otherwise on the
// training nodes that survive the deletion.
graph::NodeSet evaluation_set(const Dataset& data, const graph::NodeSet& deleted) {
  if (!data.test_set.empty()) return data.test_set;
  std::vector<graph::NodeId> kept;
  for (graph::NodeId id : data.train_set)
    if (!deleted.contains(id)) kept.push_back(id);
  return graph::NodeSet(kept);
}

graph::NodeSet draw_from_train(const graph::NodeSet& train, double fraction,
                               std::uint64_t stream) {
  const auto want = std::max<std::size_t>(
      1, static_cast<std::size_t>(fraction * static_cast<double>(train.size())));
  std::mt19937_64 rng(stream);
  std::vector<graph::NodeId> drawn;
  std::sample(train.begin(), train.end(), std::back_inserter(drawn), want, rng);
  return graph::NodeSet(drawn);
}

Matrix deleted_graph_embeddings(const Dataset& data, const graph::NodeSet& deleted) {
  if (deleted.empty()) return dataset_embeddings(data);
  return embeddings_on(data, graph::zero_out_nodes(data.graph, deleted));
}

double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }

}  // namespace

InjectionReport feature_injection_experiment(const Dataset& data, double delete_fraction,
                                             const std::vector<unlearn::Strategy>& strategies,
                                             const InjectionOptions& options,
                                             std::uint64_t seed) {
  validate_dataset(data);
  if (!(delete_fraction > 0.0 && delete_fraction < 1.0))
    throw UsageError("feature_injection_experiment: delete_fraction must lie in (0,1)");

  InjectionReport report;
  report.deleted =
      draw_from_train(data.train_set, delete_fraction, split_seed(seed, seed_tag::delete_pick));

  // Probe channel: 1 exactly on deleted rows; relabel so training must use it.
  Dataset probed = data;
  const Eigen::Index d = data.x.cols();
  probed.x.conservativeResize(Eigen::NoChange, d + 1);
  probed.x.col(d).setZero();
  for (graph::NodeId id : report.deleted) probed.x(id, d) = 1.0;
  report.injected_channel = d;

  model::LossKind kind = model::LossKind::ovr_logistic;
  if (options.binary_mode) {
    kind = model::LossKind::logistic;
    for (graph::NodeId id : report.deleted) {
      auto& y = probed.labels[static_cast<std::size_t>(id)];
      y = -y;
    }
  } else {
    const Eigen::Index classes = model::num_classes_for(kind, data.labels);
    for (graph::NodeId id : report.deleted)
      probed.labels[static_cast<std::size_t>(id)] = static_cast<int>(classes);
  }

  const Matrix h = dataset_embeddings(probed);
  auto trained = model::train(model::zero_model(kind, d + 1, probed.labels), h, probed.labels,
                              probed.train_set, options.train)
                     .first;

  const graph::NodeSet eval_set = evaluation_set(probed, report.deleted);
  const double norm_before = trained.weights.col(d).norm();
  const double accuracy_before = model::evaluate(trained, h, probed.labels, eval_set).accuracy;
  const Matrix h_post = deleted_graph_embeddings(probed, report.deleted);

  unlearn::UnlearnRequest base_request;
  base_request.deleted = report.deleted;
  base_request.hops_L = probed.hops;
  base_request.noise_std = options.noise_std;
  base_request.noise_seed = options.noise_seed;
  base_request.probe_channel = d;

  auto retrain_request = base_request;
  retrain_request.strategy = unlearn::Strategy::retrain;
  retrain_request.noise_std = 0.0;
  const auto retrained = unlearn::run_unlearn(trained, probed, retrain_request);
  report.retrain_seconds = retrained.elapsed_seconds;
  report.retrain_accuracy =
      model::evaluate(retrained.weights_after, h_post, probed.labels, eval_set).accuracy;

  for (auto strategy : strategies) {
    auto request = base_request;
    request.strategy = strategy;
    if (strategy == unlearn::Strategy::retrain) request.noise_std = 0.0;
    const auto res = strategy == unlearn::Strategy::retrain
                         ? retrained
                         : unlearn::run_unlearn(trained, probed, request);
    InjectionStrategyRow row;
    row.strategy = strategy;
    row.injected_norm_before = norm_before;
    row.injected_norm_after = res.weights_after.weights.col(d).norm();
    row.accuracy_before = accuracy_before;
    row.accuracy_after =
        model::evaluate(res.weights_after, h_post, probed.labels, eval_set).accuracy;
    row.unlearn_seconds = res.elapsed_seconds;
    report.rows.push_back(std::move(row));
  }
  return report;
}

ClosenessReport closeness_report(const model::ModelWeights& w, const model::ModelWeights& w_p,
                                 const model::ModelWeights& w_u, const Matrix& h,
                                 const NodeSubsets& subsets) {
  if (w_p.weights.rows() != w.weights.rows() || w_p.weights.cols() != w.weights.cols() ||
      w_u.weights.rows() != w.weights.rows() || w_u.weights.cols() != w.weights.cols())
    throw IncompatibilityError("closeness_report: weight shapes do not match");
  if (h.cols() != w.weights.cols())
    throw IncompatibilityError("closeness_report: feature width does not match the weights");
  const double norm_w = w.weights.norm();
  if (norm_w == 0.0)
    throw UsageError("closeness_report: reference weights have zero norm");

  ClosenessReport report;
  report.normalized_weight_diff = (w_u.weights - w_p.weights).norm() / norm_w;

  auto subset_distance = [&](const graph::NodeSet& subset) {
    SubsetDistance out;
    if (subset.empty()) return out;
    if (subset.ids().back() >= h.rows())
      throw UsageError("closeness_report: subset id out of range");
    double total = 0.0;
    for (graph::NodeId id : subset) {
      const Vector sp = (w_p.weights * h.row(id).transpose()).unaryExpr(&sigmoid);
      const Vector su = (w_u.weights * h.row(id).transpose()).unaryExpr(&sigmoid);
      total += (sp - su).norm();
    }
    out.value = total / static_cast<double>(subset.size());
    out.present = true;
    return out;
  };
  report.deleted = subset_distance(subsets.deleted);
  report.remaining = subset_distance(subsets.remaining);
  report.test = subset_distance(subsets.test);
  return report;
}

std::vector<SweepRow> robustness_sweep(const Dataset& data, const std::vector<double>& ratios,
                                       const std::vector<unlearn::Strategy>& strategies,
                                       const std::vector<std::uint64_t>& seeds,
                                       const model::TrainConfig& config, int jobs) {
  validate_dataset(data);
  for (double r : ratios)
    if (!(r > 0.0 && r < 1.0))
      throw UsageError("robustness_sweep: ratios must lie in (0,1)");
  if (jobs < 1) throw UsageError("robustness_sweep: jobs must be >= 1");

  const std::size_t n_ratios = ratios.size();
  const std::size_t n_seeds = seeds.size();
  const std::size_t n_strats = strategies.size();
  std::vector<SweepRow> rows(n_ratios * n_seeds * n_strats);
  if (rows.empty()) return rows;

  // One base model and one deletion order per seed; ratios truncate the same
  // order so the deleted sets are nested.
  const Matrix h = dataset_embeddings(data);
  std::vector<model::ModelWeights> base_models;
  std::vector<std::vector<graph::NodeId>> orders;
  base_models.reserve(n_seeds);
  orders.reserve(n_seeds);
  bool binary = false;
  for (int y : data.labels)
    if (y < 0) binary = true;
  const auto kind = binary ? model::LossKind::logistic : model::LossKind::ovr_logistic;
  for (std::uint64_t s : seeds) {
    auto cfg = config;
    cfg.seed = s;
    base_models.push_back(
        model::train(model::zero_model(kind, data.x.cols(), data.labels), h, data.labels,
                     data.train_set, cfg)
            .first);
    std::vector<graph::NodeId> order(data.train_set.begin(), data.train_set.end());
    std::mt19937_64 rng(split_seed(s, seed_tag::delete_pick));
    std::shuffle(order.begin(), order.end(), rng);
    orders.push_back(std::move(order));
  }

  const std::size_t cells = n_ratios * n_seeds;
  std::atomic<std::size_t> next_cell{0};
  auto worker = [&] {
    for (std::size_t cell = next_cell.fetch_add(1); cell < cells;
         cell = next_cell.fetch_add(1)) {
      const std::size_t ri = cell / n_seeds;
      const std::size_t si = cell % n_seeds;
      const auto& order = orders[si];
      const auto count = std::max<std::size_t>(
          1, static_cast<std::size_t>(ratios[ri] * static_cast<double>(order.size())));
      const graph::NodeSet deleted(
          std::vector<graph::NodeId>(order.begin(), order.begin() + static_cast<long>(count)));

      unlearn::UnlearnRequest request;
      request.deleted = deleted;
      request.hops_L = data.hops;
      request.strategy = unlearn::Strategy::retrain;
      const auto reference = unlearn::run_unlearn(base_models[si], data, request);
      const Matrix h_post = deleted_graph_embeddings(data, deleted);
      const graph::NodeSet eval_set = evaluation_set(data, deleted);

      for (std::size_t ti = 0; ti < n_strats; ++ti) {
        request.strategy = strategies[ti];
        const auto res = strategies[ti] == unlearn::Strategy::retrain
                             ? reference
                             : unlearn::run_unlearn(base_models[si], data, request);
        SweepRow row;
        row.ratio = ratios[ri];
        row.seed = seeds[si];
        row.strategy = strategies[ti];
        row.test_accuracy =
            model::evaluate(res.weights_after, h_post, data.labels, eval_set).accuracy;
        row.weight_distance = (res.weights_after.weights - reference.weights_after.weights).norm();
        row.unlearn_seconds = res.elapsed_seconds;
        rows[(ri * n_seeds + si) * n_strats + ti] = std::move(row);
      }
    }
  };

  const std::size_t thread_count = std::min<std::size_t>(static_cast<std::size_t>(jobs), cells);
  if (thread_count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(thread_count);
    for (std::size_t t = 0; t < thread_count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return rows;
}

namespace {

Matrix activate(const Matrix& a, MlpActivation act) {
  if (act == MlpActivation::identity) return a;
  return a.array().tanh().matrix();
}

Matrix activate_grad(const Matrix& a, MlpActivation act) {
  if (act == MlpActivation::identity) return Matrix::Ones(a.rows(), a.cols());
  return (1.0 - a.array().tanh().square()).matrix();
}

}  // namespace

MlpFeatures mlp_feature_mode(const Dataset& data, const graph::NodeSet& remain_set,
                             const MlpConfig& config) {
  validate_dataset(data);
  const Eigen::Index d = data.x.cols();
  if (config.hidden < 1) throw UsageError("mlp_feature_mode: hidden width must be >= 1");
  if (config.epochs < 0) throw UsageError("mlp_feature_mode: epochs must be non-negative");
  if (config.lr <= 0.0) throw UsageError("mlp_feature_mode: lr must be positive");
  if (config.identity_init && config.hidden != d)
    throw UsageError("mlp_feature_mode: identity_init needs hidden == input width");
  if (config.train_set.empty())
    throw UsageError("mlp_feature_mode: feature-map training set is empty");
  if (!remain_set.empty() && remain_set.ids().back() >= data.graph.num_nodes)
    throw UsageError("mlp_feature_mode: remain_set id out of range");
  for (graph::NodeId id : config.train_set)
    if (!remain_set.contains(id))
      throw UsageError("mlp_feature_mode: feature-map training set references deleted node " +
                       std::to_string(id));

  // Binary labels (-1/+1) get a single logistic head; otherwise a softmax
  // head over 0..C-1.
  bool binary = false;
  for (int y : data.labels)
    if (y < 0) binary = true;
  const Eigen::Index head_out =
      binary ? model::num_classes_for(model::LossKind::logistic, data.labels)
             : model::num_classes_for(model::LossKind::softmax, data.labels);

  MlpFeatures out;
  std::mt19937_64 rng(split_seed(config.seed, seed_tag::mlp));
  std::normal_distribution<double> g(0.0, 1.0);
  auto random_matrix = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * g(rng);
    return m;
  };
  if (config.identity_init) {
    out.w1 = Matrix::Identity(d, d);
    out.w2 = Matrix::Identity(d, d);
  } else {
    out.w1 = random_matrix(d, config.hidden);
    out.w2 = random_matrix(config.hidden, d);
  }
  out.b1 = Vector::Zero(out.w1.cols());
  out.b2 = Vector::Zero(d);
  Matrix head = random_matrix(d, head_out);
  Vector head_b = Vector::Zero(head_out);

  // Gather the training rows and targets once.
  const auto m_rows = static_cast<Eigen::Index>(config.train_set.size());
  Matrix x_t(m_rows, d);
  std::vector<int> y_t;
  y_t.reserve(static_cast<std::size_t>(m_rows));
  {
    Eigen::Index r = 0;
    for (graph::NodeId id : config.train_set) {
      x_t.row(r++) = data.x.row(id);
      y_t.push_back(data.labels[static_cast<std::size_t>(id)]);
    }
  }

  const double inv_m = 1.0 / static_cast<double>(m_rows);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const Matrix a1 = (x_t * out.w1).rowwise() + out.b1.transpose();
    const Matrix z1 = activate(a1, config.activation);
    const Matrix a2 = (z1 * out.w2).rowwise() + out.b2.transpose();
    const Matrix z2 = activate(a2, config.activation);
    const Matrix logits = (z2 * head).rowwise() + head_b.transpose();

    double loss = 0.0;
    Matrix dlogits(m_rows, head_out);
    if (binary) {
      for (Eigen::Index i = 0; i < m_rows; ++i) {
        const double yi = y_t[static_cast<std::size_t>(i)];
        const double margin = yi * logits(i, 0);
        loss += margin > 0 ? std::log1p(std::exp(-margin))
                           : -margin + std::log1p(std::exp(margin));
        dlogits(i, 0) = (sigmoid(margin) - 1.0) * yi * inv_m;
      }
    } else {
      for (Eigen::Index i = 0; i < m_rows; ++i) {
        Vector row = logits.row(i).transpose();
        const double peak = row.maxCoeff();
        const Vector ex = (row.array() - peak).exp();
        const double denom = ex.sum();
        const int yi = y_t[static_cast<std::size_t>(i)];
        loss += -(row[yi] - peak - std::log(denom));
        dlogits.row(i) = (ex / denom).transpose() * inv_m;
        dlogits(i, yi) -= inv_m;
      }
    }
    loss *= inv_m;
    if (!std::isfinite(loss))
      throw DivergenceError("mlp_feature_mode diverged at epoch " + std::to_string(epoch),
                            epoch);

    const Matrix dhead = z2.transpose() * dlogits;
    const Vector dhead_b = dlogits.colwise().sum().transpose();
    const Matrix dz2 = dlogits * head.transpose();
    const Matrix da2 = dz2.cwiseProduct(activate_grad(a2, config.activation));
    const Matrix dw2 = z1.transpose() * da2;
    const Vector db2 = da2.colwise().sum().transpose();
    const Matrix dz1 = da2 * out.w2.transpose();
    const Matrix da1 = dz1.cwiseProduct(activate_grad(a1, config.activation));
    const Matrix dw1 = x_t.transpose() * da1;
    const Vector db1 = da1.colwise().sum().transpose();

    head -= config.lr * dhead;
    head_b -= config.lr * dhead_b;
    out.w2 -= config.lr * dw2;
    out.b2 -= config.lr * db2;
    out.w1 -= config.lr * dw1;
    out.b1 -= config.lr * db1;
    if (!out.w1.allFinite() || !out.w2.allFinite())
      throw DivergenceError("mlp_feature_mode diverged at epoch " + std::to_string(epoch),
                            epoch);
  }

  const Matrix a1 = (data.x * out.w1).rowwise() + out.b1.transpose();
  const Matrix z1 = activate(a1, config.activation);
  const Matrix a2 = (z1 * out.w2).rowwise() + out.b2.transpose();
  out.z = activate(a2, config.activation);
  out.note =
      "feature map fit only on non-deleted rows; downstream projection certifies "
      "removal with respect to these transformed rows";
  return out;
}

}  // namespace gul::eval
