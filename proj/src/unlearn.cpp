#include "gul/unlearn.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iterator>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace gul::unlearn {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

graph::NodeSet intersect(const graph::NodeSet& a, const graph::NodeSet& b) {
  std::vector<graph::NodeId> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return graph::NodeSet(std::move(out));
}

graph::NodeSet difference(const graph::NodeSet& a, const graph::NodeSet& b) {
  std::vector<graph::NodeId> out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return graph::NodeSet(std::move(out));
}

Matrix rows_of(const Matrix& x, const graph::NodeSet& ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), x.cols());
  Eigen::Index r = 0;
  for (graph::NodeId id : ids) out.row(r++) = x.row(id);
  return out;
}

void check_ids_in_range(const graph::NodeSet& set, graph::NodeId n, const char* what) {
  if (!set.empty() && set.ids().back() >= n)
    throw UsageError(std::string(what) + ": node id " + std::to_string(set.ids().back()) +
                     " is outside the graph (" + std::to_string(n) + " nodes)");
}

void require_logistic_family(const model::ModelWeights& m, const char* what) {
  if (m.loss_kind != model::LossKind::logistic && m.loss_kind != model::LossKind::ovr_logistic)
    throw IncompatibilityError(std::string(what) +
                               " requires a binary logistic or one-vs-rest logistic model");
}

double resolve_lambda(const model::ModelWeights& m, const UnlearnRequest& request,
                      const char* what) {
  const double lam = request.lambda_override.value_or(m.provenance.lambda);
  if (lam < 0.0) throw UsageError(std::string(what) + ": lambda must be >= 0");
  return lam;
}

Eigen::VectorXd spd_solve(const Eigen::MatrixXd& m, const Eigen::VectorXd& rhs,
                          const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return llt.solve(rhs);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  if (ldlt.info() != Eigen::Success)
    throw IncompatibilityError(std::string(what) + ": Hessian factorization failed");
  return ldlt.solve(rhs);
}

/// Adds noise_std * N(0, I) to every weight entry, row-major draw order.
void add_isotropic_noise(UnlearnResult& res, const UnlearnRequest& request) {
  if (request.noise_std <= 0.0) return;
  res.diagnostics.noise_draw_seed = split_seed(request.noise_seed, seed_tag::noise);
  res.diagnostics.noise_applied = true;
  auto rng = make_rng(res.diagnostics.noise_draw_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto& w = res.weights_after.weights;
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) += request.noise_std * normal(rng);
}

double max_row_norm(const Matrix& m) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) worst = std::max(worst, m.row(i).norm());
  return worst;
}

void check_request_basics(const UnlearnRequest& request, const char* what) {
  if (request.hops_L < 1) throw UsageError(std::string(what) + ": hops_L must be >= 1");
  if (request.noise_std < 0.0) throw UsageError(std::string(what) + ": noise_std must be >= 0");
  if (request.finetune_K < 0) throw UsageError(std::string(what) + ": finetune_K must be >= 0");
}

}  // namespace

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::projector: return "projector";
    case Strategy::influence_plus: return "influence_plus";
    case Strategy::fisher_plus: return "fisher_plus";
    case Strategy::retrain: return "retrain";
  }
  throw UsageError("unknown strategy value");
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "projector") return Strategy::projector;
  if (name == "influence_plus") return Strategy::influence_plus;
  if (name == "fisher_plus") return Strategy::fisher_plus;
  if (name == "retrain") return Strategy::retrain;
  throw UsageError("unknown strategy: " + name +
                   " (expected projector, influence_plus, fisher_plus, or retrain)");
}

UnlearnResult projector_unlearn(const model::ModelWeights& model, const Matrix& x,
                                const UnlearnRequest& request,
                                const features::GramState* precomputed) {
  const auto start = Clock::now();
  features::validate_features(x);
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (n == 0 || d == 0) throw UsageError("projector: empty feature matrix");
  if (model.dim() % d != 0)
    throw IncompatibilityError("projector: model dimension " + std::to_string(model.dim()) +
                               " is not a multiple of the feature dimension " + std::to_string(d));
  const Eigen::Index blocks = model.dim() / d;
  if (precomputed && precomputed->dim() != d)
    throw IncompatibilityError("projector: precomputed Gram dimension does not match features");
  check_ids_in_range(request.deleted, static_cast<graph::NodeId>(n), "projector");

  UnlearnResult res;
  res.strategy = Strategy::projector;
  res.weights_after = model;
  if (request.deleted.empty()) {
    res.diagnostics.orthogonality_residual = 0.0;
    res.elapsed_seconds = seconds_since(start);
    return res;
  }

  const auto remaining =
      graph::NodeSet::complement(request.deleted, static_cast<graph::NodeId>(n));
  if (remaining.empty())
    throw EmptyRemainingError("projector: deletion leaves no feature rows to span");
  const Matrix x_remain = rows_of(x, remaining);

  // Both input options resolve the same ridge so their results agree beyond
  // roundoff: an explicit request override first, then the precomputed
  // state's when supplied, then the full-matrix default (trace(X^T X) ==
  // ||X||_F^2). An override that differs from a cached inverse's ridge
  // forfeits the cached fast path but stays correct.
  double ridge = request.ridge_eps;
  features::GramState remain_state;
  features::GramState full_state;  // option 1 only; backs the span pre-check
  const features::GramState* precheck_state = precomputed;
  if (precomputed) {
    if (ridge <= 0.0)
      ridge = precomputed->cached ? precomputed->cached->ridge_eps
                                  : features::default_ridge(precomputed->gram);
    const Matrix x_delete = rows_of(x, request.deleted);
    try {
      remain_state =
          features::gram_downdate(*precomputed, x_delete, features::DowndateStrategy::woodbury)
              .state;
    } catch (const features::CapacitanceError&) {
      remain_state =
          features::gram_downdate(*precomputed, x_delete, features::DowndateStrategy::direct)
              .state;
      res.diagnostics.capacitance_fallback = true;
    }
    res.diagnostics.used_gram_downdate = true;
  } else {
    if (ridge <= 0.0) ridge = features::default_ridge(x.squaredNorm(), d);
    remain_state = features::gram_precompute(x_remain);
    full_state = features::gram_precompute(x);
    precheck_state = &full_state;
  }

  // Pre-check: every weight row should already lie in span{all feature rows}
  // (zero-initialized training keeps it there). A large residual means the
  // projection is about to discard genuine signal.
  double precheck = 0.0;
  for (Eigen::Index c = 0; c < model.weights.rows(); ++c) {
    for (Eigen::Index b = 0; b < blocks; ++b) {
      const Vector w = model.weights.row(c).segment(b * d, d).transpose();
      const double norm = w.norm();
      if (norm == 0.0) continue;
      const Vector v = features::pinv_solve(*precheck_state, w, ridge);
      const Vector projected = x.transpose() * (x * v);
      precheck = std::max(precheck, (w - projected).norm() / norm);
    }
  }
  res.diagnostics.span_precheck_residual = precheck;
  if (precheck > 1e-4)
    log_info("projector: input weights sit outside the feature span (relative residual " +
             std::to_string(precheck) + "); projection will move them");

  double ortho = 0.0;
  for (Eigen::Index c = 0; c < model.weights.rows(); ++c) {
    for (Eigen::Index b = 0; b < blocks; ++b) {
      const Vector w = model.weights.row(c).segment(b * d, d).transpose();
      const auto projection = features::project_onto_span(w, x_remain, remain_state, ridge);
      res.weights_after.weights.row(c).segment(b * d, d) = projection.weights.transpose();
      ortho = std::max(ortho, projection.orthogonality_residual);
    }
  }
  res.diagnostics.orthogonality_residual = ortho;
  res.elapsed_seconds = seconds_since(start);
  return res;
}

UnlearnResult influence_plus_unlearn(const model::ModelWeights& model, const Dataset& data,
                                     const UnlearnRequest& request) {
  const auto start = Clock::now();
  validate_dataset(data);
  require_logistic_family(model, "influence_plus");
  if (model.dim() != data.x.cols())
    throw IncompatibilityError("influence_plus: model dimension does not match features");
  check_request_basics(request, "influence_plus");
  check_ids_in_range(request.deleted, data.graph.num_nodes, "influence_plus");
  const double lam = resolve_lambda(model, request, "influence_plus");

  UnlearnResult res;
  res.strategy = Strategy::influence_plus;
  res.weights_after = model;

  const auto affected = graph::affected_set(data.graph, request.deleted, request.hops_L);
  res.diagnostics.affected_set_size = static_cast<std::int64_t>(affected.size());

  if (!request.deleted.empty()) {
    if (graph::NodeSet::complement(request.deleted, data.graph.num_nodes).empty())
      throw EmptyRemainingError("influence_plus: deletion leaves no nodes");
    const auto p = graph::build_propagation(data.graph, data.mode, data.add_self_loops);
    const Matrix h_pre = graph::propagate(p, data.x, request.hops_L);

    if (request.corrected) {
      // Two-graph form: the update direction is the full pre-deletion
      // gradient minus the post-deletion remaining gradient, so the
      // propagation change itself is accounted for.
      const auto remain_train = difference(data.train_set, request.deleted);
      if (remain_train.empty())
        throw EmptyRemainingError("influence_plus: no training nodes remain");
      const Matrix g_pre =
          model::loss_and_grad(model, h_pre, data.labels, data.train_set, lam).gradient;
      const auto zg = graph::zero_out_nodes(data.graph, request.deleted);
      const auto pu = graph::build_propagation(zg, data.mode, data.add_self_loops);
      const Matrix h_post = graph::propagate(pu, data.x, request.hops_L);
      const Matrix g_post =
          model::loss_and_grad(model, h_post, data.labels, remain_train, lam).gradient;
      const Matrix direction = g_pre - g_post;
      for (Eigen::Index c = 0; c < model.weights.rows(); ++c) {
        const Eigen::MatrixXd hess =
            model::hessian(model, h_post, data.labels, remain_train, lam, c);
        res.weights_after.weights.row(c) +=
            spd_solve(hess, direction.row(c).transpose(), "influence_plus").transpose();
      }
    } else {
      // One-sided form on the pre-deletion embeddings: per-sample loss
      // gradients over the affected training nodes, averaged over the full
      // training set, pushed through the Hessian of the unaffected nodes.
      // At the trained optimum this equals the Newton step toward the
      // remaining data's optimum, up to the deleted fraction.
      const auto grad_set = intersect(affected, data.train_set);
      if (!grad_set.empty()) {
        const Matrix per_sample_mean =
            model::loss_and_grad(model, h_pre, data.labels, grad_set, 0.0).gradient;
        const double scale = static_cast<double>(grad_set.size()) /
                             static_cast<double>(data.train_set.size());
        const Matrix direction = scale * per_sample_mean;
        const auto hess_set = difference(data.train_set, affected);
        for (Eigen::Index c = 0; c < model.weights.rows(); ++c) {
          const Eigen::MatrixXd hess =
              model::hessian(model, h_pre, data.labels, hess_set, lam, c);
          res.weights_after.weights.row(c) +=
              spd_solve(hess, direction.row(c).transpose(), "influence_plus").transpose();
        }
      }
    }
  }

  add_isotropic_noise(res, request);
  res.elapsed_seconds = seconds_since(start);
  return res;
}

UnlearnResult fisher_plus_unlearn(const model::ModelWeights& model, const Dataset& data,
                                  const UnlearnRequest& request) {
  const auto start = Clock::now();
  validate_dataset(data);
  require_logistic_family(model, "fisher_plus");
  if (model.dim() != data.x.cols())
    throw IncompatibilityError("fisher_plus: model dimension does not match features");
  check_request_basics(request, "fisher_plus");
  check_ids_in_range(request.deleted, data.graph.num_nodes, "fisher_plus");
  const double lam = resolve_lambda(model, request, "fisher_plus");

  UnlearnResult res;
  res.strategy = Strategy::fisher_plus;
  res.weights_after = model;
  res.diagnostics.affected_set_size = static_cast<std::int64_t>(
      graph::affected_set(data.graph, request.deleted, request.hops_L).size());

  const auto remain_train = difference(data.train_set, request.deleted);
  if (remain_train.empty())
    throw EmptyRemainingError("fisher_plus: no training nodes remain");

  const bool want_noise = request.noise_std > 0.0;
  if (want_noise && lam <= 0.0)
    throw UsageError("fisher_plus: the H^(-1/4) noise term requires lambda > 0");

  if (!request.deleted.empty() || want_noise) {
    // Gradient and Hessian over the remaining rows of the training-time
    // embeddings: the baseline treats samples as i.i.d. rows and does not
    // re-propagate after deletion, so propagated traces of deleted features
    // survive the step.
    const auto p = graph::build_propagation(data.graph, data.mode, data.add_self_loops);
    const Matrix h_pre = graph::propagate(p, data.x, request.hops_L);
    const Matrix g_r =
        model::loss_and_grad(model, h_pre, data.labels, remain_train, lam).gradient;

    std::mt19937_64 rng;
    std::normal_distribution<double> normal(0.0, 1.0);
    if (want_noise) {
      res.diagnostics.noise_draw_seed = split_seed(request.noise_seed, seed_tag::noise);
      res.diagnostics.noise_applied = true;
      rng = make_rng(res.diagnostics.noise_draw_seed);
    }

    for (Eigen::Index c = 0; c < model.weights.rows(); ++c) {
      const Eigen::MatrixXd hess =
          model::hessian(model, h_pre, data.labels, remain_train, lam, c);
      if (!request.deleted.empty())
        res.weights_after.weights.row(c) -=
            spd_solve(hess, g_r.row(c).transpose(), "fisher_plus").transpose();
      if (want_noise) {
        const Eigen::MatrixXd shape = inverse_quarter_root(hess, 0.5 * lam);
        Vector b(model.dim());
        for (Eigen::Index j = 0; j < b.size(); ++j) b[j] = request.noise_std * normal(rng);
        res.weights_after.weights.row(c) += (shape * b).transpose();
      }
    }
  }

  res.elapsed_seconds = seconds_since(start);
  return res;
}

UnlearnResult retrain_baseline(const Dataset& data, const graph::NodeSet& remain_nodes,
                               const model::TrainConfig& config, model::LossKind kind) {
  const auto start = Clock::now();
  validate_dataset(data);
  const graph::NodeId n = data.graph.num_nodes;
  check_ids_in_range(remain_nodes, n, "retrain");
  if (remain_nodes.empty()) throw EmptyRemainingError("retrain: no remaining nodes");
  const auto deleted = graph::NodeSet::complement(remain_nodes, n);

  const auto dr = graph::delete_nodes(data.graph, deleted);
  const auto kept = static_cast<Eigen::Index>(dr.graph.num_nodes);
  Matrix x_remain(kept, data.x.cols());
  std::vector<int> labels_remain(static_cast<std::size_t>(kept));
  for (graph::NodeId old = 0; old < n; ++old) {
    const graph::NodeId now = dr.index_map[static_cast<std::size_t>(old)];
    if (now < 0) continue;
    x_remain.row(now) = data.x.row(old);
    labels_remain[static_cast<std::size_t>(now)] = data.labels[static_cast<std::size_t>(old)];
  }
  std::vector<graph::NodeId> train_ids;
  for (graph::NodeId id : data.train_set) {
    const graph::NodeId now = dr.index_map[static_cast<std::size_t>(id)];
    if (now >= 0) train_ids.push_back(now);
  }

  const auto pu = graph::build_propagation(dr.graph, data.mode, data.add_self_loops);
  const Matrix h_remain = graph::propagate(pu, x_remain, data.hops);
  // Class count comes from the full label vector: a deletion that empties a
  // class must not shrink the weight matrix.
  const auto init = model::zero_model(kind, data.x.cols(), data.labels);
  auto trained =
      model::train(init, h_remain, labels_remain, graph::NodeSet(std::move(train_ids)), config);

  UnlearnResult res;
  res.strategy = Strategy::retrain;
  res.weights_after = std::move(trained.first);
  res.diagnostics.affected_set_size = static_cast<std::int64_t>(
      graph::affected_set(data.graph, deleted, data.hops).size());
  res.elapsed_seconds = seconds_since(start);
  return res;
}

Eigen::MatrixXd inverse_quarter_root(const Eigen::MatrixXd& spd, double eigenvalue_floor) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(spd);
  if (es.info() != Eigen::Success)
    throw IncompatibilityError("inverse_quarter_root: eigendecomposition failed");
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(eigenvalue_floor);
  if ((ev.array() <= 0.0).any())
    throw UsageError("inverse_quarter_root: matrix has non-positive eigenvalues after clamping");
  const Eigen::VectorXd scaled = ev.array().pow(-0.25);
  return es.eigenvectors() * scaled.asDiagonal() * es.eigenvectors().transpose();
}

BoundConstants estimate_constants(const Dataset& data, const graph::NodeSet& deleted,
                                  const model::ModelWeights& model, int sample_count,
                                  std::uint64_t seed) {
  validate_dataset(data);
  if (model.dim() != data.x.cols())
    throw IncompatibilityError("estimate_constants: model dimension does not match features");
  if (sample_count < 1)
    throw UsageError("estimate_constants: sample_count must be >= 1");
  const graph::NodeId n = data.graph.num_nodes;
  constexpr graph::NodeId kDenseLimit = 5000;
  if (n > kDenseLimit)
    throw UsageError("estimate_constants: dense propagation powers are limited to " +
                     std::to_string(kDenseLimit) + " nodes; got " + std::to_string(n));
  check_ids_in_range(deleted, n, "estimate_constants");

  BoundConstants c;
  c.lambda = model.provenance.lambda;
  c.eta = model.provenance.eta;
  c.t = model.provenance.epochs;
  c.deleted_count = static_cast<std::int64_t>(deleted.size());
  c.num_nodes = n;
  c.b_x = max_row_norm(data.x);
  c.b_w = model.weights.norm();

  const auto p = graph::build_propagation(data.graph, data.mode, data.add_self_loops);
  const Matrix eye = Matrix::Identity(n, n);
  const Matrix pl_before = graph::propagate(p, eye, data.hops);
  Matrix pl_after;
  if (deleted.empty()) {
    pl_after = pl_before;
  } else {
    const auto zg = graph::zero_out_nodes(data.graph, deleted);
    pl_after = graph::propagate(graph::build_propagation(zg, data.mode, data.add_self_loops),
                                eye, data.hops);
    // Align with the renumbered post-deletion operator: deleted rows and
    // columns are zero-padded.
    for (graph::NodeId id : deleted) {
      pl_after.row(id).setZero();
      pl_after.col(id).setZero();
    }
  }
  c.p_s = std::max(max_row_norm(pl_before), max_row_norm(pl_after));
  c.p_d = max_row_norm(pl_before - pl_after);

  c.delta = deleted.empty()
                ? 0.0
                : features::delta_measure(data.x, features::DeltaMode::against_set, deleted);

  if (!deleted.empty()) {
    const Matrix h_pre = graph::propagate(p, data.x, data.hops);
    const Matrix g_full =
        model::loss_and_grad(model, h_pre, data.labels, data.train_set, c.lambda).gradient;
    auto rng = make_rng(split_seed(seed, seed_tag::constants));
    double worst_gap = 0.0;
    for (int s = 0; s < sample_count; ++s) {
      graph::NodeSet sample;
      if (s == 0) {
        sample = deleted;  // the actual deletion always participates
      } else {
        std::vector<graph::NodeId> drawn;
        std::sample(data.train_set.begin(), data.train_set.end(), std::back_inserter(drawn),
                    deleted.size(), rng);
        sample = graph::NodeSet(std::move(drawn));
      }
      const auto remain_train = difference(data.train_set, sample);
      if (remain_train.empty()) continue;
      const auto zg = graph::zero_out_nodes(data.graph, sample);
      const Matrix h_s = embeddings_on(data, zg);
      const Matrix g_s =
          model::loss_and_grad(model, h_s, data.labels, remain_train, c.lambda).gradient;
      worst_gap = std::max(worst_gap, (g_s - g_full).norm());
    }
    c.g_est = worst_gap;
  }
  return c;
}

double weight_gap_bound(const BoundConstants& c) {
  const double s = c.lambda + c.b_x * c.b_x * c.p_s * c.p_s;
  const double q = c.eta * ((1.0 + c.b_x * c.b_w * c.p_s) * c.b_x * c.p_d + c.g_est);
  const double t = static_cast<double>(c.t);

  double geometric = 0.0;  // sum_{k=1..t} (1 + eta s)^(k-1)
  const double growth = c.eta * s;
  if (t > 0.0) {
    if (growth == 0.0) {
      geometric = t;
    } else {
      const double log_total = t * std::log1p(growth);
      geometric = log_total > 700.0 ? std::numeric_limits<double>::infinity()
                                    : std::expm1(log_total) / growth;
    }
  }
  const double drift = q == 0.0 ? 0.0 : q * geometric;
  return drift + c.delta * c.eta * t * static_cast<double>(c.deleted_count);
}

DeltaCondition delta_condition(const BoundConstants& c) {
  if (c.deleted_count < 1)
    throw UsageError("delta_condition: needs at least one deleted node");
  if (!(c.lambda > 0.0) || !(c.eta > 0.0) || c.t < 1)
    throw UsageError("delta_condition: lambda, eta, and t must be positive");
  DeltaCondition out;
  out.threshold = (1.0 / (c.lambda * c.eta * static_cast<double>(c.t)) + 1.0) * c.b_x *
                  static_cast<double>(c.num_nodes) / static_cast<double>(c.deleted_count);
  out.holds = c.delta < out.threshold;
  return out;
}

UnlearnResult run_unlearn(const model::ModelWeights& model, const Dataset& data,
                          const UnlearnRequest& request,
                          const features::GramState* precomputed) {
  const auto start = Clock::now();
  validate_dataset(data);
  check_request_basics(request, "run_unlearn");
  if (request.hops_L != data.hops)
    throw UsageError("run_unlearn: request hops_L (" + std::to_string(request.hops_L) +
                     ") does not match the dataset propagation depth (" +
                     std::to_string(data.hops) + ")");
  check_ids_in_range(request.deleted, data.graph.num_nodes, "run_unlearn");
  for (graph::NodeId id : request.deleted) {
    if (!data.train_set.contains(id))
      throw UsageError("run_unlearn: deleted node " + std::to_string(id) +
                       " is not in the training set");
  }

  UnlearnResult res;
  switch (request.strategy) {
    case Strategy::projector:
      res = projector_unlearn(model, data.x, request, precomputed);
      break;
    case Strategy::influence_plus:
      res = influence_plus_unlearn(model, data, request);
      break;
    case Strategy::fisher_plus:
      res = fisher_plus_unlearn(model, data, request);
      break;
    case Strategy::retrain: {
      model::TrainConfig config;
      config.lambda = request.lambda_override.value_or(model.provenance.lambda);
      config.eta = model.provenance.eta;
      config.epochs = model.provenance.epochs;
      config.batch_size = model.provenance.batch_size;
      config.seed = model.provenance.seed;
      const auto remain = graph::NodeSet::complement(request.deleted, data.graph.num_nodes);
      res = retrain_baseline(data, remain, config, model.loss_kind);
      break;
    }
  }

  if (res.diagnostics.affected_set_size < 0)
    res.diagnostics.affected_set_size = static_cast<std::int64_t>(
        graph::affected_set(data.graph, request.deleted, request.hops_L).size());

  if (request.finetune_K > 0) {
    const auto remain_train = difference(data.train_set, request.deleted);
    const graph::Graph zg = request.deleted.empty()
                                ? data.graph
                                : graph::zero_out_nodes(data.graph, request.deleted);
    const Matrix h_post = embeddings_on(data, zg);
    res.weights_after =
        model::finetune(res.weights_after, h_post, data.labels, remain_train, request.finetune_K);
  }

  if (request.probe_channel >= 0) {
    if (request.probe_channel >= res.weights_after.dim())
      throw UsageError("run_unlearn: probe_channel out of range");
    res.diagnostics.injected_channel_norm =
        res.weights_after.weights.col(request.probe_channel).norm();
  }
  res.elapsed_seconds = seconds_since(start);
  return res;
}

}  // namespace gul::unlearn
