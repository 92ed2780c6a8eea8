#include "gul/unlearn.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

using namespace gul;
using namespace gul::unlearn;
using graph::NodeSet;

namespace {

// Dataset over a CSBM draw: every node trains, labels are +/-1.
Dataset csbm_dataset(graph::CsbmParams params, int hops,
                     graph::PropagationMode mode = graph::PropagationMode::row,
                     bool self_loops = false) {
  auto data = graph::generate_csbm(params);
  Dataset out;
  out.graph = std::move(data.graph);
  out.x = std::move(data.features);
  out.labels = std::move(data.labels);
  std::vector<graph::NodeId> all(static_cast<std::size_t>(params.n));
  for (graph::NodeId i = 0; i < params.n; ++i) all[static_cast<std::size_t>(i)] = i;
  out.train_set = NodeSet(all);
  out.mode = mode;
  out.hops = hops;
  out.add_self_loops = self_loops;
  return out;
}

graph::CsbmParams default_csbm(graph::NodeId n, std::uint64_t seed, double sep = 1.5,
                               double noise = 0.5) {
  graph::CsbmParams params;
  params.n = n;
  params.p = 0.4;
  params.q = 0.08;
  params.mu_plus = Vector::Constant(4, sep / 2.0);
  params.mu_minus = Vector::Constant(4, -sep / 2.0);
  params.feature_noise_scale = noise;
  params.seed = seed;
  return params;
}

model::ModelWeights fit(const Dataset& data, const model::TrainConfig& config,
                        model::LossKind kind = model::LossKind::logistic) {
  const Matrix h = dataset_embeddings(data);
  const auto init = model::zero_model(kind, data.x.cols(), data.labels);
  return model::train(init, h, data.labels, data.train_set, config).first;
}

double gap(const model::ModelWeights& a, const model::ModelWeights& b) {
  return (a.weights - b.weights).norm();
}

// Weight rows drawn from the row span of x, so they mimic a trained model.
model::ModelWeights span_model(const Matrix& x, std::uint64_t seed, Eigen::Index classes = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  model::ModelWeights m;
  m.weights = Matrix::Zero(classes, x.cols());
  for (Eigen::Index c = 0; c < classes; ++c) {
    Vector beta(x.rows());
    for (Eigen::Index i = 0; i < beta.size(); ++i) beta[i] = g(rng);
    m.weights.row(c) = (x.transpose() * beta).transpose();
  }
  return m;
}

}  // namespace

TEST_CASE("strategy names round-trip") {
  for (auto s : {Strategy::projector, Strategy::influence_plus, Strategy::fisher_plus,
                 Strategy::retrain})
    CHECK(strategy_from_name(strategy_name(s)) == s);
  CHECK_THROWS_AS(strategy_from_name("graph_eraser"), UsageError);
}

TEST_CASE("projector_unlearn: empty deletion returns the model unchanged") {
  const Matrix x = oracle::random_matrix(12, 5, 71);
  const auto m = span_model(x, 3);
  UnlearnRequest request;
  const auto res = projector_unlearn(m, x, request);
  CHECK(gap(res.weights_after, m) == 0.0);
  CHECK(res.diagnostics.orthogonality_residual == 0.0);
  CHECK(res.elapsed_seconds >= 0.0);
  CHECK(res.strategy == Strategy::projector);
}

TEST_CASE("projector_unlearn: weights inside the deleted-only span project to zero") {
  const Matrix x = Matrix::Identity(4, 4);
  model::ModelWeights m;
  m.weights = Matrix::Zero(1, 4);
  m.weights(0, 2) = 1.0;
  m.weights(0, 3) = 2.0;
  UnlearnRequest request;
  request.deleted = NodeSet({2, 3});
  const auto res = projector_unlearn(m, x, request);
  CHECK(res.weights_after.weights.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("projector_unlearn: deleting every row is an error") {
  const Matrix x = oracle::random_matrix(5, 3, 9);
  const auto m = span_model(x, 4);
  UnlearnRequest request;
  request.deleted = NodeSet({0, 1, 2, 3, 4});
  CHECK_THROWS_AS(projector_unlearn(m, x, request), EmptyRemainingError);
}

TEST_CASE("projector_unlearn: option 1 and option 2 agree on a random 40x6 instance") {
  const Matrix x = oracle::random_matrix(40, 6, 123);
  const auto m = span_model(x, 17);
  UnlearnRequest request;
  request.deleted = NodeSet({1, 8, 19, 30, 39});

  const auto direct = projector_unlearn(m, x, request);
  const auto full = features::gram_precompute(x, true);
  const auto downdated = projector_unlearn(m, x, request, &full);

  CHECK(direct.diagnostics.used_gram_downdate == false);
  CHECK(downdated.diagnostics.used_gram_downdate == true);
  CHECK(downdated.diagnostics.capacitance_fallback == false);
  const double rel = gap(direct.weights_after, downdated.weights_after) /
                     direct.weights_after.weights.norm();
  CHECK(rel < 1e-8);

  // Both results satisfy the orthogonality conditions against X_remain.
  CHECK(direct.diagnostics.orthogonality_residual < 1e-8 * m.weights.norm());
  CHECK(downdated.diagnostics.orthogonality_residual < 1e-8 * m.weights.norm());
}

TEST_CASE("projector_unlearn: option paths agree across random instances") {
  std::mt19937_64 pick(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(pick() % 9);
    const Eigen::Index m_del = 1 + static_cast<Eigen::Index>(pick() % d);
    const Eigen::Index n = d + m_del + 2 + static_cast<Eigen::Index>(pick() % 20);
    const Matrix x = oracle::random_matrix(n, d, 900 + static_cast<std::uint64_t>(trial));
    const auto model_w = span_model(x, 7000 + static_cast<std::uint64_t>(trial));

    std::vector<graph::NodeId> del;
    for (Eigen::Index i = 0; i < m_del; ++i)
      del.push_back(static_cast<graph::NodeId>((trial * 3 + i * 7) % n));
    UnlearnRequest request;
    request.deleted = NodeSet(del);

    const auto opt1 = projector_unlearn(model_w, x, request);
    const auto full = features::gram_precompute(x, true);
    const auto opt2 = projector_unlearn(model_w, x, request, &full);
    const double denom = std::max(1.0, opt1.weights_after.weights.norm());
    CHECK(gap(opt1.weights_after, opt2.weights_after) / denom < 1e-8);
  }
}

TEST_CASE("projector_unlearn: explicit ridge override applies to both input options") {
  const Matrix x = oracle::random_matrix(30, 5, 321);
  const auto m = span_model(x, 13);
  UnlearnRequest request;
  request.deleted = NodeSet({4, 12, 25});
  request.ridge_eps = 1e-6;

  const auto opt1 = projector_unlearn(m, x, request);
  const auto full = features::gram_precompute(x, true);
  const auto opt2 = projector_unlearn(m, x, request, &full);
  CHECK(gap(opt1.weights_after, opt2.weights_after) /
            std::max(1.0, opt1.weights_after.weights.norm()) <
        1e-10);

  // A heavy ridge visibly damps the projection relative to the default.
  UnlearnRequest heavy = request;
  heavy.ridge_eps = 1e3;
  const auto damped = projector_unlearn(m, x, heavy);
  CHECK(damped.weights_after.weights.norm() < opt1.weights_after.weights.norm());
}

TEST_CASE("projector_unlearn: singular capacitance falls back to direct refactorization") {
  Matrix x = oracle::random_matrix(12, 4, 55);
  x.col(3).setZero();
  x(3, 3) = 10.0;  // rows 3 and 6 alone carry the last coordinate, so
  x(6, 3) = 10.0;  // deleting both exhausts that span direction
  const auto m = span_model(x, 8);
  UnlearnRequest request;
  request.deleted = NodeSet({3, 6});

  const auto full = features::gram_precompute(x, true);
  const auto opt2 = projector_unlearn(m, x, request, &full);
  CHECK(opt2.diagnostics.capacitance_fallback == true);

  const auto opt1 = projector_unlearn(m, x, request);
  CHECK(gap(opt1.weights_after, opt2.weights_after) /
            std::max(1.0, opt1.weights_after.weights.norm()) <
        1e-8);
}

TEST_CASE("projector_unlearn: exactness certificate on an injected channel") {
  const Eigen::Index n = 60;
  Matrix x = oracle::random_matrix(n, 8, 31);
  x.conservativeResize(n, 9);
  x.col(8).setZero();
  const NodeSet deleted({3, 17, 41});
  for (graph::NodeId id : deleted) x(id, 8) = 2.0 + id;  // probe lives on deleted rows only

  const auto m = span_model(x, 77);
  REQUIRE(std::abs(m.weights(0, 8)) > 1e-3);  // probe coordinate starts nonzero
  UnlearnRequest request;
  request.deleted = deleted;
  const auto res = projector_unlearn(m, x, request);
  CHECK(res.weights_after.weights(0, 8) == 0.0);  // exact zero, not merely small

  const auto full = features::gram_precompute(x, true);
  const auto res2 = projector_unlearn(m, x, request, &full);
  CHECK(res2.weights_after.weights(0, 8) == 0.0);
}

TEST_CASE("projector_unlearn: multi-hop block weights are projected per block") {
  const Matrix x = oracle::random_matrix(20, 4, 91);
  model::ModelWeights wide = span_model(x, 5);
  wide.weights.conservativeResize(1, 8);
  const auto second = span_model(x, 6);
  wide.weights.block(0, 4, 1, 4) = second.weights;

  UnlearnRequest request;
  request.deleted = NodeSet({2, 11});
  const auto res = projector_unlearn(wide, x, request);

  model::ModelWeights first = span_model(x, 5);
  const auto res_a = projector_unlearn(first, x, request);
  const auto res_b = projector_unlearn(second, x, request);
  CHECK((res.weights_after.weights.block(0, 0, 1, 4) - res_a.weights_after.weights)
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  CHECK((res.weights_after.weights.block(0, 4, 1, 4) - res_b.weights_after.weights)
            .cwiseAbs()
            .maxCoeff() < 1e-12);

  model::ModelWeights bad = span_model(x, 5);
  bad.weights.conservativeResize(1, 6);  // not a multiple of d = 4
  CHECK_THROWS_AS(projector_unlearn(bad, x, request), IncompatibilityError);
}

TEST_CASE("projector_unlearn: span pre-check reports out-of-span weights") {
  Matrix x = oracle::random_matrix(10, 4, 41);
  x.col(3).setZero();  // feature span misses the e3 direction

  auto inside = span_model(x, 2);
  UnlearnRequest request;
  request.deleted = NodeSet({0});
  const auto ok = projector_unlearn(inside, x, request);
  CHECK(ok.diagnostics.span_precheck_residual < 1e-8);

  auto outside = inside;
  outside.weights(0, 3) = 10.0;
  const auto flagged = projector_unlearn(outside, x, request);
  CHECK(flagged.diagnostics.span_precheck_residual > 1e-4);
}

TEST_CASE("influence_plus_unlearn: empty deletion with zero noise is an exact no-op") {
  auto data = csbm_dataset(default_csbm(30, 11), 2);
  model::TrainConfig config;
  config.lambda = 1e-3;
  config.epochs = 60;
  config.eta = 0.3;
  const auto m = fit(data, config);

  UnlearnRequest request;
  request.strategy = Strategy::influence_plus;
  request.hops_L = 2;
  const auto res = influence_plus_unlearn(m, data, request);
  CHECK(gap(res.weights_after, m) == 0.0);
  CHECK(res.diagnostics.affected_set_size == 0);
}

TEST_CASE("influence_plus_unlearn: update magnitude is bounded by gradient norm over lambda") {
  auto data = csbm_dataset(default_csbm(40, 13), 2);
  model::TrainConfig config;
  config.lambda = 5e-3;
  config.epochs = 120;
  config.eta = 0.3;
  const auto m = fit(data, config);

  UnlearnRequest request;
  request.strategy = Strategy::influence_plus;
  request.hops_L = 2;
  request.deleted = NodeSet({4, 21, 33});
  const auto res = influence_plus_unlearn(m, data, request);

  // Recompute the gradient term the same way the formula defines it.
  const auto p = graph::build_propagation(data.graph, data.mode, data.add_self_loops);
  const Matrix h = graph::propagate(p, data.x, 2);
  const auto affected = graph::affected_set(data.graph, request.deleted, 2);
  std::vector<graph::NodeId> in_train;
  for (graph::NodeId id : affected)
    if (data.train_set.contains(id)) in_train.push_back(id);
  const NodeSet grad_set(in_train);
  REQUIRE(!grad_set.empty());
  const Matrix per_mean = model::loss_and_grad(m, h, data.labels, grad_set, 0.0).gradient;
  const double scale =
      static_cast<double>(grad_set.size()) / static_cast<double>(data.train_set.size());
  const double grad_norm = scale * per_mean.norm();

  CHECK(gap(res.weights_after, m) <= grad_norm / config.lambda * (1.0 + 1e-9));
  CHECK(res.diagnostics.affected_set_size == static_cast<std::int64_t>(affected.size()));
}

TEST_CASE("influence_plus_unlearn: closer to retraining than doing nothing") {
  // Hub-and-leaves graph: the victim (last node) touches only the hub, so
  // its removal barely perturbs anyone else's embedding while its mislabeled
  // outlier loss term drags the optimum noticeably.
  const graph::NodeId n = 30;
  std::vector<std::pair<graph::NodeId, graph::NodeId>> edges;
  for (graph::NodeId i = 1; i < n; ++i) edges.emplace_back(0, i);

  Dataset data;
  data.graph = graph::build_graph(n, edges);
  data.x = Matrix::Zero(n, 2);
  data.labels.assign(static_cast<std::size_t>(n), 1);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0.0, 0.3);
  for (graph::NodeId i = 0; i < n - 1; ++i) {
    const int y = (i % 2 == 0) ? 1 : -1;
    data.labels[static_cast<std::size_t>(i)] = y;
    data.x(i, 0) = y + g(rng);
    data.x(i, 1) = y + g(rng);
  }
  data.labels[static_cast<std::size_t>(n - 1)] = -1;  // mislabeled against its features
  data.x(n - 1, 0) = 3.0;
  data.x(n - 1, 1) = 3.0;
  std::vector<graph::NodeId> all(static_cast<std::size_t>(n));
  for (graph::NodeId i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
  data.train_set = NodeSet(all);
  data.hops = 1;
  data.add_self_loops = true;

  model::TrainConfig config;
  config.lambda = 1e-2;
  config.epochs = 4000;
  config.eta = 0.3;
  const auto m = fit(data, config);

  UnlearnRequest request;
  request.strategy = Strategy::influence_plus;
  request.hops_L = 1;
  request.deleted = NodeSet({n - 1});

  const auto remain = NodeSet::complement(request.deleted, n);
  const auto retrained = retrain_baseline(data, remain, config, m.loss_kind);
  const auto inf = influence_plus_unlearn(m, data, request);

  const double with_update = gap(inf.weights_after, retrained.weights_after);
  const double doing_nothing = gap(m, retrained.weights_after);
  CHECK(with_update < doing_nothing);

  // The corrected mode also accounts for the propagation change.
  UnlearnRequest corrected = request;
  corrected.corrected = true;
  const auto inf_corr = influence_plus_unlearn(m, data, corrected);
  CHECK(gap(inf_corr.weights_after, retrained.weights_after) < doing_nothing);
}

TEST_CASE("influence_plus_unlearn: rejects non-logistic models and bad requests") {
  auto data = csbm_dataset(default_csbm(20, 23), 1);
  model::TrainConfig config;
  config.epochs = 5;
  auto m = fit(data, config, model::LossKind::hinge);
  UnlearnRequest request;
  request.strategy = Strategy::influence_plus;
  request.hops_L = 1;
  request.deleted = NodeSet({0});
  CHECK_THROWS_AS(influence_plus_unlearn(m, data, request), IncompatibilityError);

  auto ok_model = fit(data, config);
  UnlearnRequest bad_hops = request;
  bad_hops.hops_L = 0;
  CHECK_THROWS_AS(influence_plus_unlearn(ok_model, data, bad_hops), UsageError);
  UnlearnRequest bad_noise = request;
  bad_noise.noise_std = -0.5;
  CHECK_THROWS_AS(influence_plus_unlearn(ok_model, data, bad_noise), UsageError);
}

TEST_CASE("influence_plus_unlearn: noise is seeded and optional") {
  auto data = csbm_dataset(default_csbm(24, 29), 1);
  model::TrainConfig config;
  config.lambda = 1e-3;
  config.epochs = 40;
  const auto m = fit(data, config);

  UnlearnRequest request;
  request.strategy = Strategy::influence_plus;
  request.hops_L = 1;
  request.deleted = NodeSet({5});
  request.noise_std = 0.1;
  request.noise_seed = 99;

  const auto a = influence_plus_unlearn(m, data, request);
  const auto b = influence_plus_unlearn(m, data, request);
  CHECK(gap(a.weights_after, b.weights_after) == 0.0);
  CHECK(a.diagnostics.noise_applied);
  CHECK(a.diagnostics.noise_draw_seed == split_seed(99, seed_tag::noise));

  request.noise_seed = 100;
  const auto c = influence_plus_unlearn(m, data, request);
  CHECK(gap(a.weights_after, c.weights_after) > 0.0);
}

TEST_CASE("fisher_plus_unlearn: zero-noise result is the Newton step on the remaining data") {
  auto data = csbm_dataset(default_csbm(32, 37), 2);
  model::TrainConfig config;
  config.lambda = 2e-3;
  config.epochs = 80;
  config.eta = 0.3;
  const auto m = fit(data, config);

  UnlearnRequest request;
  request.strategy = Strategy::fisher_plus;
  request.hops_L = 2;
  request.deleted = NodeSet({3, 18});
  const auto res = fisher_plus_unlearn(m, data, request);

  // Remaining data means the remaining rows of the embeddings the model was
  // trained on; the step does not re-propagate after deletion.
  const auto p = graph::build_propagation(data.graph, data.mode, data.add_self_loops);
  const Matrix h_pre = graph::propagate(p, data.x, 2);
  std::vector<graph::NodeId> remain_ids;
  for (graph::NodeId id : data.train_set)
    if (!request.deleted.contains(id)) remain_ids.push_back(id);
  const NodeSet remain(remain_ids);
  const Matrix g_r = model::loss_and_grad(m, h_pre, data.labels, remain, config.lambda).gradient;
  const Eigen::MatrixXd hess =
      model::hessian(m, h_pre, data.labels, remain, config.lambda, 0);
  const Vector expected =
      m.weights.row(0).transpose() - hess.ldlt().solve(g_r.row(0).transpose());
  CHECK((res.weights_after.weights.row(0).transpose() - expected).norm() < 1e-10);
}

TEST_CASE("fisher_plus_unlearn: weights optimal on the remaining data stay put") {
  auto data = csbm_dataset(default_csbm(26, 41), 1);
  const double lambda = 1e-3;
  const NodeSet deleted({2, 9});

  // Construct the exact optimum over the remaining rows of the training-time
  // embeddings with the independent Newton oracle, then hand it to the
  // engine as the current model.
  const auto p = graph::build_propagation(data.graph, data.mode, data.add_self_loops);
  const Matrix h_pre = graph::propagate(p, data.x, 1);
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> ys;
  for (graph::NodeId id : data.train_set) {
    if (deleted.contains(id)) continue;
    rows.push_back(h_pre.row(id).transpose());
    ys.push_back(static_cast<double>(data.labels[static_cast<std::size_t>(id)]));
  }
  const auto opt = oracle::newton_binary_logistic(rows, ys, lambda);

  model::ModelWeights m = model::zero_model(model::LossKind::logistic, data.x.cols(), data.labels);
  m.weights.row(0) = opt.w.transpose();
  m.provenance.lambda = lambda;

  UnlearnRequest request;
  request.strategy = Strategy::fisher_plus;
  request.hops_L = 1;
  request.deleted = deleted;
  const auto res = fisher_plus_unlearn(m, data, request);
  CHECK(gap(res.weights_after, m) < 1e-7 * std::max(1.0, m.weights.norm()));
}

TEST_CASE("inverse_quarter_root: fourth power reconstructs the inverse") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    const Eigen::Index d = 3 + static_cast<Eigen::Index>(seed % 4);
    const Matrix a = oracle::random_matrix(d + 2, d, 500 + seed);
    const Eigen::MatrixXd spd =
        (a.transpose() * a).eval() + 0.5 * Eigen::MatrixXd::Identity(d, d);
    const Eigen::MatrixXd q = inverse_quarter_root(spd, 1e-9);
    const Eigen::MatrixXd reconstructed = q * q * q * q;
    const Eigen::MatrixXd inv = spd.inverse();
    CHECK((reconstructed - inv).norm() / inv.norm() < 1e-8);
  }
}

TEST_CASE("inverse_quarter_root: clamps small eigenvalues at the floor") {
  Eigen::MatrixXd diag = Eigen::Vector3d(4.0, 1.0, 1e-14).asDiagonal();
  const Eigen::MatrixXd q = inverse_quarter_root(diag, 0.5);
  CHECK(std::abs(q(2, 2) - std::pow(0.5, -0.25)) < 1e-12);
  CHECK(std::abs(q(0, 0) - std::pow(4.0, -0.25)) < 1e-12);

  Eigen::MatrixXd indefinite = Eigen::Vector3d(4.0, 1.0, -0.25).asDiagonal();
  CHECK_THROWS_AS(inverse_quarter_root(indefinite, 0.0), UsageError);
}

TEST_CASE("fisher_plus_unlearn: shaped noise is seeded; lambda = 0 with noise is rejected") {
  auto data = csbm_dataset(default_csbm(24, 43), 1);
  model::TrainConfig config;
  config.lambda = 1e-3;
  config.epochs = 40;
  const auto m = fit(data, config);

  UnlearnRequest request;
  request.strategy = Strategy::fisher_plus;
  request.hops_L = 1;
  request.deleted = NodeSet({5});
  request.noise_std = 0.05;
  request.noise_seed = 7;

  const auto a = fisher_plus_unlearn(m, data, request);
  const auto b = fisher_plus_unlearn(m, data, request);
  CHECK(gap(a.weights_after, b.weights_after) == 0.0);
  CHECK(a.diagnostics.noise_applied);

  UnlearnRequest quiet = request;
  quiet.noise_std = 0.0;
  const auto c = fisher_plus_unlearn(m, data, quiet);
  CHECK(gap(a.weights_after, c.weights_after) > 0.0);

  UnlearnRequest unregularized = request;
  unregularized.lambda_override = 0.0;
  CHECK_THROWS_AS(fisher_plus_unlearn(m, data, unregularized), UsageError);
}

TEST_CASE("retrain_baseline: deterministic; objective on remaining data improves") {
  Dataset data;
  data.graph = graph::build_graph(3, {{0, 1}, {1, 2}, {0, 2}});
  data.x = oracle::random_matrix(3, 2, 61);
  data.labels = {1, -1, 1};
  data.train_set = NodeSet({0, 1, 2});
  data.hops = 1;

  model::TrainConfig config;
  config.lambda = 1e-3;
  config.epochs = 800;
  config.eta = 0.5;
  const auto m = fit(data, config);

  const NodeSet remain({0, 1});
  const auto a = retrain_baseline(data, remain, config, m.loss_kind);
  const auto b = retrain_baseline(data, remain, config, m.loss_kind);
  CHECK(gap(a.weights_after, b.weights_after) == 0.0);

  // Evaluate the post-deletion objective at both weight settings.
  const auto dr = graph::delete_nodes(data.graph, NodeSet({2}));
  Matrix x_r(2, 2);
  x_r.row(0) = data.x.row(0);
  x_r.row(1) = data.x.row(1);
  const auto pu = graph::build_propagation(dr.graph, data.mode, data.add_self_loops);
  const Matrix h_r = graph::propagate(pu, x_r, 1);
  const std::vector<int> labels_r = {1, -1};
  const NodeSet train_r({0, 1});
  const double at_retrained =
      model::loss_and_grad(a.weights_after, h_r, labels_r, train_r, config.lambda).objective;
  const double at_original =
      model::loss_and_grad(m, h_r, labels_r, train_r, config.lambda).objective;
  CHECK(at_retrained <= at_original);
}

TEST_CASE("retrain_baseline: isolated zero-feature node does not flip any decision") {
  auto base = default_csbm(24, 47);
  auto csbm = graph::generate_csbm(base);
  // Rebuild with one extra node that has no edges, a zero feature row, and a
  // label; it contributes nothing to propagation or gradients.
  std::vector<std::pair<graph::NodeId, graph::NodeId>> edges;
  for (graph::NodeId u = 0; u < csbm.graph.num_nodes; ++u)
    for (auto e = csbm.graph.row_ptr[u]; e < csbm.graph.row_ptr[u + 1]; ++e)
      if (u < csbm.graph.col_idx[static_cast<std::size_t>(e)])
        edges.emplace_back(u, csbm.graph.col_idx[static_cast<std::size_t>(e)]);

  Dataset data;
  data.graph = graph::build_graph(25, edges);
  data.x = Matrix::Zero(25, csbm.features.cols());
  data.x.topRows(24) = csbm.features;
  data.labels = csbm.labels;
  data.labels.push_back(1);
  std::vector<graph::NodeId> all(25);
  for (graph::NodeId i = 0; i < 25; ++i) all[static_cast<std::size_t>(i)] = i;
  data.train_set = NodeSet(all);
  data.hops = 2;

  model::TrainConfig config;
  config.lambda = 1e-3;
  config.epochs = 300;
  config.eta = 0.3;
  const auto m = fit(data, config);

  const auto remain = NodeSet::complement(NodeSet({24}), 25);
  const auto retrained = retrain_baseline(data, remain, config, m.loss_kind);

  // Node 24 is last, so the renumbering is the identity on the kept nodes.
  const auto dr = graph::delete_nodes(data.graph, NodeSet({24}));
  const auto pu = graph::build_propagation(dr.graph, data.mode, data.add_self_loops);
  const Matrix h_r = graph::propagate(pu, data.x.topRows(24), 2);
  const Matrix h = dataset_embeddings(data);
  const auto before = model::predict(m, h, remain);
  const auto after = model::predict(retrained.weights_after, h_r, NodeSet::complement(NodeSet{}, 24));
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
}

TEST_CASE("estimate_constants: empty deletion zeroes the deletion-dependent constants") {
  auto data = csbm_dataset(default_csbm(30, 53), 2);
  model::TrainConfig config;
  config.lambda = 1e-3;
  config.eta = 0.25;
  config.epochs = 50;
  const auto m = fit(data, config);

  const auto c = estimate_constants(data, NodeSet{}, m, 4, 5);
  CHECK(c.p_d == 0.0);
  CHECK(c.delta == 0.0);
  CHECK(c.g_est == 0.0);
  CHECK(c.p_s > 0.0);
  CHECK(c.lambda == config.lambda);
  CHECK(c.eta == config.eta);
  CHECK(c.t == config.epochs);
  CHECK(c.num_nodes == 30);
  CHECK(c.deleted_count == 0);
  CHECK(c.b_w == doctest::Approx(m.weights.norm()));
  double max_row = 0.0;
  for (Eigen::Index i = 0; i < data.x.rows(); ++i)
    max_row = std::max(max_row, data.x.row(i).norm());
  CHECK(c.b_x == doctest::Approx(max_row));
}

TEST_CASE("estimate_constants: 3-node path matches the hand-computed dense difference") {
  Dataset data;
  data.graph = graph::build_graph(3, {{0, 1}, {1, 2}});
  data.x = oracle::random_matrix(3, 2, 67);
  data.labels = {1, -1, 1};
  data.train_set = NodeSet({0, 1, 2});
  data.hops = 1;

  auto m = model::zero_model(model::LossKind::logistic, 2, data.labels);
  m.provenance.lambda = 1e-3;
  m.provenance.eta = 0.1;
  m.provenance.epochs = 10;

  const auto c = estimate_constants(data, NodeSet({2}), m, 1, 0);
  // Row operator before: [[0,1,0],[1/2,0,1/2],[0,1,0]]; after deleting node 2
  // (zero-padded): [[0,1,0],[1,0,0],[0,0,0]]. Row differences have norms
  // 0, sqrt(1/2), 1.
  CHECK(c.p_d == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c.p_s == doctest::Approx(1.0).epsilon(1e-12));

  // Same quantity through the dense oracle.
  const auto p_before = oracle::dense_propagation(3, {{0, 1}, {1, 2}}, data.mode, false);
  auto p_after = oracle::dense_propagation(3, {{0, 1}}, data.mode, false);
  p_after.row(2).setZero();
  p_after.col(2).setZero();
  const Eigen::MatrixXd diff = p_before - p_after;
  double oracle_pd = 0.0;
  for (int i = 0; i < 3; ++i) oracle_pd = std::max(oracle_pd, diff.row(i).norm());
  CHECK(c.p_d == doctest::Approx(oracle_pd).epsilon(1e-12));
}

TEST_CASE("estimate_constants: two-hop operator difference matches the dense power oracle") {
  auto data = csbm_dataset(default_csbm(18, 59), 2);
  model::TrainConfig config;
  config.epochs = 20;
  const auto m = fit(data, config);
  const NodeSet deleted({1, 7});

  const auto c = estimate_constants(data, deleted, m, 1, 0);

  std::vector<std::pair<int, int>> edges;
  for (graph::NodeId u = 0; u < data.graph.num_nodes; ++u)
    for (auto e = data.graph.row_ptr[u]; e < data.graph.row_ptr[u + 1]; ++e)
      if (u < data.graph.col_idx[static_cast<std::size_t>(e)])
        edges.emplace_back(u, data.graph.col_idx[static_cast<std::size_t>(e)]);
  std::vector<std::pair<int, int>> kept;
  for (auto [u, v] : edges)
    if (!deleted.contains(u) && !deleted.contains(v)) kept.emplace_back(u, v);

  const auto p2_before =
      oracle::dense_power(oracle::dense_propagation(18, edges, data.mode, false), 2);
  auto p2_after = oracle::dense_power(oracle::dense_propagation(18, kept, data.mode, false), 2);
  for (graph::NodeId id : deleted) {
    p2_after.row(id).setZero();
    p2_after.col(id).setZero();
  }
  double oracle_pd = 0.0;
  double oracle_ps = 0.0;
  const Eigen::MatrixXd diff = p2_before - p2_after;
  for (int i = 0; i < 18; ++i) {
    oracle_pd = std::max(oracle_pd, diff.row(i).norm());
    oracle_ps = std::max({oracle_ps, p2_before.row(i).norm(), p2_after.row(i).norm()});
  }
  CHECK(c.p_d == doctest::Approx(oracle_pd).epsilon(1e-10));
  CHECK(c.p_s == doctest::Approx(oracle_ps).epsilon(1e-10));
}

TEST_CASE("estimate_constants: sample 0 is the actual deletion's gradient gap") {
  auto data = csbm_dataset(default_csbm(26, 61), 1);
  model::TrainConfig config;
  config.lambda = 1e-3;
  config.epochs = 60;
  const auto m = fit(data, config);
  const NodeSet deleted({4, 13});

  const auto c = estimate_constants(data, deleted, m, 1, 12345);

  const Matrix h_pre = dataset_embeddings(data);
  const Matrix g_full =
      model::loss_and_grad(m, h_pre, data.labels, data.train_set, config.lambda).gradient;
  const auto zg = graph::zero_out_nodes(data.graph, deleted);
  const auto pu = graph::build_propagation(zg, data.mode, data.add_self_loops);
  const Matrix h_post = graph::propagate(pu, data.x, 1);
  std::vector<graph::NodeId> remain_ids;
  for (graph::NodeId id : data.train_set)
    if (!deleted.contains(id)) remain_ids.push_back(id);
  const Matrix g_post =
      model::loss_and_grad(m, h_post, data.labels, NodeSet(remain_ids), config.lambda).gradient;
  CHECK(c.g_est == doctest::Approx((g_post - g_full).norm()).epsilon(1e-12));

  // More samples can only increase the max.
  const auto c8 = estimate_constants(data, deleted, m, 8, 12345);
  CHECK(c8.g_est >= c.g_est - 1e-15);
}

TEST_CASE("estimate_constants: rejects oversized graphs and bad arguments") {
  auto data = csbm_dataset(default_csbm(10, 3), 1);
  model::TrainConfig config;
  config.epochs = 1;
  const auto m = fit(data, config);
  CHECK_THROWS_AS(estimate_constants(data, NodeSet({0}), m, 0, 1), UsageError);

  // Dense propagation powers are capped; a consistent 6000-node dataset is
  // rejected before any n x n allocation happens.
  Dataset big;
  big.graph = graph::build_graph(6000, {});
  big.x = Matrix::Ones(6000, 1);
  big.labels.assign(6000, 1);
  big.train_set = NodeSet({0});
  big.hops = 1;
  auto small_model = model::zero_model(model::LossKind::logistic, 1, big.labels);
  CHECK_THROWS_AS(estimate_constants(big, NodeSet({0}), small_model, 1, 1), UsageError);
}

TEST_CASE("weight_gap_bound: closed forms and loop oracle") {
  BoundConstants c;
  c.t = 1000;
  c.eta = 0.1;
  c.lambda = 1e-3;
  c.b_x = 2.0;
  c.p_s = 1.0;
  CHECK(weight_gap_bound(c) == 0.0);  // p_d = delta = g_est = 0

  c.p_d = 0.3;
  c.g_est = 0.7;
  c.delta = 0.05;
  c.b_w = 1.5;
  c.deleted_count = 4;
  c.t = 1;
  const double q = c.eta * ((1.0 + c.b_x * c.b_w * c.p_s) * c.b_x * c.p_d + c.g_est);
  CHECK(weight_gap_bound(c) ==
        doctest::Approx(q + c.delta * c.eta * 1.0 * 4.0).epsilon(1e-12));

  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  for (int trial = 0; trial < 10; ++trial) {
    BoundConstants r;
    r.b_x = u(rng);
    r.b_w = u(rng);
    r.p_s = u(rng);
    r.p_d = u(rng);
    r.g_est = u(rng);
    r.delta = u(rng);
    r.lambda = 0.1 * u(rng);
    r.eta = 0.2 * u(rng);
    r.t = 1 + static_cast<std::int64_t>(rng() % 50);
    r.deleted_count = 1 + static_cast<std::int64_t>(rng() % 10);

    const double s = r.lambda + r.b_x * r.b_x * r.p_s * r.p_s;
    const double rq = r.eta * ((1.0 + r.b_x * r.b_w * r.p_s) * r.b_x * r.p_d + r.g_est);
    double sum = 0.0;
    double pow_term = 1.0;
    for (std::int64_t k = 0; k < r.t; ++k) {
      sum += pow_term;
      pow_term *= 1.0 + r.eta * s;
    }
    const double expected =
        rq * sum + r.delta * r.eta * static_cast<double>(r.t) *
                       static_cast<double>(r.deleted_count);
    CHECK(weight_gap_bound(r) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("weight_gap_bound: overflow saturates to +infinity") {
  BoundConstants c;
  c.b_x = 10.0;
  c.p_s = 10.0;
  c.p_d = 1.0;
  c.b_w = 1.0;
  c.eta = 1.0;
  c.lambda = 0.1;
  c.t = 1000000;
  c.deleted_count = 1;
  CHECK(std::isinf(weight_gap_bound(c)));
  CHECK(weight_gap_bound(c) > 0.0);
}

TEST_CASE("delta_condition: trivial cases, limit, and recomputation") {
  BoundConstants c;
  c.lambda = 1e-3;
  c.eta = 0.1;
  c.t = 100;
  c.b_x = 2.0;
  c.num_nodes = 500;
  c.deleted_count = 5;
  c.delta = 0.0;
  CHECK(delta_condition(c).holds);

  c.lambda = 1e9;
  c.t = 1000000;
  c.eta = 1.0;
  const auto limit = delta_condition(c);
  CHECK(limit.threshold ==
        doctest::Approx(c.b_x * 500.0 / 5.0).epsilon(1e-9));

  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  for (int trial = 0; trial < 8; ++trial) {
    BoundConstants r;
    r.lambda = u(rng);
    r.eta = u(rng);
    r.t = 1 + static_cast<std::int64_t>(rng() % 200);
    r.b_x = u(rng);
    r.num_nodes = 10 + static_cast<std::int64_t>(rng() % 1000);
    r.deleted_count = 1 + static_cast<std::int64_t>(rng() % 9);
    r.delta = u(rng);
    const auto out = delta_condition(r);
    const double expected = (1.0 / (r.lambda * r.eta * static_cast<double>(r.t)) + 1.0) *
                            r.b_x * static_cast<double>(r.num_nodes) /
                            static_cast<double>(r.deleted_count);
    CHECK(out.threshold == doctest::Approx(expected).epsilon(1e-12));
    CHECK(out.holds == (r.delta < expected));
  }

  BoundConstants bad = c;
  bad.deleted_count = 0;
  CHECK_THROWS_AS(delta_condition(bad), UsageError);
  bad = c;
  bad.lambda = 0.0;
  CHECK_THROWS_AS(delta_condition(bad), UsageError);
}

TEST_CASE("run_unlearn: strategies dispatch; empty deletion is a no-op for all engines") {
  auto data = csbm_dataset(default_csbm(30, 71), 2);
  model::TrainConfig config;
  config.lambda = 1e-3;
  config.epochs = 60;
  config.eta = 0.3;
  const auto m = fit(data, config);

  for (auto s : {Strategy::projector, Strategy::influence_plus, Strategy::fisher_plus}) {
    UnlearnRequest request;
    request.strategy = s;
    request.hops_L = 2;
    const auto res = run_unlearn(m, data, request);
    CHECK(res.strategy == s);
    CHECK(gap(res.weights_after, m) < 1e-10);
    CHECK(res.diagnostics.affected_set_size == 0);
  }
}

TEST_CASE("run_unlearn: request validation") {
  auto data = csbm_dataset(default_csbm(20, 73), 2);
  data.test_set = NodeSet({19});
  data.train_set = NodeSet::complement(data.test_set, 20);
  model::TrainConfig config;
  config.epochs = 20;
  const auto m = fit(data, config);

  UnlearnRequest request;
  request.hops_L = 1;  // dataset was built with hops = 2
  request.deleted = NodeSet({0});
  CHECK_THROWS_AS(run_unlearn(m, data, request), UsageError);

  request.hops_L = 2;
  request.deleted = NodeSet({19});  // test node, not trainable
  CHECK_THROWS_AS(run_unlearn(m, data, request), UsageError);

  request.deleted = NodeSet({0});
  request.probe_channel = 99;
  CHECK_THROWS_AS(run_unlearn(m, data, request), UsageError);
}

TEST_CASE("run_unlearn: finetune steps apply after the engine") {
  auto data = csbm_dataset(default_csbm(28, 79), 1);
  model::TrainConfig config;
  config.lambda = 1e-3;
  config.epochs = 60;
  config.eta = 0.3;
  const auto m = fit(data, config);

  UnlearnRequest request;
  request.strategy = Strategy::projector;
  request.hops_L = 1;
  request.deleted = NodeSet({3, 11});

  const auto plain = run_unlearn(m, data, request);
  UnlearnRequest tuned_request = request;
  tuned_request.finetune_K = 5;
  const auto tuned = run_unlearn(m, data, tuned_request);
  CHECK(gap(plain.weights_after, tuned.weights_after) > 0.0);

  const auto zg = graph::zero_out_nodes(data.graph, request.deleted);
  const auto pu = graph::build_propagation(zg, data.mode, data.add_self_loops);
  const Matrix h_post = graph::propagate(pu, data.x, 1);
  std::vector<graph::NodeId> remain_ids;
  for (graph::NodeId id : data.train_set)
    if (!request.deleted.contains(id)) remain_ids.push_back(id);
  const auto expected =
      model::finetune(plain.weights_after, h_post, data.labels, NodeSet(remain_ids), 5);
  CHECK(gap(tuned.weights_after, expected) == 0.0);
}

TEST_CASE("run_unlearn: probe channel diagnostics separate exact from approximate") {
  auto base = default_csbm(40, 83);
  auto data = csbm_dataset(base, 1);
  const NodeSet deleted({2, 17, 29});
  // Inject a probe column that is nonzero only on the deleted rows.
  data.x.conservativeResize(40, data.x.cols() + 1);
  data.x.col(data.x.cols() - 1).setZero();
  for (graph::NodeId id : deleted) data.x(id, data.x.cols() - 1) = 3.0;

  model::TrainConfig config;
  config.lambda = 1e-3;
  config.epochs = 80;
  config.eta = 0.3;
  const auto m = fit(data, config);

  UnlearnRequest request;
  request.hops_L = 1;
  request.deleted = deleted;
  request.probe_channel = data.x.cols() - 1;

  request.strategy = Strategy::projector;
  const auto exact = run_unlearn(m, data, request);
  CHECK(exact.diagnostics.injected_channel_norm == 0.0);

  request.strategy = Strategy::influence_plus;
  const auto approx = run_unlearn(m, data, request);
  CHECK(approx.diagnostics.injected_channel_norm >= 0.0);
  CHECK(approx.diagnostics.affected_set_size > 0);
}

TEST_CASE("run_unlearn: retrain strategy matches retrain_baseline with the model's provenance") {
  auto data = csbm_dataset(default_csbm(24, 89), 2);
  model::TrainConfig config;
  config.lambda = 2e-3;
  config.epochs = 70;
  config.eta = 0.25;
  config.seed = 5;
  const auto m = fit(data, config);

  UnlearnRequest request;
  request.strategy = Strategy::retrain;
  request.hops_L = 2;
  request.deleted = NodeSet({1, 9});
  const auto via_run = run_unlearn(m, data, request);
  const auto direct = retrain_baseline(data, NodeSet::complement(request.deleted, 24), config,
                                       m.loss_kind);
  CHECK(gap(via_run.weights_after, direct.weights_after) == 0.0);
}

TEST_CASE("bound soundness: retrain-vs-projector gap stays under the analytic ceiling") {
  for (std::uint64_t seed : {101u, 202u}) {
    auto data = csbm_dataset(default_csbm(120, seed, 1.5, 0.5), 2);
    model::TrainConfig config;
    config.lambda = 1e-3;
    config.epochs = 150;
    config.eta = 0.1;
    const auto m = fit(data, config);

    UnlearnRequest request;
    request.hops_L = 2;
    request.deleted = NodeSet({5, 31, 77});

    const auto projected = run_unlearn(m, data, request);
    request.strategy = Strategy::retrain;
    const auto retrained = run_unlearn(m, data, request);

    const auto c = estimate_constants(data, request.deleted, m, 4, seed);
    const double bound = weight_gap_bound(c);
    const double observed = gap(retrained.weights_after, projected.weights_after);
    CHECK(observed <= bound);
  }
}

TEST_CASE("ordering under the delta condition: projector at least as close as Newton baselines") {
  std::vector<double> proj_gaps, inf_gaps, fish_gaps;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto data = csbm_dataset(default_csbm(200, 300 + seed, 1.5, 0.5), 2);
    model::TrainConfig config;
    config.lambda = 1e-4;
    config.epochs = 100;
    config.eta = 0.1;
    const auto m = fit(data, config);

    UnlearnRequest request;
    request.hops_L = 2;
    request.deleted = NodeSet({3, 57});

    const auto c = estimate_constants(data, request.deleted, m, 1, seed);
    REQUIRE(delta_condition(c).holds);

    request.strategy = Strategy::retrain;
    const auto truth = run_unlearn(m, data, request);
    request.strategy = Strategy::projector;
    proj_gaps.push_back(gap(run_unlearn(m, data, request).weights_after, truth.weights_after));
    request.strategy = Strategy::influence_plus;
    inf_gaps.push_back(gap(run_unlearn(m, data, request).weights_after, truth.weights_after));
    request.strategy = Strategy::fisher_plus;
    fish_gaps.push_back(gap(run_unlearn(m, data, request).weights_after, truth.weights_after));
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  CHECK(median(proj_gaps) <= median(inf_gaps));
  CHECK(median(proj_gaps) <= median(fish_gaps));
}
