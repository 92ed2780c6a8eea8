#pragma once

#include "gul/common.hpp"
#include "gul/dataset.hpp"
#include "gul/features.hpp"
#include "gul/graph.hpp"
#include "gul/linear_model.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace gul::unlearn {

enum class Strategy { projector, influence_plus, fisher_plus, retrain };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

/// One deletion request. hops_L is both the propagation depth the model was
/// trained with and the radius of the affected set; run_unlearn checks it
/// against the dataset. noise_std / noise_seed only drive the approximate
/// strategies; lambda_override substitutes the model's regularizer for this
/// request (the Newton engines and retraining honor it).
struct UnlearnRequest {
  graph::NodeSet deleted;
  int hops_L = 2;
  Strategy strategy = Strategy::projector;
  double noise_std = 0.0;
  int finetune_K = 0;
  std::optional<double> lambda_override;
  std::uint64_t noise_seed = 0;
  /// Feature column watched by the diagnostics (injected probe); -1 disables.
  Eigen::Index probe_channel = -1;
  /// influence_plus only: replace the one-sided gradient term with the
  /// two-graph difference grad(pre-deletion) - grad(post-deletion), which
  /// also accounts for the propagation change caused by the deletion.
  bool corrected = false;
  /// Projector ridge override; <= 0 keeps the default (the precomputed
  /// state's ridge when one is supplied, else the trace rule). An override
  /// that differs from a cached inverse's ridge forfeits the cached fast
  /// path but stays correct.
  double ridge_eps = -1.0;
};

/// Doubles default to -1 meaning "not computed by this strategy".
struct UnlearnDiagnostics {
  /// Projector: max over weight rows of ||X_remain (w - w_p)|| after the
  /// projection (the span orthogonality conditions).
  double orthogonality_residual = -1.0;
  /// Projector: max over weight rows of the input row's residual against
  /// span{all feature rows}, relative to the row norm. Rows are expected to
  /// start inside the span; larger values are logged at info level.
  double span_precheck_residual = -1.0;
  /// ||column probe_channel of the final weights|| when a probe is set.
  double injected_channel_norm = -1.0;
  std::int64_t affected_set_size = -1;
  std::uint64_t noise_draw_seed = 0;
  bool noise_applied = false;
  bool used_gram_downdate = false;    // projector took the precomputed-Gram path
  bool capacitance_fallback = false;  // downdate fell back to refactorization
};

struct UnlearnResult {
  model::ModelWeights weights_after;
  Strategy strategy = Strategy::projector;
  double elapsed_seconds = 0.0;
  UnlearnDiagnostics diagnostics;
};

/// Exact unlearning: every weight row is replaced by its orthogonal
/// projection onto span{x_i : i not deleted}. Without `precomputed` the
/// remaining Gram is built directly from the remaining rows (option 1); with
/// it, the supplied full-feature GramState is downdated by the deleted rows
/// via the rank-m Woodbury identity (option 2), falling back to direct
/// refactorization on a singular capacitance (recorded in diagnostics).
/// Both paths use the same ridge (the precomputed state's, or the full
/// feature matrix's default) and agree to 1e-8 relative.
///
/// Models whose dimension is a multiple of x.cols() (concatenated multi-hop
/// blocks) are projected block-by-block against the same remaining rows.
/// Deleting every row is an error; an empty deletion returns the model
/// unchanged.
UnlearnResult projector_unlearn(const model::ModelWeights& model, const Matrix& x,
                                const UnlearnRequest& request,
                                const features::GramState* precomputed = nullptr);

/// Approximate unlearning, one Newton-style update per class on the
/// pre-deletion embeddings: the affected set within hops_L of the deleted
/// nodes supplies the gradient term (per-sample loss gradients, averaged
/// over the full training set), the unaffected training nodes supply the
/// Hessian, and the update direction moves the weights toward the optimum of
/// the remaining data. Logistic-family losses only. Optional isotropic
/// Gaussian noise of scale noise_std is added to the result (seeded).
UnlearnResult influence_plus_unlearn(const model::ModelWeights& model, const Dataset& data,
                                     const UnlearnRequest& request);

/// Approximate unlearning, one Newton step on the post-deletion pipeline:
/// edges incident to deleted nodes are dropped, embeddings recomputed, and
/// the remaining training nodes supply both the (regularized) gradient and
/// the Hessian. Noise enters as H^{-1/4} b with b ~ N(0, noise_std^2 I),
/// eigenvalues clamped below at lambda/2. Logistic-family losses only.
UnlearnResult fisher_plus_unlearn(const model::ModelWeights& model, const Dataset& data,
                                  const UnlearnRequest& request);

/// Ground truth: delete the nodes, rebuild propagation on the induced
/// subgraph, and retrain from the zero init with the given config (seed and
/// schedule identical to the original run when config comes from its
/// provenance). Class count is taken from the full label vector so the
/// retrained weights stay shape-compatible.
UnlearnResult retrain_baseline(const Dataset& data, const graph::NodeSet& remain_nodes,
                               const model::TrainConfig& config, model::LossKind kind);

/// spd^{-1/4} via symmetric eigendecomposition, eigenvalues clamped below at
/// eigenvalue_floor first. (spd^{-1/4})^4 reconstructs spd^{-1} when no
/// eigenvalue is clamped.
Eigen::MatrixXd inverse_quarter_root(const Eigen::MatrixXd& spd, double eigenvalue_floor);

/// Measured inputs for the analytic checkers. All magnitudes are >= 0;
/// lambda/eta/t come from the model's provenance.
struct BoundConstants {
  double b_x = 0.0;     // max feature row norm
  double b_w = 0.0;     // weight norm
  double p_s = 0.0;     // max row norm of P^L over both graphs
  double p_d = 0.0;     // max row norm of P^L - P_u^L (deleted rows zero-padded)
  double g_est = 0.0;   // max observed gradient gap over sampled deletions
  double delta = 0.0;   // worst deleted-row distance to the remaining span
  double lambda = 0.0;
  double eta = 0.0;
  std::int64_t t = 0;
  std::int64_t deleted_count = 0;
  std::int64_t num_nodes = 0;
};

/// Measures BoundConstants on a concrete deletion. Dense L-th powers of both
/// propagation operators are formed, so the graph is capped at 5000 nodes.
/// g_est is a Monte-Carlo max of the gradient-gap norm over sample_count
/// deletion sets of the same size: sample 0 is the actual deletion, the rest
/// are drawn uniformly from the training set (seeded).
BoundConstants estimate_constants(const Dataset& data, const graph::NodeSet& deleted,
                                  const model::ModelWeights& model, int sample_count,
                                  std::uint64_t seed);

/// Analytic ceiling on ||w_retrained - w_projected|| after t training steps:
///   Q * sum_{k=1..t} (1 + eta s)^{k-1} + delta * eta * t * deleted_count,
/// with s = lambda + b_x^2 p_s^2 and Q = eta ((1 + b_x b_w p_s) b_x p_d +
/// g_est). The geometric sum is evaluated in log space and overflows to
/// +infinity rather than wrapping.
double weight_gap_bound(const BoundConstants& c);

struct DeltaCondition {
  bool holds = false;
  double threshold = 0.0;
};

/// Sufficient condition for the projection to beat the do-nothing baseline:
/// delta < ((lambda eta t)^{-1} + 1) * b_x * num_nodes / deleted_count.
/// Requires deleted_count >= 1 and lambda, eta, t > 0.
DeltaCondition delta_condition(const BoundConstants& c);

/// Strategy dispatch plus the cross-cutting steps: validates the request
/// against the dataset (hops match, deleted nodes inside the training set),
/// runs the engine, applies finetune_K full-batch steps on the remaining
/// training nodes (post-deletion embeddings), and fills the affected-set and
/// probe-channel diagnostics.
UnlearnResult run_unlearn(const model::ModelWeights& model, const Dataset& data,
                          const UnlearnRequest& request,
                          const features::GramState* precomputed = nullptr);

}  // namespace gul::unlearn
