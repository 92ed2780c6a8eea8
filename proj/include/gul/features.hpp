#pragma once

#include "gul/common.hpp"
#include "gul/graph.hpp"

#include <optional>

namespace gul::features {

/// Feature matrices are gul::Matrix (dense row-major float64), rows = nodes.
/// Throws if any entry is non-finite.
void validate_features(const Matrix& x, const char* what = "feature matrix");

struct CachedInverse {
  Eigen::MatrixXd inverse;  // (G + ridge_eps I)^{-1}
  double ridge_eps = 0.0;
};

/// G = X^T X plus bookkeeping. Immutable by convention: downdates return a
/// new state, so one precomputed GramState can serve concurrent requests.
struct GramState {
  Eigen::MatrixXd gram;        // d x d, symmetric PSD
  std::int64_t source_rows = 0;
  std::optional<CachedInverse> cached;

  Eigen::Index dim() const { return gram.rows(); }
};

/// Default ridge used to realize the pseudo-inverse as a ridge limit:
/// 1e-8 * trace(G) / d (scale-aware, vanishes relative to G's spectrum).
double default_ridge(const Eigen::MatrixXd& gram);

/// Same rule from a precomputed trace (trace(X^T X) == ||X||_F^2), for
/// callers that have not formed the Gram.
double default_ridge(double trace, Eigen::Index dim);

/// One-pass Gram accumulation, symmetrized to guard later factorizations.
/// with_inverse also caches (G + ridge_eps I)^{-1} for Woodbury downdates;
/// ridge_eps <= 0 selects the default ridge.
GramState gram_precompute(const Matrix& x, bool with_inverse = false, double ridge_eps = -1.0);

enum class DowndateStrategy { woodbury, direct };

/// Raised when the rank-m capacitance system is singular beyond tolerance:
/// the deleted rows exhaust a span direction and the cached inverse cannot
/// be downdated. Callers fall back to the direct strategy with a fresh ridge.
struct CapacitanceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DowndateResult {
  GramState state;
  /// Set when woodbury was requested without a cached inverse and the call
  /// transparently recomputed directly instead.
  bool used_fallback = false;
};

/// New state representing G - X_delete^T X_delete. The woodbury path updates
/// the cached inverse through the m x m capacitance system in
/// O(max{m^3, m d^2}); the direct path refactorizes the downdated Gram.
/// Precondition: the deleted rows were previously accumulated into `gram`.
DowndateResult gram_downdate(const GramState& gram, const Matrix& x_delete,
                             DowndateStrategy strategy);

/// (G + ridge_eps I)^{-1} rhs via SPD factorization; the ridge limit of
/// G^+ rhs as ridge_eps -> 0. Uses the cached inverse when its ridge matches.
Vector pinv_solve(const GramState& gram, const Vector& rhs, double ridge_eps = -1.0);

struct ProjectionResult {
  Vector alpha;                    // length r, one coefficient per remaining row
  Vector weights;                  // w_p = X_remain^T alpha
  double orthogonality_residual;   // ||X_remain (w - w_p)||_2
  double elapsed_seconds;
};

/// Euclidean-nearest point of span{rows of x_remain} to w, realized as
/// alpha = X_remain * pinv_solve(gram_remain, w), w_p = X_remain^T alpha,
/// with one iterative-refinement pass folded into alpha so the r
/// orthogonality conditions hold well below the ridge floor.
/// gram_remain must correspond to x_remain. Empty x_remain is an error.
ProjectionResult project_onto_span(const Vector& w, const Matrix& x_remain,
                                   const GramState& gram_remain, double ridge_eps = -1.0);

enum class DeltaMode { leave_one_out_all, against_set };

/// Worst-case distance of a feature row to the span of the others.
/// leave_one_out_all: max over all rows i of the residual of x_i against the
/// remaining n-1 rows, via per-node rank-1 Gram downdates. against_set: max
/// over rows in `deleted` of the residual against the non-deleted rows.
double delta_measure(const Matrix& x, DeltaMode mode,
                     const graph::NodeSet& deleted = graph::NodeSet{},
                     double ridge_eps = -1.0);

/// ||v - projection of v onto span{rows of x}||_2.
double span_residual(const Vector& v, const Matrix& x, double ridge_eps = -1.0);

/// Optional preprocessing: adds iid N(0, noise_std^2) to every entry so that
/// deleted features are almost surely outside span{remaining features}.
/// noise_std = 0 returns x unchanged.
Matrix add_feature_jitter(const Matrix& x, double noise_std, std::uint64_t seed);

}  // namespace gul::features
