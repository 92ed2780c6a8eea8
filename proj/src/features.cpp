#include "gul/features.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <chrono>
#include <cmath>
#include <string>

namespace gul::features {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

/// SPD solve with LLT, falling back to LDLT for semi-definite inputs where
/// the Cholesky pivot underflows.
class SpdSolver {
 public:
  explicit SpdSolver(const Eigen::MatrixXd& m) : llt_(m) {
    if (llt_.info() != Eigen::Success) {
      ldlt_.emplace(m);
      if (ldlt_->info() != Eigen::Success)
        throw std::runtime_error("symmetric factorization failed; matrix severely indefinite");
    }
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    if (ldlt_) return ldlt_->solve(rhs);
    return llt_.solve(rhs);
  }

  Eigen::MatrixXd solve_matrix(const Eigen::MatrixXd& rhs) const {
    if (ldlt_) return ldlt_->solve(rhs);
    return llt_.solve(rhs);
  }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
  std::optional<Eigen::LDLT<Eigen::MatrixXd>> ldlt_;
};

Eigen::MatrixXd ridged(const Eigen::MatrixXd& gram, double eps) {
  Eigen::MatrixXd m = gram;
  m.diagonal().array() += eps;
  return m;
}

double resolve_ridge(const Eigen::MatrixXd& gram, double ridge_eps) {
  return ridge_eps > 0.0 ? ridge_eps : default_ridge(gram);
}

}  // namespace

void validate_features(const Matrix& x, const char* what) {
  if (!x.allFinite())
    throw UsageError(std::string(what) + " contains non-finite entries");
}

double default_ridge(double trace, Eigen::Index dim) {
  const double base = trace > 0.0 && dim > 0 ? trace / static_cast<double>(dim) : 1.0;
  return 1e-8 * base;
}

double default_ridge(const Eigen::MatrixXd& gram) {
  return default_ridge(gram.trace(), gram.rows());
}

GramState gram_precompute(const Matrix& x, bool with_inverse, double ridge_eps) {
  if (x.rows() == 0 || x.cols() == 0) throw UsageError("gram_precompute: empty feature matrix");
  validate_features(x);
  GramState state;
  state.gram = (x.transpose() * x).eval();
  state.gram = (0.5 * (state.gram + state.gram.transpose())).eval();
  state.source_rows = x.rows();
  if (with_inverse) {
    const double eps = resolve_ridge(state.gram, ridge_eps);
    SpdSolver solver(ridged(state.gram, eps));
    state.cached = CachedInverse{
        solver.solve_matrix(Eigen::MatrixXd::Identity(state.dim(), state.dim())), eps};
  }
  return state;
}

DowndateResult gram_downdate(const GramState& gram, const Matrix& x_delete,
                             DowndateStrategy strategy) {
  if (x_delete.rows() > 0 && x_delete.cols() != gram.dim())
    throw IncompatibilityError("gram_downdate: deleted rows have dimension " +
                               std::to_string(x_delete.cols()) + ", gram has " +
                               std::to_string(gram.dim()));
  if (x_delete.rows() > gram.source_rows)
    throw UsageError("gram_downdate: deleting more rows than were accumulated");

  DowndateResult res;
  res.state.gram = gram.gram;
  res.state.source_rows = gram.source_rows - x_delete.rows();
  if (x_delete.rows() == 0) {
    res.state.cached = gram.cached;
    return res;
  }

  res.state.gram -= (x_delete.transpose() * x_delete).eval();
  res.state.gram = (0.5 * (res.state.gram + res.state.gram.transpose())).eval();

  const bool want_woodbury = strategy == DowndateStrategy::woodbury;
  if (want_woodbury && gram.cached) {
    const Eigen::MatrixXd& m = gram.cached->inverse;
    const Eigen::Index mdel = x_delete.rows();
    // (A - U U^T)^{-1} = M + M U (I - U^T M U)^{-1} U^T M with A = G + eps I,
    // U = X_delete^T, M = A^{-1}.
    Eigen::MatrixXd mu = m * x_delete.transpose();                       // d x m
    Eigen::MatrixXd cap = Eigen::MatrixXd::Identity(mdel, mdel) - x_delete * mu;
    Eigen::LDLT<Eigen::MatrixXd> cap_ldlt(cap);
    // Conservative: near-singular capacitance loses the 1e-8 agreement with
    // the direct path, so such downdates are rejected rather than degraded.
    const double pivot_floor = 1e-8 * std::max(1.0, cap.cwiseAbs().maxCoeff());
    if (cap_ldlt.info() != Eigen::Success ||
        cap_ldlt.vectorD().cwiseAbs().minCoeff() < pivot_floor)
      throw CapacitanceError(
          "gram_downdate: capacitance matrix singular; deleted rows exhaust a span direction");
    Eigen::MatrixXd updated = m + mu * cap_ldlt.solve(mu.transpose());
    updated = (0.5 * (updated + updated.transpose())).eval();
    res.state.cached = CachedInverse{std::move(updated), gram.cached->ridge_eps};
    return res;
  }

  if (want_woodbury) res.used_fallback = true;  // no cached inverse available
  if (gram.cached || want_woodbury) {
    const double eps = gram.cached ? gram.cached->ridge_eps : default_ridge(res.state.gram);
    SpdSolver solver(ridged(res.state.gram, eps));
    res.state.cached = CachedInverse{
        solver.solve_matrix(Eigen::MatrixXd::Identity(gram.dim(), gram.dim())), eps};
  }
  return res;
}

Vector pinv_solve(const GramState& gram, const Vector& rhs, double ridge_eps) {
  if (rhs.size() != gram.dim())
    throw IncompatibilityError("pinv_solve: rhs dimension " + std::to_string(rhs.size()) +
                               " does not match gram dimension " + std::to_string(gram.dim()));
  const double eps = resolve_ridge(gram.gram, ridge_eps);
  if (gram.cached && gram.cached->ridge_eps == eps) return gram.cached->inverse * rhs;
  SpdSolver solver(ridged(gram.gram, eps));
  return solver.solve(rhs);
}

ProjectionResult project_onto_span(const Vector& w, const Matrix& x_remain,
                                   const GramState& gram_remain, double ridge_eps) {
  const auto start = Clock::now();
  if (x_remain.rows() == 0)
    throw EmptyRemainingError("project_onto_span: no remaining rows to span the projection");
  if (x_remain.cols() != w.size() || gram_remain.dim() != w.size())
    throw IncompatibilityError("project_onto_span: dimension mismatch between w, rows, and gram");

  ProjectionResult res;
  if (x_remain.rows() < x_remain.cols()) {
    // Fewer rows than dimensions: the column Gram is singular and its ridge
    // floor amplifies roundoff. The row Gram K = X X^T carries the same
    // nonzero spectrum (trace too, so the default ridge scale matches) and
    // yields the identical projection via alpha = (K + eps I)^{-1} X w.
    Eigen::MatrixXd k = (x_remain * x_remain.transpose()).eval();
    k = (0.5 * (k + k.transpose())).eval();
    const double eps = resolve_ridge(k, ridge_eps);
    SpdSolver solver(ridged(k, eps));
    res.alpha = solver.solve(x_remain * w);
    res.weights = x_remain.transpose() * res.alpha;
    for (int pass = 0; pass < 2; ++pass) {
      res.alpha += solver.solve(x_remain * (w - res.weights));
      res.weights = x_remain.transpose() * res.alpha;
    }
  } else {
    const double eps = resolve_ridge(gram_remain.gram, ridge_eps);
    // A cached inverse at the same ridge (e.g. a Woodbury-downdated state)
    // turns both solves into plain matrix-vector products.
    const bool use_cache = gram_remain.cached && gram_remain.cached->ridge_eps == eps;
    std::optional<SpdSolver> solver;
    if (!use_cache) solver.emplace(ridged(gram_remain.gram, eps));
    auto solve = [&](const Vector& rhs) -> Vector {
      return use_cache ? Vector(gram_remain.cached->inverse * rhs) : solver->solve(rhs);
    };
    Vector v = solve(w);
    res.alpha = x_remain * v;
    res.weights = x_remain.transpose() * res.alpha;
    // Refinement passes: re-project the ridge-induced remainder, shrinking the
    // orthogonality and idempotence errors by eps/sigma_min^2 each pass
    // without needing a smaller eps. Two passes keep ill-conditioned
    // near-square instances comfortably below the certificate tolerances.
    for (int pass = 0; pass < 2; ++pass) {
      Vector v2 = solve(w - res.weights);
      res.alpha += x_remain * v2;
      res.weights = x_remain.transpose() * res.alpha;
    }
  }

  res.orthogonality_residual = (x_remain * (w - res.weights)).norm();
  res.elapsed_seconds = seconds_since(start);
  return res;
}

namespace {

/// Orthogonal residual of v against the row span of m, through a thin SVD with
/// Eigen's default rank threshold. Used where the Gram route cannot certify
/// oracle-grade accuracy (it squares the condition number).
double svd_row_residual(const Matrix& m, const Vector& v) {
  Eigen::BDCSVD<Matrix> svd(m.transpose(), Eigen::ComputeThinU);
  const Eigen::Index rank = svd.rank();
  if (rank == 0) return v.norm();
  const auto basis = svd.matrixU().leftCols(rank);
  return (v - basis * (basis.transpose() * v)).norm();
}

double loo_row_residual(const Matrix& x, Eigen::Index i) {
  Matrix others(x.rows() - 1, x.cols());
  Eigen::Index r = 0;
  for (Eigen::Index j = 0; j < x.rows(); ++j)
    if (j != i) others.row(r++) = x.row(j);
  return svd_row_residual(others, x.row(i).transpose());
}

}  // namespace

double delta_measure(const Matrix& x, DeltaMode mode, const graph::NodeSet& deleted,
                     double ridge_eps) {
  validate_features(x);
  if (mode == DeltaMode::leave_one_out_all) {
    if (x.rows() < 2) throw UsageError("delta_measure: leave-one-out needs at least 2 rows");
    double worst = 0.0;
    if (x.rows() <= x.cols()) {
      // Wide: every leave-one-out remainder is rank deficient and every
      // residual is potentially nonzero; project each row directly.
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        worst = std::max(worst, loo_row_residual(x, i));
      return worst;
    }
    // Tall with full column rank: removing row i changes the span only when
    // its leverage ||q_i||^2 is exactly 1, so rows below the leverage gate
    // contribute a residual of exactly zero and need no solve at all. The
    // few gated rows (and every row when x itself is rank deficient, where
    // leverages are unreliable) are projected directly.
    constexpr double kLeverageGate = 1.0 - 1e-6;
    constexpr double kRankGap = 1e-10;  // relative pivot floor for full rank
    Eigen::ColPivHouseholderQR<Matrix> qr(x);
    const auto& rdiag = qr.matrixR().diagonal();
    const bool full_rank =
        std::abs(rdiag(x.cols() - 1)) > kRankGap * std::abs(rdiag(0));
    Matrix thin_q;
    if (full_rank)
      thin_q = qr.householderQ() * Matrix::Identity(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (!full_rank || thin_q.row(i).squaredNorm() > kLeverageGate)
        worst = std::max(worst, loo_row_residual(x, i));
    return worst;
  }

  // against_set: residual of each deleted row against the non-deleted rows.
  if (deleted.empty()) return 0.0;
  for (graph::NodeId v : deleted) {
    if (v >= x.rows())
      throw UsageError("delta_measure: deleted id " + std::to_string(v) + " out of range");
  }
  const auto remain = graph::NodeSet::complement(deleted, static_cast<graph::NodeId>(x.rows()));
  if (remain.empty()) throw EmptyRemainingError("delta_measure: remaining set empty");
  Matrix x_remain(remain.size(), x.cols());
  Eigen::Index r = 0;
  for (graph::NodeId v : remain) x_remain.row(r++) = x.row(v);
  GramState gram = gram_precompute(x_remain, false);
  double worst = 0.0;
  for (graph::NodeId v : deleted) {
    const Vector xv = x.row(v).transpose();
    auto proj = project_onto_span(xv, x_remain, gram, ridge_eps);
    worst = std::max(worst, (xv - proj.weights).norm());
  }
  return worst;
}

double span_residual(const Vector& v, const Matrix& x, double ridge_eps) {
  if (x.rows() == 0) throw UsageError("span_residual: empty feature matrix");
  GramState gram = gram_precompute(x, false);
  auto proj = project_onto_span(v, x, gram, ridge_eps);
  return (v - proj.weights).norm();
}

Matrix add_feature_jitter(const Matrix& x, double noise_std, std::uint64_t seed) {
  if (noise_std < 0.0) throw UsageError("feature jitter scale must be non-negative");
  if (noise_std == 0.0) return x;
  auto rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, noise_std);
  Matrix out = x;
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) += gauss(rng);
  return out;
}

}  // namespace gul::features
