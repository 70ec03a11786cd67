#pragma once

#include <string>
#include <utility>
#include <vector>

#include "safenvelope/linalg.hpp"

namespace safenv::conic {

/// Affine symmetric-matrix expression C0 + sum_i v_i * C_i.
struct AffineMat {
  int dim = 0;
  Mat constant;
  std::vector<std::pair<int, Mat>> terms;

  Mat eval(const Vec& v) const {
    Mat s = constant;
    for (const auto& [var, coef] : terms) s += v[var] * coef;
    return s;
  }
};

/// a^T v <= b
struct LinearRow {
  std::vector<std::pair<int, double>> a;
  double b = 0.0;

  double slack(const Vec& v) const {
    double s = b;
    for (const auto& [var, coef] : a) s -= coef * v[var];
    return s;
  }
};

enum class SolveStatus { Optimal, Infeasible, NumericalFailure };

struct ConicSolution {
  SolveStatus status = SolveStatus::NumericalFailure;
  Vec x;
  double objective = 0.0;
  double gap = 0.0;           // barrier suboptimality bound at termination
  double max_residual = 0.0;  // worst constraint violation (0 for interior points)
  int newton_iters = 0;
  std::string message;

  bool optimal() const { return status == SolveStatus::Optimal; }
};

struct SolveOptions {
  double gap_tol = 1e-8;
  double feas_margin = 1e-7;  // required interior margin out of phase I
  double t0 = 1.0;
  double mu = 10.0;
  int max_newton = 4000;
  double newton_tol = 1e-8;  // on lambda^2/2 (psi-scale suboptimality)
  bool trace = false;
};

/// Conic problem over scalar decision variables: PSD constraints on affine
/// matrix expressions, linear inequalities, and an objective assembled from
/// linear, convex-quadratic, and -log det terms.
class ConicProblem {
 public:
  int add_scalar() { return num_vars_++; }

  /// Adds the n(n+1)/2 upper-triangle entries of a symmetric matrix
  /// variable; returned indices are in (i <= j) column order.
  std::vector<int> add_symmetric(int n);

  void add_psd(AffineMat m) { blocks_.push_back(std::move(m)); }
  void add_linear_le(LinearRow row) { rows_.push_back(std::move(row)); }

  void add_linear_cost(int var, double coef) { linear_cost_.emplace_back(var, coef); }

  /// Adds weight * (f^T v - target)^2 to the objective.
  void add_squared_term(std::vector<std::pair<int, double>> f, double target,
                        double weight = 1.0) {
    squared_terms_.push_back({std::move(f), target, weight});
  }

  /// Adds -weight * log det(g(v)) to the objective (g must be PD at the
  /// optimum; it is also enforced PD as a constraint).
  void set_logdet_term(AffineMat g, double weight) {
    logdet_ = std::move(g);
    logdet_weight_ = weight;
  }

  int num_vars() const { return num_vars_; }

  /// Reconstructs the symmetric matrix held by `vars` from a solution.
  static Mat extract_symmetric(const Vec& x, const std::vector<int>& vars, int n);

  /// Symmetric basis matrix for entry (i, j): E_ij + E_ji (i != j) or E_ii.
  static Mat sym_basis(int n, int i, int j);

  ConicSolution solve(const SolveOptions& opts = {}) const;

 private:
  friend class BarrierSolver;
  int num_vars_ = 0;
  std::vector<AffineMat> blocks_;
  std::vector<LinearRow> rows_;
  std::vector<std::pair<int, double>> linear_cost_;
  struct SquaredTerm {
    std::vector<std::pair<int, double>> f;
    double target = 0.0;
    double weight = 1.0;
  };
  std::vector<SquaredTerm> squared_terms_;
  AffineMat logdet_;
  double logdet_weight_ = 0.0;
};

/// Constrained least squares: minimize sum_i (x_i^T Q x_i - y_i)^2 subject
/// to y_i <= x_i^T Q x_i, over symmetric Q.
Mat fit_quadratic_upper_bound(const Mat& points, const Vec& values);

/// Minimum-volume origin-centered ellipsoid {x : x^T A x <= 1} covering the
/// rows of `points`.
Mat min_volume_covering_ellipsoid(const Mat& points, double tol = 1e-9);

}  // namespace safenv::conic
