#include "safenvelope/conic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <iostream>

#include "safenvelope/errors.hpp"

namespace safenv::conic {

std::vector<int> ConicProblem::add_symmetric(int n) {
  std::vector<int> vars;
  vars.reserve(size_t(n) * size_t(n + 1) / 2);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= j; ++i) vars.push_back(add_scalar());
  return vars;
}

Mat ConicProblem::extract_symmetric(const Vec& x, const std::vector<int>& vars, int n) {
  Mat m(n, n);
  int k = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= j; ++i) {
      m(i, j) = m(j, i) = x[vars[size_t(k)]];
      ++k;
    }
  return m;
}

Mat ConicProblem::sym_basis(int n, int i, int j) {
  Mat e = Mat::Zero(n, n);
  if (i == j) {
    e(i, i) = 1.0;
  } else {
    e(i, j) = 1.0;
    e(j, i) = 1.0;
  }
  return e;
}

// Log-barrier path-following solver. Phase I drives an interior-margin
// slack below zero; phase II follows the central path of
//   t * f(v) + sum_b -log det S_b(v) - sum_r log(b - a^T v).
class BarrierSolver {
 public:
  BarrierSolver(const ConicProblem& p, const SolveOptions& opts) : p_(p), opts_(opts) {
    aug_blocks_ = p_.blocks_;
    if (p_.logdet_weight_ > 0.0) aug_blocks_.push_back(p_.logdet_);
    // a fixed large variable box keeps the barrier's sublevel sets bounded
    // (epigraph-style problems are otherwise unbounded and the central path
    // runs away)
    rows_ = p_.rows_;
    for (int i = 0; i < p_.num_vars_; ++i) {
      LinearRow hi;
      hi.a.emplace_back(i, 1.0);
      hi.b = kBox;
      rows_.push_back(std::move(hi));
      LinearRow lo;
      lo.a.emplace_back(i, -1.0);
      lo.b = kBox;
      rows_.push_back(std::move(lo));
    }
    nu_ = double(rows_.size());
    for (const auto& b : p_.blocks_) nu_ += double(b.dim);
    scale_ = 1.0;
    for (const auto& b : p_.blocks_) scale_ = std::max(scale_, b.constant.cwiseAbs().maxCoeff());
    for (const auto& r : p_.rows_) scale_ = std::max(scale_, std::abs(r.b));
  }

  static constexpr double kBox = 1e8;

  ConicSolution run() {
    const int p = p_.num_vars_;
    Vec v = Vec::Zero(p);

    if (p_.blocks_.empty() && p_.rows_.empty() && p_.logdet_weight_ == 0.0)
      return solve_unconstrained();

    const double margin = opts_.feas_margin * scale_;
    if (!strictly_feasible(v, margin)) {
      auto r = phase1(v, margin);
      if (r) return *r;  // infeasible or failed
    }

    const bool no_objective = p_.linear_cost_.empty() && p_.squared_terms_.empty() &&
                              p_.logdet_weight_ == 0.0;
    ConicSolution sol;
    if (!no_objective) {
      auto fail = phase2(v, sol);
      if (fail) return *fail;
    } else {
      sol.gap = 0.0;
    }

    sol.status = SolveStatus::Optimal;
    sol.x = v;
    sol.objective = objective(v);
    sol.max_residual = residual(v);
    sol.newton_iters = total_newton_;
    return sol;
  }

 private:
  ConicSolution solve_unconstrained() {
    const int p = p_.num_vars_;
    Mat h = Mat::Zero(p, p);
    Vec g = Vec::Zero(p);
    for (const auto& [var, coef] : p_.linear_cost_) g[var] += coef;
    for (const auto& st : p_.squared_terms_) {
      for (const auto& [vi, fi] : st.f) {
        g[vi] += -2.0 * st.weight * st.target * fi;
        for (const auto& [vj, fj] : st.f) h(vi, vj) += 2.0 * st.weight * fi * fj;
      }
    }
    Eigen::LDLT<Mat> ldlt(h + 1e-12 * Mat::Identity(p, p));
    ConicSolution sol;
    sol.x = ldlt.solve(-g);
    if (!sol.x.allFinite()) {
      sol.status = SolveStatus::NumericalFailure;
      sol.message = "unbounded or singular unconstrained objective";
      return sol;
    }
    sol.status = SolveStatus::Optimal;
    sol.objective = objective(sol.x);
    return sol;
  }

  // ---- evaluation helpers ------------------------------------------------

  bool strictly_feasible(const Vec& v, double margin) const {
    for (const auto& b : aug_blocks_) {
      Eigen::LLT<Mat> llt((b.eval(v) - margin * Mat::Identity(b.dim, b.dim)).eval());
      if (llt.info() != Eigen::Success) return false;
    }
    for (const auto& r : rows_)
      if (r.slack(v) <= margin) return false;
    return true;
  }

  // barrier of the *constraint* set (optionally with +s I augmentation)
  std::optional<double> barrier_value(const Vec& v, double s_aug, bool include_logdet_block) const {
    double val = 0.0;
    const auto& blocks = include_logdet_block ? aug_blocks_ : p_.blocks_;
    for (const auto& b : blocks) {
      Mat s = b.eval(v);
      if (s_aug != 0.0) s += s_aug * Mat::Identity(b.dim, b.dim);
      Eigen::LLT<Mat> llt(s);
      if (llt.info() != Eigen::Success) return std::nullopt;
      double ld = 0.0;
      for (int i = 0; i < b.dim; ++i) ld += std::log(llt.matrixL()(i, i));
      val -= 2.0 * ld;
    }
    for (const auto& r : rows_) {
      const double s = r.slack(v) + s_aug;
      if (s <= 0.0) return std::nullopt;
      val -= std::log(s);
    }
    return val;
  }

  double objective(const Vec& v) const {
    double f = 0.0;
    for (const auto& [var, coef] : p_.linear_cost_) f += coef * v[var];
    for (const auto& st : p_.squared_terms_) {
      double e = -st.target;
      for (const auto& [vi, fi] : st.f) e += fi * v[vi];
      f += st.weight * e * e;
    }
    if (p_.logdet_weight_ > 0.0) {
      Eigen::LLT<Mat> llt(p_.logdet_.eval(v).eval());
      if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
      double ld = 0.0;
      for (int i = 0; i < p_.logdet_.dim; ++i) ld += std::log(llt.matrixL()(i, i));
      f -= p_.logdet_weight_ * 2.0 * ld;
    }
    return f;
  }

  double residual(const Vec& v) const {
    double r = 0.0;
    for (const auto& b : p_.blocks_)
      r = std::max(r, -linalg::min_eigenvalue(b.eval(v)));
    for (const auto& row : p_.rows_) r = std::max(r, -row.slack(v));
    return std::max(r, 0.0);
  }

  // -log det S derivatives accumulated into (g, h) with a scale factor.
  // s_var >= 0 adds the phase-I augmentation term +v[s_var] * I.
  static bool block_derivs(const AffineMat& b, const Vec& v, int s_var, double scl, Vec& g,
                           Mat& h) {
    Mat s = b.eval(v);
    if (s_var >= 0) s += v[s_var] * Mat::Identity(b.dim, b.dim);
    Eigen::LLT<Mat> llt(s);
    if (llt.info() != Eigen::Success) return false;

    const int k = int(b.terms.size()) + (s_var >= 0 ? 1 : 0);
    std::vector<int> vars(static_cast<size_t>(k));
    std::vector<Mat> w(static_cast<size_t>(k));
    for (size_t i = 0; i < b.terms.size(); ++i) {
      vars[i] = b.terms[i].first;
      Mat tmp = llt.matrixL().solve(b.terms[i].second);
      w[i] = llt.matrixL().solve(tmp.transpose());
    }
    if (s_var >= 0) {
      vars[size_t(k - 1)] = s_var;
      Mat tmp = llt.matrixL().solve(Mat::Identity(b.dim, b.dim));
      w[size_t(k - 1)] = llt.matrixL().solve(tmp.transpose());
    }
    for (int i = 0; i < k; ++i) {
      g[vars[size_t(i)]] -= scl * w[size_t(i)].trace();
      for (int j = i; j < k; ++j) {
        const double hij = scl * w[size_t(i)].cwiseProduct(w[size_t(j)]).sum();
        h(vars[size_t(i)], vars[size_t(j)]) += hij;
        if (vars[size_t(i)] != vars[size_t(j)]) h(vars[size_t(j)], vars[size_t(i)]) += hij;
      }
    }
    return true;
  }

  static bool row_derivs(const LinearRow& r, const Vec& v, int s_var, double scl, Vec& g,
                         Mat& h) {
    double s = r.slack(v);
    if (s_var >= 0) s += v[s_var];
    if (s <= 0.0) return false;
    auto coef = [&](size_t i) { return i < r.a.size() ? r.a[i].second : -1.0; };
    auto var = [&](size_t i) { return i < r.a.size() ? r.a[i].first : s_var; };
    const size_t k = r.a.size() + (s_var >= 0 ? 1 : 0);
    for (size_t i = 0; i < k; ++i) {
      g[var(i)] += scl * coef(i) / s;
      for (size_t j = i; j < k; ++j) {
        const double hij = scl * coef(i) * coef(j) / (s * s);
        h(var(i), var(j)) += hij;
        if (var(i) != var(j)) h(var(j), var(i)) += hij;
      }
    }
    return true;
  }

  // ---- newton centering ----------------------------------------------------

  struct CenterSpec {
    double t = 1.0;
    int s_var = -1;      // phase-I slack variable (also the linear objective)
    bool phase1 = false;
    double f_ref = 0.0;  // objective shift keeping psi at additive precision
  };

  // psi value for line search; nullopt when outside the domain
  std::optional<double> psi(const Vec& v, const CenterSpec& cs) const {
    double s_aug = cs.phase1 ? v[cs.s_var] : 0.0;
    auto bar = barrier_value(v, s_aug, cs.phase1);
    if (!bar) return std::nullopt;
    if (cs.phase1) return cs.t * (v[cs.s_var] - cs.f_ref) + *bar;
    // logdet objective block must stay PD
    const double f = objective(v);
    if (!std::isfinite(f)) return std::nullopt;
    return cs.t * (f - cs.f_ref) + *bar;
  }

  bool assemble(const Vec& v, const CenterSpec& cs, Vec& g, Mat& h) const {
    g.setZero();
    h.setZero();
    const int s_var = cs.phase1 ? cs.s_var : -1;
    const auto& blocks = cs.phase1 ? aug_blocks_ : p_.blocks_;
    for (const auto& b : blocks)
      if (!block_derivs(b, v, s_var, 1.0, g, h)) return false;
    for (const auto& r : rows_)
      if (!row_derivs(r, v, s_var, 1.0, g, h)) return false;

    if (cs.phase1) {
      g[cs.s_var] += cs.t;
      return true;
    }
    for (const auto& [var, coef] : p_.linear_cost_) g[var] += cs.t * coef;
    for (const auto& st : p_.squared_terms_) {
      double e = -st.target;
      for (const auto& [vi, fi] : st.f) e += fi * v[vi];
      for (const auto& [vi, fi] : st.f) {
        g[vi] += cs.t * 2.0 * st.weight * e * fi;
        for (const auto& [vj, fj] : st.f) h(vi, vj) += cs.t * 2.0 * st.weight * fi * fj;
      }
    }
    if (p_.logdet_weight_ > 0.0)
      if (!block_derivs(p_.logdet_, v, -1, cs.t * p_.logdet_weight_, g, h)) return false;
    return true;
  }

  // Returns false on numerical stall. Early-out callback for phase I.
  template <typename Done>
  bool center(Vec& v, const CenterSpec& spec, Done done) {
    CenterSpec cs = spec;
    cs.f_ref = cs.phase1 ? v[cs.s_var] : objective(v);
    const int p = int(v.size());
    Vec g(p);
    Mat h(p, p);
    Vec scale(p), gs(p), dv(p);
    Mat hs(p, p);
    double last_psi = std::numeric_limits<double>::infinity();
    int no_progress = 0;
    for (int it = 0; it < 400; ++it) {
      if (total_newton_++ > opts_.max_newton) return false;
      if (!assemble(v, cs, g, h)) return false;

      // equilibrated solve: the Hessian mixes very different variable scales
      // (epigraph variables vs multipliers), so ridge regularization must act
      // on the unit-diagonal system
      const double dmax = h.diagonal().cwiseAbs().maxCoeff();
      for (int i = 0; i < p; ++i)
        scale[i] = 1.0 / std::sqrt(std::max(std::abs(h(i, i)), 1e-14 * std::max(dmax, 1.0)));
      hs = scale.asDiagonal() * h * scale.asDiagonal();
      gs = scale.asDiagonal() * g;
      double ridge = 1e-12;
      double lambda2 = -1.0;
      for (int attempt = 0; attempt < 6; ++attempt) {
        Eigen::LDLT<Mat> ldlt(hs + ridge * Mat::Identity(p, p));
        dv = scale.asDiagonal() * ldlt.solve(-gs);
        lambda2 = -g.dot(dv);
        if (dv.allFinite() && lambda2 >= 0.0) break;
        ridge *= 1e4;
      }
      if (!dv.allFinite() || lambda2 < 0.0) return false;
      // centering accuracy only needs to be proportional to t: a psi-scale
      // decrement of eps translates to an objective error of eps / t
      if (lambda2 / 2.0 <= std::max(opts_.newton_tol, 1e-13 * cs.t)) return true;

      const double psi0 = psi(v, cs).value_or(std::numeric_limits<double>::infinity());
      double alpha = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        const Vec cand = v + alpha * dv;
        auto val = psi(cand, cs);
        if (val && *val <= psi0 - 1e-4 * alpha * lambda2) {
          v = cand;
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) {
        // damped self-concordant step: any feasible shrink of the Newton step
        const double damped = 1.0 / (1.0 + std::sqrt(lambda2));
        const Vec cand = v + damped * dv;
        auto val = psi(cand, cs);
        if (val && *val < psi0) {
          v = cand;
          accepted = true;
        }
      }
      // double-precision floor: steps are accepted but psi no longer moves
      if (std::abs(psi0 - last_psi) <= 1e-13 * (1.0 + std::abs(psi0))) {
        if (++no_progress >= 3) return true;
      } else {
        no_progress = 0;
      }
      last_psi = psi0;
      if (opts_.trace)
        std::cerr << "[newton] t=" << cs.t << " phase1=" << cs.phase1 << " it=" << it
                  << " lambda2/2=" << lambda2 / 2.0 << " alpha=" << alpha
                  << " accepted=" << accepted << " psi0=" << psi0 << "\n";
      if (!accepted) return lambda2 / 2.0 <= 1e-6;  // flat region: good enough
      if (done(v)) return true;
    }
    return false;
  }

  // nullopt on success (v strictly feasible with margin)
  std::optional<ConicSolution> phase1(Vec& v, double margin) {
    const int p = p_.num_vars_;
    Vec w(p + 1);
    w.head(p) = v;
    double s0 = 0.0;
    for (const auto& b : aug_blocks_) s0 = std::max(s0, -linalg::min_eigenvalue(b.eval(v)));
    for (const auto& r : rows_) s0 = std::max(s0, -r.slack(v));
    w[p] = s0 + 1.0 + margin;

    double nu1 = nu_;
    if (p_.logdet_weight_ > 0.0) nu1 += double(p_.logdet_.dim);

    CenterSpec cs;
    cs.phase1 = true;
    cs.s_var = p;
    cs.t = 1.0;
    auto stop = [&](const Vec& cur) { return cur[p] < -2.0 * margin; };
    while (true) {
      if (!center(w, cs, stop)) return fail("phase I stalled");
      if (w[p] < -2.0 * margin) break;
      const double gap = nu1 / cs.t;
      if (gap < margin) {
        ConicSolution sol;
        sol.status = SolveStatus::Infeasible;
        sol.newton_iters = total_newton_;
        sol.gap = gap;
        sol.message = w[p] - gap > 0.0 ? "infeasible (phase I certificate)"
                                       : "no strictly interior point found";
        return sol;
      }
      cs.t *= opts_.mu;
    }
    v = w.head(p);
    return std::nullopt;
  }

  std::optional<ConicSolution> phase2(Vec& v, ConicSolution& sol) {
    CenterSpec cs;
    cs.t = opts_.t0;
    const double nu = std::max(nu_, 1.0);
    double last_f = std::numeric_limits<double>::infinity();
    int flat_rounds = 0;
    double certified_t = 0.0;
    Vec best = v;
    while (true) {
      if (!center(v, cs, [](const Vec&) { return false; })) {
        // keep the last well-centered point and report its honest gap
        if (certified_t > 0.0) {
          v = best;
          sol.gap = nu / certified_t;
          return std::nullopt;
        }
        return fail("newton stalled");
      }
      certified_t = cs.t;
      best = v;
      if (nu / cs.t <= opts_.gap_tol) break;
      // once the objective stops moving, pushing t further only invites
      // precision trouble
      const double f = objective(v);
      if (std::abs(f - last_f) <= 1e-11 * (1.0 + std::abs(f))) {
        if (++flat_rounds >= 2) break;
      } else {
        flat_rounds = 0;
      }
      last_f = f;
      cs.t *= opts_.mu;
    }
    sol.gap = nu / cs.t;
    return std::nullopt;
  }

  ConicSolution fail(const std::string& msg) {
    ConicSolution sol;
    sol.status = SolveStatus::NumericalFailure;
    sol.message = msg;
    sol.newton_iters = total_newton_;
    return sol;
  }

  const ConicProblem& p_;
  SolveOptions opts_;
  std::vector<AffineMat> aug_blocks_;
  std::vector<LinearRow> rows_;
  double nu_ = 0.0;
  double scale_ = 1.0;
  int total_newton_ = 0;
};

ConicSolution ConicProblem::solve(const SolveOptions& opts) const {
  BarrierSolver solver(*this, opts);
  return solver.run();
}

Mat fit_quadratic_upper_bound(const Mat& points, const Vec& values) {
  const int n = int(points.cols());
  const int count = int(points.rows());
  if (count == 0 || values.size() != count)
    throw EmptyDataSet("fit_quadratic_upper_bound: no points");

  ConicProblem prob;
  const auto qv = prob.add_symmetric(n);
  auto features = [&](int r) {
    std::vector<std::pair<int, double>> f;
    int k = 0;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i <= j; ++i) {
        const double c = (i == j) ? points(r, i) * points(r, i) : 2.0 * points(r, i) * points(r, j);
        if (c != 0.0) f.emplace_back(qv[size_t(k)], c);
        ++k;
      }
    return f;
  };

  bool any = false;
  for (int r = 0; r < count; ++r) {
    if (points.row(r).norm() == 0.0) {
      if (values[r] > 0.0)
        throw Infeasible("fit_quadratic_upper_bound: x_i = 0 with y_i > 0");
      continue;  // 0 >= y_i holds for free
    }
    any = true;
    auto f = features(r);
    prob.add_squared_term(f, values[r]);
    LinearRow row;  // y_r <= f^T q  <=>  -f^T q <= -y_r
    for (auto& [var, c] : f) row.a.emplace_back(var, -c);
    row.b = -values[r];
    prob.add_linear_le(std::move(row));
  }
  if (!any) return Mat::Zero(n, n);

  SolveOptions opts;
  opts.gap_tol = 1e-10;
  auto sol = prob.solve(opts);
  if (sol.status == SolveStatus::Infeasible)
    throw Infeasible("fit_quadratic_upper_bound: constraints unsatisfiable");
  if (!sol.optimal()) throw NumericalFailure("fit_quadratic_upper_bound: " + sol.message);
  Mat q = ConicProblem::extract_symmetric(sol.x, qv, n);

  for (int r = 0; r < count; ++r) {
    const Vec x = points.row(r).transpose();
    if (values[r] > x.dot(q * x) + 1e-8)
      throw NumericalFailure("fit_quadratic_upper_bound: post-check violation");
  }
  return q;
}

Mat min_volume_covering_ellipsoid(const Mat& points, double tol) {
  const int n = int(points.cols());
  const long count = points.rows();
  if (count == 0) throw EmptyDataSet("min_volume_covering_ellipsoid: no points");
  {
    Eigen::ColPivHouseholderQR<Mat> qr(points);
    qr.setThreshold(1e-10);
    if (int(qr.rank()) < n)
      throw DegenerateData("min_volume_covering_ellipsoid: points span a proper subspace");
  }

  // D-optimal design weights by multiplicative updates:
  //   M(w) = sum_i w_i x_i x_i^T,  w_i <- w_i * (x_i^T M^-1 x_i) / n
  Vec w = Vec::Constant(count, 1.0 / double(count));
  linalg::PointsAdapter pts(points);
  Vec g(count);
  double max_g = 0.0;
  Mat minv;
  for (int it = 0; it < 200000; ++it) {
    Mat m = Mat::Zero(n, n);
    for (long i = 0; i < count; ++i)
      m.noalias() += w[i] * points.row(i).transpose() * points.row(i);
    minv = m.inverse();
    kernels::batch_quad_form(minv.data(), pts.view(), g.data());
    max_g = g.maxCoeff();
    if (max_g <= double(n) * (1.0 + tol)) break;
    w = w.cwiseProduct(g) / double(n);
    w /= w.sum();
  }
  if (max_g > double(n) * (1.0 + 100.0 * tol) && max_g > double(n) + 1e-6)
    throw NumericalFailure("min_volume_covering_ellipsoid: did not converge");
  return minv / max_g;
}

}  // namespace safenv::conic
