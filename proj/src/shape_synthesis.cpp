#include "safenvelope/shape_synthesis.hpp"

#include "safenvelope/conic.hpp"
#include "safenvelope/errors.hpp"

namespace safenv {

ShapeResult synthesize_shape(const LinearModel& model, const Polytope& x_poly,
                             const Polytope& u_poly, const DataRegion* region,
                             bool constrain_to_region, bool include_input_lmi,
                             double decrease_margin,
                             const std::vector<SupportCap>& support_caps) {
  const int n = model.n();
  const int m = model.m();
  if (x_poly.dim() != n || u_poly.dim() != m) throw DimensionMismatch("synthesize_shape");
  if (!model.controllable())
    throw SynthesisInfeasible("synthesize_shape: (A, B) is not controllable");
  if (constrain_to_region && !region)
    throw DegenerateRegion("synthesize_shape: region constraint requested without a region");

  conic::ConicProblem prob;
  const auto e_vars = prob.add_symmetric(n);
  std::vector<int> y_vars(size_t(m) * size_t(n));
  for (auto& v : y_vars) v = prob.add_scalar();
  auto yv = [&](int r, int c) { return y_vars[size_t(r) * size_t(n) + size_t(c)]; };

  auto for_each_e = [&](auto&& fn) {
    int k = 0;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i <= j; ++i) {
        fn(e_vars[size_t(k)], conic::ConicProblem::sym_basis(n, i, j));
        ++k;
      }
  };

  // objective: maximize log det E
  {
    conic::AffineMat g;
    g.dim = n;
    g.constant = Mat::Zero(n, n);
    for_each_e([&](int var, const Mat& basis) { g.terms.emplace_back(var, basis); });
    prob.set_logdet_term(std::move(g), 1.0);
  }

  // data-region confinement
  if (constrain_to_region) {
    if (region->ellipsoidal()) {
      if (linalg::min_eigenvalue(region->a_delta) <= 0.0)
        throw DegenerateRegion("synthesize_shape: region matrix is not PD");
      conic::AffineMat blk;  // A_delta^-1 - E >= 0
      blk.dim = n;
      blk.constant = region->a_delta.inverse();
      for_each_e([&](int var, const Mat& basis) { blk.terms.emplace_back(var, -basis); });
      prob.add_psd(std::move(blk));
    } else if (!region->groups.empty()) {
      // coordinate-subspace region: cap the level-1 support per covered axis
      std::vector<int> diag_vars(static_cast<size_t>(n));
      int k = 0;
      for (int j = 0; j < n; ++j)
        for (int i = 0; i <= j; ++i) {
          if (i == j) diag_vars[size_t(j)] = e_vars[size_t(k)];
          ++k;
        }
      for (const auto& grp : region->groups)
        for (int c : grp.coords) {
          conic::LinearRow row;  // E_cc <= half_width^2
          row.a.emplace_back(diag_vars[size_t(c)], 1.0);
          row.b = grp.half_width * grp.half_width;
          prob.add_linear_le(std::move(row));
        }
    } else {
      throw DegenerateRegion("synthesize_shape: empty region");
    }
  }

  // directional support caps: a^T E a <= bound^2 (linear in E)
  for (const auto& cap : support_caps) {
    conic::LinearRow row;
    int k = 0;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i <= j; ++i) {
        const double c = (i == j) ? cap.direction[i] * cap.direction[i]
                                  : 2.0 * cap.direction[i] * cap.direction[j];
        if (c != 0.0) row.a.emplace_back(e_vars[size_t(k)], c);
        ++k;
      }
    row.b = cap.bound * cap.bound;
    prob.add_linear_le(std::move(row));
  }

  // Lyapunov LMI for d = 0: -(AE + EA^T + BY + Y^T B^T + 2 rho E) >= 0
  const Mat a_margin = model.a + decrease_margin * Mat::Identity(n, n);
  {
    conic::AffineMat blk;
    blk.dim = n;
    blk.constant = Mat::Zero(n, n);
    for_each_e([&](int var, const Mat& basis) {
      blk.terms.emplace_back(var, (-(a_margin * basis + basis * a_margin.transpose())).eval());
    });
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < n; ++c) {
        Mat coef = Mat::Zero(n, n);
        coef.col(c) -= model.b.col(r);
        coef.row(c) -= model.b.col(r).transpose();
        blk.terms.emplace_back(yv(r, c), std::move(coef));
      }
    prob.add_psd(std::move(blk));
  }

  // state containment at gamma = 1: [[b^2, A_j E],[E A_j^T, E]] >= 0
  for (int j = 0; j < x_poly.rows(); ++j) {
    conic::AffineMat blk;
    blk.dim = n + 1;
    blk.constant = Mat::Zero(n + 1, n + 1);
    blk.constant(0, 0) = x_poly.b_c[j] * x_poly.b_c[j];
    const Vec a_row = x_poly.a_c.row(j).transpose();
    for_each_e([&](int var, const Mat& basis) {
      Mat coef = Mat::Zero(n + 1, n + 1);
      const Vec ab = basis * a_row;
      coef.block(0, 1, 1, n) = ab.transpose();
      coef.block(1, 0, n, 1) = ab;
      coef.bottomRightCorner(n, n) = basis;
      blk.terms.emplace_back(var, std::move(coef));
    });
    prob.add_psd(std::move(blk));
  }

  // input containment at gamma = 1: [[b^2, A_u Y],[Y^T A_u^T, E]] >= 0
  for (int kk = 0; include_input_lmi && kk < u_poly.rows(); ++kk) {
    conic::AffineMat blk;
    blk.dim = n + 1;
    blk.constant = Mat::Zero(n + 1, n + 1);
    blk.constant(0, 0) = u_poly.b_c[kk] * u_poly.b_c[kk];
    for_each_e([&](int var, const Mat& basis) {
      Mat coef = Mat::Zero(n + 1, n + 1);
      coef.bottomRightCorner(n, n) = basis;
      blk.terms.emplace_back(var, std::move(coef));
    });
    for (int r = 0; r < m; ++r) {
      const double au = u_poly.a_c(kk, r);
      if (au == 0.0) continue;
      for (int c = 0; c < n; ++c) {
        Mat coef = Mat::Zero(n + 1, n + 1);
        coef(0, 1 + c) = au;
        coef(1 + c, 0) = au;
        blk.terms.emplace_back(yv(r, c), std::move(coef));
      }
    }
    prob.add_psd(std::move(blk));
  }

  auto sol = prob.solve();
  if (sol.status == conic::SolveStatus::Infeasible)
    throw SynthesisInfeasible("synthesize_shape: no stabilizing shape under the constraints");
  if (!sol.optimal()) throw NumericalFailure("synthesize_shape: " + sol.message);

  ShapeResult result;
  result.e = conic::ConicProblem::extract_symmetric(sol.x, e_vars, n);
  result.p = result.e.inverse();
  result.y0.resize(m, n);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c) result.y0(r, c) = sol.x[yv(r, c)];
  if (!include_input_lmi) {
    // without the input LMI the nominal Y is unconstrained in magnitude;
    // re-pick the minimum-effort one at the solved E
    conic::ConicProblem polish;
    const int tv = polish.add_scalar();
    std::vector<int> y2(size_t(m) * size_t(n));
    for (auto& v : y2) v = polish.add_scalar();
    // [[t I_m, Y], [Y^T, E]] >= 0 bounds Y E^-1 Y^T <= t I
    conic::AffineMat epi;
    epi.dim = m + n;
    epi.constant = Mat::Zero(m + n, m + n);
    epi.constant.bottomRightCorner(n, n) = result.e;
    {
      Mat c = Mat::Zero(m + n, m + n);
      c.topLeftCorner(m, m) = Mat::Identity(m, m);
      epi.terms.emplace_back(tv, std::move(c));
    }
    conic::AffineMat lyap;
    lyap.dim = n;
    lyap.constant = -(a_margin * result.e + result.e * a_margin.transpose());
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < n; ++c) {
        const int var = y2[size_t(r) * size_t(n) + size_t(c)];
        Mat ce = Mat::Zero(m + n, m + n);
        ce(r, m + c) = 1.0;
        ce(m + c, r) = 1.0;
        epi.terms.emplace_back(var, std::move(ce));
        Mat cl = Mat::Zero(n, n);
        cl.col(c) -= model.b.col(r);
        cl.row(c) -= model.b.col(r).transpose();
        lyap.terms.emplace_back(var, std::move(cl));
      }
    polish.add_psd(std::move(epi));
    polish.add_psd(std::move(lyap));
    polish.add_linear_cost(tv, 1.0);
    const auto psol = polish.solve();
    if (psol.optimal()) {
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c) result.y0(r, c) = psol.x[y2[size_t(r) * size_t(n) + size_t(c)]];
    }
  }
  result.k0 = result.y0 * result.p;
  result.logdet_value = linalg::logdet_pd(result.e);

  const Mat lyap = a_margin * result.e + result.e * a_margin.transpose() + model.b * result.y0 +
                   result.y0.transpose() * model.b.transpose();
  if (linalg::min_eigenvalue(-lyap) < -1e-6)
    throw NumericalFailure("synthesize_shape: Lyapunov LMI residual out of tolerance");
  return result;
}

}  // namespace safenv
