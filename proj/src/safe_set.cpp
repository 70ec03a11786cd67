#include "safenvelope/safe_set.hpp"

#include <cmath>

#include "safenvelope/conic.hpp"
#include "safenvelope/errors.hpp"
#include "safenvelope/sampling.hpp"

namespace safenv {

double ellipsoid_support(const Mat& p, double gamma, const Vec& a) {
  if (gamma <= 0.0) throw SingularP("ellipsoid_support: gamma must be positive");
  Eigen::LLT<Mat> llt(p);
  if (llt.info() != Eigen::Success) throw SingularP("ellipsoid_support: P not PD");
  return std::sqrt(gamma * a.dot(llt.solve(a)));
}

namespace {

constexpr const char* kStateLmiNote =
    "state-containment LMI implemented in support-consistent form "
    "[[b^2, a(gE)],[(gE)a^T, gE]] (the printed off-diagonal block loosens with gamma)";

}  // namespace

bool certificate_checks_pass(const SafeCertificate& cert) {
  if (!cert.verification.state_ok || !cert.verification.input_ok) return false;
  if (cert.bound.kind == QuadraticBound::Kind::Lipschitz) return cert.verification.vdot_ok;
  if (cert.bound.kind == QuadraticBound::Kind::Gp)
    return cert.bound.converged && cert.bound.audit_max_violation <= 1e-4;
  return true;
}

SafeCertificate synthesize_safe_set(const LinearModel& model, const Mat& e,
                                    const QuadraticBound& bound, const Interval& interval,
                                    const Polytope& x_poly, const Polytope& u_poly) {
  const int n = model.n();
  const int m = model.m();
  if (e.rows() != n || bound.q.rows() != n) throw DimensionMismatch("synthesize_safe_set");
  if (interval.gamma1 < bound.interval.gamma1 - 1e-12 ||
      interval.gamma2 > bound.interval.gamma2 + 1e-12)
    throw Error("synthesize_safe_set: interval not covered by the bound's interval");

  conic::ConicProblem prob;
  const int gamma_var = prob.add_scalar();
  std::vector<int> y_vars(size_t(m) * size_t(n));
  for (auto& v : y_vars) v = prob.add_scalar();
  auto yv = [&](int r, int c) { return y_vars[size_t(r) * size_t(n) + size_t(c)]; };

  // gamma in [gamma1, gamma2]
  {
    conic::LinearRow lo;
    lo.a.emplace_back(gamma_var, -1.0);
    lo.b = -interval.gamma1;
    prob.add_linear_le(std::move(lo));
    conic::LinearRow hi;
    hi.a.emplace_back(gamma_var, 1.0);
    hi.b = interval.gamma2;
    prob.add_linear_le(std::move(hi));
  }

  // Lyapunov decrease: -(AE g + EA^T g + BY + Y^T B^T + 2 E Q E g) >= 0
  {
    conic::AffineMat blk;
    blk.dim = n;
    blk.constant = Mat::Zero(n, n);
    const Mat gcoef = -(model.a * e + e * model.a.transpose() + 2.0 * e * bound.q * e);
    blk.terms.emplace_back(gamma_var, gcoef);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < n; ++c) {
        Mat coef = Mat::Zero(n, n);
        coef.col(c) -= model.b.col(r);
        coef.row(c) -= model.b.col(r).transpose();
        blk.terms.emplace_back(yv(r, c), std::move(coef));
      }
    prob.add_psd(std::move(blk));
  }

  // state containment rows: [[b^2, a(gE)],[(gE)a^T, gE]] >= 0
  for (int j = 0; j < x_poly.rows(); ++j) {
    conic::AffineMat blk;
    blk.dim = n + 1;
    blk.constant = Mat::Zero(n + 1, n + 1);
    blk.constant(0, 0) = x_poly.b_c[j] * x_poly.b_c[j];
    Mat gcoef = Mat::Zero(n + 1, n + 1);
    const Vec ae = e * x_poly.a_c.row(j).transpose();
    gcoef.block(0, 1, 1, n) = ae.transpose();
    gcoef.block(1, 0, n, 1) = ae;
    gcoef.bottomRightCorner(n, n) = e;
    blk.terms.emplace_back(gamma_var, std::move(gcoef));
    prob.add_psd(std::move(blk));
  }

  // input containment rows: [[b^2, A_u Y],[Y^T A_u^T, gE]] >= 0
  for (int kk = 0; kk < u_poly.rows(); ++kk) {
    conic::AffineMat blk;
    blk.dim = n + 1;
    blk.constant = Mat::Zero(n + 1, n + 1);
    blk.constant(0, 0) = u_poly.b_c[kk] * u_poly.b_c[kk];
    Mat gcoef = Mat::Zero(n + 1, n + 1);
    gcoef.bottomRightCorner(n, n) = e;
    blk.terms.emplace_back(gamma_var, std::move(gcoef));
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

  prob.add_linear_cost(gamma_var, -1.0);

  auto sol = prob.solve();
  if (sol.status == conic::SolveStatus::Infeasible)
    throw IntervalInfeasible("no safe level in [" + std::to_string(interval.gamma1) + ", " +
                             std::to_string(interval.gamma2) + "]");
  if (!sol.optimal()) throw NumericalFailure("synthesize_safe_set: " + sol.message);

  SafeCertificate cert;
  cert.e = e;
  cert.p = e.inverse();
  cert.gamma = sol.x[gamma_var];
  cert.y.resize(m, n);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c) cert.y(r, c) = sol.x[yv(r, c)];
  cert.k = (cert.y * cert.e.inverse()) / cert.gamma;
  cert.interval = interval;
  cert.bound = bound;
  const Mat lyap = model.a * e * cert.gamma + e * model.a.transpose() * cert.gamma +
                   model.b * cert.y + cert.y.transpose() * model.b.transpose() +
                   2.0 * e * bound.q * e * cert.gamma;
  cert.verification.lmi_residual = linalg::min_eigenvalue(-lyap);
  cert.warnings.push_back(kStateLmiNote);
  for (const auto& w : bound.warnings) cert.warnings.push_back(w);
  return cert;
}

SafeCertificate sweep_intervals(const LinearModel& model, const Mat& e,
                                const BoundProvider& provider,
                                const std::vector<Interval>& intervals, const Polytope& x_poly,
                                const Polytope& u_poly, int max_halvings) {
  std::string last_error = "no intervals supplied";
  for (const auto& base : intervals) {
    Interval iv = base;
    for (int h = 0; h <= max_halvings; ++h) {
      try {
        const QuadraticBound bound = provider(iv);
        return synthesize_safe_set(model, e, bound, iv, x_poly, u_poly);
      } catch (const IntervalInfeasible& err) {
        last_error = err.what();
      } catch (const Infeasible& err) {
        last_error = err.what();
      } catch (const EmptyRing& err) {
        last_error = err.what();
        break;  // narrower intervals only lose data
      }
      iv.gamma1 = iv.gamma2 - 0.5 * iv.width();
    }
  }
  throw AllIntervalsInfeasible("sweep exhausted: " + last_error);
}

namespace {

VerificationReport verify_impl(const SafeCertificate& cert, const LinearModel& model,
                               const std::function<double(const Vec&)>& nonlinear_term,
                               const Polytope& x_poly, const Polytope& u_poly, int samples,
                               std::uint64_t seed, double tol) {
  VerificationReport report;
  report.samples = samples;

  report.state_ok = true;
  for (int j = 0; j < x_poly.rows(); ++j) {
    if (ellipsoid_support(cert.p, cert.gamma, x_poly.a_c.row(j).transpose()) >
        x_poly.b_c[j] + 1e-9) {
      report.state_ok = false;
      report.failing_state_row = j;
      break;
    }
  }

  report.input_ok = true;
  for (int j = 0; j < u_poly.rows(); ++j) {
    const Vec row = cert.k.transpose() * u_poly.a_c.row(j).transpose();
    if (ellipsoid_support(cert.p, cert.gamma, row) > u_poly.b_c[j] + 1e-9) {
      report.input_ok = false;
      report.failing_input_row = j;
      break;
    }
  }

  const Mat boundary = sample_ellipsoid_boundary(cert.p, cert.gamma, samples, seed);
  const Mat acl = model.a + model.b * cert.k;
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < samples; ++i) {
    const Vec x = boundary.row(i).transpose();
    const double vdot =
        2.0 / cert.gamma * (x.dot(cert.p * (acl * x)) + nonlinear_term(x));
    worst = std::max(worst, vdot);
  }
  report.vdot_max = worst;
  report.vdot_ok = worst <= tol;

  const Mat lyap = model.a * cert.e * cert.gamma + cert.e * model.a.transpose() * cert.gamma +
                   model.b * cert.y + cert.y.transpose() * model.b.transpose() +
                   2.0 * cert.e * cert.bound.q * cert.e * cert.gamma;
  report.lmi_residual = linalg::min_eigenvalue(-lyap);
  return report;
}

}  // namespace

VerificationReport verify_certificate(const SafeCertificate& cert, const LinearModel& model,
                                      const NonlinearityOracle& oracle, const Polytope& x_poly,
                                      const Polytope& u_poly, int samples, std::uint64_t seed,
                                      double tol) {
  auto term = [&](const Vec& x) { return x.dot(cert.p * oracle(x)); };
  return verify_impl(cert, model, term, x_poly, u_poly, samples, seed, tol);
}

VerificationReport verify_certificate(const SafeCertificate& cert, const LinearModel& model,
                                      const DataSet& data, double delta, double lipschitz,
                                      const Polytope& x_poly, const Polytope& u_poly, int samples,
                                      std::uint64_t seed, double tol) {
  auto term = [&](const Vec& x) {
    const auto [xi, di] = nearest_datum(data, x);
    return xi.dot(cert.p * di) + delta * lipschitz;
  };
  return verify_impl(cert, model, term, x_poly, u_poly, samples, seed, tol);
}

}  // namespace safenv
