#pragma once

#include <functional>

#include "safenvelope/lipschitz_bound.hpp"
#include "safenvelope/system_model.hpp"

namespace safenv {

struct VerificationReport {
  bool state_ok = false;
  bool input_ok = false;
  bool vdot_ok = false;
  int failing_state_row = -1;
  int failing_input_row = -1;
  double vdot_max = 0.0;
  int samples = 0;
  double lmi_residual = 0.0;  // min-eig of the negated Lyapunov LMI

  bool all_ok() const { return state_ok && input_ok && vdot_ok; }
};

struct SafeCertificate {
  Mat p;
  Mat e;
  double gamma = 0.0;
  Mat y;  // m x n
  Mat k;  // m x n, K = gamma^-1 Y E^-1
  Interval interval;
  QuadraticBound bound;
  VerificationReport verification;
  std::vector<std::string> warnings;
};

/// max over {x^T P x <= gamma} of a^T x = sqrt(gamma a^T P^-1 a).
double ellipsoid_support(const Mat& p, double gamma, const Vec& a);

/// Second-stage SDP: largest gamma in the interval with the Lyapunov
/// decrease, state containment, and input containment LMIs.
SafeCertificate synthesize_safe_set(const LinearModel& model, const Mat& e,
                                    const QuadraticBound& bound, const Interval& interval,
                                    const Polytope& x_poly, const Polytope& u_poly);

using BoundProvider = std::function<QuadraticBound(const Interval&)>;

/// First feasible certificate over the interval list; infeasible intervals
/// are retried at half width (keeping the upper end) before moving on.
SafeCertificate sweep_intervals(const LinearModel& model, const Mat& e,
                                const BoundProvider& provider,
                                const std::vector<Interval>& intervals, const Polytope& x_poly,
                                const Polytope& u_poly, int max_halvings = 4);

/// Containment always gates a certificate; the Lyapunov-decrease audit
/// against the true d gates only Lipschitz-mode bounds (GP-mode bounds carry
/// a model-conditional claim that is audited at the envelope level instead).
bool certificate_checks_pass(const SafeCertificate& cert);

/// Exact support checks plus a sampled Lyapunov-decrease audit on the safe
/// set boundary, with the oracle supplying d.
VerificationReport verify_certificate(const SafeCertificate& cert, const LinearModel& model,
                                      const NonlinearityOracle& oracle, const Polytope& x_poly,
                                      const Polytope& u_poly, int samples,
                                      std::uint64_t seed = 0, double tol = 1e-6);

/// Variant using nearest-datum values with a delta*L slack instead of the
/// oracle.
VerificationReport verify_certificate(const SafeCertificate& cert, const LinearModel& model,
                                      const DataSet& data, double delta, double lipschitz,
                                      const Polytope& x_poly, const Polytope& u_poly, int samples,
                                      std::uint64_t seed = 0, double tol = 1e-6);

}  // namespace safenv
