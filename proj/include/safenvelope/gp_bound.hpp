#pragma once

#include <functional>
#include <optional>

#include "safenvelope/gp_regression.hpp"
#include "safenvelope/lipschitz_bound.hpp"

namespace safenv {

struct GpBoundConfig {
  double c = 3.0;              // confidence multiplier on the posterior stddev
  int initial_samples = 200;   // N0 seed evaluations of f on the ring
  double violation_tol = 1e-6;
  int max_iterations = 200;
  int restarts = 64;           // multi-start budget of the violation search
  double beta = 2.0;           // grid-variant confidence scale
  double grid_delta = 0.0;     // grid-variant resolution
  std::uint64_t seed = 0;
};

/// c-sigma upper quantile of x^T P d(x) under the per-dimension GP posterior:
/// x^T P mu(x) + c sqrt(sum_i ((P x)_i sigma_i(x))^2).
/// As a one-sided bound, c = 3 covers 99.87% of the mass (99.73% two-sided).
double upper_confidence_form(const GpModel& model, const Mat& p, const Vec& x, double c);

struct ViolationSearchResult {
  std::optional<Vec> point;  // a ring point with f(x) - x^T Q x > tol, if found
  double max_residual = -std::numeric_limits<double>::infinity();
  int restarts = 0;
};

/// Multi-start projected gradient ascent of f(x) - x^T Q x over the ring
/// (Sobol seeds, central differences h = 1e-5, radial projection in the
/// P metric). Best effort: a `none` result is evidence, not proof.
ViolationSearchResult find_violation(const std::function<double(const Vec&)>& f, const Mat& q,
                                     const Ring& ring, int restarts, double tol,
                                     std::uint64_t seed);

/// Iterative quadratic upper bound on the confidence envelope f over the
/// level annulus: sample, fit, search for violations, refit until clean.
QuadraticBound bound_nonlinearity_gp(const GpModel& model, const Mat& p, const Interval& interval,
                                     const GpBoundConfig& cfg);

/// Grid discretization variant: targets
/// p_k = x_k^T P mu(x_k) + beta sum_i sigma_i(x_k) + delta L, then the
/// usual S-procedure SDP over the grid nodes.
QuadraticBound bound_nonlinearity_gp_grid(const GpModel& model, const Mat& p,
                                          const Interval& interval, const GpBoundConfig& cfg,
                                          double lipschitz);

}  // namespace safenv
