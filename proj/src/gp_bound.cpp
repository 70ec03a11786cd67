#include "safenvelope/gp_bound.hpp"

#include <cmath>

#include "safenvelope/conic.hpp"
#include "safenvelope/errors.hpp"
#include "safenvelope/sampling.hpp"

namespace safenv {

double upper_confidence_form(const GpModel& model, const Mat& p, const Vec& x, double c) {
  Vec mu, var;
  model.posterior(x, mu, var);
  const Vec px = p.transpose() * x;
  const double mean_term = px.dot(mu);
  double s2 = 0.0;
  for (int i = 0; i < px.size(); ++i) s2 += px[i] * px[i] * var[i];
  return mean_term + c * std::sqrt(s2);
}

namespace {

Vec project_to_ring(const Ring& ring, const Vec& x) {
  const double lv = ring.level(x);
  if (lv < 1e-300) return x;  // origin: leave to the caller's seed
  if (lv > ring.interval().gamma2) return x * std::sqrt(ring.interval().gamma2 / lv);
  if (lv < ring.interval().gamma1) return x * std::sqrt(ring.interval().gamma1 / lv);
  return x;
}

}  // namespace

ViolationSearchResult find_violation(const std::function<double(const Vec&)>& f, const Mat& q,
                                     const Ring& ring, int restarts, double tol,
                                     std::uint64_t seed) {
  const int n = int(ring.p().rows());
  const double fd_h = 1e-5;
  const double r_scale = std::sqrt(ring.interval().gamma2 / ring.eig_min());

  ViolationSearchResult result;
  result.restarts = restarts;
  auto g = [&](const Vec& x) { return f(x) - x.dot(q * x); };

  const Mat seeds = sample_ring(ring.p(), ring.interval().gamma1, ring.interval().gamma2,
                                restarts, seed);
  Vec grad(n), probe(n);
  for (int r = 0; r < restarts; ++r) {
    Vec x = seeds.row(r).transpose();
    double val = g(x);
    double step = 0.05 * r_scale;
    for (int it = 0; it < 80 && step > 1e-7 * r_scale; ++it) {
      for (int i = 0; i < n; ++i) {
        probe = x;
        probe[i] = x[i] + fd_h;
        const double up = g(probe);
        probe[i] = x[i] - fd_h;
        const double dn = g(probe);
        grad[i] = (up - dn) / (2.0 * fd_h);
      }
      const double gn = grad.norm();
      if (gn < 1e-12) break;
      Vec cand = project_to_ring(ring, x + (step / gn) * grad);
      const double cval = g(cand);
      if (cval > val) {
        x = cand;
        val = cval;
        step *= 1.2;
      } else {
        step *= 0.5;
      }
    }
    if (val > result.max_residual) {
      result.max_residual = val;
      if (val > tol) result.point = x;
    }
  }
  return result;
}

QuadraticBound bound_nonlinearity_gp(const GpModel& model, const Mat& p, const Interval& interval,
                                     const GpBoundConfig& cfg) {
  const int n = int(p.rows());
  const int min_samples = n * (n + 1) / 2;
  const int n0 = std::max(cfg.initial_samples, min_samples);
  const Ring ring(p, interval, 0.0);

  auto f = [&](const Vec& x) { return upper_confidence_form(model, p, x, cfg.c); };

  Mat xs = sample_ring(p, interval.gamma1, interval.gamma2, n0, cfg.seed);
  Vec ys(n0);
  for (int i = 0; i < n0; ++i) ys[i] = f(xs.row(i).transpose());

  QuadraticBound bound;
  bound.interval = interval;
  bound.kind = QuadraticBound::Kind::Gp;
  bound.confidence = cfg.c;
  bound.search_restarts = cfg.restarts;

  Mat q = conic::fit_quadratic_upper_bound(xs, ys);
  bound.converged = false;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    bound.iterations = it + 1;
    auto search = find_violation(f, q, ring, cfg.restarts, cfg.violation_tol,
                                 cfg.seed + std::uint64_t(it) * 7919 + 1);
    if (!search.point) {
      bound.converged = true;
      break;
    }
    xs.conservativeResize(xs.rows() + 1, Eigen::NoChange);
    xs.row(xs.rows() - 1) = search.point->transpose();
    ys.conservativeResize(ys.size() + 1);
    ys[ys.size() - 1] = f(*search.point);
    q = conic::fit_quadratic_upper_bound(xs, ys);
  }
  bound.q = q;
  if (!bound.converged)
    bound.warnings.push_back("violation search still active after max iterations; bound is the "
                             "best fit found");

  // validation audit on a fresh sample of the annulus
  const int audit_n = 10000;
  const Mat audit = sample_ring(p, interval.gamma1, interval.gamma2, audit_n, cfg.seed + 977);
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < audit_n; ++i) {
    const Vec x = audit.row(i).transpose();
    worst = std::max(worst, f(x) - x.dot(q * x));
  }
  bound.audit_max_violation = worst;
  return bound;
}

QuadraticBound bound_nonlinearity_gp_grid(const GpModel& model, const Mat& p,
                                          const Interval& interval, const GpBoundConfig& cfg,
                                          double lipschitz) {
  const int n = int(p.rows());
  if (cfg.grid_delta <= 0.0) throw BadWidths("bound_nonlinearity_gp_grid: grid_delta must be > 0");
  if (cfg.beta < 0.0) throw Error("bound_nonlinearity_gp_grid: beta must be >= 0");
  if (lipschitz < 0.0) throw Error("bound_nonlinearity_gp_grid: L must be >= 0");

  // axis grid whose covering radius equals grid_delta, restricted to the
  // dilated ring
  const Ring ring(p, interval, cfg.grid_delta);
  const double spacing = cfg.grid_delta * 2.0 / std::sqrt(double(n));
  const Mat e = p.inverse();
  std::vector<double> half(static_cast<size_t>(n));
  std::vector<long> counts(static_cast<size_t>(n));
  long total = 1;
  for (int i = 0; i < n; ++i) {
    half[size_t(i)] = std::sqrt(std::max(0.0, interval.gamma2 * e(i, i))) + cfg.grid_delta;
    counts[size_t(i)] = long(std::floor(half[size_t(i)] / spacing)) * 2 + 1;
    total *= counts[size_t(i)];
  }
  if (total > 20'000'000) throw Error("bound_nonlinearity_gp_grid: grid too fine");

  std::vector<Vec> nodes;
  Vec x(n);
  for (long flat = 0; flat < total; ++flat) {
    long rem = flat;
    for (int i = 0; i < n; ++i) {
      const long ci = counts[size_t(i)];
      x[i] = (double(rem % ci) - double(ci - 1) / 2.0) * spacing;
      rem /= ci;
    }
    if (ring.contains(x)) nodes.push_back(x);
  }
  if (nodes.empty()) throw EmptyRing("bound_nonlinearity_gp_grid: empty discretization");

  Mat points(long(nodes.size()), n);
  Vec targets(long(nodes.size()));
  Vec mu, var;
  for (size_t k = 0; k < nodes.size(); ++k) {
    points.row(long(k)) = nodes[k].transpose();
    model.posterior(nodes[k], mu, var);
    const double sigma_sum = var.array().sqrt().sum();
    targets[long(k)] =
        nodes[k].dot(p * mu) + cfg.beta * sigma_sum + cfg.grid_delta * lipschitz;
  }

  QuadraticBound bound;
  bound.interval = interval;
  bound.kind = QuadraticBound::Kind::GpGrid;
  bound.confidence = cfg.beta;
  bound.q = solve_quad_bound_sdp(points, targets, cfg.grid_delta, std::nullopt, &bound.chain,
                                 &bound.fit_residual, &bound.sproc_min_eig);
  return bound;
}

}  // namespace safenv
