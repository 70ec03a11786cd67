#include "safenvelope/lipschitz_bound.hpp"

#include <algorithm>
#include <cmath>

#include "safenvelope/conic.hpp"
#include "safenvelope/errors.hpp"

namespace safenv {

std::vector<Interval> make_intervals(double gamma_bar, const std::vector<double>& widths) {
  if (gamma_bar <= 0.0) throw BadWidths("make_intervals: gamma_bar must be positive");
  if (widths.empty()) throw BadWidths("make_intervals: no widths");
  std::vector<Interval> out;
  double top = gamma_bar;
  for (double w : widths) {
    if (w <= 0.0) throw BadWidths("make_intervals: widths must be positive");
    const double lo = top - w;
    if (lo <= 0.0)
      throw BadWidths("make_intervals: widths exceed gamma_bar (interval floor at " +
                      std::to_string(lo) + ")");
    out.push_back({lo, top});
    top = lo;
  }
  return out;
}

std::vector<Interval> make_intervals_schedule(double gamma_bar, double width, int count) {
  if (count < 1) throw BadWidths("make_intervals_schedule: count must be >= 1");
  std::vector<Interval> out;
  for (int i = 1; i <= count; ++i) {
    const double hi = gamma_bar - double(i) * width;
    const double lo = hi - width;
    if (lo <= 0.0) throw BadWidths("make_intervals_schedule: schedule reaches zero level");
    out.push_back({lo, hi});
  }
  return out;
}

Ring::Ring(Mat p, Interval interval, double delta)
    : p_(std::move(p)), interval_(interval), delta_(delta) {
  if (!(0.0 < interval_.gamma1 && interval_.gamma1 < interval_.gamma2))
    throw BadWidths("Ring: need 0 < gamma1 < gamma2");
  if (delta_ < 0.0) throw BadWidths("Ring: delta must be >= 0");
  Eigen::SelfAdjointEigenSolver<Mat> es(p_);
  if (es.eigenvalues().minCoeff() <= 0.0) throw SingularP("Ring: P must be positive definite");
  eigvals_ = es.eigenvalues();
  eigvecs_ = es.eigenvectors();
}

double Ring::distance_to_shell(const Vec& x, double gamma) const {
  // minimize ||x - y|| over {y^T P y = gamma}: y(nu) = (I + nu P)^-1 x,
  // with g(nu) = y(nu)^T P y(nu) monotone decreasing on (-1/lambda_max, inf)
  const Vec z = eigvecs_.transpose() * x;
  const double lmax = eigvals_.maxCoeff();
  auto g = [&](double nu) {
    double s = 0.0;
    for (int i = 0; i < z.size(); ++i) {
      const double den = 1.0 + nu * eigvals_[i];
      s += eigvals_[i] * z[i] * z[i] / (den * den);
    }
    return s;
  };
  auto displacement = [&](double nu) {
    double d2 = 0.0;
    for (int i = 0; i < z.size(); ++i) {
      const double w = nu * eigvals_[i] / (1.0 + nu * eigvals_[i]);
      d2 += w * w * z[i] * z[i];
    }
    return d2;
  };
  if (x.norm() < 1e-300) return std::sqrt(gamma / lmax);

  double lo, hi;
  if (g(0.0) >= gamma) {
    // x outside: nu >= 0, g decreases to 0
    lo = 0.0;
    hi = 1.0;
    while (g(hi) > gamma) hi *= 2.0;
  } else {
    // x inside: the multiplier lives in (-1/lmax, 0). If x has no component
    // on the lambda_max eigenspace, g stays bounded there and the nearest
    // point picks up a free component in that eigenspace (nu = -1/lmax).
    const double nu_lim = -1.0 / lmax;
    double g_lim = 0.0;
    bool has_max_component = false;
    for (int i = 0; i < z.size(); ++i) {
      if (eigvals_[i] > lmax * (1.0 - 1e-12)) {
        if (std::abs(z[i]) > 1e-14 * (1.0 + x.norm())) has_max_component = true;
      } else {
        const double den = 1.0 - eigvals_[i] / lmax;
        g_lim += eigvals_[i] * z[i] * z[i] / (den * den);
      }
    }
    if (!has_max_component && g_lim < gamma) {
      double d2 = (gamma - g_lim) / lmax;
      for (int i = 0; i < z.size(); ++i) {
        if (eigvals_[i] > lmax * (1.0 - 1e-12)) {
          d2 += z[i] * z[i];  // displaced fully onto the shell component
        } else {
          const double w = nu_lim * eigvals_[i] / (1.0 + nu_lim * eigvals_[i]);
          d2 += w * w * z[i] * z[i];
        }
      }
      return std::sqrt(d2);
    }
    hi = 0.0;
    lo = nu_lim;
    double probe = lo + (hi - lo) * 1e-12;
    for (int it = 0; it < 2000 && g(probe) < gamma; ++it) probe = lo + (probe - lo) * 1e-2;
    lo = probe;
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (g(mid) > gamma)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-14 * (1.0 + std::abs(hi))) break;
  }
  return std::sqrt(displacement(0.5 * (lo + hi)));
}

bool Ring::contains(const Vec& x) const {
  const double lv = level(x);
  if (interval_.gamma1 <= lv && lv <= interval_.gamma2) return true;
  if (delta_ == 0.0) return false;
  if (lv > interval_.gamma2) {
    // quick accept along the ray, then the exact shell distance
    const double ray = x.norm() * (1.0 - std::sqrt(interval_.gamma2 / lv));
    if (ray <= delta_) return true;
    // quick reject: ||x - y|| >= (|x|_P - |y|_P) / sqrt(lmax)
    const double lower = (std::sqrt(lv) - std::sqrt(interval_.gamma2)) / std::sqrt(eigvals_.maxCoeff());
    if (lower > delta_) return false;
    return distance_to_shell(x, interval_.gamma2) <= delta_;
  }
  const double ray = x.norm() * (std::sqrt(interval_.gamma1 / std::max(lv, 1e-300)) - 1.0);
  if (lv > 0.0 && ray <= delta_) return true;
  const double lower = (std::sqrt(interval_.gamma1) - std::sqrt(lv)) / std::sqrt(eigvals_.maxCoeff());
  if (lower > delta_) return false;
  return distance_to_shell(x, interval_.gamma1) <= delta_;
}

std::vector<int> ring_indices(const DataSet& data, const Ring& ring) {
  std::vector<int> idx;
  if (data.size() == 0) return idx;
  if (data.dim() != ring.p().rows()) throw DimensionMismatch("ring_indices: dimension");
  Vec levels(data.size());
  linalg::PointsAdapter pts(data.x);
  kernels::batch_quad_form(ring.p().data(), pts.view(), levels.data());
  for (int i = 0; i < data.size(); ++i) {
    const double lv = levels[i];
    if (ring.interval().gamma1 <= lv && lv <= ring.interval().gamma2) {
      idx.push_back(i);
    } else if (ring.delta() > 0.0 && ring.contains(data.x.row(i).transpose())) {
      idx.push_back(i);
    }
  }
  return idx;
}

double estimate_lipschitz(const DataSet& data, const Mat& p, const std::vector<int>& idx) {
  if (idx.size() < 2) throw TooFewPoints("estimate_lipschitz: need at least two ring samples");
  Vec f(long(idx.size()));
  for (size_t k = 0; k < idx.size(); ++k) {
    const Vec x = data.x.row(idx[k]).transpose();
    const Vec d = data.d.row(idx[k]).transpose();
    f[long(k)] = x.dot(p * d);
  }
  double best = 0.0;
  for (size_t a = 0; a < idx.size(); ++a)
    for (size_t b = a + 1; b < idx.size(); ++b) {
      const double dist = (data.x.row(idx[a]) - data.x.row(idx[b])).norm();
      if (dist < 1e-12) continue;
      best = std::max(best, std::abs(f[long(a)] - f[long(b)]) / dist);
    }
  return 2.0 * best;
}

namespace {

// negated (8c) block for sample x_k with target p_k and ball radius delta:
// [[Q + l I, -l x], [-l x^T, l (x^T x - delta^2) - p]] >= 0 with l >= 0
int add_sample_block(conic::ConicProblem& prob, const std::vector<int>& q_vars, int n,
                     const Vec& x, double target, double delta) {
  const int lambda = prob.add_scalar();
  {
    conic::LinearRow row;  // -lambda <= 0
    row.a.emplace_back(lambda, -1.0);
    row.b = 0.0;
    prob.add_linear_le(std::move(row));
  }
  conic::AffineMat blk;
  blk.dim = n + 1;
  blk.constant = Mat::Zero(n + 1, n + 1);
  blk.constant(n, n) = -target;
  int k = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= j; ++i) {
      Mat c = Mat::Zero(n + 1, n + 1);
      c.topLeftCorner(n, n) = conic::ConicProblem::sym_basis(n, i, j);
      blk.terms.emplace_back(q_vars[size_t(k)], std::move(c));
      ++k;
    }
  Mat cl = Mat::Zero(n + 1, n + 1);
  cl.topLeftCorner(n, n) = Mat::Identity(n, n);
  cl.block(0, n, n, 1) = -x;
  cl.block(n, 0, 1, n) = -x.transpose();
  cl(n, n) = x.squaredNorm() - delta * delta;
  blk.terms.emplace_back(lambda, std::move(cl));
  prob.add_psd(std::move(blk));
  return lambda;
}

std::vector<std::pair<int, double>> quad_features(const std::vector<int>& q_vars, int n,
                                                  const Vec& x) {
  std::vector<std::pair<int, double>> f;
  int k = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= j; ++i) {
      const double c = (i == j) ? x[i] * x[i] : 2.0 * x[i] * x[j];
      if (c != 0.0) f.emplace_back(q_vars[size_t(k)], c);
      ++k;
    }
  return f;
}

// negated (8c) block at a solved (q, lambda) pair, for the residual audit
Mat sproc_block(const Mat& q, double lambda, const Vec& x, double target, double delta) {
  const int n = int(x.size());
  Mat blk(n + 1, n + 1);
  blk.topLeftCorner(n, n) = q + lambda * Mat::Identity(n, n);
  blk.block(0, n, n, 1) = -lambda * x;
  blk.block(n, 0, 1, n) = -lambda * x.transpose();
  blk(n, n) = lambda * (x.squaredNorm() - delta * delta) - target;
  return blk;
}

Mat solve_chunk(const Mat& points, const Vec& targets, double delta, const Mat* floor_q,
                double* fit_residual, double* min_eig) {
  const int n = int(points.cols());
  conic::ConicProblem prob;
  const auto q_vars = prob.add_symmetric(n);
  std::vector<int> lambda_vars;
  for (int r = 0; r < points.rows(); ++r) {
    const Vec x = points.row(r).transpose();
    lambda_vars.push_back(add_sample_block(prob, q_vars, n, x, targets[r], delta));
    prob.add_squared_term(quad_features(q_vars, n, x), targets[r]);
  }
  // entries of Q never touched by a data feature (coordinates the samples do
  // not excite) are otherwise free to drift; a negligible Frobenius pull
  // keeps them at the smallest feasible values
  for (int v : q_vars) prob.add_squared_term({{v, 1.0}}, 0.0, 1e-6);
  if (floor_q) {
    conic::AffineMat blk;  // Q - Q_prev >= 0
    blk.dim = n;
    blk.constant = -*floor_q;
    int k = 0;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i <= j; ++i) {
        blk.terms.emplace_back(q_vars[size_t(k)], conic::ConicProblem::sym_basis(n, i, j));
        ++k;
      }
    prob.add_psd(std::move(blk));
  }
  auto sol = prob.solve();
  if (sol.status == conic::SolveStatus::Infeasible)
    throw Infeasible("quadratic bound SDP infeasible on this interval");
  if (!sol.optimal()) throw NumericalFailure("quadratic bound SDP: " + sol.message);
  if (fit_residual) *fit_residual = sol.objective;
  Mat q = conic::ConicProblem::extract_symmetric(sol.x, q_vars, n);
  if (min_eig) {
    double worst = std::numeric_limits<double>::infinity();
    for (int r = 0; r < points.rows(); ++r)
      worst = std::min(worst, linalg::min_eigenvalue(sproc_block(
                                  q, sol.x[lambda_vars[size_t(r)]], points.row(r).transpose(),
                                  targets[r], delta)));
    *min_eig = worst;
  }
  return q;
}

}  // namespace

Mat solve_quad_bound_sdp(const Mat& points, const Vec& targets, double delta,
                         std::optional<int> chunk_size, std::vector<Mat>* chain,
                         double* fit_residual, double* sproc_min_eig) {
  const long count = points.rows();
  if (count == 0) throw EmptyRing("solve_quad_bound_sdp: no samples");
  const int chunk = chunk_size.value_or(500);
  if (count <= chunk)
    return solve_chunk(points, targets, delta, nullptr, fit_residual, sproc_min_eig);

  Mat q;
  double worst = std::numeric_limits<double>::infinity();
  for (long start = 0; start < count; start += chunk) {
    const long len = std::min(long(chunk), count - start);
    const Mat pts = points.middleRows(start, len);
    const Vec tg = targets.segment(start, len);
    double chunk_eig = 0.0;
    q = solve_chunk(pts, tg, delta, start == 0 ? nullptr : &q, fit_residual,
                    sproc_min_eig ? &chunk_eig : nullptr);
    worst = std::min(worst, chunk_eig);
    if (chain) chain->push_back(q);
  }
  if (sproc_min_eig) *sproc_min_eig = worst;
  return q;
}

QuadraticBound bound_nonlinearity_lipschitz(const DataSet& data, const Mat& p,
                                            const Interval& interval, double delta, double l,
                                            const LipschitzBoundOptions& opts) {
  if (l < 0.0) throw Error("bound_nonlinearity_lipschitz: L must be >= 0");
  if (interval.gamma2 > opts.gamma_bar * (1.0 + 1e-12))
    throw AssumptionViolated("interval exceeds gamma_bar = " + std::to_string(opts.gamma_bar));
  if (opts.region) verify_covering(data, *opts.region);

  const Ring ring(p, interval, delta);
  const auto idx = ring_indices(data, ring);
  if (idx.empty()) throw EmptyRing("bound_nonlinearity_lipschitz: no data in the ring");

  Mat points(long(idx.size()), data.dim());
  Vec targets(long(idx.size()));
  for (size_t k = 0; k < idx.size(); ++k) {
    const Vec x = data.x.row(idx[k]).transpose();
    const Vec d = data.d.row(idx[k]).transpose();
    points.row(long(k)) = x.transpose();
    targets[long(k)] = x.dot(p * d) + delta * l;
  }

  QuadraticBound bound;
  bound.interval = interval;
  bound.kind = QuadraticBound::Kind::Lipschitz;
  bound.q = solve_quad_bound_sdp(points, targets, delta, opts.chunk_size, &bound.chain,
                                 &bound.fit_residual, &bound.sproc_min_eig);
  if (opts.lipschitz_estimated)
    bound.warnings.push_back(
        "L estimated from ring data (factor-2 pairwise slopes); the estimate may "
        "under-approximate the true local Lipschitz constant");
  return bound;
}

}  // namespace safenv
