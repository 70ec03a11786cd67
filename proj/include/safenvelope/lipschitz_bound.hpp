#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "safenvelope/system_model.hpp"

namespace safenv {

/// Level interval [gamma1, gamma2], 0 < gamma1 < gamma2.
struct Interval {
  double gamma1 = 0.0;
  double gamma2 = 0.0;

  double width() const { return gamma2 - gamma1; }
};

/// Contiguous intervals descending from gamma_bar:
/// [g - w1, g], [g - w1 - w2, g - w1], ...
std::vector<Interval> make_intervals(double gamma_bar, const std::vector<double>& widths);

/// Fixed-width schedule starting one width below gamma_bar:
/// [g - (i+1) w, g - i w] for i = 1..count.
std::vector<Interval> make_intervals_schedule(double gamma_bar, double width, int count);

/// Annulus {gamma1 <= x^T P x <= gamma2} dilated by a Euclidean delta-ball.
class Ring {
 public:
  Ring(Mat p, Interval interval, double delta);

  /// membership in the dilated ring
  bool contains(const Vec& x) const;
  /// membership in the closed level annulus (no dilation)
  bool contains_core(const Vec& x) const {
    const double lv = level(x);
    return interval_.gamma1 <= lv && lv <= interval_.gamma2;
  }
  double level(const Vec& x) const { return x.dot(p_ * x); }
  /// Euclidean distance from x to the shell {y^T P y = gamma}
  double distance_to_shell(const Vec& x, double gamma) const;

  const Mat& p() const { return p_; }
  const Interval& interval() const { return interval_; }
  double delta() const { return delta_; }
  double eig_min() const { return eigvals_.minCoeff(); }
  double eig_max() const { return eigvals_.maxCoeff(); }

 private:
  Mat p_;
  Interval interval_;
  double delta_;
  Vec eigvals_;
  Mat eigvecs_;
};

/// Indices of data samples inside the dilated ring.
std::vector<int> ring_indices(const DataSet& data, const Ring& ring);

/// Data-driven local Lipschitz estimate of x -> x^T P d(x) over the ring
/// samples (includes the published factor of two).
double estimate_lipschitz(const DataSet& data, const Mat& p, const std::vector<int>& idx);

struct QuadraticBound {
  Mat q;
  Interval interval;
  enum class Kind { Lipschitz, Gp, GpGrid } kind = Kind::Lipschitz;
  double confidence = 0.0;     // c for Gp, beta for GpGrid
  double fit_residual = 0.0;   // least-squares objective at the solution
  double sproc_min_eig = 0.0;  // worst min-eig of the negated (multiplier) blocks
  std::vector<Mat> chain;      // intermediate bounds from the chunked solve
  int iterations = 0;          // refinement iterations (GP path)
  bool converged = true;
  double audit_max_violation = 0.0;
  int search_restarts = 0;
  std::vector<std::string> warnings;
};

struct LipschitzBoundOptions {
  std::optional<int> chunk_size;       // engage chunking above this many samples
  double gamma_bar = std::numeric_limits<double>::infinity();
  const DataRegion* region = nullptr;  // when set, the covering assumption is audited
  bool lipschitz_estimated = false;    // marks the soundness caveat in the result
};

/// First-stage S-procedure SDP: quadratic form Q with
/// x^T P d(x) <= x^T Q x on the ring, built from the ring data and the
/// Lipschitz slack delta * L.
QuadraticBound bound_nonlinearity_lipschitz(const DataSet& data, const Mat& p,
                                            const Interval& interval, double delta, double l,
                                            const LipschitzBoundOptions& opts = {});

/// Shared SDP core: least-squares fit of Q to targets p_k subject to the
/// per-sample ball implications (S-procedure blocks of radius `delta`).
Mat solve_quad_bound_sdp(const Mat& points, const Vec& targets, double delta,
                         std::optional<int> chunk_size, std::vector<Mat>* chain,
                         double* fit_residual, double* sproc_min_eig = nullptr);

}  // namespace safenv
