#include "safenvelope/kernels.hpp"

#include <limits>

namespace safenv::kernels::detail {

void batch_sq_dist_scalar(const double* q, const PointsView& pts, double* out) {
  const std::ptrdiff_t count = pts.count;
  for (std::ptrdiff_t i = 0; i < count; ++i) out[i] = 0.0;
  for (int c = 0; c < pts.dim; ++c) {
    const double qc = q[c];
    const double* xc = pts.coords[c];
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      const double d = qc - xc[i];
      out[i] += d * d;
    }
  }
}

double min_sq_dist_scalar(const double* q, const PointsView& pts, std::ptrdiff_t* argmin) {
  double best = std::numeric_limits<double>::infinity();
  std::ptrdiff_t best_i = -1;
  for (std::ptrdiff_t i = 0; i < pts.count; ++i) {
    double s = 0.0;
    for (int c = 0; c < pts.dim; ++c) {
      const double d = q[c] - pts.coords[c][i];
      s += d * d;
    }
    if (s < best) {
      best = s;
      best_i = i;
    }
  }
  if (argmin) *argmin = best_i;
  return best;
}

void batch_quad_form_scalar(const double* q_colmajor, const PointsView& pts, double* out) {
  const int n = pts.dim;
  const std::ptrdiff_t count = pts.count;
  for (std::ptrdiff_t i = 0; i < count; ++i) out[i] = 0.0;
  for (int a = 0; a < n; ++a) {
    // acc_i = sum_b Q(a,b) x_i[b], then out_i += x_i[a] * acc_i
    const double* xa = pts.coords[a];
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      double acc = 0.0;
      for (int b = 0; b < n; ++b) acc += q_colmajor[a + std::size_t(b) * n] * pts.coords[b][i];
      out[i] += xa[i] * acc;
    }
  }
}

}  // namespace safenv::kernels::detail
