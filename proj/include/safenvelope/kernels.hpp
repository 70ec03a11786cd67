#pragma once

#include <cstddef>

namespace safenv::kernels {

// Point sets are stored structure-of-arrays: one contiguous array per
// coordinate, `count` points each. An Eigen column-major N x n matrix
// satisfies this layout directly (each column is one coordinate).
struct PointsView {
  const double* const* coords;  // n pointers, each to `count` doubles
  int dim = 0;
  std::ptrdiff_t count = 0;
};

enum class Backend { Auto, Scalar, Avx2 };

/// Force a backend (tests use this to compare scalar vs SIMD paths).
void set_backend(Backend b);
Backend active_backend();

/// out[i] = ||q - x_i||^2.
void batch_sq_dist(const double* q, const PointsView& pts, double* out);

/// Returns min_i ||q - x_i||^2; *argmin (if non-null) receives the lowest
/// index attaining the minimum.
double min_sq_dist(const double* q, const PointsView& pts, std::ptrdiff_t* argmin);

/// out[i] = x_i^T Q x_i, with Q a dense symmetric dim x dim matrix in
/// column-major storage.
void batch_quad_form(const double* q_colmajor, const PointsView& pts, double* out);

}  // namespace safenv::kernels
