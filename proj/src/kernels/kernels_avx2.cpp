#include "safenvelope/kernels.hpp"

#include <immintrin.h>

#include <cstdint>
#include <limits>

// Compiled with -mavx2 -mfma; callers must gate on runtime CPU support.

namespace safenv::kernels::detail {

void batch_sq_dist_avx2(const double* q, const PointsView& pts, double* out) {
  const std::ptrdiff_t count = pts.count;
  const std::ptrdiff_t tail = count % 4;
  const std::ptrdiff_t main = count - tail;
  const int n = pts.dim;

  for (std::ptrdiff_t i = 0; i < main; i += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (int c = 0; c < n; ++c) {
      const __m256d qc = _mm256_set1_pd(q[c]);
      const __m256d x = _mm256_loadu_pd(pts.coords[c] + i);
      const __m256d d = _mm256_sub_pd(qc, x);
      acc = _mm256_fmadd_pd(d, d, acc);
    }
    _mm256_storeu_pd(out + i, acc);
  }
  for (std::ptrdiff_t i = main; i < count; ++i) {
    double s = 0.0;
    for (int c = 0; c < n; ++c) {
      const double d = q[c] - pts.coords[c][i];
      s += d * d;
    }
    out[i] = s;
  }
}

double min_sq_dist_avx2(const double* q, const PointsView& pts, std::ptrdiff_t* argmin) {
  const std::ptrdiff_t count = pts.count;
  const std::ptrdiff_t tail = count % 4;
  const std::ptrdiff_t main = count - tail;
  const int n = pts.dim;

  __m256d best = _mm256_set1_pd(std::numeric_limits<double>::infinity());
  __m256i best_idx = _mm256_set1_epi64x(-1);
  __m256i idx = _mm256_set_epi64x(3, 2, 1, 0);
  const __m256i idx_step = _mm256_set1_epi64x(4);

  for (std::ptrdiff_t i = 0; i < main; i += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (int c = 0; c < n; ++c) {
      const __m256d qc = _mm256_set1_pd(q[c]);
      const __m256d x = _mm256_loadu_pd(pts.coords[c] + i);
      const __m256d d = _mm256_sub_pd(qc, x);
      acc = _mm256_fmadd_pd(d, d, acc);
    }
    // strict less-than keeps the earliest index on ties
    const __m256d lt = _mm256_cmp_pd(acc, best, _CMP_LT_OQ);
    best = _mm256_blendv_pd(best, acc, lt);
    best_idx = _mm256_blendv_epi8(best_idx, idx, _mm256_castpd_si256(lt));
    idx = _mm256_add_epi64(idx, idx_step);
  }

  alignas(32) double lane_val[4];
  alignas(32) std::int64_t lane_idx[4];
  _mm256_store_pd(lane_val, best);
  _mm256_store_si256(reinterpret_cast<__m256i*>(lane_idx), best_idx);

  double best_s = std::numeric_limits<double>::infinity();
  std::ptrdiff_t best_i = -1;
  // lanes hold ascending indices within each round; scanning lanes by
  // stored index keeps the tie rule identical to the scalar path
  for (int pass = 0; pass < 4; ++pass) {
    int pick = -1;
    std::int64_t pick_idx = std::numeric_limits<std::int64_t>::max();
    for (int l = 0; l < 4; ++l) {
      if (lane_idx[l] >= 0 && lane_idx[l] < pick_idx) {
        pick = l;
        pick_idx = lane_idx[l];
      }
    }
    if (pick < 0) break;
    if (lane_val[pick] < best_s) {
      best_s = lane_val[pick];
      best_i = lane_idx[pick];
    }
    lane_idx[pick] = -1;
  }

  for (std::ptrdiff_t i = main; i < count; ++i) {
    double s = 0.0;
    for (int c = 0; c < n; ++c) {
      const double d = q[c] - pts.coords[c][i];
      s += d * d;
    }
    if (s < best_s) {
      best_s = s;
      best_i = i;
    }
  }
  if (argmin) *argmin = best_i;
  return best_s;
}

void batch_quad_form_avx2(const double* q_colmajor, const PointsView& pts, double* out) {
  const int n = pts.dim;
  const std::ptrdiff_t count = pts.count;
  const std::ptrdiff_t tail = count % 4;
  const std::ptrdiff_t main = count - tail;

  for (std::ptrdiff_t i = 0; i < main; i += 4) {
    __m256d total = _mm256_setzero_pd();
    for (int a = 0; a < n; ++a) {
      __m256d acc = _mm256_setzero_pd();
      for (int b = 0; b < n; ++b) {
        const __m256d qab = _mm256_set1_pd(q_colmajor[a + std::size_t(b) * n]);
        const __m256d xb = _mm256_loadu_pd(pts.coords[b] + i);
        acc = _mm256_fmadd_pd(qab, xb, acc);
      }
      const __m256d xa = _mm256_loadu_pd(pts.coords[a] + i);
      total = _mm256_fmadd_pd(xa, acc, total);
    }
    _mm256_storeu_pd(out + i, total);
  }
  for (std::ptrdiff_t i = main; i < count; ++i) {
    double total = 0.0;
    for (int a = 0; a < n; ++a) {
      double acc = 0.0;
      for (int b = 0; b < n; ++b) acc += q_colmajor[a + std::size_t(b) * n] * pts.coords[b][i];
      total += pts.coords[a][i] * acc;
    }
    out[i] = total;
  }
}

}  // namespace safenv::kernels::detail
