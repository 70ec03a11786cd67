#include "safenvelope/kernels.hpp"

namespace safenv::kernels {

namespace detail {
void batch_sq_dist_scalar(const double* q, const PointsView& pts, double* out);
double min_sq_dist_scalar(const double* q, const PointsView& pts, std::ptrdiff_t* argmin);
void batch_quad_form_scalar(const double* q_colmajor, const PointsView& pts, double* out);
void batch_sq_dist_avx2(const double* q, const PointsView& pts, double* out);
double min_sq_dist_avx2(const double* q, const PointsView& pts, std::ptrdiff_t* argmin);
void batch_quad_form_avx2(const double* q_colmajor, const PointsView& pts, double* out);
}  // namespace detail

namespace {

bool cpu_has_avx2() {
#if defined(__GNUC__) && defined(__x86_64__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend g_requested = Backend::Auto;

bool use_avx2() {
  switch (g_requested) {
    case Backend::Scalar: return false;
    case Backend::Avx2: return true;
    case Backend::Auto: break;
  }
  static const bool has = cpu_has_avx2();
  return has;
}

}  // namespace

void set_backend(Backend b) { g_requested = b; }

Backend active_backend() { return use_avx2() ? Backend::Avx2 : Backend::Scalar; }

void batch_sq_dist(const double* q, const PointsView& pts, double* out) {
  if (use_avx2())
    detail::batch_sq_dist_avx2(q, pts, out);
  else
    detail::batch_sq_dist_scalar(q, pts, out);
}

double min_sq_dist(const double* q, const PointsView& pts, std::ptrdiff_t* argmin) {
  return use_avx2() ? detail::min_sq_dist_avx2(q, pts, argmin)
                    : detail::min_sq_dist_scalar(q, pts, argmin);
}

void batch_quad_form(const double* q_colmajor, const PointsView& pts, double* out) {
  if (use_avx2())
    detail::batch_quad_form_avx2(q_colmajor, pts, out);
  else
    detail::batch_quad_form_scalar(q_colmajor, pts, out);
}

}  // namespace safenv::kernels
