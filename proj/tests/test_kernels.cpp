#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "safenvelope/kernels.hpp"
#include "safenvelope/linalg.hpp"

using namespace safenv;

namespace {

Mat random_points(int count, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 2.0);
  Mat pts(count, dim);
  for (int i = 0; i < count; ++i)
    for (int j = 0; j < dim; ++j) pts(i, j) = dist(rng);
  return pts;
}

}  // namespace

TEST_CASE("scalar and avx2 kernels agree") {
  if (kernels::active_backend() != kernels::Backend::Avx2) {
    MESSAGE("AVX2 not available; dispatch equivalence is vacuous here");
    return;
  }
  std::mt19937_64 rng(7);
  std::normal_distribution<double> dist(0.0, 1.5);
  for (int trial = 0; trial < 50; ++trial) {
    const int dim = 1 + int(rng() % 9);
    const int count = 1 + int(rng() % 300);
    const Mat pts = random_points(count, dim, rng());
    Vec q(dim);
    for (int j = 0; j < dim; ++j) q[j] = dist(rng);
    Mat sym = random_points(dim, dim, rng());
    sym = (0.5 * (sym + sym.transpose())).eval();

    linalg::PointsAdapter adapter(pts);
    Vec out_scalar(count), out_simd(count);

    kernels::set_backend(kernels::Backend::Scalar);
    kernels::batch_sq_dist(q.data(), adapter.view(), out_scalar.data());
    kernels::set_backend(kernels::Backend::Avx2);
    kernels::batch_sq_dist(q.data(), adapter.view(), out_simd.data());
    CHECK((out_scalar - out_simd).lpNorm<Eigen::Infinity>() < 1e-12);

    kernels::set_backend(kernels::Backend::Scalar);
    kernels::batch_quad_form(sym.data(), adapter.view(), out_scalar.data());
    kernels::set_backend(kernels::Backend::Avx2);
    kernels::batch_quad_form(sym.data(), adapter.view(), out_simd.data());
    CHECK((out_scalar - out_simd).lpNorm<Eigen::Infinity>() < 1e-10);

    std::ptrdiff_t arg_scalar = -1, arg_simd = -1;
    kernels::set_backend(kernels::Backend::Scalar);
    const double min_scalar = kernels::min_sq_dist(q.data(), adapter.view(), &arg_scalar);
    kernels::set_backend(kernels::Backend::Avx2);
    const double min_simd = kernels::min_sq_dist(q.data(), adapter.view(), &arg_simd);
    CHECK(min_scalar == doctest::Approx(min_simd).epsilon(1e-12));
    CHECK(arg_scalar == arg_simd);
  }
  kernels::set_backend(kernels::Backend::Auto);
}

TEST_CASE("min_sq_dist tie goes to the lowest index on both backends") {
  // two exact duplicates of the nearest point at indices 2 and 5
  Mat pts(8, 2);
  pts << 5, 5, 4, 4, 1, 1, 3, 3, 6, 6, 1, 1, 2, 2, 7, 7;
  Vec q(2);
  q << 1, 1;
  linalg::PointsAdapter adapter(pts);
  for (auto backend : {kernels::Backend::Scalar, kernels::Backend::Avx2}) {
    if (backend == kernels::Backend::Avx2 &&
        kernels::active_backend() != kernels::Backend::Avx2)
      continue;
    kernels::set_backend(backend);
    std::ptrdiff_t arg = -1;
    const double d = kernels::min_sq_dist(q.data(), adapter.view(), &arg);
    CHECK(d == doctest::Approx(0.0));
    CHECK(arg == 2);
  }
  kernels::set_backend(kernels::Backend::Auto);
}

TEST_CASE("batch_quad_form matches Eigen") {
  const Mat pts = random_points(37, 3, 99);
  Mat sym(3, 3);
  sym << 2, -1, 0, -1, 3, 0.5, 0, 0.5, 1;
  linalg::PointsAdapter adapter(pts);
  Vec out(37);
  kernels::batch_quad_form(sym.data(), adapter.view(), out.data());
  for (int i = 0; i < 37; ++i) {
    const Vec x = pts.row(i).transpose();
    CHECK(out[i] == doctest::Approx(x.dot(sym * x)).epsilon(1e-12));
  }
}
