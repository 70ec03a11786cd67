#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "safenvelope/conic.hpp"
#include "safenvelope/errors.hpp"

using namespace safenv;
using namespace safenv::conic;

namespace {

// brute-force oracle for the scalar toy program
//   max gamma  s.t. 2 gamma + 2 y <= 0, y^2 <= 4 gamma, gamma <= 4
// (the feasible region is scanned on a dense grid)
std::pair<double, double> toy_program_grid_oracle() {
  double best_g = 0.0, best_y = 0.0;
  for (int gi = 0; gi <= 4000; ++gi) {
    const double g = 4.0 * gi / 4000.0;
    for (int yi = -6000; yi <= 0; ++yi) {
      const double y = 6.0 * yi / 6000.0;
      if (2.0 * g + 2.0 * y <= 1e-12 && y * y <= 4.0 * g + 1e-12 && g > best_g) {
        best_g = g;
        best_y = y;
      }
    }
  }
  return {best_g, best_y};
}

// brute-force oracle for the 1-variable constrained least squares
//   min (q - 1)^2 + (4q - 8)^2  s.t. q >= 1, 4q >= 8
double fit_1d_scan_oracle() {
  double best_q = 0.0, best_v = 1e300;
  for (int i = 0; i <= 400000; ++i) {
    const double q = 4.0 * i / 400000.0;
    if (q < 1.0 || 4.0 * q < 8.0) continue;
    const double v = (q - 1.0) * (q - 1.0) + (4.0 * q - 8.0) * (4.0 * q - 8.0);
    if (v < best_v) {
      best_v = v;
      best_q = q;
    }
  }
  return best_q;
}

}  // namespace

TEST_CASE("feasibility problem: scalar between two bounds") {
  ConicProblem prob;
  const int q = prob.add_scalar();
  LinearRow lo;  // q >= 1
  lo.a.emplace_back(q, -1.0);
  lo.b = -1.0;
  prob.add_linear_le(std::move(lo));
  AffineMat blk;  // 2 - q >= 0
  blk.dim = 1;
  blk.constant = Mat::Constant(1, 1, 2.0);
  blk.terms.emplace_back(q, Mat::Constant(1, 1, -1.0));
  prob.add_psd(std::move(blk));

  const auto sol = prob.solve();
  REQUIRE(sol.optimal());
  CHECK(sol.x[q] >= 1.0);
  CHECK(sol.x[q] <= 2.0);
  CHECK(sol.max_residual == doctest::Approx(0.0));
}

TEST_CASE("log det objective attains its cap: max log det E s.t. E <= 1") {
  ConicProblem prob;
  const int e = prob.add_scalar();
  AffineMat cap;  // 1 - E >= 0
  cap.dim = 1;
  cap.constant = Mat::Constant(1, 1, 1.0);
  cap.terms.emplace_back(e, Mat::Constant(1, 1, -1.0));
  prob.add_psd(std::move(cap));
  AffineMat g;
  g.dim = 1;
  g.constant = Mat::Zero(1, 1);
  g.terms.emplace_back(e, Mat::Constant(1, 1, 1.0));
  prob.set_logdet_term(std::move(g), 1.0);

  const auto sol = prob.solve();
  REQUIRE(sol.optimal());
  CHECK(sol.x[e] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("scalar safe-level toy program matches the grid oracle") {
  const auto [oracle_g, oracle_y] = toy_program_grid_oracle();
  CHECK(oracle_g == doctest::Approx(4.0).epsilon(1e-3));
  CHECK(oracle_y == doctest::Approx(-4.0).epsilon(1e-3));

  ConicProblem prob;
  const int g = prob.add_scalar();
  const int y = prob.add_scalar();
  LinearRow decrease;  // 2g + 2y <= 0
  decrease.a.emplace_back(g, 2.0);
  decrease.a.emplace_back(y, 2.0);
  decrease.b = 0.0;
  prob.add_linear_le(std::move(decrease));
  LinearRow cap;  // g <= 4
  cap.a.emplace_back(g, 1.0);
  cap.b = 4.0;
  prob.add_linear_le(std::move(cap));
  AffineMat schur;  // [[4, y], [y, g]] >= 0  <=>  y^2 <= 4 g
  schur.dim = 2;
  schur.constant = Mat::Zero(2, 2);
  schur.constant(0, 0) = 4.0;
  Mat ey = Mat::Zero(2, 2);
  ey(0, 1) = ey(1, 0) = 1.0;
  schur.terms.emplace_back(y, ey);
  Mat eg = Mat::Zero(2, 2);
  eg(1, 1) = 1.0;
  schur.terms.emplace_back(g, eg);
  prob.add_psd(std::move(schur));
  prob.add_linear_cost(g, -1.0);

  const auto sol = prob.solve();
  REQUIRE(sol.optimal());
  CHECK(sol.x[g] == doctest::Approx(4.0).epsilon(1e-6));
  CHECK(sol.x[y] == doctest::Approx(-4.0).epsilon(1e-4));
}

TEST_CASE("solve objective is stable under small perturbations") {
  auto solve_cap = [](double cap) {
    ConicProblem prob;
    const int g = prob.add_scalar();
    LinearRow hi;
    hi.a.emplace_back(g, 1.0);
    hi.b = cap;
    prob.add_linear_le(std::move(hi));
    LinearRow lo;
    lo.a.emplace_back(g, -1.0);
    lo.b = 0.0;
    prob.add_linear_le(std::move(lo));
    prob.add_linear_cost(g, -1.0);
    const auto sol = prob.solve();
    REQUIRE(sol.optimal());
    return -sol.objective;
  };
  const double base = solve_cap(1.0);
  const double bumped = solve_cap(1.0 + 1e-5);
  CHECK(std::abs(bumped - base) < 1e-4);
}

TEST_CASE("fit_quadratic_upper_bound: exact interpolation on y = x^2") {
  Mat pts(2, 1);
  pts << 1.0, 2.0;
  Vec vals(2);
  vals << 1.0, 4.0;
  const Mat q = fit_quadratic_upper_bound(pts, vals);
  CHECK(q(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("fit_quadratic_upper_bound: active constraint case") {
  CHECK(fit_1d_scan_oracle() == doctest::Approx(2.0).epsilon(1e-4));
  Mat pts(2, 1);
  pts << 1.0, 2.0;
  Vec vals(2);
  vals << 1.0, 8.0;
  const Mat q = fit_quadratic_upper_bound(pts, vals);
  CHECK(q(0, 0) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("fit_quadratic_upper_bound: infeasible at the origin") {
  Mat pts(1, 1);
  pts << 0.0;
  Vec vals(1);
  vals << 0.5;
  CHECK_THROWS_AS(fit_quadratic_upper_bound(pts, vals), Infeasible);
}

TEST_CASE("fit_quadratic_upper_bound upper-bounds every input point") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + int(rng() % 3);
    const int count = 5 + int(rng() % 30);
    Mat pts(count, n);
    Vec vals(count);
    for (int i = 0; i < count; ++i) {
      for (int j = 0; j < n; ++j) pts(i, j) = dist(rng) + 0.1;
      vals[i] = dist(rng);
    }
    const Mat q = fit_quadratic_upper_bound(pts, vals);
    for (int i = 0; i < count; ++i) {
      const Vec x = pts.row(i).transpose();
      CHECK(vals[i] <= x.dot(q * x) + 1e-8);
    }
  }
}

TEST_CASE("covering ellipsoid: symmetric square") {
  Mat pts(4, 2);
  pts << 1, 1, 1, -1, -1, 1, -1, -1;
  const Mat a = min_volume_covering_ellipsoid(pts);
  CHECK(a(0, 0) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(a(1, 1) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(a(0, 1) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("covering ellipsoid: axis-aligned cross, KKT verified") {
  Mat pts(4, 2);
  pts << 2, 0, -2, 0, 0, 1, 0, -1;
  const Mat a = min_volume_covering_ellipsoid(pts);
  CHECK(a(0, 0) == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(a(1, 1) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(a(0, 1)) < 1e-8);
  // all four points are active
  for (int i = 0; i < 4; ++i) {
    const Vec x = pts.row(i).transpose();
    CHECK(x.dot(a * x) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("covering ellipsoid: rank-deficient input") {
  Mat pts(2, 2);
  pts << 1, 0, -1, 0;
  CHECK_THROWS_AS(min_volume_covering_ellipsoid(pts), DegenerateData);
}

TEST_CASE("covering ellipsoid homogeneity: doubling points quarters A") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> dist(0.0, 1.0);
  Mat pts(12, 2);
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 2; ++j) pts(i, j) = dist(rng);
  const Mat a1 = min_volume_covering_ellipsoid(pts);
  const Mat a2 = min_volume_covering_ellipsoid((2.0 * pts).eval());
  CHECK((a2 - 0.25 * a1).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("infeasible SDP is reported as infeasible") {
  ConicProblem prob;
  const int q = prob.add_scalar();
  LinearRow lo;  // q >= 3
  lo.a.emplace_back(q, -1.0);
  lo.b = -3.0;
  prob.add_linear_le(std::move(lo));
  AffineMat cap;  // 1 - q >= 0
  cap.dim = 1;
  cap.constant = Mat::Constant(1, 1, 1.0);
  cap.terms.emplace_back(q, Mat::Constant(1, 1, -1.0));
  prob.add_psd(std::move(cap));
  const auto sol = prob.solve();
  CHECK(sol.status == SolveStatus::Infeasible);
}
