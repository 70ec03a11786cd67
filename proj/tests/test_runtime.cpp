#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "safenvelope/errors.hpp"
#include "safenvelope/runtime_sim.hpp"
#include "safenvelope/safe_set.hpp"

using namespace safenv;

namespace {

Polytope box(int n, double half) {
  Mat a(2 * n, n);
  Vec b = Vec::Constant(2 * n, half);
  a.setZero();
  for (int i = 0; i < n; ++i) {
    a(2 * i, i) = 1.0;
    a(2 * i + 1, i) = -1.0;
  }
  return Polytope(a, b);
}

NonlinearityOracle zero_oracle(int n) {
  return {[n](const Vec&) { return Vec(Vec::Zero(n)); }, 0.0, "zero"};
}

SafeCertificate stable_scalar_cert() {
  // x' = x + u, safe set |x| <= 2 with K = -2 (closed loop x' = -x)
  SafeCertificate cert;
  cert.p = Mat::Constant(1, 1, 0.25);
  cert.e = Mat::Constant(1, 1, 4.0);
  cert.gamma = 1.0;
  cert.k = Mat::Constant(1, 1, -2.0);
  cert.y = cert.gamma * cert.k * cert.e;
  cert.interval = {0.9, 1.0};
  cert.bound.q = Mat::Zero(1, 1);
  cert.bound.interval = cert.interval;
  return cert;
}

}  // namespace

TEST_CASE("rk4 matches the exponential to fourth order") {
  LinearModel m(Mat::Constant(1, 1, -1.0), Mat::Constant(1, 1, 0.0));
  Vec x = Vec::Constant(1, 1.0);
  for (int i = 0; i < 100; ++i) x = rk4_step(m, zero_oracle(1), x, Vec::Zero(1), 0.01);
  CHECK(std::abs(x[0] - std::exp(-1.0)) < 1e-8);
}

TEST_CASE("rk4 trivial fields") {
  LinearModel still(Mat::Zero(1, 1), Mat::Zero(1, 1));
  CHECK(rk4_step(still, zero_oracle(1), Vec::Constant(1, 0.7), Vec::Zero(1), 0.5)[0] ==
        doctest::Approx(0.7));
  LinearModel driven(Mat::Zero(1, 1), Mat::Identity(1, 1));
  CHECK(rk4_step(driven, zero_oracle(1), Vec::Constant(1, 1.0), Vec::Constant(1, 2.0), 0.5)[0] ==
        doctest::Approx(2.0));
}

TEST_CASE("safety filter branch logic") {
  const SafeCertificate cert = stable_scalar_cert();
  const Polytope u_box = box(1, 2.0);
  FilterConfig cfg;

  // interior state, admissible desired input: pass through
  auto [u1, a1] = safety_filter(Vec::Constant(1, 1.0), Vec::Constant(1, 0.5), cert, u_box, cfg);
  CHECK_FALSE(a1);
  CHECK(u1[0] == doctest::Approx(0.5));

  // boundary shell: safe action
  auto [u2, a2] = safety_filter(Vec::Constant(1, 1.999), Vec::Constant(1, 0.5), cert, u_box, cfg);
  CHECK(a2);
  CHECK(u2[0] == doctest::Approx(-2.0 * 1.999));

  // inadmissible desired input from the interior: safe action
  auto [u3, a3] = safety_filter(Vec::Constant(1, 0.5), Vec::Constant(1, 7.0), cert, u_box, cfg);
  CHECK(a3);
  CHECK(u3[0] == doctest::Approx(-1.0));

  // outside the set: contract breach
  CHECK_THROWS_AS(safety_filter(Vec::Constant(1, 2.5), Vec::Zero(1), cert, u_box, cfg),
                  OutsideSafeSet);
}

TEST_CASE("filter is idempotent for the safe gain on the boundary") {
  const SafeCertificate cert = stable_scalar_cert();
  const Vec x = Vec::Constant(1, 1.999);
  const Vec ubar = cert.k * x;
  auto [u, active] = safety_filter(x, ubar, cert, box(1, 10.0), FilterConfig{});
  CHECK(active);
  CHECK(u[0] == doctest::Approx(ubar[0]));
}

TEST_CASE("simulation with a stable loop never activates") {
  LinearModel m(Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, 1.0));
  const SafeCertificate cert = stable_scalar_cert();
  auto policy = [&](double, const Vec& x) { return Vec(cert.k * x); };
  const Trajectory traj =
      simulate(m, zero_oracle(1), cert, box(1, 10.0), policy, Vec::Constant(1, 0.5), 2.0, 1e-3,
               FilterConfig{});
  CHECK(traj.activation_steps() == 0);
  CHECK(traj.max_level(cert.p) <= cert.gamma * (1.0 + 1e-3));
  CHECK(std::abs(traj.states(traj.steps(), 0)) < 0.1);  // converged toward 0
}

TEST_CASE("inadmissible desired input keeps the filter on") {
  LinearModel m(Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, 1.0));
  const SafeCertificate cert = stable_scalar_cert();
  auto policy = [](double, const Vec&) { return Vec(Vec::Constant(1, 100.0)); };
  const Trajectory traj = simulate(m, zero_oracle(1), cert, box(1, 2.0), policy,
                                   Vec::Constant(1, 0.5), 1.0, 1e-3, FilterConfig{});
  CHECK(traj.activation_steps() == traj.steps());
  CHECK(traj.episodes() == 1);
}

TEST_CASE("simulation rejects starts outside the set") {
  LinearModel m(Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, 1.0));
  const SafeCertificate cert = stable_scalar_cert();
  auto policy = [](double, const Vec&) { return Vec(Vec::Zero(1)); };
  CHECK_THROWS_AS(simulate(m, zero_oracle(1), cert, box(1, 2.0), policy, Vec::Constant(1, 2.5),
                           1.0, 1e-3, FilterConfig{}),
                  OutsideSafeSet);
}

TEST_CASE("episode counting") {
  Trajectory traj;
  traj.safety_active = {0, 1, 1, 0, 1, 0, 0, 1, 1, 1};
  CHECK(traj.episodes() == 3);
  CHECK(traj.activation_steps() == 6);
}

TEST_CASE("hold keeps the safe action for the configured dwell") {
  LinearModel m(Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, 1.0));
  const SafeCertificate cert = stable_scalar_cert();
  // one early inadmissible request, admissible afterwards
  auto policy = [](double t, const Vec&) {
    return Vec(Vec::Constant(1, t < 0.5e-3 ? 100.0 : 0.0));
  };
  FilterConfig cfg;
  cfg.hold_steps = 10;
  const Trajectory traj =
      simulate(m, zero_oracle(1), cert, box(1, 2.0), policy, Vec::Constant(1, 0.1), 0.05, 1e-3,
               cfg);
  CHECK(traj.activation_steps() == 10);
  CHECK(traj.episodes() == 1);
}

TEST_CASE("ellipsoid volume closed form") {
  CHECK(ellipsoid_volume(Mat::Identity(2, 2), 1.0) == doctest::Approx(std::numbers::pi));
  // {0.25 x^2 <= 4} is |x| <= 4 in 1D
  CHECK(ellipsoid_volume(Mat::Constant(1, 1, 0.25), 4.0) == doctest::Approx(8.0));
  // doubling gamma in 2D doubles the area
  CHECK(ellipsoid_volume(Mat::Identity(2, 2), 2.0) ==
        doctest::Approx(2.0 * std::numbers::pi).epsilon(1e-12));
}

TEST_CASE("exploration rejects a recompute period below the step") {
  LinearModel m(Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, 1.0));
  const SafeCertificate cert = stable_scalar_cert();
  DataSet data;
  data.x = Mat::Zero(1, 1);
  data.d = Mat::Zero(1, 1);
  ExplorationSchedule sched;
  sched.recompute_period = 1e-4;
  sched.prior = GpPrior::isotropic(1, 1.0, 1.0);
  class Zero : public Learner {
   public:
    Vec desired(double, const Vec&) override { return Vec::Zero(1); }
    void end_period(double, const SafeCertificate&) override {}
  } learner;
  CHECK_THROWS_AS(explore(m, {[](const Vec&) { return Vec(Vec::Zero(1)); }, 0.0, "zero"},
                          box(1, 2.0), box(1, 2.0), data, sched, learner, cert,
                          Vec::Constant(1, 0.1), 0.01, 1e-3, FilterConfig{}),
                  ConfigInvalid);
}
