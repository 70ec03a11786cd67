// Acceptance suite: every criterion prints one PASS/FAIL line; the process
// exits with the number of failed criteria.
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "safenvelope/errors.hpp"
#include "safenvelope/gp_bound.hpp"
#include "safenvelope/runtime_sim.hpp"
#include "safenvelope/sampling.hpp"
#include "safenvelope/scenarios.hpp"

using namespace safenv;

namespace {

int failures = 0;

void report(int idx, const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s  %2d. %s  [%s]\n", ok ? "PASS" : "FAIL", idx, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct LmiAudit {
  double cert_min = 0.0;   // worst min-eig over the certificate LMIs
  double bound_min = 0.0;  // worst S-procedure block residual seen
  bool any_bound = false;
};
LmiAudit hygiene;

void audit_certificate(const ScenarioConfig& cfg, const SafeCertificate& cert) {
  const Mat lyap = cfg.model.a * cert.e * cert.gamma +
                   cert.e * cfg.model.a.transpose() * cert.gamma + cfg.model.b * cert.y +
                   cert.y.transpose() * cfg.model.b.transpose() +
                   2.0 * cert.e * cert.bound.q * cert.e * cert.gamma;
  double worst = linalg::min_eigenvalue(-lyap);
  const int n = cfg.model.n();
  for (int j = 0; j < cfg.x_poly.rows(); ++j) {
    Mat blk = Mat::Zero(n + 1, n + 1);
    blk(0, 0) = cfg.x_poly.b_c[j] * cfg.x_poly.b_c[j];
    const Vec ae = cert.gamma * cert.e * cfg.x_poly.a_c.row(j).transpose();
    blk.block(0, 1, 1, n) = ae.transpose();
    blk.block(1, 0, n, 1) = ae;
    blk.bottomRightCorner(n, n) = cert.gamma * cert.e;
    worst = std::min(worst, linalg::min_eigenvalue(blk));
  }
  for (int j = 0; j < cfg.u_poly.rows(); ++j) {
    Mat blk = Mat::Zero(n + 1, n + 1);
    blk(0, 0) = cfg.u_poly.b_c[j] * cfg.u_poly.b_c[j];
    const Vec ay = cert.y.transpose() * cfg.u_poly.a_c.row(j).transpose();
    blk.block(0, 1, 1, n) = ay.transpose();
    blk.block(1, 0, n, 1) = ay;
    blk.bottomRightCorner(n, n) = cert.gamma * cert.e;
    worst = std::min(worst, linalg::min_eigenvalue(blk));
  }
  hygiene.cert_min = std::min(hygiene.cert_min, worst);
  if (cert.bound.kind != QuadraticBound::Kind::Gp) {
    hygiene.bound_min = std::min(hygiene.bound_min, cert.bound.sproc_min_eig);
    hygiene.any_bound = true;
  }
}

}  // namespace

// 1. shape reproduction on the illustrative system
void criterion_shape() {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream detail;
  bool ok = false;
  try {
    auto cfg = builtin_scenario("illustrative2d");
    auto data = prepare_data(cfg);
    auto shape = prepare_shape(cfg, data);
    Mat p_ref(2, 2);
    p_ref << 0.7651, 0.2162, 0.2162, 0.6481;
    const double rel =
        ((shape.shape.p - p_ref).cwiseAbs().array() / p_ref.cwiseAbs().array()).maxCoeff();
    const double elapsed = seconds_since(t0);
    ok = rel < 0.02 && elapsed < 30.0;
    detail << "max elementwise error " << rel * 100.0 << "%, " << elapsed << " s";
  } catch (const Error& e) {
    detail << "error: " << e.what();
  }
  report(1, "illustrative shape reproduction (P within 2%)", ok, detail.str());
}

// 2. illustrative synthesis: gamma* = 1 with a verifying gain
void criterion_synthesis() {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream detail;
  bool ok = false;
  try {
    auto cfg = builtin_scenario("illustrative2d");
    auto data = prepare_data(cfg);
    auto shape = prepare_shape(cfg, data);
    const Ring core(shape.shape.p, {0.9, 1.0}, 0.0);
    const auto idx = ring_indices(data.data, core);
    const double l_hat = estimate_lipschitz(data.data, shape.shape.p, idx);
    const SafeCertificate cert = run_synthesis(cfg, data, shape);
    audit_certificate(cfg, cert);
    const auto rep =
        verify_certificate(cert, cfg.model, cfg.oracle, cfg.x_poly, cfg.u_poly, 1000, 7);
    const double elapsed = seconds_since(t0);
    ok = l_hat >= 5.4 && l_hat <= 6.6 && std::abs(cert.gamma - 1.0) <= 1e-6 && rep.state_ok &&
         rep.input_ok && rep.vdot_max <= 1e-6 && elapsed < 120.0;
    detail << "L=" << l_hat << ", gamma*=" << cert.gamma << ", vdot_max=" << rep.vdot_max
           << ", " << elapsed << " s";
  } catch (const Error& e) {
    detail << "error: " << e.what();
  }
  report(2, "illustrative synthesis (gamma* = 1, verified gain)", ok, detail.str());
}

// 3. motivating 1D pipeline
void criterion_motivating() {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream detail;
  bool ok = false;
  try {
    auto cfg = builtin_scenario("motivating1d");
    auto data = prepare_data(cfg);
    auto shape = prepare_shape(cfg, data);
    SafeCertificate cert = run_synthesis(cfg, data, shape);
    audit_certificate(cfg, cert);
    const double boundary = std::sqrt(cert.gamma / cert.p(0, 0));
    SafeCertificate k0 = cert;
    k0.k = Mat::Zero(1, 1);
    const auto rep =
        verify_certificate(k0, cfg.model, cfg.oracle, cfg.x_poly, cfg.u_poly, 500, 3);
    const double elapsed = seconds_since(t0);
    ok = boundary >= 1.8 && boundary <= 2.0 + 1e-9 && rep.state_ok && rep.input_ok &&
         rep.vdot_max < 0.0 && elapsed < 30.0;
    detail << "boundary |x|=" << boundary << ", K=0 vdot_max=" << rep.vdot_max << ", "
           << elapsed << " s";
  } catch (const Error& e) {
    detail << "error: " << e.what();
  }
  report(3, "motivating 1D pipeline (boundary in [1.8, 2.0], K=0 verifies)", ok, detail.str());
}

// 4. robust baseline
void criterion_baseline() {
  const auto res = robust_baseline_1d(8.0, 2.0, 2.0);
  std::ostringstream detail;
  detail << "verdict " << (res.feasible ? "Feasible" : "Infeasible") << ", binding k interval ["
         << res.k_lo << ", " << res.k_hi << "]";
  report(4, "robust baseline |w| <= 8 is infeasible", !res.feasible, detail.str());
}

// 5. convoy simulation
void criterion_convoy() {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream detail;
  bool ok = false;
  try {
    auto cfg = builtin_scenario("convoy5");
    auto data = prepare_data(cfg);
    auto shape = prepare_shape(cfg, data);
    SafeCertificate cert = run_synthesis(cfg, data, shape);
    audit_certificate(cfg, cert);
    Vec x0 = *cfg.simulation.x0;
    const double lvl = x0.dot(cert.p * x0);
    if (lvl > cert.gamma * (1.0 - 1e-9)) x0 *= std::sqrt(0.999 * cert.gamma / lvl);
    const Trajectory traj = simulate(cfg.model, cfg.oracle, cert, cfg.u_poly,
                                     cfg.desired_policy, x0, 20.0, 1e-3, cfg.filter);
    bool constraints_ok = true;
    for (int i = 0; i <= traj.steps() && constraints_ok; ++i)
      constraints_ok = polytope_contains(cfg.x_poly, traj.states.row(i).transpose());
    const double max_level = traj.max_level(cert.p);
    const double elapsed = seconds_since(t0);
    ok = constraints_ok && max_level <= cert.gamma * (1.0 + 1e-3) && traj.episodes() >= 1 &&
         elapsed < 300.0;
    detail << "distance constraints " << (constraints_ok ? "held" : "VIOLATED")
           << ", max level/gamma " << max_level / cert.gamma << ", episodes "
           << traj.episodes() << " (" << traj.activation_steps() << " steps), " << elapsed
           << " s";
  } catch (const Error& e) {
    detail << "error: " << e.what();
  }
  report(5, "convoy 20 s simulation (constraints hold, filter engaged)", ok, detail.str());
}

// 6. GP posterior properties on random datasets
void criterion_gp_properties() {
  std::ostringstream detail;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> coord(-1.5, 1.5);
  std::normal_distribution<double> target(0.0, 0.5);
  double worst_interp = 0.0, worst_sigma = 0.0, worst_var_excess = -1.0;
  bool ok = true;
  try {
    for (int trial = 0; trial < 50; ++trial) {
      const int count = 20 + int(rng() % 181);
      DataSet data;
      data.x.resize(count, 2);
      data.d.resize(count, 2);
      int placed = 0;
      while (placed < count) {
        Vec x(2);
        x << coord(rng), coord(rng);
        bool clear = true;
        for (int i = 0; i < placed && clear; ++i)
          clear = (data.x.row(i).transpose() - x).norm() >= 0.03;
        if (!clear) continue;  // the fit contract excludes duplicate inputs
        data.x.row(placed) = x.transpose();
        data.d.row(placed) << target(rng), target(rng);
        ++placed;
      }
      const double sf = 0.4;
      // lengthscale matched to the sampling density keeps exact
      // interpolation well-posed at N = 200
      const GpModel gp = GpModel::fit(data, GpPrior::isotropic(2, sf, 0.15));
      Vec mu, var;
      for (int i = 0; i < count; ++i) {
        gp.posterior(data.x.row(i).transpose(), mu, var);
        worst_interp = std::max(worst_interp, (mu - data.d.row(i).transpose()).lpNorm<Eigen::Infinity>());
        worst_sigma = std::max(worst_sigma, std::sqrt(var.maxCoeff()));
      }
      for (int i = 0; i < 20; ++i) {
        Vec q(2);
        q << coord(rng) * 2.0, coord(rng) * 2.0;
        gp.posterior(q, mu, var);
        worst_var_excess = std::max(worst_var_excess, var.maxCoeff() - sf * sf);
      }
    }
    ok = worst_interp <= 1e-6 && worst_sigma <= 1e-4 && worst_var_excess <= 1e-10;
    detail << "max |mu - y| = " << worst_interp << ", max sigma at data = " << worst_sigma
           << ", max variance excess = " << worst_var_excess;
  } catch (const Error& e) {
    ok = false;
    detail << "error: " << e.what();
  }
  report(6, "GP posterior interpolation and variance dominance (50 datasets)", ok, detail.str());
}

// 7. ring soundness of the Lipschitz bound on random polynomials
void criterion_lemma_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream detail;
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  auto cfg = builtin_scenario("illustrative2d");
  const Mat p = cfg.region.a_delta;  // illustrative geometry
  const Interval iv{0.9, 1.0};
  const double delta = 0.1;
  const double spacing = delta * std::numbers::sqrt2;
  double worst_violation = -1e300;
  bool ok = true;
  try {
    for (int trial = 0; trial < 20; ++trial) {
      // random cubic polynomial nonlinearity per dimension
      std::array<std::array<double, 8>, 2> c{};
      for (auto& row : c)
        for (auto& v : row) v = coef(rng);
      auto d = [&](const Vec& x) -> Vec {
        Vec out(2);
        for (int k = 0; k < 2; ++k)
          out[k] = c[size_t(k)][0] + c[size_t(k)][1] * x[0] + c[size_t(k)][2] * x[1] +
                   c[size_t(k)][3] * x[0] * x[1] + c[size_t(k)][4] * x[0] * x[0] +
                   c[size_t(k)][5] * x[1] * x[1] + c[size_t(k)][6] * std::pow(x[0], 3) +
                   c[size_t(k)][7] * std::pow(x[1], 3);
        return out;
      };
      auto f = [&](const Vec& x) { return x.dot(p * d(x)); };

      // data: grid covering the dilated ring with radius delta
      const Ring keep(p, iv, delta + spacing);
      DataSet data;
      std::vector<Vec> pts;
      for (double gx = -2.0; gx <= 2.0; gx += spacing)
        for (double gy = -2.0; gy <= 2.0; gy += spacing) {
          Vec x(2);
          x << gx, gy;
          if (keep.contains(x)) pts.push_back(x);
        }
      data.x.resize(long(pts.size()), 2);
      data.d.resize(long(pts.size()), 2);
      for (size_t i = 0; i < pts.size(); ++i) {
        data.x.row(long(i)) = pts[i].transpose();
        data.d.row(long(i)) = d(pts[i]).transpose();
      }

      // true Lipschitz constant of f on the dilated ring by dense sampling
      const Mat grad_samples = sample_ring(p, 0.55, 1.35, 4000, 1234 + trial);
      const Ring dil(p, iv, delta);
      double l_true = 0.0;
      for (int i = 0; i < grad_samples.rows(); ++i) {
        const Vec x = grad_samples.row(i).transpose();
        if (!dil.contains(x)) continue;
        Vec g(2);
        for (int k = 0; k < 2; ++k) {
          Vec up = x, dn = x;
          up[k] += 1e-6;
          dn[k] -= 1e-6;
          g[k] = (f(up) - f(dn)) / 2e-6;
        }
        l_true = std::max(l_true, g.norm());
      }
      l_true *= 1.1;

      const QuadraticBound bound = bound_nonlinearity_lipschitz(data, p, iv, delta, l_true);
      hygiene.bound_min = std::min(hygiene.bound_min, bound.sproc_min_eig);
      hygiene.any_bound = true;

      const Mat samples = sample_ring(p, iv.gamma1, iv.gamma2, 10000, 777 + trial);
      for (int i = 0; i < samples.rows(); ++i) {
        const Vec x = samples.row(i).transpose();
        worst_violation = std::max(worst_violation, f(x) - x.dot(bound.q * x));
      }
    }
    ok = worst_violation <= 1e-6;
    detail << "max ring violation " << worst_violation << " over 20 oracles x 1e4 samples, "
           << seconds_since(t0) << " s";
  } catch (const Error& e) {
    ok = false;
    detail << "error: " << e.what();
  }
  report(7, "Lipschitz bound soundness on random polynomial oracles", ok, detail.str());
}

// 8. iterative envelope-bound audit on the exploration system
void criterion_gp_bound_audit() {
  std::ostringstream detail;
  bool ok = false;
  try {
    auto cfg = builtin_scenario("exploration2d");
    auto data = prepare_data(cfg);
    auto shape = prepare_shape(cfg, data);
    const GpModel gp = GpModel::fit(data.data, cfg.gp_prior);
    GpBoundConfig bc = cfg.gp_bound;
    bc.seed = 19;
    const QuadraticBound bound = bound_nonlinearity_gp(gp, shape.shape.p, {0.8, 0.9}, bc);
    // fresh validation sample, independent of the bound's internal audit
    const Mat samples = sample_ring(shape.shape.p, 0.8, 0.9, 10000, 4242);
    double worst = -1e300;
    for (int i = 0; i < samples.rows(); ++i) {
      const Vec x = samples.row(i).transpose();
      worst = std::max(worst,
                       upper_confidence_form(gp, shape.shape.p, x, bc.c) - x.dot(bound.q * x));
    }
    ok = bound.converged && bound.iterations <= 200 && worst <= 1e-4;
    detail << "iterations " << bound.iterations << ", max envelope violation " << worst;
  } catch (const Error& e) {
    detail << "error: " << e.what();
  }
  report(8, "confidence-envelope bound audit (1e4 validation samples)", ok, detail.str());
}

// 9. GP bound gives at least the Lipschitz level on identical data
void criterion_gp_vs_lipschitz() {
  std::ostringstream detail;
  bool ok = false;
  try {
    auto cfg = builtin_scenario("illustrative2d");
    auto data = prepare_data(cfg);
    auto shape = prepare_shape(cfg, data);
    const SafeCertificate lip = run_synthesis(cfg, data, shape);
    ScenarioConfig gp_cfg = cfg;
    gp_cfg.bound_mode = "gp";
    const SafeCertificate gp = run_synthesis(gp_cfg, data, shape);
    ok = gp.gamma >= lip.gamma - 1e-9;
    detail << "gamma_gp = " << gp.gamma << " vs gamma_lipschitz = " << lip.gamma;
  } catch (const Error& e) {
    detail << "error: " << e.what();
  }
  report(9, "GP level dominates the Lipschitz level on shared data", ok, detail.str());
}

// 10. exploration loop
void criterion_exploration() {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream detail;
  bool ok = false;
  try {
    auto cfg = builtin_scenario("exploration2d");
    cfg.seed = 11;
    auto data = prepare_data(cfg);
    auto shape = prepare_shape(cfg, data);
    SafeCertificate cert = run_synthesis(cfg, data, shape);
    ExplorationSchedule sched;
    sched.prior = cfg.gp_prior;
    sched.gamma_bar = shape.gamma_bar;
    sched.interval_width = cfg.intervals.width;
    sched.interval_count = cfg.intervals.count;
    sched.bound_cfg = cfg.gp_bound;
    sched.bound_cfg.seed = cfg.seed;
    sched.bound_cfg.restarts = cfg.exploration.restarts;
    sched.max_halvings = cfg.exploration.max_halvings;
    NoisyGainLearner learner(cfg.model.m(), cfg.model.n(), cfg.exploration.noise_amplitude,
                             cfg.exploration.noise_decay_time, cfg.seed);
    const ExploreResult res =
        explore(cfg.model, cfg.oracle, cfg.x_poly, cfg.u_poly, data.data, sched, learner, cert,
                *cfg.simulation.x0, cfg.simulation.horizon, cfg.simulation.step, cfg.filter);

    bool cadence_ok = res.history.size() >= 3;
    for (size_t i = 1; i < res.history.size() && cadence_ok; ++i)
      cadence_ok = std::abs((res.history[i].t - res.history[i - 1].t) - 0.2) < 1e-9;
    const double v0 = res.history.front().volume;
    const double v_end = res.history.back().volume;
    const double v_prev = res.history[res.history.size() - 2].volume;
    const bool volume_ok = v_end >= v0 - 1e-9 && std::abs(v_end - v_prev) <= 0.01 * v_prev;
    const int steps = res.trajectory.steps();
    bool late_quiet = true;
    for (int i = int(0.8 * steps); i < steps; ++i)
      late_quiet = late_quiet && !res.trajectory.safety_active[size_t(i)];
    const double elapsed = seconds_since(t0);
    ok = cadence_ok && volume_ok && late_quiet && elapsed < 600.0;
    detail << res.history.size() - 1 << " recomputes at 0.2 s, volume " << v0 << " -> "
           << v_end << ", activations " << res.trajectory.activation_steps() << " steps ("
           << res.trajectory.episodes() << " episodes, last 20% "
           << (late_quiet ? "quiet" : "ACTIVE") << "), " << elapsed << " s";
  } catch (const Error& e) {
    detail << "error: " << e.what();
  }
  report(10, "exploration loop (cadence, volume convergence, early-only interventions)", ok,
         detail.str());
}

// 11. numerical hygiene accumulated across the suite
void criterion_hygiene() {
  std::ostringstream detail;
  const bool ok = hygiene.cert_min >= -1e-6 && (!hygiene.any_bound || hygiene.bound_min >= -1e-7);
  detail << "worst certificate LMI min-eig " << hygiene.cert_min
         << ", worst S-procedure block min-eig " << hygiene.bound_min;
  report(11, "numerical hygiene of certificates and bounds", ok, detail.str());
}

int main() {
  criterion_shape();
  criterion_synthesis();
  criterion_motivating();
  criterion_baseline();
  criterion_convoy();
  criterion_gp_properties();
  criterion_lemma_suite();
  criterion_gp_bound_audit();
  criterion_gp_vs_lipschitz();
  criterion_exploration();
  criterion_hygiene();
  std::printf("%s: %d of 11 criteria passed\n", failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL",
              11 - failures);
  return failures;
}
