#include "safenvelope/runtime_sim.hpp"

#include <cmath>
#include <numbers>

#include "safenvelope/errors.hpp"

namespace safenv {

int Trajectory::activation_steps() const {
  int c = 0;
  for (auto f : safety_active) c += f != 0;
  return c;
}

int Trajectory::episodes() const {
  int c = 0;
  bool in_episode = false;
  for (auto f : safety_active) {
    if (f && !in_episode) ++c;
    in_episode = f != 0;
  }
  return c;
}

double Trajectory::max_level(const Mat& p) const {
  double worst = 0.0;
  for (int i = 0; i < states.rows(); ++i) {
    const Vec x = states.row(i).transpose();
    worst = std::max(worst, x.dot(p * x));
  }
  return worst;
}

std::pair<Vec, bool> safety_filter(const Vec& x, const Vec& u_bar, const SafeCertificate& cert,
                                   const Polytope& u_poly, const FilterConfig& cfg) {
  const double level = x.dot(cert.p * x);
  if (level > cert.gamma * (1.0 + 1e-9))
    throw OutsideSafeSet("safety_filter: state level " + std::to_string(level) +
                         " beyond gamma = " + std::to_string(cert.gamma));
  const bool boundary = level >= (1.0 - cfg.boundary_fraction) * cert.gamma;
  const bool u_bad = !polytope_contains(u_poly, u_bar);
  if (boundary || u_bad) return {cert.k * x, true};
  return {u_bar, false};
}

Vec rk4_step(const LinearModel& model, const NonlinearityOracle& oracle, const Vec& x,
             const Vec& u, double h) {
  if (h <= 0.0) throw Error("rk4_step: h must be positive");
  auto f = [&](const Vec& s) -> Vec { return model.a * s + model.b * u + oracle(s); };
  const Vec k1 = f(x);
  const Vec k2 = f(x + 0.5 * h * k1);
  const Vec k3 = f(x + 0.5 * h * k2);
  const Vec k4 = f(x + h * k3);
  Vec out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!out.allFinite()) throw NonFiniteState("rk4_step: non-finite state");
  return out;
}

namespace {

struct SimLoop {
  const LinearModel& model;
  const NonlinearityOracle& oracle;
  const Polytope& u_poly;
  const FilterConfig& cfg;
  double h;

  int hold_remaining = 0;

  std::pair<Vec, bool> filtered_input(double /*t*/, const Vec& x, const Vec& u_bar,
                                      const SafeCertificate& cert) {
    auto [u, active] = safety_filter(x, u_bar, cert, u_poly, cfg);
    if (active) {
      hold_remaining = cfg.hold_steps - 1;
    } else if (hold_remaining > 0) {
      --hold_remaining;
      u = cert.k * x;
      active = true;
    }
    return {u, active};
  }
};

}  // namespace

Trajectory simulate(const LinearModel& model, const NonlinearityOracle& oracle,
                    const SafeCertificate& cert, const Polytope& u_poly,
                    const DesiredPolicy& policy, const Vec& x0, double horizon, double h,
                    const FilterConfig& cfg) {
  const int steps = int(std::ceil(horizon / h));
  const int n = model.n();
  const int m = model.m();
  {
    const double level0 = x0.dot(cert.p * x0);
    if (level0 > cert.gamma * (1.0 + 1e-9))
      throw OutsideSafeSet("simulate: x0 outside the safe set (level " +
                           std::to_string(level0) + ")");
  }

  Trajectory traj;
  traj.time.resize(size_t(steps) + 1);
  traj.states.resize(steps + 1, n);
  traj.inputs.resize(steps, m);
  traj.desired_inputs.resize(steps, m);
  traj.safety_active.resize(size_t(steps));

  SimLoop loop{model, oracle, u_poly, cfg, h};
  Vec x = x0;
  traj.states.row(0) = x.transpose();
  traj.time[0] = 0.0;
  for (int i = 0; i < steps; ++i) {
    const double t = double(i) * h;
    const Vec u_bar = policy(t, x);
    auto [u, active] = loop.filtered_input(t, x, u_bar, cert);
    traj.desired_inputs.row(i) = u_bar.transpose();
    traj.inputs.row(i) = u.transpose();
    traj.safety_active[size_t(i)] = active ? 1 : 0;
    x = rk4_step(model, oracle, x, u, h);
    const double level = x.dot(cert.p * x);
    if (level > cert.gamma * (1.0 + 1e-3))
      throw OutsideSafeSet("simulate: discretization breach at t = " + std::to_string(t + h) +
                           " (level " + std::to_string(level) + ")");
    traj.states.row(i + 1) = x.transpose();
    traj.time[size_t(i) + 1] = t + h;
  }
  return traj;
}

// --- learners ---------------------------------------------------------------

NoisyGainLearner::NoisyGainLearner(int m, int n, double amplitude, double decay_time,
                                   std::uint64_t seed, double dwell)
    : gain_(Mat::Zero(m, n)),
      amplitude_(amplitude),
      decay_time_(decay_time),
      dwell_(dwell),
      rng_(seed),
      noise_(Vec::Zero(m)) {}

Vec NoisyGainLearner::desired(double t, const Vec& x) {
  if (t >= next_draw_) {
    std::normal_distribution<double> dist(0.0, 1.0);
    for (int i = 0; i < noise_.size(); ++i) noise_[i] = dist(rng_);
    next_draw_ = t + dwell_;
  }
  const double scale = amplitude_ * std::max(0.0, 1.0 - t / decay_time_);
  return gain_ * x + scale * noise_;
}

void NoisyGainLearner::end_period(double /*avg_cost*/, const SafeCertificate& cert) {
  gain_ = cert.k;
}

HillClimbLearner::HillClimbLearner(int m, int n, double step, std::uint64_t seed)
    : theta_(Mat::Zero(m, n)), candidate_(Mat::Zero(m, n)), step_(step), rng_(seed) {}

Vec HillClimbLearner::desired(double /*t*/, const Vec& x) {
  return (probing_ ? candidate_ : theta_) * x;
}

void HillClimbLearner::end_period(double avg_cost, const SafeCertificate& /*cert*/) {
  if (probing_) {
    if (avg_cost < best_cost_) {
      theta_ = candidate_;
      best_cost_ = avg_cost;
    } else {
      step_ *= 0.7;
    }
    probing_ = false;
    return;
  }
  best_cost_ = avg_cost;
  std::normal_distribution<double> dist(0.0, 1.0);
  candidate_ = theta_;
  for (int r = 0; r < candidate_.rows(); ++r)
    for (int c = 0; c < candidate_.cols(); ++c) candidate_(r, c) += step_ * dist(rng_);
  probing_ = true;
}

// --- exploration ------------------------------------------------------------

double ellipsoid_volume(const Mat& p, double gamma) {
  const int n = int(p.rows());
  const double unit_ball = std::pow(std::numbers::pi, n / 2.0) / std::tgamma(n / 2.0 + 1.0);
  return unit_ball * std::sqrt(std::pow(gamma, n) / p.determinant());
}

ExploreResult explore(const LinearModel& model, const NonlinearityOracle& oracle,
                      const Polytope& x_poly, const Polytope& u_poly, const DataSet& initial_data,
                      const ExplorationSchedule& schedule, Learner& learner,
                      const SafeCertificate& initial_cert, const Vec& x0, double horizon, double h,
                      const FilterConfig& cfg) {
  if (schedule.recompute_period < h)
    throw ConfigInvalid("explore: recompute_period must be >= step size");
  const int steps = int(std::ceil(horizon / h));
  const int n = model.n();
  const int m = model.m();
  const int period_steps = std::max(1, int(std::llround(schedule.recompute_period / h)));

  ExploreResult result;
  result.data = initial_data;
  result.final_certificate = initial_cert;

  auto& traj = result.trajectory;
  traj.time.resize(size_t(steps) + 1);
  traj.states.resize(steps + 1, n);
  traj.inputs.resize(steps, m);
  traj.desired_inputs.resize(steps, m);
  traj.safety_active.resize(size_t(steps));

  SafeCertificate cert = initial_cert;
  result.history.push_back({0.0, cert.gamma, ellipsoid_volume(cert.p, cert.gamma), true});

  auto resynthesize = [&](const SafeCertificate& current) -> std::optional<SafeCertificate> {
    try {
      const GpModel gp = GpModel::fit(result.data, schedule.prior);
      auto provider = [&](const Interval& iv) {
        return bound_nonlinearity_gp(gp, current.p, iv, schedule.bound_cfg);
      };
      const auto intervals = make_intervals_schedule(schedule.gamma_bar, schedule.interval_width,
                                                     schedule.interval_count);
      SafeCertificate next = sweep_intervals(model, current.e, provider, intervals, x_poly,
                                             u_poly, schedule.max_halvings);
      next.verification = verify_certificate(next, model, oracle, x_poly, u_poly,
                                             schedule.verify_samples, schedule.bound_cfg.seed,
                                             schedule.verify_tol);
      if (!certificate_checks_pass(next)) return std::nullopt;
      return next;
    } catch (const Error&) {
      return std::nullopt;
    }
  };

  SimLoop loop{model, oracle, u_poly, cfg, h};
  Vec x = x0;
  {
    const double level0 = x.dot(cert.p * x);
    if (level0 > cert.gamma * (1.0 + 1e-9))
      throw OutsideSafeSet("explore: x0 outside the initial safe set");
  }
  traj.states.row(0) = x.transpose();
  traj.time[0] = 0.0;
  double cost_acc = 0.0;
  int cost_count = 0;

  for (int i = 0; i < steps; ++i) {
    const double t = double(i) * h;
    const Vec u_bar = learner.desired(t, x);
    auto [u, active] = loop.filtered_input(t, x, u_bar, cert);
    traj.desired_inputs.row(i) = u_bar.transpose();
    traj.inputs.row(i) = u.transpose();
    traj.safety_active[size_t(i)] = active ? 1 : 0;

    if (i % schedule.collect_stride == 0) {
      // noise-free derivative measurement at the visited state
      bool dup = false;
      for (int r = 0; r < result.data.size() && !dup; ++r)
        dup = (result.data.x.row(r).transpose() - x).norm() < 1e-9;
      if (!dup) result.data.append(x, oracle(x));
    }
    cost_acc += x.squaredNorm();
    ++cost_count;

    x = rk4_step(model, oracle, x, u, h);
    const double level = x.dot(cert.p * x);
    if (level > cert.gamma * (1.0 + 1e-3))
      throw OutsideSafeSet("explore: discretization breach at t = " + std::to_string(t + h));
    traj.states.row(i + 1) = x.transpose();
    traj.time[size_t(i) + 1] = t + h;

    if ((i + 1) % period_steps == 0 && i + 1 < steps) {
      learner.end_period(cost_acc / std::max(1, cost_count), cert);
      cost_acc = 0.0;
      cost_count = 0;
      auto next = resynthesize(cert);
      const double now = t + h;
      if (next) {
        // swap only when the new certificate still contains the state
        if (x.dot(next->p * x) <= next->gamma * (1.0 + 1e-9)) {
          cert = *next;
        } else {
          ++result.recompute_failures;
          next.reset();
        }
      } else {
        ++result.recompute_failures;
      }
      result.history.push_back(
          {now, cert.gamma, ellipsoid_volume(cert.p, cert.gamma), next.has_value()});
    }
  }
  result.final_certificate = cert;
  return result;
}

}  // namespace safenv
