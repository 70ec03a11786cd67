#pragma once

#include <memory>
#include <random>

#include "safenvelope/gp_bound.hpp"
#include "safenvelope/safe_set.hpp"

namespace safenv {

struct FilterConfig {
  double boundary_fraction = 0.02;  // filter engages at level >= (1 - eps) gamma
  int hold_steps = 1;               // steps a safety action persists
};

struct Trajectory {
  std::vector<double> time;
  Mat states;          // (steps + 1) x n
  Mat inputs;          // steps x m (applied)
  Mat desired_inputs;  // steps x m
  std::vector<std::uint8_t> safety_active;

  int steps() const { return int(inputs.rows()); }
  int activation_steps() const;
  /// maximal contiguous runs of active steps
  int episodes() const;
  double max_level(const Mat& p) const;
};

/// Eq.-style switching law: pass the desired input unless the state is in
/// the boundary shell or the desired input leaves U.
std::pair<Vec, bool> safety_filter(const Vec& x, const Vec& u_bar, const SafeCertificate& cert,
                                   const Polytope& u_poly, const FilterConfig& cfg);

/// One fixed-step RK4 step of x' = Ax + Bu + d(x), u held constant.
Vec rk4_step(const LinearModel& model, const NonlinearityOracle& oracle, const Vec& x,
             const Vec& u, double h);

using DesiredPolicy = std::function<Vec(double, const Vec&)>;

Trajectory simulate(const LinearModel& model, const NonlinearityOracle& oracle,
                    const SafeCertificate& cert, const Polytope& u_poly,
                    const DesiredPolicy& policy, const Vec& x0, double horizon, double h,
                    const FilterConfig& cfg);

// --- exploration loop -------------------------------------------------------

/// Desired-input generator that can adapt between recompute periods.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual Vec desired(double t, const Vec& x) = 0;
  /// called at every recompute boundary with the mean stage cost ||x||^2
  virtual void end_period(double avg_cost, const SafeCertificate& cert) = 0;
};

/// Bounded exploration noise around the current safe gain, decaying in time.
class NoisyGainLearner : public Learner {
 public:
  NoisyGainLearner(int m, int n, double amplitude, double decay_time, std::uint64_t seed,
                   double dwell = 0.05);
  Vec desired(double t, const Vec& x) override;
  void end_period(double avg_cost, const SafeCertificate& cert) override;

 private:
  Mat gain_;
  double amplitude_;
  double decay_time_;
  double dwell_;
  std::mt19937_64 rng_;
  Vec noise_;
  double next_draw_ = 0.0;
};

/// Finite-difference hill climbing on a linear gain against the period cost.
class HillClimbLearner : public Learner {
 public:
  HillClimbLearner(int m, int n, double step, std::uint64_t seed);
  Vec desired(double t, const Vec& x) override;
  void end_period(double avg_cost, const SafeCertificate& cert) override;

 private:
  Mat theta_;
  Mat candidate_;
  double step_;
  double best_cost_ = std::numeric_limits<double>::infinity();
  bool probing_ = false;
  std::mt19937_64 rng_;
};

struct ExplorationSchedule {
  double recompute_period = 0.2;
  int collect_stride = 25;  // steps between appended samples
  GpPrior prior;
  double gamma_bar = 1.0;
  double interval_width = 0.1;
  int interval_count = 8;
  GpBoundConfig bound_cfg;
  int max_halvings = 2;
  int verify_samples = 200;
  double verify_tol = 1e-6;
};

struct ExploreRecord {
  double t = 0.0;
  double gamma = 0.0;
  double volume = 0.0;
  bool recomputed = false;  // false when the previous certificate was kept
};

struct ExploreResult {
  Trajectory trajectory;
  std::vector<ExploreRecord> history;
  SafeCertificate final_certificate;
  DataSet data;
  int recompute_failures = 0;
};

/// volume of {x^T P x <= gamma}
double ellipsoid_volume(const Mat& p, double gamma);

ExploreResult explore(const LinearModel& model, const NonlinearityOracle& oracle,
                      const Polytope& x_poly, const Polytope& u_poly, const DataSet& initial_data,
                      const ExplorationSchedule& schedule, Learner& learner,
                      const SafeCertificate& initial_cert, const Vec& x0, double horizon, double h,
                      const FilterConfig& cfg);

}  // namespace safenv
