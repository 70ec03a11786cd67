#pragma once

#include <optional>
#include <string>

#include "safenvelope/runtime_sim.hpp"
#include "safenvelope/shape_synthesis.hpp"

namespace safenv {

struct IntervalSpec {
  std::optional<double> gamma_bar;  // empty: derived from the data region
  double width = 0.1;
  int count = 8;
  bool shifted = false;  // start one width below gamma_bar (exploration style)
};

struct DatasetSpec {
  std::string file;           // CSV path; empty means generated
  double grid_spacing = 0.0;  // generated axis-grid spacing
};

struct SimulationSpec {
  std::optional<Vec> x0;  // empty: a point just inside the safe-set boundary
  double horizon = 10.0;
  double step = 1e-3;
};

struct ExplorationSpec {
  double recompute_period = 0.2;
  int collect_stride = 25;
  std::string learner = "noisy-gain";  // or "hill-climb"
  double noise_amplitude = 6.0;
  double noise_decay_time = 2.0;
  int restarts = 16;
  int max_halvings = 2;
};

struct ScenarioConfig {
  std::string oracle_name;
  LinearModel model;
  Polytope x_poly;
  Polytope u_poly;
  NonlinearityOracle oracle;
  DatasetSpec dataset;
  DataRegion region;  // generated-data region (declared delta included)
  std::string bound_mode = "lipschitz";
  bool constrain_shape_to_region = true;
  bool shape_input_lmi = true;
  double shape_decrease_margin = 0.0;
  std::vector<SupportCap> shape_support_caps;
  IntervalSpec intervals;
  GpPrior gp_prior;
  GpBoundConfig gp_bound;
  FilterConfig filter;
  SimulationSpec simulation;
  ExplorationSpec exploration;
  std::optional<double> known_lipschitz;
  std::optional<int> chunk_size;
  DesiredPolicy desired_policy;  // simulate-stage policy
  std::uint64_t seed = 0;
};

/// The named systems used by the experiments.
ScenarioConfig builtin_scenario(const std::string& name);

/// Builds a config from JSON (snake_case keys); `oracle` selects a builtin
/// whose fields the remaining keys override.
ScenarioConfig load_scenario(const std::string& json_path);
ScenarioConfig parse_scenario(const std::string& json_text);

struct RobustBaselineResult {
  bool feasible = false;
  double k_lo = 0.0;
  double k_hi = 0.0;
};

/// Scalar robust test for x' = x + w + u, |w| <= bound_w: existence of a
/// gain k keeping the boundary derivative nonpositive under the input box.
RobustBaselineResult robust_baseline_1d(double bound_w, double x_max, double u_max);

// --- pipeline stages ---------------------------------------------------------

struct PipelineData {
  DataSet data;
  DataRegion region;
  double measured_delta = 0.0;
};

PipelineData prepare_data(const ScenarioConfig& cfg);

struct PipelineShape {
  ShapeResult shape;
  double gamma_bar = 1.0;
};

PipelineShape prepare_shape(const ScenarioConfig& cfg, const PipelineData& data);

BoundProvider make_bound_provider(const ScenarioConfig& cfg, const PipelineData& data,
                                  const PipelineShape& shape, const GpModel* gp);

SafeCertificate run_synthesis(const ScenarioConfig& cfg, const PipelineData& data,
                              const PipelineShape& shape);

/// Executes one CLI command end to end, writing artifacts into out_dir.
/// Returns a process exit status.
int run_scenario(const ScenarioConfig& cfg, const std::string& command,
                 const std::string& out_dir);

// artifact writers (also used by tests)
void write_certificate_json(const SafeCertificate& cert, const std::string& path);
SafeCertificate read_certificate_json(const std::string& path);
void write_trajectory_csv(const Trajectory& traj, const std::string& path);
void write_history_csv(const std::vector<ExploreRecord>& hist, const std::string& path);

}  // namespace safenv
