#include "safenvelope/scenarios.hpp"

#include <cmath>
#include <numbers>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "safenvelope/conic.hpp"
#include "safenvelope/errors.hpp"
#include "safenvelope/sampling.hpp"

namespace safenv {

using nlohmann::json;

namespace {

Polytope box_polytope(int n, double half_width) {
  Mat a(2 * n, n);
  Vec b(2 * n);
  a.setZero();
  for (int i = 0; i < n; ++i) {
    a(2 * i, i) = 1.0;
    a(2 * i + 1, i) = -1.0;
    b[2 * i] = half_width;
    b[2 * i + 1] = half_width;
  }
  return Polytope(a, b);
}

Mat parse_matrix(const json& rows) {
  const auto r = rows.size();
  const auto c = rows.at(0).size();
  Mat m(static_cast<long>(r), static_cast<long>(c));
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j) m(long(i), long(j)) = rows.at(i).at(j).get<double>();
  return m;
}

Vec parse_vector(const json& arr) {
  Vec v(long(arr.size()));
  for (size_t i = 0; i < arr.size(); ++i) v[long(i)] = arr.at(i).get<double>();
  return v;
}

json matrix_json(const Mat& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Vec& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

// grid covering an ellipsoid plus a one-spacing skirt, clipped to X
DataSet generate_grid_dataset(const NonlinearityOracle& oracle, const Mat& a_delta,
                              double spacing, const Polytope& x_poly) {
  const int n = int(a_delta.rows());
  const Mat ainv = a_delta.inverse();
  std::vector<double> half(static_cast<size_t>(n));
  std::vector<long> counts(static_cast<size_t>(n));
  long total = 1;
  for (int i = 0; i < n; ++i) {
    half[size_t(i)] = std::sqrt(std::max(0.0, ainv(i, i))) + spacing;
    counts[size_t(i)] = long(std::floor(half[size_t(i)] / spacing)) * 2 + 1;
    total *= counts[size_t(i)];
  }
  const Ring skirt(a_delta, Interval{0.5, 1.0}, spacing);
  std::vector<Vec> keep;
  Vec x(n);
  for (long flat = 0; flat < total; ++flat) {
    long rem = flat;
    for (int i = 0; i < n; ++i) {
      const long ci = counts[size_t(i)];
      x[i] = (double(rem % ci) - double(ci - 1) / 2.0) * spacing;
      rem /= ci;
    }
    const double level = x.dot(a_delta * x);
    const bool inside = level <= 1.0 || skirt.distance_to_shell(x, 1.0) <= spacing;
    if (inside && polytope_contains(x_poly, x)) keep.push_back(x);
  }
  DataSet data;
  data.x.resize(long(keep.size()), n);
  data.d.resize(long(keep.size()), n);
  for (size_t i = 0; i < keep.size(); ++i) {
    data.x.row(long(i)) = keep[i].transpose();
    data.d.row(long(i)) = oracle(keep[i]).transpose();
  }
  return data;
}

double saturate(double w, double limit) { return std::max(-limit, std::min(limit, w)); }

}  // namespace

RobustBaselineResult robust_baseline_1d(double bound_w, double x_max, double u_max) {
  // boundary condition at x = x_max under worst w: (1 + k) x_max + bound_w <= 0
  // input condition on X: |k| x_max <= u_max
  RobustBaselineResult res;
  const double need = -(x_max + bound_w) / x_max;  // k <= need
  const double lo = -u_max / x_max;
  res.k_lo = lo;
  res.k_hi = need;
  res.feasible = lo <= need;
  if (!res.feasible) {
    res.k_lo = need;  // report the binding interval endpoints
    res.k_hi = lo;
  }
  return res;
}

ScenarioConfig builtin_scenario(const std::string& name) {
  ScenarioConfig cfg;
  cfg.oracle_name = name;
  if (name == "motivating1d") {
    Mat a(1, 1), b(1, 1);
    a << 1.0;
    b << 1.0;
    cfg.model = LinearModel(a, b);
    cfg.x_poly = box_polytope(1, 2.0);
    cfg.u_poly = box_polytope(1, 2.0);
    cfg.oracle = {[](const Vec& x) { return Vec::Constant(1, -x[0] * x[0] * x[0]); },
                  std::nullopt,
                  name};
    cfg.dataset.grid_spacing = 0.02;
    cfg.region.a_delta = Mat::Constant(1, 1, 0.25);
    cfg.region.delta = 0.0125;  // measured on generation; grid midpoint is 0.01
    cfg.bound_mode = "lipschitz";
    cfg.simulation.horizon = 10.0;
    cfg.simulation.step = 1e-3;
    cfg.desired_policy = [](double, const Vec& x) { return Vec::Zero(1); };
    cfg.gp_prior = GpPrior::isotropic(1, 4.0, 0.4);
  } else if (name == "illustrative2d" || name == "exploration2d") {
    Mat a(2, 2), b(2, 1);
    a << -1.0, 2.0, -3.0, 4.0;
    b << 0.5, -2.0;
    cfg.model = LinearModel(a, b);
    if (name == "illustrative2d") {
      cfg.x_poly = box_polytope(2, 2.0);
      cfg.u_poly = box_polytope(1, 3.0);
      cfg.oracle = {[](const Vec& x) {
                      Vec d(2);
                      d << 0.5 * std::pow(x[0], 4), 0.35 - 1.5 * std::pow(x[1], 3);
                      return d;
                    },
                    std::nullopt,
                    name};
      Mat p_ref(2, 2);
      p_ref << 0.7651, 0.2162, 0.2162, 0.6481;
      cfg.region.a_delta = p_ref;
      cfg.region.delta = 0.15;
      cfg.dataset.grid_spacing = 0.15 * std::numbers::sqrt2;
      cfg.bound_mode = "lipschitz";
      cfg.shape_input_lmi = false;
      cfg.gp_prior = GpPrior::isotropic(2, 1.0, 0.4);
      cfg.simulation.horizon = 10.0;
    } else {
      cfg.x_poly = box_polytope(2, 4.0);
      cfg.u_poly = box_polytope(1, 4.0);
      cfg.oracle = {[](const Vec& x) {
                      Vec d(2);
                      d << 0.5 * x[0] * x[0] * std::sin(6.0 * x[0]), -0.8 * std::pow(x[1], 3);
                      return d;
                    },
                    std::nullopt,
                    name};
      cfg.bound_mode = "gp";
      cfg.constrain_shape_to_region = false;
      cfg.gp_prior = GpPrior::isotropic(2, 0.05, 0.2);
      cfg.intervals.gamma_bar = 1.0;
      cfg.intervals.shifted = true;
      cfg.dataset.grid_spacing = 0.4 / 6.0;  // 7x7 grid on [-0.2, 0.2]^2
      Mat box(2, 2);
      box << 1.0 / 0.04, 0.0, 0.0, 1.0 / 0.04;
      cfg.region.a_delta = box;  // generation box; informational in GP mode
      cfg.region.delta = 0.05;
      cfg.simulation.horizon = 5.0;
      cfg.simulation.x0 = Vec::Constant(2, 0.05);
      cfg.gp_bound.restarts = 16;
      cfg.gp_bound.initial_samples = 120;
      cfg.shape_decrease_margin = 0.3;
      cfg.filter.boundary_fraction = 0.05;  // exploration noise moves fast

    }
    cfg.simulation.step = 1e-3;
    cfg.desired_policy = [](double, const Vec&) { return Vec::Zero(1); };
  } else if (name == "convoy5") {
    // state (z21, z32, z43, z54, v1..v5); the approximate linear model embeds
    // the chain integrators and the identified linear part of the
    // non-overridable cars' feedback, d carries the saturation residual
    const int n = 9;
    Mat a = Mat::Zero(n, n);
    Mat b = Mat::Zero(n, 3);
    a(0, 5) = 1.0;
    a(0, 4) = -1.0;
    a(1, 6) = 1.0;
    a(1, 5) = -1.0;
    a(2, 7) = 1.0;
    a(2, 6) = -1.0;
    a(3, 8) = 1.0;
    a(3, 7) = -1.0;
    b(4, 0) = 1.0;  // u1 -> v1
    a(5, 0) = 1.0;  // v2' = z21 - v2 + d
    a(5, 5) = -1.0;
    b(6, 1) = 1.0;  // u3 -> v3
    b(7, 2) = 1.0;  // u4 -> v4
    a(8, 3) = 1.0;  // v5' = z54 - v5 + d
    a(8, 8) = -1.0;
    cfg.model = LinearModel(a, b);

    Mat ax = Mat::Zero(4, n);
    for (int i = 0; i < 4; ++i) ax(i, i) = 1.0;  // z_{i+1->i} <= 1  (x >= 0)
    cfg.x_poly = Polytope(ax, Vec::Constant(4, 1.0));
    cfg.u_poly = box_polytope(3, 3.0);
    cfg.oracle = {[](const Vec& x) {
                    Vec d = Vec::Zero(9);
                    const double w2 = x[0] - x[5];
                    const double w5 = x[3] - x[8];
                    d[5] = saturate(w2, 0.9) - w2;
                    d[8] = saturate(w5, 0.9) - w5;
                    return d;
                  },
                  1.0,
                  name};
    cfg.region.groups = {{{0, 5}, 0.8}, {{3, 8}, 0.8}};
    cfg.region.delta = 0.013;
    cfg.dataset.grid_spacing = 1.6 / 88.0;
    cfg.bound_mode = "lipschitz";
    cfg.chunk_size = 800;
    cfg.shape_decrease_margin = 0.05;
    // keep the set inside the saturation limits of the unoverridable cars:
    // there the identified linear part is exact and d vanishes
    {
      Vec w2 = Vec::Zero(9), w5 = Vec::Zero(9);
      w2[0] = 1.0; w2[5] = -1.0;
      w5[3] = 1.0; w5[8] = -1.0;
      cfg.shape_support_caps = {{w2, 0.9}, {w5, 0.9}};
    }
    cfg.simulation.horizon = 20.0;
    cfg.simulation.step = 1e-3;
    Vec x0 = Vec::Zero(9);
    x0[0] = 0.76;  // car 2 is 0.76 m closer than the 1 m target
    x0[5] = 0.02;
    cfg.simulation.x0 = x0;
    cfg.desired_policy = [](double, const Vec& x) {
      Vec u(3);
      u[0] = -x[4];                    // car 1
      u[1] = 0.1 * x[1] - 0.3 * x[6];  // car 3
      u[2] = 0.1 * x[2] - 0.3 * x[7];  // car 4
      return u;
    };
    cfg.gp_prior = GpPrior::isotropic(9, 0.5, 0.4);
    cfg.filter.hold_steps = 50;  // 50 ms dwell smooths boundary chatter
  } else {
    throw UnknownScenario("unknown scenario: " + name);
  }
  return cfg;
}

// --- config parsing -----------------------------------------------------------

namespace {

NonlinearityOracle parse_polynomial_oracle(const json& spec, int n) {
  // per output dimension: list of {coef, powers} monomials
  struct Monomial {
    double coef;
    std::vector<int> powers;
  };
  auto terms = std::make_shared<std::vector<std::vector<Monomial>>>();
  terms->resize(size_t(n));
  for (int d = 0; d < n; ++d) {
    for (const auto& t : spec.at(size_t(d))) {
      Monomial m;
      m.coef = t.at("coef").get<double>();
      for (const auto& p : t.at("powers")) m.powers.push_back(p.get<int>());
      if (int(m.powers.size()) != n) throw ConfigInvalid("polynomial: powers length != n");
      (*terms)[size_t(d)].push_back(std::move(m));
    }
  }
  NonlinearityOracle oracle;
  oracle.name = "custom-polynomial";
  oracle.d = [terms, n](const Vec& x) {
    Vec out = Vec::Zero(n);
    for (int d = 0; d < n; ++d)
      for (const auto& m : (*terms)[size_t(d)]) {
        double v = m.coef;
        for (int k = 0; k < n; ++k) v *= std::pow(x[k], m.powers[size_t(k)]);
        out[d] += v;
      }
    return out;
  };
  return oracle;
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("config parse error: ") + e.what());
  }
  try {
    const std::string oracle = j.value("oracle", std::string("illustrative2d"));
    ScenarioConfig cfg = oracle == "custom-polynomial" ? builtin_scenario("illustrative2d")
                                                       : builtin_scenario(oracle);
    if (j.contains("model")) {
      cfg.model = LinearModel(parse_matrix(j["model"].at("a")), parse_matrix(j["model"].at("b")));
      // drop base-scenario defaults that no longer fit the model dimensions
      const int n = cfg.model.n();
      const int m = cfg.model.m();
      cfg.desired_policy = [m](double, const Vec&) { return Vec(Vec::Zero(m)); };
      if (cfg.simulation.x0 && cfg.simulation.x0->size() != n) cfg.simulation.x0.reset();
      if (cfg.gp_prior.sigma_f.size() != n)
        cfg.gp_prior = GpPrior::isotropic(n, 0.1, 0.3);
      if (cfg.region.ellipsoidal() && cfg.region.a_delta.rows() != n) cfg.region = DataRegion{};
      cfg.shape_support_caps.clear();
    }
    if (j.contains("constraints")) {
      const auto& c = j["constraints"];
      cfg.x_poly = Polytope(parse_matrix(c.at("a_x")), parse_vector(c.at("b_x")));
      cfg.u_poly = Polytope(parse_matrix(c.at("a_u")), parse_vector(c.at("b_u")));
    }
    if (oracle == "custom-polynomial")
      cfg.oracle = parse_polynomial_oracle(j.at("polynomial"), cfg.model.n());
    if (j.contains("dataset")) {
      const auto& d = j["dataset"];
      if (d.contains("file")) cfg.dataset.file = d["file"].get<std::string>();
      if (d.contains("grid_spacing")) cfg.dataset.grid_spacing = d["grid_spacing"].get<double>();
    }
    if (j.contains("region")) {
      const auto& r = j["region"];
      if (r.contains("a_delta")) cfg.region.a_delta = parse_matrix(r["a_delta"]);
      if (r.contains("delta")) cfg.region.delta = r["delta"].get<double>();
    }
    if (j.contains("bound_mode")) cfg.bound_mode = j["bound_mode"].get<std::string>();
    if (j.contains("constrain_shape_to_region"))
      cfg.constrain_shape_to_region = j["constrain_shape_to_region"].get<bool>();
    if (j.contains("shape_input_lmi")) cfg.shape_input_lmi = j["shape_input_lmi"].get<bool>();
    if (j.contains("shape_decrease_margin"))
      cfg.shape_decrease_margin = j["shape_decrease_margin"].get<double>();
    if (j.contains("shape_support_caps")) {
      cfg.shape_support_caps.clear();
      for (const auto& c : j["shape_support_caps"])
        cfg.shape_support_caps.push_back({parse_vector(c.at("a")), c.at("bound").get<double>()});
    }
    if (j.contains("intervals")) {
      const auto& iv = j["intervals"];
      if (iv.contains("gamma_bar") && !iv["gamma_bar"].is_null())
        cfg.intervals.gamma_bar = iv["gamma_bar"].get<double>();
      if (iv.contains("width")) cfg.intervals.width = iv["width"].get<double>();
      if (iv.contains("count")) cfg.intervals.count = iv["count"].get<int>();
      if (iv.contains("shifted")) cfg.intervals.shifted = iv["shifted"].get<bool>();
    }
    if (j.contains("gp_prior")) {
      const auto& g = j["gp_prior"];
      const int n = cfg.model.n();
      auto broadcast = [&](const json& v) {
        return v.is_number() ? Vec::Constant(n, v.get<double>()) : parse_vector(v);
      };
      if (g.contains("sigma_f")) cfg.gp_prior.sigma_f = broadcast(g["sigma_f"]);
      if (g.contains("length")) cfg.gp_prior.length = broadcast(g["length"]);
      if (g.contains("c_mu")) cfg.gp_prior.c_mu = broadcast(g["c_mu"]);
      if (g.contains("jitter")) cfg.gp_prior.jitter = g["jitter"].get<double>();
    }
    if (j.contains("gp_bound")) {
      const auto& g = j["gp_bound"];
      if (g.contains("c")) cfg.gp_bound.c = g["c"].get<double>();
      if (g.contains("initial_samples")) cfg.gp_bound.initial_samples = g["initial_samples"].get<int>();
      if (g.contains("violation_tol")) cfg.gp_bound.violation_tol = g["violation_tol"].get<double>();
      if (g.contains("max_iterations")) cfg.gp_bound.max_iterations = g["max_iterations"].get<int>();
      if (g.contains("restarts")) cfg.gp_bound.restarts = g["restarts"].get<int>();
      if (g.contains("beta")) cfg.gp_bound.beta = g["beta"].get<double>();
      if (g.contains("grid_delta")) cfg.gp_bound.grid_delta = g["grid_delta"].get<double>();
    }
    if (j.contains("filter")) {
      const auto& f = j["filter"];
      if (f.contains("boundary_fraction"))
        cfg.filter.boundary_fraction = f["boundary_fraction"].get<double>();
      if (f.contains("hold_steps")) cfg.filter.hold_steps = f["hold_steps"].get<int>();
    }
    if (j.contains("simulation")) {
      const auto& s = j["simulation"];
      if (s.contains("x0")) cfg.simulation.x0 = parse_vector(s["x0"]);
      if (s.contains("horizon")) cfg.simulation.horizon = s["horizon"].get<double>();
      if (s.contains("step")) cfg.simulation.step = s["step"].get<double>();
    }
    if (j.contains("exploration")) {
      const auto& e = j["exploration"];
      if (e.contains("recompute_period"))
        cfg.exploration.recompute_period = e["recompute_period"].get<double>();
      if (e.contains("collect_stride")) cfg.exploration.collect_stride = e["collect_stride"].get<int>();
      if (e.contains("learner")) cfg.exploration.learner = e["learner"].get<std::string>();
      if (e.contains("noise_amplitude"))
        cfg.exploration.noise_amplitude = e["noise_amplitude"].get<double>();
      if (e.contains("noise_decay_time"))
        cfg.exploration.noise_decay_time = e["noise_decay_time"].get<double>();
    }
    if (j.contains("known_lipschitz")) cfg.known_lipschitz = j["known_lipschitz"].get<double>();
    if (j.contains("chunk_size")) cfg.chunk_size = j["chunk_size"].get<int>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (cfg.bound_mode != "lipschitz" && cfg.bound_mode != "gp" && cfg.bound_mode != "gp-grid")
      throw ConfigInvalid("bound_mode must be lipschitz | gp | gp-grid");
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("config field error: ") + e.what());
  }
}

ScenarioConfig load_scenario(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw ConfigInvalid("cannot open config file: " + json_path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

// --- pipeline ------------------------------------------------------------------

PipelineData prepare_data(const ScenarioConfig& cfg) {
  PipelineData out;
  out.region = cfg.region;
  if (!cfg.dataset.file.empty()) {
    out.data = load_dataset(cfg.dataset.file);
    if (out.data.dim() != cfg.model.n()) throw DimensionMismatch("dataset dimension != model");
    if (!out.region.ellipsoidal() && out.region.groups.empty()) {
      out.region.a_delta = conic::min_volume_covering_ellipsoid(out.data.x);
    }
  } else if (cfg.dataset.grid_spacing > 0.0) {
    if (!cfg.region.groups.empty()) {
      // plane grids over the active coordinate pairs, remaining coordinates 0
      const int n = cfg.model.n();
      std::vector<Vec> pts;
      for (const auto& g : cfg.region.groups) {
        const double hw = g.half_width;
        const long per_axis = long(std::round(2.0 * hw / cfg.dataset.grid_spacing)) + 1;
        const double s = 2.0 * hw / double(per_axis - 1);
        std::vector<long> idx(g.coords.size(), 0);
        const long total = long(std::pow(double(per_axis), double(g.coords.size())));
        for (long flat = 0; flat < total; ++flat) {
          long rem = flat;
          Vec x = Vec::Zero(n);
          for (size_t c = 0; c < g.coords.size(); ++c) {
            x[g.coords[c]] = -hw + double(rem % per_axis) * s;
            rem /= per_axis;
          }
          pts.push_back(x);
        }
      }
      out.data.x.resize(long(pts.size()), n);
      out.data.d.resize(long(pts.size()), n);
      for (size_t i = 0; i < pts.size(); ++i) {
        out.data.x.row(long(i)) = pts[i].transpose();
        out.data.d.row(long(i)) = cfg.oracle(pts[i]).transpose();
      }
    } else {
      if (!cfg.region.ellipsoidal()) throw DegenerateRegion("generated grid needs a region");
      out.data = generate_grid_dataset(cfg.oracle, cfg.region.a_delta, cfg.dataset.grid_spacing,
                                       cfg.x_poly);
    }
  } else {
    throw ConfigInvalid("dataset: either file or grid_spacing must be given");
  }
  if (out.data.size() == 0) throw EmptyDataSet("prepare_data: no samples");

  if (out.region.delta > 0.0 && cfg.model.n() <= 3 && out.region.ellipsoidal()) {
    out.measured_delta = verify_covering(out.data, out.region);
  } else if (out.region.delta > 0.0 && !out.region.groups.empty()) {
    out.measured_delta = verify_covering(out.data, out.region);
  } else {
    out.measured_delta = out.region.delta;
  }
  return out;
}

PipelineShape prepare_shape(const ScenarioConfig& cfg, const PipelineData& data) {
  const bool constrain = cfg.constrain_shape_to_region && cfg.bound_mode == "lipschitz";
  PipelineShape out;
  out.shape = synthesize_shape(cfg.model, cfg.x_poly, cfg.u_poly,
                               constrain ? &data.region : nullptr, constrain, cfg.shape_input_lmi,
                               cfg.shape_decrease_margin, cfg.shape_support_caps);
  if (cfg.intervals.gamma_bar) {
    out.gamma_bar = *cfg.intervals.gamma_bar;
  } else if (cfg.bound_mode != "lipschitz") {
    out.gamma_bar = 1.0;
  } else if (data.region.ellipsoidal()) {
    // largest gamma with {x^T P x <= gamma} inside {x^T A_delta x <= 1}
    out.gamma_bar = 1.0 / linalg::max_gen_eigenvalue(data.region.a_delta, out.shape.p);
  } else if (!data.region.groups.empty()) {
    double gb = std::numeric_limits<double>::infinity();
    for (const auto& g : data.region.groups)
      for (int c : g.coords)
        gb = std::min(gb, g.half_width * g.half_width / out.shape.e(c, c));
    out.gamma_bar = gb;
  }
  for (const auto& cap : cfg.shape_support_caps) {
    const double sup = cap.direction.dot(out.shape.e * cap.direction);
    if (sup > 0.0)
      out.gamma_bar = std::min(out.gamma_bar, cap.bound * cap.bound / sup);
  }
  return out;
}

BoundProvider make_bound_provider(const ScenarioConfig& cfg, const PipelineData& data,
                                  const PipelineShape& shape, const GpModel* gp) {
  const Mat p = shape.shape.p;
  const double delta = data.region.delta;
  if (cfg.bound_mode == "lipschitz") {
    return [&cfg, &data, p, delta, gamma_bar = shape.gamma_bar](const Interval& iv) {
      LipschitzBoundOptions opts;
      opts.chunk_size = cfg.chunk_size;
      opts.gamma_bar = gamma_bar;
      double l = 0.0;
      if (cfg.known_lipschitz) {
        l = *cfg.known_lipschitz;
      } else {
        // estimate on the level annulus itself; the dilated set reaches into
        // steeper territory and the pairwise-quotient doubling then
        // overshoots the variation actually seen across the shell
        const Ring core(p, iv, 0.0);
        auto idx = ring_indices(data.data, core);
        if (idx.size() < 2) {
          const Ring dilated(p, iv, delta);
          idx = ring_indices(data.data, dilated);
        }
        if (idx.size() < 2) throw EmptyRing("lipschitz estimate: too little ring data");
        l = estimate_lipschitz(data.data, p, idx);
        opts.lipschitz_estimated = true;
      }
      return bound_nonlinearity_lipschitz(data.data, p, iv, delta, l, opts);
    };
  }
  if (cfg.bound_mode == "gp") {
    return [&cfg, p, gp](const Interval& iv) {
      GpBoundConfig bc = cfg.gp_bound;
      bc.seed = cfg.seed;
      return bound_nonlinearity_gp(*gp, p, iv, bc);
    };
  }
  // gp-grid
  return [&cfg, &data, p, gp, delta](const Interval& iv) {
    GpBoundConfig bc = cfg.gp_bound;
    bc.seed = cfg.seed;
    if (bc.grid_delta <= 0.0) bc.grid_delta = std::max(delta, 1e-3);
    double l = 0.0;
    if (cfg.known_lipschitz) {
      l = *cfg.known_lipschitz;
    } else {
      const Ring core(p, iv, 0.0);
      auto idx = ring_indices(data.data, core);
      if (idx.size() < 2) {
        const Ring dilated(p, iv, bc.grid_delta);
        idx = ring_indices(data.data, dilated);
      }
      if (idx.size() >= 2) l = estimate_lipschitz(data.data, p, idx);
    }
    return bound_nonlinearity_gp_grid(*gp, p, iv, bc, l);
  };
}

namespace {

std::vector<Interval> build_intervals(const ScenarioConfig& cfg, double gamma_bar) {
  if (cfg.intervals.shifted)
    return make_intervals_schedule(gamma_bar, cfg.intervals.width, cfg.intervals.count);
  std::vector<double> widths;
  double remaining = gamma_bar;
  for (int i = 0; i < cfg.intervals.count && remaining - cfg.intervals.width > 1e-9; ++i) {
    widths.push_back(cfg.intervals.width);
    remaining -= cfg.intervals.width;
  }
  if (widths.empty()) widths.push_back(gamma_bar * 0.5);
  return make_intervals(gamma_bar, widths);
}

}  // namespace

SafeCertificate run_synthesis(const ScenarioConfig& cfg, const PipelineData& data,
                              const PipelineShape& shape) {
  std::optional<GpModel> gp;
  if (cfg.bound_mode != "lipschitz") gp = GpModel::fit(data.data, cfg.gp_prior);
  auto provider = make_bound_provider(cfg, data, shape, gp ? &*gp : nullptr);
  const auto intervals = build_intervals(cfg, shape.gamma_bar);
  SafeCertificate cert =
      sweep_intervals(cfg.model, shape.shape.e, provider, intervals, cfg.x_poly, cfg.u_poly);
  cert.verification =
      verify_certificate(cert, cfg.model, cfg.oracle, cfg.x_poly, cfg.u_poly, 1000, cfg.seed);
  if (!cfg.region.groups.empty())
    cert.warnings.push_back(
        "data coverage verified on the active coordinate planes only; the sampled "
        "boundary audit is the operative check for this scenario");
  return cert;
}

// --- artifact io ----------------------------------------------------------------

void write_certificate_json(const SafeCertificate& cert, const std::string& path) {
  json j;
  j["P"] = matrix_json(cert.p);
  j["E"] = matrix_json(cert.e);
  j["gamma"] = cert.gamma;
  j["Y"] = matrix_json(cert.y);
  j["K"] = matrix_json(cert.k);
  j["interval"] = {cert.interval.gamma1, cert.interval.gamma2};
  json bound;
  bound["Q"] = matrix_json(cert.bound.q);
  switch (cert.bound.kind) {
    case QuadraticBound::Kind::Lipschitz: bound["kind"] = "lipschitz"; break;
    case QuadraticBound::Kind::Gp: bound["kind"] = "gp"; break;
    case QuadraticBound::Kind::GpGrid: bound["kind"] = "gp-grid"; break;
  }
  bound["c"] = cert.bound.confidence;
  j["bound"] = std::move(bound);
  json ver;
  ver["state_ok"] = cert.verification.state_ok;
  ver["input_ok"] = cert.verification.input_ok;
  ver["vdot_max"] = cert.verification.vdot_max;
  ver["samples"] = cert.verification.samples;
  j["verification"] = std::move(ver);
  j["warnings"] = cert.warnings;
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

SafeCertificate read_certificate_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("cannot open certificate: " + path);
  json j = json::parse(in);
  SafeCertificate cert;
  cert.p = parse_matrix(j.at("P"));
  cert.e = parse_matrix(j.at("E"));
  cert.gamma = j.at("gamma").get<double>();
  cert.y = parse_matrix(j.at("Y"));
  cert.k = parse_matrix(j.at("K"));
  cert.interval = {j.at("interval").at(0).get<double>(), j.at("interval").at(1).get<double>()};
  cert.bound.q = parse_matrix(j.at("bound").at("Q"));
  const std::string kind = j.at("bound").at("kind").get<std::string>();
  cert.bound.kind = kind == "gp"        ? QuadraticBound::Kind::Gp
                    : kind == "gp-grid" ? QuadraticBound::Kind::GpGrid
                                        : QuadraticBound::Kind::Lipschitz;
  cert.bound.confidence = j.at("bound").at("c").get<double>();
  cert.bound.interval = cert.interval;
  cert.verification.state_ok = j.at("verification").at("state_ok").get<bool>();
  cert.verification.input_ok = j.at("verification").at("input_ok").get<bool>();
  cert.verification.vdot_max = j.at("verification").at("vdot_max").get<double>();
  cert.verification.samples = j.at("verification").at("samples").get<int>();
  for (const auto& w : j.at("warnings")) cert.warnings.push_back(w.get<std::string>());
  return cert;
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  const int n = int(traj.states.cols());
  const int m = int(traj.inputs.cols());
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",x" << i;
  for (int i = 1; i <= m; ++i) out << ",u" << i;
  for (int i = 1; i <= m; ++i) out << ",ubar" << i;
  out << ",safety_active\n";
  out.precision(12);
  for (int r = 0; r < traj.steps(); ++r) {
    out << traj.time[size_t(r)];
    for (int i = 0; i < n; ++i) out << "," << traj.states(r, i);
    for (int i = 0; i < m; ++i) out << "," << traj.inputs(r, i);
    for (int i = 0; i < m; ++i) out << "," << traj.desired_inputs(r, i);
    out << "," << int(traj.safety_active[size_t(r)]) << "\n";
  }
}

void write_history_csv(const std::vector<ExploreRecord>& hist, const std::string& path) {
  std::ofstream out(path);
  out << "t,gamma,volume\n";
  out.precision(12);
  for (const auto& h : hist) out << h.t << "," << h.gamma << "," << h.volume << "\n";
}

// --- command driver ---------------------------------------------------------------

namespace {

Vec default_x0(const SafeCertificate& cert) {
  const int n = int(cert.p.rows());
  Vec dir = Vec::Ones(n);
  const double level = dir.dot(cert.p * dir);
  return dir * std::sqrt(cert.gamma / level) * 0.999;
}

struct Report {
  std::ostringstream text;
  void line(const std::string& s) { text << s << "\n"; }
};

std::string mat_str(const Mat& m) {
  std::ostringstream ss;
  ss.precision(6);
  ss << "[";
  for (int i = 0; i < m.rows(); ++i) {
    ss << "[";
    for (int j = 0; j < m.cols(); ++j) ss << m(i, j) << (j + 1 < m.cols() ? ", " : "");
    ss << "]" << (i + 1 < m.rows() ? ", " : "");
  }
  ss << "]";
  return ss.str();
}

}  // namespace

int run_scenario(const ScenarioConfig& cfg, const std::string& command,
                 const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  Report report;
  report.line("scenario: " + cfg.oracle_name);
  report.line("command: " + command);
  report.line("seed: " + std::to_string(cfg.seed));

  try {
    if (command == "baseline-robust") {
      const double x_max = cfg.x_poly.b_c.maxCoeff();
      const double u_max = cfg.u_poly.b_c.maxCoeff();
      const double w = cfg.known_lipschitz ? *cfg.known_lipschitz : 8.0;
      const auto res = robust_baseline_1d(w, x_max, u_max);
      report.line(std::string("robust baseline: ") + (res.feasible ? "Feasible" : "Infeasible"));
      report.line("k interval: [" + std::to_string(res.k_lo) + ", " + std::to_string(res.k_hi) +
                  "]");
      std::ofstream(fs::path(out_dir) / "report.txt") << report.text.str();
      return 0;
    }

    PipelineData data = prepare_data(cfg);
    report.line("data: N = " + std::to_string(data.data.size()) +
                ", delta(measured) = " + std::to_string(data.measured_delta) +
                ", delta(declared) = " + std::to_string(data.region.delta));

    PipelineShape shape = prepare_shape(cfg, data);
    report.line("shape: P = " + mat_str(shape.shape.p));
    report.line("gamma_bar = " + std::to_string(shape.gamma_bar));

    if (command == "shape") {
      SafeCertificate cert;
      cert.p = shape.shape.p;
      cert.e = shape.shape.e;
      cert.gamma = 1.0;
      cert.y = shape.shape.y0;
      cert.k = shape.shape.k0;
      cert.interval = {0.5, 1.0};
      cert.bound.q = Mat::Zero(cfg.model.n(), cfg.model.n());
      cert.bound.interval = cert.interval;
      cert.warnings.push_back("shape-stage certificate: valid for d = 0 only");
      if (!cfg.shape_input_lmi)
        cert.warnings.push_back(
            "shape stage solved without the input LMI; input containment is enforced on the "
            "safe-set stage gain");
      cert.verification = verify_certificate(
          cert, cfg.model, {[n = cfg.model.n()](const Vec&) { return Vec::Zero(n); }, 0.0, "zero"},
          cfg.x_poly, cfg.u_poly, 1000, cfg.seed);
      write_certificate_json(cert, (fs::path(out_dir) / "certificate.json").string());
      std::ofstream(fs::path(out_dir) / "report.txt") << report.text.str();
      return 0;
    }

    if (command == "bound-lipschitz" || command == "bound-gp") {
      ScenarioConfig local = cfg;
      local.bound_mode = command == "bound-gp" ? "gp" : "lipschitz";
      std::optional<GpModel> gp;
      if (local.bound_mode != "lipschitz") gp = GpModel::fit(data.data, local.gp_prior);
      auto provider = make_bound_provider(local, data, shape, gp ? &*gp : nullptr);
      const auto intervals = build_intervals(local, shape.gamma_bar);
      const QuadraticBound bound = provider(intervals.front());
      report.line("interval: [" + std::to_string(bound.interval.gamma1) + ", " +
                  std::to_string(bound.interval.gamma2) + "]");
      report.line("Q = " + mat_str(bound.q));
      report.line("fit residual = " + std::to_string(bound.fit_residual));
      if (bound.kind == QuadraticBound::Kind::Gp) {
        report.line("iterations = " + std::to_string(bound.iterations));
        report.line("audit max violation = " + std::to_string(bound.audit_max_violation));
      }
      json j;
      j["Q"] = matrix_json(bound.q);
      j["interval"] = {bound.interval.gamma1, bound.interval.gamma2};
      j["kind"] = command == "bound-gp" ? "gp" : "lipschitz";
      j["c"] = bound.confidence;
      std::ofstream((fs::path(out_dir) / "bound.json").string()) << j.dump(2) << "\n";
      std::ofstream(fs::path(out_dir) / "report.txt") << report.text.str();
      return 0;
    }

    SafeCertificate cert = run_synthesis(cfg, data, shape);
    report.line("gamma* = " + std::to_string(cert.gamma));
    report.line("K = " + mat_str(cert.k));
    report.line(std::string("verification: state ") + (cert.verification.state_ok ? "ok" : "FAIL") +
                ", input " + (cert.verification.input_ok ? "ok" : "FAIL") +
                ", vdot_max = " + std::to_string(cert.verification.vdot_max));
    write_certificate_json(cert, (fs::path(out_dir) / "certificate.json").string());

    if (command == "synthesize" || command == "verify") {
      std::ofstream(fs::path(out_dir) / "report.txt") << report.text.str();
      return certificate_checks_pass(cert) || command == "synthesize" ? 0 : 3;
    }

    if (command == "simulate") {
      report.line("filter: boundary_fraction = " + std::to_string(cfg.filter.boundary_fraction) +
                  ", hold_steps = " + std::to_string(cfg.filter.hold_steps));
      Vec x0 = cfg.simulation.x0 ? *cfg.simulation.x0 : default_x0(cert);
      const double lvl = x0.dot(cert.p * x0);
      if (lvl > cert.gamma * (1.0 - 1e-9)) {
        x0 *= std::sqrt(0.999 * cert.gamma / lvl);
        report.line("x0 scaled onto the safe-set boundary (requested level " +
                    std::to_string(lvl) + ")");
      }
      Trajectory traj = simulate(cfg.model, cfg.oracle, cert, cfg.u_poly, cfg.desired_policy, x0,
                                 cfg.simulation.horizon, cfg.simulation.step, cfg.filter);
      write_trajectory_csv(traj, (fs::path(out_dir) / "trajectory.csv").string());
      report.line("steps = " + std::to_string(traj.steps()));
      report.line("max level = " + std::to_string(traj.max_level(cert.p)) +
                  " (gamma = " + std::to_string(cert.gamma) + ")");
      report.line("safety activations: " + std::to_string(traj.activation_steps()) + " steps in " +
                  std::to_string(traj.episodes()) + " episodes");
      std::ofstream(fs::path(out_dir) / "report.txt") << report.text.str();
      return 0;
    }

    if (command == "explore") {
      report.line("filter: boundary_fraction = " + std::to_string(cfg.filter.boundary_fraction) +
                  ", hold_steps = " + std::to_string(cfg.filter.hold_steps));
      ExplorationSchedule sched;
      sched.recompute_period = cfg.exploration.recompute_period;
      sched.collect_stride = cfg.exploration.collect_stride;
      sched.prior = cfg.gp_prior;
      sched.gamma_bar = shape.gamma_bar;
      sched.interval_width = cfg.intervals.width;
      sched.interval_count = cfg.intervals.count;
      sched.bound_cfg = cfg.gp_bound;
      sched.bound_cfg.seed = cfg.seed;
      sched.bound_cfg.restarts = cfg.exploration.restarts;
      sched.max_halvings = cfg.exploration.max_halvings;
      std::unique_ptr<Learner> learner;
      if (cfg.exploration.learner == "hill-climb") {
        learner = std::make_unique<HillClimbLearner>(cfg.model.m(), cfg.model.n(), 0.5, cfg.seed);
      } else {
        learner = std::make_unique<NoisyGainLearner>(cfg.model.m(), cfg.model.n(),
                                                     cfg.exploration.noise_amplitude,
                                                     cfg.exploration.noise_decay_time, cfg.seed);
      }
      const Vec x0 = cfg.simulation.x0 ? *cfg.simulation.x0 : default_x0(cert) * 0.3;
      ExploreResult res = explore(cfg.model, cfg.oracle, cfg.x_poly, cfg.u_poly, data.data, sched,
                                  *learner, cert, x0, cfg.simulation.horizon, cfg.simulation.step,
                                  cfg.filter);
      write_trajectory_csv(res.trajectory, (fs::path(out_dir) / "trajectory.csv").string());
      write_history_csv(res.history, (fs::path(out_dir) / "history.csv").string());
      write_certificate_json(res.final_certificate,
                             (fs::path(out_dir) / "certificate.json").string());
      report.line("recomputes = " + std::to_string(res.history.size() - 1) + " (failures " +
                  std::to_string(res.recompute_failures) + ")");
      report.line("gamma: initial " + std::to_string(res.history.front().gamma) + " final " +
                  std::to_string(res.history.back().gamma));
      report.line("activations: " + std::to_string(res.trajectory.activation_steps()) +
                  " steps in " + std::to_string(res.trajectory.episodes()) + " episodes");
      std::ofstream(fs::path(out_dir) / "report.txt") << report.text.str();
      return 0;
    }

    std::cerr << "unknown command: " << command << "\n";
    return 2;
  } catch (const Error& e) {
    report.line(std::string("error: ") + e.what());
    std::ofstream(fs::path(out_dir) / "report.txt") << report.text.str();
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace safenv
