#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "safenvelope/linalg.hpp"

namespace safenv {

/// Known linear part (A, B) of the dynamics x' = Ax + Bu + d(x).
struct LinearModel {
  Mat a;
  Mat b;

  LinearModel() = default;
  LinearModel(Mat a_in, Mat b_in);

  int n() const { return int(a.rows()); }
  int m() const { return int(b.cols()); }
  bool controllable() const { return controllable_; }

 private:
  bool controllable_ = false;
};

/// {p : A_c p <= b_c}. Must contain the origin.
struct Polytope {
  Mat a_c;
  Vec b_c;

  Polytope() = default;
  Polytope(Mat a, Vec b);

  int rows() const { return int(a_c.rows()); }
  int dim() const { return int(a_c.cols()); }
};

bool polytope_contains(const Polytope& poly, const Vec& p);

/// Noise-free samples {(x_i, d(x_i))}. Rows of x / d are points.
struct DataSet {
  Mat x;  // N x n
  Mat d;  // N x n

  int size() const { return int(x.rows()); }
  int dim() const { return int(x.cols()); }

  void append(const Vec& xi, const Vec& di);
};

/// Coordinate-subspace data coverage: data is dense over a box in a small
/// set of coordinates (remaining coordinates are zero in the data).
struct CoordinateGroup {
  std::vector<int> coords;
  double half_width = 0.0;
};

/// Region over which the data is dense (covering radius delta). Either a full
/// ellipsoid {x : x^T A_delta x <= 1} or a product of coordinate groups.
struct DataRegion {
  Mat a_delta;  // empty when the region is given by coordinate groups
  double delta = 0.0;
  std::vector<CoordinateGroup> groups;

  bool ellipsoidal() const { return a_delta.size() > 0; }
  bool contains(const Vec& x) const;
};

/// Ground-truth nonlinearity, used by simulation scenarios only.
struct NonlinearityOracle {
  std::function<Vec(const Vec&)> d;
  std::optional<double> lipschitz;  // known constant for x -> d(x), if any
  std::string name;

  Vec operator()(const Vec& x) const { return d(x); }
};

/// Parse a dataset CSV with header x1,..,xn,d1,..,dn.
DataSet load_dataset(const std::string& path);
void save_dataset(const DataSet& data, const std::string& path);

/// max over `region_samples` rows of the min 2-norm distance to the data.
double covering_radius(const DataSet& data, const Mat& region_samples);

/// Samples an ellipsoid {x^T A x <= 1} on an axis grid with the given
/// resolution (supported for dim <= 3; larger regions supply samples).
Mat sample_ellipsoid_grid(const Mat& a_delta, double resolution);

/// Verifies the covering assumption on `region` by sampling at delta/4.
/// Returns the measured covering radius; throws AssumptionViolated when it
/// exceeds region.delta (with slack for the sampling resolution).
double verify_covering(const DataSet& data, const DataRegion& region);

/// Closest data pair to x (2-norm, ties to the lowest index).
std::pair<Vec, Vec> nearest_datum(const DataSet& data, const Vec& x);
int nearest_datum_index(const DataSet& data, const Vec& x);

Vec eval_dynamics(const LinearModel& model, const NonlinearityOracle& oracle, const Vec& x,
                  const Vec& u);

}  // namespace safenv
