#include "safenvelope/system_model.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "safenvelope/errors.hpp"

namespace safenv {

LinearModel::LinearModel(Mat a_in, Mat b_in) : a(std::move(a_in)), b(std::move(b_in)) {
  if (a.rows() != a.cols()) throw DimensionMismatch("A must be square");
  if (b.rows() != a.rows()) throw DimensionMismatch("B row count must match A");
  controllable_ = linalg::controllability_rank(a, b) == a.rows();
}

Polytope::Polytope(Mat a, Vec b) : a_c(std::move(a)), b_c(std::move(b)) {
  if (a_c.rows() != b_c.size()) throw DimensionMismatch("polytope rows mismatch");
  if ((b_c.array() < 0.0).any())
    throw Error("polytope must contain the origin (all b_c >= 0)");
}

bool polytope_contains(const Polytope& poly, const Vec& p) {
  if (p.size() != poly.dim()) throw DimensionMismatch("polytope_contains: point dimension");
  return ((poly.a_c * p).array() <= poly.b_c.array()).all();
}

void DataSet::append(const Vec& xi, const Vec& di) {
  if (x.size() == 0) {
    x.resize(0, xi.size());
    d.resize(0, xi.size());
  }
  if (xi.size() != x.cols() || di.size() != d.cols())
    throw DimensionMismatch("DataSet::append: dimension");
  x.conservativeResize(x.rows() + 1, Eigen::NoChange);
  d.conservativeResize(d.rows() + 1, Eigen::NoChange);
  x.row(x.rows() - 1) = xi.transpose();
  d.row(d.rows() - 1) = di.transpose();
}

bool DataRegion::contains(const Vec& x) const {
  if (ellipsoidal()) return x.dot(a_delta * x) <= 1.0;
  for (const auto& g : groups)
    for (int c : g.coords)
      if (std::abs(x[c]) > g.half_width) return false;
  return true;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& tok, int line_no) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  while (first != last && *first == ' ') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw MalformedRow("line " + std::to_string(line_no) + ": bad float '" + tok + "'");
  return v;
}

}  // namespace

DataSet load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw EmptyFile("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw EmptyFile("empty dataset file: " + path);

  const auto header = split_csv_line(line);
  const size_t cols = header.size();
  if (cols < 2 || cols % 2 != 0)
    throw MalformedRow("header must be x1..xn,d1..dn, got " + std::to_string(cols) + " columns");
  const int n = int(cols / 2);
  for (int i = 0; i < n; ++i) {
    if (header[size_t(i)] != "x" + std::to_string(i + 1) ||
        header[size_t(n + i)] != "d" + std::to_string(i + 1))
      throw MalformedRow("unexpected header column '" + header[size_t(i)] +
                         "' (noise columns are not accepted)");
  }

  std::vector<double> vals;
  int rows = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto toks = split_csv_line(line);
    if (toks.size() != cols)
      throw MalformedRow("line " + std::to_string(line_no) + ": expected " +
                         std::to_string(cols) + " columns, got " + std::to_string(toks.size()));
    for (const auto& t : toks) vals.push_back(parse_double(t, line_no));
    ++rows;
  }
  if (rows == 0) throw EmptyFile("dataset has a header but no rows: " + path);

  DataSet data;
  data.x.resize(rows, n);
  data.d.resize(rows, n);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < n; ++c) {
      data.x(r, c) = vals[size_t(r) * cols + size_t(c)];
      data.d(r, c) = vals[size_t(r) * cols + size_t(n + c)];
    }
  return data;
}

void save_dataset(const DataSet& data, const std::string& path) {
  std::ofstream out(path);
  const int n = data.dim();
  for (int i = 0; i < n; ++i) out << "x" << (i + 1) << ",";
  for (int i = 0; i < n; ++i) out << "d" << (i + 1) << (i + 1 < n ? "," : "");
  out << "\n";
  out.precision(17);
  for (int r = 0; r < data.size(); ++r) {
    for (int c = 0; c < n; ++c) out << data.x(r, c) << ",";
    for (int c = 0; c < n; ++c) out << data.d(r, c) << (c + 1 < n ? "," : "");
    out << "\n";
  }
}

double covering_radius(const DataSet& data, const Mat& region_samples) {
  if (data.size() == 0) throw EmptyDataSet("covering_radius: empty dataset");
  if (region_samples.cols() != data.dim())
    throw DimensionMismatch("covering_radius: sample dimension");
  linalg::PointsAdapter pts(data.x);
  double worst = 0.0;
  Vec q(data.dim());
  for (int r = 0; r < region_samples.rows(); ++r) {
    q = region_samples.row(r).transpose();
    worst = std::max(worst, kernels::min_sq_dist(q.data(), pts.view(), nullptr));
  }
  return std::sqrt(worst);
}

Mat sample_ellipsoid_grid(const Mat& a_delta, double resolution) {
  const int n = int(a_delta.rows());
  if (n > 3) throw Error("sample_ellipsoid_grid: supported for dim <= 3");
  if (resolution <= 0.0) throw Error("sample_ellipsoid_grid: resolution must be positive");
  // bounding box half-widths: sqrt((A^-1)_ii)
  const Mat ainv = a_delta.inverse();
  std::vector<double> half(static_cast<size_t>(n));
  std::vector<int> counts(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    half[size_t(i)] = std::sqrt(std::max(0.0, ainv(i, i)));
    counts[size_t(i)] = int(std::floor(half[size_t(i)] / resolution)) * 2 + 1;
  }
  std::vector<Vec> rows;
  std::vector<int> iv(n, 0);
  const long total = [&] {
    long t = 1;
    for (int i = 0; i < n; ++i) t *= counts[size_t(i)];
    return t;
  }();
  rows.reserve(size_t(total) / 2);
  Vec x(n);
  for (long flat = 0; flat < total; ++flat) {
    long rem = flat;
    for (int i = 0; i < n; ++i) {
      const int ci = counts[size_t(i)];
      x[i] = (double(rem % ci) - (ci - 1) / 2.0) * resolution;
      rem /= ci;
    }
    if (x.dot(a_delta * x) <= 1.0) rows.push_back(x);
  }
  Mat out(long(rows.size()), n);
  for (size_t r = 0; r < rows.size(); ++r) out.row(long(r)) = rows[r].transpose();
  return out;
}

double verify_covering(const DataSet& data, const DataRegion& region) {
  if (data.size() == 0) throw EmptyDataSet("verify_covering: empty dataset");
  if (region.delta <= 0.0) throw AssumptionViolated("verify_covering: delta must be positive");
  const double res = region.delta / 4.0;
  double measured = 0.0;
  if (region.ellipsoidal()) {
    measured = covering_radius(data, sample_ellipsoid_grid(region.a_delta, res));
  } else {
    // dense data along coordinate-group planes: check each group against the
    // projection of the data onto its coordinates
    for (const auto& g : region.groups) {
      const int k = int(g.coords.size());
      Mat proj(data.size(), k);
      for (int c = 0; c < k; ++c) proj.col(c) = data.x.col(g.coords[size_t(c)]);
      Mat box_a = Mat::Zero(k, k);
      for (int c = 0; c < k; ++c) box_a(c, c) = 1.0 / (g.half_width * g.half_width);
      // grid of the box corners' circumscribed ellipse restricted to the box
      Mat samples = sample_ellipsoid_grid(box_a * (1.0 / double(k)), res);
      std::vector<long> keep;
      for (long r = 0; r < samples.rows(); ++r)
        if ((samples.row(r).cwiseAbs().array() <= g.half_width + 1e-12).all()) keep.push_back(r);
      Mat boxed(long(keep.size()), k);
      for (size_t r = 0; r < keep.size(); ++r) boxed.row(long(r)) = samples.row(keep[r]);
      DataSet proj_data;
      proj_data.x = proj;
      proj_data.d = Mat::Zero(proj.rows(), k);
      measured = std::max(measured, covering_radius(proj_data, boxed));
    }
  }
  // the probe grid itself resolves distances only to ~res/2
  if (measured > region.delta + res)
    throw AssumptionViolated("covering radius " + std::to_string(measured) +
                             " exceeds declared delta " + std::to_string(region.delta));
  return measured;
}

int nearest_datum_index(const DataSet& data, const Vec& x) {
  if (data.size() == 0) throw EmptyDataSet("nearest_datum: empty dataset");
  if (x.size() != data.dim()) throw DimensionMismatch("nearest_datum: dimension");
  linalg::PointsAdapter pts(data.x);
  std::ptrdiff_t idx = -1;
  kernels::min_sq_dist(x.data(), pts.view(), &idx);
  return int(idx);
}

std::pair<Vec, Vec> nearest_datum(const DataSet& data, const Vec& x) {
  const int idx = nearest_datum_index(data, x);
  return {data.x.row(idx).transpose(), data.d.row(idx).transpose()};
}

Vec eval_dynamics(const LinearModel& model, const NonlinearityOracle& oracle, const Vec& x,
                  const Vec& u) {
  if (x.size() != model.n() || u.size() != model.m())
    throw DimensionMismatch("eval_dynamics: state/input dimension");
  return model.a * x + model.b * u + oracle(x);
}

}  // namespace safenv
