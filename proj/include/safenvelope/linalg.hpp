#pragma once

#include <Eigen/Dense>

#include "safenvelope/kernels.hpp"

namespace safenv {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

namespace linalg {

inline double min_eigenvalue(const Mat& s) {
  Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline bool is_positive_definite(const Mat& s, double tol = 0.0) {
  return min_eigenvalue(0.5 * (s + s.transpose())) > tol;
}

/// rank of [B, AB, ..., A^{n-1}B]
inline int controllability_rank(const Mat& a, const Mat& b) {
  const int n = int(a.rows());
  Mat ctrb(n, n * b.cols());
  Mat blk = b;
  for (int i = 0; i < n; ++i) {
    ctrb.middleCols(i * b.cols(), b.cols()) = blk;
    blk = a * blk;
  }
  Eigen::ColPivHouseholderQR<Mat> qr(ctrb);
  qr.setThreshold(1e-10);
  return int(qr.rank());
}

/// Symmetric inverse square root of a PD matrix.
inline Mat inv_sqrt_pd(const Mat& p) {
  Eigen::SelfAdjointEigenSolver<Mat> es(p);
  return es.operatorInverseSqrt();
}

inline double logdet_pd(const Mat& p) {
  Eigen::LLT<Mat> llt(p);
  double s = 0.0;
  for (int i = 0; i < p.rows(); ++i) s += std::log(llt.matrixL()(i, i));
  return 2.0 * s;
}

/// largest generalized eigenvalue of A v = lambda B v with A sym, B PD
inline double max_gen_eigenvalue(const Mat& a, const Mat& b) {
  const Mat bi = inv_sqrt_pd(b);
  Eigen::SelfAdjointEigenSolver<Mat> es(bi * a * bi, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

/// SoA view over the rows of a column-major points matrix (rows = points).
class PointsAdapter {
 public:
  explicit PointsAdapter(const Mat& pts) {
    cols_.reserve(size_t(pts.cols()));
    for (int c = 0; c < pts.cols(); ++c) cols_.push_back(pts.col(c).data());
    view_ = kernels::PointsView{cols_.data(), int(pts.cols()), pts.rows()};
  }
  const kernels::PointsView& view() const { return view_; }

 private:
  std::vector<const double*> cols_;
  kernels::PointsView view_{};
};

}  // namespace linalg
}  // namespace safenv
