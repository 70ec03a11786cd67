#include "safenvelope/gp_regression.hpp"

#include <cmath>

#include "safenvelope/errors.hpp"

namespace safenv {

double se_kernel(const Vec& x, const Vec& xp, double sigma_f, double length) {
  return sigma_f * sigma_f * std::exp(-(x - xp).squaredNorm() / (2.0 * length * length));
}

GpPrior GpPrior::isotropic(int dim, double sigma_f, double length, double c_mu) {
  GpPrior p;
  p.c_mu = Vec::Constant(dim, c_mu);
  p.sigma_f = Vec::Constant(dim, sigma_f);
  p.length = Vec::Constant(dim, length);
  return p;
}

GpModel GpModel::fit(const DataSet& data, const GpPrior& prior) {
  if (data.size() == 0) throw EmptyDataSet("GpModel::fit: empty dataset");
  const int n = data.dim();
  if (prior.sigma_f.size() != n || prior.length.size() != n || prior.c_mu.size() != n)
    throw DimensionMismatch("GpModel::fit: prior dimension");
  if ((prior.sigma_f.array() <= 0.0).any() || (prior.length.array() <= 0.0).any())
    throw Error("GpModel::fit: sigma_f and lengthscale must be positive");

  // collapse exact duplicate inputs; conflicting targets are unrecoverable
  std::vector<int> keep;
  for (int i = 0; i < data.size(); ++i) {
    bool dup = false;
    for (int j : keep) {
      if ((data.x.row(i) - data.x.row(j)).norm() < 1e-12) {
        if ((data.d.row(i) - data.d.row(j)).norm() > 1e-9)
          throw SingularCovariance("GpModel::fit: duplicate inputs with conflicting targets");
        dup = true;
        break;
      }
    }
    if (!dup) keep.push_back(i);
  }

  GpModel model;
  model.prior_ = prior;
  const int count = int(keep.size());
  model.x_.resize(count, n);
  Mat targets(count, n);
  for (int i = 0; i < count; ++i) {
    model.x_.row(i) = data.x.row(keep[size_t(i)]);
    targets.row(i) = data.d.row(keep[size_t(i)]);
  }

  model.alpha_.resize(count, n);
  model.k_inv_.reserve(size_t(n));
  Mat sq_dist(count, count);
  for (int i = 0; i < count; ++i)
    for (int j = 0; j < count; ++j)
      sq_dist(i, j) = (model.x_.row(i) - model.x_.row(j)).squaredNorm();

  for (int d = 0; d < n; ++d) {
    const double sf2 = prior.sigma_f[d] * prior.sigma_f[d];
    const double inv2l2 = 1.0 / (2.0 * prior.length[d] * prior.length[d]);
    const Mat k0 = sf2 * (-inv2l2 * sq_dist.array()).exp().matrix();
    const Vec y = targets.col(d).array() - prior.c_mu[d];

    // the exact interpolation offset at a training point is jitter * alpha_j;
    // back the jitter off until that stays inside the noise-free contract
    double jitter = prior.jitter;
    bool have = false;
    double best_offset = std::numeric_limits<double>::infinity();
    Vec best_alpha;
    Eigen::LLT<Mat> best_llt;
    const double resid_tol = 1e-8 * count * std::max(1.0, y.lpNorm<Eigen::Infinity>());
    for (int attempt = 0; attempt < 4; ++attempt) {
      Mat k = k0;
      k.diagonal().array() += jitter;
      Eigen::LLT<Mat> llt(k);
      if (llt.info() != Eigen::Success) break;
      Vec alpha = llt.solve(y);
      double resid = (k * alpha - y).lpNorm<Eigen::Infinity>();
      for (int round = 0; round < 8 && resid > 1e-12; ++round) {
        alpha += llt.solve(y - k * alpha);
        const double next = (k * alpha - y).lpNorm<Eigen::Infinity>();
        if (next >= resid) break;
        resid = next;
      }
      if (resid <= resid_tol) {
        const double offset = jitter * alpha.lpNorm<Eigen::Infinity>();
        if (offset < best_offset) {
          best_offset = offset;
          best_alpha = alpha;
          best_llt = llt;
          have = true;
        }
        if (offset <= 1e-7) break;
      }
      if (jitter <= 1e-14) break;
      jitter /= 100.0;
    }
    if (!have) throw SingularCovariance("GpModel::fit: covariance factorization failed");
    model.alpha_.col(d) = best_alpha;
    model.k_inv_.push_back(best_llt.solve(Mat::Identity(count, count)));
  }
  return model;
}

void GpModel::posterior(const Vec& x, Vec& mu, Vec& var) const {
  const int n = dim();
  if (x.size() != n) throw DimensionMismatch("GpModel::posterior: query dimension");
  mu.resize(n);
  var.resize(n);

  const int count = size();
  Vec sq(count);
  linalg::PointsAdapter pts(x_);
  kernels::batch_sq_dist(x.data(), pts.view(), sq.data());

  Vec k_vec(count);
  for (int d = 0; d < n; ++d) {
    const double sf2 = prior_.sigma_f[d] * prior_.sigma_f[d];
    const double inv2l2 = 1.0 / (2.0 * prior_.length[d] * prior_.length[d]);
    k_vec = sf2 * (-inv2l2 * sq.array()).exp().matrix();
    mu[d] = prior_.c_mu[d] + k_vec.dot(alpha_.col(d));
    var[d] = std::max(0.0, sf2 - k_vec.dot(k_inv_[size_t(d)] * k_vec));
  }
}

Vec GpModel::posterior_mean(const Vec& x) const {
  Vec mu, var;
  posterior(x, mu, var);
  return mu;
}

}  // namespace safenv
