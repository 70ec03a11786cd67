#pragma once

#include <vector>

#include "safenvelope/system_model.hpp"

namespace safenv {

/// Squared-exponential kernel sigma_f^2 exp(-||x-x'||^2 / (2 l^2)).
double se_kernel(const Vec& x, const Vec& xp, double sigma_f, double length);

/// Per-output-dimension GP prior with constant mean.
struct GpPrior {
  Vec c_mu;     // constant prior mean per output dimension
  Vec sigma_f;  // signal stddev per output dimension
  Vec length;   // lengthscale per output dimension
  double jitter = 1e-10;

  static GpPrior isotropic(int dim, double sigma_f, double length, double c_mu = 0.0);
};

/// Exact GP posterior over each component of d(x), noise-free targets.
class GpModel {
 public:
  static GpModel fit(const DataSet& data, const GpPrior& prior);

  int dim() const { return int(x_.cols()); }
  int size() const { return int(x_.rows()); }
  const GpPrior& prior() const { return prior_; }
  const Mat& inputs() const { return x_; }

  /// Posterior mean and variance of every output dimension at x.
  void posterior(const Vec& x, Vec& mu, Vec& var) const;
  Vec posterior_mean(const Vec& x) const;

 private:
  Mat x_;  // N x n training inputs
  GpPrior prior_;
  Mat alpha_;               // N x n, K_i^-1 (y_i - c_mu_i) per column
  std::vector<Mat> k_inv_;  // per output dimension
};

}  // namespace safenv
