#include "safenvelope/sampling.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <random>

#include "safenvelope/errors.hpp"

namespace safenv {

namespace {

// primitive-polynomial direction numbers (Joe-Kuo), dims 2..10
struct DirSpec {
  int s;
  std::uint32_t a;
  std::uint32_t m[8];
};
constexpr DirSpec kDirs[] = {
    {1, 0, {1}},
    {2, 1, {1, 3}},
    {3, 1, {1, 3, 1}},
    {3, 2, {1, 1, 1}},
    {4, 1, {1, 1, 3, 3}},
    {4, 4, {1, 3, 5, 13}},
    {5, 2, {1, 1, 5, 5, 17}},
    {5, 4, {1, 1, 5, 5, 5}},
    {5, 7, {1, 1, 7, 11, 19}},
};

}  // namespace

Sobol::Sobol(int dim, std::uint64_t seed) : dim_(dim) {
  if (dim < 1 || dim > 10) throw Error("Sobol: dimension out of range [1,10]");
  dirs_.resize(size_t(dim));
  state_.assign(size_t(dim), 0);
  scramble_.assign(size_t(dim), 0);

  // dim 0: van der Corput
  for (int b = 0; b < 32; ++b) dirs_[0][size_t(b)] = 1u << (31 - b);
  for (int d = 1; d < dim; ++d) {
    const DirSpec& spec = kDirs[d - 1];
    const int s = spec.s;
    auto& v = dirs_[size_t(d)];
    for (int b = 0; b < s; ++b) v[size_t(b)] = spec.m[b] << (31 - b);
    for (int b = s; b < 32; ++b) {
      std::uint32_t x = v[size_t(b - s)] ^ (v[size_t(b - s)] >> s);
      for (int k = 1; k < s; ++k)
        if ((spec.a >> (s - 1 - k)) & 1u) x ^= v[size_t(b - k)];
      v[size_t(b)] = x;
    }
  }
  if (seed != 0) {
    std::mt19937_64 rng(seed);
    for (int d = 0; d < dim; ++d) scramble_[size_t(d)] = std::uint32_t(rng() >> 32);
  }
}

Vec Sobol::next() {
  Vec out(dim_);
  if (index_ == 0) {
    for (int d = 0; d < dim_; ++d)
      out[d] = double(scramble_[size_t(d)]) * 0x1p-32;
    ++index_;
    return out;
  }
  const int c = std::countr_zero(index_);
  for (int d = 0; d < dim_; ++d) {
    state_[size_t(d)] ^= dirs_[size_t(d)][size_t(c)];
    out[d] = double(state_[size_t(d)] ^ scramble_[size_t(d)]) * 0x1p-32;
  }
  ++index_;
  return out;
}

namespace {

// low-discrepancy point in [0,1)^{n+1} -> (direction on S^{n-1}, level u)
void gaussian_direction(const Vec& u01, int n, Vec& dir, double& level_u) {
  dir.resize(n);
  const int m = int(u01.size());
  // Box-Muller over consecutive pairs
  for (int i = 0; i < n; i += 2) {
    const double u1 = std::min(std::max(u01[i % m], 1e-12), 1.0 - 1e-12);
    const double u2 = u01[(i + 1) % m];
    const double r = std::sqrt(-2.0 * std::log(u1));
    dir[i] = r * std::cos(2.0 * std::numbers::pi * u2);
    if (i + 1 < n) dir[i + 1] = r * std::sin(2.0 * std::numbers::pi * u2);
  }
  const double nrm = dir.norm();
  if (nrm < 1e-14)
    dir.setConstant(1.0 / std::sqrt(double(n)));
  else
    dir /= nrm;
  level_u = u01[m - 1];
}

}  // namespace

Mat sample_ellipsoid_boundary(const Mat& p, double gamma, int count, std::uint64_t seed) {
  const int n = int(p.rows());
  if (gamma <= 0.0) throw Error("sample_ellipsoid_boundary: gamma must be positive");
  const Mat p_inv_sqrt = linalg::inv_sqrt_pd(p);
  Sobol sobol(std::min(10, n + 1), seed);
  Mat out(count, n);
  Vec dir;
  double level_u = 0.0;
  for (int i = 0; i < count; ++i) {
    gaussian_direction(sobol.next(), n, dir, level_u);
    out.row(i) = (std::sqrt(gamma) * (p_inv_sqrt * dir)).transpose();
  }
  return out;
}

Mat sample_ring(const Mat& p, double gamma1, double gamma2, int count, std::uint64_t seed) {
  const int n = int(p.rows());
  if (!(0.0 < gamma1 && gamma1 < gamma2))
    throw Error("sample_ring: need 0 < gamma1 < gamma2");
  const Mat p_inv_sqrt = linalg::inv_sqrt_pd(p);
  Sobol sobol(std::min(10, n + 1), seed);
  Mat out(count, n);
  Vec dir;
  double level_u = 0.0;
  for (int i = 0; i < count; ++i) {
    gaussian_direction(sobol.next(), n, dir, level_u);
    const double gamma = gamma1 + (gamma2 - gamma1) * level_u;
    out.row(i) = (std::sqrt(gamma) * (p_inv_sqrt * dir)).transpose();
  }
  return out;
}

}  // namespace safenv
