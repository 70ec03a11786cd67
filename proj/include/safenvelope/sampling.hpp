#pragma once

#include <cstdint>

#include "safenvelope/linalg.hpp"

namespace safenv {

/// Gray-code Sobol sequence (dimensions up to 10), optionally digit-scrambled
/// by a seeded xor mask so distinct seeds give distinct low-discrepancy sets.
class Sobol {
 public:
  explicit Sobol(int dim, std::uint64_t seed = 0);
  Vec next();  // in [0,1)^dim
  int dim() const { return dim_; }

 private:
  int dim_;
  std::uint32_t index_ = 0;
  std::vector<std::uint32_t> state_;
  std::vector<std::uint32_t> scramble_;
  std::vector<std::array<std::uint32_t, 32>> dirs_;
};

/// Points on the ellipsoid shell {x : x^T P x = gamma}.
Mat sample_ellipsoid_boundary(const Mat& p, double gamma, int count, std::uint64_t seed = 0);

/// Points in the annulus {gamma1 <= x^T P x <= gamma2} (levels uniform).
Mat sample_ring(const Mat& p, double gamma1, double gamma2, int count, std::uint64_t seed = 0);

}  // namespace safenv
