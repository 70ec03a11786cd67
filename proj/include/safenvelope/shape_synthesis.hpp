#pragma once

#include <utility>
#include <vector>

#include "safenvelope/system_model.hpp"

namespace safenv {

/// Linear support cap on the level-1 set: max_{x^T P x <= 1} a^T x <= bound.
struct SupportCap {
  Vec direction;
  double bound = 0.0;
};

struct ShapeResult {
  Mat e;       // maximizer of log det
  Mat p;       // E^-1
  Mat y0;      // nominal input variable
  Mat k0;      // Y0 E^-1, nominal gain for d = 0
  double logdet_value = 0.0;
};

/// Shape-stage SDP: maximize log det E subject to the d = 0 Lyapunov LMI and
/// the state/input containment LMIs at gamma = 1; when `constrain_to_region`
/// the level-1 set is additionally confined to the data region. The input
/// LMI couples the nominal gain to U and can be deferred to the safe-set
/// stage (`include_input_lmi = false`), where the deployed gain is bound.
/// `decrease_margin` asks for the stronger rate condition
/// AE + EA^T + BY + Y^T B^T <= -2 rho E (margin the safe-set stage can spend
/// on a nonnegative quadratic envelope of the nonlinearity).
ShapeResult synthesize_shape(const LinearModel& model, const Polytope& x_poly,
                             const Polytope& u_poly, const DataRegion* region,
                             bool constrain_to_region, bool include_input_lmi = true,
                             double decrease_margin = 0.0,
                             const std::vector<SupportCap>& support_caps = {});

}  // namespace safenv
