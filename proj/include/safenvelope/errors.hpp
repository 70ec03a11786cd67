#pragma once

#include <stdexcept>
#include <string>

namespace safenv {

/// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct DimensionMismatch : Error {
  using Error::Error;
};
struct MalformedRow : Error {
  using Error::Error;
};
struct EmptyFile : Error {
  using Error::Error;
};
struct EmptyDataSet : Error {
  using Error::Error;
};
struct TooFewPoints : Error {
  using Error::Error;
};
struct BadWidths : Error {
  using Error::Error;
};
struct EmptyRing : Error {
  using Error::Error;
};
struct AssumptionViolated : Error {
  using Error::Error;
};
struct DegenerateData : Error {
  using Error::Error;
};
struct DegenerateRegion : Error {
  using Error::Error;
};
struct SingularCovariance : Error {
  using Error::Error;
};
struct SingularP : Error {
  using Error::Error;
};
struct Infeasible : Error {
  using Error::Error;
};
struct IntervalInfeasible : Error {
  using Error::Error;
};
struct AllIntervalsInfeasible : Error {
  using Error::Error;
};
struct SynthesisInfeasible : Error {
  using Error::Error;
};
struct NumericalFailure : Error {
  using Error::Error;
};
struct OutsideSafeSet : Error {
  using Error::Error;
};
struct NonFiniteState : Error {
  using Error::Error;
};
struct UnknownScenario : Error {
  using Error::Error;
};
struct ConfigInvalid : Error {
  using Error::Error;
};

}  // namespace safenv
