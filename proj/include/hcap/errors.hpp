#pragma once

#include <stdexcept>
#include <string>

namespace hcap {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define HCAP_DEFINE_ERROR(Name)        \
  class Name : public Error {          \
   public:                             \
    using Error::Error;                \
  }

// feeder-model
HCAP_DEFINE_ERROR(SchemaError);
HCAP_DEFINE_ERROR(TopologyError);
HCAP_DEFINE_ERROR(UnitError);
HCAP_DEFINE_ERROR(MissingPhase);
HCAP_DEFINE_ERROR(NonTransposed);
HCAP_DEFINE_ERROR(ArgumentError);

// loadflow
HCAP_DEFINE_ERROR(NonConvergence);
HCAP_DEFINE_ERROR(SingularBase);

// cia-optimizer
HCAP_DEFINE_ERROR(DimensionMismatch);
HCAP_DEFINE_ERROR(InvalidConfig);
HCAP_DEFINE_ERROR(Infeasible);
HCAP_DEFINE_ERROR(SolverError);
HCAP_DEFINE_ERROR(MixedStatus);

#undef HCAP_DEFINE_ERROR

}  // namespace hcap
