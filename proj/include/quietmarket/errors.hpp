#pragma once

#include <stdexcept>
#include <string>

namespace quietmarket {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

#define QUIETMARKET_DEFINE_ERROR(Name, Kind)                       \
  class Name : public Error {                                      \
   public:                                                         \
    using Error::Error;                                            \
    const char* kind() const noexcept override { return Kind; }    \
  };

QUIETMARKET_DEFINE_ERROR(InvalidArgument, "invalid-argument")
QUIETMARKET_DEFINE_ERROR(DomainError, "domain")
QUIETMARKET_DEFINE_ERROR(InfeasibleError, "infeasible")
QUIETMARKET_DEFINE_ERROR(CapacityError, "capacity")
QUIETMARKET_DEFINE_ERROR(OwnershipError, "ownership")
QUIETMARKET_DEFINE_ERROR(PartitionError, "partition")
QUIETMARKET_DEFINE_ERROR(AssumptionViolation, "assumption-violation")
QUIETMARKET_DEFINE_ERROR(DegenerateError, "degenerate")
QUIETMARKET_DEFINE_ERROR(ConfigError, "config")

#undef QUIETMARKET_DEFINE_ERROR

}  // namespace quietmarket
