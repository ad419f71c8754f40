#pragma once

#include <stdexcept>
#include <string>

namespace tdboot {

/// Root of every error raised by the library. Callers that only need to
/// report a failure can catch this; the subclasses name the failing contract.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TDBOOT_DEFINE_ERROR(Name)                      \
  class Name : public Error {                          \
   public:                                             \
    explicit Name(const std::string& what)             \
        : Error(std::string(#Name) + ": " + what) {}   \
  }

// numerics
TDBOOT_DEFINE_ERROR(SingularMatrix);
TDBOOT_DEFINE_ERROR(EmptySamples);
TDBOOT_DEFINE_ERROR(InsufficientSamples);
TDBOOT_DEFINE_ERROR(OutOfRange);
TDBOOT_DEFINE_ERROR(DimensionMismatch);

// env
TDBOOT_DEFINE_ERROR(NonConvergence);
TDBOOT_DEFINE_ERROR(InvalidLayout);
TDBOOT_DEFINE_ERROR(InvalidModel);

// featurize
TDBOOT_DEFINE_ERROR(ZeroBehaviorProbability);
TDBOOT_DEFINE_ERROR(RankDeficient);
TDBOOT_DEFINE_ERROR(BoundViolation);

// lsa / bootstrap
TDBOOT_DEFINE_ERROR(NonFinite);
TDBOOT_DEFINE_ERROR(InsufficientReplicates);
TDBOOT_DEFINE_ERROR(EmptyEpisodes);

// harness
TDBOOT_DEFINE_ERROR(ConfigInvalid);
TDBOOT_DEFINE_ERROR(DivergedRun);
TDBOOT_DEFINE_ERROR(InsufficientPoints);

#undef TDBOOT_DEFINE_ERROR

}  // namespace tdboot
