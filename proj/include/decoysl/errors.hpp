#pragma once

#include <stdexcept>
#include <string>

namespace decoysl {

// Each named failure from the model gets its own type so callers and tests
// can tell them apart without parsing messages.
#define DECOYSL_ERROR(Name)                                   \
  struct Name : std::runtime_error {                          \
    explicit Name(const std::string& what)                    \
        : std::runtime_error(#Name ": " + what) {}            \
  };

DECOYSL_ERROR(DegenerateGeometry)
DECOYSL_ERROR(NonMonotoneCuts)
DECOYSL_ERROR(UnreachableLink)
DECOYSL_ERROR(BrokenChain)
DECOYSL_ERROR(DeadEnd)
DECOYSL_ERROR(InvalidAction)
DECOYSL_ERROR(ShapeMismatch)
DECOYSL_ERROR(NonFinite)
DECOYSL_ERROR(StaleTape)
DECOYSL_ERROR(ConfigError)
DECOYSL_ERROR(RewardOutOfBounds)

#undef DECOYSL_ERROR

}  // namespace decoysl
