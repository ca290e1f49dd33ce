#pragma once
// Exception hierarchy. Every failure mode the library reports deliberately
// gets its own type so callers can branch on the class instead of parsing
// what() strings.

#include <stdexcept>

namespace mvqr {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define MVQR_ERROR_TYPE(Name) \
  struct Name : Error {       \
    using Error::Error;       \
  }

MVQR_ERROR_TYPE(DimensionMismatch);
MVQR_ERROR_TYPE(AntipodalPoint);
MVQR_ERROR_TYPE(AnchorMismatch);
MVQR_ERROR_TYPE(NoConvergence);
MVQR_ERROR_TYPE(ParseError);
MVQR_ERROR_TYPE(VersionError);
MVQR_ERROR_TYPE(UnknownAminoAcid);
MVQR_ERROR_TYPE(AngleOutOfRange);
MVQR_ERROR_TYPE(RadiusOutOfRange);
MVQR_ERROR_TYPE(ZeroDensity);
MVQR_ERROR_TYPE(EmptySampleSet);
MVQR_ERROR_TYPE(EmptyBatch);
MVQR_ERROR_TYPE(InsufficientSamples);
MVQR_ERROR_TYPE(NonFiniteLoss);
MVQR_ERROR_TYPE(NonFiniteCost);

#undef MVQR_ERROR_TYPE

}  // namespace mvqr
