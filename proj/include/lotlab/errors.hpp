#pragma once

#include <stdexcept>
#include <string>

namespace lotlab {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define LOTLAB_DEFINE_ERROR(NAME)                  \
  struct NAME : Error {                            \
    using Error::Error;                            \
  }

LOTLAB_DEFINE_ERROR(InvalidArgument);
LOTLAB_DEFINE_ERROR(ZeroTotalMass);
LOTLAB_DEFINE_ERROR(EmptySupport);
LOTLAB_DEFINE_ERROR(DimensionMismatch);
LOTLAB_DEFINE_ERROR(SolverFailure);
LOTLAB_DEFINE_ERROR(ZeroRow);
LOTLAB_DEFINE_ERROR(SingularCovariance);
LOTLAB_DEFINE_ERROR(NonOrthogonalBasis);
LOTLAB_DEFINE_ERROR(NotMonotone);
LOTLAB_DEFINE_ERROR(SingularMatrix);
LOTLAB_DEFINE_ERROR(ReferenceMismatch);
LOTLAB_DEFINE_ERROR(InfeasibleBound);
LOTLAB_DEFINE_ERROR(SingleClass);
LOTLAB_DEFINE_ERROR(DegenerateFeatures);
LOTLAB_DEFINE_ERROR(WidthMismatch);
LOTLAB_DEFINE_ERROR(BadMagic);
LOTLAB_DEFINE_ERROR(TruncatedFile);
LOTLAB_DEFINE_ERROR(CountMismatch);
LOTLAB_DEFINE_ERROR(InsufficientData);
LOTLAB_DEFINE_ERROR(ConfigError);
LOTLAB_DEFINE_ERROR(IoError);

#undef LOTLAB_DEFINE_ERROR

}  // namespace lotlab
