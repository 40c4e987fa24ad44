#pragma once

#include <stdexcept>
#include <string>

namespace rhm {

/// Base class for every error thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define RHM_DEFINE_ERROR(Name)     \
  struct Name : Error {            \
    using Error::Error;            \
  }

RHM_DEFINE_ERROR(NonFinite);
RHM_DEFINE_ERROR(NotPositiveDefinite);
RHM_DEFINE_ERROR(RankDeficient);
RHM_DEFINE_ERROR(NotOnManifold);
RHM_DEFINE_ERROR(AntipodalPoints);
RHM_DEFINE_ERROR(SingularSystem);
RHM_DEFINE_ERROR(SinkhornNotConverged);
RHM_DEFINE_ERROR(NotPositiveEntries);
RHM_DEFINE_ERROR(LogUnavailable);
RHM_DEFINE_ERROR(NoSampleOracle);
RHM_DEFINE_ERROR(NotDescentDirection);
RHM_DEFINE_ERROR(LineSearchFailed);
RHM_DEFINE_ERROR(SubproblemBreakdown);
RHM_DEFINE_ERROR(ConfigError);
RHM_DEFINE_ERROR(MissingGolden);

#undef RHM_DEFINE_ERROR

}  // namespace rhm
