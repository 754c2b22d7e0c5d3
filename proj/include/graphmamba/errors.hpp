#pragma once

#include <stdexcept>
#include <string>

namespace graphmamba {

// Every failure raised by the library derives from Error so callers (the CLI in
// particular) can catch one type and still report the category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define GRAPHMAMBA_ERROR(Name)           \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  };

GRAPHMAMBA_ERROR(DimensionError)
GRAPHMAMBA_ERROR(ConfigError)
GRAPHMAMBA_ERROR(StateError)
GRAPHMAMBA_ERROR(UsageError)
GRAPHMAMBA_ERROR(DomainError)
GRAPHMAMBA_ERROR(ValidationError)
GRAPHMAMBA_ERROR(FormatError)
GRAPHMAMBA_ERROR(DataError)
GRAPHMAMBA_ERROR(TrainingError)

#undef GRAPHMAMBA_ERROR

}  // namespace graphmamba
