#pragma once

#include <stdexcept>
#include <string>

namespace gptight {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define GPTIGHT_DEFINE_ERROR(Name)      \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

GPTIGHT_DEFINE_ERROR(SingularError);
GPTIGHT_DEFINE_ERROR(DivergenceError);
GPTIGHT_DEFINE_ERROR(DimensionError);
GPTIGHT_DEFINE_ERROR(InfeasibleError);
GPTIGHT_DEFINE_ERROR(NonConvergenceError);
GPTIGHT_DEFINE_ERROR(AllRejectedError);
GPTIGHT_DEFINE_ERROR(DomainError);
GPTIGHT_DEFINE_ERROR(CertificateError);
GPTIGHT_DEFINE_ERROR(ValidationError);

#undef GPTIGHT_DEFINE_ERROR

// Config parse failure with 1-based source location.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line, int column)
      : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}

  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

}  // namespace gptight
