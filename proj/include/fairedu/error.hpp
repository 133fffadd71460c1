#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairedu {

/// Base of every error raised by the library. kind() is a stable
/// identifier used by the CLI's one-line error output.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "Error"; }
};

#define FAIREDU_DEFINE_ERROR(Name)                                  \
  class Name : public Error {                                       \
   public:                                                          \
    using Error::Error;                                             \
    const char* kind() const noexcept override { return #Name; }    \
  };

FAIREDU_DEFINE_ERROR(SchemaError)
FAIREDU_DEFINE_ERROR(EncodingError)
FAIREDU_DEFINE_ERROR(SplitError)
FAIREDU_DEFINE_ERROR(IndexError)
FAIREDU_DEFINE_ERROR(DofError)
FAIREDU_DEFINE_ERROR(DomainError)
FAIREDU_DEFINE_ERROR(PlanMismatchError)
FAIREDU_DEFINE_ERROR(ShapeError)
FAIREDU_DEFINE_ERROR(DegenerateLabelsError)
FAIREDU_DEFINE_ERROR(NumericError)
FAIREDU_DEFINE_ERROR(EmptyGroupError)
FAIREDU_DEFINE_ERROR(UndefinedRateError)
FAIREDU_DEFINE_ERROR(ConfigError)
FAIREDU_DEFINE_ERROR(IoError)

#undef FAIREDU_DEFINE_ERROR

/// Unparseable cell. Row is 1-based over data rows (header excluded).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row, std::string column)
      : Error(what), row_(row), column_(std::move(column)) {}
  const char* kind() const noexcept override { return "ParseError"; }
  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

/// Design matrix is numerically rank deficient. Carries the names of the
/// columns that fall outside the numerical column space.
class RankError : public Error {
 public:
  RankError(const std::string& what, std::vector<std::string> columns)
      : Error(what), columns_(std::move(columns)) {}
  const char* kind() const noexcept override { return "RankError"; }
  const std::vector<std::string>& deficient_columns() const noexcept { return columns_; }

 private:
  std::vector<std::string> columns_;
};

}  // namespace fairedu
