#pragma once

#include <stdexcept>
#include <string>

namespace sdsa {

enum class ErrorKind {
  shape,
  domain,
  numeric,
  config,
  data,
  classification,
  format,
  not_found,
  usage,
};

const char* to_string(ErrorKind kind) noexcept;

/// Base of every exception thrown by the library. The kind is kept separately
/// from the message so callers (and the CLI exit path) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define SDSA_DEFINE_ERROR(Name, Kind)                                 \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& message) : Error(Kind, message) {} \
  };

SDSA_DEFINE_ERROR(ShapeError, ErrorKind::shape)
SDSA_DEFINE_ERROR(DomainError, ErrorKind::domain)
SDSA_DEFINE_ERROR(NumericError, ErrorKind::numeric)
SDSA_DEFINE_ERROR(ConfigError, ErrorKind::config)
SDSA_DEFINE_ERROR(DataError, ErrorKind::data)
SDSA_DEFINE_ERROR(FormatError, ErrorKind::format)
SDSA_DEFINE_ERROR(NotFoundError, ErrorKind::not_found)
SDSA_DEFINE_ERROR(UsageError, ErrorKind::usage)

#undef SDSA_DEFINE_ERROR

/// Raised when a coordinate falls outside every configured region under the
/// reject policy.
class ClassificationError : public Error {
 public:
  ClassificationError(double lat, double lon, const std::string& message)
      : Error(ErrorKind::classification, message), lat_(lat), lon_(lon) {}

  double lat() const noexcept { return lat_; }
  double lon() const noexcept { return lon_; }

 private:
  double lat_;
  double lon_;
};

}  // namespace sdsa
