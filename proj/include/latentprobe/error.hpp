#pragma once

#include <stdexcept>
#include <string>

namespace latentprobe {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operands live in spaces of different dimension.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A value violates a documented precondition or range.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Uniqueness or ordering conflict (duplicate rating, stale pair, full study).
class ConflictError : public Error {
 public:
  using Error::Error;
};

/// Every batch already has its target number of raters.
class StudyCompleteError : public ConflictError {
 public:
  using ConflictError::ConflictError;
};

/// The session ran past its expiry time.
class SessionExpiredError : public Error {
 public:
  using Error::Error;
};

/// Stored bytes do not match their recorded checksum.
class ChecksumError : public Error {
 public:
  using Error::Error;
};

/// Oracle could not be reached or the connection broke.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Oracle answered with an error object or an unparseable payload.
class ProtocolError : public Error {
 public:
  ProtocolError(std::string code, const std::string& message)
      : Error(code + ": " + message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

}  // namespace latentprobe
