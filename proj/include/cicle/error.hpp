#pragma once

#include <stdexcept>
#include <string>

namespace cicle {

// Base for every error the library raises on bad input or failed I/O.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed dataset or artifact (missing column, bad row, wrong version).
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Violated precondition on an argument.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Network-level failure talking to a completion endpoint (after retries).
class TransportError : public Error {
 public:
  using Error::Error;
};

// Endpoint answered with a terminal non-2xx status.
class ApiError : public Error {
 public:
  ApiError(int status, const std::string& body_excerpt)
      : Error("completion endpoint returned HTTP " + std::to_string(status) + ": " + body_excerpt),
        status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace cicle
