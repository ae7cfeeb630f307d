#pragma once

#include <stdexcept>
#include <string>

namespace persono {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dataset construction, validation and file-format failures.
class DatasetError : public Error {
 public:
  using Error::Error;
};

// Invalid method/dataset/variant combinations and malformed config files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Misaligned or inconsistent inputs to a metric.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

// Transport failure after exhausting retries.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, int attempts) : Error(what), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

// The server answered with a non-2xx status or an unusable body.
class ProtocolError : public BackendError {
 public:
  ProtocolError(const std::string& what, int status, int attempts)
      : BackendError(what, attempts), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

}  // namespace persono
