#pragma once

#include <stdexcept>
#include <string>

namespace judgekit {

/// Base class for all errors raised by this library. Subclasses distinguish
/// recoverable domain failures from configuration mistakes; the CLI maps the
/// latter to exit code 2.
class Error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
  using Error::Error;
};

}  // namespace judgekit
