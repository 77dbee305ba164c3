#pragma once

#include <stdexcept>
#include <string>

namespace phytac {

// Error families map onto the CLI exit codes (config 2, artifact 3, numeric 4).
struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct artifact_error : std::runtime_error {
  explicit artifact_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Contract violations (bad dimensions, out-of-range arguments).
struct contract_error : std::invalid_argument {
  explicit contract_error(const std::string& msg) : std::invalid_argument(msg) {}
};

// Too few surface points land in the fingertip window to analyze a grasp.
// A numeric-family error (exit code 4) that callers can catch specifically.
struct insufficient_contact_error : numeric_error {
  explicit insufficient_contact_error(const std::string& msg)
      : numeric_error(msg) {}
};

// Contact force exceeded the configured safety limit.
struct force_limit_error : numeric_error {
  explicit force_limit_error(const std::string& msg) : numeric_error(msg) {}
};

}  // namespace phytac
