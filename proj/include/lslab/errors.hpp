// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace lslab {

// Exception hierarchy shared by all modules. The CLI maps these onto its
// exit codes (config 2, missing prerequisite 3, numerical failure 4).
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& msg)
      : std::runtime_error(category + ": " + msg), category_(std::move(category)) {}
  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error("shape", msg) {}
};

struct ValueError : Error {
  explicit ValueError(const std::string& msg) : Error("value", msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

struct RoutingError : Error {
  explicit RoutingError(const std::string& msg) : Error("routing", msg) {}
};

struct PlanError : Error {
  explicit PlanError(const std::string& msg) : Error("plan", msg) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error("numeric", msg) {}
};

struct MissingError : Error {
  explicit MissingError(const std::string& msg) : Error("missing", msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("io", msg) {}
};

}  // namespace lslab
