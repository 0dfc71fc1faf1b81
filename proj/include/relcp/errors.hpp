#pragma once

#include <stdexcept>
#include <string>

namespace relcp {

/// Invalid or inconsistent experiment configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A required input artifact (dataset, checkpoint, residual cache) is absent (exit code 3).
class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or state during simulation or training (exit code 4).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace relcp
