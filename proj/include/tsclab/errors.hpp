#pragma once

#include <stdexcept>
#include <string>

namespace tsclab {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonScalarLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingGrad : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidPhase : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EpisodeNotFinished : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace tsclab
