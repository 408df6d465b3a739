#pragma once

#include <stdexcept>
#include <string>

namespace fh {

// Base for every error the library raises on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A documented precondition was violated by the caller.
struct PreconditionError : Error {
  using Error::Error;
};

// Iterations that did not converge, integrations that blew up, etc.
struct NumericalError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

// A stage was asked to run before the stage it depends on.
struct MissingArtifact : Error {
  std::string needed_stage;
  MissingArtifact(const std::string& msg, std::string stage)
      : Error(msg), needed_stage(std::move(stage)) {}
};

}  // namespace fh
