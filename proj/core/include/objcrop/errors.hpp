#pragma once

#include <stdexcept>
#include <string>

namespace objcrop {

/// Input file or directory does not exist or a required key is absent.
struct MissingInputError : std::runtime_error {
  explicit MissingInputError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Configuration value out of range, unknown key, or inconsistent settings.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Artifact (model file, checkpoint, cache) has the wrong magic or version.
struct VersionError : std::runtime_error {
  explicit VersionError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed byte stream (PPM, model file, checkpoint payload).
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace objcrop
