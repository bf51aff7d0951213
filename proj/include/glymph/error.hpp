#pragma once

#include <stdexcept>
#include <string>

namespace glymph {

/// Failure categories surfaced by the library. Callers that need to react
/// programmatically (tests, the CLI) switch on the kind; the message carries
/// the human-readable detail.
enum class ErrorKind {
  Shape,           // extent/channel mismatch between tensors
  Value,           // out-of-range or otherwise invalid argument
  Numeric,         // non-finite value where finiteness is required
  Config,          // bad experiment configuration
  IoBadMagic,      // file does not start with the expected magic bytes
  IoVersion,       // file version not supported
  IoCorrupt,       // truncated or inconsistent file content
  MissingArtifact, // a pipeline stage ran before its inputs exist
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

} // namespace glymph
