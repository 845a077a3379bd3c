#pragma once

#include <stdexcept>
#include <string>

namespace laformer {

enum class ErrorKind {
  kInvalidScene,
  kEmptyTrack,
  kDegenerateLane,
  kNoLanes,
  kInvalidLabel,
  kConfig,
  kData,
  kIo,
  kGeneration,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// CLI exit code for an error: 2 for configuration problems, 3 for data problems.
int exit_code_for(ErrorKind kind);

}  // namespace laformer
