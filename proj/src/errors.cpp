#include "laformer/errors.hpp"

namespace laformer {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidScene: return "invalid-scene";
    case ErrorKind::kEmptyTrack: return "empty-track";
    case ErrorKind::kDegenerateLane: return "degenerate-lane";
    case ErrorKind::kNoLanes: return "no-lanes";
    case ErrorKind::kInvalidLabel: return "invalid-label";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kData: return "data";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kGeneration: return "generation";
  }
  return "unknown";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kGeneration:
      return 2;
    default:
      return 3;
  }
}

}  // namespace laformer
