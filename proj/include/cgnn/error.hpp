#pragma once

#include <stdexcept>
#include <string>

namespace cgnn {

enum class ErrorKind {
  kDimension,
  kContract,
  kLabel,
  kSingularDesign,
  kDegenerateSeries,
  kDegenerateInput,
  kInsufficientData,
  kEmptyGraph,
  kUnsatisfiableRatio,
  kUndefinedMetric,
  kCalibration,
  kStability,
  kComplexityGuard,
  kNumerical,
  kConfig,
  kIo,
};

const char* ToString(ErrorKind kind);

// Every failure raised by the library carries a kind so the CLI can map it to
// a stable exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// 0 success, 2 config error, 3 data error, 4 numerical failure.
int ExitCodeFor(ErrorKind kind);

#define CGNN_CHECK(cond, kind, msg)               \
  do {                                            \
    if (!(cond)) throw ::cgnn::Error((kind), (msg)); \
  } while (0)

}  // namespace cgnn
