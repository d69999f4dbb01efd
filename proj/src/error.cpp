#include "cgnn/error.hpp"

namespace cgnn {

const char* ToString(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension error";
    case ErrorKind::kContract: return "contract error";
    case ErrorKind::kLabel: return "label error";
    case ErrorKind::kSingularDesign: return "singular-design error";
    case ErrorKind::kDegenerateSeries: return "degenerate-series error";
    case ErrorKind::kDegenerateInput: return "degenerate-input error";
    case ErrorKind::kInsufficientData: return "insufficient-data error";
    case ErrorKind::kEmptyGraph: return "empty-graph error";
    case ErrorKind::kUnsatisfiableRatio: return "unsatisfiable-ratio error";
    case ErrorKind::kUndefinedMetric: return "undefined-metric error";
    case ErrorKind::kCalibration: return "calibration error";
    case ErrorKind::kStability: return "stability error";
    case ErrorKind::kComplexityGuard: return "complexity-guard error";
    case ErrorKind::kNumerical: return "numerical error";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kIo: return "io error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(ToString(kind)) + ": " + message), kind_(kind) {}

int ExitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
      return 2;
    case ErrorKind::kNumerical:
    case ErrorKind::kStability:
      return 4;
    default:
      return 3;
  }
}

}  // namespace cgnn
