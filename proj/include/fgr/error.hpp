#pragma once

#include <stdexcept>
#include <string>

namespace fgr {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape/size disagreement between tensors or layers.
struct DimensionError : Error { using Error::Error; };
// Out-of-range or otherwise invalid scalar parameter.
struct ParameterError : Error { using Error::Error; };
// Layer stack cannot be realized on the given input.
struct ArchitectureError : Error { using Error::Error; };
// Class/label index outside its declared range.
struct LabelError : Error { using Error::Error; };
// Empty or unusable dataset.
struct DataError : Error { using Error::Error; };
// Malformed text input; message carries line (and column) location.
struct ParseError : Error { using Error::Error; };
// Binary file with wrong magic or layout.
struct FormatError : Error { using Error::Error; };
struct ChecksumError : Error { using Error::Error; };
struct VersionError : Error { using Error::Error; };
// Metric undefined for the given inputs (e.g. single-class AUC).
struct MetricError : Error { using Error::Error; };
// Unusable face annotation (degenerate eye positions).
struct AnnotationError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

}  // namespace fgr
