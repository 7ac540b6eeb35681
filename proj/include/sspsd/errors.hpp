#pragma once

#include <stdexcept>
#include <string>

namespace sspsd {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

// Annotation / dataset errors
struct SchemaError : Error { using Error::Error; };
struct DanglingSlotRefError : Error { using Error::Error; };
struct EmptyDatasetError : Error { using Error::Error; };

// Grid encoding errors
struct PointOutOfBoundsError : Error { using Error::Error; };
struct TwoPointsOneCellError : Error { using Error::Error; };

// Tensor / model errors
struct ShapeError : Error { using Error::Error; };

// Loss / trainer errors
struct ZeroLabeledError : Error { using Error::Error; };
struct NonFiniteLossError : Error { using Error::Error; };

// Evaluation errors
struct ZeroGtError : Error { using Error::Error; };

}  // namespace sspsd
