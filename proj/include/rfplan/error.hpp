#pragma once

#include <stdexcept>
#include <string>

namespace rfplan {

// Bad input: out-of-range values, malformed files, mismatched shapes.
// The CLI maps this family to exit code 1.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Transmitter/receiver placed on a wall or in a room without free space.
class PlacementError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Two trajectory anchors are not connected through free space.
class ConnectivityError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Zero-length rays, coincident endpoints and similar degenerate geometry.
class GeometryError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Runtime numerical failure (NaN loss, optimizer divergence). Exit code 2.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace rfplan
