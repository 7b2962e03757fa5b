#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

namespace biphoton {

/// Integer picoseconds, the native resolution of the time-tag format.
using Picoseconds = std::int64_t;

inline constexpr double kPicosecondsPerSecond = 1e12;
inline constexpr double kPi = std::numbers::pi;

inline Picoseconds to_picoseconds(double seconds) {
    return static_cast<Picoseconds>(std::llround(seconds * kPicosecondsPerSecond));
}

inline constexpr double to_seconds(Picoseconds ps) {
    return static_cast<double>(ps) / kPicosecondsPerSecond;
}

// Error taxonomy. The CLI maps these onto exit codes: ConfigError -> 1,
// DataError -> 2, NumericalError -> 3.

/// Invalid parameters or configuration supplied by the caller.
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent input data.
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// The computation itself failed (degenerate system, too many invalid bins).
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace biphoton
