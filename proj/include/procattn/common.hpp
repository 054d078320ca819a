// Shared error types and tool identity.
//
// Error classes map onto process exit codes: ConfigError -> 1,
// DataError -> 2, NumericError -> 3.

#ifndef PROCATTN_COMMON_HPP
#define PROCATTN_COMMON_HPP

#include <stdexcept>
#include <string>

namespace procattn {

inline constexpr const char* kToolName = "procattn";
inline constexpr const char* kToolVersion = "0.1.0";

// Bad flags, bad config files, missing mandatory settings.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input data (logs, dumps, artifacts).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric failures: shape mismatches, divergence, invalid math.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace procattn

#endif
