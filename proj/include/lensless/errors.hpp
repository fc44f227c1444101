#pragma once

#include <stdexcept>
#include <string>

namespace lensless {

// Exit codes used by the CLI: 0 success, 2 config, 3 numeric, 4 stale cache.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
    static constexpr int exit_code = 2;
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
    static constexpr int exit_code = 3;
};

struct StaleCacheError : std::runtime_error {
    explicit StaleCacheError(const std::string& msg) : std::runtime_error(msg) {}
    static constexpr int exit_code = 4;
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
    static constexpr int exit_code = 2;
};

} // namespace lensless
