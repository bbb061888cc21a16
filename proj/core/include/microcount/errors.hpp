#pragma once

#include <stdexcept>
#include <string>

namespace microcount {

// Invalid configuration (bad ranges, bad model config, bad schema).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid or missing input data (empty manifests, missing directories).
struct InputError : std::runtime_error {
    explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem / encoding failures.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace microcount
