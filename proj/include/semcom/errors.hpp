#pragma once

#include <stdexcept>

namespace semcom {

// Configuration or parameter validation failure. CLI exit code 3.
struct config_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Missing, truncated, version-mismatched or checksum-corrupt artifact file.
// CLI exit code 2.
struct artifact_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite loss during training or noise optimization. CLI exit code 4.
struct divergence_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace semcom
