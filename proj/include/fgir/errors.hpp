#pragma once

#include <stdexcept>
#include <string>

namespace fgir {

// Shape or precondition violation in a numeric kernel. CLI exit code 4.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Invalid configuration (dims, sizes, option values). CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad data: labels, manifests, degenerate inputs. CLI exit code 3.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed file contents (magic, truncation, parse failure). CLI exit code 3.
class FormatError : public DataError {
public:
    using DataError::DataError;
};

// Filesystem failure. CLI exit code 5.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Confidence map with no response above the numeric guard; callers fall back
// to the full-image region.
class DegenerateMapError : public DataError {
public:
    using DataError::DataError;
};

// Every connected region fell below the minimum size fraction; callers fall
// back to the full-image region.
class NoDominantRegionError : public DataError {
public:
    using DataError::DataError;
};

} // namespace fgir
