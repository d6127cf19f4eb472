#pragma once

#include <stdexcept>
#include <string>

namespace dcache {

// Caller broke a documented precondition (bad shapes, bad indices).
struct contract_error : std::invalid_argument {
    explicit contract_error(const std::string& what) : std::invalid_argument(what) {}
};

// User-supplied configuration is invalid or unreadable. Maps to exit code 2.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// An internal invariant failed (cold-cache read, broken schedule, numeric
// blowup). Must be unreachable; maps to exit code 3.
struct internal_error : std::logic_error {
    explicit internal_error(const std::string& what) : std::logic_error(what) {}
};

}  // namespace dcache
