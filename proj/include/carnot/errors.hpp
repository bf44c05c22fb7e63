#ifndef CARNOT_ERRORS_HPP
#define CARNOT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace carnot {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Descriptor file or group metadata violates a structural invariant.
struct DescriptorError : Error {
    explicit DescriptorError(const std::string& msg) : Error("descriptor: " + msg) {}
};

// Argument outside the mathematical domain of the operation.
struct DomainError : Error {
    explicit DomainError(const std::string& msg) : Error("domain: " + msg) {}
};

// Run configuration is inconsistent (dt vs horizon, missing fields, ...).
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config: " + msg) {}
};

// Caller broke a documented contract (mismatched grids, kernel without
// support data, ...).
struct ContractError : Error {
    explicit ContractError(const std::string& msg) : Error("contract: " + msg) {}
};

// Requested derivative order that nested finite differences cannot support.
struct UnsupportedOrder : Error {
    explicit UnsupportedOrder(const std::string& msg) : Error("unsupported order: " + msg) {}
};

// CFL refusal; carries the largest admissible step.
struct CflError : Error {
    double admissible_dt;
    CflError(const std::string& msg, double dt_ok)
        : Error("cfl: " + msg), admissible_dt(dt_ok) {}
};

}  // namespace carnot

#endif
