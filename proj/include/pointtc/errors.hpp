#pragma once

#include <stdexcept>
#include <string>

namespace pointtc {

// Shape or width disagreement between operands.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Inconsistent or incomplete configuration (layer widths, branch sizes, ...).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Bad argument value for an otherwise well-formed call (count > N, unknown kind).
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Value outside the mathematical domain (temperature <= 0, log of zero power).
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

// Caller broke a documented precondition that is not a plain argument error.
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

}  // namespace pointtc
