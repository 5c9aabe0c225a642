#pragma once

#include <stdexcept>

namespace fracms {

/// A parameter combination that cannot produce a valid discretization
/// (radius repair exhausted, singular split system, degenerate support).
class ConfigurationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace fracms
