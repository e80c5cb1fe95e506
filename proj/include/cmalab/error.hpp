#pragma once

#include <stdexcept>
#include <string>

namespace cmalab {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input outside an operation's domain (negative density, bad exponent, N < 16, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent run configuration. `line` is 0 when not tied to a line.
class ConfigError : public InvalidArgument {
public:
    explicit ConfigError(const std::string& what, int line = 0)
        : InvalidArgument(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

/// A discrete potential left the plurisubharmonic cone: MA below -tol somewhere.
class ConeViolation : public Error {
public:
    ConeViolation(const std::string& what, int node, double value)
        : Error(what + " (node " + std::to_string(node) + ", MA = " + std::to_string(value) + ")"),
          node_(node), value_(value) {}
    int node() const { return node_; }
    double value() const { return value_; }

private:
    int node_;
    double value_;
};

/// Non-convergence, step underflow, bracket failure. `stage` names where it happened.
class NumericalError : public Error {
public:
    NumericalError(const std::string& stage, const std::string& what)
        : Error(stage + ": " + what), stage_(stage) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

}  // namespace cmalab
