#pragma once

#include <stdexcept>
#include <string>

namespace corpusforge
{

// Base class for every error raised by the toolkit.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// Bad input data or configuration. The CLI maps this to exit code 2.
class ValidationError : public Error
{
public:
    using Error::Error;
};

// A stage-mix constraint failed while running in strict mode.
class ConstraintError : public Error
{
public:
    ConstraintError(std::string constraint, const std::string &detail)
        : Error("constraint '" + constraint + "' failed: " + detail), constraint_(std::move(constraint))
    {
    }

    const std::string &constraint() const noexcept { return constraint_; }

private:
    std::string constraint_;
};

} // namespace corpusforge
