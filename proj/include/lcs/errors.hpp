#pragma once

#include <stdexcept>
#include <string>

namespace lcs {

// Root of every error the toolkit throws. Subclasses let callers (mainly the
// CLI) tell input problems apart from failed certifications.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input: parse errors, unknown names, wrong shapes, bad parameters.
class InputError : public Error {
public:
    using Error::Error;
};

// Numeric evaluation left the domain of an expression (sqrt of a negative,
// power of zero with a negative exponent, non-finite result).
class EvaluationError : public Error {
public:
    using Error::Error;
};

// Operands live on different coordinate domains.
class DomainMismatch : public Error {
public:
    using Error::Error;
};

// A pointwise linear system was singular or a rank condition failed.
class RankError : public Error {
public:
    using Error::Error;
};

// A construction could not be certified (residual above tolerance).
class CertificationError : public Error {
public:
    using Error::Error;
};

// A computation would exceed its memory budget.
class ResourceError : public Error {
public:
    using Error::Error;
};

} // namespace lcs
