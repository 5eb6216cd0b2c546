#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mrf {

using cdouble = std::complex<double>;
using cfloat = std::complex<float>;
using CVector = std::vector<cdouble>;
using RVector = std::vector<double>;

// Error hierarchy. Every failure the library reports derives from Error so
// callers (the CLI in particular) can map categories onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

// A signal that cannot be normalized or phase-aligned.
class DegenerateSignal : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

class NonFiniteLoss : public Error {
public:
    NonFiniteLoss(const std::string& what, std::size_t epoch, std::size_t batch)
        : Error(what), epoch_(epoch), batch_(batch) {}
    std::size_t epoch() const { return epoch_; }
    std::size_t batch() const { return batch_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
};

// File-format errors; each is a distinct type so loaders can be tested for
// the exact failure.
class FormatError : public Error {
public:
    using Error::Error;
};

class VersionError : public FormatError {
public:
    using FormatError::FormatError;
};

class ChecksumError : public FormatError {
public:
    using FormatError::FormatError;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

double l2_norm(std::span<const cdouble> x);
double relative_l2(std::span<const cdouble> a, std::span<const cdouble> reference);

}  // namespace mrf
