#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ebssc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible (message names both shapes).
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A threshold pair violates −β⁻ ≤ β⁺.
class ThresholdError : public Error {
public:
    ThresholdError(std::size_t index, double beta_plus, double beta_minus);

    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

/// Caller supplied an argument outside the operation's domain.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// A file or byte stream could not be parsed.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::uint64_t offset);

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

/// Checkpoint written by a newer format revision.
class UnsupportedVersionError : public FormatError {
public:
    explicit UnsupportedVersionError(std::uint32_t version);
};

/// Stored CRC32 disagrees with the payload.
class ChecksumError : public FormatError {
public:
    ChecksumError(std::uint32_t stored, std::uint32_t computed, std::uint64_t offset);
};

/// Configuration text contains an unknown key or a malformed value.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// An iterative oracle stopped improving its objective.
class OracleError : public Error {
public:
    using Error::Error;
};

/// Least-squares rescaling of a unit solution is not positive.
class DegenerateScalingError : public Error {
public:
    explicit DegenerateScalingError(double epsilon);

    double epsilon() const noexcept { return epsilon_; }

private:
    double epsilon_;
};

} // namespace ebssc
