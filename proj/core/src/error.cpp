#include "ebssc/error.hpp"

#include <sstream>

namespace ebssc {

namespace {

std::string threshold_message(std::size_t index, double beta_plus, double beta_minus) {
    std::ostringstream os;
    os << "improper shrinkage thresholds at element " << index << ": -beta_minus = " << -beta_minus
       << " exceeds beta_plus = " << beta_plus;
    return os.str();
}

} // namespace

ThresholdError::ThresholdError(std::size_t index, double beta_plus, double beta_minus)
    : Error(threshold_message(index, beta_plus, beta_minus)), index_(index) {}

FormatError::FormatError(const std::string& what, std::uint64_t offset)
    : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

UnsupportedVersionError::UnsupportedVersionError(std::uint32_t version)
    : FormatError("unsupported checkpoint version " + std::to_string(version) + " (this reader supports 1)", 4) {}

ChecksumError::ChecksumError(std::uint32_t stored, std::uint32_t computed, std::uint64_t offset)
    : FormatError("CRC32 mismatch: stored " + std::to_string(stored) + ", computed " + std::to_string(computed),
                  offset) {}

DegenerateScalingError::DegenerateScalingError(double epsilon)
    : Error("degenerate: zero reconstruction optimal (epsilon* = " + std::to_string(epsilon) + ")"),
      epsilon_(epsilon) {}

} // namespace ebssc
