#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ebssc/dataset.hpp"
#include "ebssc/learn.hpp"
#include "ebssc/network.hpp"

namespace ebssc {

inline constexpr std::uint32_t kFormatVersion = 1;

enum class DType : std::uint8_t { f64 = 0, u64 = 1, u8 = 2 };

struct TableEntry {
    std::string name;
    DType dtype = DType::f64;
    std::vector<std::uint64_t> dims;
    std::vector<std::uint8_t> data;  ///< little-endian element bytes

    bool operator==(const TableEntry&) const = default;
};

/// Named tensors of the "EBSC" container.
class TensorTable {
public:
    void add_f64(std::string name, std::vector<std::uint64_t> dims, std::span<const Real> values);
    void add_u64(std::string name, std::vector<std::uint64_t> dims, std::span<const std::uint64_t> values);
    void add_bytes(std::string name, std::string_view bytes);
    void add_tensor(std::string name, const FeatureTensor& t);

    const TableEntry* find(std::string_view name) const;
    /// Throw FormatError when the entry is missing or has another type.
    std::vector<Real> f64(std::string_view name) const;
    std::vector<std::uint64_t> u64(std::string_view name) const;
    std::string bytes(std::string_view name) const;
    FeatureTensor tensor(std::string_view name) const;

    const std::vector<TableEntry>& entries() const noexcept { return entries_; }
    std::vector<TableEntry>& entries() noexcept { return entries_; }
    bool operator==(const TensorTable&) const = default;

private:
    void add(TableEntry e);
    const TableEntry& require(std::string_view name, DType type) const;
    std::vector<TableEntry> entries_;
};

/// "EBSC", u32 version, u32-length-prefixed text, tensor table, trailing CRC32 of everything
/// after the 8-byte header. All integers little-endian.
std::vector<std::uint8_t> encode_container(std::string_view text, const TensorTable& table);
/// Checks magic, then version, then the checksum, then parses. Errors carry byte offsets.
std::pair<std::string, TensorTable> decode_container(std::span<const std::uint8_t> bytes);

void write_container(const std::filesystem::path& path, std::string_view text, const TensorTable& table);
std::pair<std::string, TensorTable> read_container(const std::filesystem::path& path);

struct Checkpoint {
    NetworkSpec spec;
    ModelParams params;
    OptimizerState optimizer;
    std::uint64_t epoch = 0;
    std::uint64_t iteration = 0;
    std::string rng_state;    ///< textual std::mt19937_64 state
    std::string config_text;  ///< run configuration used for training
    std::optional<Whitening> whitening;

    bool operator==(const Checkpoint&) const = default;
};

Checkpoint make_checkpoint(const NetworkSpec& spec, const TrainState& state, std::string config_text,
                           std::optional<Whitening> whitening);
/// Restores parameters, optimizer and generator state.
TrainState restore_state(const Checkpoint& c);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace ebssc
