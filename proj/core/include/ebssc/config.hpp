#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "ebssc/dataset.hpp"
#include "ebssc/learn.hpp"
#include "ebssc/network.hpp"

namespace ebssc {

enum class DatasetKind { mnist, cifar10 };

/// Everything `ebssc train` needs besides file paths. Text form is `key = value` per line,
/// `#` comments, later keys override earlier ones.
struct RunConfig {
    TrainConfig train;
    std::string variant = "ssc_ebc2";
    Real width_scale = 1;
    Real init_beta = 0.01;
    DatasetKind dataset = DatasetKind::mnist;
    WhiteningMode whitening = WhiteningMode::center;
    Real zca_floor = 0.1;
    bool augment_flip = false;
    std::size_t crop_pad = 0;
    std::size_t train_limit = 0;  ///< 0 keeps the whole split
    std::size_t test_limit = 0;

    /// Throws ConfigError naming the valid keys on unknown input.
    static RunConfig parse(std::string_view text);
    static RunConfig load(const std::filesystem::path& path);
    static std::vector<std::string> keys();

    /// Canonical form: every key, fixed order, shortest round-trip numbers.
    std::string to_text() const;
    void set(std::string_view key, std::string_view value);
    void validate() const;

    NetworkSpec network(const Shape3& input_shape, std::size_t num_classes) const;
    bool augments() const noexcept { return augment_flip || crop_pad > 0; }

    bool operator==(const RunConfig&) const = default;
};

std::string to_string(DatasetKind k);
std::string to_string(WhiteningMode m);

/// Train or test split from a directory holding the standard file names
/// (MNIST IDX, optionally gzipped; CIFAR-10 binary batches).
Dataset load_split(const std::filesystem::path& dir, DatasetKind kind, bool train);

} // namespace ebssc
