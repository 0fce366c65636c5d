#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ebssc/tensor.hpp"

namespace ebssc {

/// Per-pixel mean and ZCA matrix estimated on a training split.
struct Whitening {
    std::vector<Real> mean;    ///< one entry per pixel
    std::vector<Real> matrix;  ///< pixels × pixels, row-major; empty for centering only
    Real floor = 0.1;
    bool operator==(const Whitening&) const = default;
};

struct Dataset {
    std::vector<FeatureTensor> images;
    std::vector<std::size_t> labels;
    std::vector<std::string> class_names;
    std::optional<Whitening> whitening;

    std::size_t size() const noexcept { return images.size(); }
    std::size_t num_classes() const noexcept { return class_names.size(); }
    /// Throws ArgumentError on length mismatch, mixed shapes or out-of-range labels.
    void validate() const;
};

/// IDX image file (magic 0x00000803) as 1×rows×cols tensors scaled to [0,1].
/// Gzip-compressed files (".gz") are inflated first. Throws FormatError with the byte offset.
std::vector<FeatureTensor> load_idx_images(const std::filesystem::path& path);
/// IDX label file (magic 0x00000801).
std::vector<std::size_t> load_idx_labels(const std::filesystem::path& path);
/// Images and labels from an IDX pair; class names "0".."9".
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// CIFAR-10 binary batches: 3073-byte records (label, 1024 R, 1024 G, 1024 B).
Dataset load_cifar10_bin(const std::vector<std::filesystem::path>& paths);

/// Parses raw bytes of either format (exposed for fuzzing).
std::vector<FeatureTensor> parse_idx_images(const std::vector<std::uint8_t>& bytes);
std::vector<std::size_t> parse_idx_labels(const std::vector<std::uint8_t>& bytes);
Dataset parse_cifar10(const std::vector<std::uint8_t>& bytes);

/// Reads a whole file, inflating gzip content when the name ends in ".gz".
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

enum class WhiteningMode { none, center, zca };

/// Estimates centering (and ZCA with eigenvalue floor `floor`) on `train`.
Whitening fit_whitening(const Dataset& train, WhiteningMode mode, Real floor = 0.1);
/// Applies stored statistics; the returned dataset carries them.
Dataset apply_whitening(const Dataset& d, const Whitening& w);
/// fit_whitening + apply_whitening on the training split.
Dataset preprocess(const Dataset& train, WhiteningMode mode = WhiteningMode::zca, Real floor = 0.1);

struct AugmentOptions {
    bool flip = true;
    std::size_t crop_pad = 4;  ///< reflect padding before the random crop; 0 disables cropping
};

/// Deterministic part: optional horizontal flip, then reflect-pad and crop at (dy, dx).
FeatureTensor augment_with(const FeatureTensor& image, bool flip, std::size_t pad, std::size_t dy, std::size_t dx);
/// Flip with probability 1/2, uniform crop offsets in [0, 2·pad].
FeatureTensor augment(const FeatureTensor& image, std::mt19937_64& rng, const AugmentOptions& options = {});

/// Uniform integer in [0, n) from raw generator bits (portable across standard libraries).
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n);

/// Writes a binary PPM (P6): rows × cols tiles, per-tile min-max scaling, 2-pixel gray
/// separators including the border. Single-channel tiles are replicated to RGB.
void emit_image_grid(const std::vector<std::vector<FeatureTensor>>& grid, const std::filesystem::path& path);

} // namespace ebssc
