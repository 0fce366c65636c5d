#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ebssc {

using Real = double;

struct Shape3 {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t size() const noexcept { return channels * height * width; }
    std::size_t plane() const noexcept { return height * width; }
    bool operator==(const Shape3&) const = default;
    std::string to_string() const;
};

/// Dense channels × height × width array in row-major (channel, row, col) order.
class FeatureTensor {
public:
    FeatureTensor() = default;
    explicit FeatureTensor(Shape3 shape, Real fill = 0);
    FeatureTensor(Shape3 shape, std::vector<Real> data);

    const Shape3& shape() const noexcept { return shape_; }
    std::size_t channels() const noexcept { return shape_.channels; }
    std::size_t height() const noexcept { return shape_.height; }
    std::size_t width() const noexcept { return shape_.width; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<Real> data() noexcept { return data_; }
    std::span<const Real> data() const noexcept { return data_; }
    std::span<Real> channel(std::size_t c) noexcept { return {data_.data() + c * shape_.plane(), shape_.plane()}; }
    std::span<const Real> channel(std::size_t c) const noexcept { return {data_.data() + c * shape_.plane(), shape_.plane()}; }

    Real& operator[](std::size_t i) noexcept { return data_[i]; }
    Real operator[](std::size_t i) const noexcept { return data_[i]; }
    Real& operator()(std::size_t c, std::size_t r, std::size_t col) noexcept { return data_[index(c, r, col)]; }
    Real operator()(std::size_t c, std::size_t r, std::size_t col) const noexcept { return data_[index(c, r, col)]; }

    std::size_t index(std::size_t c, std::size_t r, std::size_t col) const noexcept {
        return (c * shape_.height + r) * shape_.width + col;
    }

    FeatureTensor& operator+=(const FeatureTensor& other);
    FeatureTensor& operator-=(const FeatureTensor& other);
    FeatureTensor& operator*=(Real s) noexcept;

    /// this += s · other
    void add_scaled(const FeatureTensor& other, Real s);
    void fill(Real value) noexcept;
    bool all_finite() const noexcept;

    bool operator==(const FeatureTensor&) const = default;

private:
    Shape3 shape_;
    std::vector<Real> data_;
};

FeatureTensor operator+(FeatureTensor a, const FeatureTensor& b);
FeatureTensor operator-(FeatureTensor a, const FeatureTensor& b);
FeatureTensor operator*(Real s, FeatureTensor a);

/// K filters of shape in_channels × kernel_h × kernel_w, stored filter-major.
class FilterBank {
public:
    FilterBank() = default;
    FilterBank(std::size_t num_filters, std::size_t in_channels, std::size_t kernel_h, std::size_t kernel_w,
               Real fill = 0);
    FilterBank(std::size_t num_filters, std::size_t in_channels, std::size_t kernel_h, std::size_t kernel_w,
               std::vector<Real> weights);

    std::size_t num_filters() const noexcept { return num_filters_; }
    std::size_t in_channels() const noexcept { return in_channels_; }
    std::size_t kernel_h() const noexcept { return kernel_h_; }
    std::size_t kernel_w() const noexcept { return kernel_w_; }
    /// Weights per filter (in_channels · kernel_h · kernel_w).
    std::size_t filter_size() const noexcept { return in_channels_ * kernel_h_ * kernel_w_; }

    std::span<Real> weights() noexcept { return weights_; }
    std::span<const Real> weights() const noexcept { return weights_; }
    std::span<const Real> filter(std::size_t k) const noexcept {
        return {weights_.data() + k * filter_size(), filter_size()};
    }

    Real& operator()(std::size_t k, std::size_t c, std::size_t a, std::size_t b) noexcept {
        return weights_[((k * in_channels_ + c) * kernel_h_ + a) * kernel_w_ + b];
    }
    Real operator()(std::size_t k, std::size_t c, std::size_t a, std::size_t b) const noexcept {
        return weights_[((k * in_channels_ + c) * kernel_h_ + a) * kernel_w_ + b];
    }

    /// Padding that keeps spatial size for odd kernels.
    std::size_t same_pad() const noexcept { return (kernel_h_ - 1) / 2; }
    std::string shape_string() const;

    bool operator==(const FilterBank&) const = default;

private:
    std::size_t num_filters_ = 0;
    std::size_t in_channels_ = 0;
    std::size_t kernel_h_ = 0;
    std::size_t kernel_w_ = 0;
    std::vector<Real> weights_;
};

Real inner(const FeatureTensor& a, const FeatureTensor& b);
Real inner(std::span<const Real> a, std::span<const Real> b);
Real l1_norm(const FeatureTensor& a) noexcept;
Real l1_norm(std::span<const Real> a) noexcept;
Real l2_norm(const FeatureTensor& a) noexcept;
Real l2_norm(std::span<const Real> a) noexcept;

/// Throws ShapeError when the shapes differ.
void require_same_shape(const FeatureTensor& a, const FeatureTensor& b, const char* op);

} // namespace ebssc
