#include "ebssc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ebssc/error.hpp"

namespace ebssc {

std::string Shape3::to_string() const {
    std::ostringstream os;
    os << channels << 'x' << height << 'x' << width;
    return os.str();
}

FeatureTensor::FeatureTensor(Shape3 shape, Real fill) : shape_(shape), data_(shape.size(), fill) {}

FeatureTensor::FeatureTensor(Shape3 shape, std::vector<Real> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_.to_string());
    }
}

FeatureTensor& FeatureTensor::operator+=(const FeatureTensor& other) {
    require_same_shape(*this, other, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

FeatureTensor& FeatureTensor::operator-=(const FeatureTensor& other) {
    require_same_shape(*this, other, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

FeatureTensor& FeatureTensor::operator*=(Real s) noexcept {
    for (auto& v : data_) v *= s;
    return *this;
}

void FeatureTensor::add_scaled(const FeatureTensor& other, Real s) {
    require_same_shape(*this, other, "add_scaled");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
}

void FeatureTensor::fill(Real value) noexcept { std::fill(data_.begin(), data_.end(), value); }

bool FeatureTensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

FeatureTensor operator+(FeatureTensor a, const FeatureTensor& b) { return a += b; }
FeatureTensor operator-(FeatureTensor a, const FeatureTensor& b) { return a -= b; }
FeatureTensor operator*(Real s, FeatureTensor a) { return a *= s; }

FilterBank::FilterBank(std::size_t num_filters, std::size_t in_channels, std::size_t kernel_h, std::size_t kernel_w,
                       Real fill)
    : num_filters_(num_filters),
      in_channels_(in_channels),
      kernel_h_(kernel_h),
      kernel_w_(kernel_w),
      weights_(num_filters * in_channels * kernel_h * kernel_w, fill) {}

FilterBank::FilterBank(std::size_t num_filters, std::size_t in_channels, std::size_t kernel_h, std::size_t kernel_w,
                       std::vector<Real> weights)
    : num_filters_(num_filters),
      in_channels_(in_channels),
      kernel_h_(kernel_h),
      kernel_w_(kernel_w),
      weights_(std::move(weights)) {
    if (weights_.size() != num_filters * in_channels * kernel_h * kernel_w) {
        throw ShapeError("filter bank weights length " + std::to_string(weights_.size()) + " does not match " +
                         shape_string());
    }
}

std::string FilterBank::shape_string() const {
    std::ostringstream os;
    os << num_filters_ << 'x' << in_channels_ << 'x' << kernel_h_ << 'x' << kernel_w_;
    return os.str();
}

Real inner(std::span<const Real> a, std::span<const Real> b) {
    if (a.size() != b.size()) {
        throw ShapeError("inner: length " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    return std::inner_product(a.begin(), a.end(), b.begin(), Real{0});
}

Real inner(const FeatureTensor& a, const FeatureTensor& b) {
    require_same_shape(a, b, "inner");
    return inner(a.data(), b.data());
}

Real l1_norm(std::span<const Real> a) noexcept {
    Real s = 0;
    for (Real v : a) s += std::abs(v);
    return s;
}

Real l2_norm(std::span<const Real> a) noexcept {
    // Scaled accumulation keeps tiny codes from underflowing.
    Real scale = 0;
    for (Real v : a) scale = std::max(scale, std::abs(v));
    if (scale == 0) return 0;
    Real s = 0;
    for (Real v : a) {
        const Real r = v / scale;
        s += r * r;
    }
    return scale * std::sqrt(s);
}

Real l1_norm(const FeatureTensor& a) noexcept { return l1_norm(a.data()); }
Real l2_norm(const FeatureTensor& a) noexcept { return l2_norm(a.data()); }

void require_same_shape(const FeatureTensor& a, const FeatureTensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape " + a.shape().to_string() + " vs " + b.shape().to_string());
    }
}

} // namespace ebssc
