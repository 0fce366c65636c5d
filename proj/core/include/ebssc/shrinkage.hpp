#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "ebssc/tensor.hpp"

namespace ebssc {

/// Threshold values broadcast over a feature tensor: one scalar, one value per channel,
/// or one value per element.
class ThresholdMap {
public:
    enum class Layout { scalar, per_channel, per_element };

    ThresholdMap() : ThresholdMap(Real{0}) {}
    explicit ThresholdMap(Real value) : layout_(Layout::scalar), values_{value} {}
    ThresholdMap(Layout layout, std::vector<Real> values) : layout_(layout), values_(std::move(values)) {}

    static ThresholdMap per_channel(std::vector<Real> values) {
        return {Layout::per_channel, std::move(values)};
    }
    static ThresholdMap per_element(const FeatureTensor& values) {
        return {Layout::per_element, {values.data().begin(), values.data().end()}};
    }

    Layout layout() const noexcept { return layout_; }
    const std::vector<Real>& values() const noexcept { return values_; }

    /// Threshold applying to flat element `i` of a tensor with `plane` elements per channel.
    Real at(std::size_t i, std::size_t plane) const noexcept {
        switch (layout_) {
        case Layout::scalar: return values_[0];
        case Layout::per_channel: return values_[i / plane];
        default: return values_[i];
        }
    }

    /// Throws ShapeError unless the map broadcasts onto `shape`.
    void require_broadcastable(const Shape3& shape) const;

    bool operator==(const ThresholdMap&) const = default;

private:
    Layout layout_;
    std::vector<Real> values_;
};

/// Upper/lower thresholds (β⁺, β⁻) of the asymmetric shrinkage. Proper when −β⁻ ≤ β⁺.
struct ThresholdPair {
    ThresholdMap plus;
    ThresholdMap minus;

    static ThresholdPair scalar(Real beta_plus, Real beta_minus) {
        return {ThresholdMap(beta_plus), ThresholdMap(beta_minus)};
    }
    /// Standard soft-threshold with dead zone [−β, β].
    static ThresholdPair symmetric(Real beta) { return scalar(beta, beta); }
    /// ReLU as the limit β⁺ = 0, β⁻ = +∞ (the negative branch never fires).
    static ThresholdPair relu() { return scalar(0, std::numeric_limits<Real>::infinity()); }

    void require_broadcastable(const Shape3& shape) const;
    /// Throws ThresholdError naming the first element with −β⁻ > β⁺.
    void require_proper(const Shape3& shape) const;

    bool operator==(const ThresholdPair&) const = default;
};

/// Elementwise v−β⁺ where v−β⁺ > 0, v+β⁻ where v+β⁻ < 0, else 0.
Real shrink(Real v, Real beta_plus, Real beta_minus) noexcept;
FeatureTensor shrink(const FeatureTensor& v, const ThresholdPair& t);

/// 1 where an active branch holds strictly, 0 in the dead zone and at the kinks.
FeatureTensor shrink_subgradient(const FeatureTensor& v, const ThresholdPair& t);

/// Which branch of the shrinkage produced each element.
enum class ShrinkBranch : signed char { negative = -1, dead = 0, positive = 1 };

/// Exact per-coordinate maximizer direction of (v−β⁺)·z⁺ + (v+β⁻)·z⁻ that also accepts
/// improper thresholds (both branches open): the branch with the larger gain wins, ties go
/// to the positive branch. Equals shrink() whenever the thresholds are proper.
/// `plus_shift`/`minus_shift` (optional, same shape as v) are added to the positive- and
/// negative-branch values, i.e. they lower β⁺ and raise β⁻ elementwise.
FeatureTensor shrink_best_branch(const FeatureTensor& v, const ThresholdPair& t, const FeatureTensor* plus_shift,
                                 const FeatureTensor* minus_shift, std::vector<ShrinkBranch>* branches = nullptr);

/// Channels [max(v,0); min(v,0)]: all positive parts first, then all negative parts.
FeatureTensor crelu_split(const FeatureTensor& v);
/// Sums the two halves of a crelu_split layout, recovering v.
FeatureTensor crelu_merge(const FeatureTensor& split);
FeatureTensor relu(const FeatureTensor& v);

} // namespace ebssc
