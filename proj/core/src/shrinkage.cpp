#include "ebssc/shrinkage.hpp"

#include <algorithm>

#include "ebssc/error.hpp"

namespace ebssc {

void ThresholdMap::require_broadcastable(const Shape3& shape) const {
    const std::size_t expected = layout_ == Layout::scalar        ? 1
                                 : layout_ == Layout::per_channel ? shape.channels
                                                                  : shape.size();
    if (values_.size() != expected) {
        throw ShapeError("threshold map with " + std::to_string(values_.size()) +
                         " values does not broadcast onto " + shape.to_string());
    }
}

void ThresholdPair::require_broadcastable(const Shape3& shape) const {
    plus.require_broadcastable(shape);
    minus.require_broadcastable(shape);
}

void ThresholdPair::require_proper(const Shape3& shape) const {
    require_broadcastable(shape);
    const std::size_t plane = shape.plane();
    for (std::size_t i = 0; i < shape.size(); ++i) {
        const Real bp = plus.at(i, plane);
        const Real bm = minus.at(i, plane);
        if (!(-bm <= bp)) throw ThresholdError(i, bp, bm);
    }
}

Real shrink(Real v, Real beta_plus, Real beta_minus) noexcept {
    if (v - beta_plus > 0) return v - beta_plus;
    if (v + beta_minus < 0) return v + beta_minus;
    return 0;
}

FeatureTensor shrink(const FeatureTensor& v, const ThresholdPair& t) {
    t.require_proper(v.shape());
    FeatureTensor out(v.shape());
    const std::size_t plane = v.shape().plane();
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = shrink(v[i], t.plus.at(i, plane), t.minus.at(i, plane));
    return out;
}

FeatureTensor shrink_subgradient(const FeatureTensor& v, const ThresholdPair& t) {
    t.require_proper(v.shape());
    FeatureTensor out(v.shape());
    const std::size_t plane = v.shape().plane();
    for (std::size_t i = 0; i < v.size(); ++i) {
        const bool active = v[i] - t.plus.at(i, plane) > 0 || v[i] + t.minus.at(i, plane) < 0;
        out[i] = active ? 1 : 0;
    }
    return out;
}

FeatureTensor shrink_best_branch(const FeatureTensor& v, const ThresholdPair& t, const FeatureTensor* plus_shift,
                                 const FeatureTensor* minus_shift, std::vector<ShrinkBranch>* branches) {
    t.require_broadcastable(v.shape());
    if (plus_shift) require_same_shape(v, *plus_shift, "shrink_best_branch");
    if (minus_shift) require_same_shape(v, *minus_shift, "shrink_best_branch");
    FeatureTensor out(v.shape());
    if (branches) branches->assign(v.size(), ShrinkBranch::dead);
    const std::size_t plane = v.shape().plane();
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Real pos = v[i] - t.plus.at(i, plane) + (plus_shift ? (*plus_shift)[i] : 0);
        const Real neg = v[i] + t.minus.at(i, plane) + (minus_shift ? (*minus_shift)[i] : 0);
        ShrinkBranch b = ShrinkBranch::dead;
        if (pos > 0 && (neg >= 0 || pos >= -neg)) {
            out[i] = pos;
            b = ShrinkBranch::positive;
        } else if (neg < 0) {
            out[i] = neg;
            b = ShrinkBranch::negative;
        }
        if (branches) (*branches)[i] = b;
    }
    return out;
}

FeatureTensor crelu_split(const FeatureTensor& v) {
    const Shape3 s = v.shape();
    FeatureTensor out({2 * s.channels, s.height, s.width});
    const std::size_t n = v.size();
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::max(v[i], Real{0});
        out[n + i] = std::min(v[i], Real{0});
    }
    return out;
}

FeatureTensor crelu_merge(const FeatureTensor& split) {
    const Shape3 s = split.shape();
    if (s.channels % 2 != 0) throw ShapeError("crelu_merge: odd channel count in " + s.to_string());
    FeatureTensor out({s.channels / 2, s.height, s.width});
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) out[i] = split[i] + split[n + i];
    return out;
}

FeatureTensor relu(const FeatureTensor& v) {
    FeatureTensor out(v.shape());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i], Real{0});
    return out;
}

} // namespace ebssc
