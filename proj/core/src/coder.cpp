#include "ebssc/coder.hpp"

#include <algorithm>
#include <cmath>

#include "ebssc/error.hpp"

namespace ebssc {

ClassBiasParams ClassBiasParams::uniform(std::size_t num_classes, Shape3 code_shape, BiasLayout layout,
                                         Real w_value, Real offset_value, std::optional<PoolGeometry> pooling) {
    ClassBiasParams p;
    p.num_classes = num_classes;
    p.code_shape = code_shape;
    p.layout = layout;
    p.pooling = pooling;
    p.w_plus.assign(num_classes * p.map_size(), w_value);
    p.w_minus.assign(num_classes * p.map_size(), w_value);
    p.offset.assign(code_shape.channels, offset_value);
    p.validate();
    return p;
}

Shape3 ClassBiasParams::map_shape() const {
    if (layout == BiasLayout::per_channel) return {code_shape.channels, 1, 1};
    if (pooling) return pooling->output_shape(code_shape);
    return code_shape;
}

void ClassBiasParams::validate() const {
    if (num_classes == 0) throw ArgumentError("class bias params need at least one class");
    if (layout == BiasLayout::per_channel && pooling) {
        throw ArgumentError("classifier pooling requires full spatial maps");
    }
    const std::size_t n = num_classes * map_size();
    if (w_plus.size() != n || w_minus.size() != n || offset.size() != code_shape.channels) {
        throw ShapeError("class bias params sized for " + std::to_string(num_classes) + " classes over " +
                         map_shape().to_string() + " have " + std::to_string(w_plus.size()) + "/" +
                         std::to_string(w_minus.size()) + "/" + std::to_string(offset.size()) + " entries");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!(w_plus[i] >= 0) || !(w_minus[i] >= 0) || !std::isfinite(w_plus[i]) || !std::isfinite(w_minus[i])) {
            throw ArgumentError("class bias maps must be finite and non-negative (entry " + std::to_string(i) + ")");
        }
    }
    for (Real b : offset) {
        if (!std::isfinite(b)) throw ArgumentError("class bias offsets must be finite");
    }
}

FeatureTensor expand_class_map(const ClassBiasParams& p, std::span<const Real> map) {
    const Shape3 ms = p.map_shape();
    if (map.size() != ms.size()) throw ShapeError("class map length does not match " + ms.to_string());
    FeatureTensor m(ms, std::vector<Real>(map.begin(), map.end()));
    if (p.layout == BiasLayout::per_channel) {
        FeatureTensor out(p.code_shape);
        for (std::size_t k = 0; k < ms.channels; ++k) std::ranges::fill(out.channel(k), m[k]);
        return out;
    }
    if (p.pooling) return avg_pool_adjoint(m, *p.pooling, p.code_shape);
    return m;
}

std::vector<Real> reduce_to_class_map(const ClassBiasParams& p, const FeatureTensor& code_grid) {
    if (code_grid.shape() != p.code_shape) {
        throw ShapeError("reduce_to_class_map: " + code_grid.shape().to_string() + " vs " +
                         p.code_shape.to_string());
    }
    if (p.layout == BiasLayout::per_channel) {
        std::vector<Real> out(p.code_shape.channels);
        for (std::size_t k = 0; k < out.size(); ++k) {
            for (Real v : code_grid.channel(k)) out[k] += v;
        }
        return out;
    }
    const FeatureTensor pooled = p.pooling ? avg_pool(code_grid, *p.pooling) : code_grid;
    return {pooled.data().begin(), pooled.data().end()};
}

ThresholdPair class_thresholds(const ClassBiasParams& p, std::size_t y) {
    if (y >= p.num_classes) {
        throw ArgumentError("class id " + std::to_string(y) + " out of range [0, " + std::to_string(p.num_classes) +
                            ")");
    }
    if (p.layout == BiasLayout::per_channel) {
        std::vector<Real> plus(p.code_shape.channels), minus(p.code_shape.channels);
        const auto wp = p.w_plus_of(y);
        const auto wm = p.w_minus_of(y);
        for (std::size_t k = 0; k < plus.size(); ++k) {
            plus[k] = wp[k] + p.offset[k];
            minus[k] = wm[k] - p.offset[k];
        }
        return {ThresholdMap::per_channel(std::move(plus)), ThresholdMap::per_channel(std::move(minus))};
    }
    FeatureTensor plus = expand_class_map(p, p.w_plus_of(y));
    FeatureTensor minus = expand_class_map(p, p.w_minus_of(y));
    for (std::size_t k = 0; k < p.code_shape.channels; ++k) {
        for (Real& v : plus.channel(k)) v += p.offset[k];
        for (Real& v : minus.channel(k)) v -= p.offset[k];
    }
    return {ThresholdMap::per_element(plus), ThresholdMap::per_element(minus)};
}

ThresholdPair class_thresholds(const ClassBiasParams& p, std::size_t y, std::size_t k) {
    if (k >= p.code_shape.channels) {
        throw ArgumentError("channel " + std::to_string(k) + " out of range for " + p.code_shape.to_string());
    }
    const ThresholdPair all = class_thresholds(p, y);
    if (p.layout == BiasLayout::per_channel) {
        return ThresholdPair::scalar(all.plus.values()[k], all.minus.values()[k]);
    }
    const std::size_t plane = p.code_shape.plane();
    auto slice = [&](const ThresholdMap& m) {
        std::vector<Real> v(m.values().begin() + static_cast<std::ptrdiff_t>(k * plane),
                            m.values().begin() + static_cast<std::ptrdiff_t>((k + 1) * plane));
        return ThresholdMap(ThresholdMap::Layout::per_element, std::move(v));
    };
    return {slice(all.plus), slice(all.minus)};
}

FeatureTensor spherical_normalize(const FeatureTensor& pre_projection) {
    const Real norm = l2_norm(pre_projection);
    if (norm == 0) return FeatureTensor(pre_projection.shape());
    FeatureTensor z = pre_projection;
    z *= 1 / norm;
    return z;
}

CodeResult ssc_encode(const FeatureTensor& x, const FilterBank& bank, const ThresholdPair& t, std::size_t pad) {
    const FeatureTensor v = cross_correlate(x, bank, pad);
    CodeResult r;
    r.pre_projection = shrink(v, t);
    r.code = spherical_normalize(r.pre_projection);
    r.lambda_star = l2_norm(r.pre_projection) / 2;
    r.thresholds_used = t;
    return r;
}

CodeResult ssc_encode(const FeatureTensor& x, const FilterBank& bank, const ThresholdPair& t) {
    return ssc_encode(x, bank, t, bank.same_pad());
}

CodeResult ebssc_encode(const FeatureTensor& x, const FilterBank& bank, const ClassBiasParams& p, std::size_t y,
                        std::size_t pad) {
    return ssc_encode(x, bank, class_thresholds(p, y), pad);
}

CodeResult ebssc_encode(const FeatureTensor& x, const FilterBank& bank, const ClassBiasParams& p, std::size_t y) {
    return ebssc_encode(x, bank, p, y, bank.same_pad());
}

Real lsq_optimal_scale(const FeatureTensor& unit_code, const FeatureTensor& x, const FilterBank& bank, Real beta,
                       std::size_t pad) {
    const FeatureTensor u = reconstruct(unit_code, bank, pad);
    return inner(x, u) - beta / 2 * l1_norm(unit_code);
}

LsqScaling unit_scale_to_lsq(const FeatureTensor& unit_code, const FeatureTensor& x, const FilterBank& bank,
                             Real beta, std::size_t pad) {
    LsqScaling s;
    const FeatureTensor u = reconstruct(unit_code, bank, pad);
    require_same_shape(x, u, "unit_scale_to_lsq");
    s.epsilon = inner(x, u) - beta / 2 * l1_norm(unit_code);
    if (!(s.epsilon > 0)) throw DegenerateScalingError(s.epsilon);
    s.reconstruction = s.epsilon * u;
    s.code = s.epsilon * unit_code;
    return s;
}

LsqScaling unit_scale_to_lsq(const CodeResult& unit_solution, const FeatureTensor& x, const FilterBank& bank,
                             Real beta, std::size_t pad) {
    return unit_scale_to_lsq(unit_solution.code, x, bank, beta, pad);
}

} // namespace ebssc
