#pragma once

#include <cstddef>
#include <vector>

#include "ebssc/tensor.hpp"

namespace ebssc {

/// out[k] = d_k ⋆ x with zero padding `pad` and stride 1.
FeatureTensor cross_correlate(const FeatureTensor& x, const FilterBank& bank, std::size_t pad);

/// Σ_k d_k * z_k: the exact adjoint of cross_correlate under the same `pad`.
/// The output spatial size is z.height + kernel_h − 1 − 2·pad.
FeatureTensor reconstruct(const FeatureTensor& z, const FilterBank& bank, std::size_t pad);

/// Gradient of ⟨cross_correlate(x, bank, pad), upstream⟩ with respect to the filter weights.
/// Also the filter gradient of ⟨reconstruct(z, bank, pad), g⟩ when called as (g, z).
FilterBank filter_gradient(const FeatureTensor& x, const FeatureTensor& upstream, std::size_t kernel_h,
                           std::size_t kernel_w, std::size_t pad);

struct PoolGeometry {
    std::size_t window = 1;
    std::size_t stride = 1;
    std::size_t pad = 0;

    /// floor((in + 2·pad − window)/stride) + 1
    std::size_t output_extent(std::size_t in) const;
    Shape3 output_shape(const Shape3& in) const;
    bool operator==(const PoolGeometry&) const = default;
};

/// Argmax location (flat input index) recorded per pooled output cell.
struct PoolSwitches {
    Shape3 input_shape;
    std::vector<std::size_t> argmax;
};

/// Channel-wise max; padded cells behave as −∞.
FeatureTensor max_pool(const FeatureTensor& x, std::size_t window, std::size_t stride, std::size_t pad);
FeatureTensor max_pool(const FeatureTensor& x, const PoolGeometry& g, PoolSwitches* switches = nullptr);
/// Adjoint of max_pool with the recorded switches.
FeatureTensor max_unpool(const FeatureTensor& y, const PoolSwitches& switches);

/// Channel-wise mean over the in-bounds cells of each window.
FeatureTensor avg_pool(const FeatureTensor& x, std::size_t window, std::size_t stride, std::size_t pad);
FeatureTensor avg_pool(const FeatureTensor& x, const PoolGeometry& g);
/// Adjoint of avg_pool: each output spreads value / (in-bounds count) over its window.
FeatureTensor avg_pool_adjoint(const FeatureTensor& y, const PoolGeometry& g, const Shape3& input_shape);

} // namespace ebssc
