#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ebssc/conv.hpp"
#include "ebssc/shrinkage.hpp"
#include "ebssc/tensor.hpp"

namespace ebssc {

/// Spatial resolution of the class-conditional threshold maps.
enum class BiasLayout {
    full,        ///< one value per code location (w_yk ∈ ℝ^F)
    per_channel  ///< one value per channel, shared over locations
};

/// Class-conditional shrinkage parameters of one coding block.
///
/// For class y and channel k the thresholds are β⁺ = ŵ⁺_yk + b_k and β⁻ = ŵ⁻_yk − b_k.
/// Keeping ŵ⁺, ŵ⁻ ≥ 0 guarantees −β⁻ ≤ β⁺ for any offset b.
///
/// With `pooling` set, the maps live on the average-pooled code grid and reach the
/// thresholds through the pooling adjoint, so coding stays a single shrink.
struct ClassBiasParams {
    std::size_t num_classes = 0;
    Shape3 code_shape;  ///< K × H × W of the codes these thresholds apply to
    BiasLayout layout = BiasLayout::per_channel;
    std::optional<PoolGeometry> pooling;
    std::vector<Real> w_plus;   ///< num_classes × map_size
    std::vector<Real> w_minus;  ///< num_classes × map_size
    std::vector<Real> offset;   ///< b_k, one per channel

    static ClassBiasParams uniform(std::size_t num_classes, Shape3 code_shape, BiasLayout layout, Real w_value,
                                   Real offset_value, std::optional<PoolGeometry> pooling = std::nullopt);

    Shape3 map_shape() const;
    std::size_t map_size() const { return map_shape().size(); }
    std::span<const Real> w_plus_of(std::size_t y) const { return {w_plus.data() + y * map_size(), map_size()}; }
    std::span<const Real> w_minus_of(std::size_t y) const { return {w_minus.data() + y * map_size(), map_size()}; }

    /// Throws on inconsistent sizes, negative maps or non-finite entries.
    void validate() const;

    bool operator==(const ClassBiasParams&) const = default;
};

/// Spreads a class map (map_shape) onto the code grid (code_shape).
FeatureTensor expand_class_map(const ClassBiasParams& p, std::span<const Real> map);
/// Adjoint of expand_class_map: gathers a code-grid tensor back onto map_shape.
std::vector<Real> reduce_to_class_map(const ClassBiasParams& p, const FeatureTensor& code_grid);

/// Thresholds of channel k under class hypothesis y (a per-location map or a scalar).
ThresholdPair class_thresholds(const ClassBiasParams& p, std::size_t y, std::size_t k);
/// Thresholds of every channel under class hypothesis y, broadcast onto code_shape.
ThresholdPair class_thresholds(const ClassBiasParams& p, std::size_t y);

struct CodeResult {
    FeatureTensor code;            ///< z* on the unit sphere, or 0
    FeatureTensor pre_projection;  ///< z̃ = shrink(d ⋆ x)
    Real lambda_star = 0;          ///< Lagrange multiplier ½‖z̃‖₂ (not used by the forward path)
    ThresholdPair thresholds_used;
};

/// z̃ / ‖z̃‖₂, or 0 when z̃ = 0.
FeatureTensor spherical_normalize(const FeatureTensor& pre_projection);

/// Closed-form maximizer of vᵀz − β⁺ᵀz⁺ + β⁻ᵀz⁻ over ‖z‖₂ ≤ 1 with v = d ⋆ x:
/// correlate, shrink, project onto the sphere.
CodeResult ssc_encode(const FeatureTensor& x, const FilterBank& bank, const ThresholdPair& t, std::size_t pad);
CodeResult ssc_encode(const FeatureTensor& x, const FilterBank& bank, const ThresholdPair& t);

/// ssc_encode with the class-conditional thresholds of hypothesis y.
CodeResult ebssc_encode(const FeatureTensor& x, const FilterBank& bank, const ClassBiasParams& p, std::size_t y,
                        std::size_t pad);
CodeResult ebssc_encode(const FeatureTensor& x, const FilterBank& bank, const ClassBiasParams& p, std::size_t y);

struct LsqScaling {
    Real epsilon = 0;              ///< ε* = xᵀu − (β/2)‖z̄‖₁
    FeatureTensor reconstruction;  ///< ε*·u with u = Σ d_k * z̄_k
    FeatureTensor code;            ///< ε*·z̄
};

/// ε* for a unit-reconstruction code z̄ (no degeneracy check).
Real lsq_optimal_scale(const FeatureTensor& unit_code, const FeatureTensor& x, const FilterBank& bank, Real beta,
                       std::size_t pad);

/// Rescales a solution of the unit-length reconstruction problem into the least-squares
/// optimum of ‖x − Σ d_k * z_k‖² + β‖z‖₁. Throws DegenerateScalingError when ε* ≤ 0.
LsqScaling unit_scale_to_lsq(const FeatureTensor& unit_code, const FeatureTensor& x, const FilterBank& bank,
                             Real beta, std::size_t pad);
LsqScaling unit_scale_to_lsq(const CodeResult& unit_solution, const FeatureTensor& x, const FilterBank& bank,
                             Real beta, std::size_t pad);

} // namespace ebssc
