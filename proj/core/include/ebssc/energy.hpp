#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ebssc/coder.hpp"
#include "ebssc/conv.hpp"
#include "ebssc/shrinkage.hpp"
#include "ebssc/tensor.hpp"

namespace ebssc {

/// Raw one-vs-all split classifier: E_class(y, z) = Σ_k w⁺_ykᵀ P z_k⁺ + Σ_k w⁻_ykᵀ P z_k⁻,
/// with P the optional average pooling of the codes (identity when unset).
struct SplitClassifier {
    std::size_t num_classes = 0;
    Shape3 code_shape;
    std::optional<PoolGeometry> pooling;
    std::vector<Real> w_plus;   ///< num_classes × map_size
    std::vector<Real> w_minus;  ///< num_classes × map_size

    Shape3 map_shape() const { return pooling ? pooling->output_shape(code_shape) : code_shape; }
    std::size_t map_size() const { return map_shape().size(); }
};

struct EnergyBreakdown {
    Real e_code = 0;
    Real e_class = 0;
    Real e_total = 0;
    Real l1_of_code = 0;
    Real recon_inner = 0;  ///< xᵀ Σ d_k * z_k
};

/// Bottom-up coding energy xᵀ(Σ d_k * z_k) − β‖z‖₁. Requires ‖z‖₂ ≤ 1 + 1e-6.
Real e_code(const FeatureTensor& x, const FeatureTensor& z, const FilterBank& bank, Real beta, std::size_t pad);

/// Top-down classification energy of hypothesis y.
Real e_class(std::size_t y, const FeatureTensor& z, const SplitClassifier& classifier);

/// Full energy E = E_code + E_class with every term reported.
EnergyBreakdown energy_breakdown(const FeatureTensor& x, std::size_t y, const FeatureTensor& z,
                                 const FilterBank& bank, Real beta, const SplitClassifier& classifier,
                                 std::size_t pad);

/// Energy in the offset parameterization maximized by ebssc_encode:
/// xᵀ(Σ d_k * z_k) − Σ_k b_k 1ᵀz_k − Σ_k ŵ⁺_ykᵀ z_k⁺ + Σ_k ŵ⁻_ykᵀ z_k⁻
/// (maps spread onto the code grid through the pooling adjoint when pooling is set).
Real e_reparam(const FeatureTensor& x, std::size_t y, const FeatureTensor& z, const FilterBank& bank,
               const ClassBiasParams& p, std::size_t pad);

/// The same energy given the correlation v = d ⋆ x directly.
Real e_reparam_from_response(const FeatureTensor& v, std::size_t y, const FeatureTensor& z,
                             const ClassBiasParams& p);

/// vᵀz − β⁺ᵀz⁺ + β⁻ᵀz⁻: the objective whose unit-ball maximizer is shrink(v)/‖shrink(v)‖.
Real threshold_energy(const FeatureTensor& v, const FeatureTensor& z, const ThresholdPair& t);

/// Equivalent raw classifier for a chosen sparsity weight β, such that
/// e_code(β) + e_class(to_split_classifier(p, β)) equals e_reparam(p) for every code.
SplitClassifier to_split_classifier(const ClassBiasParams& p, Real beta);

/// Least-squares sparse coding objective ‖x − Σ d_k * z_k‖₂² + β‖z‖₁.
Real lsq_objective(const FeatureTensor& x, const FeatureTensor& z, const FilterBank& bank, Real beta,
                   std::size_t pad);

} // namespace ebssc
