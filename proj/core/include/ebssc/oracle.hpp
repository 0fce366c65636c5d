#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ebssc/shrinkage.hpp"
#include "ebssc/tensor.hpp"

// Slow, float64-only reference solvers used to verify the closed-form coder. They are sized
// for small instances and are not meant as a production sparse-coding toolkit.
namespace ebssc::oracle {

struct OracleReport {
    std::vector<Real> objective_trace;  ///< monotone in the solver's improvement direction
    FeatureTensor final_point;
    bool converged = false;
    std::size_t iterations = 0;
};

/// Largest eigenvalue of DᵀD for the operator z ↦ Σ d_k * z_k on codes of `code_shape`.
Real gram_spectral_norm(const FilterBank& bank, const Shape3& code_shape, std::size_t pad,
                        std::size_t iterations = 200, std::uint64_t seed = 7);

/// Shape of the code whose reconstruction matches `signal`.
Shape3 code_shape_for(const Shape3& signal, const FilterBank& bank, std::size_t pad);

struct IstaOptions {
    std::size_t iterations = 5000;
    Real step = 0;  ///< 0 → 1/L with L = 2·λmax(DᵀD) from power iteration
    Real tolerance = 1e-14;
};

/// ISTA on ‖x − Σ d_k * z_k‖₂² + β‖z‖₁. Throws OracleError if the objective rises by more
/// than 1e-9 and ArgumentError if the step exceeds 1/L.
OracleReport ista_csc(const FeatureTensor& x, const FilterBank& bank, Real beta, std::size_t pad,
                      const IstaOptions& options = {});

struct PgaOptions {
    std::size_t iterations = 500;
    Real step = 0;  ///< 0 → 1/(4‖d ⋆ x‖₂)
    Real tolerance = 1e-12;
    std::uint64_t seed = 11;  ///< random feasible starting point
};

/// Projected proximal gradient ascent on vᵀz − β⁺ᵀz⁺ + β⁻ᵀz⁻ over ‖z‖₂ ≤ 1; returns the best iterate.
OracleReport pga_ssc(const FeatureTensor& x, const FilterBank& bank, const ThresholdPair& thresholds,
                     std::size_t pad, const PgaOptions& options = {});

struct UnitReconOptions {
    std::size_t iterations = 20000;
    Real tolerance = 1e-13;
    std::size_t max_code_size = 64;
};

/// Maximizes xᵀ(Σ d_k * z̄_k) − (β/2)‖z̄‖₁ subject to ‖Σ d_k * z̄_k‖₂ ≤ 1 by Douglas–Rachford
/// splitting between the ℓ1-prox and an exact projection onto the reconstruction ellipsoid.
/// `beta` is the least-squares weight; the halved penalty makes ε*·z̄ the LSQ optimum.
OracleReport unit_recon_solve(const FeatureTensor& x, const FilterBank& bank, Real beta, std::size_t pad,
                              const UnitReconOptions& options = {});

struct BoundReport {
    Real reconstruction_norm = 0;  ///< ‖Σ d_k * z_k‖₂
    Real sum_of_norms = 0;         ///< Σ ‖d_k * z_k‖₂
    Real young_bound = 0;          ///< Σ ‖d_k‖₁ ‖z_k‖₁
    Real dimension_bound = 0;      ///< F · Σ ‖z_k‖₂, valid for unit-norm filters with M ≤ F
    bool triangle_holds = false;
    bool young_holds = false;
    bool dimension_holds = false;
};

/// Evaluates each link of the relaxation chain for a given code.
BoundReport bound_check(const FilterBank& bank, const FeatureTensor& z, std::size_t pad);

/// Central differences (fn(p + h·e_i) − fn(p − h·e_i)) / 2h. Throws OracleError on non-finite values.
std::vector<Real> finite_diff(const std::function<Real(std::span<const Real>)>& fn, std::span<const Real> point,
                              Real h);

} // namespace ebssc::oracle
