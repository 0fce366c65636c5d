#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "ebssc/tensor.hpp"

namespace ebssc {

struct CheckResult {
    std::string name;
    bool passed = false;
    Real metric = 0;     ///< worst observed error or violation count
    Real tolerance = 0;  ///< pass iff metric <= tolerance (and no exception)
    std::string detail;
    double seconds = 0;
};

struct CheckOptions {
    std::uint64_t seed = 20170101;
};

/// Closed-form coder energy against projected gradient ascent, 50 instances.
CheckResult check_closed_form(const CheckOptions& o = {});
/// ‖z*‖ ∈ {0,1}, λ* = ½‖z̃‖, sign(z*) = sign(z̃) on 1000 draws.
CheckResult check_sphere_identities(const CheckOptions& o = {});
/// Rescaled unit-reconstruction solution against ISTA, 20 nondegenerate instances.
CheckResult check_lsq_equivalence(const CheckOptions& o = {});
/// Offset-parameterized energy against the explicit code + class energy.
CheckResult check_reparam_identity(const CheckOptions& o = {});
/// Two-ReLU form of shrink and the SSC / CReLU / ReLU reductions, exact.
CheckResult check_reductions(const CheckOptions& o = {});
/// Analytic gradients against central differences on two-block toy networks.
CheckResult check_gradients(const CheckOptions& o = {});
/// 1000 ADAM steps on random gradients keep every class threshold pair proper.
CheckResult check_properness(const CheckOptions& o = {});
/// Joint energy never decreases across unrolling sweeps, 20 instances.
CheckResult check_unroll_monotone(const CheckOptions& o = {});
/// Convolution and average pool adjoint tests.
CheckResult check_adjoints(const CheckOptions& o = {});
/// Checkpoint bytes and config text survive save/load unchanged.
CheckResult check_round_trips(const CheckOptions& o = {});
/// ISTA objective monotone and the reconstruction bound chain holds.
CheckResult check_oracle_self(const CheckOptions& o = {});

struct NamedCheck {
    std::string name;
    std::function<CheckResult(const CheckOptions&)> run;
};

std::vector<NamedCheck> oracle_suite();

/// Runs every check, prints one table row per check, true iff all pass.
bool run_oracle_suite(std::ostream& out, const CheckOptions& o = {});

} // namespace ebssc
