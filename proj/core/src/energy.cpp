#include "ebssc/energy.hpp"

#include <algorithm>
#include <cmath>

#include "ebssc/error.hpp"

namespace ebssc {

namespace {

constexpr Real kNormTolerance = 1e-6;

void require_unit_ball(const FeatureTensor& z) {
    const Real n = l2_norm(z);
    if (n > 1 + kNormTolerance) {
        throw ArgumentError("code norm " + std::to_string(n) + " exceeds the unit ball");
    }
}

FeatureTensor positive_part(const FeatureTensor& z) {
    FeatureTensor out(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = std::max(z[i], Real{0});
    return out;
}

FeatureTensor negative_part(const FeatureTensor& z) {
    FeatureTensor out(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = std::min(z[i], Real{0});
    return out;
}

void require_class(std::size_t y, std::size_t num_classes) {
    if (y >= num_classes) {
        throw ArgumentError("class id " + std::to_string(y) + " out of range [0, " + std::to_string(num_classes) +
                            ")");
    }
}

} // namespace

Real e_code(const FeatureTensor& x, const FeatureTensor& z, const FilterBank& bank, Real beta, std::size_t pad) {
    require_unit_ball(z);
    return inner(x, reconstruct(z, bank, pad)) - beta * l1_norm(z);
}

Real e_class(std::size_t y, const FeatureTensor& z, const SplitClassifier& c) {
    require_class(y, c.num_classes);
    if (z.shape() != c.code_shape) {
        throw ShapeError("e_class: code " + z.shape().to_string() + " vs classifier " + c.code_shape.to_string());
    }
    if (c.w_plus.size() != c.num_classes * c.map_size() || c.w_minus.size() != c.w_plus.size()) {
        throw ShapeError("e_class: classifier maps hold " + std::to_string(c.w_plus.size()) + "/" +
                         std::to_string(c.w_minus.size()) + " values, expected " +
                         std::to_string(c.num_classes * c.map_size()));
    }
    FeatureTensor zp = positive_part(z);
    FeatureTensor zm = negative_part(z);
    if (c.pooling) {
        zp = avg_pool(zp, *c.pooling);
        zm = avg_pool(zm, *c.pooling);
    }
    const std::size_t m = c.map_size();
    const std::span<const Real> wp(c.w_plus.data() + y * m, m);
    const std::span<const Real> wm(c.w_minus.data() + y * m, m);
    return inner(wp, zp.data()) + inner(wm, zm.data());
}

EnergyBreakdown energy_breakdown(const FeatureTensor& x, std::size_t y, const FeatureTensor& z,
                                 const FilterBank& bank, Real beta, const SplitClassifier& classifier,
                                 std::size_t pad) {
    require_unit_ball(z);
    EnergyBreakdown e;
    e.recon_inner = inner(x, reconstruct(z, bank, pad));
    e.l1_of_code = l1_norm(z);
    e.e_code = e.recon_inner - beta * e.l1_of_code;
    e.e_class = e_class(y, z, classifier);
    e.e_total = e.e_code + e.e_class;
    return e;
}

Real e_reparam_from_response(const FeatureTensor& v, std::size_t y, const FeatureTensor& z,
                             const ClassBiasParams& p) {
    require_class(y, p.num_classes);
    require_same_shape(v, z, "e_reparam");
    if (z.shape() != p.code_shape) {
        throw ShapeError("e_reparam: code " + z.shape().to_string() + " vs class bias " + p.code_shape.to_string());
    }
    const FeatureTensor wp = expand_class_map(p, p.w_plus_of(y));
    const FeatureTensor wm = expand_class_map(p, p.w_minus_of(y));
    const std::size_t plane = z.shape().plane();
    Real e = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const Real zi = z[i];
        e += v[i] * zi - p.offset[i / plane] * zi;
        if (zi > 0) e -= wp[i] * zi;
        if (zi < 0) e += wm[i] * zi;
    }
    return e;
}

Real e_reparam(const FeatureTensor& x, std::size_t y, const FeatureTensor& z, const FilterBank& bank,
               const ClassBiasParams& p, std::size_t pad) {
    // xᵀ(d * z) is evaluated on the generative side; the adjoint form vᵀz is used by the coder.
    require_class(y, p.num_classes);
    const Real recon = inner(x, reconstruct(z, bank, pad));
    return recon + e_reparam_from_response(FeatureTensor(z.shape()), y, z, p);
}

Real threshold_energy(const FeatureTensor& v, const FeatureTensor& z, const ThresholdPair& t) {
    require_same_shape(v, z, "threshold_energy");
    t.require_broadcastable(v.shape());
    const std::size_t plane = v.shape().plane();
    Real e = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        e += v[i] * z[i];
        if (z[i] > 0) e -= t.plus.at(i, plane) * z[i];
        if (z[i] < 0) e += t.minus.at(i, plane) * z[i];
    }
    return e;
}

SplitClassifier to_split_classifier(const ClassBiasParams& p, Real beta) {
    SplitClassifier c;
    c.num_classes = p.num_classes;
    c.code_shape = p.code_shape;
    const std::size_t n = p.code_shape.size();
    const std::size_t plane = p.code_shape.plane();
    c.w_plus.resize(p.num_classes * n);
    c.w_minus.resize(p.num_classes * n);
    for (std::size_t y = 0; y < p.num_classes; ++y) {
        const FeatureTensor wp = expand_class_map(p, p.w_plus_of(y));
        const FeatureTensor wm = expand_class_map(p, p.w_minus_of(y));
        for (std::size_t i = 0; i < n; ++i) {
            const Real b = p.offset[i / plane];
            c.w_plus[y * n + i] = beta - wp[i] - b;
            c.w_minus[y * n + i] = wm[i] - b - beta;
        }
    }
    return c;
}

Real lsq_objective(const FeatureTensor& x, const FeatureTensor& z, const FilterBank& bank, Real beta,
                   std::size_t pad) {
    FeatureTensor residual = x;
    residual -= reconstruct(z, bank, pad);
    const Real n = l2_norm(residual);
    return n * n + beta * l1_norm(z);
}

} // namespace ebssc
