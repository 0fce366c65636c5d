#pragma once

#include <random>
#include <vector>

#include "ebssc/tensor.hpp"

namespace ebssc::test {

inline FeatureTensor random_tensor(const Shape3& s, std::mt19937_64& rng, Real scale = 1) {
    std::normal_distribution<Real> n(0, scale);
    FeatureTensor t(s);
    for (Real& v : t.data()) v = n(rng);
    return t;
}

inline FilterBank random_bank(std::size_t k, std::size_t c, std::size_t kh, std::size_t kw, std::mt19937_64& rng) {
    std::normal_distribution<Real> n(0, 1);
    FilterBank b(k, c, kh, kw);
    for (Real& w : b.weights()) w = n(rng);
    return b;
}

inline FeatureTensor tensor(Shape3 s, std::vector<Real> v) { return FeatureTensor(s, std::move(v)); }

inline Real max_abs_diff(std::span<const Real> a, std::span<const Real> b) {
    Real m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace ebssc::test
