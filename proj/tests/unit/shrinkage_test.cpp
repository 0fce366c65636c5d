#include <gtest/gtest.h>

#include <limits>

#include "ebssc/error.hpp"
#include "ebssc/oracle.hpp"
#include "ebssc/shrinkage.hpp"
#include "helpers.hpp"

using namespace ebssc;
using ebssc::test::random_tensor;

namespace {
constexpr Real inf = std::numeric_limits<Real>::infinity();
Real relu1(Real v) { return std::max(v, Real{0}); }
} // namespace

TEST(Shrink, ScalarExamples) {
    EXPECT_EQ(shrink(1.0, 0.5, 0.5), 0.5);
    EXPECT_EQ(shrink(-1.0, 0.5, 0.5), -0.5);
    EXPECT_EQ(shrink(0.2, 0.3, -0.1), 0);
    EXPECT_DOUBLE_EQ(shrink(-0.5, 0.3, -0.1), -0.6);
}

TEST(Shrink, ReluLimit) {
    const auto t = ThresholdPair::relu();
    auto out = shrink(FeatureTensor({1, 1, 3}, {-2, 3, 0}), t);
    EXPECT_EQ(out, FeatureTensor({1, 1, 3}, {0, 3, 0}));
    EXPECT_EQ(shrink(-2.0, 0, inf), 0);
}

TEST(Shrink, TwoReluIdentity) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<Real> u(-1, 1);
    for (int i = 0; i < 10000; ++i) {
        const Real v = 3 * u(rng), bp = u(rng);
        const Real bm = std::max(-bp, u(rng));
        EXPECT_EQ(shrink(v, bp, bm), relu1(v - bp) - relu1(-(v + bm)));
    }
}

TEST(Shrink, ImproperNamesFirstElement) {
    ThresholdPair t{ThresholdMap::per_channel({0.1, 0.2, 0.3}), ThresholdMap::per_channel({0.0, -0.5, -0.6})};
    try {
        shrink(FeatureTensor({3, 2, 2}), t);
        FAIL();
    } catch (const ThresholdError& e) {
        EXPECT_EQ(e.index(), 4u);
    }
}

TEST(Shrink, BroadcastMismatch) {
    ThresholdPair t{ThresholdMap::per_channel({0.1, 0.2}), ThresholdMap::per_channel({0.1, 0.2})};
    EXPECT_THROW(shrink(FeatureTensor({3, 2, 2}), t), ShapeError);
}

TEST(Shrink, PerElementLayout) {
    FeatureTensor bp({1, 1, 3}, {0.5, 0, 1}), bm({1, 1, 3}, {0.5, 2, 0});
    ThresholdPair t{ThresholdMap::per_element(bp), ThresholdMap::per_element(bm)};
    auto out = shrink(FeatureTensor({1, 1, 3}, {1, -1, -1}), t);
    EXPECT_EQ(out, FeatureTensor({1, 1, 3}, {0.5, 0, -1}));
}

TEST(Shrink, MonotoneAndOneLipschitz) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<Real> u(-2, 2);
    for (int i = 0; i < 5000; ++i) {
        const Real bp = std::abs(u(rng)), bm = std::abs(u(rng));
        Real a = u(rng), b = u(rng);
        if (a > b) std::swap(a, b);
        const Real sa = shrink(a, bp, bm), sb = shrink(b, bp, bm);
        EXPECT_LE(sa, sb);
        EXPECT_LE(sb - sa, b - a + 1e-15);
    }
}

TEST(Shrink, ZeroThresholdsIsIdentity) {
    std::mt19937_64 rng(3);
    auto v = random_tensor({2, 3, 3}, rng);
    EXPECT_EQ(shrink(v, ThresholdPair::scalar(0, 0)), v);
}

TEST(ShrinkSubgradient, Examples) {
    auto t = ThresholdPair::scalar(0.5, 0.5);
    auto m = shrink_subgradient(FeatureTensor({1, 1, 4}, {1.0, 0.2, -0.9, 0.5}), t);
    EXPECT_EQ(m, FeatureTensor({1, 1, 4}, {1, 0, 1, 0}));
}

TEST(ShrinkSubgradient, MatchesFiniteDifferenceAwayFromKinks) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<Real> u(-1, 1);
    const Real h = 1e-5;
    int checked = 0;
    for (int i = 0; i < 2000; ++i) {
        const Real bp = u(rng), bm = std::max(-bp, u(rng));
        const Real v = 2 * u(rng);
        if (std::abs(v - bp) <= 10 * h || std::abs(v + bm) <= 10 * h) continue;
        auto t = ThresholdPair::scalar(bp, bm);
        std::vector<Real> p{v};
        auto fd = oracle::finite_diff([&](std::span<const Real> q) { return shrink(q[0], bp, bm); }, p, h);
        EXPECT_NEAR(shrink_subgradient(FeatureTensor({1, 1, 1}, {v}), t)[0], fd[0], 1e-8);
        ++checked;
    }
    EXPECT_GT(checked, 1900);
}

TEST(CreluSplit, Examples) {
    auto s = crelu_split(FeatureTensor({1, 1, 2}, {1, -2}));
    EXPECT_EQ(s, FeatureTensor({2, 1, 2}, {1, 0, 0, -2}));
}

TEST(CreluSplit, MergeAndDisjointSupport) {
    std::mt19937_64 rng(5);
    auto v = random_tensor({3, 4, 5}, rng);
    auto s = crelu_split(v);
    ASSERT_EQ(s.shape(), (Shape3{6, 4, 5}));
    EXPECT_EQ(crelu_merge(s), v);
    for (std::size_t k = 0; k < 3; ++k) {
        auto p = s.channel(k), n = s.channel(k + 3);
        for (std::size_t i = 0; i < p.size(); ++i) {
            EXPECT_EQ(p[i] * n[i], 0);
            EXPECT_GE(p[i], 0);
            EXPECT_LE(n[i], 0);
        }
    }
    auto r = relu(v);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(r[i], s[i]);
}

TEST(ShrinkBestBranch, EqualsShrinkWhenProper) {
    std::mt19937_64 rng(6);
    auto v = random_tensor({2, 4, 4}, rng);
    auto t = ThresholdPair{ThresholdMap::per_channel({0.3, -0.1}), ThresholdMap::per_channel({0.2, 0.4})};
    EXPECT_EQ(shrink_best_branch(v, t, nullptr, nullptr), shrink(v, t));
}

TEST(ShrinkBestBranch, ImproperPicksLargerGain) {
    // both branches open at v = 0.1 with (β⁺, β⁻) = (−0.5, −0.5): gains 0.6² vs 0.4²
    auto t = ThresholdPair::scalar(-0.5, -0.5);
    std::vector<ShrinkBranch> br;
    auto out = shrink_best_branch(FeatureTensor({1, 1, 2}, {0.1, -0.2}), t, nullptr, nullptr, &br);
    EXPECT_DOUBLE_EQ(out[0], 0.6);
    EXPECT_DOUBLE_EQ(out[1], -0.7);
    EXPECT_EQ(br[0], ShrinkBranch::positive);
    EXPECT_EQ(br[1], ShrinkBranch::negative);
}
