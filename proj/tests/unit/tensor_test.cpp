#include <gtest/gtest.h>

#include "ebssc/conv.hpp"
#include "ebssc/error.hpp"
#include "helpers.hpp"

using namespace ebssc;
using ebssc::test::random_bank;
using ebssc::test::random_tensor;

namespace {

FeatureTensor frozen_x() {
    FeatureTensor x({1, 3, 4});
    for (std::size_t i = 0; i < 12; ++i) x[i] = (static_cast<Real>(i) - 5.5) / 4;
    return x;
}

FilterBank frozen_bank() { return FilterBank(2, 1, 2, 2, {1, -1, 0.5, 2, 0, 1, -1.5, 0.25}); }

// Columns are operator images of basis vectors.
std::vector<std::vector<Real>> dense_of(const std::function<FeatureTensor(const FeatureTensor&)>& op, Shape3 in) {
    std::vector<std::vector<Real>> cols;
    for (std::size_t i = 0; i < in.size(); ++i) {
        FeatureTensor e(in);
        e[i] = 1;
        auto out = op(e);
        cols.emplace_back(out.data().begin(), out.data().end());
    }
    return cols;
}

} // namespace

TEST(CrossCorrelate, DeltaFilterIsIdentity) {
    FeatureTensor x({1, 1, 2}, {1, 0});
    auto out = cross_correlate(x, FilterBank(1, 1, 1, 1, {1}), 0);
    EXPECT_EQ(out, x);
}

TEST(CrossCorrelate, ShiftsWithoutFlipping) {
    FeatureTensor x({1, 1, 3}, {1, 2, 3});
    // padding applies to both axes, so the middle row carries the 1-D result
    auto out = cross_correlate(x, FilterBank(1, 1, 1, 3, {0, 0, 1}), 1);
    ASSERT_EQ(out.shape(), (Shape3{1, 3, 3}));
    EXPECT_EQ(out(0, 1, 0), 2);
    EXPECT_EQ(out(0, 1, 1), 3);
    EXPECT_EQ(out(0, 1, 2), 0);
    EXPECT_EQ(out(0, 0, 1), 0);
}

TEST(CrossCorrelate, ZeroInput) {
    std::mt19937_64 rng(3);
    auto out = cross_correlate(FeatureTensor({2, 5, 5}), random_bank(3, 2, 3, 3, rng), 1);
    for (Real v : out.data()) EXPECT_EQ(v, 0);
}

TEST(CrossCorrelate, FrozenTwoFilterCase) {
    const std::vector<Real> expected{
        -2.75,    -2.9375,  -2.3125,  -1.6875,  -0.3125,  0.625,    -0.6875,  -0.0625,  0.5625,   -0.4375,
        1.625,    1.8125,   2.4375,   3.0625,   1.0625,   -0.625,   -0.25,    -0.25,    -0.25,    1.375,
        -0.34375, 1.78125,  1.46875,  1.15625,  0.9375,   -1.46875, -0.59375, -0.65625, -0.71875, -0.5625,
        -0.21875, -0.84375, -0.90625, -0.96875, -2.0625,  0.625,    0.875,    1.125,    1.375,    0};
    auto out = cross_correlate(frozen_x(), frozen_bank(), 1);
    ASSERT_EQ(out.shape(), (Shape3{2, 4, 5}));
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(out[i], expected[i], 1e-15) << i;
}

TEST(CrossCorrelate, ChannelMismatchNamesShapes) {
    try {
        cross_correlate(FeatureTensor({2, 3, 3}), FilterBank(1, 1, 3, 3), 1);
        FAIL();
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("2x3x3"), std::string::npos) << msg;
    }
}

TEST(Reconstruct, FrozenTwoFilterCase) {
    FeatureTensor z({2, 4, 5});
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = (static_cast<Real>(i % 5) - 2) / 3;
    auto r = reconstruct(z, frozen_bank(), 1);
    ASSERT_EQ(r.shape(), (Shape3{1, 3, 4}));
    const Real row[4] = {-1.5, -0.75, 0, 0.75};
    for (std::size_t i = 0; i < 12; ++i) EXPECT_NEAR(r[i], row[i % 4], 1e-15);
}

TEST(Reconstruct, OneHotGivesTranslatedFilter) {
    std::mt19937_64 rng(5);
    auto bank = random_bank(2, 1, 3, 3, rng);
    FeatureTensor z({2, 5, 5});
    z(1, 2, 2) = 1;
    auto r = reconstruct(z, bank, 1);
    ASSERT_EQ(r.shape(), (Shape3{1, 5, 5}));
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(r(0, 1 + a, 1 + b), bank(1, 0, a, b));
    }
    EXPECT_EQ(r(0, 0, 0), 0);
    EXPECT_EQ(l2_norm(r), l2_norm(bank.filter(1)));
}

TEST(Reconstruct, ZeroCode) {
    std::mt19937_64 rng(6);
    auto r = reconstruct(FeatureTensor({3, 4, 4}), random_bank(3, 2, 3, 3, rng), 1);
    for (Real v : r.data()) EXPECT_EQ(v, 0);
}

TEST(Reconstruct, DenseMatrixAdjoint) {
    std::mt19937_64 rng(7);
    for (std::size_t pad : {0u, 1u, 2u}) {
        auto bank = random_bank(3, 2, 3, 3, rng);
        const Shape3 xs{2, 4, 4};
        const Shape3 zs = cross_correlate(FeatureTensor(xs), bank, pad).shape();
        auto A = dense_of([&](const FeatureTensor& e) { return cross_correlate(e, bank, pad); }, xs);
        auto B = dense_of([&](const FeatureTensor& e) { return reconstruct(e, bank, pad); }, zs);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            for (std::size_t j = 0; j < zs.size(); ++j) EXPECT_NEAR(A[i][j], B[j][i], 1e-14);
        }
    }
}

TEST(Reconstruct, InnerProductAdjoint) {
    std::mt19937_64 rng(8);
    auto bank = random_bank(4, 3, 5, 5, rng);
    auto x = random_tensor({3, 9, 7}, rng);
    auto v = cross_correlate(x, bank, 2);
    auto z = random_tensor(v.shape(), rng);
    const Real lhs = inner(v, z);
    const Real rhs = inner(x, reconstruct(z, bank, 2));
    EXPECT_LE(std::abs(lhs - rhs), 1e-12 * std::max(1.0, std::abs(lhs)));
}

TEST(FilterGradient, MatchesDenseDerivative) {
    std::mt19937_64 rng(9);
    auto x = random_tensor({2, 4, 4}, rng);
    auto bank = random_bank(2, 2, 3, 3, rng);
    auto up = random_tensor(cross_correlate(x, bank, 1).shape(), rng);
    auto g = filter_gradient(x, up, 3, 3, 1);
    for (std::size_t i = 0; i < bank.weights().size(); ++i) {
        FilterBank e(2, 2, 3, 3);
        e.weights()[i] = 1;
        EXPECT_NEAR(g.weights()[i], inner(cross_correlate(x, e, 1), up), 1e-12);
    }
}

TEST(MaxPool, Examples) {
    EXPECT_EQ(max_pool(FeatureTensor({1, 2, 2}, {1, 2, 3, 4}), 2, 2, 0), FeatureTensor({1, 1, 1}, {4}));
    auto c = max_pool(FeatureTensor({2, 6, 6}, 1.25), 3, 2, 1);
    EXPECT_EQ(c.shape(), (Shape3{2, 3, 3}));
    for (Real v : c.data()) EXPECT_EQ(v, 1.25);
}

TEST(MaxPool, FrozenPaddedCase) {
    FeatureTensor x({1, 5, 5});
    for (std::size_t i = 0; i < 25; ++i) x[i] = static_cast<Real>(i % 7);
    EXPECT_EQ(max_pool(x, 3, 2, 1), FeatureTensor({1, 3, 3}, {6, 6, 4, 6, 6, 6, 6, 4, 5}));
}

TEST(MaxPool, RampPicksMaxCorner) {
    FeatureTensor x({1, 7, 7});
    for (std::size_t r = 0; r < 7; ++r)
        for (std::size_t c = 0; c < 7; ++c) x(0, r, c) = static_cast<Real>(r) * 10 + static_cast<Real>(c) - 100;
    auto y = max_pool(x, 3, 2, 1);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            const std::size_t r = std::min<std::size_t>(2 * i + 1, 6), c = std::min<std::size_t>(2 * j + 1, 6);
            EXPECT_EQ(y(0, i, j), x(0, r, c));
        }
}

TEST(MaxPool, UnpoolIsAdjoint) {
    std::mt19937_64 rng(10);
    auto x = random_tensor({3, 8, 8}, rng);
    PoolSwitches sw;
    PoolGeometry g{3, 2, 1};
    auto y = max_pool(x, g, &sw);
    auto u = random_tensor(y.shape(), rng);
    EXPECT_NEAR(inner(y, u), inner(x, max_unpool(u, sw)), 1e-12);
}

TEST(AvgPool, Examples) {
    EXPECT_EQ(avg_pool(FeatureTensor({1, 2, 2}, {1, 2, 3, 4}), 2, 2, 0), FeatureTensor({1, 1, 1}, {2.5}));
    auto c = avg_pool(FeatureTensor({1, 5, 5}, -0.5), 3, 2, 1);
    for (Real v : c.data()) EXPECT_DOUBLE_EQ(v, -0.5);
}

TEST(AvgPool, FrozenPaddedCase) {
    FeatureTensor x({1, 5, 5});
    for (std::size_t i = 0; i < 25; ++i) x[i] = static_cast<Real>(i % 7);
    const std::vector<Real> expected{3, 2.1666666666666665, 2.5, 3.5, 3.4444444444444446, 3, 2.25, 2, 3.5};
    auto y = avg_pool(x, 3, 2, 1);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(y[i], expected[i], 1e-15);
}

TEST(AvgPool, DenseMatrixAdjoint) {
    const PoolGeometry g{3, 2, 1};
    const Shape3 in{2, 5, 4};
    const Shape3 out = g.output_shape(in);
    auto A = dense_of([&](const FeatureTensor& e) { return avg_pool(e, g); }, in);
    auto B = dense_of([&](const FeatureTensor& e) { return avg_pool_adjoint(e, g, in); }, out);
    for (std::size_t i = 0; i < in.size(); ++i)
        for (std::size_t j = 0; j < out.size(); ++j) EXPECT_NEAR(A[i][j], B[j][i], 1e-15);
}

TEST(Norms, Examples) {
    FeatureTensor a({1, 1, 2}, {1, 2}), b({1, 1, 2}, {3, 4});
    EXPECT_EQ(inner(a, b), 11);
    EXPECT_EQ(l1_norm(FeatureTensor({1, 1, 2}, {1, -2})), 3);
    EXPECT_EQ(l2_norm(b), 5);
    EXPECT_EQ(l2_norm(FeatureTensor({2, 2, 2})), 0);
    EXPECT_THROW(inner(a, FeatureTensor({1, 2, 1}, {1, 2})), ShapeError);
}

TEST(Norms, CauchySchwarz) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
        auto a = random_tensor({2, 3, 3}, rng), b = random_tensor({2, 3, 3}, rng);
        EXPECT_LE(std::abs(inner(a, b)), l2_norm(a) * l2_norm(b) * (1 + 1e-14));
    }
}
