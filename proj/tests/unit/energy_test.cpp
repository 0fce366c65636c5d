#include <gtest/gtest.h>

#include "ebssc/energy.hpp"
#include "ebssc/error.hpp"
#include "helpers.hpp"

using namespace ebssc;
using ebssc::test::random_bank;
using ebssc::test::random_tensor;

namespace {

SplitClassifier random_classifier(std::size_t classes, Shape3 s, std::mt19937_64& rng) {
    std::normal_distribution<Real> n(0, 1);
    SplitClassifier c{classes, s, std::nullopt, std::vector<Real>(classes * s.size()),
                      std::vector<Real>(classes * s.size())};
    for (Real& w : c.w_plus) w = n(rng);
    for (Real& w : c.w_minus) w = n(rng);
    return c;
}

FeatureTensor unit(FeatureTensor z) {
    z *= 1 / l2_norm(z);
    return z;
}

} // namespace

TEST(ECode, Examples) {
    std::mt19937_64 rng(1);
    auto x = random_tensor({1, 4, 4}, rng);
    auto bank = random_bank(2, 1, 3, 3, rng);
    EXPECT_EQ(e_code(x, FeatureTensor({2, 4, 4}), bank, 0.3, 1), 0);
    EXPECT_DOUBLE_EQ(e_code(FeatureTensor({1, 1, 2}, {1, 0}), FeatureTensor({1, 1, 2}, {1, 0}),
                            FilterBank(1, 1, 1, 1, {1}), 0.5, 0),
                     0.5);
}

TEST(ECode, NormalizedResponseBeatsRandomCodes) {
    std::mt19937_64 rng(2);
    auto x = random_tensor({1, 5, 5}, rng);
    auto bank = random_bank(2, 1, 3, 3, rng);
    auto best = e_code(x, unit(cross_correlate(x, bank, 1)), bank, 0, 1);
    EXPECT_GT(best, 0);
    for (int i = 0; i < 10000; ++i) EXPECT_LE(e_code(x, unit(random_tensor({2, 5, 5}, rng)), bank, 0, 1), best + 1e-12);
}

TEST(ECode, RejectsCodesOutsideBall) {
    FeatureTensor z({1, 1, 2}, {1, 1});
    EXPECT_THROW(e_code(FeatureTensor({1, 1, 2}), z, FilterBank(1, 1, 1, 1, {1}), 0, 0), ArgumentError);
}

TEST(EClass, Examples) {
    std::mt19937_64 rng(3);
    const Shape3 s{2, 3, 3};
    SplitClassifier zero{3, s, std::nullopt, std::vector<Real>(54), std::vector<Real>(54)};
    EXPECT_EQ(e_class(1, unit(random_tensor(s, rng)), zero), 0);
    zero.w_minus.pop_back();
    EXPECT_THROW(e_class(1, unit(random_tensor(s, rng)), zero), ShapeError);

    auto c = random_classifier(3, s, rng);
    auto z = random_tensor(s, rng);
    for (Real& v : z.data()) v = std::abs(v);
    Real plus_only = 0;
    for (std::size_t i = 0; i < z.size(); ++i) plus_only += c.w_plus[2 * s.size() + i] * z[i];
    EXPECT_NEAR(e_class(2, z, c), plus_only, 1e-12);
}

TEST(EClass, ContrastReversalSwapsRoles) {
    std::mt19937_64 rng(4);
    const Shape3 s{2, 3, 3};
    auto c = random_classifier(2, s, rng);
    auto swapped = c;
    std::swap(swapped.w_plus, swapped.w_minus);
    for (Real& w : swapped.w_plus) w = -w;
    for (Real& w : swapped.w_minus) w = -w;
    for (int i = 0; i < 100; ++i) {
        auto z = random_tensor(s, rng);
        EXPECT_NEAR(e_class(1, -1.0 * z, c), e_class(1, z, swapped), 1e-12);
    }
}

TEST(EnergyBreakdown, SumsTerms) {
    std::mt19937_64 rng(5);
    auto x = random_tensor({1, 4, 4}, rng);
    auto bank = random_bank(2, 1, 3, 3, rng);
    auto z = unit(random_tensor({2, 4, 4}, rng));
    auto c = random_classifier(3, z.shape(), rng);
    auto e = energy_breakdown(x, 1, z, bank, 0.2, c, 1);
    EXPECT_DOUBLE_EQ(e.e_code, e_code(x, z, bank, 0.2, 1));
    EXPECT_DOUBLE_EQ(e.e_class, e_class(1, z, c));
    EXPECT_DOUBLE_EQ(e.e_total, e.e_code + e.e_class);
    EXPECT_DOUBLE_EQ(e.l1_of_code, l1_norm(z));
    EXPECT_NEAR(e.recon_inner, inner(x, reconstruct(z, bank, 1)), 1e-14);
}

TEST(EReparam, Frozen) {
    FeatureTensor x({1, 3, 4});
    for (std::size_t i = 0; i < 12; ++i) x[i] = (static_cast<Real>(i) - 5.5) / 4;
    FilterBank bank(2, 1, 2, 2, {1, -1, 0.5, 2, 0, 1, -1.5, 0.25});
    FeatureTensor z({2, 4, 5});
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = (static_cast<Real>(i % 5) - 2) / 3;
    z = unit(z);
    auto p = ClassBiasParams::uniform(2, {2, 4, 5}, BiasLayout::per_channel, 0, 0);
    p.w_plus = {0.2, 0, 0.05, 0.4};
    p.w_minus = {0.1, 0.3, 0, 0.25};
    p.offset = {0.15, -0.05};
    EXPECT_NEAR(e_reparam(x, 1, z, bank, p, 1), 0.004192627457811904, 1e-15);
}

TEST(EReparam, ZeroCodeAndSymmetricReduction) {
    std::mt19937_64 rng(6);
    auto x = random_tensor({1, 5, 5}, rng);
    auto bank = random_bank(3, 1, 3, 3, rng);
    auto p = ClassBiasParams::uniform(2, {3, 5, 5}, BiasLayout::full, 0.25, 0);
    EXPECT_EQ(e_reparam(x, 0, FeatureTensor({3, 5, 5}), bank, p, 1), 0);
    for (int i = 0; i < 20; ++i) {
        auto z = unit(random_tensor({3, 5, 5}, rng));
        EXPECT_NEAR(e_reparam(x, 1, z, bank, p, 1), e_code(x, z, bank, 0.25, 1), 1e-12);
    }
}

TEST(EReparam, EqualsCodePlusClassUnderMapping) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<Real> u(0, 1), b(-0.5, 0.5);
    auto x = random_tensor({1, 6, 6}, rng);
    auto bank = random_bank(2, 1, 3, 3, rng);
    for (auto pooling : {std::optional<PoolGeometry>{}, std::optional<PoolGeometry>{PoolGeometry{3, 2, 1}}}) {
        auto p = ClassBiasParams::uniform(3, {2, 6, 6}, BiasLayout::full, 0, 0, pooling);
        for (Real& w : p.w_plus) w = u(rng);
        for (Real& w : p.w_minus) w = u(rng);
        for (Real& o : p.offset) o = b(rng);
        for (Real beta : {0.0, 0.3}) {
            auto c = to_split_classifier(p, beta);
            for (std::size_t y = 0; y < 3; ++y) {
                auto z = unit(random_tensor({2, 6, 6}, rng));
                const Real lhs = e_reparam(x, y, z, bank, p, 1);
                const Real rhs = e_code(x, z, bank, beta, 1) + e_class(y, z, c);
                EXPECT_NEAR(lhs, rhs, 1e-12);
            }
        }
    }
}

TEST(EReparam, EncoderMaximizesIt) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<Real> u(0, 0.5), b(-0.2, 0.2);
    auto x = random_tensor({1, 5, 5}, rng);
    auto bank = random_bank(2, 1, 3, 3, rng);
    auto p = ClassBiasParams::uniform(2, {2, 5, 5}, BiasLayout::per_channel, 0, 0);
    for (Real& w : p.w_plus) w = u(rng);
    for (Real& w : p.w_minus) w = u(rng);
    for (Real& o : p.offset) o = b(rng);
    const Real best = e_reparam(x, 1, ebssc_encode(x, bank, p, 1, 1).code, bank, p, 1);
    for (int i = 0; i < 5000; ++i) EXPECT_LE(e_reparam(x, 1, unit(random_tensor({2, 5, 5}, rng)), bank, p, 1), best + 1e-12);
}

TEST(LsqObjective, Examples) {
    std::mt19937_64 rng(9);
    auto x = random_tensor({1, 4, 4}, rng);
    auto bank = random_bank(2, 1, 3, 3, rng);
    EXPECT_NEAR(lsq_objective(x, FeatureTensor({2, 4, 4}), bank, 0.7, 1), inner(x, x), 1e-12);
    auto z = random_tensor({2, 4, 4}, rng);
    EXPECT_NEAR(lsq_objective(reconstruct(z, bank, 1), z, bank, 0, 1), 0, 1e-20);
}
