#include <gtest/gtest.h>

#include "ebssc/error.hpp"
#include "ebssc/network.hpp"
#include "helpers.hpp"

using namespace ebssc;
using ebssc::test::random_tensor;

namespace {

NetworkSpec one_block(BlockKind kind, std::size_t k = 1, std::size_t kernel = 1) {
    NetworkSpec s;
    s.input_shape = {1, 5, 5};
    s.blocks = {BlockSpec::conv(kind, k, 1, kernel, kernel / 2)};
    s.classifier = ClassifierKind::linear;
    s.classifier_block = 0;
    s.num_classes = 2;
    s.validate();
    return s;
}

NetworkSpec small_ebssc2() {
    VariantOptions o;
    o.input_shape = {1, 8, 8};
    o.num_classes = 3;
    o.width_scale = 0.25;
    o.dropout = 0;
    return make_variant("ebssc2", o);
}

} // namespace

TEST(Spec, VariantsValidateAndRoundTripText) {
    for (const auto& name : variant_names()) {
        VariantOptions o;
        o.width_scale = 0.125;
        auto s = make_variant(name, o);
        EXPECT_NO_THROW(s.validate()) << name;
        EXPECT_EQ(NetworkSpec::from_text(s.to_text()), s) << name;
    }
    EXPECT_THROW(make_variant("vgg16"), ConfigError);
}

TEST(Spec, DesignedShapes) {
    VariantOptions o;
    o.input_shape = {1, 28, 28};
    auto s = make_variant("ssc_ebc2", o);
    auto shapes = s.activation_shapes();
    EXPECT_EQ(shapes[1], (Shape3{32, 28, 28}));
    EXPECT_EQ(shapes[2], (Shape3{32, 14, 14}));
    EXPECT_EQ(s.code_shape(2), (Shape3{32, 14, 14}));
    auto lc7 = make_variant("relu_lc7");
    EXPECT_EQ(lc7.activation_shapes().back(), (Shape3{192, 8, 8}));
}

TEST(Build, SameSeedIsBitwiseIdentical) {
    auto s = make_variant("ssc_ebc2", {{1, 12, 12}, 10, 0.25, 0.1, 0.01});
    EXPECT_EQ(build(s, 5), build(s, 5));
    EXPECT_NE(build(s, 5), build(s, 6));
}

TEST(Build, FirstLayerVarianceMatchesFanIn) {
    auto p = build(make_variant("relu_lc7"), 1);
    const auto w = p.blocks[0].filters.weights();
    ASSERT_EQ(w.size(), 96u * 27u);
    Real m = 0, v = 0;
    for (Real x : w) m += x;
    m /= static_cast<Real>(w.size());
    for (Real x : w) v += (x - m) * (x - m);
    v /= static_cast<Real>(w.size() - 1);
    EXPECT_NEAR(v, 2.0 / 27.0, 0.1 * 2.0 / 27.0);
}

TEST(Build, ParameterViewsCoverEverything) {
    auto s = small_ebssc2();
    auto p = build(s, 2);
    std::size_t total = 0;
    for (const auto& v : parameter_views(p)) {
        total += v.values.size();
        if (v.nonnegative) {
            for (Real x : v.values) EXPECT_GE(x, 0);
        }
    }
    EXPECT_EQ(total, parameter_count(p));
    auto z = zeros_like(p);
    for (const auto& v : parameter_views(z))
        for (Real x : v.values) EXPECT_EQ(x, 0);
}

TEST(Forward, EvalModeIsDeterministic) {
    auto s = small_ebssc2();
    auto p = build(s, 3);
    std::mt19937_64 rng(4);
    auto x = random_tensor(s.input_shape, rng);
    EXPECT_EQ(forward(p, s, x).scores, forward(p, s, x).scores);
}

TEST(Forward, EqualClassParamsGiveEqualScores) {
    auto s = small_ebssc2();
    auto p = build(s, 3);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<Real> u(0, 0.2);
    for (auto& b : p.blocks) {
        if (!b.shrink) continue;
        const std::size_t m = b.shrink->map_size();
        for (std::size_t i = 0; i < m; ++i) {
            const Real wp = u(rng), wm = u(rng);
            for (std::size_t y = 0; y < b.shrink->num_classes; ++y) {
                b.shrink->w_plus[y * m + i] = wp;
                b.shrink->w_minus[y * m + i] = wm;
            }
        }
    }
    auto x = random_tensor(s.input_shape, rng);
    auto scores = forward(p, s, x).scores;
    for (Real v : scores) EXPECT_EQ(v, scores[0]);
}

TEST(Forward, CreluSnOutputHasUnitNorm) {
    auto s = one_block(BlockKind::crelu_sn, 4, 3);
    auto p = build(s, 7);
    std::mt19937_64 rng(8);
    auto r = forward(p, s, random_tensor(s.input_shape, rng));
    EXPECT_NEAR(l2_norm(r.traces[0].blocks[0].output), 1, 1e-14);
}

TEST(Forward, InputShapeMismatch) {
    auto s = small_ebssc2();
    auto p = build(s, 1);
    EXPECT_THROW(forward(p, s, FeatureTensor({1, 7, 8})), ShapeError);
}

TEST(Forward, TrainModeWithDropoutNeedsRng) {
    VariantOptions o;
    o.input_shape = {1, 8, 8};
    o.width_scale = 0.25;
    o.dropout = 0.3;
    auto s = make_variant("ssc_ebc2", o);
    auto p = build(s, 1);
    ForwardOptions fo;
    fo.mode = Mode::train;
    EXPECT_THROW(forward(p, s, FeatureTensor(s.input_shape), fo), ArgumentError);
}

TEST(Unroll, ZeroSweepsEqualsForward) {
    auto s = small_ebssc2();
    auto p = build(s, 9);
    std::mt19937_64 rng(10);
    auto x = random_tensor(s.input_shape, rng);
    auto fr = forward(p, s, x);
    for (std::size_t y = 0; y < s.num_classes; ++y) {
        auto u = unrolled_infer(p, s, x, y, 0);
        EXPECT_EQ(u.score, fr.scores[y]);
        for (std::size_t b = 0; b < s.blocks.size(); ++b) EXPECT_EQ(u.trace.blocks[b].code, fr.trace_for(y).blocks[b].code);
    }
}

TEST(Unroll, JointEnergyNondecreasing) {
    auto s = small_ebssc2();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<Real> u(0, 0.3), b(-0.1, 0.1);
    for (int inst = 0; inst < 10; ++inst) {
        auto p = build(s, 100 + inst);
        for (auto& bp : p.blocks) {
            if (!bp.shrink) continue;
            for (Real& w : bp.shrink->w_plus) w = u(rng);
            for (Real& w : bp.shrink->w_minus) w = u(rng);
            for (Real& o : bp.shrink->offset) o = b(rng);
        }
        auto r = unrolled_infer(p, s, random_tensor(s.input_shape, rng), inst % 3, 4);
        ASSERT_EQ(r.trace.joint_energy.size(), 5u);
        for (std::size_t t = 1; t < 5; ++t) EXPECT_GE(r.trace.joint_energy[t], r.trace.joint_energy[t - 1] - 1e-12);
    }
}

TEST(Unroll, Errors) {
    auto s = small_ebssc2();
    auto p = build(s, 1);
    EXPECT_THROW(unrolled_infer(p, s, FeatureTensor(s.input_shape), 0, 5), ArgumentError);
    VariantOptions o;
    o.input_shape = {1, 8, 8};
    o.width_scale = 0.25;
    EXPECT_THROW(coupled_range(make_variant("ssc_ebc2", o)), ArgumentError);
    EXPECT_EQ(coupled_range(s), (std::pair<std::size_t, std::size_t>{0, 2}));
}

TEST(Decode, DeltaFilterGivesThresholdedInput) {
    auto s = one_block(BlockKind::ssc);
    auto p = build(s, 1);
    p.blocks[0].filters.weights()[0] = 1;
    p.blocks[0].shrink->w_plus = {0.3};
    p.blocks[0].shrink->w_minus = {0.3};
    std::mt19937_64 rng(12);
    auto x = random_tensor(s.input_shape, rng);
    auto r = forward(p, s, x);
    auto img = decode(p, s, r.traces[0], 0);
    auto thr = shrink(x, ThresholdPair::symmetric(0.3));
    thr *= 1 / l2_norm(thr);
    EXPECT_LT(test::max_abs_diff(img.data(), thr.data()), 1e-14);
}

TEST(Decode, ZeroCodeGivesZeroImage) {
    auto s = small_ebssc2();
    auto p = build(s, 1);
    auto r = forward(p, s, FeatureTensor(s.input_shape, 0.5));
    auto img = decode_code(p, s, FeatureTensor(s.code_shape(2)), 2, &r.traces[0]);
    EXPECT_EQ(img.shape(), s.input_shape);
    EXPECT_EQ(l2_norm(img), 0);
}

TEST(Decode, MaxPoolWithoutSwitchesErrors) {
    VariantOptions o;
    o.input_shape = {1, 8, 8};
    o.width_scale = 0.25;
    auto s = make_variant("ssc_ebc2", o);
    auto p = build(s, 1);
    EXPECT_THROW(decode_code(p, s, FeatureTensor(s.code_shape(2), 1), 2, nullptr), ArgumentError);
    auto r = forward(p, s, FeatureTensor(s.input_shape, 0.5));
    EXPECT_NO_THROW(decode(p, s, r.trace_for(0), 2));
}

TEST(Decode, ZeroClassParamsGiveZeroBias) {
    auto s = small_ebssc2();
    auto p = build(s, 1);
    for (auto& b : p.blocks) {
        if (!b.shrink) continue;
        std::ranges::fill(b.shrink->w_plus, 0);
        std::ranges::fill(b.shrink->w_minus, 0);
        std::ranges::fill(b.shrink->offset, 0);
    }
    for (std::size_t y = 0; y < 3; ++y) EXPECT_EQ(l2_norm(decode_class_bias(p, s, y, 2)), 0);
}

TEST(ScoreGraph, ScoresMatchForward) {
    auto s = small_ebssc2();
    auto p = build(s, 13);
    std::mt19937_64 rng(14);
    auto x = random_tensor(s.input_shape, rng);
    ScoreGraph g(p, s, x, {});
    auto f = forward(p, s, x).scores;
    for (std::size_t y = 0; y < f.size(); ++y) EXPECT_NEAR(g.scores()[y], f[y], 1e-13);
    auto grads = zeros_like(p);
    std::vector<Real> zero(f.size(), 0);
    g.backward(zero, grads);
    for (const auto& v : parameter_views(grads))
        for (Real x : v.values) EXPECT_EQ(x, 0);
}
