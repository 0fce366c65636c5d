#include "ebssc/check.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "ebssc/checkpoint.hpp"
#include "ebssc/coder.hpp"
#include "ebssc/config.hpp"
#include "ebssc/conv.hpp"
#include "ebssc/energy.hpp"
#include "ebssc/error.hpp"
#include "ebssc/learn.hpp"
#include "ebssc/network.hpp"
#include "ebssc/oracle.hpp"
#include "ebssc/shrinkage.hpp"
#include "ebssc/text.hpp"

namespace ebssc {

namespace {

using Rng = std::mt19937_64;

Real uniform(Rng& r, Real lo, Real hi) { return std::uniform_real_distribution<Real>(lo, hi)(r); }
std::size_t pick(Rng& r, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(r);
}

FeatureTensor gaussian(const Shape3& s, Rng& r) {
    std::normal_distribution<Real> n(0, 1);
    FeatureTensor t(s);
    for (Real& v : t.data()) v = n(r);
    return t;
}

FilterBank gaussian_bank(std::size_t k, std::size_t c, std::size_t kh, std::size_t kw, Rng& r) {
    std::normal_distribution<Real> n(0, 1);
    FilterBank b(k, c, kh, kw);
    for (Real& w : b.weights()) w = n(r);
    return b;
}

Real rms(const FeatureTensor& t) { return l2_norm(t) / std::sqrt(static_cast<Real>(std::max<std::size_t>(1, t.size()))); }

// β⁺ anywhere in [−s, 2s], β⁻ ≥ −β⁺.
ThresholdPair random_proper(const Shape3& shape, Real s, bool per_element, Rng& r) {
    const std::size_t n = per_element ? shape.size() : shape.channels;
    std::vector<Real> plus(n), minus(n);
    for (std::size_t i = 0; i < n; ++i) {
        plus[i] = uniform(r, -s, 2 * s);
        minus[i] = -plus[i] + uniform(r, 0, 3 * s);
    }
    const auto layout = per_element ? ThresholdMap::Layout::per_element : ThresholdMap::Layout::per_channel;
    return {ThresholdMap(layout, std::move(plus)), ThresholdMap(layout, std::move(minus))};
}

Real rel_gap(Real a, Real b) {
    const Real den = std::max({std::abs(a), std::abs(b), Real{1e-12}});
    return std::abs(a - b) / den;
}

Real rel_diff(const FeatureTensor& a, const FeatureTensor& b) {
    return l2_norm(a - b) / std::max({l2_norm(a), l2_norm(b), Real{1e-300}});
}

CheckResult finish(std::string name, Real metric, Real tol, std::string detail = {}) {
    CheckResult c;
    c.name = std::move(name);
    c.metric = metric;
    c.tolerance = tol;
    c.passed = metric <= tol;
    c.detail = std::move(detail);
    return c;
}

void randomize_class_bias(ModelParams& p, Rng& r) {
    for (BlockParams& b : p.blocks) {
        if (!b.shrink) continue;
        for (Real& w : b.shrink->w_plus) w = uniform(r, 0.02, 0.3);
        for (Real& w : b.shrink->w_minus) w = uniform(r, 0.02, 0.3);
        for (Real& o : b.shrink->offset) o = uniform(r, -0.1, 0.1);
    }
}

NetworkSpec toy_spec(bool energy, BlockKind pool, std::size_t classes) {
    NetworkSpec s;
    s.input_shape = {1, 6, 6};
    s.num_classes = classes;
    s.blocks.push_back(BlockSpec::conv(BlockKind::ssc, 2, 1, 3, 1));
    s.blocks.push_back(BlockSpec::pool(pool, 2, 2, 0));
    if (energy) {
        s.blocks.push_back(BlockSpec::conv(BlockKind::ebssc, 3, 4, 3, 1, 0.25, BiasLayout::full));
        s.classifier = ClassifierKind::energy;
        s.classifier_block = 2;
    } else {
        s.blocks.push_back(BlockSpec::conv(BlockKind::ssc, 3, 4, 3, 1, 0.25));
        s.classifier = ClassifierKind::linear;
        s.classifier_block = 2;
    }
    s.validate();
    return s;
}

} // namespace

CheckResult check_closed_form(const CheckOptions& o) {
    Rng r(o.seed ^ 0x1);
    Real worst = 0;
    std::size_t below = 0;
    for (int inst = 0; inst < 50; ++inst) {
        const std::size_t h = pick(r, 4, 8), w = pick(r, 4, 8), k = pick(r, 1, 4), ks = pick(r, 2, 3);
        const std::size_t pad = pick(r, 0, 1);
        const FeatureTensor x = gaussian({1, h, w}, r);
        const FilterBank bank = gaussian_bank(k, 1, ks, ks, r);
        const FeatureTensor v = cross_correlate(x, bank, pad);
        const ThresholdPair t = random_proper(v.shape(), rms(v), inst % 2 == 1, r);
        const CodeResult cf = ssc_encode(x, bank, t, pad);
        oracle::PgaOptions po;
        po.iterations = 5000;
        po.tolerance = 1e-15;
        po.seed = o.seed + static_cast<std::uint64_t>(inst);
        const oracle::OracleReport rep = oracle::pga_ssc(x, bank, t, pad, po);
        const Real e_cf = threshold_energy(v, cf.code, t);
        const Real e_or = threshold_energy(v, rep.final_point, t);
        // The oracle may only approach the optimum from below.
        if (e_or > e_cf + 1e-12 * std::max(Real{1}, std::abs(e_cf))) ++below;
        worst = std::max(worst, rel_gap(e_cf, e_or));
    }
    auto c = finish("closed_form_vs_pga", below > 0 ? 1.0 : worst, 1e-5);
    c.detail = "max relative energy gap over 50 instances; oracle exceeded closed form " + std::to_string(below) + "x";
    return c;
}

CheckResult check_sphere_identities(const CheckOptions& o) {
    Rng r(o.seed ^ 0x2);
    std::size_t failures = 0, zeros = 0;
    for (int inst = 0; inst < 1000; ++inst) {
        const std::size_t c = pick(r, 1, 3), h = pick(r, 3, 6), k = pick(r, 1, 4);
        const FeatureTensor x = gaussian({c, h, h}, r);
        const FilterBank bank = gaussian_bank(k, c, 3, 3, r);
        const FeatureTensor v = cross_correlate(x, bank, 1);
        // every tenth draw thresholds everything away
        const Real scale = inst % 10 == 0 ? 1e3 * (1 + rms(v)) : rms(v);
        ThresholdPair t = random_proper(v.shape(), scale, inst % 2 == 0, r);
        if (inst % 10 == 0) t = ThresholdPair::symmetric(scale);
        const CodeResult res = ssc_encode(x, bank, t, 1);
        const Real n = l2_norm(res.code);
        if (n == 0) ++zeros;
        const bool unit = n == 0 || std::abs(n - 1) <= 4 * std::numeric_limits<Real>::epsilon();
        Real ss = 0;
        for (Real a : res.pre_projection.data()) ss += a * a;
        const Real lambda = 0.5 * std::sqrt(ss);
        const bool lam = std::abs(res.lambda_star - lambda) <= 4 * std::numeric_limits<Real>::epsilon() * lambda;
        bool sign = true;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const Real a = res.code[i], b = res.pre_projection[i];
            sign = sign && ((a > 0) == (b > 0)) && ((a < 0) == (b < 0));
        }
        if (!unit || !lam || !sign) ++failures;
    }
    return finish("sphere_identities", static_cast<Real>(failures), 0,
                  "violations over 1000 draws (" + std::to_string(zeros) + " zero codes)");
}

CheckResult check_lsq_equivalence(const CheckOptions& o) {
    Rng r(o.seed ^ 0x3);
    std::size_t good = 0, degenerate = 0, attempts = 0;
    Real worst = 0;
    while (good < 20 && attempts < 400) {
        ++attempts;
        const std::size_t h = pick(r, 4, 5), k = pick(r, 1, 2);
        const FeatureTensor x = gaussian({1, h, h}, r);
        const FilterBank bank = gaussian_bank(k, 1, 3, 3, r);
        const Real beta = uniform(r, 0.05, 0.6) * l2_norm(x);
        oracle::IstaOptions io;
        io.iterations = 200000;
        io.tolerance = 1e-15;
        const auto ista = oracle::ista_csc(x, bank, beta, 0, io);
        const auto unit = oracle::unit_recon_solve(x, bank, beta, 0);
        LsqScaling s;
        try {
            s = unit_scale_to_lsq(unit.final_point, x, bank, beta, 0);
        } catch (const DegenerateScalingError&) {
            ++degenerate;
            continue;
        }
        const FeatureTensor ref = reconstruct(ista.final_point, bank, 0);
        if (l2_norm(ref) == 0) {
            ++degenerate;
            continue;
        }
        worst = std::max(worst, rel_diff(s.reconstruction, ref));
        ++good;
    }
    if (good < 20) return finish("lsq_equivalence", 1, 0, "only " + std::to_string(good) + " nondegenerate instances");
    return finish("lsq_equivalence", worst, 1e-4,
                  "max relative reconstruction gap, 20 instances, " + std::to_string(degenerate) + " degenerate skipped");
}

CheckResult check_reparam_identity(const CheckOptions& o) {
    Rng r(o.seed ^ 0x4);
    Real worst = 0;
    for (int inst = 0; inst < 200; ++inst) {
        const std::size_t c = pick(r, 1, 3), h = pick(r, 4, 7), k = pick(r, 1, 4), classes = pick(r, 2, 5);
        const std::size_t pad = pick(r, 0, 1);
        const FeatureTensor x = gaussian({c, h, h}, r);
        const FilterBank bank = gaussian_bank(k, c, 3, 3, r);
        const Shape3 zs = oracle::code_shape_for(x.shape(), bank, pad);
        const BiasLayout layout = inst % 2 ? BiasLayout::full : BiasLayout::per_channel;
        std::optional<PoolGeometry> pool;
        if (inst % 4 == 1) pool = PoolGeometry{2, 2, 0};
        ClassBiasParams p = ClassBiasParams::uniform(classes, zs, layout, 0, 0, pool);
        for (Real& w : p.w_plus) w = uniform(r, 0, 1);
        for (Real& w : p.w_minus) w = uniform(r, 0, 1);
        for (Real& b : p.offset) b = uniform(r, -1, 1);
        const Real beta = uniform(r, 0, 2);
        FeatureTensor z = gaussian(zs, r);
        z *= uniform(r, 0.1, 1) / l2_norm(z);
        const std::size_t y = pick(r, 0, classes - 1);
        const Real lhs = e_reparam(x, y, z, bank, p, pad);
        const Real rhs = e_code(x, z, bank, beta, pad) + e_class(y, z, to_split_classifier(p, beta));
        worst = std::max(worst, std::abs(lhs - rhs) / std::max(Real{1}, std::abs(rhs)));
    }
    return finish("reparam_identity", worst, 1e-10, "max relative difference over 200 draws");
}

CheckResult check_reductions(const CheckOptions& o) {
    Rng r(o.seed ^ 0x5);
    std::size_t mismatches = 0;
    for (int inst = 0; inst < 200; ++inst) {
        const Shape3 s{pick(r, 1, 4), pick(r, 2, 6), pick(r, 2, 6)};
        const FeatureTensor v = gaussian(s, r);
        const ThresholdPair t = random_proper(s, 1, inst % 2 == 0, r);
        const FeatureTensor a = shrink(v, t);
        const std::size_t plane = s.plane();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const Real bp = t.plus.at(i, plane), bm = t.minus.at(i, plane);
            const Real two = std::max(v[i] - bp, Real{0}) - std::max(-(v[i] + bm), Real{0});
            if (a[i] != two) ++mismatches;
        }
        if (shrink(v, ThresholdPair::relu()) != relu(v)) ++mismatches;
        const FeatureTensor split = crelu_split(v);
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (split[i] != std::max(v[i], Real{0})) ++mismatches;
        }
        if (crelu_merge(split) != v) ++mismatches;
    }

    // One-block networks sharing filters: zero-threshold SSC against CReLU+SN, CReLU against ReLU.
    for (int inst = 0; inst < 20; ++inst) {
        const std::size_t c = pick(r, 1, 3), k = pick(r, 1, 4);
        auto net = [&](BlockKind kind) {
            NetworkSpec s;
            s.input_shape = {c, 6, 6};
            s.num_classes = 2;
            s.init_beta = 0;
            s.blocks.push_back(BlockSpec::conv(kind, k, c, 3, 1));
            s.classifier_block = 0;
            return s;
        };
        const FeatureTensor x = gaussian({c, 6, 6}, r);
        const FilterBank bank = gaussian_bank(k, c, 3, 3, r);
        std::vector<FeatureTensor> outs;
        for (BlockKind kind : {BlockKind::ssc, BlockKind::crelu_sn, BlockKind::crelu, BlockKind::relu}) {
            const NetworkSpec s = net(kind);
            ModelParams p = build(s, 1);
            p.blocks[0].filters = bank;
            outs.push_back(forward(p, s, x).traces[0].blocks[0].output);
        }
        if (outs[0] != outs[1]) ++mismatches;
        for (std::size_t i = 0; i < outs[3].size(); ++i) {
            if (outs[2][i] != outs[3][i]) ++mismatches;
        }
    }
    return finish("two_relu_and_reductions", static_cast<Real>(mismatches), 0, "inexact elements");
}

CheckResult check_gradients(const CheckOptions& o) {
    Rng r(o.seed ^ 0x6);
    Real worst = 0;
    std::string worst_name;
    struct Case {
        bool energy;
        BlockKind pool;
        std::size_t unroll;
    };
    const Case cases[] = {{true, BlockKind::avgpool, 0}, {true, BlockKind::avgpool, 2},
                          {true, BlockKind::maxpool, 0}, {false, BlockKind::maxpool, 0}};
    for (const Case& cs : cases) {
        const NetworkSpec spec = toy_spec(cs.energy, cs.pool, 3);
        ModelParams params = build(spec, o.seed);
        randomize_class_bias(params, r);
        for (Real& b : params.linear.bias) b = uniform(r, -0.5, 0.5);
        std::vector<FeatureTensor> xs{gaussian(spec.input_shape, r), gaussian(spec.input_shape, r)};
        Dataset d;
        d.images = xs;
        d.labels = {0, 2};
        const std::size_t idx[] = {0, 1};
        const Batch batch = make_batch(d, idx);
        const std::uint64_t mask_seed = o.seed + 17;
        Rng mask_rng;
        LossOptions lo;
        lo.alpha = 1e-2;
        lo.unroll = cs.unroll;
        lo.mode = Mode::train;
        lo.rng = &mask_rng;

        mask_rng.seed(mask_seed);
        const GradientResult g = backward(params, spec, batch, lo);
        ModelParams grads = g.grads;
        auto gviews = parameter_views(grads);
        auto pviews = parameter_views(params);
        for (std::size_t j = 0; j < pviews.size(); ++j) {
            std::vector<Real> base(pviews[j].values.begin(), pviews[j].values.end());
            const auto fn = [&](std::span<const Real> p) {
                std::copy(p.begin(), p.end(), pviews[j].values.begin());
                mask_rng.seed(mask_seed);
                return loss(params, spec, batch, lo).loss;
            };
            const auto fd = oracle::finite_diff(fn, base, 1e-6);
            std::copy(base.begin(), base.end(), pviews[j].values.begin());
            Real num = 0, den = 0;
            for (std::size_t k = 0; k < fd.size(); ++k) {
                const Real a = gviews[j].values[k];
                num += (a - fd[k]) * (a - fd[k]);
                den = std::max({den, a * a, fd[k] * fd[k]});
            }
            const Real norm_fd = std::sqrt(std::inner_product(fd.begin(), fd.end(), fd.begin(), Real{0}));
            const Real err = std::sqrt(num) / std::max({norm_fd, std::sqrt(den), Real{1e-8}});
            if (err > worst) {
                worst = err;
                worst_name = pviews[j].name;
            }
        }
    }
    return finish("gradient_finite_difference", worst, 1e-4, "max relative error per parameter group (worst: " +
                                                               worst_name + ")");
}

CheckResult check_properness(const CheckOptions& o) {
    Rng r(o.seed ^ 0x7);
    const NetworkSpec spec = toy_spec(true, BlockKind::avgpool, 4);
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    ModelParams params = build(spec, o.seed);
    OptimizerState st = OptimizerState::for_params(params);
    std::normal_distribution<Real> n(0, 1);
    std::size_t violations = 0;
    for (int step = 0; step < 1000; ++step) {
        ModelParams g = zeros_like(params);
        for (ParamView& v : parameter_views(g)) {
            // biased towards shrinking ŵ± so the projection is exercised
            for (Real& x : v.values) x = n(r) + (v.nonnegative ? 0.5 : 0);
        }
        adam_step(params, g, st, cfg);
        for (const BlockParams& b : params.blocks) {
            if (!b.shrink) continue;
            for (std::size_t y = 0; y < b.shrink->num_classes; ++y) {
                const ThresholdPair t = class_thresholds(*b.shrink, y);
                const Shape3 s = b.shrink->code_shape;
                for (std::size_t i = 0; i < s.size(); ++i) {
                    if (t.plus.at(i, s.plane()) < -t.minus.at(i, s.plane())) ++violations;
                }
            }
        }
    }
    return finish("properness_after_adam", static_cast<Real>(violations), 0, "violations over 1000 projected steps");
}

CheckResult check_unroll_monotone(const CheckOptions& o) {
    Rng r(o.seed ^ 0x8);
    Real worst = 0;
    for (int inst = 0; inst < 20; ++inst) {
        VariantOptions vo;
        vo.input_shape = {1, 8, 8};
        vo.num_classes = 3;
        vo.width_scale = 0.5;
        NetworkSpec spec = make_variant("ebssc2", vo);
        ModelParams params = build(spec, o.seed + static_cast<std::uint64_t>(inst));
        randomize_class_bias(params, r);
        const FeatureTensor x = gaussian(spec.input_shape, r);
        const auto res = unrolled_infer(params, spec, x, pick(r, 0, 2), 4);
        const auto& j = res.trace.joint_energy;
        for (std::size_t t = 1; t < j.size(); ++t) {
            const Real drop = (j[t - 1] - j[t]) / std::max(Real{1}, std::abs(j[t - 1]));
            worst = std::max(worst, drop);
        }
    }
    return finish("unroll_monotone", worst, 1e-10, "largest relative energy decrease over 20 instances x 4 sweeps");
}

CheckResult check_adjoints(const CheckOptions& o) {
    Rng r(o.seed ^ 0x9);
    Real worst = 0;
    for (int inst = 0; inst < 30; ++inst) {
        const std::size_t c = pick(r, 1, 4), h = pick(r, 4, 9), w = pick(r, 4, 9), k = pick(r, 1, 5);
        const std::size_t ks = pick(r, 1, 3), pad = pick(r, 0, ks - 1);
        const FeatureTensor x = gaussian({c, h, w}, r);
        const FilterBank bank = gaussian_bank(k, c, ks, ks, r);
        const FeatureTensor z = gaussian(oracle::code_shape_for(x.shape(), bank, pad), r);
        worst = std::max(worst, rel_gap(inner(cross_correlate(x, bank, pad), z), inner(x, reconstruct(z, bank, pad))));

        const std::size_t win = pick(r, 2, 3);
        const PoolGeometry g{win, pick(r, 1, 2), pick(r, 0, win - 1)};
        const FeatureTensor u = gaussian(g.output_shape(x.shape()), r);
        worst = std::max(worst, rel_gap(inner(avg_pool(x, g), u), inner(x, avg_pool_adjoint(u, g, x.shape()))));
    }
    return finish("adjointness", worst, 1e-6, "max relative inner-product gap");
}

CheckResult check_round_trips(const CheckOptions& o) {
    std::size_t failures = 0;
    std::vector<std::string> notes;

    VariantOptions vo;
    vo.input_shape = {1, 8, 8};
    vo.num_classes = 4;
    vo.width_scale = 0.25;
    const NetworkSpec spec = make_variant("ebssc2", vo);
    TrainConfig cfg;
    cfg.seed = o.seed;
    TrainState st = initial_state(spec, cfg);
    Rng r(o.seed ^ 0xa);
    randomize_class_bias(st.params, r);
    for (auto& m : st.optimizer.first_moment) for (Real& v : m) v = uniform(r, -1, 1);
    st.optimizer.step = 7;
    st.epoch = 3;
    st.iteration = 99;
    st.rng.discard(12345);
    Whitening wh;
    wh.mean.assign(64, 0.25);
    wh.matrix.assign(64 * 64, -0.5);
    const Checkpoint ck = make_checkpoint(spec, st, RunConfig{}.to_text(), wh);
    const auto bytes = encode_checkpoint(ck);
    const Checkpoint back = decode_checkpoint(bytes);
    if (!(back == ck)) ++failures, notes.push_back("checkpoint value mismatch");
    if (encode_checkpoint(back) != bytes) ++failures, notes.push_back("checkpoint bytes differ");
    TrainState st2 = restore_state(back);
    if (st2.rng() != st.rng()) ++failures, notes.push_back("generator state differs");

    auto corrupted = bytes;
    corrupted[corrupted.size() / 2] ^= 0x40;
    try {
        decode_checkpoint(corrupted);
        ++failures, notes.push_back("corruption undetected");
    } catch (const ChecksumError&) {
    }
    auto v2 = bytes;
    v2[4] = 2;
    try {
        decode_checkpoint(v2);
        ++failures, notes.push_back("version 2 accepted");
    } catch (const UnsupportedVersionError&) {
    }

    RunConfig rc;
    rc.variant = "ssc_lc7";
    rc.train.learning_rate = 0.1 + 0.2;  // not exactly representable in short decimal form
    rc.train.unroll_T = 2;
    rc.whitening = WhiteningMode::zca;
    rc.augment_flip = true;
    rc.crop_pad = 4;
    for (const RunConfig& c : {RunConfig{}, rc}) {
        const std::string text = c.to_text();
        const RunConfig parsed = RunConfig::parse(text);
        if (!(parsed == c)) ++failures, notes.push_back("config value mismatch");
        if (parsed.to_text() != text) ++failures, notes.push_back("config text not a fixed point");
    }
    if (NetworkSpec::from_text(spec.to_text()) != spec) ++failures, notes.push_back("network text mismatch");

    std::string detail = "failures";
    for (const auto& n : notes) detail += "; " + n;
    return finish("format_round_trips", static_cast<Real>(failures), 0, detail);
}

CheckResult check_oracle_self(const CheckOptions& o) {
    Rng r(o.seed ^ 0xb);
    std::size_t failures = 0;
    // Orthonormal dictionary: minimizer is shrink_{β/2}(x).
    {
        FilterBank id(2, 2, 1, 1);
        id(0, 0, 0, 0) = 1;
        id(1, 1, 0, 0) = 1;
        const FeatureTensor x({2, 1, 1}, {1, 0});
        const auto rep = oracle::ista_csc(x, id, 1, 0);
        if (std::abs(rep.final_point[0] - 0.5) > 1e-9 || rep.final_point[1] != 0) ++failures;
    }
    for (int inst = 0; inst < 100; ++inst) {
        const FeatureTensor x = gaussian({1, 5, 5}, r);
        FilterBank bank = gaussian_bank(pick(r, 1, 3), 1, 3, 3, r);
        // the last link of the bound chain assumes unit-norm filters
        for (std::size_t k = 0; k < bank.num_filters(); ++k) {
            const Real n = l2_norm(bank.filter(k));
            for (std::size_t i = 0; i < bank.filter_size(); ++i) bank.weights()[k * bank.filter_size() + i] /= n;
        }
        oracle::IstaOptions io;
        io.iterations = 200;
        const auto rep = oracle::ista_csc(x, bank, uniform(r, 0.1, 2), 1, io);
        for (std::size_t t = 1; t < rep.objective_trace.size(); ++t) {
            if (rep.objective_trace[t] > rep.objective_trace[t - 1] + 1e-9) ++failures;
        }
        const auto b = oracle::bound_check(bank, gaussian(oracle::code_shape_for(x.shape(), bank, 1), r), 1);
        if (!b.triangle_holds || !b.young_holds || !b.dimension_holds) ++failures;
    }
    return finish("oracle_self_checks", static_cast<Real>(failures), 0, "ISTA monotonicity and bound-chain failures");
}

std::vector<NamedCheck> oracle_suite() {
    return {{"closed_form_vs_pga", check_closed_form},
            {"sphere_identities", check_sphere_identities},
            {"lsq_equivalence", check_lsq_equivalence},
            {"reparam_identity", check_reparam_identity},
            {"two_relu_and_reductions", check_reductions},
            {"gradient_finite_difference", check_gradients},
            {"properness_after_adam", check_properness},
            {"unroll_monotone", check_unroll_monotone},
            {"adjointness", check_adjoints},
            {"format_round_trips", check_round_trips},
            {"oracle_self_checks", check_oracle_self}};
}

bool run_oracle_suite(std::ostream& out, const CheckOptions& o) {
    bool all = true;
    char line[160];
    std::snprintf(line, sizeof line, "%-28s %-6s %12s %12s %8s\n", "check", "status", "metric", "tolerance", "seconds");
    out << line;
    for (const NamedCheck& c : oracle_suite()) {
        const auto t0 = std::chrono::steady_clock::now();
        CheckResult res;
        try {
            res = c.run(o);
        } catch (const std::exception& e) {
            res.name = c.name;
            res.passed = false;
            res.metric = std::numeric_limits<Real>::infinity();
            res.detail = std::string("exception: ") + e.what();
        }
        res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        all = all && res.passed;
        std::snprintf(line, sizeof line, "%-28s %-6s %12.3e %12.3e %8.2f  ", res.name.c_str(),
                      res.passed ? "PASS" : "FAIL", res.metric, res.tolerance, res.seconds);
        out << line << res.detail << "\n";
        out.flush();
    }
    out << (all ? "all checks passed\n" : "some checks FAILED\n");
    return all;
}

} // namespace ebssc
