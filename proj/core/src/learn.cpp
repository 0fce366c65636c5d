#include "ebssc/learn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ebssc/error.hpp"
#include "ebssc/text.hpp"

namespace ebssc {

namespace {

Real regularizer(ModelParams& params, Real alpha) {
    if (alpha == 0) return 0;
    Real sq = 0;
    for (const ParamView& v : parameter_views(params)) {
        if (!v.regularized) continue;
        for (Real w : v.values) sq += w * w;
    }
    return alpha / 2 * sq;
}

std::size_t argmax_first(std::span<const Real> s) {
    return static_cast<std::size_t>(std::distance(s.begin(), std::max_element(s.begin(), s.end())));
}

ForwardOptions forward_options(const LossOptions& o) {
    ForwardOptions f;
    f.mode = o.mode;
    f.unroll = o.unroll;
    f.rng = o.rng;
    f.keep_trace = false;
    return f;
}

} // namespace

void TrainConfig::validate() const {
    if (!(alpha >= 0)) throw ArgumentError("alpha must be >= 0");
    if (!(learning_rate > 0) || !(adam_eps > 0)) throw ArgumentError("learning_rate and adam_eps must be positive");
    if (!(adam_beta1 > 0 && adam_beta1 < 1) || !(adam_beta2 > 0 && adam_beta2 < 1)) {
        throw ArgumentError("adam_beta1 and adam_beta2 must lie in (0,1)");
    }
    if (batch_size == 0) throw ArgumentError("batch_size must be positive");
    if (!(dropout >= 0 && dropout < 1)) throw ArgumentError("dropout must lie in [0,1)");
    if (unroll_T > 4) throw ArgumentError("unroll_T must lie in [0,4]");
}

OptimizerState OptimizerState::for_params(const ModelParams& params) {
    OptimizerState s;
    for (const ParamView& v : parameter_views(const_cast<ModelParams&>(params))) {
        s.first_moment.emplace_back(v.values.size(), 0);
        s.second_moment.emplace_back(v.values.size(), 0);
    }
    return s;
}

Batch make_batch(const Dataset& d, std::span<const std::size_t> indices) {
    Batch b;
    for (std::size_t i : indices) {
        if (i >= d.size()) throw ArgumentError("batch index " + std::to_string(i) + " out of range");
        b.images.push_back(&d.images[i]);
        b.labels.push_back(d.labels[i]);
    }
    return b;
}

Real softmax_cross_entropy(std::span<const Real> scores, std::size_t label, std::span<Real> dscores) {
    if (label >= scores.size()) throw ArgumentError("label " + std::to_string(label) + " has no score");
    const Real m = *std::max_element(scores.begin(), scores.end());
    Real z = 0;
    for (Real s : scores) z += std::exp(s - m);
    const Real lse = m + std::log(z);
    if (!dscores.empty()) {
        for (std::size_t i = 0; i < scores.size(); ++i) dscores[i] = std::exp(scores[i] - lse);
        dscores[label] -= 1;
    }
    return lse - scores[label];
}

LossResult loss(const ModelParams& params, const NetworkSpec& spec, const Batch& batch, const LossOptions& options) {
    if (batch.size() == 0) throw ArgumentError("loss needs a nonempty batch");
    LossResult r;
    const ForwardOptions fo = forward_options(options);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        ForwardResult f = forward(params, spec, *batch.images[i], fo);
        r.data_term += softmax_cross_entropy(f.scores, batch.labels[i], {});
        if (argmax_first(f.scores) != batch.labels[i]) ++r.errors;
        r.scores.push_back(std::move(f.scores));
    }
    r.data_term /= static_cast<Real>(batch.size());
    r.regularizer = regularizer(const_cast<ModelParams&>(params), options.alpha);
    r.loss = r.data_term + r.regularizer;
    return r;
}

GradientResult backward(const ModelParams& params, const NetworkSpec& spec, const Batch& batch,
                        const LossOptions& options) {
    if (batch.size() == 0) throw ArgumentError("backward needs a nonempty batch");
    GradientResult g{{}, zeros_like(params)};
    const ForwardOptions fo = forward_options(options);
    const Real inv_n = 1 / static_cast<Real>(batch.size());
    std::vector<Real> ds(spec.num_classes);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        ScoreGraph graph(params, spec, *batch.images[i], fo);
        const auto& s = graph.scores();
        g.value.data_term += softmax_cross_entropy(s, batch.labels[i], ds);
        if (argmax_first(s) != batch.labels[i]) ++g.value.errors;
        g.value.scores.push_back(s);
        for (Real& d : ds) d *= inv_n;
        graph.backward(ds, g.grads);
    }
    g.value.data_term *= inv_n;
    g.value.regularizer = regularizer(const_cast<ModelParams&>(params), options.alpha);
    g.value.loss = g.value.data_term + g.value.regularizer;
    if (options.alpha != 0) {
        auto pv = parameter_views(const_cast<ModelParams&>(params));
        auto gv = parameter_views(g.grads);
        for (std::size_t j = 0; j < pv.size(); ++j) {
            if (!pv[j].regularized) continue;
            for (std::size_t k = 0; k < pv[j].values.size(); ++k) gv[j].values[k] += options.alpha * pv[j].values[k];
        }
    }
    return g;
}

void project_nonneg(ClassBiasParams& p) {
    for (Real& w : p.w_plus) w = std::max(w, Real{0});
    for (Real& w : p.w_minus) w = std::max(w, Real{0});
}

void project_nonneg(ModelParams& params) {
    for (BlockParams& b : params.blocks) {
        if (b.shrink) project_nonneg(*b.shrink);
    }
}

void adam_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, const TrainConfig& cfg) {
    auto pv = parameter_views(params);
    auto gv = parameter_views(const_cast<ModelParams&>(grads));
    if (gv.size() != pv.size() || state.first_moment.size() != pv.size()) {
        throw ShapeError("adam_step: parameter, gradient and optimizer layouts differ");
    }
    ++state.step;
    const Real t = static_cast<Real>(state.step);
    const Real c1 = 1 - std::pow(cfg.adam_beta1, t);
    const Real c2 = 1 - std::pow(cfg.adam_beta2, t);
    for (std::size_t j = 0; j < pv.size(); ++j) {
        auto& m = state.first_moment[j];
        auto& v = state.second_moment[j];
        if (gv[j].values.size() != pv[j].values.size() || m.size() != pv[j].values.size()) {
            throw ShapeError("adam_step: size mismatch in " + pv[j].name);
        }
        for (std::size_t k = 0; k < m.size(); ++k) {
            const Real g = gv[j].values[k];
            m[k] = cfg.adam_beta1 * m[k] + (1 - cfg.adam_beta1) * g;
            v[k] = cfg.adam_beta2 * v[k] + (1 - cfg.adam_beta2) * g * g;
            pv[j].values[k] -= cfg.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.adam_eps);
        }
    }
    project_nonneg(params);
}

NetworkSpec with_dropout(NetworkSpec spec, Real dropout) {
    bool first = true;
    for (BlockSpec& b : spec.blocks) {
        if (!b.is_conv()) continue;
        b.dropout_rate = first ? 0 : dropout;
        first = false;
    }
    return spec;
}

TrainState initial_state(const NetworkSpec& spec, const TrainConfig& cfg) {
    TrainState s;
    s.params = build(spec, cfg.seed);
    s.optimizer = OptimizerState::for_params(s.params);
    s.rng.seed(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    return s;
}

EvalResult evaluate(const ModelParams& params, const NetworkSpec& spec, const Dataset& d, Real alpha,
                    std::size_t unroll, std::size_t batch_size) {
    if (d.size() == 0) throw ArgumentError("evaluate needs a nonempty dataset");
    EvalResult r;
    std::size_t errors = 0;
    Real data = 0;
    LossOptions o;
    o.unroll = unroll;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < d.size(); start += batch_size) {
        idx.clear();
        for (std::size_t i = start; i < std::min(d.size(), start + batch_size); ++i) idx.push_back(i);
        const LossResult l = loss(params, spec, make_batch(d, idx), o);
        data += l.data_term * static_cast<Real>(idx.size());
        errors += l.errors;
    }
    r.loss = data / static_cast<Real>(d.size()) + regularizer(const_cast<ModelParams&>(params), alpha);
    r.error_rate = static_cast<Real>(errors) / static_cast<Real>(d.size());
    return r;
}

void train(const TrainConfig& cfg, const NetworkSpec& base_spec, const Dataset& data, TrainState& state,
           const TrainHooks& hooks) {
    cfg.validate();
    data.validate();
    if (data.size() == 0) throw ArgumentError("training set is empty");
    const NetworkSpec spec = with_dropout(base_spec, cfg.dropout);
    LossOptions lo;
    lo.alpha = cfg.alpha;
    lo.unroll = cfg.unroll_T;
    lo.mode = Mode::train;
    lo.rng = &state.rng;

    std::vector<std::size_t> order(data.size());
    std::vector<FeatureTensor> augmented;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_below(state.rng, i)]);
        Real loss_sum = 0;
        std::size_t errors = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            Batch batch;
            augmented.clear();
            augmented.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const std::size_t j = order[i];
                if (hooks.augment) {
                    augmented.push_back(hooks.augment(data.images[j], state.rng));
                    batch.images.push_back(&augmented.back());
                } else {
                    batch.images.push_back(&data.images[j]);
                }
                batch.labels.push_back(data.labels[j]);
            }
            GradientResult g = backward(state.params, spec, batch, lo);
            loss_sum += g.value.loss * static_cast<Real>(batch.size());
            errors += g.value.errors;
            adam_step(state.params, g.grads, state.optimizer, cfg);
            ++state.iteration;
        }
        ++state.epoch;
        const Real n = static_cast<Real>(data.size());
        if (hooks.metric_log) {
            *hooks.metric_log << state.epoch << "," << state.iteration << ",train," << format_real(loss_sum / n) << ","
                              << format_real(static_cast<Real>(errors) / n) << "\n";
        }
        if (hooks.test && hooks.metric_log) {
            const EvalResult t = evaluate(state.params, spec, *hooks.test, cfg.alpha, cfg.unroll_T);
            *hooks.metric_log << state.epoch << "," << state.iteration << ",test," << format_real(t.loss) << ","
                              << format_real(t.error_rate) << "\n";
        }
        if (hooks.metric_log) hooks.metric_log->flush();
        if (hooks.on_epoch) hooks.on_epoch(state);
    }
}

} // namespace ebssc
