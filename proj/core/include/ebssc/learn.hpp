#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "ebssc/dataset.hpp"
#include "ebssc/network.hpp"

namespace ebssc {

struct TrainConfig {
    Real alpha = 1e-4;  ///< ℓ₂ weight on filters, ŵ± and linear weights
    Real learning_rate = 1e-3;
    Real adam_beta1 = 0.9;
    Real adam_beta2 = 0.999;
    Real adam_eps = 1e-8;
    std::size_t batch_size = 32;
    std::size_t epochs = 1;
    Real dropout = 0.3;
    std::size_t unroll_T = 0;
    std::uint64_t seed = 1;

    /// Throws ArgumentError on non-positive rates or dropout outside [0,1).
    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

struct OptimizerState {
    std::vector<std::vector<Real>> first_moment;   ///< one per parameter view
    std::vector<std::vector<Real>> second_moment;
    std::uint64_t step = 0;

    static OptimizerState for_params(const ModelParams& params);
    bool operator==(const OptimizerState&) const = default;
};

struct Batch {
    std::vector<const FeatureTensor*> images;
    std::vector<std::size_t> labels;
    std::size_t size() const noexcept { return images.size(); }
};

Batch make_batch(const Dataset& d, std::span<const std::size_t> indices);

struct LossOptions {
    Real alpha = 0;
    std::size_t unroll = 0;
    Mode mode = Mode::eval;
    std::mt19937_64* rng = nullptr;  ///< dropout masks in train mode
};

struct LossResult {
    Real loss = 0;          ///< regularizer + data term
    Real data_term = 0;     ///< mean softmax cross-entropy of the scores
    Real regularizer = 0;
    std::vector<std::vector<Real>> scores;  ///< per example
    std::size_t errors = 0;                 ///< argmax (first on ties) ≠ label
};

/// (α/2)‖θ_reg‖² + mean over the batch of −s_y + log Σ exp s.
LossResult loss(const ModelParams& params, const NetworkSpec& spec, const Batch& batch, const LossOptions& options);

struct GradientResult {
    LossResult value;
    ModelParams grads;
};

/// Exact gradient of loss() (subgradient masks fixed by the forward pass).
GradientResult backward(const ModelParams& params, const NetworkSpec& spec, const Batch& batch,
                        const LossOptions& options);

/// Mean softmax cross-entropy and its gradient with respect to the scores.
Real softmax_cross_entropy(std::span<const Real> scores, std::size_t label, std::span<Real> dscores);

/// Elementwise max(·, 0) on ŵ⁺ and ŵ⁻; offsets untouched.
void project_nonneg(ClassBiasParams& p);
void project_nonneg(ModelParams& params);

/// Bias-corrected ADAM on every parameter view, then project_nonneg.
void adam_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, const TrainConfig& cfg);

/// Copies cfg.dropout onto every conv block except the first.
NetworkSpec with_dropout(NetworkSpec spec, Real dropout);

struct TrainState {
    ModelParams params;
    OptimizerState optimizer;
    std::uint64_t epoch = 0;
    std::uint64_t iteration = 0;
    std::mt19937_64 rng;
};

TrainState initial_state(const NetworkSpec& spec, const TrainConfig& cfg);

struct EvalResult {
    Real loss = 0;
    Real error_rate = 0;
};

/// Eval-mode loss and error over a whole dataset.
EvalResult evaluate(const ModelParams& params, const NetworkSpec& spec, const Dataset& d, Real alpha,
                    std::size_t unroll, std::size_t batch_size = 100);

struct TrainHooks {
    std::function<FeatureTensor(const FeatureTensor&, std::mt19937_64&)> augment;  ///< optional
    std::ostream* metric_log = nullptr;  ///< lines "epoch,iter,split,loss,error_rate"
    const Dataset* test = nullptr;       ///< evaluated after every epoch when set
    std::function<void(const TrainState&)> on_epoch;
};

/// Runs cfg.epochs further epochs of shuffled minibatches from `state`.
void train(const TrainConfig& cfg, const NetworkSpec& spec, const Dataset& data, TrainState& state,
           const TrainHooks& hooks = {});

} // namespace ebssc
