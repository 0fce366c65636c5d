#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ebssc/coder.hpp"
#include "ebssc/conv.hpp"
#include "ebssc/shrinkage.hpp"
#include "ebssc/tensor.hpp"

namespace ebssc {

enum class BlockKind { relu, crelu, crelu_sn, ssc, ebssc, maxpool, avgpool };

std::string_view to_string(BlockKind kind);
BlockKind parse_block_kind(std::string_view name);

struct BlockSpec {
    BlockKind kind = BlockKind::relu;
    // convolution blocks
    std::size_t out_channels = 0;
    std::size_t in_channels = 0;
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
    std::size_t pad = 0;
    Real dropout_rate = 0;  ///< applied to the block input in train mode
    BiasLayout bias_layout = BiasLayout::per_channel;  ///< ssc / ebssc threshold maps
    // pooling blocks
    std::size_t window = 0;
    std::size_t stride = 1;

    bool is_pool() const noexcept { return kind == BlockKind::maxpool || kind == BlockKind::avgpool; }
    bool is_conv() const noexcept { return !is_pool(); }
    /// ssc and ebssc: the block solves the sparse coding problem.
    bool is_coding() const noexcept { return kind == BlockKind::ssc || kind == BlockKind::ebssc; }
    /// Every conv kind except relu emits [positive; negative] channels.
    bool splits() const noexcept { return is_conv() && kind != BlockKind::relu; }
    PoolGeometry pool_geometry() const { return {window, stride, pad}; }

    static BlockSpec conv(BlockKind kind, std::size_t out_channels, std::size_t in_channels, std::size_t kernel,
                          std::size_t pad, Real dropout = 0, BiasLayout layout = BiasLayout::per_channel);
    static BlockSpec pool(BlockKind kind, std::size_t window, std::size_t stride, std::size_t pad);

    bool operator==(const BlockSpec&) const = default;
};

enum class ClassifierKind { linear, energy };

struct NetworkSpec {
    Shape3 input_shape;
    std::vector<BlockSpec> blocks;
    ClassifierKind classifier = ClassifierKind::linear;
    /// linear: block whose activations feed the classifier;
    /// energy: first energy-based block (later convolutions are ebssc, pools may sit between).
    std::size_t classifier_block = 0;
    std::size_t num_classes = 10;
    Real init_beta = 0.01;  ///< initial ŵ± of every coding block

    /// Throws ArgumentError describing the first inconsistency.
    void validate() const;
    /// Shape entering block i; element blocks.size() is the final output shape.
    std::vector<Shape3> activation_shapes() const;
    /// K × H × W grid of block i's code (conv blocks only).
    Shape3 code_shape(std::size_t i) const;
    /// Last block evaluated by the classifier.
    std::size_t last_block() const;

    /// Canonical line-oriented text; from_text(to_text()) == *this.
    std::string to_text() const;
    static NetworkSpec from_text(std::string_view text);

    bool operator==(const NetworkSpec&) const = default;
};

struct VariantOptions {
    Shape3 input_shape{3, 32, 32};
    std::size_t num_classes = 10;
    Real width_scale = 1;  ///< multiplies every conv width; 1 gives the 96/192 widths
    Real dropout = 0.3;    ///< before every conv block except the first
    Real init_beta = 0.01;
};

/// relu_lc7, crelu_lc7, crelu_sn_lc7, ssc_lc7, ssc_ebc67 (seven conv blocks, two max pools),
/// plus the two-block desk models ssc_ebc2 (max pool) and ebssc2 (average pool, unrollable).
NetworkSpec make_variant(std::string_view name, const VariantOptions& options = {});
std::vector<std::string> variant_names();

struct BlockParams {
    FilterBank filters;
    std::vector<Real> bias;                 ///< relu / crelu / crelu_sn only
    std::optional<ClassBiasParams> shrink;  ///< ssc (one class) / ebssc
    bool operator==(const BlockParams&) const = default;
};

struct LinearParams {
    std::size_t in_features = 0;
    std::vector<Real> weights;  ///< num_classes × in_features
    std::vector<Real> bias;     ///< num_classes
    bool operator==(const LinearParams&) const = default;
};

struct ModelParams {
    std::vector<BlockParams> blocks;
    LinearParams linear;
    bool operator==(const ModelParams&) const = default;
};

/// Filters ~ N(0, 2/fan_in); ŵ± = init_beta; offsets and conv biases 0; linear ~ N(0, 1/fan_in).
ModelParams build(const NetworkSpec& spec, std::uint64_t seed);

/// Same layout with every value zero (gradient accumulator).
ModelParams zeros_like(const ModelParams& params);

struct ParamView {
    std::string name;
    std::span<Real> values;
    bool regularized = false;  ///< filters, ŵ±, linear weights
    bool nonnegative = false;  ///< ŵ±
};

/// Every trainable tensor in a fixed order.
std::vector<ParamView> parameter_views(ModelParams& params);
std::size_t parameter_count(const ModelParams& params);

enum class Mode { train, eval };

struct ForwardOptions {
    Mode mode = Mode::eval;
    std::size_t unroll = 0;              ///< block-coordinate sweeps over the coupled blocks
    std::mt19937_64* rng = nullptr;      ///< dropout masks; required in train mode when any rate > 0
    std::optional<std::size_t> label;    ///< score only this hypothesis (energy classifier)
    bool keep_trace = true;
};

struct BlockTrace {
    FeatureTensor input;     ///< block input before dropout
    FeatureTensor response;  ///< d ⋆ input (+ bias for baseline blocks)
    FeatureTensor code;      ///< unsplit activation: z* for coding blocks
    FeatureTensor output;
    Real pre_norm = 0;       ///< ‖z̃‖₂ for normalized blocks
    std::optional<PoolSwitches> switches;
};

struct Trace {
    std::vector<BlockTrace> blocks;
    std::vector<Real> joint_energy;  ///< after the feed-forward pass and after each sweep
};

struct ForwardResult {
    std::vector<Real> scores;   ///< one per class; classes not evaluated hold −∞
    std::vector<Trace> traces;  ///< per class for energy classifiers, one entry otherwise

    const Trace& trace_for(std::size_t y) const;
};

ForwardResult forward(const ModelParams& params, const NetworkSpec& spec, const FeatureTensor& x,
                      const ForwardOptions& options = {});

/// First and last block of the trailing run that unrolling couples: coding blocks joined
/// only by average pools. Throws ArgumentError when fewer than two coding blocks qualify.
std::pair<std::size_t, std::size_t> coupled_range(const NetworkSpec& spec);

struct UnrolledResult {
    Trace trace;
    Real score = 0;
};

/// Feed-forward pass followed by `sweeps` top-down/bottom-up passes (0 ≤ sweeps ≤ 4).
UnrolledResult unrolled_infer(const ModelParams& params, const NetworkSpec& spec, const FeatureTensor& x,
                              std::size_t y, std::size_t sweeps);

/// Joint energy of the coupled blocks for given codes (one per block, empty for others).
Real joint_energy(const ModelParams& params, const NetworkSpec& spec, const Trace& trace, std::size_t y);

/// Takes the code of `from_block` back to input space through transposed convolutions,
/// fixed-support activations and switch unpooling recorded in `trace`.
FeatureTensor decode(const ModelParams& params, const NetworkSpec& spec, const Trace& trace,
                     std::size_t from_block);

/// Decodes an arbitrary code placed at `from_block`. Without a reference trace lower
/// activations pass unmasked and max pools raise ArgumentError (no switches).
FeatureTensor decode_code(const ModelParams& params, const NetworkSpec& spec, const FeatureTensor& code,
                          std::size_t from_block, const Trace* reference);

/// Activation of coding block `at_block` for a zero input under hypothesis y, decoded.
FeatureTensor decode_class_bias(const ModelParams& params, const NetworkSpec& spec, std::size_t y,
                                std::size_t at_block, const Trace* reference = nullptr);

/// Code of `at_block` for x under hypothesis y with the class threshold contribution
/// removed (v restricted to the active set, scaled by 1/‖z̃‖), decoded.
FeatureTensor decode_residual(const ModelParams& params, const NetworkSpec& spec, const FeatureTensor& x,
                              std::size_t y, std::size_t at_block);

/// Differentiable scoring of one input. Scores are computed at construction; backward()
/// accumulates ∂(dscoresᵀ scores)/∂θ into `grads`.
class ScoreGraph {
public:
    ScoreGraph(const ModelParams& params, const NetworkSpec& spec, const FeatureTensor& x,
               const ForwardOptions& options);
    ~ScoreGraph();
    ScoreGraph(const ScoreGraph&) = delete;
    ScoreGraph& operator=(const ScoreGraph&) = delete;

    const std::vector<Real>& scores() const;
    void backward(std::span<const Real> dscores, ModelParams& grads);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace ebssc
