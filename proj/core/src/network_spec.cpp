#include <algorithm>
#include <cmath>
#include <sstream>

#include "ebssc/error.hpp"
#include "ebssc/network.hpp"
#include "ebssc/text.hpp"

namespace ebssc {

namespace {

constexpr BlockKind kAllKinds[] = {BlockKind::relu,  BlockKind::crelu,   BlockKind::crelu_sn, BlockKind::ssc,
                                   BlockKind::ebssc, BlockKind::maxpool, BlockKind::avgpool};

std::string_view layout_name(BiasLayout l) { return l == BiasLayout::full ? "full" : "per_channel"; }

BiasLayout parse_layout(std::string_view s) {
    if (s == "full") return BiasLayout::full;
    if (s == "per_channel") return BiasLayout::per_channel;
    throw ConfigError("bias layout must be full or per_channel, got '" + std::string(s) + "'");
}

std::string block_text(const BlockSpec& b) {
    std::ostringstream os;
    os << to_string(b.kind);
    if (b.is_pool()) {
        os << " window=" << b.window << " stride=" << b.stride << " pad=" << b.pad;
    } else {
        os << " out=" << b.out_channels << " in=" << b.in_channels << " kernel=" << b.kernel_h << "x" << b.kernel_w
           << " pad=" << b.pad << " dropout=" << format_real(b.dropout_rate);
        if (b.is_coding()) os << " bias=" << layout_name(b.bias_layout);
    }
    return os.str();
}

BlockSpec parse_block(std::string_view line) {
    const auto tokens = split_ws(line);
    if (tokens.empty()) throw ConfigError("empty block line");
    BlockSpec b;
    b.kind = parse_block_kind(tokens[0]);
    for (std::size_t i = 1; i < tokens.size(); ++i) {
        const auto eq = tokens[i].find('=');
        if (eq == std::string_view::npos) throw ConfigError("block field '" + std::string(tokens[i]) + "' lacks '='");
        const auto key = tokens[i].substr(0, eq);
        const auto val = tokens[i].substr(eq + 1);
        const bool pool = b.is_pool();
        if (key == "pad") {
            b.pad = parse_count(val, "block pad");
        } else if (pool && key == "window") {
            b.window = parse_count(val, "block window");
        } else if (pool && key == "stride") {
            b.stride = parse_count(val, "block stride");
        } else if (!pool && key == "out") {
            b.out_channels = parse_count(val, "block out");
        } else if (!pool && key == "in") {
            b.in_channels = parse_count(val, "block in");
        } else if (!pool && key == "kernel") {
            const auto x = val.find('x');
            if (x == std::string_view::npos) throw ConfigError("block kernel must be HxW");
            b.kernel_h = parse_count(val.substr(0, x), "block kernel");
            b.kernel_w = parse_count(val.substr(x + 1), "block kernel");
        } else if (!pool && key == "dropout") {
            b.dropout_rate = parse_real(val, "block dropout");
        } else if (b.is_coding() && key == "bias") {
            b.bias_layout = parse_layout(val);
        } else {
            throw ConfigError("unknown field '" + std::string(key) + "' for " + std::string(to_string(b.kind)) +
                              " block");
        }
    }
    return b;
}

std::size_t scaled_width(std::size_t base, Real scale) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<Real>(base) * scale)));
}

} // namespace

std::string_view to_string(BlockKind kind) {
    switch (kind) {
    case BlockKind::relu: return "relu";
    case BlockKind::crelu: return "crelu";
    case BlockKind::crelu_sn: return "crelu_sn";
    case BlockKind::ssc: return "ssc";
    case BlockKind::ebssc: return "ebssc";
    case BlockKind::maxpool: return "maxpool";
    case BlockKind::avgpool: return "avgpool";
    }
    return "?";
}

BlockKind parse_block_kind(std::string_view name) {
    for (BlockKind k : kAllKinds) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown block kind '" + std::string(name) +
                      "' (valid: relu, crelu, crelu_sn, ssc, ebssc, maxpool, avgpool)");
}

BlockSpec BlockSpec::conv(BlockKind kind, std::size_t out_channels, std::size_t in_channels, std::size_t kernel,
                          std::size_t pad, Real dropout, BiasLayout layout) {
    BlockSpec b;
    b.kind = kind;
    b.out_channels = out_channels;
    b.in_channels = in_channels;
    b.kernel_h = b.kernel_w = kernel;
    b.pad = pad;
    b.dropout_rate = dropout;
    b.bias_layout = layout;
    return b;
}

BlockSpec BlockSpec::pool(BlockKind kind, std::size_t window, std::size_t stride, std::size_t pad) {
    BlockSpec b;
    b.kind = kind;
    b.window = window;
    b.stride = stride;
    b.pad = pad;
    return b;
}

std::vector<Shape3> NetworkSpec::activation_shapes() const {
    std::vector<Shape3> shapes{input_shape};
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const BlockSpec& b = blocks[i];
        const Shape3& in = shapes.back();
        if (b.is_pool()) {
            shapes.push_back(b.pool_geometry().output_shape(in));
            continue;
        }
        if (b.in_channels != in.channels) {
            throw ArgumentError("block " + std::to_string(i) + " expects " + std::to_string(b.in_channels) +
                                " input channels but receives " + in.to_string());
        }
        if (in.height + 2 * b.pad < b.kernel_h || in.width + 2 * b.pad < b.kernel_w) {
            throw ArgumentError("block " + std::to_string(i) + " kernel does not fit input " + in.to_string());
        }
        const Shape3 code{b.out_channels, in.height + 2 * b.pad - b.kernel_h + 1, in.width + 2 * b.pad - b.kernel_w + 1};
        shapes.push_back({b.splits() ? 2 * code.channels : code.channels, code.height, code.width});
    }
    return shapes;
}

Shape3 NetworkSpec::code_shape(std::size_t i) const {
    if (i >= blocks.size() || !blocks[i].is_conv()) throw ArgumentError("block " + std::to_string(i) + " has no code");
    const Shape3 out = activation_shapes()[i + 1];
    return {blocks[i].out_channels, out.height, out.width};
}

std::size_t NetworkSpec::last_block() const {
    return classifier == ClassifierKind::linear ? classifier_block : blocks.size() - 1;
}

void NetworkSpec::validate() const {
    if (input_shape.size() == 0) throw ArgumentError("network input shape is empty");
    if (blocks.empty()) throw ArgumentError("network has no blocks");
    if (num_classes < 2) throw ArgumentError("network needs at least two classes");
    if (!(init_beta >= 0) || !std::isfinite(init_beta)) throw ArgumentError("init_beta must be finite and >= 0");
    if (classifier_block >= blocks.size()) {
        throw ArgumentError("classifier block " + std::to_string(classifier_block) + " out of range");
    }
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const BlockSpec& b = blocks[i];
        const std::string where = "block " + std::to_string(i) + ": ";
        if (b.is_pool()) {
            if (b.window == 0 || b.stride == 0 || b.pad >= b.window) {
                throw ArgumentError(where + "pool needs window > pad and stride > 0");
            }
        } else {
            if (b.out_channels == 0 || b.kernel_h == 0 || b.kernel_w == 0) {
                throw ArgumentError(where + "convolution needs positive width and kernel");
            }
            if (!(b.dropout_rate >= 0 && b.dropout_rate < 1)) throw ArgumentError(where + "dropout must be in [0,1)");
        }
        const bool in_energy = classifier == ClassifierKind::energy && i >= classifier_block;
        const bool must_code = i == classifier_block || b.is_conv();
        if (in_energy && must_code && b.kind != BlockKind::ebssc) {
            throw ArgumentError(where + "convolutions from the energy classifier onward must be ebssc");
        }
        if (!in_energy && b.kind == BlockKind::ebssc) {
            throw ArgumentError(where + "ebssc blocks belong to the energy classifier");
        }
    }
    const auto shapes = activation_shapes();
    for (std::size_t i = 1; i < shapes.size(); ++i) {
        if (shapes[i].size() == 0) throw ArgumentError("block " + std::to_string(i - 1) + " output is empty");
    }
}

std::string NetworkSpec::to_text() const {
    std::ostringstream os;
    os << "input = " << input_shape.to_string() << "\n";
    os << "classes = " << num_classes << "\n";
    os << "init_beta = " << format_real(init_beta) << "\n";
    os << "classifier = " << (classifier == ClassifierKind::linear ? "linear" : "energy") << " " << classifier_block
       << "\n";
    for (const BlockSpec& b : blocks) os << "block = " << block_text(b) << "\n";
    return os.str();
}

NetworkSpec NetworkSpec::from_text(std::string_view text) {
    NetworkSpec s;
    s.blocks.clear();
    bool have_input = false, have_classifier = false;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError("network line lacks '=': '" + std::string(line) + "'");
        const auto key = trim(line.substr(0, eq));
        const auto val = trim(line.substr(eq + 1));
        if (key == "input") {
            s.input_shape = parse_shape(val, "input");
            have_input = true;
        } else if (key == "classes") {
            s.num_classes = parse_count(val, "classes");
        } else if (key == "init_beta") {
            s.init_beta = parse_real(val, "init_beta");
        } else if (key == "classifier") {
            const auto t = split_ws(val);
            if (t.size() != 2 || (t[0] != "linear" && t[0] != "energy")) {
                throw ConfigError("classifier must be 'linear <block>' or 'energy <block>'");
            }
            s.classifier = t[0] == "linear" ? ClassifierKind::linear : ClassifierKind::energy;
            s.classifier_block = parse_count(t[1], "classifier block");
            have_classifier = true;
        } else if (key == "block") {
            s.blocks.push_back(parse_block(val));
        } else {
            throw ConfigError("unknown network key '" + std::string(key) +
                              "' (valid: input, classes, init_beta, classifier, block)");
        }
    }
    if (!have_input || !have_classifier) throw ConfigError("network text needs input and classifier lines");
    s.validate();
    return s;
}

std::vector<std::string> variant_names() {
    return {"relu_lc7", "crelu_lc7", "crelu_sn_lc7", "ssc_lc7", "ssc_ebc67", "ssc_ebc2", "ebssc2"};
}

NetworkSpec make_variant(std::string_view name, const VariantOptions& o) {
    NetworkSpec s;
    s.input_shape = o.input_shape;
    s.num_classes = o.num_classes;
    s.init_beta = o.init_beta;

    if (name == "ssc_ebc2" || name == "ebssc2") {
        const bool avg = name == "ebssc2";
        const std::size_t k1 = scaled_width(avg ? 8 : 16, o.width_scale);
        const std::size_t k2 = scaled_width(avg ? 16 : 32, o.width_scale);
        // ebssc2 scores with both blocks so unrolling couples two class-conditional coders.
        s.blocks.push_back(BlockSpec::conv(avg ? BlockKind::ebssc : BlockKind::ssc, k1, o.input_shape.channels, 3, 1, 0,
                                           avg ? BiasLayout::full : BiasLayout::per_channel));
        s.blocks.push_back(BlockSpec::pool(avg ? BlockKind::avgpool : BlockKind::maxpool, 3, 2, 1));
        s.blocks.push_back(BlockSpec::conv(BlockKind::ebssc, k2, 2 * k1, 3, 1, o.dropout, BiasLayout::full));
        s.classifier = ClassifierKind::energy;
        s.classifier_block = avg ? 0 : 2;
        s.validate();
        return s;
    }

    BlockKind base;
    bool ebc = false;
    if (name == "relu_lc7") base = BlockKind::relu;
    else if (name == "crelu_lc7") base = BlockKind::crelu;
    else if (name == "crelu_sn_lc7") base = BlockKind::crelu_sn;
    else if (name == "ssc_lc7") base = BlockKind::ssc;
    else if (name == "ssc_ebc67") base = BlockKind::ssc, ebc = true;
    else {
        std::string valid;
        for (const auto& v : variant_names()) valid += (valid.empty() ? "" : ", ") + v;
        throw ConfigError("unknown variant '" + std::string(name) + "' (valid: " + valid + ")");
    }

    const std::size_t w1 = scaled_width(96, o.width_scale);
    const std::size_t w2 = scaled_width(192, o.width_scale);
    // conv1..conv7 widths and kernels; pools follow conv2 and conv5.
    const std::size_t widths[7] = {w1, w1, w2, w2, w2, w2, w2};
    const std::size_t kernels[7] = {3, 3, 3, 3, 3, 3, 1};
    std::size_t in = o.input_shape.channels;
    for (std::size_t c = 0; c < 7; ++c) {
        BlockKind kind = (ebc && c >= 5) ? BlockKind::ebssc : base;
        const BiasLayout layout = kind == BlockKind::ebssc ? BiasLayout::full : BiasLayout::per_channel;
        s.blocks.push_back(BlockSpec::conv(kind, widths[c], in, kernels[c], kernels[c] / 2, c == 0 ? 0 : o.dropout,
                                           layout));
        in = kind == BlockKind::relu ? widths[c] : 2 * widths[c];
        if (c == 1 || c == 4) s.blocks.push_back(BlockSpec::pool(BlockKind::maxpool, 3, 2, 1));
    }
    if (ebc) {
        s.classifier = ClassifierKind::energy;
        s.classifier_block = 7;
    } else {
        s.classifier = ClassifierKind::linear;
        s.classifier_block = s.blocks.size() - 1;
    }
    s.validate();
    return s;
}

ModelParams build(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    std::normal_distribution<Real> normal(0, 1);
    ModelParams p;
    const auto shapes = spec.activation_shapes();
    for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
        const BlockSpec& b = spec.blocks[i];
        BlockParams bp;
        if (b.is_conv()) {
            bp.filters = FilterBank(b.out_channels, b.in_channels, b.kernel_h, b.kernel_w);
            const Real scale = std::sqrt(2 / static_cast<Real>(bp.filters.filter_size()));
            for (Real& w : bp.filters.weights()) w = scale * normal(rng);
            if (b.is_coding()) {
                const std::size_t classes = b.kind == BlockKind::ebssc ? spec.num_classes : 1;
                bp.shrink = ClassBiasParams::uniform(classes, spec.code_shape(i), b.bias_layout, spec.init_beta, 0);
            } else {
                bp.bias.assign(b.out_channels, 0);
            }
        }
        p.blocks.push_back(std::move(bp));
    }
    if (spec.classifier == ClassifierKind::linear) {
        const std::size_t f = shapes[spec.classifier_block + 1].size();
        p.linear.in_features = f;
        p.linear.weights.resize(spec.num_classes * f);
        const Real scale = std::sqrt(1 / static_cast<Real>(f));
        for (Real& w : p.linear.weights) w = scale * normal(rng);
        p.linear.bias.assign(spec.num_classes, 0);
    }
    return p;
}

ModelParams zeros_like(const ModelParams& params) {
    ModelParams g = params;
    for (const ParamView& v : parameter_views(g)) std::ranges::fill(v.values, Real{0});
    return g;
}

std::vector<ParamView> parameter_views(ModelParams& params) {
    std::vector<ParamView> views;
    for (std::size_t i = 0; i < params.blocks.size(); ++i) {
        BlockParams& b = params.blocks[i];
        const std::string prefix = "block" + std::to_string(i) + ".";
        if (b.filters.weights().empty()) continue;
        views.push_back({prefix + "filters", b.filters.weights(), true, false});
        if (!b.bias.empty()) views.push_back({prefix + "bias", b.bias, false, false});
        if (b.shrink) {
            views.push_back({prefix + "w_plus", b.shrink->w_plus, true, true});
            views.push_back({prefix + "w_minus", b.shrink->w_minus, true, true});
            views.push_back({prefix + "offset", b.shrink->offset, false, false});
        }
    }
    if (!params.linear.weights.empty()) {
        views.push_back({"linear.weights", params.linear.weights, true, false});
        views.push_back({"linear.bias", params.linear.bias, false, false});
    }
    return views;
}

std::size_t parameter_count(const ModelParams& params) {
    std::size_t n = 0;
    for (const ParamView& v : parameter_views(const_cast<ModelParams&>(params))) n += v.values.size();
    return n;
}

} // namespace ebssc
