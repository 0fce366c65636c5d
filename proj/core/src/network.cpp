#include "ebssc/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ebssc/energy.hpp"
#include "ebssc/error.hpp"
#include "tape.hpp"

namespace ebssc {

namespace {

using detail::Tape;
using Id = Tape::Id;

constexpr std::size_t kMaxSweeps = 4;

Real uniform01(std::mt19937_64& rng) { return static_cast<Real>(rng() >> 11) * 0x1.0p-53; }

bool normalizes(BlockKind k) { return k == BlockKind::crelu_sn || k == BlockKind::ssc || k == BlockKind::ebssc; }

struct BlockNodes {
    bool set = false;
    Id input = 0;
    Id dropped = 0;
    Id response = 0;
    Id pre = 0;
    Id code = 0;
    Id output = 0;
    std::shared_ptr<PoolSwitches> switches;
};

void add_into(std::span<Real> dst, std::span<const Real> src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

class Engine {
public:
    Engine(const ModelParams& params, const NetworkSpec& spec, bool record)
        : P(params), S(spec), shapes(spec.activation_shapes()), tape(record) {
        if (P.blocks.size() != S.blocks.size()) throw ArgumentError("parameters do not match the network spec");
    }

    const ModelParams& P;
    const NetworkSpec& S;
    std::vector<Shape3> shapes;
    Tape tape;
    ModelParams* G = nullptr;
    std::vector<std::optional<FeatureTensor>> masks;

    Id score_node = 0;
    std::vector<std::vector<BlockNodes>> class_nodes;  // per class (energy) or single
    std::vector<std::vector<Real>> joint;               // per class
    bool report_joint = false;

    void run(const FeatureTensor& x, const ForwardOptions& o);
    Trace make_trace(std::size_t slot) const;

private:
    std::size_t class_of(std::size_t b, std::size_t y) const {
        return S.blocks[b].kind == BlockKind::ebssc ? y : 0;
    }

    const ClassBiasParams& shrink_params(std::size_t b) const { return *P.blocks[b].shrink; }

    // ---- differentiable operations ----

    Id conv(Id x, std::size_t b) {
        const BlockSpec& s = S.blocks[b];
        const Id y = tape.add(cross_correlate(tape.value(x), P.blocks[b].filters, s.pad));
        tape.on_backward([this, x, y, b] {
            if (!tape.has_grad(y)) return;
            const BlockSpec& s = S.blocks[b];
            const FeatureTensor& dy = tape.grad(y);
            if (tape.needs_grad(x)) tape.grad(x) += reconstruct(dy, P.blocks[b].filters, s.pad);
            if (G) {
                const FilterBank fg = filter_gradient(tape.value(x), dy, s.kernel_h, s.kernel_w, s.pad);
                add_into(G->blocks[b].filters.weights(), fg.weights());
            }
        });
        return y;
    }

    Id recon(Id z, std::size_t b) {
        const BlockSpec& s = S.blocks[b];
        const Id y = tape.add(reconstruct(tape.value(z), P.blocks[b].filters, s.pad));
        tape.on_backward([this, z, y, b] {
            if (!tape.has_grad(y)) return;
            const BlockSpec& s = S.blocks[b];
            const FeatureTensor& dy = tape.grad(y);
            tape.grad(z) += cross_correlate(dy, P.blocks[b].filters, s.pad);
            if (G) {
                const FilterBank fg = filter_gradient(dy, tape.value(z), s.kernel_h, s.kernel_w, s.pad);
                add_into(G->blocks[b].filters.weights(), fg.weights());
            }
        });
        return y;
    }

    Id add_bias(Id u, std::size_t b) {
        FeatureTensor v = tape.value(u);
        const auto& bias = P.blocks[b].bias;
        for (std::size_t k = 0; k < v.channels(); ++k) {
            for (Real& e : v.channel(k)) e += bias[k];
        }
        const Id y = tape.add(std::move(v));
        tape.on_backward([this, u, y, b] {
            if (!tape.has_grad(y)) return;
            const FeatureTensor& dy = tape.grad(y);
            tape.grad(u) += dy;
            if (G) {
                for (std::size_t k = 0; k < dy.channels(); ++k) {
                    for (Real e : dy.channel(k)) G->blocks[b].bias[k] += e;
                }
            }
        });
        return y;
    }

    Id relu_op(Id x) {
        const Id y = tape.add(relu(tape.value(x)));
        tape.on_backward([this, x, y] {
            if (!tape.has_grad(y)) return;
            const FeatureTensor& dy = tape.grad(y);
            const FeatureTensor& xv = tape.value(x);
            FeatureTensor& dx = tape.grad(x);
            for (std::size_t i = 0; i < dx.size(); ++i) {
                if (xv[i] > 0) dx[i] += dy[i];
            }
        });
        return y;
    }

    Id split(Id x) {
        const Id y = tape.add(crelu_split(tape.value(x)));
        tape.on_backward([this, x, y] {
            if (!tape.has_grad(y)) return;
            const FeatureTensor& dy = tape.grad(y);
            const FeatureTensor& xv = tape.value(x);
            FeatureTensor& dx = tape.grad(x);
            const std::size_t n = xv.size();
            for (std::size_t i = 0; i < n; ++i) {
                if (xv[i] > 0) dx[i] += dy[i];
                else if (xv[i] < 0) dx[i] += dy[n + i];
            }
        });
        return y;
    }

    Id normalize(Id x) {
        const Id y = tape.add(spherical_normalize(tape.value(x)));
        tape.on_backward([this, x, y] {
            if (!tape.has_grad(y)) return;
            const Real norm = l2_norm(tape.value(x));
            if (norm == 0) return;
            const FeatureTensor& dy = tape.grad(y);
            const FeatureTensor& z = tape.value(y);
            const Real radial = inner(z, dy);
            FeatureTensor& dx = tape.grad(x);
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += (dy[i] - z[i] * radial) / norm;
        });
        return y;
    }

    Id dropout(Id x, std::size_t b) {
        FeatureTensor v = tape.value(x);
        const FeatureTensor& m = *masks[b];
        require_same_shape(v, m, "dropout");
        for (std::size_t i = 0; i < v.size(); ++i) v[i] *= m[i];
        const Id y = tape.add(std::move(v), tape.needs_grad(x));
        tape.on_backward([this, x, y, b] {
            if (!tape.has_grad(y) || !tape.needs_grad(x)) return;
            const FeatureTensor& dy = tape.grad(y);
            const FeatureTensor& m = *masks[b];
            FeatureTensor& dx = tape.grad(x);
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * m[i];
        });
        return y;
    }

    Id pool(Id x, std::size_t b, std::shared_ptr<PoolSwitches>& switches_out) {
        const BlockSpec& s = S.blocks[b];
        const PoolGeometry g = s.pool_geometry();
        const bool needs = tape.needs_grad(x);
        if (s.kind == BlockKind::maxpool) {
            auto sw = std::make_shared<PoolSwitches>();
            const Id y = tape.add(max_pool(tape.value(x), g, sw.get()), needs);
            switches_out = sw;
            tape.on_backward([this, x, y, sw] {
                if (!tape.has_grad(y) || !tape.needs_grad(x)) return;
                tape.grad(x) += max_unpool(tape.grad(y), *sw);
            });
            return y;
        }
        const Id y = tape.add(avg_pool(tape.value(x), g), needs);
        tape.on_backward([this, x, y, g] {
            if (!tape.has_grad(y) || !tape.needs_grad(x)) return;
            tape.grad(x) += avg_pool_adjoint(tape.grad(y), g, tape.value(x).shape());
        });
        return y;
    }

    Id pool_adjoint(Id gin, std::size_t b) {
        const BlockSpec& s = S.blocks[b];
        if (s.kind != BlockKind::avgpool) throw ArgumentError("unrolling cannot pass through a max pool");
        const PoolGeometry g = s.pool_geometry();
        const Id y = tape.add(avg_pool_adjoint(tape.value(gin), g, shapes[b]));
        tape.on_backward([this, gin, y, g] {
            if (!tape.has_grad(y)) return;
            tape.grad(gin) += avg_pool(tape.grad(y), g);
        });
        return y;
    }

    Id slice(Id x, std::size_t c0, std::size_t count) {
        const FeatureTensor& v = tape.value(x);
        const std::size_t plane = v.shape().plane();
        FeatureTensor out({count, v.height(), v.width()});
        std::copy_n(v.data().begin() + static_cast<std::ptrdiff_t>(c0 * plane), count * plane, out.data().begin());
        const Id y = tape.add(std::move(out));
        tape.on_backward([this, x, y, c0, plane] {
            if (!tape.has_grad(y)) return;
            const FeatureTensor& dy = tape.grad(y);
            FeatureTensor& dx = tape.grad(x);
            for (std::size_t i = 0; i < dy.size(); ++i) dx[c0 * plane + i] += dy[i];
        });
        return y;
    }

    Id shrink_op(Id v, std::size_t b, std::size_t y, std::optional<Id> gp, std::optional<Id> gm) {
        const std::size_t cls = class_of(b, y);
        const ThresholdPair t = class_thresholds(shrink_params(b), cls);
        auto branches = std::make_shared<std::vector<ShrinkBranch>>();
        const Id out = tape.add(shrink_best_branch(tape.value(v), t, gp ? &tape.value(*gp) : nullptr,
                                                   gm ? &tape.value(*gm) : nullptr, branches.get()));
        tape.on_backward([this, v, out, b, cls, gp, gm, branches] {
            if (!tape.has_grad(out)) return;
            const FeatureTensor& d = tape.grad(out);
            FeatureTensor& dv = tape.grad(v);
            FeatureTensor* dgp = gp ? &tape.grad(*gp) : nullptr;
            FeatureTensor* dgm = gm ? &tape.grad(*gm) : nullptr;
            const ClassBiasParams& p = shrink_params(b);
            FeatureTensor wp_grid(p.code_shape), wm_grid(p.code_shape);
            const std::size_t plane = p.code_shape.plane();
            std::vector<Real> doff(p.code_shape.channels, 0);
            for (std::size_t i = 0; i < d.size(); ++i) {
                const ShrinkBranch br = (*branches)[i];
                if (br == ShrinkBranch::dead) continue;
                dv[i] += d[i];
                doff[i / plane] -= d[i];
                if (br == ShrinkBranch::positive) {
                    wp_grid[i] -= d[i];
                    if (dgp) (*dgp)[i] += d[i];
                } else {
                    wm_grid[i] += d[i];
                    if (dgm) (*dgm)[i] += d[i];
                }
            }
            if (G) accumulate_class_grads(b, cls, wp_grid, wm_grid, doff);
        });
        return out;
    }

    void accumulate_class_grads(std::size_t b, std::size_t cls, const FeatureTensor& wp_grid,
                                const FeatureTensor& wm_grid, std::span<const Real> doff) {
        const ClassBiasParams& p = shrink_params(b);
        ClassBiasParams& g = *G->blocks[b].shrink;
        const std::size_t m = p.map_size();
        const auto rp = reduce_to_class_map(p, wp_grid);
        const auto rm = reduce_to_class_map(p, wm_grid);
        add_into({g.w_plus.data() + cls * m, m}, rp);
        add_into({g.w_minus.data() + cls * m, m}, rm);
        add_into(g.offset, doff);
    }

    Id energy(Id v, Id z, std::size_t b, std::size_t y) {
        const std::size_t cls = class_of(b, y);
        const Real e = e_reparam_from_response(tape.value(v), cls, tape.value(z), shrink_params(b));
        const Id out = tape.add(FeatureTensor({1, 1, 1}, e));
        tape.on_backward([this, v, z, out, b, cls] {
            if (!tape.has_grad(out)) return;
            const Real s = tape.grad(out)[0];
            const ClassBiasParams& p = shrink_params(b);
            const FeatureTensor& vv = tape.value(v);
            const FeatureTensor& zv = tape.value(z);
            const FeatureTensor wp = expand_class_map(p, p.w_plus_of(cls));
            const FeatureTensor wm = expand_class_map(p, p.w_minus_of(cls));
            const std::size_t plane = zv.shape().plane();
            FeatureTensor& dv = tape.grad(v);
            FeatureTensor& dz = tape.grad(z);
            FeatureTensor wp_grid(p.code_shape), wm_grid(p.code_shape);
            std::vector<Real> doff(p.code_shape.channels, 0);
            for (std::size_t i = 0; i < zv.size(); ++i) {
                const Real zi = zv[i];
                const std::size_t k = i / plane;
                dv[i] += s * zi;
                Real slope = vv[i] - p.offset[k];
                if (zi > 0) {
                    slope -= wp[i];
                    wp_grid[i] -= s * zi;
                } else if (zi < 0) {
                    slope += wm[i];
                    wm_grid[i] += s * zi;
                }
                dz[i] += s * slope;
                doff[k] -= s * zi;
            }
            if (G) accumulate_class_grads(b, cls, wp_grid, wm_grid, doff);
        });
        return out;
    }

    Id sum(const std::vector<Id>& terms) {
        Real total = 0;
        for (Id t : terms) total += tape.value(t)[0];
        const Id out = tape.add(FeatureTensor({1, 1, 1}, total));
        tape.on_backward([this, terms, out] {
            if (!tape.has_grad(out)) return;
            const Real s = tape.grad(out)[0];
            for (Id t : terms) tape.grad(t)[0] += s;
        });
        return out;
    }

    Id stack(const std::vector<std::optional<Id>>& per_class) {
        FeatureTensor v({per_class.size(), 1, 1}, -std::numeric_limits<Real>::infinity());
        for (std::size_t y = 0; y < per_class.size(); ++y) {
            if (per_class[y]) v[y] = tape.value(*per_class[y])[0];
        }
        const Id out = tape.add(std::move(v));
        tape.on_backward([this, per_class, out] {
            if (!tape.has_grad(out)) return;
            const FeatureTensor& d = tape.grad(out);
            for (std::size_t y = 0; y < per_class.size(); ++y) {
                if (per_class[y]) tape.grad(*per_class[y])[0] += d[y];
            }
        });
        return out;
    }

    Id linear(Id f) {
        const LinearParams& L = P.linear;
        const FeatureTensor& fv = tape.value(f);
        if (fv.size() != L.in_features) throw ShapeError("linear classifier expects " + std::to_string(L.in_features) +
                                                         " features, got " + fv.shape().to_string());
        const std::size_t classes = L.bias.size();
        FeatureTensor s({classes, 1, 1});
        for (std::size_t y = 0; y < classes; ++y) {
            s[y] = L.bias[y] + inner(std::span<const Real>(L.weights.data() + y * L.in_features, L.in_features),
                                     fv.data());
        }
        const Id out = tape.add(std::move(s));
        tape.on_backward([this, f, out] {
            if (!tape.has_grad(out)) return;
            const LinearParams& L = P.linear;
            const FeatureTensor& ds = tape.grad(out);
            const FeatureTensor& fv = tape.value(f);
            FeatureTensor& df = tape.grad(f);
            const std::size_t n = L.in_features;
            for (std::size_t y = 0; y < ds.size(); ++y) {
                const Real g = ds[y];
                if (g == 0) continue;
                const Real* w = L.weights.data() + y * n;
                for (std::size_t i = 0; i < n; ++i) df[i] += g * w[i];
                if (G) {
                    Real* gw = G->linear.weights.data() + y * n;
                    for (std::size_t i = 0; i < n; ++i) gw[i] += g * fv[i];
                    G->linear.bias[y] += g;
                }
            }
        });
        return out;
    }

    // ---- blocks ----

    void encode(BlockNodes& n, std::size_t b, std::size_t y, std::optional<Id> gp, std::optional<Id> gm) {
        n.pre = shrink_op(n.response, b, y, gp, gm);
        n.code = normalize(n.pre);
        n.output = split(n.code);
    }

    void attach_input(BlockNodes& n, std::size_t b, Id in) {
        n.set = true;
        n.input = in;
        n.dropped = masks[b] ? dropout(in, b) : in;
    }

    BlockNodes run_block(std::size_t b, Id in, std::size_t y) {
        const BlockSpec& s = S.blocks[b];
        BlockNodes n;
        if (s.is_pool()) {
            n.set = true;
            n.input = in;
            n.output = pool(in, b, n.switches);
            return n;
        }
        attach_input(n, b, in);
        if (s.is_coding()) {
            n.response = conv(n.dropped, b);
            encode(n, b, y, std::nullopt, std::nullopt);
            return n;
        }
        n.response = add_bias(conv(n.dropped, b), b);
        switch (s.kind) {
        case BlockKind::relu:
            n.code = relu_op(n.response);
            n.output = n.code;
            break;
        case BlockKind::crelu:
            n.code = n.response;
            n.output = split(n.code);
            break;
        default:
            n.pre = n.response;
            n.code = normalize(n.response);
            n.output = split(n.code);
            break;
        }
        return n;
    }

    Real joint_value(const std::vector<BlockNodes>& n, std::size_t r0, std::size_t rtop, std::size_t y) const {
        Real j = 0;
        for (std::size_t b = r0; b <= rtop; ++b) {
            if (!S.blocks[b].is_coding()) continue;
            j += e_reparam_from_response(tape.value(n[b].response), class_of(b, y), tape.value(n[b].code),
                                         shrink_params(b));
        }
        return j;
    }

    void unroll(std::vector<BlockNodes>& n, std::size_t r0, std::size_t rtop, std::size_t y, std::size_t sweeps,
                std::vector<Real>& trace) {
        std::vector<std::size_t> coding;
        for (std::size_t b = r0; b <= rtop; ++b) {
            if (S.blocks[b].is_coding()) coding.push_back(b);
        }
        auto update = [&](std::size_t i) {
            const std::size_t b = coding[i];
            std::optional<Id> gp, gm;
            if (i + 1 < coding.size()) {
                const std::size_t up = coding[i + 1];
                Id g = recon(n[up].code, up);
                if (masks[up]) g = dropout(g, up);
                for (std::size_t p = up - 1; p > b; --p) g = pool_adjoint(g, p);
                const std::size_t k = S.blocks[b].out_channels;
                gp = slice(g, 0, k);
                gm = slice(g, k, k);
            }
            encode(n[b], b, y, gp, gm);
        };
        auto refresh_input = [&](std::size_t i) {
            Id cur = n[coding[i - 1]].output;
            for (std::size_t p = coding[i - 1] + 1; p < coding[i]; ++p) {
                n[p] = run_block(p, cur, y);
                cur = n[p].output;
            }
            const std::size_t b = coding[i];
            attach_input(n[b], b, cur);
            n[b].response = conv(n[b].dropped, b);
        };
        trace.push_back(joint_value(n, r0, rtop, y));
        for (std::size_t t = 0; t < sweeps; ++t) {
            for (std::size_t i = coding.size() - 1; i-- > 0;) update(i);
            for (std::size_t i = 1; i < coding.size(); ++i) {
                refresh_input(i);
                update(i);
            }
            trace.push_back(joint_value(n, r0, rtop, y));
        }
    }
};

void Engine::run(const FeatureTensor& x, const ForwardOptions& o) {
    if (x.shape() != S.input_shape) {
        throw ShapeError("network input " + x.shape().to_string() + " vs expected " + S.input_shape.to_string());
    }
    if (o.unroll > kMaxSweeps) {
        throw ArgumentError("unroll count " + std::to_string(o.unroll) + " outside [0, " +
                            std::to_string(kMaxSweeps) + "]");
    }
    if (o.label && *o.label >= S.num_classes) {
        throw ArgumentError("class id " + std::to_string(*o.label) + " out of range [0, " +
                            std::to_string(S.num_classes) + ")");
    }
    masks.assign(S.blocks.size(), std::nullopt);
    if (o.mode == Mode::train) {
        bool first_conv = true;
        for (std::size_t b = 0; b < S.blocks.size(); ++b) {
            const BlockSpec& s = S.blocks[b];
            if (!s.is_conv()) continue;
            if (first_conv) {
                first_conv = false;
                continue;
            }
            if (s.dropout_rate <= 0) continue;
            if (!o.rng) throw ArgumentError("train mode with dropout needs a random generator");
            FeatureTensor m(shapes[b]);
            const Real keep = 1 / (1 - s.dropout_rate);
            for (Real& e : m.data()) e = uniform01(*o.rng) < s.dropout_rate ? 0 : keep;
            masks[b] = std::move(m);
        }
    }

    const bool coupled = o.unroll > 0 || report_joint;
    std::size_t r0 = 0, rtop = 0;
    if (coupled) std::tie(r0, rtop) = coupled_range(S);
    const std::size_t last = S.last_block();
    const Id in = tape.add(x, false);

    if (S.classifier == ClassifierKind::linear) {
        std::vector<BlockNodes> n(S.blocks.size());
        Id cur = in;
        for (std::size_t b = 0; b <= last; ++b) {
            n[b] = run_block(b, cur, 0);
            cur = n[b].output;
        }
        joint.assign(1, {});
        if (coupled) {
            unroll(n, r0, rtop, 0, o.unroll, joint[0]);
            for (std::size_t b = rtop + 1; b <= last; ++b) n[b] = run_block(b, n[b - 1].output, 0);
        }
        score_node = linear(n[last].output);
        class_nodes.assign(1, std::move(n));
        return;
    }

    const std::size_t ebc = S.classifier_block;
    const std::size_t start = o.unroll > 0 ? std::min(r0, ebc) : ebc;
    std::vector<BlockNodes> prefix(S.blocks.size());
    Id cur = in;
    for (std::size_t b = 0; b < start; ++b) {
        prefix[b] = run_block(b, cur, 0);
        cur = prefix[b].output;
    }
    // The lowest per-class block sees a class-independent input.
    BlockNodes base;
    attach_input(base, start, cur);
    base.response = conv(base.dropped, start);

    std::vector<std::size_t> classes;
    if (o.label) classes.push_back(*o.label);
    else for (std::size_t y = 0; y < S.num_classes; ++y) classes.push_back(y);

    class_nodes.assign(S.num_classes, {});
    joint.assign(S.num_classes, {});
    std::vector<std::optional<Id>> scores(S.num_classes);
    for (std::size_t y : classes) {
        std::vector<BlockNodes> n = prefix;
        n[start] = base;
        encode(n[start], start, y, std::nullopt, std::nullopt);
        for (std::size_t b = start + 1; b <= last; ++b) n[b] = run_block(b, n[b - 1].output, y);
        if (coupled) unroll(n, r0, rtop, y, o.unroll, joint[y]);
        std::vector<Id> terms;
        for (std::size_t b = ebc; b <= last; ++b) {
            if (S.blocks[b].is_coding()) terms.push_back(energy(n[b].response, n[b].code, b, y));
        }
        scores[y] = terms.size() == 1 ? terms[0] : sum(terms);
        class_nodes[y] = std::move(n);
    }
    score_node = stack(scores);
}

Trace Engine::make_trace(std::size_t slot) const {
    Trace t;
    const auto& n = class_nodes[slot];
    if (n.empty()) return t;
    t.joint_energy = joint[slot];
    t.blocks.resize(S.blocks.size());
    for (std::size_t b = 0; b < S.blocks.size(); ++b) {
        const BlockNodes& bn = n[b];
        if (!bn.set) continue;
        BlockTrace& bt = t.blocks[b];
        bt.input = tape.value(bn.input);
        bt.output = tape.value(bn.output);
        if (S.blocks[b].is_pool()) {
            if (bn.switches) bt.switches = *bn.switches;
            continue;
        }
        bt.response = tape.value(bn.response);
        bt.code = tape.value(bn.code);
        if (normalizes(S.blocks[b].kind)) bt.pre_norm = l2_norm(tape.value(bn.pre));
    }
    return t;
}

FeatureTensor mask_to_support(const FeatureTensor& t, const BlockSpec& s, const FeatureTensor* code) {
    if (!s.splits()) {
        FeatureTensor c = t;
        if (code) {
            for (std::size_t i = 0; i < c.size(); ++i) {
                if ((*code)[i] == 0) c[i] = 0;
            }
        }
        return c;
    }
    if (!code) return crelu_merge(t);
    FeatureTensor c(code->shape());
    const std::size_t n = c.size();
    for (std::size_t i = 0; i < n; ++i) {
        if ((*code)[i] > 0) c[i] = t[i];
        else if ((*code)[i] < 0) c[i] = t[n + i];
    }
    return c;
}

std::size_t require_coding_block(const NetworkSpec& spec, std::size_t b) {
    if (b >= spec.blocks.size() || !spec.blocks[b].is_coding()) {
        throw ArgumentError("block " + std::to_string(b) + " is not an ssc/ebssc block");
    }
    return b;
}

} // namespace

const Trace& ForwardResult::trace_for(std::size_t y) const {
    if (traces.size() == 1) return traces[0];
    if (y >= traces.size() || traces[y].blocks.empty()) {
        throw ArgumentError("no trace recorded for class " + std::to_string(y));
    }
    return traces[y];
}

std::pair<std::size_t, std::size_t> coupled_range(const NetworkSpec& spec) {
    spec.validate();
    std::vector<std::size_t> coding;
    for (std::size_t i = spec.last_block() + 1; i-- > 0;) {
        const BlockSpec& b = spec.blocks[i];
        if (b.is_coding()) coding.push_back(i);
        else if (b.kind != BlockKind::avgpool) break;
    }
    if (coding.size() < 2) {
        throw ArgumentError("unrolling needs at least two coding blocks joined only by average pools");
    }
    return {coding.back(), coding.front()};
}

ForwardResult forward(const ModelParams& params, const NetworkSpec& spec, const FeatureTensor& x,
                      const ForwardOptions& options) {
    Engine e(params, spec, false);
    e.run(x, options);
    ForwardResult r;
    const FeatureTensor& s = e.tape.value(e.score_node);
    r.scores.assign(s.data().begin(), s.data().end());
    if (options.keep_trace) {
        for (std::size_t i = 0; i < e.class_nodes.size(); ++i) r.traces.push_back(e.make_trace(i));
    }
    return r;
}

UnrolledResult unrolled_infer(const ModelParams& params, const NetworkSpec& spec, const FeatureTensor& x,
                              std::size_t y, std::size_t sweeps) {
    if (sweeps > kMaxSweeps) {
        throw ArgumentError("unroll count " + std::to_string(sweeps) + " outside [0, " + std::to_string(kMaxSweeps) +
                            "]");
    }
    Engine e(params, spec, false);
    e.report_joint = true;
    ForwardOptions o;
    o.unroll = sweeps;
    o.label = y;
    e.run(x, o);
    UnrolledResult r;
    const std::size_t slot = e.class_nodes.size() == 1 ? 0 : y;
    r.trace = e.make_trace(slot);
    r.score = e.tape.value(e.score_node)[y];
    return r;
}

Real joint_energy(const ModelParams& params, const NetworkSpec& spec, const Trace& trace, std::size_t y) {
    const auto [r0, rtop] = coupled_range(spec);
    Real j = 0;
    for (std::size_t b = r0; b <= rtop; ++b) {
        if (!spec.blocks[b].is_coding()) continue;
        const BlockTrace& bt = trace.blocks.at(b);
        const std::size_t cls = spec.blocks[b].kind == BlockKind::ebssc ? y : 0;
        j += e_reparam_from_response(bt.response, cls, bt.code, *params.blocks[b].shrink);
    }
    return j;
}

FeatureTensor decode_code(const ModelParams& params, const NetworkSpec& spec, const FeatureTensor& code,
                          std::size_t from_block, const Trace* reference) {
    if (from_block >= spec.blocks.size() || !spec.blocks[from_block].is_conv()) {
        throw ArgumentError("decode starts at a convolution block; block " + std::to_string(from_block) + " is not");
    }
    const auto shapes = spec.activation_shapes();
    const Shape3 cs = spec.code_shape(from_block);
    if (code.shape() != cs) {
        throw ShapeError("decode: code " + code.shape().to_string() + " vs block code " + cs.to_string());
    }
    const BlockSpec& top = spec.blocks[from_block];
    FeatureTensor t = reconstruct(code, params.blocks[from_block].filters, top.pad);
    for (std::size_t b = from_block; b-- > 0;) {
        const BlockSpec& s = spec.blocks[b];
        const BlockTrace* bt = reference && b < reference->blocks.size() ? &reference->blocks[b] : nullptr;
        if (s.kind == BlockKind::maxpool) {
            if (!bt || !bt->switches) {
                throw ArgumentError("decode through max pool block " + std::to_string(b) + " needs recorded switches");
            }
            t = max_unpool(t, *bt->switches);
        } else if (s.kind == BlockKind::avgpool) {
            t = avg_pool_adjoint(t, s.pool_geometry(), shapes[b]);
        } else {
            const FeatureTensor* support = bt && !bt->code.empty() ? &bt->code : nullptr;
            t = reconstruct(mask_to_support(t, s, support), params.blocks[b].filters, s.pad);
        }
    }
    return t;
}

FeatureTensor decode(const ModelParams& params, const NetworkSpec& spec, const Trace& trace,
                     std::size_t from_block) {
    if (from_block >= trace.blocks.size() || trace.blocks[from_block].code.empty()) {
        throw ArgumentError("trace holds no code for block " + std::to_string(from_block));
    }
    return decode_code(params, spec, trace.blocks[from_block].code, from_block, &trace);
}

FeatureTensor decode_class_bias(const ModelParams& params, const NetworkSpec& spec, std::size_t y,
                                std::size_t at_block, const Trace* reference) {
    require_coding_block(spec, at_block);
    if (y >= spec.num_classes) throw ArgumentError("class id " + std::to_string(y) + " out of range");
    const ClassBiasParams& p = *params.blocks[at_block].shrink;
    const std::size_t cls = spec.blocks[at_block].kind == BlockKind::ebssc ? y : 0;
    const FeatureTensor code =
        spherical_normalize(shrink(FeatureTensor(p.code_shape), class_thresholds(p, cls)));
    return decode_code(params, spec, code, at_block, reference);
}

FeatureTensor decode_residual(const ModelParams& params, const NetworkSpec& spec, const FeatureTensor& x,
                              std::size_t y, std::size_t at_block) {
    require_coding_block(spec, at_block);
    ForwardOptions o;
    o.label = y;
    const ForwardResult r = forward(params, spec, x, o);
    const Trace& trace = r.trace_for(y);
    const BlockTrace& bt = trace.blocks.at(at_block);
    if (bt.code.empty()) throw ArgumentError("block " + std::to_string(at_block) + " is not evaluated");
    FeatureTensor residual(bt.code.shape());
    if (bt.pre_norm > 0) {
        for (std::size_t i = 0; i < residual.size(); ++i) {
            if (bt.code[i] != 0) residual[i] = bt.response[i] / bt.pre_norm;
        }
    }
    return decode_code(params, spec, residual, at_block, &trace);
}

struct ScoreGraph::Impl {
    Impl(const ModelParams& p, const NetworkSpec& s) : engine(p, s, true) {}
    Engine engine;
    std::vector<Real> scores;
};

ScoreGraph::ScoreGraph(const ModelParams& params, const NetworkSpec& spec, const FeatureTensor& x,
                       const ForwardOptions& options)
    : impl_(std::make_unique<Impl>(params, spec)) {
    impl_->engine.run(x, options);
    const FeatureTensor& s = impl_->engine.tape.value(impl_->engine.score_node);
    impl_->scores.assign(s.data().begin(), s.data().end());
}

ScoreGraph::~ScoreGraph() = default;

const std::vector<Real>& ScoreGraph::scores() const { return impl_->scores; }

void ScoreGraph::backward(std::span<const Real> dscores, ModelParams& grads) {
    Engine& e = impl_->engine;
    if (dscores.size() != impl_->scores.size()) throw ShapeError("score gradient has the wrong length");
    FeatureTensor& seed = e.tape.grad(e.score_node);
    for (std::size_t i = 0; i < seed.size(); ++i) seed[i] = std::isfinite(impl_->scores[i]) ? dscores[i] : 0;
    e.G = &grads;
    e.tape.backward();
    e.G = nullptr;
}

} // namespace ebssc
