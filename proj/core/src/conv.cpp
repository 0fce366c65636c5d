#include "ebssc/conv.hpp"

#include <Eigen/Core>
#include <limits>

#include "ebssc/error.hpp"

namespace ebssc {

namespace {

using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMatrix>;
using ConstMapRow = Eigen::Map<const RowMatrix>;

struct Geometry {
    std::size_t channels, in_h, in_w, kh, kw, pad, out_h, out_w;
};

// Lowers x into a (channels·kh·kw) × (out_h·out_w) patch matrix.
RowMatrix im2col(std::span<const Real> x, const Geometry& g) {
    RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(g.channels * g.kh * g.kw),
                                     static_cast<Eigen::Index>(g.out_h * g.out_w));
    const auto ph = static_cast<std::ptrdiff_t>(g.pad);
    for (std::size_t c = 0; c < g.channels; ++c) {
        const Real* plane = x.data() + c * g.in_h * g.in_w;
        for (std::size_t a = 0; a < g.kh; ++a) {
            for (std::size_t b = 0; b < g.kw; ++b) {
                Real* row = cols.row(static_cast<Eigen::Index>((c * g.kh + a) * g.kw + b)).data();
                for (std::size_t r = 0; r < g.out_h; ++r) {
                    const auto ir = static_cast<std::ptrdiff_t>(r + a) - ph;
                    if (ir < 0 || ir >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                    const Real* src = plane + static_cast<std::size_t>(ir) * g.in_w;
                    Real* dst = row + r * g.out_w;
                    for (std::size_t s = 0; s < g.out_w; ++s) {
                        const auto ic = static_cast<std::ptrdiff_t>(s + b) - ph;
                        if (ic >= 0 && ic < static_cast<std::ptrdiff_t>(g.in_w)) dst[s] = src[ic];
                    }
                }
            }
        }
    }
    return cols;
}

// Adjoint of im2col: scatters patch rows back onto the padded-then-cropped image.
void col2im(const RowMatrix& cols, const Geometry& g, std::span<Real> x) {
    const auto ph = static_cast<std::ptrdiff_t>(g.pad);
    for (std::size_t c = 0; c < g.channels; ++c) {
        Real* plane = x.data() + c * g.in_h * g.in_w;
        for (std::size_t a = 0; a < g.kh; ++a) {
            for (std::size_t b = 0; b < g.kw; ++b) {
                const Real* row = cols.row(static_cast<Eigen::Index>((c * g.kh + a) * g.kw + b)).data();
                for (std::size_t r = 0; r < g.out_h; ++r) {
                    const auto ir = static_cast<std::ptrdiff_t>(r + a) - ph;
                    if (ir < 0 || ir >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                    Real* dst = plane + static_cast<std::size_t>(ir) * g.in_w;
                    const Real* src = row + r * g.out_w;
                    for (std::size_t s = 0; s < g.out_w; ++s) {
                        const auto ic = static_cast<std::ptrdiff_t>(s + b) - ph;
                        if (ic >= 0 && ic < static_cast<std::ptrdiff_t>(g.in_w)) dst[ic] += src[s];
                    }
                }
            }
        }
    }
}

Geometry forward_geometry(const Shape3& in, std::size_t kh, std::size_t kw, std::size_t pad, const char* op) {
    if (in.height + 2 * pad < kh || in.width + 2 * pad < kw) {
        throw ShapeError(std::string(op) + ": input " + in.to_string() + " too small for " + std::to_string(kh) +
                         "x" + std::to_string(kw) + " kernel with pad " + std::to_string(pad));
    }
    return {in.channels, in.height, in.width, kh, kw, pad, in.height + 2 * pad - kh + 1,
            in.width + 2 * pad - kw + 1};
}

} // namespace

FeatureTensor cross_correlate(const FeatureTensor& x, const FilterBank& bank, std::size_t pad) {
    if (x.channels() != bank.in_channels()) {
        throw ShapeError("cross_correlate: input " + x.shape().to_string() + " vs filter bank " +
                         bank.shape_string());
    }
    const Geometry g = forward_geometry(x.shape(), bank.kernel_h(), bank.kernel_w(), pad, "cross_correlate");
    const RowMatrix cols = im2col(x.data(), g);
    FeatureTensor out({bank.num_filters(), g.out_h, g.out_w});
    ConstMapRow w(bank.weights().data(), static_cast<Eigen::Index>(bank.num_filters()),
                  static_cast<Eigen::Index>(bank.filter_size()));
    MapRow o(out.data().data(), static_cast<Eigen::Index>(bank.num_filters()), cols.cols());
    o.noalias() = w * cols;
    return out;
}

FeatureTensor reconstruct(const FeatureTensor& z, const FilterBank& bank, std::size_t pad) {
    if (z.channels() != bank.num_filters()) {
        throw ShapeError("reconstruct: code " + z.shape().to_string() + " vs filter bank " + bank.shape_string());
    }
    if (z.height() + bank.kernel_h() < 1 + 2 * pad || z.width() + bank.kernel_w() < 1 + 2 * pad) {
        throw ShapeError("reconstruct: code " + z.shape().to_string() + " too small for pad " + std::to_string(pad));
    }
    const Shape3 out_shape{bank.in_channels(), z.height() + bank.kernel_h() - 1 - 2 * pad,
                           z.width() + bank.kernel_w() - 1 - 2 * pad};
    if (out_shape.height == 0 || out_shape.width == 0) {
        throw ShapeError("reconstruct: empty output for code " + z.shape().to_string());
    }
    const Geometry g{out_shape.channels, out_shape.height, out_shape.width, bank.kernel_h(), bank.kernel_w(), pad,
                     z.height(),         z.width()};
    ConstMapRow w(bank.weights().data(), static_cast<Eigen::Index>(bank.num_filters()),
                  static_cast<Eigen::Index>(bank.filter_size()));
    ConstMapRow zm(z.data().data(), static_cast<Eigen::Index>(z.channels()),
                   static_cast<Eigen::Index>(z.shape().plane()));
    const RowMatrix cols = w.transpose() * zm;
    FeatureTensor out(out_shape);
    col2im(cols, g, out.data());
    return out;
}

FilterBank filter_gradient(const FeatureTensor& x, const FeatureTensor& upstream, std::size_t kernel_h,
                           std::size_t kernel_w, std::size_t pad) {
    const Geometry g = forward_geometry(x.shape(), kernel_h, kernel_w, pad, "filter_gradient");
    if (upstream.height() != g.out_h || upstream.width() != g.out_w) {
        throw ShapeError("filter_gradient: input " + x.shape().to_string() + " vs upstream " +
                         upstream.shape().to_string());
    }
    const RowMatrix cols = im2col(x.data(), g);
    FilterBank grad(upstream.channels(), x.channels(), kernel_h, kernel_w);
    ConstMapRow up(upstream.data().data(), static_cast<Eigen::Index>(upstream.channels()), cols.cols());
    MapRow gw(grad.weights().data(), static_cast<Eigen::Index>(upstream.channels()), cols.rows());
    gw.noalias() = up * cols.transpose();
    return grad;
}

std::size_t PoolGeometry::output_extent(std::size_t in) const {
    if (window == 0 || stride == 0) throw ArgumentError("pooling window and stride must be >= 1");
    if (pad >= window) throw ArgumentError("pooling pad must be smaller than the window");
    if (in + 2 * pad < window) {
        throw ShapeError("pooling: extent " + std::to_string(in) + " with pad " + std::to_string(pad) +
                         " smaller than window " + std::to_string(window));
    }
    return (in + 2 * pad - window) / stride + 1;
}

Shape3 PoolGeometry::output_shape(const Shape3& in) const {
    return {in.channels, output_extent(in.height), output_extent(in.width)};
}

namespace {

// Visits the in-bounds cells of every pooling window.
template <class Fn>
void for_each_window(const Shape3& in, const PoolGeometry& g, Fn&& fn) {
    const Shape3 out = g.output_shape(in);
    for (std::size_t c = 0; c < in.channels; ++c) {
        for (std::size_t r = 0; r < out.height; ++r) {
            const auto r0 = static_cast<std::ptrdiff_t>(r * g.stride) - static_cast<std::ptrdiff_t>(g.pad);
            const auto r_lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(r0, 0));
            const auto r_hi = static_cast<std::size_t>(
                std::min<std::ptrdiff_t>(r0 + static_cast<std::ptrdiff_t>(g.window), static_cast<std::ptrdiff_t>(in.height)));
            for (std::size_t s = 0; s < out.width; ++s) {
                const auto s0 = static_cast<std::ptrdiff_t>(s * g.stride) - static_cast<std::ptrdiff_t>(g.pad);
                const auto s_lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(s0, 0));
                const auto s_hi = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
                    s0 + static_cast<std::ptrdiff_t>(g.window), static_cast<std::ptrdiff_t>(in.width)));
                fn((c * out.height + r) * out.width + s, c, r_lo, r_hi, s_lo, s_hi);
            }
        }
    }
}

} // namespace

FeatureTensor max_pool(const FeatureTensor& x, const PoolGeometry& g, PoolSwitches* switches) {
    FeatureTensor out(g.output_shape(x.shape()));
    if (switches) {
        switches->input_shape = x.shape();
        switches->argmax.assign(out.size(), 0);
    }
    for_each_window(x.shape(), g,
                    [&](std::size_t o, std::size_t c, std::size_t r_lo, std::size_t r_hi, std::size_t s_lo,
                        std::size_t s_hi) {
                        Real best = -std::numeric_limits<Real>::infinity();
                        std::size_t best_index = x.index(c, r_lo, s_lo);
                        for (std::size_t r = r_lo; r < r_hi; ++r) {
                            for (std::size_t s = s_lo; s < s_hi; ++s) {
                                const std::size_t i = x.index(c, r, s);
                                if (x[i] > best) {
                                    best = x[i];
                                    best_index = i;
                                }
                            }
                        }
                        out[o] = best;
                        if (switches) switches->argmax[o] = best_index;
                    });
    return out;
}

FeatureTensor max_pool(const FeatureTensor& x, std::size_t window, std::size_t stride, std::size_t pad) {
    return max_pool(x, PoolGeometry{window, stride, pad});
}

FeatureTensor max_unpool(const FeatureTensor& y, const PoolSwitches& switches) {
    if (switches.argmax.size() != y.size()) {
        throw ShapeError("max_unpool: " + std::to_string(switches.argmax.size()) + " switches for pooled tensor " +
                         y.shape().to_string());
    }
    FeatureTensor out(switches.input_shape);
    for (std::size_t o = 0; o < y.size(); ++o) out[switches.argmax[o]] += y[o];
    return out;
}

FeatureTensor avg_pool(const FeatureTensor& x, const PoolGeometry& g) {
    FeatureTensor out(g.output_shape(x.shape()));
    for_each_window(x.shape(), g,
                    [&](std::size_t o, std::size_t c, std::size_t r_lo, std::size_t r_hi, std::size_t s_lo,
                        std::size_t s_hi) {
                        Real sum = 0;
                        for (std::size_t r = r_lo; r < r_hi; ++r)
                            for (std::size_t s = s_lo; s < s_hi; ++s) sum += x(c, r, s);
                        out[o] = sum / static_cast<Real>((r_hi - r_lo) * (s_hi - s_lo));
                    });
    return out;
}

FeatureTensor avg_pool(const FeatureTensor& x, std::size_t window, std::size_t stride, std::size_t pad) {
    return avg_pool(x, PoolGeometry{window, stride, pad});
}

FeatureTensor avg_pool_adjoint(const FeatureTensor& y, const PoolGeometry& g, const Shape3& input_shape) {
    if (g.output_shape(input_shape) != y.shape()) {
        throw ShapeError("avg_pool_adjoint: pooled " + y.shape().to_string() + " vs input " +
                         input_shape.to_string());
    }
    FeatureTensor out(input_shape);
    for_each_window(input_shape, g,
                    [&](std::size_t o, std::size_t c, std::size_t r_lo, std::size_t r_hi, std::size_t s_lo,
                        std::size_t s_hi) {
                        const Real share = y[o] / static_cast<Real>((r_hi - r_lo) * (s_hi - s_lo));
                        for (std::size_t r = r_lo; r < r_hi; ++r)
                            for (std::size_t s = s_lo; s < s_hi; ++s) out(c, r, s) += share;
                    });
    return out;
}

} // namespace ebssc
