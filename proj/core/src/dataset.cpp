#include "ebssc/dataset.hpp"

#include <zlib.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>

#include "ebssc/error.hpp"

namespace ebssc {

namespace {

constexpr std::size_t kCifarRecord = 3073;

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

// Validates the IDX header and returns the dimensions.
std::vector<std::size_t> idx_header(const std::vector<std::uint8_t>& b, std::uint8_t expect_dims, const char* kind) {
    if (b.size() < 4) throw FormatError(std::string(kind) + ": truncated IDX magic", b.size());
    if (b[0] != 0 || b[1] != 0 || b[2] != 0x08 || b[3] != expect_dims) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "0x%02x%02x%02x%02x", b[0], b[1], b[2], b[3]);
        throw FormatError(std::string(kind) + ": bad IDX magic " + buf + " (expected 0x000008" +
                              (expect_dims == 3 ? "03" : "01") + ")",
                          0);
    }
    std::vector<std::size_t> dims;
    for (std::uint8_t d = 0; d < expect_dims; ++d) {
        const std::size_t off = 4 + 4 * std::size_t{d};
        if (b.size() < off + 4) throw FormatError(std::string(kind) + ": truncated IDX dimensions", b.size());
        dims.push_back(read_be32(b, off));
    }
    std::size_t payload = 1;
    for (std::size_t d : dims) {
        if (d != 0 && payload > (std::size_t{1} << 40) / d) throw FormatError(std::string(kind) + ": IDX too large", 4);
        payload *= d;
    }
    const std::size_t header = 4 + 4 * std::size_t{expect_dims};
    if (b.size() < header + payload) {
        throw FormatError(std::string(kind) + ": truncated IDX payload (need " + std::to_string(header + payload) +
                              " bytes)",
                          b.size());
    }
    if (b.size() != header + payload) {
        throw FormatError(std::string(kind) + ": trailing bytes after IDX payload", header + payload);
    }
    return dims;
}

bool ends_with_gz(const std::filesystem::path& p) { return p.extension() == ".gz"; }

} // namespace

void Dataset::validate() const {
    if (images.size() != labels.size()) {
        throw ArgumentError("dataset has " + std::to_string(images.size()) + " images but " +
                            std::to_string(labels.size()) + " labels");
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].shape() != images[0].shape()) {
            throw ArgumentError("dataset image " + std::to_string(i) + " has shape " + images[i].shape().to_string());
        }
        if (!class_names.empty() && labels[i] >= class_names.size()) {
            throw ArgumentError("dataset label " + std::to_string(labels[i]) + " at " + std::to_string(i) +
                                " exceeds class count");
        }
    }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::vector<std::uint8_t> out;
    if (ends_with_gz(path)) {
        gzFile f = gzopen(path.string().c_str(), "rb");
        if (!f) throw FormatError("cannot open " + path.string(), 0);
        std::uint8_t buf[1 << 16];
        int n = 0;
        while ((n = gzread(f, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + n);
        const bool failed = n < 0;
        gzclose(f);
        if (failed) throw FormatError("corrupt gzip stream in " + path.string(), out.size());
        return out;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string(), 0);
    out.assign(std::istreambuf_iterator<char>(in), {});
    return out;
}

std::vector<FeatureTensor> parse_idx_images(const std::vector<std::uint8_t>& b) {
    const auto dims = idx_header(b, 3, "image file");
    const std::size_t n = dims[0], rows = dims[1], cols = dims[2];
    std::vector<FeatureTensor> images;
    images.reserve(n);
    std::size_t off = 16;
    for (std::size_t i = 0; i < n; ++i) {
        FeatureTensor t({1, rows, cols});
        for (Real& v : t.data()) v = b[off++] / Real{255};
        images.push_back(std::move(t));
    }
    return images;
}

std::vector<std::size_t> parse_idx_labels(const std::vector<std::uint8_t>& b) {
    const auto dims = idx_header(b, 1, "label file");
    return {b.begin() + 8, b.begin() + 8 + static_cast<std::ptrdiff_t>(dims[0])};
}

std::vector<FeatureTensor> load_idx_images(const std::filesystem::path& path) {
    try {
        return parse_idx_images(read_file_bytes(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what(), e.offset());
    }
}

std::vector<std::size_t> load_idx_labels(const std::filesystem::path& path) {
    try {
        return parse_idx_labels(read_file_bytes(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what(), e.offset());
    }
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    Dataset d;
    d.images = load_idx_images(images);
    d.labels = load_idx_labels(labels);
    for (int c = 0; c < 10; ++c) d.class_names.push_back(std::to_string(c));
    if (d.images.size() != d.labels.size()) {
        throw FormatError(images.string() + " and " + labels.string() + " hold different record counts", 0);
    }
    for (std::size_t l : d.labels) {
        if (l >= 10) throw FormatError(labels.string() + ": label " + std::to_string(l) + " outside 0..9", 8);
    }
    return d;
}

Dataset parse_cifar10(const std::vector<std::uint8_t>& b) {
    if (b.empty()) throw FormatError("CIFAR-10 batch: truncated record", 0);
    if (b.size() % kCifarRecord != 0) {
        throw FormatError("CIFAR-10 batch: truncated record", b.size() - b.size() % kCifarRecord);
    }
    Dataset d;
    d.class_names = {"airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"};
    for (std::size_t off = 0; off < b.size(); off += kCifarRecord) {
        if (b[off] >= 10) throw FormatError("CIFAR-10 batch: label " + std::to_string(b[off]) + " outside 0..9", off);
        d.labels.push_back(b[off]);
        FeatureTensor t({3, 32, 32});
        for (std::size_t i = 0; i < 3072; ++i) t[i] = b[off + 1 + i] / Real{255};
        d.images.push_back(std::move(t));
    }
    return d;
}

Dataset load_cifar10_bin(const std::vector<std::filesystem::path>& paths) {
    Dataset all;
    for (const auto& p : paths) {
        Dataset d;
        try {
            d = parse_cifar10(read_file_bytes(p));
        } catch (const FormatError& e) {
            throw FormatError(p.string() + ": " + e.what(), e.offset());
        }
        all.class_names = d.class_names;
        std::move(d.images.begin(), d.images.end(), std::back_inserter(all.images));
        all.labels.insert(all.labels.end(), d.labels.begin(), d.labels.end());
    }
    return all;
}

Whitening fit_whitening(const Dataset& train, WhiteningMode mode, Real floor) {
    if (train.size() == 0) throw ArgumentError("whitening needs a nonempty training split");
    if (!(floor > 0)) throw ArgumentError("whitening floor must be positive");
    const std::size_t p = train.images[0].size();
    Whitening w;
    w.floor = floor;
    w.mean.assign(p, 0);
    if (mode == WhiteningMode::none) return w;
    for (const auto& img : train.images) {
        for (std::size_t i = 0; i < p; ++i) w.mean[i] += img[i];
    }
    for (Real& m : w.mean) m /= static_cast<Real>(train.size());
    if (mode == WhiteningMode::center) return w;

    using Matrix = Eigen::MatrixXd;
    const auto pi = static_cast<Eigen::Index>(p);
    Matrix x(static_cast<Eigen::Index>(train.size()), pi);
    for (std::size_t r = 0; r < train.size(); ++r) {
        for (std::size_t i = 0; i < p; ++i) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) =
            train.images[r][i] - w.mean[i];
    }
    const Matrix cov = (x.transpose() * x) / static_cast<Real>(train.size());
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    const Eigen::VectorXd scale = eig.eigenvalues().cwiseMax(floor).cwiseSqrt().cwiseInverse();
    const Matrix zca = eig.eigenvectors() * scale.asDiagonal() * eig.eigenvectors().transpose();
    w.matrix.resize(p * p);
    Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(w.matrix.data(), pi, pi) = zca;
    return w;
}

Dataset apply_whitening(const Dataset& d, const Whitening& w) {
    Dataset out = d;
    out.whitening = w;
    if (d.size() == 0) return out;
    const std::size_t p = d.images[0].size();
    if (w.mean.size() != p) throw ShapeError("whitening statistics cover " + std::to_string(w.mean.size()) +
                                             " pixels, images have " + std::to_string(p));
    const auto pi = static_cast<Eigen::Index>(p);
    for (auto& img : out.images) {
        for (std::size_t i = 0; i < p; ++i) img[i] -= w.mean[i];
        if (!w.matrix.empty()) {
            Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(w.matrix.data(),
                                                                                                      pi, pi);
            Eigen::Map<Eigen::VectorXd> v(img.data().data(), pi);
            v = (m * v).eval();
        }
    }
    return out;
}

Dataset preprocess(const Dataset& train, WhiteningMode mode, Real floor) {
    return apply_whitening(train, fit_whitening(train, mode, floor));
}

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
    if (n == 0) throw ArgumentError("uniform_below needs n > 0");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r = 0;
    do r = rng();
    while (r >= limit);
    return r % n;
}

FeatureTensor augment_with(const FeatureTensor& image, bool flip, std::size_t pad, std::size_t dy, std::size_t dx) {
    const std::size_t h = image.height(), w = image.width();
    if (dy > 2 * pad || dx > 2 * pad) throw ArgumentError("crop offset exceeds the padded border");
    if (pad > 0 && (pad >= h || pad >= w)) throw ArgumentError("reflect padding must be smaller than the image");
    auto reflect = [](std::ptrdiff_t i, std::size_t n) {
        const auto m = static_cast<std::ptrdiff_t>(n);
        if (i < 0) return static_cast<std::size_t>(-i);
        if (i >= m) return static_cast<std::size_t>(2 * (m - 1) - i);
        return static_cast<std::size_t>(i);
    };
    FeatureTensor out(image.shape());
    for (std::size_t c = 0; c < image.channels(); ++c) {
        for (std::size_t r = 0; r < h; ++r) {
            const std::size_t sr = reflect(static_cast<std::ptrdiff_t>(r + dy) - static_cast<std::ptrdiff_t>(pad), h);
            for (std::size_t col = 0; col < w; ++col) {
                std::size_t sc = reflect(static_cast<std::ptrdiff_t>(col + dx) - static_cast<std::ptrdiff_t>(pad), w);
                if (flip) sc = w - 1 - sc;
                out(c, r, col) = image(c, sr, sc);
            }
        }
    }
    return out;
}

FeatureTensor augment(const FeatureTensor& image, std::mt19937_64& rng, const AugmentOptions& options) {
    const bool flip = options.flip && (rng() >> 63) != 0;
    const std::size_t span = 2 * options.crop_pad + 1;
    const std::size_t dy = options.crop_pad ? uniform_below(rng, span) : 0;
    const std::size_t dx = options.crop_pad ? uniform_below(rng, span) : 0;
    return augment_with(image, flip, options.crop_pad, dy, dx);
}

void emit_image_grid(const std::vector<std::vector<FeatureTensor>>& grid, const std::filesystem::path& path) {
    constexpr std::size_t sep = 2;
    if (grid.empty() || grid[0].empty()) throw ArgumentError("image grid is empty");
    const Shape3 tile = grid[0][0].shape();
    if (tile.channels != 1 && tile.channels != 3) throw ShapeError("grid tiles need 1 or 3 channels");
    const std::size_t rows = grid.size(), cols = grid[0].size();
    for (const auto& row : grid) {
        if (row.size() != cols) throw ShapeError("image grid rows differ in length");
        for (const auto& t : row) {
            if (t.shape() != tile) throw ShapeError("grid tile " + t.shape().to_string() + " vs " + tile.to_string());
        }
    }
    const std::size_t width = cols * tile.width + (cols + 1) * sep;
    const std::size_t height = rows * tile.height + (rows + 1) * sep;
    std::vector<std::uint8_t> rgb(width * height * 3, 0);
    for (std::size_t gr = 0; gr < rows; ++gr) {
        for (std::size_t gc = 0; gc < cols; ++gc) {
            const FeatureTensor& t = grid[gr][gc];
            const auto [lo, hi] = std::minmax_element(t.data().begin(), t.data().end());
            const Real range = *hi - *lo;
            const std::size_t y0 = sep + gr * (tile.height + sep), x0 = sep + gc * (tile.width + sep);
            for (std::size_t r = 0; r < tile.height; ++r) {
                for (std::size_t c = 0; c < tile.width; ++c) {
                    for (std::size_t ch = 0; ch < 3; ++ch) {
                        const Real v = t(tile.channels == 1 ? 0 : ch, r, c);
                        const Real u = range > 0 && std::isfinite(range) ? (v - *lo) / range * 255 : 128;
                        rgb[((y0 + r) * width + x0 + c) * 3 + ch] =
                            static_cast<std::uint8_t>(std::clamp(std::lround(u), 0L, 255L));
                    }
                }
            }
        }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string(), 0);
    out << "P6\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (!out) throw FormatError("write failed for " + path.string(), 0);
}

} // namespace ebssc
