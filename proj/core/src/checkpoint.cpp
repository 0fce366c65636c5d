#include "ebssc/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ebssc/error.hpp"

namespace ebssc {

namespace {

constexpr char kMagic[4] = {'E', 'B', 'S', 'C'};
constexpr std::size_t kHeader = 8;

std::size_t dtype_size(DType t) { return t == DType::u8 ? 1 : 8; }

template <class T>
void put_le(std::vector<std::uint8_t>& out, T v) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b, std::size_t start, std::size_t end)
        : b_(b), pos_(start), end_(end) {}

    template <class T>
    T le(const char* what) {
        need(sizeof(T), what);
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(T{b_[pos_ + i]} << (8 * i));
        pos_ += sizeof(T);
        return v;
    }

    std::span<const std::uint8_t> take(std::uint64_t n, const char* what) {
        need(n, what);
        auto s = b_.subspan(pos_, static_cast<std::size_t>(n));
        pos_ += static_cast<std::size_t>(n);
        return s;
    }

    std::size_t pos() const noexcept { return pos_; }
    bool done() const noexcept { return pos_ == end_; }

private:
    void need(std::uint64_t n, const char* what) const {
        if (n > end_ - pos_) throw FormatError(std::string("truncated ") + what, pos_);
    }
    std::span<const std::uint8_t> b_;
    std::size_t pos_;
    std::size_t end_;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> b) {
    uLong crc = crc32(0L, Z_NULL, 0);
    std::size_t off = 0;
    while (off < b.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(b.size() - off, 1u << 30));
        crc = crc32(crc, b.data() + off, chunk);
        off += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint64_t> filter_dims(const FilterBank& f) {
    return {f.num_filters(), f.in_channels(), f.kernel_h(), f.kernel_w()};
}

} // namespace

void TensorTable::add(TableEntry e) {
    if (find(e.name)) throw ArgumentError("duplicate tensor name '" + e.name + "'");
    entries_.push_back(std::move(e));
}

void TensorTable::add_f64(std::string name, std::vector<std::uint64_t> dims, std::span<const Real> values) {
    TableEntry e{std::move(name), DType::f64, std::move(dims), {}};
    e.data.reserve(values.size() * 8);
    for (Real v : values) put_le(e.data, std::bit_cast<std::uint64_t>(v));
    add(std::move(e));
}

void TensorTable::add_u64(std::string name, std::vector<std::uint64_t> dims, std::span<const std::uint64_t> values) {
    TableEntry e{std::move(name), DType::u64, std::move(dims), {}};
    for (std::uint64_t v : values) put_le(e.data, v);
    add(std::move(e));
}

void TensorTable::add_bytes(std::string name, std::string_view bytes) {
    add({std::move(name), DType::u8, {bytes.size()}, {bytes.begin(), bytes.end()}});
}

void TensorTable::add_tensor(std::string name, const FeatureTensor& t) {
    add_f64(std::move(name), {t.channels(), t.height(), t.width()}, t.data());
}

const TableEntry* TensorTable::find(std::string_view name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

const TableEntry& TensorTable::require(std::string_view name, DType type) const {
    const TableEntry* e = find(name);
    if (!e) throw FormatError("missing tensor '" + std::string(name) + "'", 0);
    if (e->dtype != type) throw FormatError("tensor '" + std::string(name) + "' has an unexpected type", 0);
    return *e;
}

std::vector<Real> TensorTable::f64(std::string_view name) const {
    const TableEntry& e = require(name, DType::f64);
    std::vector<Real> out(e.data.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t u = 0;
        for (std::size_t k = 0; k < 8; ++k) u |= std::uint64_t{e.data[8 * i + k]} << (8 * k);
        out[i] = std::bit_cast<Real>(u);
    }
    return out;
}

std::vector<std::uint64_t> TensorTable::u64(std::string_view name) const {
    const TableEntry& e = require(name, DType::u64);
    std::vector<std::uint64_t> out(e.data.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (std::size_t k = 0; k < 8; ++k) out[i] |= std::uint64_t{e.data[8 * i + k]} << (8 * k);
    }
    return out;
}

std::string TensorTable::bytes(std::string_view name) const {
    const TableEntry& e = require(name, DType::u8);
    return {e.data.begin(), e.data.end()};
}

FeatureTensor TensorTable::tensor(std::string_view name) const {
    const TableEntry& e = require(name, DType::f64);
    if (e.dims.size() != 3) throw FormatError("tensor '" + std::string(name) + "' is not rank 3", 0);
    return FeatureTensor({e.dims[0], e.dims[1], e.dims[2]}, f64(name));
}

std::vector<std::uint8_t> encode_container(std::string_view text, const TensorTable& table) {
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put_le(out, kFormatVersion);
    put_le(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    put_le(out, static_cast<std::uint32_t>(table.entries().size()));
    for (const TableEntry& e : table.entries()) {
        put_le(out, static_cast<std::uint32_t>(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        out.push_back(static_cast<std::uint8_t>(e.dtype));
        put_le(out, static_cast<std::uint32_t>(e.dims.size()));
        for (std::uint64_t d : e.dims) put_le(out, d);
        out.insert(out.end(), e.data.begin(), e.data.end());
    }
    put_le(out, crc32_of(std::span(out).subspan(kHeader)));
    return out;
}

std::pair<std::string, TensorTable> decode_container(std::span<const std::uint8_t> b) {
    if (b.size() < 4) throw FormatError("truncated magic", b.size());
    if (std::memcmp(b.data(), kMagic, 4) != 0) throw FormatError("bad magic (expected \"EBSC\")", 0);
    Reader head(b, 4, b.size());
    const auto version = head.le<std::uint32_t>("version");
    if (version != kFormatVersion) throw UnsupportedVersionError(version);
    if (b.size() < kHeader + 4) throw FormatError("truncated checksum", b.size());
    const std::size_t crc_at = b.size() - 4;
    Reader tail(b, crc_at, b.size());
    const auto stored = tail.le<std::uint32_t>("checksum");
    const auto computed = crc32_of(b.subspan(kHeader, crc_at - kHeader));
    if (stored != computed) throw ChecksumError(stored, computed, crc_at);

    Reader r(b, kHeader, crc_at);
    const auto text_len = r.le<std::uint32_t>("text length");
    const auto text = r.take(text_len, "text");
    std::pair<std::string, TensorTable> out{std::string(text.begin(), text.end()), {}};
    const auto count = r.le<std::uint32_t>("tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t entry_at = r.pos();
        TableEntry e;
        const auto name_len = r.le<std::uint32_t>("tensor name length");
        const auto name = r.take(name_len, "tensor name");
        e.name.assign(name.begin(), name.end());
        const auto tag = r.le<std::uint8_t>("dtype tag");
        if (tag > 2) throw FormatError("unknown dtype tag " + std::to_string(tag), r.pos() - 1);
        e.dtype = static_cast<DType>(tag);
        const auto rank = r.le<std::uint32_t>("rank");
        if (rank > 8) throw FormatError("tensor rank " + std::to_string(rank) + " too large", r.pos() - 4);
        std::uint64_t elems = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const auto dim = r.le<std::uint64_t>("dimension");
            if (dim != 0 && elems > (std::uint64_t{1} << 40) / dim) throw FormatError("tensor too large", r.pos() - 8);
            elems *= dim;
            e.dims.push_back(dim);
        }
        const auto data = r.take(elems * dtype_size(e.dtype), "tensor data");
        e.data.assign(data.begin(), data.end());
        if (out.second.find(e.name)) throw FormatError("duplicate tensor '" + e.name + "'", entry_at);
        out.second.entries().push_back(std::move(e));
    }
    if (!r.done()) throw FormatError("trailing bytes before checksum", r.pos());
    return out;
}

void write_container(const std::filesystem::path& path, std::string_view text, const TensorTable& table) {
    const auto bytes = encode_container(text, table);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string(), 0);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed for " + path.string(), 0);
}

std::pair<std::string, TensorTable> read_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string(), 0);
    const std::vector<std::uint8_t> bytes(std::istreambuf_iterator<char>(in), {});
    try {
        return decode_container(bytes);
    } catch (const UnsupportedVersionError&) {
        throw;
    } catch (const ChecksumError&) {
        throw;
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what(), e.offset());
    }
}

Checkpoint make_checkpoint(const NetworkSpec& spec, const TrainState& state, std::string config_text,
                           std::optional<Whitening> whitening) {
    Checkpoint c;
    c.spec = spec;
    c.params = state.params;
    c.optimizer = state.optimizer;
    c.epoch = state.epoch;
    c.iteration = state.iteration;
    std::ostringstream os;
    os << state.rng;
    c.rng_state = os.str();
    c.config_text = std::move(config_text);
    c.whitening = std::move(whitening);
    return c;
}

TrainState restore_state(const Checkpoint& c) {
    TrainState s;
    s.params = c.params;
    s.optimizer = c.optimizer;
    s.epoch = c.epoch;
    s.iteration = c.iteration;
    std::istringstream is(c.rng_state);
    is >> s.rng;
    if (!is) throw FormatError("checkpoint generator state is malformed", 0);
    return s;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
    TensorTable t;
    ModelParams params = c.params;
    const auto views = parameter_views(params);
    for (std::size_t j = 0; j < views.size(); ++j) {
        const ParamView& v = views[j];
        std::vector<std::uint64_t> dims{v.values.size()};
        if (v.name.ends_with(".filters")) {
            const std::size_t b = std::stoul(v.name.substr(5));
            dims = filter_dims(params.blocks[b].filters);
        }
        t.add_f64("param/" + v.name, dims, v.values);
        if (j < c.optimizer.first_moment.size()) {
            t.add_f64("adam_m/" + v.name, dims, c.optimizer.first_moment[j]);
            t.add_f64("adam_v/" + v.name, dims, c.optimizer.second_moment[j]);
        }
    }
    const std::uint64_t counters[3] = {c.optimizer.step, c.epoch, c.iteration};
    t.add_u64("counters", {3}, counters);
    t.add_bytes("rng", c.rng_state);
    t.add_bytes("config", c.config_text);
    if (c.whitening) {
        t.add_f64("whiten/mean", {c.whitening->mean.size()}, c.whitening->mean);
        t.add_f64("whiten/matrix", {c.whitening->matrix.size()}, c.whitening->matrix);
        t.add_f64("whiten/floor", {1}, std::span<const Real>(&c.whitening->floor, 1));
    }
    return encode_container(c.spec.to_text(), t);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    auto [text, t] = decode_container(bytes);
    Checkpoint c;
    try {
        c.spec = NetworkSpec::from_text(text);
    } catch (const Error& e) {
        throw FormatError(std::string("checkpoint network spec: ") + e.what(), kHeader + 4);
    }
    c.params = build(c.spec, 0);
    const bool has_optimizer = t.find("adam_m/" + parameter_views(c.params).front().name) != nullptr;
    if (has_optimizer) c.optimizer = OptimizerState::for_params(c.params);
    const auto views = parameter_views(c.params);
    for (std::size_t j = 0; j < views.size(); ++j) {
        auto load = [&](const std::string& name, std::span<Real> dst) {
            const auto v = t.f64(name);
            if (v.size() != dst.size()) {
                throw FormatError("tensor '" + name + "' holds " + std::to_string(v.size()) + " values, expected " +
                                      std::to_string(dst.size()),
                                  0);
            }
            std::copy(v.begin(), v.end(), dst.begin());
        };
        load("param/" + views[j].name, views[j].values);
        if (has_optimizer) {
            load("adam_m/" + views[j].name, c.optimizer.first_moment[j]);
            load("adam_v/" + views[j].name, c.optimizer.second_moment[j]);
        }
    }
    for (const BlockParams& b : c.params.blocks) {
        if (b.shrink) {
            try {
                b.shrink->validate();
            } catch (const Error& e) {
                throw FormatError(std::string("checkpoint class bias: ") + e.what(), 0);
            }
        }
    }
    const auto counters = t.u64("counters");
    if (counters.size() != 3) throw FormatError("counters tensor must hold 3 values", 0);
    c.optimizer.step = counters[0];
    c.epoch = counters[1];
    c.iteration = counters[2];
    c.rng_state = t.bytes("rng");
    c.config_text = t.bytes("config");
    if (t.find("whiten/mean")) {
        Whitening w;
        w.mean = t.f64("whiten/mean");
        w.matrix = t.f64("whiten/matrix");
        const auto f = t.f64("whiten/floor");
        if (f.size() != 1) throw FormatError("whiten/floor must hold one value", 0);
        w.floor = f[0];
        if (!w.matrix.empty() && w.matrix.size() != w.mean.size() * w.mean.size()) {
            throw FormatError("whitening matrix does not match the mean", 0);
        }
        c.whitening = std::move(w);
    }
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    const auto bytes = encode_checkpoint(c);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string(), 0);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed for " + path.string(), 0);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string(), 0);
    const std::vector<std::uint8_t> bytes(std::istreambuf_iterator<char>(in), {});
    return decode_checkpoint(bytes);
}

} // namespace ebssc
