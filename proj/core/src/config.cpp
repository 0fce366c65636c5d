#include "ebssc/config.hpp"

#include <fstream>
#include <sstream>

#include "ebssc/error.hpp"
#include "ebssc/text.hpp"

namespace ebssc {

namespace {

const std::vector<std::string>& key_list() {
    static const std::vector<std::string> k{
        "variant",     "width_scale",  "init_beta", "dataset",     "whitening",  "zca_floor",
        "augment_flip", "crop_pad",    "train_limit", "test_limit", "alpha",     "learning_rate",
        "adam_beta1",  "adam_beta2",   "adam_eps",  "batch_size",  "epochs",     "dropout",
        "unroll_T",    "seed"};
    return k;
}

std::string joined_keys() {
    std::string s;
    for (const auto& k : key_list()) s += (s.empty() ? "" : ", ") + k;
    return s;
}

bool parse_bool(std::string_view v, std::string_view key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(std::string(key) + ": expected true or false, got '" + std::string(v) + "'");
}

std::size_t parse_size(std::string_view v, std::string_view key) {
    return static_cast<std::size_t>(parse_count(v, key));
}

} // namespace

std::string to_string(DatasetKind k) { return k == DatasetKind::mnist ? "mnist" : "cifar10"; }

std::string to_string(WhiteningMode m) {
    switch (m) {
    case WhiteningMode::none: return "none";
    case WhiteningMode::center: return "center";
    case WhiteningMode::zca: return "zca";
    }
    return "none";
}

std::vector<std::string> RunConfig::keys() { return key_list(); }

void RunConfig::set(std::string_view key, std::string_view v) {
    if (key == "variant") {
        variant = std::string(v);
    } else if (key == "width_scale") {
        width_scale = parse_real(v, key);
    } else if (key == "init_beta") {
        init_beta = parse_real(v, key);
    } else if (key == "dataset") {
        if (v == "mnist") dataset = DatasetKind::mnist;
        else if (v == "cifar10") dataset = DatasetKind::cifar10;
        else throw ConfigError("dataset: expected mnist or cifar10, got '" + std::string(v) + "'");
    } else if (key == "whitening") {
        if (v == "none") whitening = WhiteningMode::none;
        else if (v == "center") whitening = WhiteningMode::center;
        else if (v == "zca") whitening = WhiteningMode::zca;
        else throw ConfigError("whitening: expected none, center or zca, got '" + std::string(v) + "'");
    } else if (key == "zca_floor") {
        zca_floor = parse_real(v, key);
    } else if (key == "augment_flip") {
        augment_flip = parse_bool(v, key);
    } else if (key == "crop_pad") {
        crop_pad = parse_size(v, key);
    } else if (key == "train_limit") {
        train_limit = parse_size(v, key);
    } else if (key == "test_limit") {
        test_limit = parse_size(v, key);
    } else if (key == "alpha") {
        train.alpha = parse_real(v, key);
    } else if (key == "learning_rate") {
        train.learning_rate = parse_real(v, key);
    } else if (key == "adam_beta1") {
        train.adam_beta1 = parse_real(v, key);
    } else if (key == "adam_beta2") {
        train.adam_beta2 = parse_real(v, key);
    } else if (key == "adam_eps") {
        train.adam_eps = parse_real(v, key);
    } else if (key == "batch_size") {
        train.batch_size = parse_size(v, key);
    } else if (key == "epochs") {
        train.epochs = parse_size(v, key);
    } else if (key == "dropout") {
        train.dropout = parse_real(v, key);
    } else if (key == "unroll_T") {
        train.unroll_T = parse_size(v, key);
    } else if (key == "seed") {
        train.seed = parse_count(v, key);
    } else {
        throw ConfigError("unknown key '" + std::string(key) + "'; valid keys: " + joined_keys());
    }
}

RunConfig RunConfig::parse(std::string_view text) {
    RunConfig c;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (value.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty value for '" + std::string(key) + "'");
        try {
            c.set(key, value);
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string RunConfig::to_text() const {
    std::ostringstream o;
    o << "variant = " << variant << "\n"
      << "width_scale = " << format_real(width_scale) << "\n"
      << "init_beta = " << format_real(init_beta) << "\n"
      << "dataset = " << to_string(dataset) << "\n"
      << "whitening = " << to_string(whitening) << "\n"
      << "zca_floor = " << format_real(zca_floor) << "\n"
      << "augment_flip = " << (augment_flip ? "true" : "false") << "\n"
      << "crop_pad = " << crop_pad << "\n"
      << "train_limit = " << train_limit << "\n"
      << "test_limit = " << test_limit << "\n"
      << "alpha = " << format_real(train.alpha) << "\n"
      << "learning_rate = " << format_real(train.learning_rate) << "\n"
      << "adam_beta1 = " << format_real(train.adam_beta1) << "\n"
      << "adam_beta2 = " << format_real(train.adam_beta2) << "\n"
      << "adam_eps = " << format_real(train.adam_eps) << "\n"
      << "batch_size = " << train.batch_size << "\n"
      << "epochs = " << train.epochs << "\n"
      << "dropout = " << format_real(train.dropout) << "\n"
      << "unroll_T = " << train.unroll_T << "\n"
      << "seed = " << train.seed << "\n";
    return o.str();
}

void RunConfig::validate() const {
    try {
        train.validate();
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
    bool known = false;
    for (const auto& n : variant_names()) known = known || n == variant;
    if (!known) {
        std::string names;
        for (const auto& n : variant_names()) names += (names.empty() ? "" : ", ") + n;
        throw ConfigError("unknown variant '" + variant + "'; valid variants: " + names);
    }
    if (!(width_scale > 0)) throw ConfigError("width_scale must be positive");
    if (!(init_beta >= 0)) throw ConfigError("init_beta must be >= 0");
    if (!(zca_floor > 0)) throw ConfigError("zca_floor must be positive");
}

NetworkSpec RunConfig::network(const Shape3& input_shape, std::size_t num_classes) const {
    VariantOptions o;
    o.input_shape = input_shape;
    o.num_classes = num_classes;
    o.width_scale = width_scale;
    o.dropout = train.dropout;
    o.init_beta = init_beta;
    return make_variant(variant, o);
}

Dataset load_split(const std::filesystem::path& dir, DatasetKind kind, bool train) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw FormatError("data directory " + dir.string() + " does not exist", 0);
    if (kind == DatasetKind::mnist) {
        const std::string prefix = train ? "train" : "t10k";
        auto pick = [&](const std::string& stem) {
            for (const auto& name : {stem, stem + ".gz"}) {
                if (fs::exists(dir / name)) return dir / name;
            }
            throw FormatError("missing " + (dir / stem).string() + "[.gz]", 0);
        };
        return load_idx(pick(prefix + "-images-idx3-ubyte"), pick(prefix + "-labels-idx1-ubyte"));
    }
    std::vector<fs::path> files;
    if (train) {
        for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
    } else {
        files.push_back(dir / "test_batch.bin");
    }
    for (const auto& f : files) {
        if (!fs::exists(f)) throw FormatError("missing " + f.string(), 0);
    }
    return load_cifar10_bin(files);
}

} // namespace ebssc
