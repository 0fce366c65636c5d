#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "ebssc/check.hpp"
#include "ebssc/checkpoint.hpp"
#include "ebssc/config.hpp"
#include "ebssc/dataset.hpp"
#include "ebssc/energy.hpp"
#include "ebssc/error.hpp"
#include "ebssc/learn.hpp"
#include "ebssc/network.hpp"
#include "ebssc/text.hpp"

namespace fs = std::filesystem;
using namespace ebssc;

namespace {

enum Exit { ok = 0, usage = 1, data_error = 2, check_failed = 3 };

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Dataset limited(Dataset d, std::size_t limit) {
    if (limit == 0 || limit >= d.size()) return d;
    d.images.resize(limit);
    d.labels.resize(limit);
    return d;
}

Dataset whitened(const Dataset& d, const std::optional<Whitening>& w) { return w ? apply_whitening(d, *w) : d; }

// Binary PGM / PPM (maxval ≤ 255) scaled to [0,1].
FeatureTensor read_pnm(const fs::path& path) {
    const auto bytes = read_file_bytes(path);
    std::size_t pos = 0;
    auto token = [&]() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
        std::string t;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) t += static_cast<char>(bytes[pos++]);
        if (t.empty()) throw FormatError("truncated PNM header", pos);
        return t;
    };
    const std::string magic = token();
    if (magic != "P5" && magic != "P6") throw FormatError("expected a P5 or P6 image", 0);
    const std::size_t w = parse_count(token(), "width"), h = parse_count(token(), "height");
    const std::size_t maxval = parse_count(token(), "maxval");
    if (maxval == 0 || maxval > 255) throw FormatError("only 8-bit PNM images are supported", pos);
    ++pos;
    const std::size_t c = magic == "P5" ? 1 : 3;
    if (bytes.size() < pos + w * h * c) throw FormatError("truncated PNM pixel data", bytes.size());
    FeatureTensor t({c, h, w});
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t col = 0; col < w; ++col) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                t(ch, r, col) = bytes[pos + (r * w + col) * c + ch] / static_cast<Real>(maxval);
            }
        }
    }
    return t;
}

struct ImageSource {
    std::string image;
    std::string data;
    std::size_t index = 0;
    std::string split = "test";
};

void add_image_options(CLI::App* cmd, ImageSource& src) {
    auto* img = cmd->add_option("--image", src.image, "P5/P6 image file");
    auto* dat = cmd->add_option("--data", src.data, "dataset directory (with --index)");
    img->excludes(dat);
    cmd->add_option("--index", src.index, "example index within --data");
    cmd->add_option("--split", src.split, "train or test")->check(CLI::IsMember({"train", "test"}));
}

std::pair<FeatureTensor, std::optional<std::size_t>> load_image(const ImageSource& src, const Checkpoint& ck) {
    FeatureTensor x;
    std::optional<std::size_t> label;
    if (!src.image.empty()) {
        x = read_pnm(src.image);
    } else if (!src.data.empty()) {
        const RunConfig rc = RunConfig::parse(ck.config_text);
        const Dataset d = load_split(src.data, rc.dataset, src.split == "train");
        if (src.index >= d.size()) {
            throw UsageError("--index " + std::to_string(src.index) + " out of range (" + std::to_string(d.size()) +
                             " examples)");
        }
        x = d.images[src.index];
        label = d.labels[src.index];
    } else {
        throw UsageError("one of --image or --data is required");
    }
    if (x.shape() != ck.spec.input_shape) {
        throw UsageError("image shape " + x.shape().to_string() + " does not match the network input " +
                         ck.spec.input_shape.to_string());
    }
    if (ck.whitening) {
        Dataset one;
        one.images = {x};
        one.labels = {0};
        one.class_names = {"0"};
        x = apply_whitening(one, *ck.whitening).images[0];
    }
    return {x, label};
}

std::vector<std::size_t> class_list(const std::string& arg, std::size_t num_classes) {
    std::vector<std::size_t> out;
    if (arg == "all") {
        for (std::size_t y = 0; y < num_classes; ++y) out.push_back(y);
        return out;
    }
    const std::size_t y = parse_count(arg, "--class");
    if (y >= num_classes) throw UsageError("--class " + arg + " exceeds the " + std::to_string(num_classes) + " classes");
    return {y};
}

std::size_t unroll_of(const Checkpoint& ck) {
    if (ck.config_text.empty()) return 0;
    return RunConfig::parse(ck.config_text).train.unroll_T;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& data_dir,
              const std::string& out, const std::string& log_path, const std::string& resume) {
    RunConfig rc = RunConfig::load(config_path);
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
        rc.set(trim(std::string_view(kv).substr(0, eq)), trim(std::string_view(kv).substr(eq + 1)));
    }
    rc.validate();

    const Dataset raw_train = limited(load_split(data_dir, rc.dataset, true), rc.train_limit);
    std::optional<Dataset> raw_test;
    try {
        raw_test = limited(load_split(data_dir, rc.dataset, false), rc.test_limit);
    } catch (const FormatError& e) {
        std::cerr << "no test split: " << e.what() << "\n";
    }

    std::optional<Whitening> wh;
    if (rc.whitening != WhiteningMode::none) wh = fit_whitening(raw_train, rc.whitening, rc.zca_floor);
    const Dataset train_set = whitened(raw_train, wh);
    std::optional<Dataset> test_set;
    if (raw_test) test_set = whitened(*raw_test, wh);

    NetworkSpec spec = rc.network(train_set.images.front().shape(), train_set.num_classes());
    TrainState state;
    if (!resume.empty()) {
        const Checkpoint prev = load_checkpoint(resume);
        if (!(prev.spec == spec)) throw UsageError("--resume checkpoint was trained with a different network");
        state = restore_state(prev);
    } else {
        state = initial_state(spec, rc.train);
    }

    std::ofstream log_file;
    if (!log_path.empty()) {
        log_file.open(log_path);
        if (!log_file) throw FormatError("cannot write " + log_path, 0);
    }
    std::ostream& log = log_path.empty() ? static_cast<std::ostream&>(std::cout) : log_file;
    log << "epoch,iter,split,loss,error_rate\n";

    TrainHooks hooks;
    hooks.metric_log = &log;
    hooks.test = test_set ? &*test_set : nullptr;
    if (rc.augments()) {
        const AugmentOptions ao{rc.augment_flip, rc.crop_pad};
        hooks.augment = [ao](const FeatureTensor& x, std::mt19937_64& rng) { return augment(x, rng, ao); };
    }
    const auto t0 = std::chrono::steady_clock::now();
    hooks.on_epoch = [&](const TrainState& s) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cerr << "epoch " << s.epoch << " done after " << format_real(std::round(secs * 10) / 10) << " s\n";
        save_checkpoint(out, make_checkpoint(spec, s, rc.to_text(), wh));
    };
    train(rc.train, spec, train_set, state, hooks);
    save_checkpoint(out, make_checkpoint(spec, state, rc.to_text(), wh));
    return ok;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& split,
             std::optional<std::size_t> unroll, std::size_t limit) {
    const Checkpoint ck = load_checkpoint(ckpt);
    const RunConfig rc = RunConfig::parse(ck.config_text);
    const Dataset d = whitened(limited(load_split(data_dir, rc.dataset, split == "train"), limit), ck.whitening);
    if (d.size() > 0 && d.images.front().shape() != ck.spec.input_shape) {
        throw UsageError("dataset images do not match the network input " + ck.spec.input_shape.to_string());
    }
    const EvalResult r = evaluate(ck.params, ck.spec, d, rc.train.alpha, unroll.value_or(rc.train.unroll_T));
    std::cout << "examples " << d.size() << "\nloss " << format_real(r.loss) << "\nerror_rate "
              << format_real(r.error_rate) << "\n";
    return ok;
}

int cmd_encode(const std::string& ckpt, const ImageSource& src, const std::string& cls, const std::string& out) {
    const Checkpoint ck = load_checkpoint(ckpt);
    const auto [x, label] = load_image(src, ck);
    const std::size_t unroll = unroll_of(ck);
    TensorTable table;
    table.add_tensor("input", x);
    if (label) {
        const std::uint64_t l = *label;
        table.add_u64("label", {1}, std::span(&l, 1));
    }
    const bool energy = ck.spec.classifier == ClassifierKind::energy;
    const auto classes = energy ? class_list(cls, ck.spec.num_classes) : std::vector<std::size_t>{0};
    std::vector<Real> scores(ck.spec.num_classes, -std::numeric_limits<Real>::infinity());
    for (std::size_t y : classes) {
        ForwardOptions fo;
        fo.unroll = unroll;
        if (energy) fo.label = y;
        const ForwardResult f = forward(ck.params, ck.spec, x, fo);
        const Trace& tr = energy ? f.trace_for(y) : f.traces.front();
        const std::string prefix = energy ? "class" + std::to_string(y) + "/" : "";
        for (std::size_t b = 0; b < ck.spec.blocks.size(); ++b) {
            if (!ck.spec.blocks[b].is_conv()) continue;
            const BlockTrace& bt = tr.blocks[b];
            table.add_tensor(prefix + "block" + std::to_string(b) + "/code", bt.code);
            if (ck.spec.blocks[b].kind != BlockKind::ebssc) continue;
            const ClassBiasParams& p = *ck.params.blocks[b].shrink;
            const BlockSpec& bs = ck.spec.blocks[b];
            // β = 0 moves every threshold into the class term.
            const EnergyBreakdown e = energy_breakdown(bt.input, y, bt.code, ck.params.blocks[b].filters, 0,
                                                       to_split_classifier(p, 0), bs.pad);
            const Real row[5] = {e.e_code, e.e_class, e.e_total, e.l1_of_code, e.recon_inner};
            table.add_f64(prefix + "block" + std::to_string(b) + "/energy", {5}, row);
        }
        if (energy) {
            scores[y] = f.scores[y];
        } else {
            scores = f.scores;
        }
    }
    table.add_f64("scores", {scores.size()}, scores);
    write_container(out, ck.spec.to_text(), table);
    std::cout << "scores";
    for (Real s : scores) std::cout << " " << format_real(s);
    std::cout << "\n";
    return ok;
}

int cmd_decode(const std::string& ckpt, const ImageSource& src, std::size_t layer, const std::string& mode,
               const std::string& cls, const std::string& out) {
    const Checkpoint ck = load_checkpoint(ckpt);
    const NetworkSpec& spec = ck.spec;
    if (layer >= spec.blocks.size() || !spec.blocks[layer].is_conv()) {
        std::string valid;
        for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
            if (spec.blocks[b].is_conv()) valid += (valid.empty() ? "" : ", ") + std::to_string(b);
        }
        throw UsageError("--layer must name a convolution block (" + valid + ")");
    }
    if (mode != "recon" && !spec.blocks[layer].is_coding()) {
        throw UsageError("--mode " + mode + " needs an ssc or ebssc block");
    }
    const auto [x, label] = load_image(src, ck);
    const bool energy = spec.classifier == ClassifierKind::energy;
    const auto classes = energy ? class_list(cls, spec.num_classes) : std::vector<std::size_t>{0};
    const std::size_t unroll = unroll_of(ck);

    // Rows: every convolution block up to the requested one; columns: hypothesized classes.
    std::vector<std::vector<FeatureTensor>> grid;
    for (std::size_t b = 0; b <= layer; ++b) {
        if (!spec.blocks[b].is_conv() || (mode != "recon" && !spec.blocks[b].is_coding())) continue;
        std::vector<FeatureTensor> row;
        for (std::size_t y : classes) {
            ForwardOptions fo;
            fo.unroll = unroll;
            if (energy) fo.label = y;
            const ForwardResult f = forward(ck.params, spec, x, fo);
            const Trace& tr = energy ? f.trace_for(y) : f.traces.front();
            if (mode == "recon") row.push_back(decode(ck.params, spec, tr, b));
            else if (mode == "bias") row.push_back(decode_class_bias(ck.params, spec, y, b, &tr));
            else row.push_back(decode_residual(ck.params, spec, x, y, b));
        }
        grid.push_back(std::move(row));
    }
    emit_image_grid(grid, out);
    std::cout << "wrote " << grid.size() << "x" << classes.size() << " grid to " << out << "\n";
    return ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spherical sparse coding networks: train, evaluate, inspect"};
    app.require_subcommand(1);

    std::string config, data, out, log, resume, ckpt, split = "test", mode = "recon", cls = "all";
    std::vector<std::string> overrides;
    std::optional<std::size_t> unroll;
    std::size_t limit = 0, layer = 0;
    std::uint64_t seed = CheckOptions{}.seed;
    ImageSource enc_src, dec_src;

    auto* train_cmd = app.add_subcommand("train", "train a network from a config file");
    train_cmd->add_option("--config", config, "key = value run configuration")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--data", data, "dataset directory")->required();
    train_cmd->add_option("--out", out, "checkpoint written after every epoch")->required();
    train_cmd->add_option("--log", log, "CSV metric log (default: stdout)");
    train_cmd->add_option("--set", overrides, "override a config key (key=value)");
    train_cmd->add_option("--resume", resume, "continue from a checkpoint")->check(CLI::ExistingFile);

    auto* eval_cmd = app.add_subcommand("eval", "error rate of a checkpoint");
    eval_cmd->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--data", data, "dataset directory")->required();
    eval_cmd->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
    eval_cmd->add_option("--unroll", unroll, "override the trained unrolling depth")->check(CLI::Range(0, 4));
    eval_cmd->add_option("--limit", limit, "evaluate the first N examples only");

    auto* enc_cmd = app.add_subcommand("encode", "dump codes and energies to a tensor table");
    enc_cmd->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    add_image_options(enc_cmd, enc_src);
    enc_cmd->add_option("--class", cls, "class id or 'all'");
    enc_cmd->add_option("--out", out, "output tensor table")->required();

    auto* dec_cmd = app.add_subcommand("decode", "emit a decoded image grid (PPM)");
    dec_cmd->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    add_image_options(dec_cmd, dec_src);
    dec_cmd->add_option("--layer", layer, "block index")->required();
    dec_cmd->add_option("--mode", mode, "recon, bias or residual")->check(CLI::IsMember({"recon", "bias", "residual"}));
    dec_cmd->add_option("--class", cls, "class id or 'all'");
    dec_cmd->add_option("--out", out, "output PPM")->required();

    auto* check_cmd = app.add_subcommand("check", "run the oracle suite");
    check_cmd->add_option("--seed", seed, "seed for the random instances");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? ok : usage;
    }

    try {
        if (*train_cmd) return cmd_train(config, overrides, data, out, log, resume);
        if (*eval_cmd) return cmd_eval(ckpt, data, split, unroll, limit);
        if (*enc_cmd) return cmd_encode(ckpt, enc_src, cls, out);
        if (*dec_cmd) return cmd_decode(ckpt, dec_src, layer, mode, cls, out);
        if (*check_cmd) return run_oracle_suite(std::cout, {seed}) ? ok : check_failed;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return usage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return usage;
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return usage;
    } catch (const FormatError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return data_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return data_error;
    }
    return usage;
}
