#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "unlearn/data/cifar10.hpp"
#include "unlearn/error.hpp"
#include "unlearn/linalg/conv.hpp"
#include "unlearn/nn/layer.hpp"
#include "unlearn/nn/train.hpp"
#include "unlearn/noise/noise.hpp"
#include "unlearn/rng.hpp"
#include "unlearn/sap/sap.hpp"

namespace unlearn {

/// 64-bit FNV-1a over a byte string.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[std::size_t(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

struct DatasetSpec {
    enum class Kind { Spiral, Cifar10 };
    Kind kind = Kind::Spiral;
    std::size_t n_per_class = 250;
    std::size_t test_n_per_class = 5000;
    double jitter = 0.05;
    std::string path;
    std::string test_path;
    ChannelNorm norm;
};

struct NoiseSpec {
    enum class Kind { None, Symmetric, Asymmetric, Hierarchical };
    Kind kind = Kind::None;
    double eta = 0.0;
    std::vector<std::vector<int>> groups;
};

struct SapSpec {
    double alpha = 30000.0;
    std::size_t n_trust = 1000;
    std::size_t patch_cap = kDefaultPatchCap;
};

struct FinetuneSpec {
    std::size_t retain_size = 0;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    DatasetSpec dataset;
    std::vector<Layer> layers;
    NoiseSpec noise;
    double split_fraction = 0.95;
    TrainConfig train;
    SapSpec sap;
    FinetuneSpec finetune;
    bool run_retrain = false;
};

namespace detail {

/// Wraps one JSON object for schema checking: every key must be consumed by
/// at() or opt(), and finish() rejects whatever is left over.
class StrictObject {
public:
    StrictObject(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object())
            throw ValidationError("config: " + path_ + ": expected an object");
    }

    const nlohmann::json& at(const char* key) {
        auto it = j_.find(key);
        if (it == j_.end())
            throw ValidationError("config: " + path_ + ": missing required key '" + key + "'");
        seen_.insert(key);
        return *it;
    }

    const nlohmann::json* opt(const char* key) {
        auto it = j_.find(key);
        if (it == j_.end()) return nullptr;
        seen_.insert(key);
        return &*it;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ValidationError("config: " + path_ + ": unknown key '" + it.key() + "'");
    }

    const std::string& path() const { return path_; }

private:
    const nlohmann::json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline double as_double(const nlohmann::json& j, const std::string& path) {
    if (!j.is_number()) throw ValidationError("config: " + path + ": expected a number");
    return j.get<double>();
}

inline std::uint64_t as_u64(const nlohmann::json& j, const std::string& path) {
    if (!j.is_number_integer() || (j.is_number_integer() && j.get<std::int64_t>() < 0 &&
                                   !j.is_number_unsigned()))
        throw ValidationError("config: " + path + ": expected a non-negative integer");
    return j.get<std::uint64_t>();
}

inline std::size_t as_count(const nlohmann::json& j, const std::string& path) {
    return static_cast<std::size_t>(as_u64(j, path));
}

inline bool as_bool(const nlohmann::json& j, const std::string& path) {
    if (!j.is_boolean()) throw ValidationError("config: " + path + ": expected a boolean");
    return j.get<bool>();
}

inline std::string as_string(const nlohmann::json& j, const std::string& path) {
    if (!j.is_string()) throw ValidationError("config: " + path + ": expected a string");
    return j.get<std::string>();
}

inline DatasetSpec parse_dataset(const nlohmann::json& j) {
    StrictObject o(j, "dataset");
    DatasetSpec d;
    const std::string kind = as_string(o.at("kind"), "dataset.kind");
    if (kind == "spiral") {
        d.kind = DatasetSpec::Kind::Spiral;
        if (const auto* v = o.opt("n_per_class")) d.n_per_class = as_count(*v, "dataset.n_per_class");
        if (const auto* v = o.opt("test_n_per_class"))
            d.test_n_per_class = as_count(*v, "dataset.test_n_per_class");
        if (const auto* v = o.opt("jitter")) d.jitter = as_double(*v, "dataset.jitter");
        if (d.n_per_class < 2 || d.test_n_per_class < 2)
            throw ValidationError("config: dataset: spiral needs at least 2 samples per class");
        if (!(d.jitter >= 0.0))
            throw ValidationError("config: dataset.jitter: must be >= 0");
    } else if (kind == "cifar10") {
        d.kind = DatasetSpec::Kind::Cifar10;
        d.path = as_string(o.at("path"), "dataset.path");
        d.test_path = as_string(o.at("test_path"), "dataset.test_path");
        if (const auto* v = o.opt("normalize")) {
            StrictObject n(*v, "dataset.normalize");
            const nlohmann::json& mean = n.at("mean");
            const nlohmann::json& stddev = n.at("stddev");
            if (!mean.is_array() || mean.size() != 3 || !stddev.is_array() || stddev.size() != 3)
                throw ValidationError(
                    "config: dataset.normalize: mean and stddev must be arrays of 3 numbers");
            for (std::size_t c = 0; c < 3; ++c) {
                d.norm.mean[c] = as_double(mean[c], "dataset.normalize.mean");
                d.norm.stddev[c] = as_double(stddev[c], "dataset.normalize.stddev");
            }
            n.finish();
        }
    } else {
        throw ValidationError("config: dataset.kind: must be 'spiral' or 'cifar10'");
    }
    o.finish();
    return d;
}

inline Layer parse_layer(const nlohmann::json& j, std::size_t index) {
    const std::string path = "model.layers[" + std::to_string(index) + "]";
    StrictObject o(j, path);
    const std::string kind = as_string(o.at("kind"), path + ".kind");
    Layer l;
    if (kind == "dense") {
        l = make_dense(as_count(o.at("in"), path + ".in"), as_count(o.at("out"), path + ".out"));
    } else if (kind == "batchnorm") {
        l = make_batchnorm(as_count(o.at("width"), path + ".width"));
    } else if (kind == "relu") {
        l = make_relu();
    } else if (kind == "conv2d") {
        ConvGeometry g;
        g.in_channels = as_count(o.at("in_channels"), path + ".in_channels");
        g.out_channels = as_count(o.at("out_channels"), path + ".out_channels");
        g.kernel = as_count(o.at("kernel"), path + ".kernel");
        g.stride = as_count(o.at("stride"), path + ".stride");
        g.pad = as_count(o.at("pad"), path + ".pad");
        g.in_h = as_count(o.at("in_h"), path + ".in_h");
        g.in_w = as_count(o.at("in_w"), path + ".in_w");
        l = make_conv2d(g);
    } else {
        throw ValidationError("config: " + path + ".kind: unknown layer kind '" + kind + "'");
    }
    o.finish();
    return l;
}

inline NoiseSpec parse_noise(const nlohmann::json& j) {
    StrictObject o(j, "noise");
    NoiseSpec n;
    const std::string kind = as_string(o.at("kind"), "noise.kind");
    if (kind == "none") {
        n.kind = NoiseSpec::Kind::None;
        if (const auto* v = o.opt("eta")) {
            if (as_double(*v, "noise.eta") != 0.0)
                throw ValidationError("config: noise.eta: must be 0 when kind is none");
        }
    } else if (kind == "symmetric" || kind == "asymmetric" || kind == "hierarchical") {
        n.kind = kind == "symmetric"    ? NoiseSpec::Kind::Symmetric
                 : kind == "asymmetric" ? NoiseSpec::Kind::Asymmetric
                                        : NoiseSpec::Kind::Hierarchical;
        n.eta = as_double(o.at("eta"), "noise.eta");
        if (!(n.eta >= 0.0 && n.eta < 1.0))
            throw ValidationError("config: noise.eta: must lie in [0,1)");
        if (n.kind == NoiseSpec::Kind::Hierarchical) {
            const nlohmann::json& groups = o.at("groups");
            if (!groups.is_array())
                throw ValidationError("config: noise.groups: expected an array of arrays");
            for (std::size_t g = 0; g < groups.size(); ++g) {
                if (!groups[g].is_array())
                    throw ValidationError("config: noise.groups: expected an array of arrays");
                std::vector<int> members;
                for (const auto& m : groups[g])
                    members.push_back(static_cast<int>(as_u64(m, "noise.groups")));
                n.groups.push_back(std::move(members));
            }
        }
    } else {
        throw ValidationError(
            "config: noise.kind: must be one of none, symmetric, asymmetric, hierarchical");
    }
    o.finish();
    return n;
}

inline TrainConfig parse_train(const nlohmann::json& j) {
    StrictObject o(j, "train");
    TrainConfig t;
    if (const auto* v = o.opt("lr")) t.lr = as_double(*v, "train.lr");
    if (const auto* v = o.opt("momentum")) t.momentum = as_double(*v, "train.momentum");
    if (const auto* v = o.opt("nesterov")) t.nesterov = as_bool(*v, "train.nesterov");
    if (const auto* v = o.opt("weight_decay")) t.weight_decay = as_double(*v, "train.weight_decay");
    if (const auto* v = o.opt("batch_size")) t.batch_size = as_count(*v, "train.batch_size");
    if (const auto* v = o.opt("epochs")) t.epochs = as_count(*v, "train.epochs");
    if (const auto* v = o.opt("plateau_decay")) t.plateau_decay = as_double(*v, "train.plateau_decay");
    if (const auto* v = o.opt("plateau_patience"))
        t.plateau_patience = as_count(*v, "train.plateau_patience");
    if (const auto* v = o.opt("plateau_min_improvement"))
        t.plateau_min_improvement = as_double(*v, "train.plateau_min_improvement");
    o.finish();
    t.validate();
    return t;
}

inline SapSpec parse_sap(const nlohmann::json& j) {
    StrictObject o(j, "sap");
    SapSpec s;
    if (const auto* v = o.opt("alpha")) s.alpha = as_double(*v, "sap.alpha");
    if (const auto* v = o.opt("n_trust")) s.n_trust = as_count(*v, "sap.n_trust");
    if (const auto* v = o.opt("patch_cap")) s.patch_cap = as_count(*v, "sap.patch_cap");
    if (!(s.alpha > 0.0)) throw ValidationError("config: sap.alpha: must be > 0");
    if (s.n_trust < 1) throw ValidationError("config: sap.n_trust: must be >= 1");
    o.finish();
    return s;
}

}  // namespace detail

/// Parses and validates a full experiment configuration from JSON text.
/// Unknown keys anywhere in the document are rejected.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
    detail::StrictObject o(j, "(root)");
    ExperimentConfig cfg;
    cfg.seed = detail::as_u64(o.at("seed"), "seed");
    if (const auto* v = o.opt("out_dir")) cfg.out_dir = detail::as_string(*v, "out_dir");
    cfg.dataset = detail::parse_dataset(o.at("dataset"));
    {
        detail::StrictObject m(o.at("model"), "model");
        const nlohmann::json& layers = m.at("layers");
        if (!layers.is_array() || layers.empty())
            throw ValidationError("config: model.layers: expected a non-empty array");
        for (std::size_t i = 0; i < layers.size(); ++i)
            cfg.layers.push_back(detail::parse_layer(layers[i], i));
        m.finish();
    }
    if (const auto* v = o.opt("noise")) cfg.noise = detail::parse_noise(*v);
    if (const auto* v = o.opt("split_fraction")) {
        cfg.split_fraction = detail::as_double(*v, "split_fraction");
        if (!(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0))
            throw ValidationError("config: split_fraction: must lie in (0,1)");
    }
    if (const auto* v = o.opt("train")) cfg.train = detail::parse_train(*v);
    if (const auto* v = o.opt("sap")) cfg.sap = detail::parse_sap(*v);
    if (const auto* v = o.opt("finetune")) {
        detail::StrictObject f(*v, "finetune");
        cfg.finetune.retain_size = detail::as_count(f.at("retain_size"), "finetune.retain_size");
        f.finish();
    }
    if (const auto* v = o.opt("run_retrain"))
        cfg.run_retrain = detail::as_bool(*v, "run_retrain");
    o.finish();
    return cfg;
}

/// Canonical JSON rendering of the effective configuration. Keys are emitted
/// in sorted order, so the digest of this text is stable.
inline nlohmann::json config_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    nlohmann::json d;
    if (cfg.dataset.kind == DatasetSpec::Kind::Spiral) {
        d["kind"] = "spiral";
        d["n_per_class"] = cfg.dataset.n_per_class;
        d["test_n_per_class"] = cfg.dataset.test_n_per_class;
        d["jitter"] = cfg.dataset.jitter;
    } else {
        d["kind"] = "cifar10";
        d["path"] = cfg.dataset.path;
        d["test_path"] = cfg.dataset.test_path;
        d["normalize"] = {{"mean", cfg.dataset.norm.mean}, {"stddev", cfg.dataset.norm.stddev}};
    }
    j["dataset"] = d;
    nlohmann::json layers = nlohmann::json::array();
    for (const Layer& l : cfg.layers) {
        nlohmann::json e;
        switch (l.kind) {
            case Layer::Kind::Dense:
                e = {{"kind", "dense"}, {"in", l.weight.cols()}, {"out", l.weight.rows()}};
                break;
            case Layer::Kind::Conv2d:
                e = {{"kind", "conv2d"},
                     {"in_channels", l.geom.in_channels},
                     {"out_channels", l.geom.out_channels},
                     {"kernel", l.geom.kernel},
                     {"stride", l.geom.stride},
                     {"pad", l.geom.pad},
                     {"in_h", l.geom.in_h},
                     {"in_w", l.geom.in_w}};
                break;
            case Layer::Kind::BatchNorm:
                e = {{"kind", "batchnorm"}, {"width", l.gamma.size()}};
                break;
            case Layer::Kind::Relu:
                e = {{"kind", "relu"}};
                break;
        }
        layers.push_back(e);
    }
    j["model"] = {{"layers", layers}};
    nlohmann::json n;
    switch (cfg.noise.kind) {
        case NoiseSpec::Kind::None: n["kind"] = "none"; break;
        case NoiseSpec::Kind::Symmetric: n["kind"] = "symmetric"; break;
        case NoiseSpec::Kind::Asymmetric: n["kind"] = "asymmetric"; break;
        case NoiseSpec::Kind::Hierarchical: n["kind"] = "hierarchical"; break;
    }
    if (cfg.noise.kind != NoiseSpec::Kind::None) n["eta"] = cfg.noise.eta;
    if (cfg.noise.kind == NoiseSpec::Kind::Hierarchical) n["groups"] = cfg.noise.groups;
    j["noise"] = n;
    j["split_fraction"] = cfg.split_fraction;
    j["train"] = {{"lr", cfg.train.lr},
                  {"momentum", cfg.train.momentum},
                  {"nesterov", cfg.train.nesterov},
                  {"weight_decay", cfg.train.weight_decay},
                  {"batch_size", cfg.train.batch_size},
                  {"epochs", cfg.train.epochs},
                  {"plateau_decay", cfg.train.plateau_decay},
                  {"plateau_patience", cfg.train.plateau_patience},
                  {"plateau_min_improvement", cfg.train.plateau_min_improvement}};
    j["sap"] = {{"alpha", cfg.sap.alpha},
                {"n_trust", cfg.sap.n_trust},
                {"patch_cap", cfg.sap.patch_cap}};
    j["finetune"] = {{"retain_size", cfg.finetune.retain_size}};
    j["run_retrain"] = cfg.run_retrain;
    return j;
}

struct LoadedConfig {
    ExperimentConfig cfg;
    std::string digest;
};

/// Reads, parses, and validates a config file, then applies seed and output
/// overrides. Precedence: command-line flag, then UNLEARN_SEED, then file.
/// Parse failures carry the file path and line number.
inline LoadedConfig load_config(const std::string& path,
                                std::optional<std::uint64_t> seed_flag = {},
                                std::optional<std::string> out_flag = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        std::size_t line = 1;
        const std::size_t stop = std::min(e.byte, text.size());
        for (std::size_t i = 0; i < stop; ++i)
            if (text[i] == '\n') ++line;
        throw ValidationError(path + ":" + std::to_string(line) + ": " + e.what());
    }

    LoadedConfig out;
    try {
        out.cfg = parse_config(j);
    } catch (const ValidationError& e) {
        throw ValidationError(path + ": " + e.what());
    }

    if (const char* env = std::getenv("UNLEARN_SEED")) {
        try {
            std::size_t used = 0;
            const std::string s(env);
            const unsigned long long v = std::stoull(s, &used);
            if (used != s.size()) throw std::invalid_argument("trailing characters");
            out.cfg.seed = v;
        } catch (const std::exception&) {
            throw ValidationError("UNLEARN_SEED: not a valid non-negative integer");
        }
    }
    if (seed_flag) out.cfg.seed = *seed_flag;
    if (out_flag) out.cfg.out_dir = *out_flag;

    out.digest = hex64(fnv1a64(config_json(out.cfg).dump()));
    return out;
}

}  // namespace unlearn
