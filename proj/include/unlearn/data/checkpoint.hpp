#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "unlearn/error.hpp"
#include "unlearn/nn/model.hpp"

namespace unlearn {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'U', 'N', 'L', 'C', 'K', 'P', 'T', '0'};

struct Provenance {
    std::uint64_t seed = 0;
    std::string config_digest;
};

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    Model model;
    Provenance provenance;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class ByteReader {
public:
    ByteReader(const std::string& bytes) : b_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool exhausted() const { return pos_ == b_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > b_.size()) throw FormatError("checkpoint: truncated file");
    }
    const std::string& b_;
    std::size_t pos_ = 0;
};

inline nlohmann::json layer_descriptor(const Layer& l) {
    nlohmann::json j;
    switch (l.kind) {
        case Layer::Kind::Dense:
            j["kind"] = "dense";
            j["in"] = l.weight.cols();
            j["out"] = l.weight.rows();
            break;
        case Layer::Kind::Conv2d:
            j["kind"] = "conv2d";
            j["in_channels"] = l.geom.in_channels;
            j["out_channels"] = l.geom.out_channels;
            j["kernel"] = l.geom.kernel;
            j["stride"] = l.geom.stride;
            j["pad"] = l.geom.pad;
            j["in_h"] = l.geom.in_h;
            j["in_w"] = l.geom.in_w;
            break;
        case Layer::Kind::BatchNorm:
            j["kind"] = "batchnorm";
            j["width"] = l.gamma.size();
            break;
        case Layer::Kind::Relu:
            j["kind"] = "relu";
            break;
    }
    return j;
}

inline Layer layer_from_descriptor(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "dense")
        return make_dense(j.at("in").get<std::size_t>(), j.at("out").get<std::size_t>());
    if (kind == "conv2d") {
        ConvGeometry g;
        g.in_channels = j.at("in_channels").get<std::size_t>();
        g.out_channels = j.at("out_channels").get<std::size_t>();
        g.kernel = j.at("kernel").get<std::size_t>();
        g.stride = j.at("stride").get<std::size_t>();
        g.pad = j.at("pad").get<std::size_t>();
        g.in_h = j.at("in_h").get<std::size_t>();
        g.in_w = j.at("in_w").get<std::size_t>();
        return make_conv2d(g);
    }
    if (kind == "batchnorm") return make_batchnorm(j.at("width").get<std::size_t>());
    if (kind == "relu") return make_relu();
    throw FormatError("checkpoint: unknown layer kind '" + kind + "'");
}

template <typename Fn>
inline void for_each_param_array(const Layer& l, Fn&& fn) {
    switch (l.kind) {
        case Layer::Kind::Dense:
        case Layer::Kind::Conv2d:
            fn(l.weight.data());
            fn(l.bias);
            break;
        case Layer::Kind::BatchNorm:
            fn(l.gamma);
            fn(l.beta);
            fn(l.run_mean);
            fn(l.run_var);
            break;
        case Layer::Kind::Relu:
            break;
    }
}

template <typename Fn>
inline void for_each_param_array(Layer& l, Fn&& fn) {
    switch (l.kind) {
        case Layer::Kind::Dense:
        case Layer::Kind::Conv2d:
            fn(l.weight.data());
            fn(l.bias);
            break;
        case Layer::Kind::BatchNorm:
            fn(l.gamma);
            fn(l.beta);
            fn(l.run_mean);
            fn(l.run_var);
            break;
        case Layer::Kind::Relu:
            break;
    }
}

}  // namespace detail

/// Serialized checkpoint image: magic, version, a JSON architecture
/// descriptor (with provenance), then every parameter array as little-endian
/// 64-bit floats in layer order. Key order in the JSON is sorted, so equal
/// checkpoints serialize to identical bytes.
inline std::string checkpoint_bytes(const Model& model, const Provenance& prov = {}) {
    model.validate();
    nlohmann::json arch;
    arch["input_dim"] = model.input_dim;
    arch["classes"] = model.classes;
    arch["layers"] = nlohmann::json::array();
    for (const Layer& l : model.layers) arch["layers"].push_back(detail::layer_descriptor(l));
    arch["seed"] = prov.seed;
    arch["config_digest"] = prov.config_digest;
    const std::string json = arch.dump();

    std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::put_u32(out, kCheckpointVersion);
    detail::put_u64(out, json.size());
    out += json;
    for (const Layer& l : model.layers)
        detail::for_each_param_array(l, [&out](const std::vector<double>& a) {
            for (double v : a) detail::put_f64(out, v);
        });
    return out;
}

inline Checkpoint parse_checkpoint(const std::string& bytes) {
    detail::ByteReader r(bytes);
    if (r.bytes(sizeof kCheckpointMagic) != std::string(kCheckpointMagic, sizeof kCheckpointMagic))
        throw FormatError("checkpoint: bad magic");
    Checkpoint c;
    c.version = r.u32();
    if (c.version != kCheckpointVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(c.version));
    const std::uint64_t json_len = r.u64();
    nlohmann::json arch;
    try {
        arch = nlohmann::json::parse(r.bytes(json_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: bad descriptor: ") + e.what());
    }
    try {
        c.model.input_dim = arch.at("input_dim").get<std::size_t>();
        c.model.classes = arch.at("classes").get<std::size_t>();
        for (const auto& lj : arch.at("layers"))
            c.model.layers.push_back(detail::layer_from_descriptor(lj));
        c.provenance.seed = arch.at("seed").get<std::uint64_t>();
        c.provenance.config_digest = arch.at("config_digest").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: bad descriptor: ") + e.what());
    }
    for (Layer& l : c.model.layers)
        detail::for_each_param_array(l, [&r](std::vector<double>& a) {
            for (double& v : a) v = r.f64();
        });
    if (!r.exhausted()) throw FormatError("checkpoint: trailing bytes");
    c.model.validate();
    return c;
}

inline void save_checkpoint(const Model& model, const std::string& path,
                            const Provenance& prov = {}) {
    const std::string bytes = checkpoint_bytes(model, prov);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("checkpoint: cannot open " + path + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FormatError("checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("checkpoint: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes);
}

}  // namespace unlearn
