#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "via/model.hpp"
#include "via/optimizer.hpp"
#include "via/skeleton.hpp"

namespace via {

// Checkpoint container ("VIAC"):
//   magic "VIAC", u32 version (1), u32 tensor count, then per tensor:
//   u16 name length, UTF-8 name, u8 rank, rank x u32 dims, LE f32 data.
// Model parameters, optimizer moments and scalar metadata (step counter,
// config hash bytes, model configuration) all live in the container as
// named tensors, so a checkpoint is self-describing.
inline constexpr char kViacMagic[4] = {'V', 'I', 'A', 'C'};
inline constexpr std::uint32_t kViacVersion = 1;

struct Checkpoint {
    std::vector<std::pair<std::string, Tensor<float>>> tensors;  // insertion order preserved

    void add(std::string name, Tensor<float> t) { tensors.emplace_back(std::move(name), std::move(t)); }

    const Tensor<float>* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }

    const Tensor<float>& at(const std::string& name) const {
        const Tensor<float>* t = find(name);
        if (!t) throw std::runtime_error("checkpoint is missing tensor '" + name + "'");
        return *t;
    }
};

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw IoError(IoCode::io_failure, "cannot open for write: " + tmp.string());
        os.write(kViacMagic, 4);
        detail::put_u32(os, kViacVersion);
        detail::put_u32(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
        for (const auto& [name, t] : ckpt.tensors) {
            if (name.size() > 0xFFFF) throw std::invalid_argument("tensor name too long");
            const std::uint16_t len = static_cast<std::uint16_t>(name.size());
            unsigned char lb[2] = {static_cast<unsigned char>(len), static_cast<unsigned char>(len >> 8)};
            os.write(reinterpret_cast<const char*>(lb), 2);
            os.write(name.data(), len);
            if (t.rank() > 255) throw std::invalid_argument("tensor rank too large");
            const unsigned char rank = static_cast<unsigned char>(t.rank());
            os.write(reinterpret_cast<const char*>(&rank), 1);
            for (int d : t.shape) detail::put_u32(os, static_cast<std::uint32_t>(d));
            for (float f : t.data) detail::put_f32(os, f);
        }
        if (!os) throw IoError(IoCode::io_failure, "write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(IoCode::io_failure, "cannot open: " + path.string());
    char magic[4];
    if (!is.read(magic, 4)) throw IoError(IoCode::truncated, "file shorter than header");
    if (std::memcmp(magic, kViacMagic, 4) != 0)
        throw IoError(IoCode::bad_magic, "bad magic, not a VIAC file");
    std::uint32_t version, count;
    if (!detail::get_u32(is, version) || !detail::get_u32(is, count))
        throw IoError(IoCode::truncated, "file shorter than header");
    if (version != kViacVersion)
        throw IoError(IoCode::bad_version, "unsupported VIAC version " + std::to_string(version));
    Checkpoint ckpt;
    for (std::uint32_t i = 0; i < count; ++i) {
        unsigned char lb[2];
        if (!is.read(reinterpret_cast<char*>(lb), 2)) throw IoError(IoCode::truncated, "truncated name length");
        const std::uint16_t len = static_cast<std::uint16_t>(lb[0] | (lb[1] << 8));
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) throw IoError(IoCode::truncated, "truncated name");
        unsigned char rank;
        if (!is.read(reinterpret_cast<char*>(&rank), 1)) throw IoError(IoCode::truncated, "truncated rank");
        Shape shape(rank);
        for (auto& d : shape) {
            std::uint32_t v;
            if (!detail::get_u32(is, v)) throw IoError(IoCode::truncated, "truncated dims");
            if (v == 0 || v > (1u << 28)) throw IoError(IoCode::dim_overflow, "tensor dimension out of range");
            d = static_cast<int>(v);
        }
        if (numel(shape) > (1ull << 28)) throw IoError(IoCode::dim_overflow, "tensor size out of range");
        Tensor<float> t = Tensor<float>::zeros(shape);
        for (auto& f : t.data)
            if (!detail::get_f32(is, f)) throw IoError(IoCode::truncated, "truncated tensor payload");
        ckpt.add(std::move(name), std::move(t));
    }
    return ckpt;
}

// --- model configuration <-> meta tensor ---

inline Tensor<float> encode_model_config(const ModelConfig& c) {
    std::vector<float> v;
    auto push = [&v](int x) { v.push_back(static_cast<float>(x)); };
    for (int x : c.encoder.stage_channels) push(x);
    for (int x : c.encoder.blocks_per_stage) push(x);
    push(c.encoder.temporal_kernel);
    for (int x : c.encoder.stride_blocks) push(x);
    push(c.encoder.joints);
    push(c.encoder.in_channels);
    for (int x : c.decoder.stage_channels) push(x);
    push(c.decoder.kernel);
    push(c.basis_size);
    push(c.n_classes);
    const int n = static_cast<int>(v.size());
    return Tensor<float>({n}, std::move(v));
}

inline ModelConfig decode_model_config(const Tensor<float>& t) {
    if (t.size() != 18) throw std::runtime_error("malformed meta/model_config tensor");
    std::size_t i = 0;
    auto next = [&t, &i] { return static_cast<int>(t.data[i++]); };
    ModelConfig c;
    for (auto& x : c.encoder.stage_channels) x = next();
    for (auto& x : c.encoder.blocks_per_stage) x = next();
    c.encoder.temporal_kernel = next();
    c.encoder.stride_blocks = {next(), next(), next()};
    c.encoder.joints = next();
    c.encoder.in_channels = next();
    for (auto& x : c.decoder.stage_channels) x = next();
    c.decoder.kernel = next();
    c.decoder.joints = c.encoder.joints;
    c.decoder.out_channels = c.encoder.in_channels;
    c.decoder.latent_channels = c.encoder.out_channels();
    c.basis_size = next();
    c.n_classes = next();
    c.validate();
    return c;
}

inline Tensor<float> encode_hash(std::uint64_t h) {
    std::vector<float> v(8);
    for (int i = 0; i < 8; ++i) v[static_cast<std::size_t>(i)] = static_cast<float>((h >> (8 * i)) & 0xFF);
    return Tensor<float>({8}, std::move(v));
}

inline std::uint64_t decode_hash(const Tensor<float>& t) {
    std::uint64_t h = 0;
    for (int i = 0; i < 8; ++i) h |= static_cast<std::uint64_t>(t.data[static_cast<std::size_t>(i)]) << (8 * i);
    return h;
}

inline Checkpoint make_checkpoint(ModelParams<float>& model, Adam<float>* opt, int step,
                                  std::uint64_t config_hash) {
    Checkpoint ckpt;
    ckpt.add("meta/model_config", encode_model_config(model.config));
    ckpt.add("meta/config_hash", encode_hash(config_hash));
    ckpt.add("meta/step", Tensor<float>({1}, {static_cast<float>(step)}));
    model.visit([&ckpt](const std::string& name, Tensor<float>& t) { ckpt.add(name, t); });
    if (opt) {
        ckpt.add("opt/t", Tensor<float>({1}, {static_cast<float>(opt->step_count())}));
        opt->visit_moments([&ckpt](const std::string& name, Tensor<float>& t) { ckpt.add(name, t); });
    }
    return ckpt;
}

inline ModelParams<float> model_from_checkpoint(const Checkpoint& ckpt) {
    const ModelConfig cfg = decode_model_config(ckpt.at("meta/model_config"));
    ModelParams<float> model = ModelParams<float>::init(cfg, 0);
    model.visit([&ckpt](const std::string& name, Tensor<float>& t) {
        const Tensor<float>& stored = ckpt.at(name);
        if (stored.shape != t.shape)
            throw std::runtime_error("checkpoint tensor '" + name + "' has shape " +
                                     shape_str(stored.shape) + ", expected " + shape_str(t.shape));
        t = stored;
    });
    return model;
}

inline void restore_optimizer(const Checkpoint& ckpt, Adam<float>& opt) {
    opt.set_step_count(static_cast<int>(ckpt.at("opt/t").data[0]));
    for (const auto& [name, t] : ckpt.tensors)
        if (name.rfind("opt/m/", 0) == 0 || name.rfind("opt/v/", 0) == 0) opt.restore_moment(name, t);
}

}  // namespace via
