#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "via/decoder.hpp"
#include "via/encoder.hpp"
#include "via/lmd.hpp"

namespace via {

struct ModelConfig {
    EncoderConfig encoder;
    DecoderConfig decoder;
    int basis_size = 32;
    int n_classes = 8;

    static ModelConfig desk(int joints = 13, int in_channels = 2, int n_classes = 8) {
        ModelConfig c;
        c.encoder = EncoderConfig::desk(joints, in_channels);
        c.decoder = DecoderConfig::for_encoder(c.encoder);
        c.basis_size = 32;
        c.n_classes = n_classes;
        return c;
    }

    static ModelConfig paper(int joints = 13, int in_channels = 2, int n_classes = 8) {
        ModelConfig c;
        c.encoder = EncoderConfig::paper(joints, in_channels);
        c.decoder = DecoderConfig::for_encoder(c.encoder, {128, 64});
        c.basis_size = 32;
        c.n_classes = n_classes;
        return c;
    }

    // Small enough for finite-difference sweeps (a few hundred parameters).
    static ModelConfig toy(int joints = 3, int in_channels = 2, int n_classes = 2) {
        ModelConfig c;
        c.encoder.stage_channels = {3, 4, 6};
        c.encoder.blocks_per_stage = {1, 1, 1};
        c.encoder.temporal_kernel = 3;
        c.encoder.stride_blocks = EncoderConfig::default_strides(c.encoder.blocks_per_stage);
        c.encoder.joints = joints;
        c.encoder.in_channels = in_channels;
        c.decoder = DecoderConfig::for_encoder(c.encoder, {6, 4});
        c.decoder.kernel = 3;
        c.basis_size = 2;
        c.n_classes = n_classes;
        return c;
    }

    void validate() const {
        encoder.validate();
        decoder.validate();
        if (decoder.latent_channels != encoder.out_channels() || decoder.joints != encoder.joints ||
            decoder.out_channels != encoder.in_channels)
            throw std::invalid_argument("encoder and decoder configs disagree");
        if (basis_size < 1 || basis_size >= encoder.out_channels())
            throw std::invalid_argument("basis size K=" + std::to_string(basis_size) +
                                        " must lie in [1, C_out=" + std::to_string(encoder.out_channels()) + ")");
        if (n_classes < 2) throw std::invalid_argument("n_classes must be >= 2");
    }
};

enum class ParamGroup { encoder, basis, decoder, probe };

// All learnable state: encoder blocks, character basis, decoder, probe head.
template <typename S>
struct ModelParams {
    ModelConfig config;
    EncoderParams<S> encoder;
    Tensor<S> basis;  // [K, C_out]
    DecoderParams<S> decoder;
    ProbeParams<S> probe;

    static ModelParams init(const ModelConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        ModelParams p;
        p.config = cfg;
        Rng enc_rng = Rng::derive(seed, {1});
        p.encoder = EncoderParams<S>::init(cfg.encoder, enc_rng);
        Rng basis_rng = Rng::derive(seed, {2});
        p.basis = lmd::init_basis<S>(cfg.basis_size, cfg.encoder.out_channels(), basis_rng);
        Rng dec_rng = Rng::derive(seed, {3});
        p.decoder = DecoderParams<S>::init(cfg.decoder, dec_rng);
        Rng probe_rng = Rng::derive(seed, {4});
        p.probe = ProbeParams<S>::init(cfg.encoder.out_channels(), cfg.n_classes, probe_rng);
        return p;
    }

    // Canonical parameter order: encoder blocks, basis, decoder, probe.
    template <typename F>
    void visit(F&& f) {
        encoder.visit(f);
        f(std::string("lmd/basis"), basis);
        decoder.visit(f);
        probe.visit(f);
    }

    template <typename F>
    void visit_group(ParamGroup g, F&& f) {
        switch (g) {
            case ParamGroup::encoder: encoder.visit(f); break;
            case ParamGroup::basis: f(std::string("lmd/basis"), basis); break;
            case ParamGroup::decoder: decoder.visit(f); break;
            case ParamGroup::probe: probe.visit(f); break;
        }
    }

    // Byte fingerprint of selected groups; used to assert frozen parameters.
    std::uint64_t fingerprint(std::initializer_list<ParamGroup> groups) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (ParamGroup g : groups)
            visit_group(g, [&h](const std::string& name, const Tensor<S>& t) {
                h = fnv1a(name.data(), name.size(), h);
                h = fnv1a(t.data.data(), t.data.size() * sizeof(S), h);
            });
        return h;
    }

    template <typename T>
    ModelParams<T> cast() const {
        ModelParams<T> out;
        out.config = config;
        out.encoder.config = encoder.config;
        for (const auto& blk : encoder.blocks)
            out.encoder.blocks.push_back({blk.expand_w.template cast<T>(), blk.dep.template cast<T>(),
                                          blk.temporal_w.template cast<T>(), blk.bias.template cast<T>()});
        out.basis = basis.template cast<T>();
        out.decoder.config = decoder.config;
        for (std::size_t s = 0; s < 3; ++s) {
            out.decoder.w[s] = decoder.w[s].template cast<T>();
            out.decoder.b[s] = decoder.b[s].template cast<T>();
        }
        out.probe.w = probe.w.template cast<T>();
        out.probe.b = probe.b.template cast<T>();
        return out;
    }
};

template <typename S>
struct ModelVars {
    std::vector<EncoderBlockVars> encoder;
    Var basis;
    DecoderVars decoder;
    ProbeVars probe;
};

struct TrainableGroups {
    bool encoder = true;
    bool basis = true;
    bool decoder = true;
    bool probe = true;

    static TrainableGroups pretrain() { return {true, true, true, false}; }
    static TrainableGroups probe_only() { return {false, false, false, true}; }
    static TrainableGroups finetune() { return {true, true, false, true}; }
    static TrainableGroups none() { return {false, false, false, false}; }
};

template <typename S>
ModelVars<S> register_model(Tape<S>& t, const ModelParams<S>& p, TrainableGroups groups) {
    ModelVars<S> v;
    v.encoder = register_encoder(t, p.encoder, groups.encoder);
    v.basis = groups.basis ? t.param(p.basis) : t.input(p.basis);
    v.decoder = register_decoder(t, p.decoder, groups.decoder);
    v.probe = register_probe(t, p.probe, groups.probe);
    return v;
}

// Var handles paired with parameter storage, in the same canonical order as
// visit(); kept adjacent to register_model so the two stay in sync.
template <typename S>
std::vector<std::tuple<std::string, Tensor<S>*, Var>> named_vars(ModelParams<S>& p, const ModelVars<S>& v,
                                                                 TrainableGroups groups) {
    std::vector<std::tuple<std::string, Tensor<S>*, Var>> out;
    if (groups.encoder)
        for (std::size_t b = 0; b < p.encoder.blocks.size(); ++b) {
            char nm[32];
            std::snprintf(nm, sizeof nm, "enc/b%02d/", static_cast<int>(b % 100));
            out.emplace_back(std::string(nm) + "expand_w", &p.encoder.blocks[b].expand_w, v.encoder[b].expand_w);
            out.emplace_back(std::string(nm) + "dep", &p.encoder.blocks[b].dep, v.encoder[b].dep);
            out.emplace_back(std::string(nm) + "temporal_w", &p.encoder.blocks[b].temporal_w,
                             v.encoder[b].temporal_w);
            out.emplace_back(std::string(nm) + "bias", &p.encoder.blocks[b].bias, v.encoder[b].bias);
        }
    if (groups.basis) out.emplace_back("lmd/basis", &p.basis, v.basis);
    if (groups.decoder)
        for (std::size_t s = 0; s < 3; ++s) {
            const std::string prefix = "dec/s" + std::to_string(s) + "/";
            out.emplace_back(prefix + "w", &p.decoder.w[s], v.decoder.w[s]);
            out.emplace_back(prefix + "b", &p.decoder.b[s], v.decoder.b[s]);
        }
    if (groups.probe) {
        out.emplace_back("probe/w", &p.probe.w, v.probe.w);
        out.emplace_back("probe/b", &p.probe.b, v.probe.b);
    }
    return out;
}

// Forward-only latent of one root-centered sequence (throwaway tape).
template <typename S>
Tensor<S> encode_plain(const ModelParams<S>& p, const Tensor<S>& frames) {
    Tape<S> t;
    auto blocks = register_encoder(t, p.encoder, false);
    return t.value(encode(t, p.config.encoder, blocks, t.input(frames)));
}

template <typename S>
Tensor<S> decode_plain(const ModelParams<S>& p, const Tensor<S>& latent) {
    Tape<S> t;
    auto dec = register_decoder(t, p.decoder, false);
    return t.value(decode(t, p.config.decoder, dec, t.input(latent)));
}

}  // namespace via
