#pragma once

#include <array>
#include <string>

#include "via/encoder.hpp"
#include "via/rng.hpp"
#include "via/tape.hpp"

namespace via {

// Lightweight pose-sequence decoder: three stages of nearest-neighbor x2
// temporal upsampling and a 1D convolution, ReLU between stages and a
// linear final stage (coordinates are signed). [T', C_latent] -> [T, V, C].
struct DecoderConfig {
    std::array<int, 3> stage_channels{128, 64, 26};  // last = C_in * V
    int kernel = 7;
    int joints = 13;
    int out_channels = 2;  // coordinate dimensionality
    int latent_channels = 256;

    static DecoderConfig for_encoder(const EncoderConfig& enc, std::array<int, 2> hidden = {0, 0}) {
        DecoderConfig c;
        c.joints = enc.joints;
        c.out_channels = enc.in_channels;
        c.latent_channels = enc.out_channels();
        const int h0 = hidden[0] > 0 ? hidden[0] : enc.out_channels() / 2;
        const int h1 = hidden[1] > 0 ? hidden[1] : enc.out_channels() / 4;
        c.stage_channels = {h0, h1, c.joints * c.out_channels};
        return c;
    }

    void validate() const {
        if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("decoder kernel must be odd");
        if (stage_channels[2] != joints * out_channels)
            throw std::invalid_argument("decoder final channels " + std::to_string(stage_channels[2]) +
                                        " must equal V*C = " + std::to_string(joints * out_channels));
        if (stage_channels[0] < 1 || stage_channels[1] < 1)
            throw std::invalid_argument("decoder hidden channels must be positive");
    }
};

template <typename S>
struct DecoderParams {
    DecoderConfig config;
    std::array<Tensor<S>, 3> w;  // [k, Ci, Co]
    std::array<Tensor<S>, 3> b;  // [Co]

    static DecoderParams init(const DecoderConfig& cfg, Rng& rng) {
        cfg.validate();
        DecoderParams p;
        p.config = cfg;
        int ci = cfg.latent_channels;
        for (int s = 0; s < 3; ++s) {
            const int co = cfg.stage_channels[static_cast<std::size_t>(s)];
            p.w[static_cast<std::size_t>(s)] =
                detail::uniform_fan_in<S>({cfg.kernel, ci, co}, cfg.kernel * ci, rng);
            p.b[static_cast<std::size_t>(s)] = Tensor<S>::zeros({co});
            ci = co;
        }
        return p;
    }

    template <typename F>
    void visit(F&& f) {
        for (int s = 0; s < 3; ++s) {
            const std::string prefix = "dec/s" + std::to_string(s) + "/";
            f(prefix + "w", w[static_cast<std::size_t>(s)]);
            f(prefix + "b", b[static_cast<std::size_t>(s)]);
        }
    }
};

struct DecoderVars {
    std::array<Var, 3> w;
    std::array<Var, 3> b;
};

template <typename S>
DecoderVars register_decoder(Tape<S>& t, const DecoderParams<S>& p, bool trainable) {
    DecoderVars v;
    for (std::size_t s = 0; s < 3; ++s) {
        v.w[s] = trainable ? t.param(p.w[s]) : t.input(p.w[s]);
        v.b[s] = trainable ? t.param(p.b[s]) : t.input(p.b[s]);
    }
    return v;
}

template <typename S>
Var decode(Tape<S>& t, const DecoderConfig& cfg, const DecoderVars& d, Var latent) {
    const auto& lv = t.value(latent);
    if (lv.rank() != 2 || lv.shape[1] != cfg.latent_channels)
        throw std::invalid_argument("decode: latent " + shape_str(lv.shape) +
                                    " does not match configured channels " +
                                    std::to_string(cfg.latent_channels));
    Var h = latent;
    for (std::size_t s = 0; s < 3; ++s) {
        h = upsample2(t, h);
        h = conv1d(t, h, d.w[s]);
        h = bias_add(t, h, d.b[s]);
        if (s < 2) h = relu(t, h);
    }
    const int T = t.value(h).shape[0];
    return reshape(t, h, {T, cfg.joints, cfg.out_channels});
}

}  // namespace via
