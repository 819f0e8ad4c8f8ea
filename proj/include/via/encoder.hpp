#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "via/rng.hpp"
#include "via/tape.hpp"

namespace via {

// Visual encoder: a stack of convolutional blocks, each doing 1x1 channel
// expansion, feature mixing by a learnable joint dependency matrix, and a
// strided temporal convolution, followed by spatial global average pooling
// over the joint axis. Three stride-2 blocks take [T,V,C_in] to [T/8, C_out].
struct EncoderConfig {
    std::array<int, 3> stage_channels{64, 128, 256};
    std::array<int, 3> blocks_per_stage{4, 3, 3};
    int temporal_kernel = 9;
    std::vector<int> stride_blocks;  // flat block indices that downsample x2
    int joints = 13;
    int in_channels = 2;

    int total_blocks() const { return blocks_per_stage[0] + blocks_per_stage[1] + blocks_per_stage[2]; }
    int out_channels() const { return stage_channels[2]; }

    // Stride placement: last block of stage 1, first blocks of stages 2 and 3.
    static std::vector<int> default_strides(const std::array<int, 3>& blocks) {
        return {blocks[0] - 1, blocks[0], blocks[0] + blocks[1]};
    }

    static EncoderConfig paper(int joints = 13, int in_channels = 2) {
        EncoderConfig c;
        c.joints = joints;
        c.in_channels = in_channels;
        c.stride_blocks = default_strides(c.blocks_per_stage);
        return c;
    }

    static EncoderConfig desk(int joints = 13, int in_channels = 2) {
        EncoderConfig c;
        c.stage_channels = {16, 32, 64};
        c.blocks_per_stage = {2, 2, 2};
        c.joints = joints;
        c.in_channels = in_channels;
        c.stride_blocks = default_strides(c.blocks_per_stage);
        return c;
    }

    int stage_of_block(int b) const {
        if (b < blocks_per_stage[0]) return 0;
        if (b < blocks_per_stage[0] + blocks_per_stage[1]) return 1;
        return 2;
    }

    bool has_stride(int b) const {
        for (int s : stride_blocks)
            if (s == b) return true;
        return false;
    }

    void validate() const {
        if (stage_channels[0] >= stage_channels[1] || stage_channels[1] >= stage_channels[2])
            throw std::invalid_argument("encoder stage channels must be strictly increasing");
        for (int b : blocks_per_stage)
            if (b < 1) throw std::invalid_argument("encoder needs at least one block per stage");
        if (temporal_kernel < 1 || temporal_kernel % 2 == 0)
            throw std::invalid_argument("temporal kernel must be odd");
        if (stride_blocks.size() != 3)
            throw std::invalid_argument("exactly three stride-2 blocks required, got " +
                                        std::to_string(stride_blocks.size()));
        for (int s : stride_blocks)
            if (s < 0 || s >= total_blocks())
                throw std::invalid_argument("stride block index " + std::to_string(s) + " out of range");
        if (joints < 2 || (in_channels != 2 && in_channels != 3))
            throw std::invalid_argument("encoder needs V >= 2 and C_in in {2,3}");
    }
};

template <typename S>
struct EncoderBlockParams {
    Tensor<S> expand_w;    // [1,1,Ci,Co]
    Tensor<S> dep;         // [V,V] joint dependency matrix
    Tensor<S> temporal_w;  // [kt,1,Co,Co]
    Tensor<S> bias;        // [Co]
};

namespace detail {
template <typename S>
Tensor<S> uniform_fan_in(Shape shape, int fan_in, Rng& rng) {
    Tensor<S> t = Tensor<S>::zeros(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.data) v = static_cast<S>(rng.uniform(-bound, bound));
    return t;
}
}  // namespace detail

template <typename S>
struct EncoderParams {
    EncoderConfig config;
    std::vector<EncoderBlockParams<S>> blocks;

    static EncoderParams init(const EncoderConfig& cfg, Rng& rng) {
        cfg.validate();
        EncoderParams p;
        p.config = cfg;
        int ci = cfg.in_channels;
        for (int b = 0; b < cfg.total_blocks(); ++b) {
            const int co = cfg.stage_channels[static_cast<std::size_t>(cfg.stage_of_block(b))];
            EncoderBlockParams<S> blk;
            blk.expand_w = detail::uniform_fan_in<S>({1, 1, ci, co}, ci, rng);
            blk.dep = detail::uniform_fan_in<S>({cfg.joints, cfg.joints}, cfg.joints, rng);
            blk.temporal_w = detail::uniform_fan_in<S>({cfg.temporal_kernel, 1, co, co},
                                                       cfg.temporal_kernel * co, rng);
            blk.bias = Tensor<S>::zeros({co});
            p.blocks.push_back(std::move(blk));
            ci = co;
        }
        return p;
    }

    template <typename F>
    void visit(F&& f) {
        char name[48];
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            std::snprintf(name, sizeof name, "enc/b%02d/", static_cast<int>(b % 100));
            f(std::string(name) + "expand_w", blocks[b].expand_w);
            f(std::string(name) + "dep", blocks[b].dep);
            f(std::string(name) + "temporal_w", blocks[b].temporal_w);
            f(std::string(name) + "bias", blocks[b].bias);
        }
    }
};

struct EncoderBlockVars {
    Var expand_w, dep, temporal_w, bias;
};

template <typename S>
std::vector<EncoderBlockVars> register_encoder(Tape<S>& t, const EncoderParams<S>& p, bool trainable) {
    std::vector<EncoderBlockVars> vars;
    for (const auto& blk : p.blocks) {
        EncoderBlockVars v;
        v.expand_w = trainable ? t.param(blk.expand_w) : t.input(blk.expand_w);
        v.dep = trainable ? t.param(blk.dep) : t.input(blk.dep);
        v.temporal_w = trainable ? t.param(blk.temporal_w) : t.input(blk.temporal_w);
        v.bias = trainable ? t.param(blk.bias) : t.input(blk.bias);
        vars.push_back(v);
    }
    return vars;
}

// x must be a root-centered sequence [T,V,C_in] with T divisible by 8.
template <typename S>
Var encode(Tape<S>& t, const EncoderConfig& cfg, const std::vector<EncoderBlockVars>& blocks, Var x) {
    const auto& xv = t.value(x);
    if (xv.rank() != 3 || xv.shape[1] != cfg.joints || xv.shape[2] != cfg.in_channels)
        throw std::invalid_argument("encode: sequence " + shape_str(xv.shape) +
                                    " does not match config [T," + std::to_string(cfg.joints) + "," +
                                    std::to_string(cfg.in_channels) + "]");
    if (xv.shape[0] % 8 != 0)
        throw std::invalid_argument("encode: T=" + std::to_string(xv.shape[0]) +
                                    " must be divisible by 8 (three stride-2 blocks)");
    Var h = x;
    for (int b = 0; b < cfg.total_blocks(); ++b) {
        const auto& blk = blocks[static_cast<std::size_t>(b)];
        const int stride = cfg.has_stride(b) ? 2 : 1;
        Var in = h;
        h = conv2d(t, h, blk.expand_w, 1);
        h = joint_mix(t, h, blk.dep);
        h = conv2d(t, h, blk.temporal_w, stride);
        h = bias_add(t, h, blk.bias);
        // residual when the block preserves both channel count and length
        if (stride == 1 && t.value(in).shape == t.value(h).shape) h = add(t, h, in);
        h = relu(t, h);
    }
    Var latent = mean_axis(t, h, 1);  // spatial GAP over joints -> [T', C_out]
    // Pin the scale of both latent channels: the variation over time and
    // the static mean. Without any normalization in the network the triplet
    // terms shrink whichever subspace is left free until every pairwise
    // distance vanishes; with both norms fixed, information has to live at
    // unit scale, where shrinking is impossible and the margin means
    // something. Zero inputs pass through unchanged.
    const Shape ls = t.value(latent).shape;  // copy: pushing ops below reallocates nodes
    Var lmean = mean_axis(t, latent, 0);
    Var dev = bias_add(t, latent, neg(t, lmean));
    Var ndev = normalize_frob(t, dev, static_cast<S>(std::sqrt(static_cast<double>(ls[0]) * ls[1])));
    Var nmean = normalize_frob(t, lmean, static_cast<S>(std::sqrt(static_cast<double>(ls[1]))));
    return bias_add(t, ndev, nmean);
}

// Classification head: temporal global average pooling plus one affine map.
// Softmax lives inside the cross-entropy loss.
template <typename S>
struct ProbeParams {
    Tensor<S> w;  // [C, n_classes]
    Tensor<S> b;  // [n_classes]

    static ProbeParams init(int c_in, int n_classes, Rng& rng) {
        if (n_classes < 2) throw std::invalid_argument("probe head needs n_classes >= 2");
        ProbeParams p;
        p.w = detail::uniform_fan_in<S>({c_in, n_classes}, c_in, rng);
        p.b = Tensor<S>::zeros({n_classes});
        return p;
    }

    template <typename F>
    void visit(F&& f) {
        f(std::string("probe/w"), w);
        f(std::string("probe/b"), b);
    }
};

struct ProbeVars {
    Var w, b;
};

template <typename S>
ProbeVars register_probe(Tape<S>& t, const ProbeParams<S>& p, bool trainable) {
    return ProbeVars{trainable ? t.param(p.w) : t.input(p.w), trainable ? t.param(p.b) : t.input(p.b)};
}

template <typename S>
Var probe_logits(Tape<S>& t, const ProbeVars& p, Var features) {
    const auto& fv = t.value(features);
    if (fv.rank() != 2 || fv.shape[1] != t.value(p.w).shape[0])
        throw std::invalid_argument("probe: features " + shape_str(fv.shape) + " incompatible with head " +
                                    shape_str(t.value(p.w).shape));
    const int C = fv.shape[1];
    const int N = t.value(p.w).shape[1];
    Var pooled = mean_axis(t, features, 0);  // temporal GAP -> [C]
    Var logits = reshape(t, matmul(t, reshape(t, pooled, {1, C}), p.w), {N});
    return add(t, logits, p.b);
}

}  // namespace via
