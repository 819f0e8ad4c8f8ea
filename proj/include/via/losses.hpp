#pragma once

#include <stdexcept>
#include <vector>

#include "via/lmd.hpp"
#include "via/model.hpp"

namespace via {

// Objective over a (driving, source) pair: L = L_rec + L_trip + L_vel with
// L_rec = L_self + L_cycle. Each term can be toggled for ablations.
struct LossConfig {
    bool self_on = true;
    bool cycle_on = true;
    bool triplet_on = true;
    bool velocity_on = true;
    double margin = 1.0;           // triplet margin
    double velocity_weight = 1.0;  // weighting factor of the velocity loss

    void validate() const {
        if (margin <= 0.0) throw std::invalid_argument("triplet margin must be > 0");
        if (velocity_weight < 0.0) throw std::invalid_argument("velocity weight must be >= 0");
        if (!self_on && !cycle_on && !triplet_on && !velocity_on)
            throw std::invalid_argument("all loss terms disabled");
    }

    // Ablation rows: L1 self only, L2 +cycle, L3 +triplet, L4 full.
    static LossConfig L1() { return LossConfig{true, false, false, false}; }
    static LossConfig L2() { return LossConfig{true, true, false, false}; }
    static LossConfig L3() { return LossConfig{true, true, true, false}; }
    static LossConfig L4() { return LossConfig{}; }
};

// Everything one pair contributes to the objective. First-pass quantities
// come from encoding the inputs; hatted quantities are re-encoded from the
// generated swaps, never copied from first-pass values.
template <typename S>
struct PairState {
    Var p_driving, p_source;  // root-centered inputs [T,V,C]
    Var lat_driving, lat_source;
    lmd::DecompVars dec_driving, dec_source;

    Var self_recon_driving, self_recon_source;  // D(r_m, r_c), D(r_m', r_c')
    Var gen_swap_driving;  // D(r_m,  r_c') : driving motion, source character
    Var gen_swap_source;   // D(r_m', r_c ) : source motion, driving character

    // hat_swap_driving = decomposition of E(gen_swap_driving):
    //   .motion = r^_m (driving motion recovered), .character = r^_c'
    // hat_swap_source = decomposition of E(gen_swap_source):
    //   .motion = r^_m', .character = r^_c
    lmd::DecompVars hat_swap_driving, hat_swap_source;

    Var cycle_recon_driving;  // D(r^_m,  r^_c ) vs p_driving
    Var cycle_recon_source;   // D(r^_m', r^_c') vs p_source
};

template <typename S>
PairState<S> pair_forward(Tape<S>& t, const ModelConfig& cfg, const ModelVars<S>& m, Var p_driving,
                          Var p_source, const LossConfig& lc) {
    lc.validate();
    PairState<S> st;
    st.p_driving = p_driving;
    st.p_source = p_source;
    st.lat_driving = encode(t, cfg.encoder, m.encoder, p_driving);
    st.lat_source = encode(t, cfg.encoder, m.encoder, p_source);
    st.dec_driving = lmd::decompose(t, st.lat_driving, m.basis);
    st.dec_source = lmd::decompose(t, st.lat_source, m.basis);

    if (lc.self_on) {
        st.self_recon_driving =
            decode(t, cfg.decoder, m.decoder, lmd::recombine(t, st.dec_driving.motion, st.dec_driving.character));
        st.self_recon_source =
            decode(t, cfg.decoder, m.decoder, lmd::recombine(t, st.dec_source.motion, st.dec_source.character));
    }

    const bool need_swap = lc.cycle_on || lc.triplet_on || lc.velocity_on;
    if (need_swap) {
        st.gen_swap_driving =
            decode(t, cfg.decoder, m.decoder, lmd::recombine(t, st.dec_driving.motion, st.dec_source.character));
        st.gen_swap_source =
            decode(t, cfg.decoder, m.decoder, lmd::recombine(t, st.dec_source.motion, st.dec_driving.character));
        st.hat_swap_driving = lmd::decompose(t, encode(t, cfg.encoder, m.encoder, st.gen_swap_driving), m.basis);
        st.hat_swap_source = lmd::decompose(t, encode(t, cfg.encoder, m.encoder, st.gen_swap_source), m.basis);
    }
    if (lc.cycle_on || lc.velocity_on)
        st.cycle_recon_driving = decode(
            t, cfg.decoder, m.decoder, lmd::recombine(t, st.hat_swap_driving.motion, st.hat_swap_source.character));
    if (lc.cycle_on)
        st.cycle_recon_source = decode(
            t, cfg.decoder, m.decoder, lmd::recombine(t, st.hat_swap_source.motion, st.hat_swap_driving.character));
    return st;
}

// Entry-mean squared reconstruction error, averaged over both pair members.
template <typename S>
Var loss_self(Tape<S>& t, const PairState<S>& st) {
    Var both = add(t, mse(t, st.self_recon_driving, st.p_driving), mse(t, st.self_recon_source, st.p_source));
    return scale(t, both, S(0.5));
}

// Cycle reconstruction through re-encoded swaps, symmetrized over the pair.
template <typename S>
Var loss_cycle(Tape<S>& t, const PairState<S>& st) {
    Var both = add(t, mse(t, st.cycle_recon_driving, st.p_driving), mse(t, st.cycle_recon_source, st.p_source));
    return scale(t, both, S(0.5));
}

// hinge(|r^_m - r_m| - |r^_m - r_m'| + margin); Frobenius over [T',C].
template <typename S>
Var loss_triplet_motion(Tape<S>& t, const PairState<S>& st, double margin) {
    Var pos = frob_norm(t, sub(t, st.hat_swap_driving.motion, st.dec_driving.motion));
    Var negd = frob_norm(t, sub(t, st.hat_swap_driving.motion, st.dec_source.motion));
    return hinge(t, add_const(t, sub(t, pos, negd), static_cast<S>(margin)));
}

// hinge(|r^_c - r_c| - |r^_c - r_c'| + margin); Euclidean over [C].
template <typename S>
Var loss_triplet_character(Tape<S>& t, const PairState<S>& st, double margin) {
    Var pos = frob_norm(t, sub(t, st.hat_swap_source.character, st.dec_driving.character));
    Var negd = frob_norm(t, sub(t, st.hat_swap_source.character, st.dec_source.character));
    return hinge(t, add_const(t, sub(t, pos, negd), static_cast<S>(margin)));
}

// Velocity consistency of the driving cycle reconstruction: summed squared
// difference of frame-to-frame displacements over all joints and steps.
template <typename S>
Var loss_velocity(Tape<S>& t, const PairState<S>& st, double weight) {
    Var dv = sub(t, time_diff(t, st.cycle_recon_driving), time_diff(t, st.p_driving));
    return scale(t, sum_all(t, mul(t, dv, dv)), static_cast<S>(weight));
}

// Per-term batch means plus their sum; disabled terms report zero.
template <typename S>
struct LossTerms {
    Var self, cycle, trip_m, trip_c, vel;
    Var total;
};

template <typename S>
LossTerms<S> batch_losses(Tape<S>& t, const std::vector<PairState<S>>& states, const LossConfig& lc) {
    lc.validate();
    if (states.empty()) throw std::invalid_argument("batch_losses: empty batch");
    auto mean_over = [&](auto term_fn) {
        Var acc = term_fn(states[0]);
        for (std::size_t i = 1; i < states.size(); ++i) acc = add(t, acc, term_fn(states[i]));
        return scale(t, acc, S(1) / static_cast<S>(states.size()));
    };
    const Var zero = t.input(Tensor<S>::scalar(S(0)));
    LossTerms<S> out;
    out.self = lc.self_on ? mean_over([&](const PairState<S>& s) { return loss_self(t, s); }) : zero;
    out.cycle = lc.cycle_on ? mean_over([&](const PairState<S>& s) { return loss_cycle(t, s); }) : zero;
    out.trip_m = lc.triplet_on
                     ? mean_over([&](const PairState<S>& s) { return loss_triplet_motion(t, s, lc.margin); })
                     : zero;
    out.trip_c = lc.triplet_on
                     ? mean_over([&](const PairState<S>& s) { return loss_triplet_character(t, s, lc.margin); })
                     : zero;
    out.vel = lc.velocity_on
                  ? mean_over([&](const PairState<S>& s) { return loss_velocity(t, s, lc.velocity_weight); })
                  : zero;
    Var total = zero;
    if (lc.self_on) total = add(t, total, out.self);
    if (lc.cycle_on) total = add(t, total, out.cycle);
    if (lc.triplet_on) total = add(t, add(t, total, out.trip_m), out.trip_c);
    if (lc.velocity_on) total = add(t, total, out.vel);
    out.total = total;
    return out;
}

}  // namespace via
