#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "via/parallel.hpp"
#include "via/rng.hpp"
#include "via/skeleton.hpp"

namespace via {

// Synthetic stand-in for a retargeting corpus: a bank of procedural motions
// on a canonical skeleton, crossed with per-character factors (view
// rotation, per-limb scale, root offset). Every (motion, character) cell is
// materialized, so exact cross-reconstruction targets exist by construction.

struct CharacterFactor {
    double view_angle = 0.0;              // rotation about the vertical axis, radians
    std::vector<double> body_scale;       // per-joint segment scale, all > 0; index 0 unused
    std::array<double, 3> root_offset{};  // translation in normalized units

    static CharacterFactor identity(int joints) {
        CharacterFactor f;
        f.body_scale.assign(static_cast<std::size_t>(joints), 1.0);
        return f;
    }
};

namespace synth {

// Kinematic tree: joint 0 is the root by convention; parents always precede
// children. First 13 entries are the default humanoid; 17 adds wrists and
// feet; beyond that, satellite joints are attached procedurally.
struct JointSpec {
    int parent;
    std::array<double, 3> rest;  // segment offset from parent
};

inline constexpr double kSkeletonScale = 0.45;
inline constexpr double kMotionSeparationMargin = 0.01;

inline std::vector<JointSpec> skeleton_tree(int V) {
    static const std::array<JointSpec, 17> base = {{
        {-1, {0.00, 0.00, 0.00}},    // root (pelvis)
        {0, {0.00, 0.26, 0.00}},     // neck
        {1, {0.00, 0.12, 0.00}},     // head
        {1, {-0.10, -0.02, 0.00}},   // shoulders
        {1, {0.10, -0.02, 0.00}},
        {3, {-0.05, -0.13, 0.02}},   // elbows
        {4, {0.05, -0.13, 0.02}},
        {0, {-0.07, -0.04, 0.00}},   // hips
        {0, {0.07, -0.04, 0.00}},
        {7, {-0.02, -0.18, 0.01}},   // knees
        {8, {0.02, -0.18, 0.01}},
        {9, {-0.01, -0.17, -0.01}},  // ankles
        {10, {0.01, -0.17, -0.01}},
        {5, {-0.04, -0.12, 0.03}},   // wrists
        {6, {0.04, -0.12, 0.03}},
        {11, {-0.03, -0.02, 0.06}},  // feet
        {12, {0.03, -0.02, 0.06}},
    }};
    if (V < 2) throw std::invalid_argument("skeleton needs V >= 2");
    std::vector<JointSpec> tree;
    tree.reserve(static_cast<std::size_t>(V));
    for (int j = 0; j < V; ++j) {
        if (j < static_cast<int>(base.size())) {
            JointSpec s = base[static_cast<std::size_t>(j)];
            for (auto& v : s.rest) v *= kSkeletonScale;
            tree.push_back(s);
        } else {
            const int parent = j % 17;
            const double a = 0.4 * static_cast<double>((j * 7) % 5 - 2) / 2.0;
            tree.push_back({parent, {0.03 * std::cos(a), -0.04, 0.03 * std::sin(a)}});
        }
    }
    return tree;
}

struct Wave {
    std::array<double, 3> amp;
    double freq;   // cycles over the clip
    double phase;
};

// Per-joint trajectory generator: a static posture term (the DC component
// of the periodic part), 2..4 sinusoids on a motion-wide harmonic family,
// and one transient burst.
struct JointMotion {
    std::array<double, 3> posture;
    std::vector<Wave> waves;
    std::array<double, 3> burst_amp;
    double burst_center;  // fraction of the clip
    double burst_width;
};

// Segment-space displacement of joint j at frame t.
inline std::array<double, 3> motion_delta(const JointMotion& jm, int t, int T) {
    const double tau = static_cast<double>(t) / static_cast<double>(T);
    std::array<double, 3> d = jm.posture;
    for (const Wave& w : jm.waves) {
        const double s = std::sin(6.283185307179586 * w.freq * tau + w.phase);
        for (int a = 0; a < 3; ++a) d[static_cast<std::size_t>(a)] += w.amp[static_cast<std::size_t>(a)] * s;
    }
    const double z = (tau - jm.burst_center) / jm.burst_width;
    const double g = std::exp(-z * z);
    for (int a = 0; a < 3; ++a) d[static_cast<std::size_t>(a)] += jm.burst_amp[static_cast<std::size_t>(a)] * g;
    return d;
}

}  // namespace synth

struct MotionBankEntry {
    int motion_id;
    std::vector<synth::JointMotion> joints;
};

struct GenParams {
    int n_motions;
    int n_characters;
    int T;
    int V;
    int dim;  // 2 or 3
    std::uint64_t seed;
};

inline std::string dataset_id(const GenParams& p) {
    std::ostringstream os;
    os << "seed=" << p.seed << ";motions=" << p.n_motions << ";characters=" << p.n_characters
       << ";T=" << p.T << ";V=" << p.V << ";dim=" << p.dim;
    const std::string s = os.str();
    std::uint64_t h = fnv1a(s.data(), s.size());
    std::ostringstream hex;
    hex << std::hex << h;
    return hex.str();
}

class SyntheticDataset {
  public:
    GenParams params{};
    std::string id;
    std::vector<CharacterFactor> characters;
    std::vector<MotionBankEntry> motions;
    std::vector<SkeletonSequence> sequences;  // index m * n_characters + c

    const SkeletonSequence& at(int m, int c) const {
        return sequences[static_cast<std::size_t>(m) * static_cast<std::size_t>(params.n_characters) +
                         static_cast<std::size_t>(c)];
    }
    std::size_t size() const { return sequences.size(); }
};

namespace synth {

enum StreamTag : std::uint64_t { kMotionStream = 1, kCharacterStream = 2 };

// Amplitude budget per joint: posture 0.04, waves 0.04, burst 0.01, so the
// deepest 4-segment chain stays inside the unit box after the largest
// character scaling (checked again at generation time).
inline MotionBankEntry draw_motion(std::uint64_t seed, int motion_id, int V, std::uint64_t salt) {
    Rng rng = Rng::derive(seed, {kMotionStream, static_cast<std::uint64_t>(motion_id), salt});
    MotionBankEntry entry;
    entry.motion_id = motion_id;
    entry.joints.resize(static_cast<std::size_t>(V));

    for (int j = 0; j < V; ++j) {
        JointMotion& jm = entry.joints[static_cast<std::size_t>(j)];
        const bool root = j == 0;
        for (auto& a : jm.posture) a = (root ? 0.01 : 0.06) * rng.uniform(-1.0, 1.0);
        const double wave_total = root ? 0.01 : 0.025 + 0.015 * rng.uniform();
        const int n_waves = 2 + static_cast<int>(rng.index(3));
        jm.waves.resize(static_cast<std::size_t>(n_waves));
        for (Wave& w : jm.waves) {
            for (auto& a : w.amp) a = (wave_total / n_waves) * rng.uniform(-1.0, 1.0);
            // frequency budget stays well under the bandwidth the decoder
            // can synthesize from a T/8 latent
            w.freq = rng.uniform(0.4, 2.0);
            w.phase = rng.uniform(0.0, 6.283185307179586);
        }
        for (auto& a : jm.burst_amp) a = (root ? 0.004 : 0.01) * rng.uniform(-1.0, 1.0);
        jm.burst_center = rng.uniform(0.2, 0.8);
        jm.burst_width = rng.uniform(0.1, 0.2);
    }
    return entry;
}

inline CharacterFactor draw_character(std::uint64_t seed, int character_id, int V) {
    Rng rng = Rng::derive(seed, {kCharacterStream, static_cast<std::uint64_t>(character_id)});
    CharacterFactor f;
    f.view_angle = rng.uniform(-1.0471975511965976, 1.0471975511965976);  // +-60 degrees
    f.body_scale.resize(static_cast<std::size_t>(V));
    f.body_scale[0] = 1.0;
    for (int j = 1; j < V; ++j) f.body_scale[static_cast<std::size_t>(j)] = std::exp(rng.uniform(-0.13, 0.13));
    f.root_offset = {rng.uniform(-0.12, 0.12), rng.uniform(-0.12, 0.12), 0.0};
    return f;
}

// Canonical 3D positions of motion m: kinematic accumulation of rest
// offsets plus per-segment displacement.
inline std::vector<std::array<double, 3>> canonical_frame(const std::vector<JointSpec>& tree,
                                                          const MotionBankEntry& motion, int t, int T) {
    const int V = static_cast<int>(tree.size());
    std::vector<std::array<double, 3>> pos(static_cast<std::size_t>(V));
    for (int j = 0; j < V; ++j) {
        const auto seg = motion_delta(motion.joints[static_cast<std::size_t>(j)], t, T);
        const auto& rest = tree[static_cast<std::size_t>(j)].rest;
        std::array<double, 3> p{rest[0] + seg[0], rest[1] + seg[1], rest[2] + seg[2]};
        const int parent = tree[static_cast<std::size_t>(j)].parent;
        if (parent >= 0) {
            const auto& pp = pos[static_cast<std::size_t>(parent)];
            p = {pp[0] + p[0], pp[1] + p[1], pp[2] + p[2]};
        }
        pos[static_cast<std::size_t>(j)] = p;
    }
    return pos;
}

}  // namespace synth

// Applies a character factor to the canonical 3D skeleton of `motion` and
// projects to the requested dimensionality. This is the ground-truth
// transform chain: scale each segment, accumulate, rotate about the
// vertical axis, translate, orthographically project when dim == 2.
inline SkeletonSequence apply_character(const MotionBankEntry& motion, const CharacterFactor& factor,
                                        int T, int V, int dim, int motion_id, int character_id) {
    const auto tree = synth::skeleton_tree(V);
    Tensor<float> frames = Tensor<float>::zeros({T, V, dim});
    const double cs = std::cos(factor.view_angle), sn = std::sin(factor.view_angle);
    std::vector<std::array<double, 3>> pos(static_cast<std::size_t>(V));
    for (int t = 0; t < T; ++t) {
        for (int j = 0; j < V; ++j) {
            const auto seg = synth::motion_delta(motion.joints[static_cast<std::size_t>(j)], t, T);
            const auto& rest = tree[static_cast<std::size_t>(j)].rest;
            const double s = factor.body_scale[static_cast<std::size_t>(j)];
            std::array<double, 3> p{s * (rest[0] + seg[0]), s * (rest[1] + seg[1]), s * (rest[2] + seg[2])};
            const int parent = tree[static_cast<std::size_t>(j)].parent;
            if (parent >= 0) {
                const auto& pp = pos[static_cast<std::size_t>(parent)];
                p = {pp[0] + p[0], pp[1] + p[1], pp[2] + p[2]};
            }
            pos[static_cast<std::size_t>(j)] = p;
            // y is up; rotate in the xz plane, then translate.
            const double x = cs * p[0] + sn * p[2] + factor.root_offset[0];
            const double y = p[1] + factor.root_offset[1];
            const double z = -sn * p[0] + cs * p[2] + factor.root_offset[2];
            float* row = frames.data.data() + (static_cast<std::size_t>(t) * V + j) * dim;
            row[0] = static_cast<float>(x);
            row[1] = static_cast<float>(y);
            if (dim == 3) row[2] = static_cast<float>(z);
        }
    }
    return make_sequence(std::move(frames), motion_id, character_id);
}

inline SkeletonSequence canonical_sequence(const MotionBankEntry& motion, int T, int V, int dim) {
    return apply_character(motion, CharacterFactor::identity(V), T, V, dim, motion.motion_id, -1);
}

namespace synth {

inline double mean_trajectory_distance(const SkeletonSequence& a, const SkeletonSequence& b) {
    const int T = a.T(), V = a.V(), C = a.C();
    double acc = 0.0;
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < V; ++j) {
            double d2 = 0.0;
            for (int c = 0; c < C; ++c) {
                const std::size_t i = (static_cast<std::size_t>(t) * V + j) * C + c;
                const double d = static_cast<double>(a.frames.data[i]) - b.frames.data[i];
                d2 += d * d;
            }
            acc += std::sqrt(d2);
        }
    return acc / (static_cast<double>(T) * V);
}

}  // namespace synth

inline SyntheticDataset generate_dataset(const GenParams& p) {
    if (p.n_motions < 2 || p.n_characters < 2)
        throw std::invalid_argument("generate_dataset: need at least 2 motions and 2 characters");
    if (p.dim != 2 && p.dim != 3) throw std::invalid_argument("generate_dataset: dim must be 2 or 3");
    if (p.T < 8 || p.V < 2) throw std::invalid_argument("generate_dataset: need T >= 8 and V >= 2");

    SyntheticDataset ds;
    ds.params = p;
    ds.id = dataset_id(p);

    // Motions must be mutually separated on the canonical skeleton; on the
    // rare draw that is too close to an earlier one, redraw with a salt.
    std::vector<SkeletonSequence> canon;
    for (int m = 0; m < p.n_motions; ++m) {
        for (std::uint64_t salt = 0;; ++salt) {
            if (salt > 64) throw std::runtime_error("motion bank generation failed to separate motions");
            MotionBankEntry entry = synth::draw_motion(p.seed, m, p.V, salt);
            SkeletonSequence c = canonical_sequence(entry, p.T, p.V, 3);
            bool ok = true;
            for (const auto& prev : canon)
                if (synth::mean_trajectory_distance(c, prev) <= synth::kMotionSeparationMargin) ok = false;
            if (ok) {
                ds.motions.push_back(std::move(entry));
                canon.push_back(std::move(c));
                break;
            }
        }
    }
    for (int c = 0; c < p.n_characters; ++c) ds.characters.push_back(synth::draw_character(p.seed, c, p.V));

    ds.sequences.resize(static_cast<std::size_t>(p.n_motions) * static_cast<std::size_t>(p.n_characters));
    parallel_for(ds.sequences.size(), [&](std::size_t i) {
        const int m = static_cast<int>(i) / p.n_characters;
        const int c = static_cast<int>(i) % p.n_characters;
        ds.sequences[i] = apply_character(ds.motions[static_cast<std::size_t>(m)],
                                          ds.characters[static_cast<std::size_t>(c)], p.T, p.V, p.dim, m, c);
        for (float v : ds.sequences[i].frames.data)
            if (v < -1.0f || v > 1.0f)
                throw std::runtime_error("generated coordinate outside [-1,1]; generator bounds violated");
    });

    // Distinctness across characters for a fixed motion (and across motions
    // for a fixed character, which the separation margin already implies).
    for (int c1 = 0; c1 < p.n_characters; ++c1)
        for (int c2 = c1 + 1; c2 < p.n_characters; ++c2)
            if (synth::mean_trajectory_distance(ds.at(0, c1), ds.at(0, c2)) <= 0.0)
                throw std::runtime_error("characters " + std::to_string(c1) + " and " + std::to_string(c2) +
                                         " produce identical sequences");
    return ds;
}

}  // namespace via
