#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "via/trainer.hpp"

namespace via {

// Quantitative evaluation. All comparisons run in root-centered space: the
// model consumes and produces root-centered sequences, so targets and the
// copy-source baseline are centered the same way.

// --- motion retargeting ---

struct RetargetReport {
    struct Entry {
        int motion, character;          // driving cell
        int source_motion, source_character;
        double mse;       // generated vs ground-truth target p_{m, c_src}
        double baseline;  // copy-source: MSE(p_{m_src, c_src}, p_{m, c_src})
    };
    std::vector<Entry> pairs;
    double aggregate_mse = 0.0;
    double baseline_mse = 0.0;

    // header: driving_motion,driving_character,source_motion,source_character,mse,baseline_mse
    std::string to_csv() const {
        std::ostringstream os;
        os << "driving_motion,driving_character,source_motion,source_character,mse,baseline_mse\n";
        char row[160];
        for (const Entry& e : pairs) {
            std::snprintf(row, sizeof row, "%d,%d,%d,%d,%.9g,%.9g", e.motion, e.character,
                          e.source_motion, e.source_character, e.mse, e.baseline);
            os << row << "\n";
        }
        return os.str();
    }
};

template <typename S>
double mean_squared_error(const Tensor<S>& a, const Tensor<S>& b) {
    require_same_shape(a, b, "mean_squared_error");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

// One retargeting inference: driving motion plus source character.
inline Tensor<float> retarget(const ModelParams<float>& model, const Tensor<float>& driving_centered,
                              const Tensor<float>& source_centered) {
    const auto dec_d = lmd::decompose(encode_plain(model, driving_centered), model.basis);
    const auto dec_s = lmd::decompose(encode_plain(model, source_centered), model.basis);
    return decode_plain(model, lmd::recombine(dec_d.motion, dec_s.character));
}

// Every ordered pair of held-out cells with distinct motion and character
// becomes one evaluation triple (m, c, c'): driving (m,c), source (m',c'),
// ground truth p_{m,c'}. The synthetic generator materializes every cell,
// so exact targets always exist.
inline RetargetReport eval_retargeting(const ModelParams<float>& model, const SyntheticDataset& ds,
                                       const std::vector<std::size_t>& held_out, std::size_t max_pairs = 0) {
    RetargetReport report;
    std::vector<std::pair<int, int>> cells;
    for (std::size_t idx : held_out) {
        const auto& s = ds.sequences[idx];
        cells.emplace_back(s.motion_id, s.character_id);
    }
    struct Triple {
        int m, c, ms, cs;
    };
    std::vector<Triple> triples;
    for (const auto& [m, c] : cells)
        for (const auto& [ms, cs] : cells) {
            if (ms == m || cs == c) continue;
            triples.push_back({m, c, ms, cs});
        }
    if (max_pairs > 0 && triples.size() > max_pairs) triples.resize(max_pairs);
    if (triples.empty()) throw std::invalid_argument("eval_retargeting: no valid held-out triples");

    report.pairs.resize(triples.size());
    parallel_for(triples.size(), [&](std::size_t i) {
        const Triple& tr = triples[i];
        const auto& target_seq = ds.at(tr.m, tr.cs);
        if (target_seq.frames.data.empty())
            throw std::invalid_argument("eval_retargeting: missing ground truth for cell");
        const Tensor<float> driving = root_center(ds.at(tr.m, tr.c).frames);
        const Tensor<float> source = root_center(ds.at(tr.ms, tr.cs).frames);
        const Tensor<float> target = root_center(target_seq.frames);
        const Tensor<float> generated = retarget(model, driving, source);
        report.pairs[i] = {tr.m, tr.c, tr.ms, tr.cs, mean_squared_error(generated, target),
                           mean_squared_error(source, target)};
    });
    for (const auto& e : report.pairs) {
        report.aggregate_mse += e.mse;
        report.baseline_mse += e.baseline;
    }
    report.aggregate_mse /= static_cast<double>(report.pairs.size());
    report.baseline_mse /= static_cast<double>(report.pairs.size());
    return report;
}

// --- cross-view / cross-character probing protocols ---

struct ProbeSplit {
    std::vector<std::size_t> train, test;
    std::vector<int> train_characters, test_characters;
};

// Characters partitioned into bands: by view angle for the cross-view
// protocol, by mean body scale for the cross-subject analog. The top third
// of the band is held out, so train and test character sets are disjoint.
inline ProbeSplit probe_split(const SyntheticDataset& ds, const std::string& protocol) {
    const int nc = ds.params.n_characters;
    std::vector<int> order(static_cast<std::size_t>(nc));
    std::iota(order.begin(), order.end(), 0);
    auto key = [&](int c) {
        const CharacterFactor& f = ds.characters[static_cast<std::size_t>(c)];
        if (protocol == "cv") return f.view_angle;
        if (protocol == "cs") {
            double s = 0.0;
            for (double v : f.body_scale) s += v;
            return s / static_cast<double>(f.body_scale.size());
        }
        throw std::invalid_argument("unknown probe protocol '" + protocol + "' (expected cv or cs)");
    };
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return key(a) < key(b); });
    const int n_test = std::max(1, nc / 3);
    ProbeSplit split;
    for (int i = 0; i < nc; ++i)
        (i < nc - n_test ? split.train_characters : split.test_characters).push_back(order[static_cast<std::size_t>(i)]);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const int c = ds.sequences[i].character_id;
        const bool in_test = std::find(split.test_characters.begin(), split.test_characters.end(), c) !=
                             split.test_characters.end();
        (in_test ? split.test : split.train).push_back(i);
    }
    return split;
}

inline void validate_probe_split(const SyntheticDataset& ds, const ProbeSplit& split) {
    for (int tc : split.train_characters)
        for (int sc : split.test_characters)
            if (tc == sc) throw std::invalid_argument("probe split: train and test characters overlap");
    auto distinct_labels = [&](const std::vector<std::size_t>& idx) {
        std::vector<int> labels;
        for (std::size_t i : idx) labels.push_back(ds.sequences[i].motion_id);
        std::sort(labels.begin(), labels.end());
        labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
        return labels.size();
    };
    if (distinct_labels(split.train) < 2 || distinct_labels(split.test) < 2)
        throw std::invalid_argument("probe split: need at least two classes on both sides");
}

// --- disentanglement diagnostic ---

struct InvarianceReport {
    double median_same_motion = 0.0;
    double median_cross_motion = 0.0;
    double gap = 0.0;
    std::size_t n_same = 0, n_cross = 0;
};

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / std::sqrt(na * nb);
}

namespace detail_eval {
inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace detail_eval

// Cosine similarity of the time-averaged motion component across sequence
// pairs: same motion under different characters versus different motions.
inline InvarianceReport motion_invariance_diagnostic(const ModelParams<float>& model,
                                                     const SyntheticDataset& ds,
                                                     const std::vector<std::size_t>& indices) {
    std::vector<std::vector<double>> mean_motion(indices.size());
    parallel_for(indices.size(), [&](std::size_t i) {
        const Tensor<float> motion = probe_features(model, ds.sequences[indices[i]]);
        const int T = motion.shape[0], C = motion.shape[1];
        std::vector<double> mean(static_cast<std::size_t>(C), 0.0);
        for (int t = 0; t < T; ++t)
            for (int c = 0; c < C; ++c) mean[static_cast<std::size_t>(c)] += motion.data[static_cast<std::size_t>(t * C + c)];
        for (auto& v : mean) v /= T;
        mean_motion[i] = std::move(mean);
    });
    std::vector<double> same, cross;
    for (std::size_t i = 0; i < indices.size(); ++i)
        for (std::size_t j = i + 1; j < indices.size(); ++j) {
            const auto& a = ds.sequences[indices[i]];
            const auto& b = ds.sequences[indices[j]];
            const double sim = cosine(mean_motion[i], mean_motion[j]);
            if (a.motion_id == b.motion_id && a.character_id != b.character_id)
                same.push_back(sim);
            else if (a.motion_id != b.motion_id)
                cross.push_back(sim);
        }
    InvarianceReport r;
    r.n_same = same.size();
    r.n_cross = cross.size();
    r.median_same_motion = detail_eval::median(same);
    r.median_cross_motion = detail_eval::median(cross);
    r.gap = r.median_same_motion - r.median_cross_motion;
    return r;
}

// --- embedding export ---

// One row per sequence: id, labels, flattened motion component, magnitudes.
// Plotting happens elsewhere; this is the only visualization surface.
inline std::string embeddings_csv(const ModelParams<float>& model, const SyntheticDataset& ds) {
    std::ostringstream os;
    const int tprime = ds.params.T / 8;
    const int C = model.config.encoder.out_channels();
    const int K = model.config.basis_size;
    os << "sequence_id,motion_id,character_id";
    for (int i = 0; i < tprime * C; ++i) os << ",rm_" << i;
    for (int i = 0; i < K; ++i) os << ",a_" << i;
    os << "\n";
    std::vector<std::string> rows(ds.size());
    parallel_for(ds.size(), [&](std::size_t i) {
        const auto& seq = ds.sequences[i];
        const auto dec = lmd::decompose(encode_plain(model, root_center(seq.frames)), model.basis);
        std::ostringstream row;
        row << i << "," << seq.motion_id << "," << seq.character_id;
        char buf[32];
        for (float v : dec.motion.data) {
            std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(v));
            row << buf;
        }
        for (float v : dec.magnitudes.data) {
            std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(v));
            row << buf;
        }
        rows[i] = row.str();
    });
    for (const auto& r : rows) os << r << "\n";
    return os.str();
}

}  // namespace via
