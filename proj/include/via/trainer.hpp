#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "via/checkpoint.hpp"
#include "via/dataset_io.hpp"
#include "via/kmeans.hpp"
#include "via/losses.hpp"
#include "via/optimizer.hpp"
#include "via/parallel.hpp"

namespace via {

struct TrainConfig {
    int epochs = 40;
    int max_steps = 0;  // 0: epochs decide; otherwise a hard cap
    int batch_pairs = 4;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 1;
    LossConfig losses;
    int kmeans_k = 10;
    double test_fraction = 0.25;
    int checkpoint_every = 100;  // steps
    int probe_epochs = 300;
    double probe_lr = 0.01;
    int probe_batch = 16;  // fine-tune minibatch

    void validate() const {
        if (epochs < 1 || batch_pairs < 1 || lr < 0 || eps <= 0 || kmeans_k < 2)
            throw std::invalid_argument("train config: positive numeric fields required");
        if (test_fraction <= 0.0 || test_fraction >= 1.0)
            throw std::invalid_argument("train config: test fraction must be in (0,1)");
        if (probe_epochs < 1 || probe_lr <= 0 || probe_batch < 1)
            throw std::invalid_argument("train config: probe fields must be positive");
        losses.validate();
    }
};

// Hash of everything that must agree between a checkpoint and a resuming
// run: trainer hyperparameters, loss configuration, model architecture and
// the dataset identity. Run-length knobs (epochs, max_steps) stay out: they
// do not change the step trajectory, only where it stops.
inline std::uint64_t train_config_hash(const TrainConfig& tc, const ModelConfig& mc,
                                       const std::string& dataset_id) {
    std::ostringstream os;
    os << "batch=" << tc.batch_pairs
       << ";lr=" << tc.lr << ";b1=" << tc.beta1 << ";b2=" << tc.beta2 << ";eps=" << tc.eps
       << ";seed=" << tc.seed << ";self=" << tc.losses.self_on << ";cycle=" << tc.losses.cycle_on
       << ";trip=" << tc.losses.triplet_on << ";vel=" << tc.losses.velocity_on
       << ";margin=" << tc.losses.margin << ";lambda=" << tc.losses.velocity_weight
       << ";k=" << tc.kmeans_k << ";test_frac=" << tc.test_fraction << ";data=" << dataset_id << ";model=";
    const Tensor<float> mc_enc = encode_model_config(mc);
    for (float v : mc_enc.data) os << static_cast<int>(v) << ",";
    const std::string s = os.str();
    return fnv1a(s.data(), s.size());
}

struct SplitIndices {
    std::vector<std::size_t> train, test;
};

// Random (motion, character) cell split, deterministic per seed.
inline SplitIndices make_split(std::size_t n, double test_fraction, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = Rng::derive(seed, {0x511});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    const std::size_t n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                                            static_cast<double>(n) * test_fraction)));
    SplitIndices s;
    s.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    std::sort(s.test.begin(), s.test.end());
    std::sort(s.train.begin(), s.train.end());
    return s;
}

namespace trainer_detail {
enum Streams : std::uint64_t { kShuffle = 11, kContrast = 12, kOrtho = 13, kCluster = 14 };
}

struct PretrainOptions {
    std::filesystem::path out_dir;      // empty: keep everything in memory
    std::filesystem::path resume_from;  // empty: fresh start
    // Warm start: load model parameters from a checkpoint but begin a fresh
    // run (step 0, fresh optimizer, no config-hash requirement beyond the
    // architecture matching). Used to stage the objective: reconstruction
    // and cycle terms first, contrastive terms on top of that.
    std::filesystem::path init_from;
};

struct PretrainResult {
    ModelParams<float> model;
    int steps = 0;
    bool diverged = false;
    std::string abort_reason;
    std::string metrics_csv;  // rows produced by this run (with header)
    double first_total = 0.0;
    double last_total = 0.0;
    std::vector<int> cluster_assignments;  // per train-subset position
};

inline const char* kMetricsHeader = "step,l_self,l_cycle,l_trip_m,l_trip_c,l_vel,l_total,ortho_residual";

// Self-supervised pre-training over driving/source pairs. Deterministic:
// the batch schedule is a pure function of (seed, step), so resuming from a
// checkpoint replays the uninterrupted run bit for bit in single-worker mode.
inline PretrainResult pretrain(const SyntheticDataset& ds, const SplitIndices& split,
                               const ModelConfig& mcfg, const TrainConfig& tc,
                               const PretrainOptions& opts = {}) {
    tc.validate();
    mcfg.validate();
    if (mcfg.encoder.joints != ds.params.V || mcfg.encoder.in_channels != ds.params.dim)
        throw std::invalid_argument("model config does not match dataset dims");
    const std::uint64_t cfg_hash = train_config_hash(tc, mcfg, ds.id);

    const std::size_t n_train = split.train.size();
    if (n_train < 2) throw std::invalid_argument("pretrain: need at least 2 training sequences");

    // Root-centered float inputs for the train subset.
    std::vector<Tensor<float>> centered(n_train);
    parallel_for(n_train, [&](std::size_t i) {
        centered[i] = root_center(ds.sequences[split.train[i]].frames);
    });

    // Contrastive cluster model over the training set.
    std::vector<const SkeletonSequence*> train_seqs;
    for (std::size_t i : split.train) train_seqs.push_back(&ds.sequences[i]);
    const ClusterModel clusters =
        fit_sequences(train_seqs, tc.kmeans_k, Rng::derive(tc.seed, {trainer_detail::kCluster}).next_u64());

    PretrainResult res;
    res.cluster_assignments = clusters.assignments;

    Adam<float> opt({tc.lr, tc.beta1, tc.beta2, tc.eps});
    int start_step = 0;
    if (!opts.resume_from.empty()) {
        const Checkpoint ckpt = read_checkpoint(opts.resume_from);
        if (decode_hash(ckpt.at("meta/config_hash")) != cfg_hash)
            throw std::runtime_error("config hash mismatch on resume; refusing to continue");
        res.model = model_from_checkpoint(ckpt);
        restore_optimizer(ckpt, opt);
        start_step = static_cast<int>(ckpt.at("meta/step").data[0]);
    } else if (!opts.init_from.empty()) {
        res.model = model_from_checkpoint(read_checkpoint(opts.init_from));
        const Tensor<float> want = encode_model_config(mcfg);
        const Tensor<float> got = encode_model_config(res.model.config);
        if (want.data != got.data)
            throw std::invalid_argument("init_from checkpoint architecture does not match the model config");
    } else {
        res.model = ModelParams<float>::init(mcfg, tc.seed);
    }

    const int steps_per_epoch = std::max<int>(1, static_cast<int>(n_train) / tc.batch_pairs);
    const int total_steps = tc.max_steps > 0 ? tc.max_steps : tc.epochs * steps_per_epoch;

    std::ostringstream csv;
    csv << kMetricsHeader << "\n";

    int cached_epoch = -1;
    std::vector<std::size_t> order(n_train);
    std::vector<std::size_t> sources(n_train);
    auto prepare_epoch = [&](int epoch) {
        if (epoch == cached_epoch) return;
        cached_epoch = epoch;
        for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
        Rng shuffle_rng = Rng::derive(tc.seed, {trainer_detail::kShuffle, static_cast<std::uint64_t>(epoch)});
        for (std::size_t i = n_train; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.index(i)]);
        for (std::size_t i = 0; i < n_train; ++i) {
            Rng pick = Rng::derive(tc.seed, {trainer_detail::kContrast, static_cast<std::uint64_t>(epoch), i});
            sources[i] = sample_contrastive(i, clusters, pick);
        }
    };

    auto write_ckpt = [&](int step) {
        if (opts.out_dir.empty()) return;
        std::filesystem::create_directories(opts.out_dir);
        Checkpoint ckpt = make_checkpoint(res.model, &opt, step, cfg_hash);
        write_checkpoint(opts.out_dir / "checkpoint.viac", ckpt);
    };

    for (int step = start_step; step < total_steps; ++step) {
        const int epoch = step / steps_per_epoch;
        const int pos = step % steps_per_epoch;
        prepare_epoch(epoch);

        double terms[6];
        try {
            Tape<float> tape;
            auto vars = register_model(tape, res.model, TrainableGroups::pretrain());
            std::vector<PairState<float>> states;
            for (int b = 0; b < tc.batch_pairs; ++b) {
                const std::size_t drive = order[(static_cast<std::size_t>(pos) * tc.batch_pairs + b) % n_train];
                const std::size_t source = sources[drive];
                states.push_back(pair_forward(tape, mcfg, vars, tape.input(centered[drive]),
                                              tape.input(centered[source]), tc.losses));
            }
            auto losses = batch_losses(tape, states, tc.losses);
            terms[0] = tape.value(losses.self).item();
            terms[1] = tape.value(losses.cycle).item();
            terms[2] = tape.value(losses.trip_m).item();
            terms[3] = tape.value(losses.trip_c).item();
            terms[4] = tape.value(losses.vel).item();
            terms[5] = tape.value(losses.total).item();
            if (!std::isfinite(terms[5])) throw std::runtime_error("non-finite loss");
            tape.backward(losses.total);

            std::vector<Adam<float>::Update> updates;
            for (auto& [name, param, var] : named_vars(res.model, vars, TrainableGroups::pretrain()))
                updates.push_back({name, param, &tape.grad(var)});
            opt.step(updates);
        } catch (const std::runtime_error& e) {
            // divergence guard: abort, leaving parameters and the last
            // checkpoint at their pre-step state
            res.diverged = true;
            res.abort_reason = e.what();
            break;
        }

        if (tc.lr != 0.0) {  // zero step size moves nothing, so there is nothing to restore
            Rng ortho_rng = Rng::derive(tc.seed, {trainer_detail::kOrtho, static_cast<std::uint64_t>(step)});
            lmd::reorthogonalize(res.model.basis, ortho_rng);
        }
        const double residual = lmd::orthogonality_residual(res.model.basis);

        if (step == start_step) res.first_total = terms[5];
        res.last_total = terms[5];
        res.steps = step + 1;
        char row[256];
        std::snprintf(row, sizeof row, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.3e", step + 1, terms[0],
                      terms[1], terms[2], terms[3], terms[4], terms[5], residual);
        csv << row << "\n";

        if ((step + 1) % tc.checkpoint_every == 0 || step + 1 == total_steps) write_ckpt(step + 1);
    }

    res.metrics_csv = csv.str();
    if (!opts.out_dir.empty()) {
        std::filesystem::create_directories(opts.out_dir);
        atomic_write_text(opts.out_dir / "metrics.csv", res.metrics_csv);
    }
    return res;
}

// --- probing ---

struct ProbeResult {
    double top1 = 0.0;
    std::vector<double> per_class_accuracy;
    double mean_per_class = 0.0;
    int n_test = 0;
    ModelParams<float> model;
};

// Probe features: the motion component of the latent, per Fig. 2(b) the
// encoder is transferred stacked with the decomposition.
inline Tensor<float> probe_features(const ModelParams<float>& model, const SkeletonSequence& seq) {
    const Tensor<float> latent = encode_plain(model, root_center(seq.frames));
    return lmd::decompose(latent, model.basis, false).motion;
}

inline int probe_predict(const ModelParams<float>& model, const Tensor<float>& features) {
    Tape<float> t;
    auto pv = register_probe(t, model.probe, false);
    const Tensor<float>& logits = t.value(probe_logits(t, pv, t.input(features)));
    int arg = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits.data[i] > logits.data[static_cast<std::size_t>(arg)]) arg = static_cast<int>(i);
    return arg;
}

inline ProbeResult evaluate_probe(const ModelParams<float>& model, const SyntheticDataset& ds,
                                  const std::vector<std::size_t>& test,
                                  const std::vector<int>* labels_override = nullptr) {
    ProbeResult r;
    r.model = model;
    r.n_test = static_cast<int>(test.size());
    const int n_classes = model.config.n_classes;
    std::vector<int> correct(static_cast<std::size_t>(n_classes), 0);
    std::vector<int> totals(static_cast<std::size_t>(n_classes), 0);
    std::vector<int> preds(test.size());
    parallel_for(test.size(), [&](std::size_t i) {
        preds[i] = probe_predict(model, probe_features(model, ds.sequences[test[i]]));
    });
    int hits = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const int label = labels_override ? (*labels_override)[i] : ds.sequences[test[i]].motion_id;
        ++totals[static_cast<std::size_t>(label)];
        if (preds[i] == label) {
            ++hits;
            ++correct[static_cast<std::size_t>(label)];
        }
    }
    r.top1 = test.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(test.size());
    double mpc = 0.0;
    int seen = 0;
    for (int c = 0; c < n_classes; ++c) {
        if (totals[static_cast<std::size_t>(c)] == 0) continue;
        const double acc = static_cast<double>(correct[static_cast<std::size_t>(c)]) /
                           static_cast<double>(totals[static_cast<std::size_t>(c)]);
        r.per_class_accuracy.push_back(acc);
        mpc += acc;
        ++seen;
    }
    r.mean_per_class = seen ? mpc / seen : 0.0;
    return r;
}

// Linear probing (backbone frozen) or full fine-tuning on labeled data.
// Labels are motion ids; optional overrides support control experiments.
inline ProbeResult train_probe(const SyntheticDataset& ds, const std::vector<std::size_t>& train,
                               const std::vector<std::size_t>& test, ModelParams<float> model,
                               const TrainConfig& tc, bool finetune,
                               const std::vector<int>* train_labels_override = nullptr) {
    tc.validate();
    const int n_classes = model.config.n_classes;
    auto label_of = [&](std::size_t pos) {
        const int label = train_labels_override ? (*train_labels_override)[pos]
                                                : ds.sequences[train[pos]].motion_id;
        if (label < 0 || label >= n_classes)
            throw std::invalid_argument("label " + std::to_string(label) + " outside [0," +
                                        std::to_string(n_classes) + "): label/class-count mismatch");
        return label;
    };
    for (std::size_t i = 0; i < train.size(); ++i) label_of(i);

    Adam<float> opt({tc.probe_lr, tc.beta1, tc.beta2, tc.eps});

    if (!finetune) {
        const std::uint64_t frozen = model.fingerprint(
            {ParamGroup::encoder, ParamGroup::basis, ParamGroup::decoder});
        std::vector<Tensor<float>> feats(train.size());
        parallel_for(train.size(), [&](std::size_t i) {
            feats[i] = probe_features(model, ds.sequences[train[i]]);
        });
        // Features share a large constant component; fitting on train-mean
        // centered features and folding the shift into the bias afterwards
        // (b <- b - mu W) trains the same affine map, just well conditioned.
        const int C = feats[0].shape[1];
        Tensor<float> mu = Tensor<float>::zeros({C});
        for (const auto& f : feats) {
            const int T = f.shape[0];
            for (int t = 0; t < T; ++t)
                for (int c = 0; c < C; ++c)
                    mu.data[static_cast<std::size_t>(c)] +=
                        f.data[static_cast<std::size_t>(t * C + c)] /
                        static_cast<float>(T * static_cast<int>(feats.size()));
        }
        for (auto& f : feats)
            for (int t = 0; t < f.shape[0]; ++t)
                for (int c = 0; c < C; ++c)
                    f.data[static_cast<std::size_t>(t * C + c)] -= mu.data[static_cast<std::size_t>(c)];
        for (int epoch = 0; epoch < tc.probe_epochs; ++epoch) {
            Tape<float> tape;
            auto pv = register_probe(tape, model.probe, true);
            Var acc{-1};
            for (std::size_t i = 0; i < train.size(); ++i) {
                Var ce = cross_entropy_logits(tape, probe_logits(tape, pv, tape.input(feats[i])),
                                              label_of(i));
                acc = acc.valid() ? add(tape, acc, ce) : ce;
            }
            Var loss = scale(tape, acc, 1.0f / static_cast<float>(train.size()));
            tape.backward(loss);
            opt.step({{"probe/w", &model.probe.w, &tape.grad(pv.w)},
                      {"probe/b", &model.probe.b, &tape.grad(pv.b)}});
        }
        const int n_out = model.probe.w.shape[1];
        for (int k = 0; k < n_out; ++k) {
            float shift = 0.0f;
            for (int c = 0; c < C; ++c)
                shift += mu.data[static_cast<std::size_t>(c)] *
                         model.probe.w.data[static_cast<std::size_t>(c * n_out + k)];
            model.probe.b.data[static_cast<std::size_t>(k)] -= shift;
        }
        if (model.fingerprint({ParamGroup::encoder, ParamGroup::basis, ParamGroup::decoder}) != frozen)
            throw std::logic_error("frozen backbone changed during linear probing");
    } else {
        Rng shuffle_rng = Rng::derive(tc.seed, {0xF17E});
        std::vector<std::size_t> order(train.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::vector<Tensor<float>> centered(train.size());
        parallel_for(train.size(), [&](std::size_t i) {
            centered[i] = root_center(ds.sequences[train[i]].frames);
        });
        for (int epoch = 0; epoch < tc.probe_epochs; ++epoch) {
            for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.index(i)]);
            for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(tc.probe_batch)) {
                Tape<float> tape;
                auto vars = register_model(tape, model, TrainableGroups::finetune());
                Var acc{-1};
                const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(tc.probe_batch));
                for (std::size_t i = at; i < end; ++i) {
                    Var latent = encode(tape, model.config.encoder, vars.encoder, tape.input(centered[order[i]]));
                    auto dec = lmd::decompose(tape, latent, vars.basis);
                    Var ce = cross_entropy_logits(tape, probe_logits(tape, vars.probe, dec.motion),
                                                  label_of(order[i]));
                    acc = acc.valid() ? add(tape, acc, ce) : ce;
                }
                Var loss = scale(tape, acc, 1.0f / static_cast<float>(end - at));
                tape.backward(loss);
                std::vector<Adam<float>::Update> updates;
                for (auto& [name, param, var] : named_vars(model, vars, TrainableGroups::finetune()))
                    updates.push_back({name, param, &tape.grad(var)});
                opt.step(updates);
                Rng ortho_rng = Rng::derive(tc.seed, {0xF17F, static_cast<std::uint64_t>(epoch), at});
                lmd::reorthogonalize(model.basis, ortho_rng);
            }
        }
    }
    ProbeResult r = evaluate_probe(model, ds, test);
    r.model = std::move(model);
    return r;
}

}  // namespace via
