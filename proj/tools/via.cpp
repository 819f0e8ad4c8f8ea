// via: command-line interface for the skeleton retargeting autoencoder.
// Subcommands: generate-data, train, retarget, probe, eval,
// export-embeddings. Exit codes: 0 success, 1 runtime/I-O failure, 2 usage.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "via/dataset_io.hpp"
#include "via/eval.hpp"
#include "via/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

void atomic_write_sequence(const fs::path& path, const via::SkeletonSequence& seq) {
    fs::path tmp = path;
    tmp += ".tmp";
    via::write_sequence(tmp, seq);
    fs::rename(tmp, path);
}

json loss_config_json(const via::LossConfig& lc) {
    return json{{"self", lc.self_on},          {"cycle", lc.cycle_on},
                {"triplet", lc.triplet_on},    {"velocity", lc.velocity_on},
                {"margin", lc.margin},         {"velocity_weight", lc.velocity_weight}};
}

json train_config_json(const via::TrainConfig& tc, const std::string& mode) {
    return json{{"mode", mode},
                {"epochs", tc.epochs},
                {"max_steps", tc.max_steps},
                {"batch_pairs", tc.batch_pairs},
                {"lr", tc.lr},
                {"beta1", tc.beta1},
                {"beta2", tc.beta2},
                {"eps", tc.eps},
                {"seed", tc.seed},
                {"losses", loss_config_json(tc.losses)},
                {"kmeans_k", tc.kmeans_k},
                {"test_fraction", tc.test_fraction},
                {"checkpoint_every", tc.checkpoint_every},
                {"probe_epochs", tc.probe_epochs},
                {"probe_lr", tc.probe_lr},
                {"probe_batch", tc.probe_batch}};
}

void apply_config_file(via::TrainConfig& tc, const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw via::IoError(via::IoCode::io_failure, "cannot open config: " + path.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw UsageError("config parse error: " + std::string(e.what()));
    }
    tc.epochs = j.value("epochs", tc.epochs);
    tc.max_steps = j.value("max_steps", tc.max_steps);
    tc.batch_pairs = j.value("batch_pairs", tc.batch_pairs);
    tc.lr = j.value("lr", tc.lr);
    tc.beta1 = j.value("beta1", tc.beta1);
    tc.beta2 = j.value("beta2", tc.beta2);
    tc.eps = j.value("eps", tc.eps);
    tc.seed = j.value("seed", tc.seed);
    tc.kmeans_k = j.value("kmeans_k", tc.kmeans_k);
    tc.test_fraction = j.value("test_fraction", tc.test_fraction);
    tc.checkpoint_every = j.value("checkpoint_every", tc.checkpoint_every);
    tc.probe_epochs = j.value("probe_epochs", tc.probe_epochs);
    tc.probe_lr = j.value("probe_lr", tc.probe_lr);
    tc.probe_batch = j.value("probe_batch", tc.probe_batch);
    if (j.contains("losses")) {
        const json& l = j["losses"];
        tc.losses.self_on = l.value("self", tc.losses.self_on);
        tc.losses.cycle_on = l.value("cycle", tc.losses.cycle_on);
        tc.losses.triplet_on = l.value("triplet", tc.losses.triplet_on);
        tc.losses.velocity_on = l.value("velocity", tc.losses.velocity_on);
        tc.losses.margin = l.value("margin", tc.losses.margin);
        tc.losses.velocity_weight = l.value("velocity_weight", tc.losses.velocity_weight);
    }
}

void write_resolved_config(const fs::path& dir, const json& j) {
    fs::create_directories(dir);
    via::atomic_write_text(dir / "config.resolved.json", j.dump(2) + "\n");
}

via::ModelParams<float> load_model(const fs::path& checkpoint) {
    return via::model_from_checkpoint(via::read_checkpoint(checkpoint));
}

std::vector<float> parse_magnitudes(const std::string& csv) {
    std::vector<float> out;
    std::size_t at = 0;
    while (at <= csv.size()) {
        const std::size_t next = csv.find(',', at);
        const std::string tok = csv.substr(at, next == std::string::npos ? std::string::npos : next - at);
        if (tok.empty()) throw UsageError("empty magnitude in --magnitudes");
        try {
            out.push_back(std::stof(tok));
        } catch (const std::exception&) {
            throw UsageError("cannot parse magnitude '" + tok + "'");
        }
        if (next == std::string::npos) break;
        at = next + 1;
    }
    return out;
}

// --- subcommands ---

struct GenerateArgs {
    int motions = 8, characters = 12, frames = 64, joints = 13, dim = 2;
    std::uint64_t seed = 7;
    std::string out = "data";
};

int run_generate(const GenerateArgs& a) {
    if (a.frames % 8 != 0)
        throw UsageError("--frames must be divisible by 8 (three stride-2 encoder blocks), got " +
                         std::to_string(a.frames));
    via::GenParams p{a.motions, a.characters, a.frames, a.joints, a.dim, a.seed};
    const via::SyntheticDataset ds = via::generate_dataset(p);
    via::save_dataset(ds, a.out);
    write_resolved_config(a.out, json{{"subcommand", "generate-data"},
                                      {"motions", a.motions},
                                      {"characters", a.characters},
                                      {"frames", a.frames},
                                      {"joints", a.joints},
                                      {"dim", a.dim},
                                      {"seed", a.seed},
                                      {"dataset_id", ds.id}});
    std::cout << "wrote " << ds.size() << " sequences + manifest to " << a.out << " (dataset "
              << ds.id << ")\n";
    return kExitOk;
}

struct TrainArgs {
    std::string data, config, out = "train_out";
    std::string resume, init_from;
    via::TrainConfig tc;
    std::string model_preset = "desk";
    int basis_size = 0;
    bool has_cli_override = false;
};

via::ModelConfig preset_model(const std::string& preset, const via::SyntheticDataset& ds, int basis_size) {
    via::ModelConfig mc;
    if (preset == "desk")
        mc = via::ModelConfig::desk(ds.params.V, ds.params.dim, ds.params.n_motions);
    else if (preset == "paper")
        mc = via::ModelConfig::paper(ds.params.V, ds.params.dim, ds.params.n_motions);
    else if (preset == "toy")
        mc = via::ModelConfig::toy(ds.params.V, ds.params.dim, ds.params.n_motions);
    else
        throw UsageError("unknown --model preset '" + preset + "' (desk|paper|toy)");
    if (basis_size > 0) mc.basis_size = basis_size;
    return mc;
}

int run_train(const TrainArgs& a) {
    const via::SyntheticDataset ds = via::load_dataset(a.data);
    const via::ModelConfig mc = preset_model(a.model_preset, ds, a.basis_size);
    const auto split = via::make_split(ds.size(), a.tc.test_fraction, a.tc.seed);
    via::PretrainOptions opts;
    opts.out_dir = a.out;
    if (!a.resume.empty()) opts.resume_from = a.resume;
    if (!a.init_from.empty()) opts.init_from = a.init_from;

    json resolved = train_config_json(a.tc, "pretrain");
    resolved["subcommand"] = "train";
    resolved["data"] = a.data;
    resolved["dataset_id"] = ds.id;
    resolved["model_preset"] = a.model_preset;
    resolved["basis_size"] = mc.basis_size;
    write_resolved_config(a.out, resolved);

    const via::PretrainResult res = via::pretrain(ds, split, mc, a.tc, opts);
    if (res.diverged) {
        std::cerr << "via: error: training diverged at step " << res.steps
                  << " (" << res.abort_reason << "); last good checkpoint retained\n";
        return kExitRuntime;
    }
    std::cout << "trained " << res.steps << " steps; loss " << res.first_total << " -> "
              << res.last_total << "; checkpoint at " << (fs::path(a.out) / "checkpoint.viac").string()
              << "\n";
    return kExitOk;
}

struct RetargetArgs {
    std::string checkpoint, driving, source, out;
    std::string magnitudes;
};

int run_retarget(const RetargetArgs& a) {
    const auto model = load_model(a.checkpoint);
    const via::SkeletonSequence driving = via::read_sequence(a.driving);
    const via::Tensor<float> driving_centered = via::root_center(driving.frames);

    via::Tensor<float> generated;
    if (!a.magnitudes.empty()) {
        const std::vector<float> mags = parse_magnitudes(a.magnitudes);
        if (static_cast<int>(mags.size()) != model.config.basis_size)
            throw UsageError("expected " + std::to_string(model.config.basis_size) +
                             " magnitudes, got " + std::to_string(mags.size()));
        const auto dec = via::lmd::decompose(via::encode_plain(model, driving_centered), model.basis);
        generated = via::decode_plain(model, via::lmd::manipulate(dec.motion, model.basis, mags));
    } else {
        if (a.source.empty()) throw UsageError("retarget needs --source or --magnitudes");
        const via::SkeletonSequence source = via::read_sequence(a.source);
        generated = via::retarget(model, driving_centered, via::root_center(source.frames));
    }
    atomic_write_sequence(a.out, via::make_sequence(std::move(generated), driving.motion_id, -1));
    write_resolved_config(fs::path(a.out).parent_path().empty() ? "." : fs::path(a.out).parent_path(),
                          json{{"subcommand", "retarget"},
                               {"checkpoint", a.checkpoint},
                               {"driving", a.driving},
                               {"source", a.source},
                               {"magnitudes", a.magnitudes},
                               {"out", a.out}});
    std::cout << "wrote retargeted sequence to " << a.out << "\n";
    return kExitOk;
}

struct ProbeArgs {
    std::string checkpoint, data, split = "cv", mode = "linear", out = "probe_out";
    via::TrainConfig tc;
};

// Fresh head sized for the dataset labels, deterministic per seed.
via::ModelParams<float> with_fresh_probe(via::ModelParams<float> model, const via::SyntheticDataset& ds,
                                         std::uint64_t seed) {
    const int n_classes = ds.params.n_motions;
    via::Rng rng = via::Rng::derive(seed, {0x9});
    model.probe = via::ProbeParams<float>::init(model.config.encoder.out_channels(), n_classes, rng);
    model.config.n_classes = n_classes;
    return model;
}

int run_probe(const ProbeArgs& a) {
    if (a.mode != "linear" && a.mode != "finetune")
        throw UsageError("--mode must be linear or finetune");
    const via::SyntheticDataset ds = via::load_dataset(a.data);
    auto model = with_fresh_probe(load_model(a.checkpoint), ds, a.tc.seed);
    const via::ProbeSplit split = via::probe_split(ds, a.split);
    via::validate_probe_split(ds, split);
    const via::ProbeResult res =
        via::train_probe(ds, split.train, split.test, model, a.tc, a.mode == "finetune");

    json resolved = train_config_json(a.tc, a.mode == "linear" ? "linear-probe" : "fine-tune");
    resolved["subcommand"] = "probe";
    resolved["split"] = a.split;
    resolved["checkpoint"] = a.checkpoint;
    resolved["data"] = a.data;
    write_resolved_config(a.out, resolved);
    json report{{"top1", res.top1},
                {"mean_per_class", res.mean_per_class},
                {"n_test", res.n_test},
                {"per_class", res.per_class_accuracy},
                {"split", a.split},
                {"mode", a.mode}};
    via::atomic_write_text(fs::path(a.out) / "probe_report.json", report.dump(2) + "\n");
    std::cout << "probe top-1 " << res.top1 << " (mean per class " << res.mean_per_class << ") on "
              << res.n_test << " held-out sequences\n";
    return kExitOk;
}

struct EvalArgs {
    std::string checkpoint, data, report = "retarget", out = "eval_out";
    via::TrainConfig tc;
};

int run_eval(const EvalArgs& a) {
    const via::SyntheticDataset ds = via::load_dataset(a.data);
    const auto model = load_model(a.checkpoint);
    fs::create_directories(a.out);
    write_resolved_config(a.out, json{{"subcommand", "eval"},
                                      {"report", a.report},
                                      {"checkpoint", a.checkpoint},
                                      {"data", a.data},
                                      {"seed", a.tc.seed}});
    if (a.report == "retarget") {
        const auto split = via::make_split(ds.size(), a.tc.test_fraction, a.tc.seed);
        const auto rep = via::eval_retargeting(model, ds, split.test);
        via::atomic_write_text(fs::path(a.out) / "retarget_report.csv", rep.to_csv());
        std::cout << "retarget MSE " << rep.aggregate_mse << " vs copy-source baseline "
                  << rep.baseline_mse << " over " << rep.pairs.size() << " held-out triples\n";
        return kExitOk;
    }
    if (a.report == "cv-probe") {
        const via::ProbeSplit split = via::probe_split(ds, "cv");
        via::validate_probe_split(ds, split);
        auto pretrained = with_fresh_probe(model, ds, a.tc.seed);
        const auto res_pre = via::train_probe(ds, split.train, split.test, pretrained, a.tc, false);
        auto random_model = with_fresh_probe(
            via::ModelParams<float>::init(pretrained.config, a.tc.seed + 0x517), ds, a.tc.seed);
        const auto res_rand = via::train_probe(ds, split.train, split.test, random_model, a.tc, false);
        json rep{{"pretrained_top1", res_pre.top1},
                 {"random_top1", res_rand.top1},
                 {"delta", res_pre.top1 - res_rand.top1},
                 {"n_test", res_pre.n_test}};
        via::atomic_write_text(fs::path(a.out) / "cv_probe_report.json", rep.dump(2) + "\n");
        std::cout << "cv probe: pretrained " << res_pre.top1 << ", random encoder " << res_rand.top1
                  << ", delta " << res_pre.top1 - res_rand.top1 << "\n";
        return kExitOk;
    }
    if (a.report == "invariance") {
        const auto split = via::make_split(ds.size(), a.tc.test_fraction, a.tc.seed);
        const auto rep = via::motion_invariance_diagnostic(model, ds, split.test);
        json j{{"median_same_motion", rep.median_same_motion},
               {"median_cross_motion", rep.median_cross_motion},
               {"gap", rep.gap},
               {"n_same", rep.n_same},
               {"n_cross", rep.n_cross}};
        via::atomic_write_text(fs::path(a.out) / "invariance_report.json", j.dump(2) + "\n");
        std::cout << "invariance gap " << rep.gap << " (same " << rep.median_same_motion << ", cross "
                  << rep.median_cross_motion << ") over " << rep.n_same + rep.n_cross << " pairs\n";
        return kExitOk;
    }
    throw UsageError("unknown --report '" + a.report + "' (retarget|cv-probe|invariance)");
}

struct ExportArgs {
    std::string checkpoint, data, out = "embeddings.csv";
};

int run_export(const ExportArgs& a) {
    const via::SyntheticDataset ds = via::load_dataset(a.data);
    const auto model = load_model(a.checkpoint);
    via::atomic_write_text(a.out, via::embeddings_csv(model, ds));
    std::cout << "wrote " << ds.size() << " embedding rows to " << a.out << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"view-invariant skeleton retargeting autoencoder"};
    app.require_subcommand(1);
    app.footer("Environment: VIA_THREADS caps worker threads (default 1, fully deterministic).");

    GenerateArgs gen;
    auto* cmd_gen = app.add_subcommand("generate-data", "generate a synthetic dataset with exact targets");
    cmd_gen->add_option("--motions", gen.motions, "number of motions")->capture_default_str();
    cmd_gen->add_option("--characters", gen.characters, "number of characters")->capture_default_str();
    cmd_gen->add_option("--frames", gen.frames, "frames per sequence (divisible by 8)")->capture_default_str();
    cmd_gen->add_option("--joints", gen.joints, "joints per frame")->capture_default_str();
    cmd_gen->add_option("--dim", gen.dim, "coordinate dimensionality (2 or 3)")->capture_default_str();
    cmd_gen->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
    cmd_gen->add_option("--out", gen.out, "output directory")->capture_default_str();

    TrainArgs tr;
    auto* cmd_train = app.add_subcommand("train", "self-supervised pre-training");
    cmd_train->add_option("--data", tr.data, "dataset directory")->required();
    cmd_train->add_option("--config", tr.config, "JSON config file (CLI flags override)");
    cmd_train->add_option("--out", tr.out, "output directory")->capture_default_str();
    cmd_train->add_option("--resume", tr.resume, "checkpoint to resume from");
    cmd_train->add_option("--init-from", tr.init_from, "checkpoint to warm-start model weights from");
    cmd_train->add_option("--model", tr.model_preset, "model preset (desk|paper|toy)")->capture_default_str();
    cmd_train->add_option("--basis-size", tr.basis_size, "character basis size K");
    auto* opt_epochs = cmd_train->add_option("--epochs", tr.tc.epochs);
    auto* opt_steps = cmd_train->add_option("--max-steps", tr.tc.max_steps);
    auto* opt_batch = cmd_train->add_option("--batch", tr.tc.batch_pairs);
    auto* opt_lr = cmd_train->add_option("--lr", tr.tc.lr);
    auto* opt_seed = cmd_train->add_option("--seed", tr.tc.seed);

    RetargetArgs rt;
    auto* cmd_rt = app.add_subcommand("retarget", "transfer driving motion onto a source character");
    cmd_rt->add_option("--checkpoint", rt.checkpoint, "trained checkpoint")->required();
    cmd_rt->add_option("--driving", rt.driving, "driving VIAS sequence")->required();
    cmd_rt->add_option("--source", rt.source, "source VIAS sequence (character donor)");
    cmd_rt->add_option("--out", rt.out, "output VIAS path")->required();
    cmd_rt->add_option("--magnitudes", rt.magnitudes,
                       "comma-separated character magnitudes; replaces --source");

    ProbeArgs pr;
    auto* cmd_probe = app.add_subcommand("probe", "train and evaluate a classification head");
    cmd_probe->add_option("--checkpoint", pr.checkpoint, "backbone checkpoint")->required();
    cmd_probe->add_option("--data", pr.data, "labeled dataset directory")->required();
    cmd_probe->add_option("--split", pr.split, "protocol (cv|cs)")->capture_default_str();
    cmd_probe->add_option("--mode", pr.mode, "linear|finetune")->capture_default_str();
    cmd_probe->add_option("--out", pr.out, "output directory")->capture_default_str();
    cmd_probe->add_option("--seed", pr.tc.seed);
    cmd_probe->add_option("--probe-epochs", pr.tc.probe_epochs);

    EvalArgs ev;
    auto* cmd_eval = app.add_subcommand("eval", "quantitative reports");
    cmd_eval->add_option("--checkpoint", ev.checkpoint, "trained checkpoint")->required();
    cmd_eval->add_option("--data", ev.data, "dataset directory")->required();
    cmd_eval->add_option("--report", ev.report, "retarget|cv-probe|invariance")->capture_default_str();
    cmd_eval->add_option("--out", ev.out, "output directory")->capture_default_str();
    cmd_eval->add_option("--seed", ev.tc.seed);

    ExportArgs ex;
    auto* cmd_export = app.add_subcommand("export-embeddings", "CSV of motion embeddings per sequence");
    cmd_export->add_option("--checkpoint", ex.checkpoint, "trained checkpoint")->required();
    cmd_export->add_option("--data", ex.data, "dataset directory")->required();
    cmd_export->add_option("--out", ex.out, "output CSV path")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (cmd_gen->parsed()) return run_generate(gen);
        if (cmd_train->parsed()) {
            if (!tr.config.empty()) {
                via::TrainConfig from_file = tr.tc;
                apply_config_file(from_file, tr.config);
                // explicit CLI flags override the file
                if (!opt_epochs->count()) tr.tc.epochs = from_file.epochs;
                if (!opt_steps->count()) tr.tc.max_steps = from_file.max_steps;
                if (!opt_batch->count()) tr.tc.batch_pairs = from_file.batch_pairs;
                if (!opt_lr->count()) tr.tc.lr = from_file.lr;
                if (!opt_seed->count()) tr.tc.seed = from_file.seed;
                tr.tc.beta1 = from_file.beta1;
                tr.tc.beta2 = from_file.beta2;
                tr.tc.eps = from_file.eps;
                tr.tc.losses = from_file.losses;
                tr.tc.kmeans_k = from_file.kmeans_k;
                tr.tc.test_fraction = from_file.test_fraction;
                tr.tc.checkpoint_every = from_file.checkpoint_every;
            }
            return run_train(tr);
        }
        if (cmd_rt->parsed()) return run_retarget(rt);
        if (cmd_probe->parsed()) return run_probe(pr);
        if (cmd_eval->parsed()) return run_eval(ev);
        if (cmd_export->parsed()) return run_export(ex);
        std::cerr << "via: error: no subcommand\n";
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "via: error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "via: error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "via: error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
