#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "via/skeleton.hpp"
#include "via/synthetic.hpp"

namespace via {

namespace fs = std::filesystem;

// Writes content to a temp file in the target directory, then renames over
// the destination. Readers never observe partial output.
inline void atomic_write_text(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw IoError(IoCode::io_failure, "cannot open for write: " + tmp.string());
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!os) throw IoError(IoCode::io_failure, "write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string sequence_filename(int m, int c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "seq_m%03d_c%03d.vias", m % 1000, c % 1000);
    return buf;
}

inline nlohmann::json manifest_json(const SyntheticDataset& ds, const std::vector<int>* clusters = nullptr) {
    nlohmann::json j;
    j["format"] = "via-dataset";
    j["version"] = 1;
    j["dataset_id"] = ds.id;
    j["params"] = {{"seed", ds.params.seed},       {"motions", ds.params.n_motions},
                   {"characters", ds.params.n_characters}, {"frames", ds.params.T},
                   {"joints", ds.params.V},        {"dim", ds.params.dim}};
    j["normalization"] = {{"root_centered_on_disk", false}, {"coordinate_range", {-1.0, 1.0}}};
    nlohmann::json chars = nlohmann::json::array();
    for (std::size_t c = 0; c < ds.characters.size(); ++c) {
        const CharacterFactor& f = ds.characters[c];
        chars.push_back({{"id", c},
                         {"view_angle", f.view_angle},
                         {"body_scale", f.body_scale},
                         {"root_offset", f.root_offset}});
    }
    j["characters"] = chars;
    nlohmann::json seqs = nlohmann::json::array();
    for (int m = 0; m < ds.params.n_motions; ++m)
        for (int c = 0; c < ds.params.n_characters; ++c) {
            const std::size_t idx =
                static_cast<std::size_t>(m) * static_cast<std::size_t>(ds.params.n_characters) +
                static_cast<std::size_t>(c);
            nlohmann::json e = {{"file", sequence_filename(m, c)}, {"motion_id", m}, {"character_id", c}};
            if (clusters && idx < clusters->size()) e["cluster"] = (*clusters)[idx];
            seqs.push_back(e);
        }
    j["sequences"] = seqs;
    return j;
}

inline void save_dataset(const SyntheticDataset& ds, const fs::path& dir,
                         const std::vector<int>* clusters = nullptr) {
    fs::create_directories(dir);
    for (int m = 0; m < ds.params.n_motions; ++m)
        for (int c = 0; c < ds.params.n_characters; ++c)
            write_sequence(dir / sequence_filename(m, c), ds.at(m, c));
    atomic_write_text(dir / "manifest.json", manifest_json(ds, clusters).dump(2) + "\n");
}

// Loads sequences, labels and character factors back. The procedural motion
// bank is not serialized; `motions` stays empty on a loaded dataset.
inline SyntheticDataset load_dataset(const fs::path& dir, std::vector<int>* clusters_out = nullptr) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw IoError(IoCode::io_failure, "cannot open manifest: " + (dir / "manifest.json").string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(IoCode::io_failure, std::string("manifest parse error: ") + e.what());
    }
    if (j.value("format", "") != "via-dataset")
        throw IoError(IoCode::io_failure, "not a via-dataset manifest");

    SyntheticDataset ds;
    const auto& p = j.at("params");
    ds.params.seed = p.at("seed").get<std::uint64_t>();
    ds.params.n_motions = p.at("motions").get<int>();
    ds.params.n_characters = p.at("characters").get<int>();
    ds.params.T = p.at("frames").get<int>();
    ds.params.V = p.at("joints").get<int>();
    ds.params.dim = p.at("dim").get<int>();
    ds.id = j.at("dataset_id").get<std::string>();

    for (const auto& cj : j.at("characters")) {
        CharacterFactor f;
        f.view_angle = cj.at("view_angle").get<double>();
        f.body_scale = cj.at("body_scale").get<std::vector<double>>();
        const auto off = cj.at("root_offset").get<std::vector<double>>();
        f.root_offset = {off[0], off[1], off[2]};
        ds.characters.push_back(std::move(f));
    }

    ds.sequences.resize(static_cast<std::size_t>(ds.params.n_motions) *
                        static_cast<std::size_t>(ds.params.n_characters));
    if (clusters_out) clusters_out->assign(ds.sequences.size(), -1);
    for (const auto& sj : j.at("sequences")) {
        const int m = sj.at("motion_id").get<int>();
        const int c = sj.at("character_id").get<int>();
        SkeletonSequence seq = read_sequence(dir / sj.at("file").get<std::string>());
        seq.motion_id = m;
        seq.character_id = c;
        const std::size_t idx =
            static_cast<std::size_t>(m) * static_cast<std::size_t>(ds.params.n_characters) +
            static_cast<std::size_t>(c);
        if (clusters_out && sj.contains("cluster")) (*clusters_out)[idx] = sj.at("cluster").get<int>();
        ds.sequences[idx] = std::move(seq);
    }
    return ds;
}

}  // namespace via
