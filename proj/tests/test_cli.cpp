#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "via/eval.hpp"

namespace fs = std::filesystem;

namespace {

#ifndef VIA_CLI_PATH
#error "VIA_CLI_PATH must point at the built binary"
#endif

int run(const std::string& args) {
    const std::string cmd = std::string(VIA_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

struct Workspace {
    fs::path dir;
    Workspace() {
        dir = fs::temp_directory_path() / ("via_cli_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Workspace() { fs::remove_all(dir); }
    std::string path(const std::string& rel) const { return (dir / rel).string(); }
};

}  // namespace

TEST_CASE("generate-data contract", "[cli]") {
    Workspace ws;
    SECTION("default parameters produce 96 sequences plus manifest") {
        REQUIRE(run("generate-data --out " + ws.path("d")) == 0);
        std::size_t vias = 0;
        for (const auto& e : fs::directory_iterator(ws.path("d")))
            if (e.path().extension() == ".vias") ++vias;
        REQUIRE(vias == 96);
        REQUIRE(fs::exists(ws.path("d") + "/manifest.json"));
    }
    SECTION("rerun with the same arguments is byte-identical") {
        REQUIRE(run("generate-data --motions 3 --characters 3 --frames 32 --seed 9 --out " + ws.path("a")) == 0);
        REQUIRE(run("generate-data --motions 3 --characters 3 --frames 32 --seed 9 --out " + ws.path("b")) == 0);
        REQUIRE(slurp(ws.path("a") + "/manifest.json") == slurp(ws.path("b") + "/manifest.json"));
        REQUIRE(slurp(ws.path("a") + "/seq_m001_c002.vias") == slurp(ws.path("b") + "/seq_m001_c002.vias"));
    }
    SECTION("frames not divisible by 8 exits with usage code 2") {
        REQUIRE(run("generate-data --frames 60 --out " + ws.path("x")) == 2);
    }
    SECTION("usage errors exit 2") {
        REQUIRE(run("definitely-not-a-subcommand") == 2);
        REQUIRE(run("train") == 2);  // missing required --data
    }
}

TEST_CASE("trained workflow through the CLI", "[cli][slow]") {
    Workspace ws;
    REQUIRE(run("generate-data --motions 4 --characters 6 --frames 32 --seed 11 --out " + ws.path("data")) == 0);
    REQUIRE(run("train --data " + ws.path("data") + " --out " + ws.path("run") +
                " --max-steps 25 --batch 2 --basis-size 8 --seed 5") == 0);
    const std::string ckpt = ws.path("run") + "/checkpoint.viac";
    REQUIRE(fs::exists(ckpt));
    REQUIRE(fs::exists(ws.path("run") + "/metrics.csv"));
    REQUIRE(fs::exists(ws.path("run") + "/config.resolved.json"));

    SECTION("identity retarget matches the library self-reconstruction bit for bit") {
        const std::string drv = ws.path("data") + "/seq_m002_c001.vias";
        REQUIRE(run("retarget --checkpoint " + ckpt + " --driving " + drv + " --source " + drv +
                    " --out " + ws.path("id.vias")) == 0);
        const auto model = via::model_from_checkpoint(via::read_checkpoint(ckpt));
        const auto centered = via::root_center(via::read_sequence(drv).frames);
        const auto want = via::retarget(model, centered, centered);
        const auto got = via::read_sequence(ws.path("id.vias"));
        REQUIRE(got.frames.data == want.data);
    }
    SECTION("reruns are byte-identical") {
        const std::string drv = ws.path("data") + "/seq_m000_c000.vias";
        const std::string src = ws.path("data") + "/seq_m001_c002.vias";
        REQUIRE(run("retarget --checkpoint " + ckpt + " --driving " + drv + " --source " + src +
                    " --out " + ws.path("r1.vias")) == 0);
        REQUIRE(run("retarget --checkpoint " + ckpt + " --driving " + drv + " --source " + src +
                    " --out " + ws.path("r2.vias")) == 0);
        REQUIRE(slurp(ws.path("r1.vias")) == slurp(ws.path("r2.vias")));
    }
    SECTION("all-zero magnitudes emit the canonical-view generation") {
        const std::string drv = ws.path("data") + "/seq_m003_c004.vias";
        REQUIRE(run("retarget --checkpoint " + ckpt + " --driving " + drv +
                    " --magnitudes 0,0,0,0,0,0,0,0 --out " + ws.path("canon.vias")) == 0);
        const auto model = via::model_from_checkpoint(via::read_checkpoint(ckpt));
        const auto dec =
            via::lmd::decompose(via::encode_plain(model, via::root_center(via::read_sequence(drv).frames)),
                                model.basis);
        const auto want = via::decode_plain(model, dec.motion);  // A = 0 keeps motion alone
        REQUIRE(via::read_sequence(ws.path("canon.vias")).frames.data == want.data);
    }
    SECTION("wrong magnitude count is a usage error") {
        REQUIRE(run("retarget --checkpoint " + ckpt + " --driving " + ws.path("data") +
                    "/seq_m000_c000.vias --magnitudes 1,2 --out " + ws.path("bad.vias")) == 2);
    }
    SECTION("eval writes the retarget report with baseline") {
        REQUIRE(run("eval --checkpoint " + ckpt + " --data " + ws.path("data") +
                    " --report retarget --out " + ws.path("ev")) == 0);
        const std::string csv = slurp(ws.path("ev") + "/retarget_report.csv");
        REQUIRE(csv.rfind("driving_motion,", 0) == 0);
        REQUIRE(csv.find('\n') != std::string::npos);
    }
    SECTION("probe runs the linear protocol and writes a report") {
        REQUIRE(run("probe --checkpoint " + ckpt + " --data " + ws.path("data") +
                    " --split cv --mode linear --probe-epochs 20 --out " + ws.path("pr")) == 0);
        REQUIRE(fs::exists(ws.path("pr") + "/probe_report.json"));
    }
    SECTION("export-embeddings writes one row per sequence") {
        REQUIRE(run("export-embeddings --checkpoint " + ckpt + " --data " + ws.path("data") +
                    " --out " + ws.path("emb.csv")) == 0);
        const std::string csv = slurp(ws.path("emb.csv"));
        std::size_t rows = 0;
        for (char c : csv)
            if (c == '\n') ++rows;
        REQUIRE(rows == 24 + 1);
    }
    SECTION("inputs are not mutated by any subcommand") {
        const std::string before = slurp(ws.path("data") + "/seq_m000_c000.vias");
        REQUIRE(run("eval --checkpoint " + ckpt + " --data " + ws.path("data") +
                    " --report invariance --out " + ws.path("ev2")) == 0);
        REQUIRE(slurp(ws.path("data") + "/seq_m000_c000.vias") == before);
    }
    SECTION("missing files exit with runtime code 1") {
        REQUIRE(run("retarget --checkpoint " + ws.path("nope.viac") + " --driving " + ws.path("data") +
                    "/seq_m000_c000.vias --source " + ws.path("data") + "/seq_m000_c000.vias --out " +
                    ws.path("o.vias")) == 1);
    }
}
