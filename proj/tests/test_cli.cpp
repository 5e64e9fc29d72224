// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "swgan/metrics.hpp"
#include "swgan/run.hpp"

using namespace swgan;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
};

// Runs the CLI with stdout and stderr captured to a file.
RunResult cli(const std::string& args, const std::string& env = {}) {
    static int counter = 0;
    const fs::path log = fs::temp_directory_path() / ("swgan_cli_" + std::to_string(::getpid()) + "_" +
                                                      std::to_string(counter++) + ".log");
    const std::string cmd = env + " '" + std::string(SWGAN_CLI_PATH) + "' " + args + " > '" + log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    fs::remove(log);
    return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

json tiny_config(const fs::path& images, const fs::path& out) {
    return {{"generator", {{"input_size", 16}, {"depth", 2}, {"channels", {4, 8}}}},
            {"critic", {{"depth", 2}, {"channels", {4, 8}}}},
            {"feature_extractor", {{"block_channels", {4, 4}}, {"feature_channels", 8}}},
            {"train", {{"batch_size", 2}, {"max_steps", 4}, {"seed", 3}, {"checkpoint_every", 2}}},
            {"data", {{"image_dir", images.string()}, {"split_ratio", 1.0}}},
            {"output_dir", out.string()}};
}

// Trains the tiny configuration once and returns its directory.
const fs::path& trained_run() {
    static const fs::path dir = [] {
        const auto d = oracle::scratch_dir("cli_train");
        fs::create_directories(d / "images");
        for (std::size_t i = 0; i < 4; ++i)
            write_png(d / "images" / ("f" + std::to_string(i) + ".png"), oracle::synthetic_face(i, 16));
        std::ofstream(d / "config.json") << tiny_config(d / "images", d / "run").dump(2);
        const auto r = cli("train --config " + q(d / "config.json"));
        INFO(r.out);
        REQUIRE(r.code == 0);
        return d;
    }();
    return dir;
}

}  // namespace

TEST_CASE("cli: usage errors") {
    REQUIRE(cli("").code == 1);
    REQUIRE(cli("bogus").code == 1);
    REQUIRE(cli("mask-gen --out-dir x").code == 1);
    REQUIRE(cli("--help").code == 0);
}

TEST_CASE("cli: mask-gen") {
    const auto dir = oracle::scratch_dir("cli_masks");
    SECTION("count 0 writes nothing") {
        const auto r = cli("mask-gen --count 0 --out-dir " + q(dir / "none"));
        REQUIRE(r.code == 0);
        REQUIRE(fs::is_empty(dir / "none"));
    }
    SECTION("same seed gives identical files") {
        REQUIRE(cli("mask-gen --count 3 --seed 11 --out-dir " + q(dir / "a")).code == 0);
        REQUIRE(cli("mask-gen --count 3 --seed 11 --out-dir " + q(dir / "b")).code == 0);
        for (int i = 0; i < 3; ++i) {
            const std::string name = "mask_" + std::to_string(i) + ".png";
            REQUIRE((oracle::file_bytes(dir / "a" / name) == oracle::file_bytes(dir / "b" / name)));
        }
        REQUIRE(cli("mask-gen --count 1 --out-dir " + q(dir / "c"), "SWGAN_SEED=11").code == 0);
        REQUIRE((oracle::file_bytes(dir / "c" / "mask_0.png") == oracle::file_bytes(dir / "a" / "mask_0.png")));
    }
    SECTION("mean coverage of 100 masks lies in the target range") {
        std::ofstream(dir / "spec.json") << json{{"target_coverage", {0.1, 0.4}}}.dump();
        const auto r = cli("mask-gen --count 100 --seed 5 --spec " + q(dir / "spec.json") + " --out-dir " +
                           q(dir / "hundred"));
        REQUIRE(r.code == 0);
        double sum = 0;
        for (int i = 0; i < 100; ++i) sum += load_mask_file(dir / "hundred" / ("mask_" + std::to_string(i) + ".png")).coverage();
        const double mean = sum / 100;
        REQUIRE(mean >= 0.1);
        REQUIRE(mean <= 0.4);
        char expect[64];
        std::snprintf(expect, sizeof expect, "coverage mean: %.6f", mean);
        REQUIRE(r.out.find(expect) != std::string::npos);
    }
    SECTION("bad spec is a validation error") {
        std::ofstream(dir / "bad.json") << json{{"num_strokes", {3, 1}}, {"colour", "red"}}.dump();
        const auto r = cli("mask-gen --count 1 --spec " + q(dir / "bad.json") + " --out-dir " + q(dir / "bad"));
        REQUIRE(r.code == 1);
        REQUIRE(r.out.find("colour") != std::string::npos);
    }
}

TEST_CASE("cli: train") {
    const auto& d = trained_run();
    for (const char* f : {"resolved_config.json", "train_log.jsonl", "timing.jsonl", "final.swgn",
                          "ckpt_000002.swgn", "ckpt_000004.swgn", "train_split.txt"})
        REQUIRE(fs::exists(d / "run" / f));
    std::ifstream log(d / "run" / "train_log.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) {
        const auto r = loss_report_from_json(json::parse(line));
        REQUIRE(r.step == lines++);
    }
    REQUIRE(lines == 4);

    SECTION("rerun reproduces the final checkpoint") {
        auto cfg = tiny_config(d / "images", d / "rerun");
        std::ofstream(d / "rerun.json") << cfg.dump();
        REQUIRE(cli("train --config " + q(d / "rerun.json")).code == 0);
        REQUIRE((oracle::file_bytes(d / "rerun" / "final.swgn") == oracle::file_bytes(d / "run" / "final.swgn")));
    }
    SECTION("missing image is reported by path") {
        std::ofstream(d / "manifest.json") << json::array({{{"image_path", "images/f0.png"}},
                                                           {{"image_path", "images/absent_face.png"}}}).dump();
        auto cfg = tiny_config(d / "images", d / "never");
        cfg["data"] = {{"manifest", "manifest.json"}};
        std::ofstream(d / "missing.json") << cfg.dump();
        const auto r = cli("train --config " + q(d / "missing.json"));
        REQUIRE(r.code == 1);
        REQUIRE(r.out.find("absent_face.png") != std::string::npos);
    }
    SECTION("invalid config lists every problem") {
        std::ofstream(d / "invalid.json") << json{{"train", {{"batch_size", 0}, {"speed", 1}}}}.dump();
        const auto r = cli("train --config " + q(d / "invalid.json"));
        REQUIRE(r.code == 1);
        REQUIRE(r.out.find("batch_size") != std::string::npos);
        REQUIRE(r.out.find("speed") != std::string::npos);
        REQUIRE(r.out.find("image_dir") != std::string::npos);
    }
    REQUIRE(cli("train --config " + q(d / "nope.json")).code == 1);
}

TEST_CASE("cli: infer") {
    const auto& d = trained_run();
    const auto dir = oracle::scratch_dir("cli_infer");
    const auto ckpt = d / "run" / "final.swgn";
    write_png(dir / "img.png", oracle::synthetic_face(7, 16));
    write_png(dir / "ones.png", Image8(16, 16, 1, 255));
    write_png(dir / "zeros.png", Image8(16, 16, 1, 0));

    SECTION("all-ones mask reproduces the input") {
        REQUIRE(cli("infer --checkpoint " + q(ckpt) + " --image " + q(dir / "img.png") + " --mask " +
                    q(dir / "ones.png") + " --out " + q(dir / "same.png"))
                    .code == 0);
        REQUIRE((oracle::file_bytes(dir / "same.png") == oracle::file_bytes(dir / "img.png")));
    }
    SECTION("all-zeros mask gives the raw prediction") {
        REQUIRE(cli("infer --checkpoint " + q(ckpt) + " --image " + q(dir / "img.png") + " --mask " +
                    q(dir / "zeros.png") + " --out " + q(dir / "pred.png"))
                    .code == 0);
        const auto container = read_checkpoint(ckpt);
        Generator<float> g(generator_config_from(container));
        load_generator(container, g);
        NoGradGuard ng;
        const auto pred = g.forward(Tensor<float>::zeros({1, 3, 16, 16}), {Mode::eval, 0, {}});
        REQUIRE(read_png(dir / "pred.png").image == tensor_to_image(pred));
    }
    SECTION("holes are filled with something other than mid-gray") {
        StrokeMaskSpec spec;
        spec.seed = 4;
        const Mask m = synthesize_stroke_mask(spec, 16);
        write_png(dir / "strokes.png", mask_to_image(m));
        REQUIRE(cli("infer --checkpoint " + q(ckpt) + " --image " + q(dir / "img.png") + " --mask " +
                    q(dir / "strokes.png") + " --out " + q(dir / "filled.png"))
                    .code == 0);
        const auto out = read_png(dir / "filled.png").image;
        std::size_t differ = 0, holes = 0;
        for (std::size_t y = 0; y < 16; ++y)
            for (std::size_t x = 0; x < 16; ++x)
                if (!m.at(y, x)) {
                    ++holes;
                    for (std::size_t c = 0; c < 3; ++c) differ += out.at(y, x, c) < 127 || out.at(y, x, c) > 128;
                }
        REQUIRE(holes > 0);
        REQUIRE(differ > 0);
    }
    SECTION("size mismatch is rejected") {
        write_png(dir / "big.png", oracle::synthetic_face(1, 24));
        write_png(dir / "bigmask.png", Image8(24, 24, 1, 255));
        const auto r = cli("infer --checkpoint " + q(ckpt) + " --image " + q(dir / "big.png") + " --mask " +
                           q(dir / "bigmask.png") + " --out " + q(dir / "x.png"));
        REQUIRE(r.code == 1);
        REQUIRE(r.out.find("16x16") != std::string::npos);
    }
    SECTION("corrupt checkpoint is a runtime error") {
        auto bytes = oracle::file_bytes(ckpt);
        bytes[bytes.size() / 2] ^= 1;
        write_file_bytes(dir / "bad.swgn", {bytes.begin(), bytes.end()});
        const auto r = cli("infer --checkpoint " + q(dir / "bad.swgn") + " --image " + q(dir / "img.png") +
                           " --mask " + q(dir / "ones.png") + " --out " + q(dir / "x.png"));
        REQUIRE(r.code == 2);
        REQUIRE(r.out.find("checksum") != std::string::npos);
    }
}

TEST_CASE("cli: eval") {
    const auto dir = oracle::scratch_dir("cli_eval");
    fs::create_directories(dir / "gt");
    for (int i = 0; i < 2; ++i) write_png(dir / "gt" / ("i" + std::to_string(i) + ".png"), oracle::synthetic_face(i, 16));

    SECTION("self evaluation") {
        const auto r = cli("eval --dirs " + q(dir / "gt") + "," + q(dir / "gt") + " --out " + q(dir / "self"));
        REQUIRE(r.code == 0);
        std::ifstream in(dir / "self.json");
        const auto j = json::parse(in);
        REQUIRE(j["aggregate"]["mse"] == 0.0);
        REQUIRE(j["aggregate"]["mae"] == 0.0);
        REQUIRE(std::abs(j["aggregate"]["ssim"].get<double>() - 1.0) < 1e-9);
        REQUIRE(j["aggregate"]["psnr_db"] == kDefaultPsnrCap);
        REQUIRE(fs::exists(dir / "self.txt"));
    }
    SECTION("fixture pair matches precomputed values") {
        std::ofstream(dir / "pairs.json") << json::array({{{"ground_truth", oracle::fixture("metric_gt.png").string()},
                                                           {"prediction", oracle::fixture("metric_pred.png").string()},
                                                           {"mask", oracle::fixture("metric_mask.png").string()},
                                                           {"name", "fixture"}}})
                                                 .dump();
        std::ifstream ein(oracle::fixture("metric_expected.json"));
        const auto expected = json::parse(ein);
        for (const char* region : {"full", "masked"}) {
            const auto prefix = dir / (std::string("fx_") + region);
            REQUIRE(cli("eval --pairs " + q(dir / "pairs.json") + " --region " + region + " --out " + q(prefix)).code == 0);
            std::ifstream in(prefix.string() + ".json");
            const auto j = json::parse(in)["per_image"][0];
            for (const char* k : {"mse", "mae", "psnr_db", "ssim"})
                REQUIRE(std::abs(j[k].get<double>() - expected[region][k].get<double>()) <= 1e-6);
        }
    }
    SECTION("validation failures") {
        std::ofstream(dir / "empty.json") << "[]";
        REQUIRE(cli("eval --pairs " + q(dir / "empty.json")).code == 1);
        fs::create_directories(dir / "short");
        write_png(dir / "short" / "i0.png", oracle::synthetic_face(0, 16));
        REQUIRE(cli("eval --dirs " + q(dir / "gt") + "," + q(dir / "short")).code == 1);
        REQUIRE(cli("eval").code == 1);
    }
}

TEST_CASE("cli: grad-check") {
    const auto ok = cli("grad-check --ops conv2d_dilated");
    REQUIRE(ok.code == 0);
    REQUIRE(ok.out.find("conv2d_dilated") != std::string::npos);

    const auto bad = cli("grad-check --ops unknown_op");
    REQUIRE(bad.code == 1);
    REQUIRE(bad.out.find("conv2d_strided") != std::string::npos);

    const auto a = cli("grad-check --ops all --seed 4");
    const auto b = cli("grad-check --ops all --seed 4");
    REQUIRE(a.code == 0);
    REQUIRE(a.out == b.out);
}
