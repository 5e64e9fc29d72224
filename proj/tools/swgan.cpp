// SPDX-License-Identifier: Apache-2.0
//
// swgan: mask synthesis, training, inference, evaluation and gradient checks.
// Exit codes: 0 success, 1 validation error, 2 runtime or numeric failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "swgan/swgan.hpp"

namespace fs = std::filesystem;
using namespace swgan;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

std::optional<std::uint64_t> seed_from_env() {
    const char* v = std::getenv("SWGAN_SEED");
    if (!v || !*v) {
        return std::nullopt;
    }
    char* end = nullptr;
    const auto s = std::strtoull(v, &end, 10);
    if (*end != '\0') {
        throw ConfigError({std::string("SWGAN_SEED is not an unsigned integer: ") + v});
    }
    return s;
}

// ---------------------------------------------------------------- mask-gen

struct MaskGenArgs {
    std::string spec;
    std::size_t count = 0;
    std::size_t size = 64;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
};

int cmd_mask_gen(const MaskGenArgs& a) {
    StrokeMaskSpec spec;
    if (!a.spec.empty()) {
        spec = parse_mask_spec(read_json_file(a.spec));
    }
    if (a.seed) {
        spec.seed = *a.seed;
    } else if (const auto env = seed_from_env()) {
        spec.seed = *env;
    }
    std::error_code ec;
    fs::create_directories(a.out_dir, ec);
    if (ec || !fs::is_directory(a.out_dir)) {
        throw IoError("cannot create output directory " + a.out_dir);
    }
    double sum = 0.0, lo = 1.0, hi = 0.0;
    for (std::size_t i = 0; i < a.count; ++i) {
        StrokeMaskSpec s = spec;
        s.seed = mix_seed({spec.seed, static_cast<std::uint64_t>(i)});
        const Mask m = synthesize_stroke_mask(s, a.size);
        write_png(fs::path(a.out_dir) / ("mask_" + std::to_string(i) + ".png"), mask_to_image(m));
        const double c = m.coverage();
        sum += c;
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    if (a.count == 0) {
        std::cout << "masks: 0\n";
        return 0;
    }
    std::printf("masks: %zu\ncoverage mean: %.6f\ncoverage min: %.6f\ncoverage max: %.6f\n", a.count,
                sum / static_cast<double>(a.count), lo, hi);
    return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string config;
    std::string resume;
    bool paper_lr = false;
};

int cmd_train(const TrainArgs& a) {
    nlohmann::json doc = read_json_file(a.config);
    if (a.paper_lr) {
        if (!doc.is_object()) {
            throw ConfigError({"config must be a JSON object"});
        }
        doc["train"]["lr_preset"] = "paper";
    }
    if (const auto env = seed_from_env()) {
        if (!doc.is_object()) {
            throw ConfigError({"config must be a JSON object"});
        }
        doc["train"]["seed"] = *env;
    }
    const RunConfig rc = parse_run_config(doc, fs::path(a.config).parent_path());
    std::optional<fs::path> resume;
    if (!a.resume.empty()) {
        resume = a.resume;
    }
    const auto result = run_training(rc, resume, &std::cout);
    std::printf("finished at step %lld\ncheckpoint: %s\ngenerator hash: %016llx\n", result.final_step,
                result.final_checkpoint.c_str(), static_cast<unsigned long long>(result.generator_hash));
    return 0;
}

// ---------------------------------------------------------------- infer

struct InferArgs {
    std::string checkpoint;
    std::string image;
    std::string mask;
    bool invert = false;
    std::string out;
};

int cmd_infer(const InferArgs& a) {
    const auto ckpt = read_checkpoint(a.checkpoint);
    auto [img, gray] = read_png(a.image);
    if (gray || img.channels != 3) {
        throw IoError("expected an RGB image: " + a.image);
    }
    const Mask mask = load_mask_file(a.mask, a.invert);
    write_png(a.out, inpaint(ckpt, img, mask));
    return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string pairs;
    std::vector<std::string> dirs;
    std::string mask_dir;
    std::string region = "full";
    std::string out;
    double psnr_cap = kDefaultPsnrCap;
};

struct EvalItem {
    std::string name;
    fs::path ground_truth;
    fs::path prediction;
    std::optional<fs::path> mask;
};

std::vector<EvalItem> eval_items(const EvalArgs& a) {
    std::vector<EvalItem> items;
    if (!a.pairs.empty()) {
        const auto doc = read_json_file(a.pairs);
        const fs::path base = fs::path(a.pairs).parent_path();
        if (!doc.is_array()) {
            throw ConfigError({"pairs manifest must be a JSON list"});
        }
        std::vector<std::string> problems;
        for (std::size_t i = 0; i < doc.size(); ++i) {
            const auto& e = doc[i];
            const std::string where = "pairs[" + std::to_string(i) + "]";
            if (!e.is_object() || !e.contains("ground_truth") || !e.contains("prediction")) {
                problems.push_back(where + " needs ground_truth and prediction");
                continue;
            }
            for (const auto& [key, value] : e.items()) {
                if (key != "ground_truth" && key != "prediction" && key != "mask" && key != "name") {
                    problems.push_back("unknown key " + where + "." + key);
                }
            }
            auto resolve = [&](const std::string& p) { return fs::path(p).is_relative() ? base / p : fs::path(p); };
            EvalItem item;
            item.ground_truth = resolve(e["ground_truth"].get<std::string>());
            item.prediction = resolve(e["prediction"].get<std::string>());
            if (e.contains("mask")) {
                item.mask = resolve(e["mask"].get<std::string>());
            }
            item.name = e.contains("name") ? e["name"].get<std::string>() : item.ground_truth.filename().string();
            items.push_back(std::move(item));
        }
        if (!problems.empty()) {
            throw ConfigError(problems);
        }
    } else {
        const auto gt = list_png_files(a.dirs.at(0));
        const auto pred = list_png_files(a.dirs.at(1));
        if (gt.size() != pred.size()) {
            throw ConfigError({"ground-truth directory has " + std::to_string(gt.size()) +
                               " images, prediction directory has " + std::to_string(pred.size())});
        }
        for (std::size_t i = 0; i < gt.size(); ++i) {
            if (gt[i].filename() != pred[i].filename()) {
                throw ConfigError({"unmatched file names: " + gt[i].filename().string() + " vs " +
                                   pred[i].filename().string()});
            }
            EvalItem item{gt[i].filename().string(), gt[i], pred[i], std::nullopt};
            if (!a.mask_dir.empty()) {
                item.mask = fs::path(a.mask_dir) / gt[i].filename();
            }
            items.push_back(std::move(item));
        }
    }
    if (items.empty()) {
        throw ConfigError({"nothing to evaluate"});
    }
    return items;
}

int cmd_eval(const EvalArgs& a) {
    if (a.pairs.empty() == a.dirs.empty()) {
        throw ConfigError({"give exactly one of --pairs or --dirs"});
    }
    const bool masked = a.region == "masked";
    const auto items = eval_items(a);
    std::vector<ImageMetrics> per;
    for (const auto& item : items) {
        const Image8 gt = read_png(item.ground_truth).image;
        const Image8 pred = read_png(item.prediction).image;
        std::optional<Mask> region;
        if (masked) {
            if (!item.mask) {
                throw ConfigError({"--region masked needs a mask for " + item.name});
            }
            region = load_mask_file(*item.mask);
        }
        per.push_back(evaluate_pair(gt, pred, item.name, region ? &*region : nullptr, a.psnr_cap));
    }
    const auto report = make_report(std::move(per));
    const std::string table = to_table(report);
    std::cout << table;
    if (!a.out.empty()) {
        const fs::path out(a.out);
        if (out.has_parent_path()) {
            fs::create_directories(out.parent_path());
        }
        write_text_file(out.string() + ".json", to_json(report).dump(2) + "\n");
        write_text_file(out.string() + ".txt", table);
    }
    return 0;
}

// ---------------------------------------------------------------- grad-check

int cmd_grad_check(const std::vector<std::string>& ops, std::uint64_t seed) {
    GradCheckOptions opts;
    opts.seed = seed;
    std::vector<GradCheckResult> results;
    try {
        results = run_gradchecks(ops, opts);
    } catch (const ValueError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    std::cout << gradcheck_table(results);
    const bool ok = std::all_of(results.begin(), results.end(), [](const GradCheckResult& r) { return r.passed; });
    return ok ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"S-WGAN inpainting toolkit"};
    app.require_subcommand(1);

    MaskGenArgs mg;
    auto* mask_gen = app.add_subcommand("mask-gen", "Synthesize free-form stroke masks");
    mask_gen->add_option("--spec", mg.spec, "JSON stroke-mask spec");
    mask_gen->add_option("--count", mg.count, "Number of masks")->required();
    mask_gen->add_option("--size", mg.size, "Mask side length in pixels");
    mask_gen->add_option("--seed", mg.seed, "Seed (overrides spec and SWGAN_SEED)");
    mask_gen->add_option("--out-dir", mg.out_dir, "Output directory")->required();

    TrainArgs tr;
    auto* train = app.add_subcommand("train", "Train generator and critic");
    train->add_option("--config", tr.config, "Run configuration JSON")->required()->check(CLI::ExistingFile);
    train->add_option("--resume", tr.resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
    train->add_flag("--paper-lr", tr.paper_lr, "Use the published learning rates (G 1e-4, D 1e-12)");

    InferArgs inf;
    auto* infer = app.add_subcommand("infer", "Inpaint one image");
    infer->add_option("--checkpoint", inf.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    infer->add_option("--image", inf.image, "Input PNG")->required()->check(CLI::ExistingFile);
    infer->add_option("--mask", inf.mask, "Mask PNG (white = known)")->required()->check(CLI::ExistingFile);
    infer->add_flag("--invert", inf.invert, "Treat white as missing");
    infer->add_option("--out", inf.out, "Output PNG")->required();

    EvalArgs ev;
    auto* eval = app.add_subcommand("eval", "Compute MSE/MAE/PSNR/SSIM");
    eval->add_option("--pairs", ev.pairs, "JSON list of {ground_truth, prediction[, mask, name]}");
    eval->add_option("--dirs", ev.dirs, "Ground-truth and prediction directories")->delimiter(',')->expected(2);
    eval->add_option("--mask-dir", ev.mask_dir, "Masks named like the images (with --dirs)");
    eval->add_option("--region", ev.region, "full or masked")->check(CLI::IsMember({"full", "masked"}));
    eval->add_option("--out", ev.out, "Report path prefix (.json and .txt are appended)");
    eval->add_option("--psnr-cap", ev.psnr_cap, "PSNR reported for identical images");

    std::vector<std::string> gc_ops{"all"};
    std::uint64_t gc_seed = 0;
    auto* grad = app.add_subcommand("grad-check", "Finite-difference gradient suite");
    grad->add_option("--ops", gc_ops, "Op names or 'all'")->delimiter(',');
    grad->add_option("--seed", gc_seed, "Probe seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (*mask_gen) {
            return cmd_mask_gen(mg);
        }
        if (*train) {
            return cmd_train(tr);
        }
        if (*infer) {
            return cmd_infer(inf);
        }
        if (*eval) {
            return cmd_eval(ev);
        }
        if (*grad) {
            return cmd_grad_check(gc_ops, gc_seed);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ValueError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitValidation;
}
