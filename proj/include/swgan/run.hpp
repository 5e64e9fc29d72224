// SPDX-License-Identifier: Apache-2.0
//
// End-to-end jobs shared by the command-line tool and the tests: dataset
// assembly from a RunConfig, a logged training run with checkpoints, and
// single-image inference from a checkpoint.
#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swgan/checkpoint.hpp"
#include "swgan/config.hpp"
#include "swgan/image.hpp"
#include "swgan/masking.hpp"
#include "swgan/trainer.hpp"

namespace swgan {

inline std::vector<std::filesystem::path> list_png_files(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw ConfigError({"image directory does not exist: " + dir.string()});
    }
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") {
            out.push_back(e.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError({"cannot read " + path.string()});
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError({path.string() + " is not valid JSON: " + e.what()});
    }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
}

struct Dataset {
    std::vector<ManifestEntry> entries;  // every listed image, in source order
    DatasetSplit split;
    std::vector<TrainingSample> train;
};

// Collects image/mask pairs. Images without an explicit mask get a stroke
// mask seeded from the mask spec seed and their position in the listing.
inline Dataset load_dataset(const RunConfig& rc) {
    Dataset ds;
    if (!rc.data.manifest.empty()) {
        ds.entries = parse_manifest(read_json_file(rc.data.manifest), rc.data.manifest.parent_path());
    } else {
        for (const auto& p : list_png_files(rc.data.image_dir)) {
            ds.entries.push_back({p, std::nullopt, std::nullopt});
        }
    }
    std::vector<std::string> problems;
    std::map<std::filesystem::path, std::size_t> index;
    std::vector<std::filesystem::path> paths;
    for (std::size_t i = 0; i < ds.entries.size(); ++i) {
        auto& e = ds.entries[i];
        if (!e.mask_path && !e.mask_seed) {
            e.mask_seed = mix_seed({rc.mask.seed, static_cast<std::uint64_t>(i)});
        }
        if (!std::filesystem::is_regular_file(e.image_path)) {
            problems.push_back("image not found: " + e.image_path.string());
        }
        if (e.mask_path && !std::filesystem::is_regular_file(*e.mask_path)) {
            problems.push_back("mask not found: " + e.mask_path->string());
        }
        if (!index.emplace(e.image_path, i).second) {
            problems.push_back("image listed twice: " + e.image_path.string());
        }
        paths.push_back(e.image_path);
    }
    if (ds.entries.empty()) {
        problems.push_back("dataset contains no images");
    }
    if (!problems.empty()) {
        throw ConfigError(problems);
    }

    ds.split = split_dataset(paths, rc.data.split_ratio, rc.train.seed);
    const std::size_t size = rc.generator.input_size;
    for (const auto& p : ds.split.train_paths) {
        const auto& e = ds.entries[index.at(p)];
        auto [img, gray] = read_png(e.image_path);
        if (gray || img.channels != rc.generator.image_channels) {
            throw IoError("expected a " + std::to_string(rc.generator.image_channels) + "-channel colour image: " +
                          e.image_path.string());
        }
        Mask mask;
        if (e.mask_path) {
            mask = resize_mask(load_mask_file(*e.mask_path, rc.data.invert_masks), size, size);
        } else {
            StrokeMaskSpec spec = rc.mask;
            spec.seed = *e.mask_seed;
            mask = synthesize_stroke_mask(spec, size);
        }
        ds.train.push_back({e.image_path.filename().string(), resize_bilinear(img, size, size), std::move(mask)});
    }
    if (ds.train.empty()) {
        throw ConfigError({"training split is empty; raise data.split_ratio or add images"});
    }
    return ds;
}

// Checkpoint metadata for a run: the resolved configuration minus the output
// directory, so the same run written elsewhere gives the same bytes.
inline nlohmann::json run_metadata(const RunConfig& rc) {
    auto config = nlohmann::json::parse(to_json(rc).dump());
    config.erase("output_dir");
    return {{"config", std::move(config)}};
}

struct TrainRunResult {
    long long final_step = 0;
    std::filesystem::path final_checkpoint;
    std::uint64_t generator_hash = 0;
};

inline std::string checkpoint_name(long long step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ckpt_%06lld.swgn", step);
    return buf;
}

// Trains in 32-bit floats. Writes into rc.output_dir:
//   resolved_config.json, train_split.txt, test_split.txt,
//   train_log.jsonl (one loss record per step), timing.jsonl,
//   ckpt_<step>.swgn every checkpoint_every steps, final.swgn.
// With `resume`, state is restored first and the logs are appended to.
inline TrainRunResult run_training(const RunConfig& rc, const std::optional<std::filesystem::path>& resume = {},
                                   std::ostream* progress = nullptr) {
    namespace fs = std::filesystem;
    const auto resolved = to_json(rc);
    Dataset ds = load_dataset(rc);
    Trainer<float> trainer(rc.generator, rc.critic, rc.feature_extractor, rc.train, ds.train);
    if (resume) {
        load_checkpoint(*resume, trainer);
    }

    fs::create_directories(rc.output_dir);
    write_text_file(rc.output_dir / "resolved_config.json", resolved.dump(2) + "\n");
    std::string train_list, test_list;
    for (const auto& p : ds.split.train_paths) {
        train_list += p.string() + "\n";
    }
    for (const auto& p : ds.split.test_paths) {
        test_list += p.string() + "\n";
    }
    write_text_file(rc.output_dir / "train_split.txt", train_list);
    write_text_file(rc.output_dir / "test_split.txt", test_list);

    const auto mode = resume ? std::ios::app : std::ios::trunc;
    std::ofstream log(rc.output_dir / "train_log.jsonl", std::ios::binary | mode);
    std::ofstream timing(rc.output_dir / "timing.jsonl", std::ios::binary | mode);
    if (!log || !timing) {
        throw IoError("cannot open training logs in " + rc.output_dir.string());
    }
    const nlohmann::json meta = run_metadata(rc);
    const auto total = static_cast<long long>(trainer.total_steps());
    while (trainer.step() < total) {
        const auto t0 = std::chrono::steady_clock::now();
        const LossReport report = trainer.train_step();
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        log << to_json(report).dump() << "\n";
        timing << nlohmann::ordered_json{{"step", report.step}, {"wall_ms", ms}}.dump() << "\n";
        if (progress && (report.step % 25 == 0 || trainer.step() == total)) {
            *progress << "step " << report.step << "  l_sp " << report.l_sp << "  l_w " << report.l_w_generator
                      << "  critic " << report.l_w_critic << "\n";
        }
        const auto every = static_cast<long long>(rc.train.checkpoint_every);
        if (every > 0 && trainer.step() % every == 0) {
            save_checkpoint(rc.output_dir / checkpoint_name(trainer.step()), trainer, meta);
        }
    }
    log.flush();
    timing.flush();
    TrainRunResult result;
    result.final_step = trainer.step();
    result.final_checkpoint = rc.output_dir / "final.swgn";
    save_checkpoint(result.final_checkpoint, trainer, meta);
    result.generator_hash = parameter_hash(trainer.models().generator.params());
    return result;
}

// Generator configuration recorded in a checkpoint's metadata.
inline GeneratorConfig generator_config_from(const ParamContainer& checkpoint) {
    const auto meta = checkpoint_metadata(checkpoint);
    if (!meta.contains("config")) {
        throw FormatError("checkpoint metadata carries no run configuration");
    }
    return parse_run_config(meta["config"]).generator;
}

// Inpaints `image` (already at the generator's input size) under `mask`
// (1 = known) and returns I*M + (1-M)*G in 8-bit.
inline Image8 inpaint(const ParamContainer& checkpoint, const Image8& image, const Mask& mask) {
    const GeneratorConfig gc = generator_config_from(checkpoint);
    if (image.width != gc.input_size || image.height != gc.input_size || image.channels != gc.image_channels) {
        throw ShapeError("checkpoint expects " + std::to_string(gc.input_size) + "x" + std::to_string(gc.input_size) +
                         "x" + std::to_string(gc.image_channels) + " images, got " + std::to_string(image.width) +
                         "x" + std::to_string(image.height) + "x" + std::to_string(image.channels));
    }
    if (mask.width != image.width || mask.height != image.height) {
        throw ShapeError("mask is " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                         ", image is " + std::to_string(image.width) + "x" + std::to_string(image.height));
    }
    Generator<float> gen(gc);
    load_generator(checkpoint, gen);
    NoGradGuard no_grad;
    const auto x = image_to_tensor<float>(image);
    const auto m = masks_to_tensor<float>({mask});
    const auto pred = gen.forward(apply_mask(x, m), {Mode::eval, 0, {}});
    return tensor_to_image(composite_reconstruction(x, m, pred));
}

}  // namespace swgan
