// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: one JSON document mirroring the generator, critic,
// feature-extractor, training and mask settings plus dataset and output
// locations. Unknown keys are rejected and every problem is reported at
// once. `to_json` emits the fully resolved document (defaults filled in).
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swgan/masking.hpp"
#include "swgan/model.hpp"
#include "swgan/trainer.hpp"

namespace swgan {

struct DataConfig {
    std::filesystem::path image_dir;
    std::filesystem::path manifest;
    double split_ratio = 0.9;
    bool invert_masks = false;
};

struct RunConfig {
    GeneratorConfig generator;
    CriticConfig critic;
    FeatureExtractorConfig feature_extractor;
    TrainConfig train;
    StrokeMaskSpec mask;
    DataConfig data;
    std::filesystem::path output_dir = "run";
    std::string lr_preset = "desk";

    std::vector<std::string> validate() const {
        std::vector<std::string> problems;
        auto take = [&](std::vector<std::string> more) { problems.insert(problems.end(), more.begin(), more.end()); };
        take(generator.validate());
        take(critic.validate());
        take(feature_extractor.validate());
        take(train.validate());
        take(mask.validate());
        if (data.image_dir.empty() == data.manifest.empty()) {
            problems.push_back("data: exactly one of image_dir or manifest must be set");
        }
        if (!(data.split_ratio > 0.0 && data.split_ratio <= 1.0)) {
            problems.push_back("data.split_ratio must be in (0,1]");
        }
        if (generator.input_size % 4 != 0) {
            problems.push_back("generator.input_size must be divisible by 4 for the feature extractor");
        }
        return problems;
    }
};

namespace detail {

// Strict reader over one JSON object: records type errors and unknown keys.
class ObjectReader {
public:
    ObjectReader(const nlohmann::json& j, std::string where, std::vector<std::string>& problems)
        : j_(j), where_(std::move(where)), problems_(problems) {
        if (!j_.is_object()) {
            problems_.push_back(where_ + " must be an object");
        }
    }

    ~ObjectReader() = default;

    void finish() {
        if (!j_.is_object()) {
            return;
        }
        for (const auto& [key, value] : j_.items()) {
            if (!known_.count(key)) {
                problems_.push_back("unknown key " + where_ + "." + key);
            }
        }
    }

    bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }

    template <class V>
    void get(const std::string& key, V& out) {
        known_.insert(key);
        if (!has(key)) {
            return;
        }
        try {
            out = j_.at(key).get<V>();
        } catch (const nlohmann::json::exception&) {
            problems_.push_back(where_ + "." + key + " has the wrong type");
        }
    }

    void get_path(const std::string& key, std::filesystem::path& out) {
        std::string s;
        get(key, s);
        if (has(key) && !s.empty()) {
            out = s;
        }
    }

    void get_range(const std::string& key, Range& out) {
        known_.insert(key);
        if (!has(key)) {
            return;
        }
        const auto& v = j_.at(key);
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
            problems_.push_back(where_ + "." + key + " must be [lo, hi]");
            return;
        }
        out = {v[0].get<double>(), v[1].get<double>()};
    }

    void get_int_range(const std::string& key, IntRange& out) {
        known_.insert(key);
        if (!has(key)) {
            return;
        }
        const auto& v = j_.at(key);
        if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer()) {
            problems_.push_back(where_ + "." + key + " must be [lo, hi] integers");
            return;
        }
        out = {v[0].get<long long>(), v[1].get<long long>()};
    }

    const nlohmann::json* child(const std::string& key) {
        known_.insert(key);
        return has(key) ? &j_.at(key) : nullptr;
    }

    void mark(const std::string& key) { known_.insert(key); }

private:
    const nlohmann::json& j_;
    std::string where_;
    std::vector<std::string>& problems_;
    std::set<std::string> known_;
};

inline void read_mask_section(const nlohmann::json& section, StrokeMaskSpec& m, std::vector<std::string>& problems) {
    const nlohmann::json* j = &section;
    ObjectReader r(*j, "mask", problems);
    r.get_int_range("num_strokes", m.num_strokes);
    r.get_int_range("vertices_per_stroke", m.vertices_per_stroke);
    r.get_range("thickness", m.thickness);
    r.get("seed", m.seed);
    r.mark("target_coverage");
    if (r.has("target_coverage") && !j->at("target_coverage").is_null()) {
        Range tc;
        r.get_range("target_coverage", tc);
        m.target_coverage = tc;
    }
    r.get("max_attempts", m.max_attempts);
    r.finish();
}

}  // namespace detail

// Parses a standalone stroke-mask spec (same keys as the "mask" section).
inline StrokeMaskSpec parse_mask_spec(const nlohmann::json& doc) {
    StrokeMaskSpec spec;
    std::vector<std::string> problems;
    detail::read_mask_section(doc, spec, problems);
    if (problems.empty()) {
        problems = spec.validate();
    }
    if (!problems.empty()) {
        throw ConfigError(problems);
    }
    return spec;
}

// Parses and validates. Relative paths resolve against `base_dir`.
inline RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {}) {
    RunConfig rc;
    std::vector<std::string> problems;
    detail::ObjectReader root(doc, "config", problems);

    bool depth_given = false;
    bool dropout_given = false;
    if (const auto* j = root.child("generator")) {
        detail::ObjectReader r(*j, "generator", problems);
        auto& g = rc.generator;
        depth_given = r.has("depth");
        dropout_given = r.has("dropout_blocks");
        r.get("input_size", g.input_size);
        r.get("image_channels", g.image_channels);
        r.get("depth", g.depth);
        r.get("channels", g.channels);
        r.get("kernel_size", g.kernel_size);
        r.get("dilation_rate", g.dilation_rate);
        r.get("leaky_slope", g.leaky_slope);
        r.get("dropout_rate", g.dropout_rate);
        r.get("dropout_blocks", g.dropout_blocks);
        r.get("init_seed", g.init_seed);
        r.finish();
    }
    if (depth_given && !dropout_given) {
        rc.generator.dropout_blocks = GeneratorConfig::default_dropout_blocks(rc.generator.depth);
    }
    if (const auto* j = root.child("critic")) {
        detail::ObjectReader r(*j, "critic", problems);
        auto& c = rc.critic;
        r.get("depth", c.depth);
        r.get("channels", c.channels);
        r.get("kernel_size", c.kernel_size);
        r.get("stride", c.stride);
        r.get("leaky_slope", c.leaky_slope);
        r.get("init_seed", c.init_seed);
        r.finish();
    }
    if (const auto* j = root.child("feature_extractor")) {
        detail::ObjectReader r(*j, "feature_extractor", problems);
        auto& f = rc.feature_extractor;
        std::string source = "builtin-frozen";
        r.get("source", source);
        if (source == "builtin-frozen") {
            f.source = FeatureSource::builtin_frozen;
        } else if (source == "weights-file") {
            f.source = FeatureSource::weights_file;
        } else {
            problems.push_back("feature_extractor.source must be builtin-frozen or weights-file");
        }
        r.get_path("weights_path", f.weights_path);
        r.get("block_channels", f.block_channels);
        r.get("feature_channels", f.feature_channels);
        r.get("convs_per_block", f.convs_per_block);
        r.get("kernel_size", f.kernel_size);
        r.get("seed", f.seed);
        r.finish();
    }
    bool explicit_lr_critic = false;
    bool explicit_lr_generator = false;
    if (const auto* j = root.child("train")) {
        detail::ObjectReader r(*j, "train", problems);
        auto& t = rc.train;
        explicit_lr_critic = r.has("lr_critic");
        explicit_lr_generator = r.has("lr_generator");
        r.get("lr_preset", rc.lr_preset);
        r.get("lr_generator", t.lr_generator);
        r.get("lr_critic", t.lr_critic);
        r.get("batch_size", t.batch_size);
        r.get("critic_steps_per_gen_step", t.critic_steps_per_gen_step);
        r.get("clip_c", t.clip_c);
        r.get("epochs", t.epochs);
        r.mark("max_steps");
        if (r.has("max_steps") && !j->at("max_steps").is_null()) {
            std::size_t steps = 0;
            r.get("max_steps", steps);
            t.max_steps = steps;
        }
        r.get("seed", t.seed);
        r.get("checkpoint_every", t.checkpoint_every);
        r.get("beta1", t.beta1);
        r.get("beta2", t.beta2);
        r.get("adam_eps", t.adam_eps);
        r.get("lambda_w", t.loss_weights.wasserstein);
        r.get("lambda_sp", t.loss_weights.perceptual);
        std::string target = "masked_input";
        r.get("perceptual_target", target);
        if (target == "masked_input") {
            t.perceptual_target = PerceptualTarget::masked_input;
        } else if (target == "ground_truth") {
            t.perceptual_target = PerceptualTarget::ground_truth;
        } else {
            problems.push_back("train.perceptual_target must be masked_input or ground_truth");
        }
        r.finish();
    }
    if (rc.lr_preset == "paper") {
        if (explicit_lr_critic || explicit_lr_generator) {
            problems.push_back("train.lr_preset 'paper' fixes the learning rates; drop lr_generator/lr_critic");
        }
        rc.train.lr_generator = TrainConfig::kPaperGeneratorLr;
        rc.train.lr_critic = TrainConfig::kPaperCriticLr;
    } else if (rc.lr_preset != "desk") {
        problems.push_back("train.lr_preset must be desk or paper");
    }
    if (const auto* j = root.child("mask")) {
        detail::read_mask_section(*j, rc.mask, problems);
    }
    if (const auto* j = root.child("data")) {
        detail::ObjectReader r(*j, "data", problems);
        r.get_path("image_dir", rc.data.image_dir);
        r.get_path("manifest", rc.data.manifest);
        r.get("split_ratio", rc.data.split_ratio);
        r.get("invert_masks", rc.data.invert_masks);
        r.finish();
    }
    root.get_path("output_dir", rc.output_dir);
    root.finish();

    auto resolve = [&](std::filesystem::path& p) {
        if (!p.empty() && p.is_relative() && !base_dir.empty()) {
            p = base_dir / p;
        }
    };
    resolve(rc.data.image_dir);
    resolve(rc.data.manifest);
    resolve(rc.feature_extractor.weights_path);
    resolve(rc.output_dir);

    rc.critic.input_size = rc.generator.input_size;
    rc.critic.image_channels = rc.generator.image_channels;
    rc.feature_extractor.image_channels = rc.generator.image_channels;

    auto more = rc.validate();
    problems.insert(problems.end(), more.begin(), more.end());
    if (!problems.empty()) {
        throw ConfigError(problems);
    }
    return rc;
}

inline nlohmann::ordered_json to_json(const RunConfig& rc) {
    using nlohmann::ordered_json;
    const auto& g = rc.generator;
    const auto& c = rc.critic;
    const auto& f = rc.feature_extractor;
    const auto& t = rc.train;
    const auto& m = rc.mask;
    ordered_json j;
    j["generator"] = {{"input_size", g.input_size},     {"image_channels", g.image_channels},
                      {"depth", g.depth},               {"channels", g.channels},
                      {"kernel_size", g.kernel_size},   {"dilation_rate", g.dilation_rate},
                      {"leaky_slope", g.leaky_slope},   {"dropout_rate", g.dropout_rate},
                      {"dropout_blocks", g.dropout_blocks}, {"init_seed", g.init_seed}};
    j["critic"] = {{"depth", c.depth},           {"channels", c.channels},       {"kernel_size", c.kernel_size},
                   {"stride", c.stride},         {"leaky_slope", c.leaky_slope}, {"init_seed", c.init_seed}};
    j["feature_extractor"] = {
        {"source", f.source == FeatureSource::builtin_frozen ? "builtin-frozen" : "weights-file"},
        {"weights_path", f.weights_path.string()},
        {"block_channels", f.block_channels},
        {"feature_channels", f.feature_channels},
        {"convs_per_block", f.convs_per_block},
        {"kernel_size", f.kernel_size},
        {"seed", f.seed}};
    j["train"] = {{"lr_preset", rc.lr_preset},
                  {"lr_generator", t.lr_generator},
                  {"lr_critic", t.lr_critic},
                  {"batch_size", t.batch_size},
                  {"critic_steps_per_gen_step", t.critic_steps_per_gen_step},
                  {"clip_c", t.clip_c},
                  {"epochs", t.epochs},
                  {"max_steps", t.max_steps ? ordered_json(*t.max_steps) : ordered_json(nullptr)},
                  {"seed", t.seed},
                  {"checkpoint_every", t.checkpoint_every},
                  {"beta1", t.beta1},
                  {"beta2", t.beta2},
                  {"adam_eps", t.adam_eps},
                  {"lambda_w", t.loss_weights.wasserstein},
                  {"lambda_sp", t.loss_weights.perceptual},
                  {"perceptual_target",
                   t.perceptual_target == PerceptualTarget::masked_input ? "masked_input" : "ground_truth"}};
    j["mask"] = {{"num_strokes", {m.num_strokes.lo, m.num_strokes.hi}},
                 {"vertices_per_stroke", {m.vertices_per_stroke.lo, m.vertices_per_stroke.hi}},
                 {"thickness", {m.thickness.lo, m.thickness.hi}},
                 {"seed", m.seed},
                 {"target_coverage", m.target_coverage
                                         ? ordered_json{m.target_coverage->lo, m.target_coverage->hi}
                                         : ordered_json(nullptr)},
                 {"max_attempts", m.max_attempts}};
    j["data"] = {{"image_dir", rc.data.image_dir.string()},
                 {"manifest", rc.data.manifest.string()},
                 {"split_ratio", rc.data.split_ratio},
                 {"invert_masks", rc.data.invert_masks}};
    j["output_dir"] = rc.output_dir.string();
    return j;
}

// One entry of a batch manifest: an image plus a mask file or a mask seed.
struct ManifestEntry {
    std::filesystem::path image_path;
    std::optional<std::filesystem::path> mask_path;
    std::optional<std::uint64_t> mask_seed;
};

inline std::vector<ManifestEntry> parse_manifest(const nlohmann::json& doc, const std::filesystem::path& base_dir = {}) {
    std::vector<std::string> problems;
    std::vector<ManifestEntry> out;
    if (!doc.is_array()) {
        throw ConfigError({"manifest must be a JSON list"});
    }
    for (std::size_t i = 0; i < doc.size(); ++i) {
        detail::ObjectReader r(doc[i], "manifest[" + std::to_string(i) + "]", problems);
        ManifestEntry e;
        std::filesystem::path mask;
        r.get_path("image_path", e.image_path);
        r.get_path("mask_path", mask);
        r.mark("seed");
        if (r.has("seed")) {
            std::uint64_t s = 0;
            r.get("seed", s);
            e.mask_seed = s;
        }
        r.finish();
        if (e.image_path.empty()) {
            problems.push_back("manifest[" + std::to_string(i) + "] has no image_path");
        }
        if (!mask.empty()) {
            e.mask_path = mask;
        }
        if (e.mask_path && e.mask_seed) {
            problems.push_back("manifest[" + std::to_string(i) + "] sets both mask_path and seed");
        }
        if (!base_dir.empty()) {
            if (e.image_path.is_relative()) {
                e.image_path = base_dir / e.image_path;
            }
            if (e.mask_path && e.mask_path->is_relative()) {
                e.mask_path = base_dir / *e.mask_path;
            }
        }
        out.push_back(std::move(e));
    }
    if (!problems.empty()) {
        throw ConfigError(problems);
    }
    return out;
}

}  // namespace swgan
