// SPDX-License-Identifier: Apache-2.0
//
// "SWGN" training checkpoints: generator and critic parameters as f32
// entries, an "ADAM" section with both optimizer states, and JSON metadata
// (step counter plus whatever the caller supplies, typically the resolved
// run configuration).
#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "swgan/binary_io.hpp"
#include "swgan/trainer.hpp"

namespace swgan {

namespace detail {

template <class T>
void append_params(ParamContainer& c, const ParamSet<T>& params) {
    for (const auto& [path, t] : params) {
        c.entries.push_back({path, t.shape(), std::vector<float>(t.data().begin(), t.data().end())});
    }
}

template <class T>
void write_adam(ByteWriter& w, const std::string& name, const AdamState<T>& s, const ParamSet<T>& params) {
    w.str(name);
    w.u64(s.t);
    w.f64(s.hyper.lr);
    w.f64(s.hyper.beta1);
    w.f64(s.hyper.beta2);
    w.f64(s.hyper.eps);
    const bool initialised = !s.m.empty();
    w.u32(initialised ? static_cast<std::uint32_t>(params.size()) : 0u);
    if (!initialised) {
        return;
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        w.str(params[k].first);
        w.u64(s.m[k].size());
        w.f32s(std::vector<float>(s.m[k].begin(), s.m[k].end()));
        w.f32s(std::vector<float>(s.v[k].begin(), s.v[k].end()));
    }
}

template <class T>
AdamState<T> read_adam(ByteReader& r, const std::string& expected_name, const ParamSet<T>& params) {
    const auto name = r.str();
    if (name != expected_name) {
        throw FormatError("optimizer section holds '" + name + "', expected '" + expected_name + "'");
    }
    AdamState<T> s;
    s.t = r.u64();
    s.hyper.lr = r.f64();
    s.hyper.beta1 = r.f64();
    s.hyper.beta2 = r.f64();
    s.hyper.eps = r.f64();
    const auto count = r.u32();
    if (count == 0) {
        return s;
    }
    if (count != params.size()) {
        throw FormatError("optimizer '" + name + "' covers " + std::to_string(count) + " tensors, model has " +
                          std::to_string(params.size()));
    }
    for (std::size_t k = 0; k < count; ++k) {
        const auto path = r.str();
        const auto n = r.u64();
        if (path != params[k].first || n != params[k].second.numel()) {
            throw FormatError("optimizer entry " + path + " does not match parameter " + params[k].first);
        }
        const auto m = r.f32s(n);
        const auto v = r.f32s(n);
        s.m.emplace_back(m.begin(), m.end());
        s.v.emplace_back(v.begin(), v.end());
    }
    return s;
}

template <class T>
void check_entries(const ParamContainer& c, const ParamSet<T>& params, std::vector<std::string>& problems) {
    for (const auto& [path, t] : params) {
        const auto* e = c.find(path);
        if (!e) {
            problems.push_back("checkpoint lacks " + path);
        } else if (e->shape != t.shape()) {
            problems.push_back(path + " has shape " + to_string(e->shape) + " in the checkpoint, model expects " +
                               to_string(t.shape()));
        }
    }
}

template <class T>
void copy_entries(const ParamContainer& c, ParamSet<T>& params) {
    for (auto& [path, t] : params) {
        const auto& values = c.find(path)->values;
        auto dst = t.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            dst[i] = static_cast<T>(values[i]);
        }
    }
}

}  // namespace detail

template <class T>
ParamContainer make_checkpoint(const Trainer<T>& trainer, nlohmann::json metadata = nlohmann::json::object()) {
    ParamContainer c;
    c.magic = "SWGN";
    metadata["step"] = trainer.step();
    c.metadata = metadata.dump();
    const auto& models = trainer.models();
    detail::append_params(c, models.generator.params());
    detail::append_params(c, models.critic.params());
    ByteWriter w;
    detail::write_adam(w, "generator", trainer.optimizers().generator, models.generator.params());
    detail::write_adam(w, "critic", trainer.optimizers().critic, models.critic.params());
    c.sections.push_back({"ADAM", w.take()});
    return c;
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const Trainer<T>& trainer,
                     nlohmann::json metadata = nlohmann::json::object()) {
    const auto bytes = encode_container(make_checkpoint(trainer, std::move(metadata)));
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    write_file_bytes(tmp, bytes);
    std::filesystem::rename(tmp, path);
}

inline ParamContainer read_checkpoint(const std::filesystem::path& path) {
    return decode_container(read_file_bytes(path), "SWGN");
}

inline nlohmann::json checkpoint_metadata(const ParamContainer& c) {
    try {
        return nlohmann::json::parse(c.metadata);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
    }
}

// Restores parameters, optimizer moments and the step counter. Everything is
// validated before the trainer is modified.
template <class T>
void restore_checkpoint(const ParamContainer& c, Trainer<T>& trainer) {
    auto& models = trainer.models();
    std::vector<std::string> problems;
    detail::check_entries(c, models.generator.params(), problems);
    detail::check_entries(c, models.critic.params(), problems);
    if (!problems.empty()) {
        std::string msg = "checkpoint does not fit the model:";
        for (const auto& p : problems) {
            msg += "\n  " + p;
        }
        throw FormatError(msg);
    }
    const auto* adam = c.section("ADAM");
    if (!adam) {
        throw FormatError("checkpoint has no optimizer section");
    }
    ByteReader r(adam->bytes);
    auto gen = detail::read_adam<T>(r, "generator", models.generator.params());
    auto crit = detail::read_adam<T>(r, "critic", models.critic.params());
    const auto meta = checkpoint_metadata(c);
    if (!meta.contains("step") || !meta["step"].is_number_integer()) {
        throw FormatError("checkpoint metadata has no step counter");
    }

    detail::copy_entries(c, models.generator.params());
    detail::copy_entries(c, models.critic.params());
    trainer.optimizers().generator = std::move(gen);
    trainer.optimizers().critic = std::move(crit);
    trainer.set_step(meta["step"].get<long long>());
}

template <class T>
void load_checkpoint(const std::filesystem::path& path, Trainer<T>& trainer) {
    restore_checkpoint(read_checkpoint(path), trainer);
}

// Loads only the generator parameters (inference).
template <class T>
void load_generator(const ParamContainer& c, Generator<T>& generator) {
    std::vector<std::string> problems;
    detail::check_entries(c, generator.params(), problems);
    if (!problems.empty()) {
        std::string msg = "checkpoint does not fit the generator:";
        for (const auto& p : problems) {
            msg += "\n  " + p;
        }
        throw ShapeError(msg);
    }
    detail::copy_entries(c, generator.params());
}

}  // namespace swgan
