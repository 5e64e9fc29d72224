// SPDX-License-Identifier: Apache-2.0
//
// Alternating critic / generator optimisation with Adam and critic weight
// clipping. All randomness (batch order, dropout) is derived from
// (seed, step), so a run is a pure function of its configuration and data,
// and resuming from a checkpoint replays the uninterrupted trajectory.
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "swgan/losses.hpp"
#include "swgan/masking.hpp"
#include "swgan/model.hpp"

namespace swgan {

struct AdamHyper {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <class T>
struct AdamState {
    AdamHyper hyper;
    std::uint64_t t = 0;
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
};

// Bias-corrected Adam update in place, then clears the gradients. Throws
// before touching anything if a parameter has no gradient.
template <class T>
void adam_step(ParamSet<T>& params, AdamState<T>& state) {
    for (const auto& [path, p] : params) {
        if (!p.has_grad()) {
            throw ValueError("missing gradient for parameter " + path);
        }
    }
    if (state.m.empty() && state.v.empty()) {
        for (const auto& [path, p] : params) {
            state.m.emplace_back(p.numel(), T(0));
            state.v.emplace_back(p.numel(), T(0));
        }
    }
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ShapeError("optimizer state does not match the parameter set");
    }
    ++state.t;
    const T b1 = static_cast<T>(state.hyper.beta1);
    const T b2 = static_cast<T>(state.hyper.beta2);
    const T lr = static_cast<T>(state.hyper.lr);
    const T eps = static_cast<T>(state.hyper.eps);
    const T bc1 = static_cast<T>(1.0 - std::pow(state.hyper.beta1, static_cast<double>(state.t)));
    const T bc2 = static_cast<T>(1.0 - std::pow(state.hyper.beta2, static_cast<double>(state.t)));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k].second;
        auto& m = state.m[k];
        auto& v = state.v[k];
        if (m.size() != p.numel() || v.size() != p.numel()) {
            throw ShapeError("optimizer moments for " + params[k].first + " have the wrong size");
        }
        const auto g = p.grad();
        auto x = p.mutable_data();
        for (std::size_t i = 0; i < x.size(); ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            const T m_hat = m[i] / bc1;
            const T v_hat = v[i] / bc2;
            x[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
    params.clear_grads();
}

enum class PerceptualTarget { masked_input, ground_truth };

struct TrainConfig {
    static constexpr double kPaperGeneratorLr = 1e-4;
    static constexpr double kPaperCriticLr = 1e-12;

    double lr_generator = 1e-4;
    double lr_critic = 1e-4;
    std::size_t batch_size = 5;
    std::size_t critic_steps_per_gen_step = 1;
    double clip_c = 0.01;
    std::size_t epochs = 1;
    std::optional<std::size_t> max_steps;
    std::uint64_t seed = 0;
    std::size_t checkpoint_every = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    LossWeights loss_weights;
    PerceptualTarget perceptual_target = PerceptualTarget::masked_input;

    std::vector<std::string> validate() const {
        std::vector<std::string> problems;
        if (!(lr_generator > 0.0) || !(lr_critic > 0.0)) {
            problems.push_back("train learning rates must be positive");
        }
        if (batch_size < 1) {
            problems.push_back("train.batch_size must be >= 1");
        }
        if (critic_steps_per_gen_step < 1) {
            problems.push_back("train.critic_steps_per_gen_step must be >= 1");
        }
        if (!(clip_c > 0.0)) {
            problems.push_back("train.clip_c must be positive");
        }
        if (epochs < 1 && !max_steps) {
            problems.push_back("train.epochs must be >= 1");
        }
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0)) {
            problems.push_back("train Adam constants must satisfy 0 <= beta < 1 and eps > 0");
        }
        if (!std::isfinite(loss_weights.wasserstein) || !std::isfinite(loss_weights.perceptual) ||
            loss_weights.wasserstein < 0.0 || loss_weights.perceptual < 0.0) {
            problems.push_back("loss weights must be finite and non-negative");
        }
        return problems;
    }
};

template <class T>
struct Models {
    Generator<T> generator;
    Critic<T> critic;
    FeatureExtractor<T> extractor;
};

template <class T>
struct Optimizers {
    AdamState<T> generator;
    AdamState<T> critic;
};

template <class T>
Optimizers<T> make_optimizers(const TrainConfig& c) {
    Optimizers<T> o;
    o.generator.hyper = {c.lr_generator, c.beta1, c.beta2, c.adam_eps};
    o.critic.hyper = {c.lr_critic, c.beta1, c.beta2, c.adam_eps};
    return o;
}

namespace detail {

template <class T>
void require_finite(const Tensor<T>& t, const char* term, long long step) {
    const double v = static_cast<double>(t.item());
    if (!std::isfinite(v)) {
        throw NumericError("non-finite " + std::string(term) + " = " + std::to_string(v) + " at step " +
                           std::to_string(step));
    }
}

}  // namespace detail

// One S-WGAN iteration on batch (image [N,C,H,W], mask [N,1,H,W]):
// `critic_steps_per_gen_step` critic updates (each followed by clipping),
// then one generator update on l_wp.
template <class T>
LossReport train_step(const Tensor<T>& image, const Tensor<T>& mask, Models<T>& models, Optimizers<T>& opt,
                      const TrainConfig& config, long long step) {
    const auto seed = config.seed;
    const Tensor<T> masked = apply_mask(image, mask);
    LossReport report;
    report.step = step;

    for (std::size_t k = 0; k < config.critic_steps_per_gen_step; ++k) {
        models.critic.params().clear_grads();
        Tensor<T> fake;
        {
            NoGradGuard no_grad;
            const auto pred = models.generator.forward(
                masked, {Mode::train, mix_seed({seed, static_cast<std::uint64_t>(step), 0x43ULL, k}), {}});
            fake = composite_reconstruction(image, mask, pred);
        }
        const Tensor<T> loss =
            wasserstein_critic_loss(models.critic.forward(image), models.critic.forward(fake));
        detail::require_finite(loss, "l_w_critic", step);
        loss.backward();
        adam_step(models.critic.params(), opt.critic);
        clip_critic_weights(models.critic.params(), config.clip_c);
        report.l_w_critic = static_cast<double>(loss.item());
    }

    models.generator.params().clear_grads();
    models.critic.params().clear_grads();
    const auto pred =
        models.generator.forward(masked, {Mode::train, mix_seed({seed, static_cast<std::uint64_t>(step), 0x47ULL}), {}});
    const Tensor<T> recon = composite_reconstruction(image, mask, pred);
    const Tensor<T> l_w = wasserstein_generator_loss(models.critic.forward(recon));
    const Tensor<T>& target = config.perceptual_target == PerceptualTarget::masked_input ? masked : image;
    const auto terms = perceptual_loss(target, recon, models.extractor);
    detail::require_finite(terms.l1_term, "l1_term", step);
    detail::require_finite(terms.mse_term, "perceptual_mse_term", step);
    detail::require_finite(l_w, "l_w_generator", step);
    const Tensor<T> l_wp = combined_loss(l_w, terms.l_sp, config.loss_weights);
    detail::require_finite(l_wp, "l_wp", step);
    l_wp.backward();
    adam_step(models.generator.params(), opt.generator);
    models.critic.params().clear_grads();

    report.l1_term = static_cast<double>(terms.l1_term.item());
    report.perceptual_mse_term = static_cast<double>(terms.mse_term.item());
    report.l_sp = static_cast<double>(terms.l_sp.item());
    report.l_w_generator = static_cast<double>(l_w.item());
    report.l_wp = static_cast<double>(l_wp.item());
    return report;
}

struct TrainingSample {
    std::string name;
    Image8 image;
    Mask mask;
};

// Owns models, optimizer state, the in-memory dataset and the step counter.
template <class T>
class Trainer {
public:
    Trainer(const GeneratorConfig& g, CriticConfig c, const FeatureExtractorConfig& f, TrainConfig config,
            std::vector<TrainingSample> samples)
        : config_(std::move(config)),
          models_{Generator<T>(g), Critic<T>(align_critic(c, g)), FeatureExtractor<T>(f)},
          opt_(make_optimizers<T>(config_)) {
        detail::throw_if(config_.validate());
        if (samples.empty()) {
            throw ConfigError({"training set is empty"});
        }
        for (auto& s : samples) {
            if (s.image.width != g.input_size || s.image.height != g.input_size || s.image.channels != g.image_channels) {
                s.image = resize_bilinear(s.image, g.input_size, g.input_size);
            }
            if (s.mask.width != g.input_size || s.mask.height != g.input_size) {
                s.mask = resize_mask(s.mask, g.input_size, g.input_size);
            }
            images_.push_back(image_to_tensor<T>(s.image));
            masks_.push_back(s.mask);
        }
        samples_ = std::move(samples);
    }

    const TrainConfig& config() const noexcept { return config_; }
    Models<T>& models() noexcept { return models_; }
    const Models<T>& models() const noexcept { return models_; }
    Optimizers<T>& optimizers() noexcept { return opt_; }
    const Optimizers<T>& optimizers() const noexcept { return opt_; }
    long long step() const noexcept { return step_; }
    void set_step(long long s) noexcept { step_ = s; }
    std::size_t dataset_size() const noexcept { return images_.size(); }
    const std::vector<TrainingSample>& samples() const noexcept { return samples_; }

    std::size_t steps_per_epoch() const {
        return (images_.size() + config_.batch_size - 1) / config_.batch_size;
    }

    std::size_t total_steps() const {
        return config_.max_steps ? *config_.max_steps : config_.epochs * steps_per_epoch();
    }

    // Sample indices of the batch used at `step`: a fresh permutation per
    // epoch, cut into consecutive batches.
    std::vector<std::size_t> batch_indices(long long step) const {
        const std::size_t spe = steps_per_epoch();
        const auto epoch = static_cast<std::uint64_t>(step) / spe;
        const std::size_t within = static_cast<std::size_t>(step) % spe;
        std::vector<std::size_t> perm(images_.size());
        for (std::size_t i = 0; i < perm.size(); ++i) {
            perm[i] = i;
        }
        Rng rng(mix_seed({config_.seed, 0x45504fULL, epoch}));
        rng.shuffle(perm);
        const std::size_t lo = within * config_.batch_size;
        const std::size_t hi = std::min(lo + config_.batch_size, perm.size());
        return {perm.begin() + static_cast<std::ptrdiff_t>(lo), perm.begin() + static_cast<std::ptrdiff_t>(hi)};
    }

    std::pair<Tensor<T>, Tensor<T>> batch(const std::vector<std::size_t>& indices) const {
        std::vector<Tensor<T>> imgs;
        std::vector<Mask> masks;
        for (auto i : indices) {
            imgs.push_back(images_.at(i));
            masks.push_back(masks_.at(i));
        }
        return {stack_batch(imgs), masks_to_tensor<T>(masks)};
    }

    LossReport train_step() {
        const auto [image, mask] = batch(batch_indices(step_));
        LossReport r = swgan::train_step(image, mask, models_, opt_, config_, step_);
        ++step_;
        return r;
    }

    // Generator prediction composited into the known pixels, eval mode.
    Tensor<T> reconstruct(const Tensor<T>& image, const Tensor<T>& mask) const {
        NoGradGuard no_grad;
        const auto pred = models_.generator.forward(apply_mask(image, mask), {Mode::eval, 0, {}});
        return composite_reconstruction(image, mask, pred);
    }

private:
    static CriticConfig align_critic(CriticConfig c, const GeneratorConfig& g) {
        c.input_size = g.input_size;
        c.image_channels = g.image_channels;
        return c;
    }

    TrainConfig config_;
    Models<T> models_;
    Optimizers<T> opt_;
    std::vector<TrainingSample> samples_;
    std::vector<Tensor<T>> images_;
    std::vector<Mask> masks_;
    long long step_ = 0;
};

// FNV-1a over the raw bytes of every parameter, in registration order.
template <class T>
std::uint64_t parameter_hash(const ParamSet<T>& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [path, t] : params) {
        for (char ch : path) {
            h = (h ^ static_cast<std::uint8_t>(ch)) * 0x100000001b3ULL;
        }
        const auto* bytes = reinterpret_cast<const std::uint8_t*>(t.data().data());
        for (std::size_t i = 0; i < t.numel() * sizeof(T); ++i) {
            h = (h ^ bytes[i]) * 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace swgan
