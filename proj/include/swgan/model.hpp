// SPDX-License-Identifier: Apache-2.0
//
// S-WGAN networks.
//
// Generator: encoder of dilated-convolution blocks (conv -> leaky ReLU ->
// [dropout] -> 2x2 max-pool), a final encoder layer at the bottleneck
// without pooling, then a mirrored decoder. Each decoder stage upsamples x2,
// convolves to the width of the encoder block at that resolution, adds that
// block's feature map element-wise, and applies leaky ReLU. A last
// convolution maps back to image channels through Tanh.
//
// Critic: strided convolutions with leaky ReLU and a linear projection to one
// unbounded score per image.
//
// Feature extractor: VGG-style conv/ReLU blocks with 2x2 pooling after the
// first two blocks; features are tapped after the last convolution of the
// third block (1/4 resolution). Its parameters never require grad.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "swgan/binary_io.hpp"
#include "swgan/layers.hpp"
#include "swgan/ops.hpp"
#include "swgan/rng.hpp"

namespace swgan {

struct GeneratorConfig {
    std::size_t input_size = 64;
    std::size_t image_channels = 3;
    std::size_t depth = 4;
    std::vector<std::size_t> channels{32, 64, 128, 256};
    std::size_t kernel_size = 5;
    std::size_t dilation_rate = 2;
    double leaky_slope = 0.2;
    double dropout_rate = 0.25;
    // 1-based encoder layer numbers; layer depth+1 is the bottleneck layer.
    std::vector<std::size_t> dropout_blocks{4, 5};
    std::uint64_t init_seed = 1;

    static std::vector<std::size_t> default_dropout_blocks(std::size_t depth) {
        std::vector<std::size_t> blocks;
        if (4 <= depth + 1) {
            blocks.push_back(4);
        }
        if (blocks.empty() || blocks.back() != depth + 1) {
            blocks.push_back(depth + 1);
        }
        return blocks;
    }

    std::vector<std::string> validate() const {
        std::vector<std::string> problems;
        if (input_size == 0 || input_size % 2 != 0) {
            problems.push_back("generator.input_size must be an even positive integer");
        }
        if (depth == 0 || depth > 16) {
            problems.push_back("generator.depth must be in [1,16]");
        } else if (input_size % (std::size_t{1} << depth) != 0) {
            problems.push_back("generator.input_size " + std::to_string(input_size) + " is not divisible by 2^depth = " +
                               std::to_string(std::size_t{1} << depth));
        }
        if (channels.size() != depth) {
            problems.push_back("generator.channels has " + std::to_string(channels.size()) +
                               " entries but depth is " + std::to_string(depth));
        }
        if (std::any_of(channels.begin(), channels.end(), [](std::size_t c) { return c == 0; })) {
            problems.push_back("generator.channels entries must be positive");
        }
        if (image_channels == 0) {
            problems.push_back("generator.image_channels must be positive");
        }
        if (kernel_size == 0 || dilation_rate == 0) {
            problems.push_back("generator.kernel_size and dilation_rate must be positive");
        } else if (effective_kernel_extent(static_cast<long long>(kernel_size), static_cast<long long>(dilation_rate)) % 2 == 0) {
            problems.push_back("generator kernel extent must be odd so same-padding preserves size");
        }
        if (!(leaky_slope >= 0.0) || !std::isfinite(leaky_slope)) {
            problems.push_back("generator.leaky_slope must be finite and >= 0");
        }
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
            problems.push_back("generator.dropout_rate must be in [0,1)");
        }
        for (auto b : dropout_blocks) {
            if (b < 1 || b > depth + 1) {
                problems.push_back("generator.dropout_blocks entry " + std::to_string(b) + " outside [1," +
                                   std::to_string(depth + 1) + "]");
            }
        }
        return problems;
    }
};

struct CriticConfig {
    std::size_t input_size = 64;
    std::size_t image_channels = 3;
    std::size_t depth = 4;
    std::vector<std::size_t> channels{16, 32, 64, 128};
    std::size_t kernel_size = 5;
    std::size_t stride = 2;
    double leaky_slope = 0.2;
    std::uint64_t init_seed = 2;

    std::vector<std::string> validate() const {
        std::vector<std::string> problems;
        if (depth == 0) {
            problems.push_back("critic.depth must be positive");
        }
        if (channels.size() != depth) {
            problems.push_back("critic.channels has " + std::to_string(channels.size()) + " entries but depth is " +
                               std::to_string(depth));
        }
        if (std::any_of(channels.begin(), channels.end(), [](std::size_t c) { return c == 0; })) {
            problems.push_back("critic.channels entries must be positive");
        }
        if (kernel_size == 0 || stride == 0) {
            problems.push_back("critic.kernel_size and stride must be positive");
        }
        if (!(leaky_slope >= 0.0) || !std::isfinite(leaky_slope)) {
            problems.push_back("critic.leaky_slope must be finite and >= 0");
        }
        if (problems.empty()) {
            std::size_t s = input_size;
            for (std::size_t b = 0; b < depth; ++b) {
                const ConvGeometry g{stride, kernel_size / 2, 1};
                if (s + 2 * g.padding < kernel_size) {
                    problems.push_back("critic is too deep for input_size " + std::to_string(input_size));
                    break;
                }
                s = conv_output_size(s, kernel_size, g);
            }
        }
        return problems;
    }
};

enum class FeatureSource { builtin_frozen, weights_file };

struct FeatureExtractorConfig {
    FeatureSource source = FeatureSource::builtin_frozen;
    std::filesystem::path weights_path;
    std::size_t image_channels = 3;
    // Widths of blocks 1 and 2; block 3 has `feature_channels`.
    std::vector<std::size_t> block_channels{16, 32};
    std::size_t feature_channels = 64;
    std::vector<std::size_t> convs_per_block{1, 1, 1};
    std::size_t kernel_size = 3;
    std::uint64_t seed = 3;

    static constexpr std::size_t downsample_factor = 4;

    // Topology of VGG-16 up to block3_conv3.
    static FeatureExtractorConfig vgg16_block3() {
        FeatureExtractorConfig c;
        c.block_channels = {64, 128};
        c.feature_channels = 256;
        c.convs_per_block = {2, 2, 3};
        return c;
    }

    std::vector<std::string> validate() const {
        std::vector<std::string> problems;
        if (block_channels.size() != 2) {
            problems.push_back("feature_extractor.block_channels must list the widths of blocks 1 and 2");
        }
        if (convs_per_block.size() != 3) {
            problems.push_back("feature_extractor.convs_per_block must have three entries");
        }
        if (std::any_of(convs_per_block.begin(), convs_per_block.end(), [](std::size_t c) { return c == 0; })) {
            problems.push_back("feature_extractor.convs_per_block entries must be positive");
        }
        if (feature_channels == 0 ||
            std::any_of(block_channels.begin(), block_channels.end(), [](std::size_t c) { return c == 0; })) {
            problems.push_back("feature_extractor channel widths must be positive");
        }
        if (kernel_size == 0 || kernel_size % 2 == 0) {
            problems.push_back("feature_extractor.kernel_size must be odd");
        }
        if (source == FeatureSource::weights_file && weights_path.empty()) {
            problems.push_back("feature_extractor.weights_path is required when source is weights-file");
        }
        return problems;
    }
};

namespace detail {

inline void throw_if(const std::vector<std::string>& problems) {
    if (!problems.empty()) {
        throw ConfigError(problems);
    }
}

}  // namespace detail

// Spatial and channel agreement of one skip link.
struct SkipLink {
    std::size_t encoder_block;  // 1-based
    std::size_t decoder_block;  // 1-based, depth - encoder_block + 1
    Shape encoder_shape;        // [C, H, W]
    Shape decoder_shape;        // [C, H, W] of the decoder pre-activation map
};

template <class T>
class Generator {
public:
    struct ForwardOptions {
        Mode mode = Mode::train;
        std::uint64_t dropout_seed = 0;
        // Index i false drops encoder block i+1's contribution (ablation).
        std::vector<bool> skip_enabled;
    };

    explicit Generator(GeneratorConfig config) : config_(std::move(config)) {
        detail::throw_if(config_.validate());
        Rng rng(mix_seed({config_.init_seed, 0x47454eULL}));
        const ConvGeometry same{1, same_padding(config_.kernel_size, config_.dilation_rate), config_.dilation_rate};
        const auto& ch = config_.channels;
        const std::size_t depth = config_.depth;
        const double slope = config_.leaky_slope;
        std::size_t in = config_.image_channels;
        for (std::size_t b = 0; b < depth; ++b) {
            encoder_.emplace_back(in, ch[b], config_.kernel_size, same, rng, slope);
            in = ch[b];
        }
        bottleneck_ = Conv2dLayer<T>(in, in, config_.kernel_size, same, rng, slope);
        decoder_.resize(depth);
        for (std::size_t j = depth; j-- > 0;) {
            const std::size_t from = j + 1 == depth ? ch[depth - 1] : ch[j + 1];
            decoder_[j] = Conv2dLayer<T>(from, ch[j], config_.kernel_size, same, rng, slope);
        }
        output_ = Conv2dLayer<T>(ch[0], config_.image_channels, config_.kernel_size, same, rng, 1.0);

        for (std::size_t b = 0; b < depth; ++b) {
            encoder_[b].register_params(params_, "generator/enc" + std::to_string(b + 1));
        }
        bottleneck_.register_params(params_, "generator/bottleneck");
        for (std::size_t j = depth; j-- > 0;) {
            decoder_[j].register_params(params_, "generator/dec" + std::to_string(depth - j));
        }
        output_.register_params(params_, "generator/out");

        check_skip_alignment();
    }

    const GeneratorConfig& config() const noexcept { return config_; }
    const ParamSet<T>& params() const noexcept { return params_; }
    ParamSet<T>& params() noexcept { return params_; }

    // Structural shapes of every encoder -> decoder link, derived from the
    // layer geometry alone.
    std::vector<SkipLink> skip_links() const {
        std::vector<SkipLink> links;
        const std::size_t depth = config_.depth;
        std::vector<std::size_t> enc_size(depth);
        std::size_t s = config_.input_size;
        for (std::size_t b = 0; b < depth; ++b) {
            s = conv_output_size(s, encoder_[b].kernel_size, encoder_[b].geom);
            enc_size[b] = s;
            s /= 2;
        }
        s = conv_output_size(s, bottleneck_.kernel_size, bottleneck_.geom);
        for (std::size_t j = depth; j-- > 0;) {
            s = conv_output_size(2 * s, decoder_[j].kernel_size, decoder_[j].geom);
            links.push_back({j + 1, depth - j, {encoder_[j].out_channels, enc_size[j], enc_size[j]},
                             {decoder_[j].out_channels, s, s}});
        }
        return links;
    }

    Tensor<T> forward(const Tensor<T>& masked_input, const ForwardOptions& opts) const {
        const std::size_t depth = config_.depth;
        if (masked_input.rank() != 4 || masked_input.dim(1) != config_.image_channels ||
            masked_input.dim(2) != config_.input_size || masked_input.dim(3) != config_.input_size) {
            throw ShapeError("generator expects [N," + std::to_string(config_.image_channels) + "," +
                             std::to_string(config_.input_size) + "," + std::to_string(config_.input_size) +
                             "], got " + to_string(masked_input.shape()));
        }
        const T slope = static_cast<T>(config_.leaky_slope);
        auto drop = [&](const Tensor<T>& x, std::size_t layer) {
            if (std::find(config_.dropout_blocks.begin(), config_.dropout_blocks.end(), layer) ==
                config_.dropout_blocks.end()) {
                return x;
            }
            return dropout(x, config_.dropout_rate, opts.mode, mix_seed({opts.dropout_seed, layer}));
        };

        std::vector<Tensor<T>> skips(depth);
        Tensor<T> x = masked_input;
        for (std::size_t b = 0; b < depth; ++b) {
            Tensor<T> h = drop(leaky_relu(encoder_[b](x), slope), b + 1);
            skips[b] = h;
            x = max_pool2d(h);
        }
        Tensor<T> h = drop(leaky_relu(bottleneck_(x), slope), depth + 1);
        for (std::size_t j = depth; j-- > 0;) {
            Tensor<T> u = decoder_[j](upsample_nn2(h));
            const bool enabled = j >= opts.skip_enabled.size() || opts.skip_enabled[j];
            if (enabled) {
                u = add(u, skips[j]);
            }
            h = leaky_relu(u, slope);
        }
        return swgan::tanh(output_(h));
    }

private:
    void check_skip_alignment() const {
        for (const auto& link : skip_links()) {
            if (link.encoder_shape != link.decoder_shape) {
                throw ShapeError("skip link from encoder block " + std::to_string(link.encoder_block) +
                                 " is misaligned: " + to_string(link.encoder_shape) + " vs decoder " +
                                 to_string(link.decoder_shape));
            }
        }
    }

    GeneratorConfig config_;
    std::vector<Conv2dLayer<T>> encoder_;
    Conv2dLayer<T> bottleneck_;
    std::vector<Conv2dLayer<T>> decoder_;
    Conv2dLayer<T> output_;
    ParamSet<T> params_;
};

template <class T>
class Critic {
public:
    explicit Critic(CriticConfig config) : config_(std::move(config)) {
        detail::throw_if(config_.validate());
        Rng rng(mix_seed({config_.init_seed, 0x435249ULL}));
        const ConvGeometry g{config_.stride, config_.kernel_size / 2, 1};
        std::size_t in = config_.image_channels;
        std::size_t s = config_.input_size;
        for (std::size_t b = 0; b < config_.depth; ++b) {
            convs_.emplace_back(in, config_.channels[b], config_.kernel_size, g, rng, config_.leaky_slope);
            in = config_.channels[b];
            s = conv_output_size(s, config_.kernel_size, g);
        }
        features_ = in * s * s;
        const double bound = std::sqrt(3.0 / static_cast<double>(features_));
        std::vector<T> w(features_);
        for (auto& v : w) {
            v = static_cast<T>(rng.uniform(-bound, bound));
        }
        projection_ = Tensor<T>({features_, 1}, std::move(w), true);
        projection_bias_ = Tensor<T>({1, 1}, T(0), true);

        for (std::size_t b = 0; b < convs_.size(); ++b) {
            convs_[b].register_params(params_, "critic/conv" + std::to_string(b + 1));
        }
        params_.add("critic/linear/weight", projection_);
        params_.add("critic/linear/bias", projection_bias_);
    }

    const CriticConfig& config() const noexcept { return config_; }
    const ParamSet<T>& params() const noexcept { return params_; }
    ParamSet<T>& params() noexcept { return params_; }

    // One unbounded score per image, shape [N].
    Tensor<T> forward(const Tensor<T>& images) const {
        if (images.rank() != 4 || images.dim(1) != config_.image_channels || images.dim(2) != config_.input_size ||
            images.dim(3) != config_.input_size) {
            throw ShapeError("critic expects [N," + std::to_string(config_.image_channels) + "," +
                             std::to_string(config_.input_size) + "," + std::to_string(config_.input_size) +
                             "], got " + to_string(images.shape()));
        }
        const std::size_t n = images.dim(0);
        const T slope = static_cast<T>(config_.leaky_slope);
        Tensor<T> h = images;
        for (const auto& conv : convs_) {
            h = leaky_relu(conv(h), slope);
        }
        Tensor<T> scores = add(matmul(reshape(h, {n, features_}), projection_), projection_bias_);
        return reshape(scores, {n});
    }

private:
    CriticConfig config_;
    std::vector<Conv2dLayer<T>> convs_;
    std::size_t features_ = 0;
    Tensor<T> projection_;
    Tensor<T> projection_bias_;
    ParamSet<T> params_;
};

// Clamp every element of every tensor into [-c, c].
template <class T>
void clip_critic_weights(ParamSet<T>& params, double c) {
    if (!(c > 0.0) || !std::isfinite(c)) {
        throw ValueError("clip constant must be positive and finite, got " + std::to_string(c));
    }
    const T hi = static_cast<T>(c);
    for (auto& [path, t] : params) {
        for (auto& v : t.mutable_data()) {
            v = std::clamp(v, -hi, hi);
        }
    }
}

template <class T>
class FeatureExtractor {
public:
    explicit FeatureExtractor(FeatureExtractorConfig config) : config_(std::move(config)) {
        detail::throw_if(config_.validate());
        Rng rng(mix_seed({config_.seed, 0x464558ULL}));
        const ConvGeometry g{1, config_.kernel_size / 2, 1};
        const std::size_t widths[3] = {config_.block_channels[0], config_.block_channels[1], config_.feature_channels};
        std::size_t in = config_.image_channels;
        for (std::size_t b = 0; b < 3; ++b) {
            for (std::size_t c = 0; c < config_.convs_per_block[b]; ++c) {
                Conv2dLayer<T> conv(in, widths[b], config_.kernel_size, g, rng, 0.0);
                conv.weight.set_requires_grad(false);
                conv.bias.set_requires_grad(false);
                layers_.push_back({b, std::move(conv)});
                params_.add(layer_path(b, c) + "/weight", layers_.back().conv.weight);
                params_.add(layer_path(b, c) + "/bias", layers_.back().conv.bias);
                in = widths[b];
            }
        }
        if (config_.source == FeatureSource::weights_file) {
            load_weights(config_.weights_path);
        }
    }

    const FeatureExtractorConfig& config() const noexcept { return config_; }
    const ParamSet<T>& params() const noexcept { return params_; }

    static std::string layer_path(std::size_t block, std::size_t conv) {
        return "block" + std::to_string(block + 1) + "_conv" + std::to_string(conv + 1);
    }

    Tensor<T> operator()(const Tensor<T>& images) const {
        if (images.rank() != 4 || images.dim(1) != config_.image_channels) {
            throw ShapeError("feature extractor expects [N," + std::to_string(config_.image_channels) +
                             ",H,W], got " + to_string(images.shape()));
        }
        if (images.dim(2) % 4 != 0 || images.dim(3) % 4 != 0) {
            throw ShapeError("feature extractor needs spatial dims divisible by 4, got " + to_string(images.shape()));
        }
        Tensor<T> h = images;
        std::size_t block = 0;
        for (const auto& layer : layers_) {
            if (layer.block != block) {
                h = max_pool2d(h);
                block = layer.block;
            }
            h = relu(layer.conv(h));
        }
        return h;
    }

    // Replace the parameters with those stored in a "FEXT" container.
    void load_weights(const std::filesystem::path& path) {
        const auto container = decode_container(read_file_bytes(path), "FEXT");
        std::vector<std::string> problems;
        for (const auto& [p, t] : params_) {
            const auto* e = container.find(p);
            if (!e) {
                problems.push_back("missing tensor " + p);
            } else if (e->shape != t.shape()) {
                problems.push_back("tensor " + p + " has shape " + to_string(e->shape) + ", expected " +
                                   to_string(t.shape()));
            }
        }
        if (!problems.empty()) {
            std::string msg = "feature extractor weights " + path.string() + " are incompatible:";
            for (const auto& m : problems) {
                msg += "\n  " + m;
            }
            throw FormatError(msg);
        }
        for (auto& [p, t] : params_) {
            const auto* e = container.find(p);
            auto dst = t.mutable_data();
            std::transform(e->values.begin(), e->values.end(), dst.begin(),
                           [](float v) { return static_cast<T>(v); });
        }
    }

    ParamContainer to_container() const {
        ParamContainer c;
        c.magic = "FEXT";
        for (const auto& [p, t] : params_) {
            c.entries.push_back({p, t.shape(), std::vector<float>(t.data().begin(), t.data().end())});
        }
        return c;
    }

private:
    struct Layer {
        std::size_t block;
        Conv2dLayer<T> conv;
    };

    FeatureExtractorConfig config_;
    std::vector<Layer> layers_;
    ParamSet<T> params_;
};

}  // namespace swgan
