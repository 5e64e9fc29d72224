// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include "oracles.hpp"
#include "swgan/losses.hpp"
#include "swgan/model.hpp"

using namespace swgan;
using TD = Tensor<double>;

namespace {

GeneratorConfig small_generator(std::size_t size = 32, std::size_t depth = 3) {
    GeneratorConfig g;
    g.input_size = size;
    g.depth = depth;
    g.channels.clear();
    for (std::size_t b = 0; b < depth; ++b) g.channels.push_back(4u << b);
    g.dropout_blocks = GeneratorConfig::default_dropout_blocks(depth);
    return g;
}

TD random_images(std::mt19937_64& gen, std::size_t n, std::size_t size) {
    return TD({n, 3, size, size}, oracle::random_vector(gen, n * 3 * size * size));
}

double max_abs_diff(const TD& a, const TD& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

}  // namespace

TEST_CASE("generator config validation") {
    GeneratorConfig g;
    REQUIRE(g.validate().empty());
    REQUIRE(g.dropout_blocks == std::vector<std::size_t>{4, 5});
    g.input_size = 40;
    REQUIRE_FALSE(g.validate().empty());
    g = GeneratorConfig{};
    g.channels = {8, 8};
    REQUIRE_FALSE(g.validate().empty());
    REQUIRE_THROWS_AS(Generator<double>(g), ConfigError);
}

TEST_CASE("generator output shape equals input shape across a sweep") {
    std::mt19937_64 gen(1);
    for (std::size_t depth : {2u, 3u, 4u}) {
        for (std::size_t size : {32u, 64u}) {
            INFO("depth " << depth << " size " << size);
            Generator<double> g(small_generator(size, depth));
            NoGradGuard ng;
            const auto out = g.forward(random_images(gen, 1, size), {Mode::eval, 0, {}});
            REQUIRE(out.shape() == Shape{1, 3, size, size});
            for (double v : out.data()) {
                REQUIRE(v > -1.0);
                REQUIRE(v < 1.0);
            }
        }
    }
}

TEST_CASE("desk default generator on 1x3x64x64") {
    Generator<float> g(GeneratorConfig{});
    NoGradGuard ng;
    const auto out = g.forward(Tensor<float>({1, 3, 64, 64}, 0.1f), {Mode::train, 3, {}});
    REQUIRE(out.shape() == Shape{1, 3, 64, 64});
}

TEST_CASE("skip links are aligned and wired") {
    Generator<double> g(small_generator(32, 3));
    const auto links = g.skip_links();
    REQUIRE(links.size() == 3);
    for (const auto& l : links) {
        REQUIRE(l.encoder_shape == l.decoder_shape);
        REQUIRE(l.decoder_block == 3 - l.encoder_block + 1);
    }
    std::mt19937_64 gen(2);
    const auto x = random_images(gen, 1, 32);
    NoGradGuard ng;
    const auto base = g.forward(x, {Mode::eval, 0, {}});
    for (std::size_t b = 0; b < 3; ++b) {
        std::vector<bool> enabled(3, true);
        enabled[b] = false;
        REQUIRE(max_abs_diff(base, g.forward(x, {Mode::eval, 0, enabled})) > 0.0);
    }
}

TEST_CASE("generator rejects wrong input shape") {
    Generator<double> g(small_generator(32, 3));
    REQUIRE_THROWS_AS(g.forward(TD({1, 3, 16, 16}), {}), ShapeError);
}

TEST_CASE("every generator parameter receives gradient") {
    Generator<double> g(small_generator(16, 2));
    FeatureExtractorConfig fc;
    fc.block_channels = {4, 4};
    fc.feature_channels = 8;
    FeatureExtractor<double> phi(fc);
    CriticConfig cc;
    cc.input_size = 16;
    cc.depth = 2;
    cc.channels = {4, 8};
    Critic<double> d(cc);
    std::mt19937_64 gen(3);
    const auto x = random_images(gen, 2, 16);
    const auto pred = g.forward(x, {Mode::train, 1, {}});
    const auto terms = perceptual_loss(random_images(gen, 2, 16), pred, phi);
    combined_loss(wasserstein_generator_loss(d.forward(pred)), terms.l_sp).backward();
    for (const auto& [path, t] : g.params()) {
        INFO(path);
        REQUIRE(t.has_grad());
        double norm = 0;
        for (double v : t.grad()) norm += v * v;
        REQUIRE(norm > 0.0);
    }
    for (const auto& [path, t] : phi.params()) {
        INFO(path);
        REQUIRE_FALSE(t.has_grad());
    }
}

TEST_CASE("critic scores") {
    CriticConfig cc;
    cc.input_size = 32;
    Critic<double> d(cc);
    std::mt19937_64 gen(4);
    const auto x = random_images(gen, 5, 32);
    NoGradGuard ng;
    const auto s = d.forward(x);
    REQUIRE(s.shape() == Shape{5});

    SECTION("duplicated inputs score identically") {
        std::vector<double> twice(x.data().begin(), x.data().begin() + 3 * 32 * 32);
        twice.insert(twice.end(), twice.begin(), twice.end());
        const auto s2 = d.forward(TD({2, 3, 32, 32}, twice));
        REQUIRE(s2.data()[0] == s2.data()[1]);
    }
    SECTION("scores are not squashed into [0,1]") {
        int outside = 0;
        for (int trial = 0; trial < 100; ++trial) {
            CriticConfig c2 = cc;
            c2.init_seed = static_cast<std::uint64_t>(trial);
            Critic<double> dt(c2);
            const double v = dt.forward(random_images(gen, 1, 32)).item();
            outside += (v < 0.0 || v > 1.0) ? 1 : 0;
        }
        REQUIRE(outside > 0);
    }
}

TEST_CASE("critic weight clipping") {
    CriticConfig cc;
    cc.input_size = 32;
    Critic<double> d(cc);
    d.params()[0].second.mutable_data()[0] = 0.5;
    clip_critic_weights(d.params(), 0.01);
    REQUIRE(d.params()[0].second.data()[0] == 0.01);
    double worst = 0;
    for (const auto& [p, t] : d.params())
        for (double v : t.data()) worst = std::max(worst, std::abs(v));
    REQUIRE(worst <= 0.01);

    std::vector<std::vector<double>> before;
    for (const auto& [p, t] : d.params()) before.emplace_back(t.data().begin(), t.data().end());
    clip_critic_weights(d.params(), 0.01);
    for (std::size_t k = 0; k < before.size(); ++k)
        REQUIRE(std::vector<double>(d.params()[k].second.data().begin(), d.params()[k].second.data().end()) == before[k]);

    REQUIRE_THROWS_AS(clip_critic_weights(d.params(), 0.0), ValueError);
    REQUIRE_THROWS_AS(clip_critic_weights(d.params(), -1.0), ValueError);
}

TEST_CASE("feature extractor") {
    FeatureExtractor<double> phi(FeatureExtractorConfig{});
    std::mt19937_64 gen(5);
    const auto x = random_images(gen, 1, 64);
    const auto f = phi(x);
    REQUIRE(f.shape() == Shape{1, 64, 16, 16});
    for (const auto& [p, t] : phi.params()) REQUIRE_FALSE(t.requires_grad());

    SECTION("sensitive to changes inside a masked region") {
        auto y = x.clone();
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 20; i < 30; ++i)
                for (std::size_t j = 20; j < 30; ++j) y.mutable_data()[(c * 64 + i) * 64 + j] += 0.5;
        REQUIRE(max_abs_diff(f, phi(y)) > 0.0);
    }
    SECTION("VGG topology has block3_conv3") {
        const auto vgg = FeatureExtractorConfig::vgg16_block3();
        FeatureExtractor<float> v(vgg);
        REQUIRE(v.params().find("block3_conv3/weight") != nullptr);
        REQUIRE(v.params().find("block3_conv3/weight")->shape() == Shape{256, 256, 3, 3});
    }
    SECTION("weights file round trip and rejection") {
        const auto dir = oracle::scratch_dir("fext");
        FeatureExtractorConfig other;
        other.seed = 77;
        FeatureExtractor<double> src(other);
        write_file_bytes(dir / "w.fext", encode_container(src.to_container()));
        FeatureExtractorConfig load;
        load.source = FeatureSource::weights_file;
        load.weights_path = dir / "w.fext";
        FeatureExtractor<double> loaded(load);
        for (std::size_t k = 0; k < src.params().size(); ++k) {
            const auto a = src.params()[k].second.data();
            const auto b = loaded.params()[k].second.data();
            for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(static_cast<float>(a[i]) == static_cast<float>(b[i]));
        }
        FeatureExtractorConfig wide;
        wide.feature_channels = 32;
        FeatureExtractor<double> narrow(wide);
        write_file_bytes(dir / "bad.fext", encode_container(narrow.to_container()));
        load.weights_path = dir / "bad.fext";
        REQUIRE_THROWS_AS(FeatureExtractor<double>(load), FormatError);
        write_file_bytes(dir / "junk.fext", std::vector<std::uint8_t>{1, 2, 3});
        load.weights_path = dir / "junk.fext";
        REQUIRE_THROWS_AS(FeatureExtractor<double>(load), FormatError);
    }
}
