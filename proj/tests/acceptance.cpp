// SPDX-License-Identifier: Apache-2.0
//
// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <sys/wait.h>

#include <cfloat>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "oracles.hpp"
#include "swgan/swgan.hpp"

using namespace swgan;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ------------------------------------------------------------------ scope

Outcome readme_scope() {
    const std::string text = read_text(fs::path(SWGAN_SOURCE_DIR) / "README.md");
    const bool ok = text.find("not reproducible") != std::string::npos && text.find("27,000") != std::string::npos &&
                    text.find("ten days") != std::string::npos && text.find("100 epochs") != std::string::npos;
    return {ok, ok ? "README states the desk-scale scope" : "README lacks the scope statement"};
}

// ------------------------------------------------------------------ shapes

Outcome shape_law() {
    const auto t0 = Clock::now();
    NoGradGuard ng;
    const auto y = conv2d(Tensor<double>::ones({1, 1, 7, 7}), Tensor<double>::ones({1, 1, 3, 3}),
                          Tensor<double>::zeros({1}), {1, 0, 2});
    bool ok = y.shape() == Shape{1, 1, 3, 3};
    std::size_t checked = 0, mismatches = 0;
    for (std::size_t i = 1; i <= 24; ++i)
        for (std::size_t k = 1; k <= 6; ++k)
            for (std::size_t d = 1; d <= 4; ++d)
                for (std::size_t s = 1; s <= 3; ++s)
                    for (std::size_t p = 0; p <= 4; ++p) {
                        const std::size_t ext = k + (k - 1) * (d - 1);
                        const bool fits = i + 2 * p >= ext;
                        ++checked;
                        if (!fits) {
                            try {
                                conv_output_size(i, k, {s, p, d});
                                ++mismatches;
                            } catch (const ShapeError&) {
                            }
                            continue;
                        }
                        const std::size_t law = (i + 2 * p - ext) / s + 1;
                        if (conv_output_size(i, k, {s, p, d}) != law || oracle::out_size(i, k, s, p, d) != law)
                            ++mismatches;
                    }
    ok = ok && mismatches == 0;
    const double sec = seconds_since(t0);
    return {ok && sec < 1.0, fmt("7x7 k3 d2 -> %zux%zu; %zu grid points, %zu mismatches; %.3f s", y.dim(2), y.dim(3),
                                 checked, mismatches, sec)};
}

// ------------------------------------------------------------------ conv oracle

Outcome conv_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 gen(424242);
    auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(gen); };
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        oracle::ConvCase cc{};
        cc.dil = 1 + static_cast<std::size_t>(t % 3);
        cc.k = pick(1, 5);
        cc.stride = pick(1, 2);
        cc.pad = pick(0, 3);
        cc.n = pick(1, 2);
        cc.c = pick(1, 3);
        cc.o = pick(1, 3);
        const std::size_t ext = cc.k + (cc.k - 1) * (cc.dil - 1);
        cc.h = ext + pick(0, 8);
        cc.w = ext + pick(0, 8);
        const auto x = oracle::random_vector(gen, cc.n * cc.c * cc.h * cc.w);
        const auto w = oracle::random_vector(gen, cc.o * cc.c * cc.k * cc.k);
        const auto b = oracle::random_vector(gen, cc.o);
        const auto expect = oracle::conv(cc, x, w, b);
        NoGradGuard ng;
        const auto got = conv2d(Tensor<double>({cc.n, cc.c, cc.h, cc.w}, x), Tensor<double>({cc.o, cc.c, cc.k, cc.k}, w),
                                Tensor<double>({cc.o}, b), {cc.stride, cc.pad, cc.dil});
        if (got.numel() != expect.size()) return {false, fmt("case %d: output size mismatch", t)};
        for (std::size_t i = 0; i < expect.size(); ++i) worst = std::max(worst, std::abs(got.data()[i] - expect[i]));
    }
    const double sec = seconds_since(t0);
    return {worst <= 1e-12 && sec < 10.0, fmt("50 cases, d in {1,2,3}, max abs diff %.3e; %.3f s", worst, sec)};
}

// ------------------------------------------------------------------ gradients

Outcome gradient_suite() {
    const auto t0 = Clock::now();
    const auto results = run_gradchecks({"all"});
    bool ok = !results.empty();
    double worst = 0.0;
    std::string failed;
    for (const auto& r : results) {
        worst = std::max(worst, r.max_rel_err);
        if (!r.passed || r.probes < 100) {
            ok = false;
            failed += " " + r.op;
        }
    }
    const bool has_full = std::any_of(results.begin(), results.end(),
                                      [](const GradCheckResult& r) { return r.op == "full_objective"; });
    const double sec = seconds_since(t0);
    return {ok && has_full && sec < 120.0,
            fmt("%zu ops, max rel err %.3e%s%s; %.1f s", results.size(), worst, failed.empty() ? "" : ", failed:",
                failed.c_str(), sec)};
}

// ------------------------------------------------------------------ compositing

int run_cli(const std::string& args) {
    const std::string cmd = "'" + std::string(SWGAN_CLI_PATH) + "' " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

RunConfig load_smoke_config(const fs::path& images, const fs::path& out) {
    json doc = read_json_file(fs::path(SWGAN_SOURCE_DIR) / "configs" / "smoke.json");
    doc["data"]["image_dir"] = images.string();
    doc["output_dir"] = out.string();
    return parse_run_config(doc);
}

Outcome compositing(const fs::path& work) {
    const auto t0 = Clock::now();
    std::mt19937_64 gen(77);
    bool exact = true;
    for (int bits = 0; bits < 16; ++bits) {
        Mask mk(2, 2, 0);
        for (int k = 0; k < 4; ++k) mk.values[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>((bits >> k) & 1);
        const auto m = masks_to_tensor<double>({mk});
        const Tensor<double> i({1, 3, 2, 2}, oracle::random_vector(gen, 12));
        const Tensor<double> g({1, 3, 2, 2}, oracle::random_vector(gen, 12));
        const auto r = composite_reconstruction(i, m, g);
        const auto inv = sub(Tensor<double>::scalar(1.0), m);
        using oracle::values;
        exact = exact && values(mul(r, m)) == values(mul(i, m)) && values(mul(r, inv)) == values(mul(g, inv));
    }

    // infer with an all-ones mask through the command-line tool.
    const fs::path dir = work / "composite";
    fs::create_directories(dir);
    const RunConfig rc = load_smoke_config(dir, dir / "run");
    Trainer<float> trainer(rc.generator, rc.critic, rc.feature_extractor, rc.train,
                           {{"x", oracle::synthetic_face(0, 32), Mask(32, 32, 1)}});
    save_checkpoint(dir / "untrained.swgn", trainer, run_metadata(rc));
    write_png(dir / "input.png", oracle::synthetic_face(3, 32));
    write_png(dir / "ones.png", Image8(32, 32, 1, 255));
    const int code = run_cli("infer --checkpoint " + q(dir / "untrained.swgn") + " --image " + q(dir / "input.png") +
                             " --mask " + q(dir / "ones.png") + " --out " + q(dir / "output.png"));
    const bool same = code == 0 && oracle::file_bytes(dir / "output.png") == oracle::file_bytes(dir / "input.png");
    const double sec = seconds_since(t0);
    return {exact && same && sec < 1.0,
            fmt("16 masks %s; infer all-ones %s; %.3f s", exact ? "exact" : "NOT exact",
                same ? "byte-identical" : "differs", sec)};
}

// ------------------------------------------------------------------ smoke run

struct SmokeRun {
    fs::path dir;
    RunConfig config;
    std::vector<LossReport> log;
    double seconds = 0.0;
    std::string error;
};

std::vector<LossReport> read_log(const fs::path& p) {
    std::vector<LossReport> out;
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) out.push_back(loss_report_from_json(json::parse(line)));
    return out;
}

SmokeRun smoke_run(const fs::path& work) {
    SmokeRun s;
    s.dir = work / "smoke";
    fs::create_directories(s.dir / "images");
    for (std::size_t i = 0; i < 8; ++i)
        write_png(s.dir / "images" / fmt("face_%zu.png", i), oracle::synthetic_face(i, 32));
    s.config = load_smoke_config(s.dir / "images", s.dir / "run");
    const auto t0 = Clock::now();
    try {
        run_training(s.config);
        s.log = read_log(s.dir / "run" / "train_log.jsonl");
    } catch (const std::exception& e) {
        s.error = e.what();
    }
    s.seconds = seconds_since(t0);
    return s;
}

Outcome loss_identities(const SmokeRun& run) {
    std::mt19937_64 gen(5);
    FeatureExtractor<double> phi(FeatureExtractorConfig{});
    const Tensor<double> x({2, 3, 16, 16}, oracle::random_vector(gen, 2 * 3 * 16 * 16));
    const double self = perceptual_loss(x, x, phi).l_sp.item();

    double shift_err = 0.0;
    for (int t = 0; t < 20; ++t) {
        const Tensor<double> r({8}, oracle::random_vector(gen, 8, -5, 5));
        const Tensor<double> f({8}, oracle::random_vector(gen, 8, -5, 5));
        const double c = oracle::random_vector(gen, 1, -100, 100)[0];
        const double base = wasserstein_critic_loss(r, f).item();
        const double shifted =
            wasserstein_critic_loss(add(r, Tensor<double>::scalar(c)), add(f, Tensor<double>::scalar(c))).item();
        shift_err = std::max(shift_err, std::abs(shifted - base) / (std::abs(c) + 5.0));
    }

    // Log entries hold float losses widened to double; one float rounding is allowed.
    std::size_t bad = 0;
    for (const auto& r : run.log) {
        const double scale = std::max({std::abs(r.l_wp), std::abs(r.l_w_generator), std::abs(r.l_sp)});
        if (std::abs(r.l_wp - (r.l_w_generator + r.l_sp)) > FLT_EPSILON * scale) ++bad;
        const double sp_scale = std::max({r.l_sp, r.l1_term, r.perceptual_mse_term});
        if (std::abs(r.l_sp - (r.l1_term + r.perceptual_mse_term)) > FLT_EPSILON * sp_scale) ++bad;
    }
    const bool ok = self == 0.0 && shift_err <= 4 * DBL_EPSILON && run.log.size() == 300 && bad == 0;
    return {ok, fmt("l_sp(x,x) = %g; shift err %.2e (relative); %zu logged steps, %zu bookkeeping violations", self,
                    shift_err, run.log.size(), bad)};
}

double masked_mae(const ParamContainer& ckpt, const Dataset& ds) {
    double total = 0.0;
    for (const auto& s : ds.train) total += mae(s.image, inpaint(ckpt, s.image, s.mask), &s.mask);
    return total / static_cast<double>(ds.train.size());
}

Outcome overfit(const SmokeRun& run) {
    if (!run.error.empty()) return {false, "training failed: " + run.error};
    const Dataset ds = load_dataset(run.config);
    const json meta = run_metadata(run.config);
    Trainer<float> fresh(run.config.generator, run.config.critic, run.config.feature_extractor, run.config.train,
                         ds.train);
    const double before = masked_mae(make_checkpoint(fresh, meta), ds);
    const double after = masked_mae(read_checkpoint(run.dir / "run" / "final.swgn"), ds);
    const double drop = 1.0 - after / before;

    std::vector<double> ma;
    for (std::size_t t = 9; t < run.log.size(); ++t) {
        double acc = 0.0;
        for (std::size_t k = t - 9; k <= t; ++k) acc += run.log[k].l_sp;
        ma.push_back(acc / 10.0);
    }
    std::size_t rises = 0;
    double worst_rise = 0.0;
    const std::size_t from = ma.size() >= 101 ? ma.size() - 101 : 0;  // MA values covering the last 100 steps
    for (std::size_t t = from + 1; t < ma.size(); ++t) {
        if (ma[t] > ma[t - 1]) {
            ++rises;
            worst_rise = std::max(worst_rise, ma[t] - ma[t - 1]);
        }
    }
    const bool ok = run.log.size() == 300 && drop >= 0.5 && rises == 0 && run.seconds <= 600.0;
    return {ok, fmt("masked MAE %.2f -> %.2f (drop %.1f%%); l_sp 10-step MA rises %zu times in the last 100 steps "
                    "(worst +%.3e); %.1f s",
                    before, after, 100.0 * drop, rises, worst_rise, run.seconds)};
}

// ------------------------------------------------------------------ critic

Outcome critic_sanity() {
    const auto t0 = Clock::now();
    GeneratorConfig gc;
    gc.input_size = 32;
    gc.depth = 3;
    gc.channels = {16, 32, 64};
    gc.dropout_blocks = GeneratorConfig::default_dropout_blocks(3);
    CriticConfig cc;
    cc.input_size = 32;
    cc.channels = {8, 16, 32, 64};
    Generator<float> gen(gc);
    Critic<float> critic(cc);
    const double clip = 0.01;
    AdamState<float> opt;
    opt.hyper.lr = 1e-4;

    // Two clusters: warm horizontal stripes and cool vertical stripes.
    std::vector<Tensor<float>> imgs;
    std::vector<Mask> masks;
    for (std::size_t i = 0; i < 8; ++i) {
        Image8 img(32, 32, 3);
        for (std::size_t y = 0; y < 32; ++y)
            for (std::size_t x = 0; x < 32; ++x) {
                const bool warm = i % 2 == 0;
                const double phase = warm ? 0.5 * double(y) : 0.5 * double(x);
                const double v = 0.5 + 0.4 * std::sin(phase + 0.3 * double(i));
                img.at(y, x, 0) = static_cast<std::uint8_t>(std::lround(255 * (warm ? v : 0.2 * v)));
                img.at(y, x, 1) = static_cast<std::uint8_t>(std::lround(255 * 0.5 * v));
                img.at(y, x, 2) = static_cast<std::uint8_t>(std::lround(255 * (warm ? 0.2 * v : v)));
            }
        imgs.push_back(image_to_tensor<float>(img));
        StrokeMaskSpec spec;
        spec.seed = 300 + i;
        masks.push_back(synthesize_stroke_mask(spec, 32));
    }
    const auto real = stack_batch(imgs);
    const auto m = masks_to_tensor<float>(masks);
    Tensor<float> fake;
    {
        NoGradGuard ng;
        fake = composite_reconstruction(real, m, gen.forward(apply_mask(real, m), {Mode::eval, 0, {}}));
    }
    auto gap = [&] {
        NoGradGuard ng;
        return -static_cast<double>(wasserstein_critic_loss(critic.forward(real), critic.forward(fake)).item());
    };
    clip_critic_weights(critic.params(), clip);
    const double start = gap();
    bool clipped = true;
    bool finite = true;
    for (int step = 0; step < 200; ++step) {
        critic.params().clear_grads();
        const auto loss = wasserstein_critic_loss(critic.forward(real), critic.forward(fake));
        finite = finite && std::isfinite(loss.item());
        loss.backward();
        adam_step(critic.params(), opt);
        clip_critic_weights(critic.params(), clip);
        for (const auto& [path, w] : critic.params())
            for (float v : w.data()) clipped = clipped && std::abs(v) <= static_cast<float>(clip);
    }
    const double end = gap();
    const double sec = seconds_since(t0);
    return {end > start && clipped && finite && sec < 120.0,
            fmt("gap %.4e -> %.4e; weights %s [-c, c] every step; %.1f s", start, end, clipped ? "within" : "OUTSIDE",
                sec)};
}

// ------------------------------------------------------------------ reproducibility

Outcome reproducibility(const fs::path& work) {
    const fs::path dir = work / "repro";
    fs::create_directories(dir / "images");
    for (std::size_t i = 0; i < 8; ++i)
        write_png(dir / "images" / fmt("face_%zu.png", i), oracle::synthetic_face(i, 32));
    RunConfig rc = load_smoke_config(dir / "images", dir / "run");
    rc.train.checkpoint_every = 0;
    rc.train.max_steps = 10;

    // The output directory is part of the recorded config, so every run reuses it.
    auto fresh_run = [&](const RunConfig& c, const std::optional<fs::path>& resume = {}) {
        if (!resume) fs::remove_all(dir / "run");
        run_training(c, resume);
        return oracle::file_bytes(dir / "run" / "final.swgn");
    };
    const auto a = fresh_run(rc);
    const auto b = fresh_run(rc);

    RunConfig half = rc;
    half.train.max_steps = 5;
    fresh_run(half);
    fs::rename(dir / "run" / "final.swgn", dir / "half.swgn");
    const auto resumed = fresh_run(rc, dir / "half.swgn");

    const bool same = a == b;
    const bool resume_ok = resumed == a;
    return {same && resume_ok, fmt("identical runs %s; 5 + resume + 5 vs 10 steps %s", same ? "bitwise equal" : "DIFFER",
                                   resume_ok ? "bitwise equal" : "DIFFER")};
}

}  // namespace

int main() {
    const fs::path work = oracle::scratch_dir("acceptance");
    int failures = 0;
    auto report = [&](const char* name, const std::function<Outcome()>& fn) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s  %-22s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    };

    report("scope-statement", readme_scope);
    report("dilated-shape-law", shape_law);
    report("conv-oracle", conv_oracle);
    report("gradient-suite", gradient_suite);
    report("compositing", [&] { return compositing(work); });
    SmokeRun run;
    bool ran = false;
    auto smoke = [&]() -> const SmokeRun& {
        if (!ran) {
            run = smoke_run(work);
            ran = true;
        }
        return run;
    };
    report("loss-identities", [&] { return loss_identities(smoke()); });
    report("metrics-oracle", [] {
        const auto t0 = Clock::now();
        const auto gt = read_png(oracle::fixture("metric_gt.png")).image;
        const auto pred = read_png(oracle::fixture("metric_pred.png")).image;
        const auto mask = load_mask_file(oracle::fixture("metric_mask.png"));
        const auto expected = json::parse(read_text(oracle::fixture("metric_expected.json")));
        double worst = 0.0;
        for (const char* region : {"full", "masked"}) {
            const auto m = evaluate_pair(gt, pred, "", std::string(region) == "masked" ? &mask : nullptr);
            const auto& e = expected[region];
            worst = std::max({worst, std::abs(m.mse - e["mse"].get<double>()), std::abs(m.mae - e["mae"].get<double>()),
                              std::abs(m.psnr_db - e["psnr_db"].get<double>()),
                              std::abs(m.ssim - e["ssim"].get<double>())});
        }
        std::mt19937_64 gen(91);
        for (int t = 0; t < 25; ++t) {
            const auto a = oracle::random_image(gen, 16, 16), b = oracle::random_image(gen, 16, 16);
            const double om = oracle::mse(a, b);
            worst = std::max({worst, std::abs(ssim(a, b) - oracle::ssim(a, b)), std::abs(mse(a, b) - om),
                              std::abs(mae(a, b) - oracle::mae(a, b)),
                              std::abs(psnr(a, b) - 10.0 * std::log10(255.0 * 255.0 / om))});
        }
        const auto a = oracle::random_image(gen, 16, 16);
        const auto self = evaluate_pair(a, a);
        const bool ident = self.mse == 0.0 && self.mae == 0.0 && std::abs(self.ssim - 1.0) <= 1e-9 &&
                           self.psnr_db == kDefaultPsnrCap;
        const double sec = seconds_since(t0);
        return Outcome{worst <= 1e-6 && ident && sec < 5.0,
                       fmt("max deviation %.3e; identical images %s; %.3f s", worst, ident ? "ok" : "WRONG", sec)};
    });
    report("overfit-smoke", [&] { return overfit(smoke()); });
    report("critic-sanity", critic_sanity);
    report("reproducibility", [&] { return reproducibility(work); });

    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
