// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference checks of backward() for every differentiable op
// and for the full generator objective. Runs in double precision.
//
// Each case builds fresh leaf inputs and a function producing some tensor y;
// the checked scalar is sum(y * R) for a fixed random R, so every output
// element contributes. Probed elements are drawn without replacement; a case
// is rebuilt with new random inputs until enough probes have been taken.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "swgan/layers.hpp"
#include "swgan/losses.hpp"
#include "swgan/masking.hpp"
#include "swgan/model.hpp"
#include "swgan/ops.hpp"
#include "swgan/rng.hpp"

namespace swgan {

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    std::size_t min_probes = 100;
    std::uint64_t seed = 0;
    // Relative error is |a - n| / max(|a|, |n|, floor).
    double floor = 1e-3;
};

struct GradCheckResult {
    std::string op;
    std::size_t probes = 0;
    double max_rel_err = 0.0;
    bool passed = false;
};

struct GradCheckCase {
    std::vector<Tensor<double>> inputs;  // probed leaves
    std::function<Tensor<double>()> fn;  // rebuilds the graph from the leaves
};

struct GradCheckOp {
    std::string name;
    std::function<GradCheckCase(Rng&)> make;
};

namespace detail {

inline Tensor<double> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) {
        x = rng.uniform(lo, hi);
    }
    return Tensor<double>(std::move(shape), std::move(v), true);
}

// Values with magnitude in [0.05, 1], keeping finite differences off kinks.
inline Tensor<double> off_zero_tensor(Rng& rng, Shape shape) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) {
        const double m = rng.uniform(0.05, 1.0);
        x = rng.uniform() < 0.5 ? -m : m;
    }
    return Tensor<double>(std::move(shape), std::move(v), true);
}

// Distinct values spaced far apart relative to the step, in random order.
inline Tensor<double> distinct_tensor(Rng& rng, Shape shape) {
    const std::size_t n = shape_numel(shape);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n);
    }
    rng.shuffle(v);
    return Tensor<double>(std::move(shape), std::move(v), true);
}

inline GradCheckCase unary_case(Rng& rng, Shape shape, std::function<Tensor<double>(const Tensor<double>&)> f,
                                bool off_zero = false) {
    auto x = off_zero ? off_zero_tensor(rng, shape) : random_tensor(rng, shape);
    return {{x}, [x, f] { return f(x); }};
}

inline GradCheckCase binary_case(Rng& rng, Shape a_shape, Shape b_shape,
                                 std::function<Tensor<double>(const Tensor<double>&, const Tensor<double>&)> f) {
    auto a = random_tensor(rng, a_shape);
    auto b = random_tensor(rng, b_shape);
    return {{a, b}, [a, b, f] { return f(a, b); }};
}

inline FeatureExtractorConfig stub_extractor_config() {
    FeatureExtractorConfig f;
    f.block_channels = {3, 4};
    f.feature_channels = 5;
    f.seed = 11;
    return f;
}

// Tiny generator + critic + extractor, evaluated exactly as a generator step.
inline GradCheckCase full_objective_case(Rng& rng) {
    GeneratorConfig gc;
    gc.input_size = 8;
    gc.depth = 2;
    gc.channels = {3, 4};
    gc.kernel_size = 3;
    gc.dropout_blocks = GeneratorConfig::default_dropout_blocks(2);
    gc.init_seed = rng.next_u64();
    CriticConfig cc;
    cc.input_size = 8;
    cc.depth = 2;
    cc.channels = {3, 4};
    cc.kernel_size = 3;
    cc.init_seed = rng.next_u64();
    auto gen = std::make_shared<Generator<double>>(gc);
    auto critic = std::make_shared<Critic<double>>(cc);
    auto phi = std::make_shared<FeatureExtractor<double>>(stub_extractor_config());

    auto image = random_tensor(rng, {2, 3, 8, 8});
    std::vector<Mask> masks;
    for (std::size_t i = 0; i < 2; ++i) {
        Mask m(8, 8, 1);
        for (auto& v : m.values) {
            v = rng.uniform() < 0.3 ? 0 : 1;
        }
        masks.push_back(m);
    }
    const auto mask = masks_to_tensor<double>(masks);
    const std::uint64_t dropout_seed = rng.next_u64();

    std::vector<Tensor<double>> inputs{image};
    for (const auto& [path, t] : gen->params()) {
        inputs.push_back(t);
    }
    return {inputs, [=] {
                const auto masked = apply_mask(image, mask);
                const auto pred = gen->forward(masked, {Mode::train, dropout_seed, {}});
                const auto recon = composite_reconstruction(image, mask, pred);
                const auto l_w = wasserstein_generator_loss(critic->forward(recon));
                const auto terms = perceptual_loss(image, recon, *phi);
                return combined_loss(l_w, terms.l_sp, LossWeights{1.0, 1.0});
            }};
}

}  // namespace detail

inline std::vector<GradCheckOp> gradcheck_ops() {
    using detail::binary_case;
    using detail::unary_case;
    using TD = Tensor<double>;
    std::vector<GradCheckOp> ops;
    ops.push_back({"add", [](Rng& r) { return binary_case(r, {3, 4}, {4}, [](const TD& a, const TD& b) { return add(a, b); }); }});
    ops.push_back({"sub", [](Rng& r) { return binary_case(r, {2, 3, 4}, {2, 1, 4}, [](const TD& a, const TD& b) { return sub(a, b); }); }});
    ops.push_back({"mul", [](Rng& r) { return binary_case(r, {3, 4}, {3, 1}, [](const TD& a, const TD& b) { return mul(a, b); }); }});
    ops.push_back({"scale", [](Rng& r) { return unary_case(r, {3, 5}, [](const TD& a) { return scale(a, -1.7); }); }});
    ops.push_back({"neg", [](Rng& r) { return unary_case(r, {3, 5}, [](const TD& a) { return neg(a); }); }});
    ops.push_back({"matmul", [](Rng& r) { return binary_case(r, {3, 4}, {4, 2}, [](const TD& a, const TD& b) { return matmul(a, b); }); }});
    ops.push_back({"reduce_sum", [](Rng& r) {
                       return unary_case(r, {3, 4, 5}, [](const TD& a) { return reduce_sum(a, std::vector<std::size_t>{1}); });
                   }});
    ops.push_back({"reduce_mean", [](Rng& r) {
                       return unary_case(r, {3, 4, 5}, [](const TD& a) { return reduce_mean(a); });
                   }});
    ops.push_back({"leaky_relu", [](Rng& r) { return unary_case(r, {4, 6}, [](const TD& a) { return leaky_relu(a, 0.2); }, true); }});
    ops.push_back({"relu", [](Rng& r) { return unary_case(r, {4, 6}, [](const TD& a) { return relu(a); }, true); }});
    ops.push_back({"tanh", [](Rng& r) { return unary_case(r, {4, 6}, [](const TD& a) { return tanh(a); }); }});
    ops.push_back({"abs", [](Rng& r) { return unary_case(r, {4, 6}, [](const TD& a) { return abs(a); }, true); }});
    ops.push_back({"square", [](Rng& r) { return unary_case(r, {4, 6}, [](const TD& a) { return square(a); }); }});
    ops.push_back({"reshape", [](Rng& r) { return unary_case(r, {2, 3, 4}, [](const TD& a) { return reshape(a, {6, 4}); }); }});
    ops.push_back({"conv2d_dilated", [](Rng& r) {
                       auto x = detail::random_tensor(r, {2, 2, 7, 7});
                       auto w = detail::random_tensor(r, {3, 2, 3, 3});
                       auto b = detail::random_tensor(r, {3});
                       return GradCheckCase{{x, w, b}, [x, w, b] { return conv2d(x, w, b, {1, 2, 2}); }};
                   }});
    ops.push_back({"conv2d_strided", [](Rng& r) {
                       auto x = detail::random_tensor(r, {2, 2, 8, 8});
                       auto w = detail::random_tensor(r, {3, 2, 5, 5});
                       auto b = detail::random_tensor(r, {3});
                       return GradCheckCase{{x, w, b}, [x, w, b] { return conv2d(x, w, b, {2, 2, 1}); }};
                   }});
    ops.push_back({"max_pool2d", [](Rng& r) {
                       auto x = detail::distinct_tensor(r, {2, 2, 6, 6});
                       return GradCheckCase{{x}, [x] { return max_pool2d(x); }};
                   }});
    ops.push_back({"upsample_nn", [](Rng& r) { return unary_case(r, {2, 2, 3, 3}, [](const TD& a) { return upsample_nn2(a); }); }});
    ops.push_back({"dropout", [](Rng& r) {
                       const auto seed = r.next_u64();
                       return unary_case(r, {2, 3, 4, 4}, [seed](const TD& a) { return dropout(a, 0.3, Mode::train, seed); });
                   }});
    ops.push_back({"l1_feature_loss", [](Rng& r) {
                       auto x = detail::random_tensor(r, {2, 3, 4, 4});
                       auto d = detail::off_zero_tensor(r, {2, 3, 4, 4});
                       auto y = Tensor<double>(x.shape(), std::vector<double>(x.numel()), true);
                       for (std::size_t i = 0; i < x.numel(); ++i) {
                           y.mutable_data()[i] = x.data()[i] + d.data()[i];
                       }
                       return GradCheckCase{{x, y}, [x, y] { return l1_feature_loss(x, y); }};
                   }});
    ops.push_back({"mse_feature_loss", [](Rng& r) {
                       return binary_case(r, {2, 3, 4, 4}, {2, 3, 4, 4}, [](const TD& a, const TD& b) { return mse_feature_loss(a, b); });
                   }});
    ops.push_back({"perceptual_loss", [](Rng& r) {
                       auto phi = std::make_shared<FeatureExtractor<double>>(detail::stub_extractor_config());
                       auto ref = detail::random_tensor(r, {2, 3, 8, 8});
                       auto rec = detail::random_tensor(r, {2, 3, 8, 8});
                       return GradCheckCase{{ref, rec}, [phi, ref, rec] { return perceptual_loss(ref, rec, *phi).l_sp; }};
                   }});
    ops.push_back({"wasserstein_critic_loss", [](Rng& r) {
                       return binary_case(r, {5}, {5}, [](const TD& a, const TD& b) { return wasserstein_critic_loss(a, b); });
                   }});
    ops.push_back({"wasserstein_generator_loss", [](Rng& r) {
                       return unary_case(r, {5}, [](const TD& a) { return wasserstein_generator_loss(a); });
                   }});
    ops.push_back({"combined_loss", [](Rng& r) {
                       return binary_case(r, {1}, {1}, [](const TD& a, const TD& b) {
                           return combined_loss(a, b, LossWeights{0.7, 1.3});
                       });
                   }});
    ops.push_back({"composite", [](Rng& r) {
                       auto image = detail::random_tensor(r, {2, 3, 4, 4});
                       auto pred = detail::random_tensor(r, {2, 3, 4, 4});
                       std::vector<Mask> masks(2, Mask(4, 4, 1));
                       for (auto& m : masks) {
                           for (auto& v : m.values) {
                               v = r.uniform() < 0.5 ? 0 : 1;
                           }
                       }
                       const auto mask = masks_to_tensor<double>(masks);
                       return GradCheckCase{{image, pred}, [image, mask, pred] {
                                                return composite_reconstruction(image, mask, pred);
                                            }};
                   }});
    ops.push_back({"full_objective", detail::full_objective_case});
    return ops;
}

inline std::vector<std::string> gradcheck_op_names() {
    std::vector<std::string> names;
    for (const auto& op : gradcheck_ops()) {
        names.push_back(op.name);
    }
    return names;
}

inline GradCheckResult run_gradcheck(const GradCheckOp& op, const GradCheckOptions& opts = {}) {
    GradCheckResult result;
    result.op = op.name;
    Rng rng(mix_seed({opts.seed, hash_string(op.name)}));
    std::size_t trials = 0;
    while (result.probes < opts.min_probes) {
        if (++trials > 10000) {
            throw Error("grad-check case '" + op.name + "' has no probe-able inputs");
        }
        GradCheckCase c = op.make(rng);
        Tensor<double> y;
        {
            NoGradGuard no_grad;
            y = c.fn();
        }
        const auto weights = detail::random_tensor(rng, y.shape());
        auto objective = [&] {
            NoGradGuard no_grad;
            const auto out = c.fn();
            const auto d = out.data();
            const auto w = weights.data();
            double acc = 0.0;
            for (std::size_t i = 0; i < d.size(); ++i) {
                acc += d[i] * w[i];
            }
            return acc;
        };

        const auto w_leaf = Tensor<double>(weights.shape(), std::vector<double>(weights.data().begin(), weights.data().end()));
        reduce_sum(mul(c.fn(), w_leaf)).backward();

        std::vector<std::pair<std::size_t, std::size_t>> candidates;
        for (std::size_t k = 0; k < c.inputs.size(); ++k) {
            for (std::size_t i = 0; i < c.inputs[k].numel(); ++i) {
                candidates.emplace_back(k, i);
            }
        }
        rng.shuffle(candidates);
        const std::size_t take = std::min(candidates.size(), opts.min_probes - result.probes);
        for (std::size_t p = 0; p < take; ++p) {
            const auto [k, i] = candidates[p];
            auto& leaf = c.inputs[k];
            const double analytic = leaf.has_grad() ? leaf.grad()[i] : 0.0;
            const double orig = leaf.data()[i];
            leaf.mutable_data()[i] = orig + opts.step;
            const double plus = objective();
            leaf.mutable_data()[i] = orig - opts.step;
            const double minus = objective();
            leaf.mutable_data()[i] = orig;
            const double numeric = (plus - minus) / (2.0 * opts.step);
            const double denom = std::max({std::abs(analytic), std::abs(numeric), opts.floor});
            result.max_rel_err = std::max(result.max_rel_err, std::abs(analytic - numeric) / denom);
            ++result.probes;
        }
    }
    result.passed = result.max_rel_err <= opts.tolerance;
    return result;
}

// Runs the named ops ("all" selects every op). Throws ValueError listing the
// known names when a name is not registered.
inline std::vector<GradCheckResult> run_gradchecks(const std::vector<std::string>& names,
                                                   const GradCheckOptions& opts = {}) {
    const auto ops = gradcheck_ops();
    std::vector<const GradCheckOp*> selected;
    for (const auto& name : names) {
        if (name == "all") {
            for (const auto& op : ops) {
                selected.push_back(&op);
            }
            continue;
        }
        const auto it = std::find_if(ops.begin(), ops.end(), [&](const GradCheckOp& op) { return op.name == name; });
        if (it == ops.end()) {
            std::string msg = "unknown op '" + name + "'; known ops:";
            for (const auto& op : ops) {
                msg += " " + op.name;
            }
            throw ValueError(msg);
        }
        selected.push_back(&*it);
    }
    std::vector<GradCheckResult> results;
    for (const auto* op : selected) {
        results.push_back(run_gradcheck(*op, opts));
    }
    return results;
}

inline std::string gradcheck_table(const std::vector<GradCheckResult>& results) {
    std::string out;
    char line[256];
    std::snprintf(line, sizeof line, "%-28s %7s %14s %s\n", "op", "probes", "max_rel_err", "status");
    out += line;
    for (const auto& r : results) {
        std::snprintf(line, sizeof line, "%-28s %7zu %14.3e %s\n", r.op.c_str(), r.probes, r.max_rel_err,
                      r.passed ? "PASS" : "FAIL");
        out += line;
    }
    return out;
}

}  // namespace swgan
