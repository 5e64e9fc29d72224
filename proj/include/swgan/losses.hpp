// SPDX-License-Identifier: Apache-2.0
//
// Feature-space l1, the special perceptual loss, Wasserstein terms and the
// combined Wasserstein-perceptual objective.
#pragma once

#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "swgan/ops.hpp"

namespace swgan {

// (1/N) sum |x_i - y_i|
template <class T>
Tensor<T> l1_feature_loss(const Tensor<T>& x, const Tensor<T>& y) {
    if (x.shape() != y.shape()) {
        throw ShapeError("l1 loss needs equal shapes, got " + to_string(x.shape()) + " and " + to_string(y.shape()));
    }
    if (x.numel() == 0) {
        throw ValueError("l1 loss over an empty tensor");
    }
    return reduce_mean(abs(sub(x, y)));
}

// (1/N) sum (x_i - y_i)^2
template <class T>
Tensor<T> mse_feature_loss(const Tensor<T>& x, const Tensor<T>& y) {
    if (x.shape() != y.shape()) {
        throw ShapeError("mse loss needs equal shapes, got " + to_string(x.shape()) + " and " + to_string(y.shape()));
    }
    if (x.numel() == 0) {
        throw ValueError("mse loss over an empty tensor");
    }
    return reduce_mean(square(sub(x, y)));
}

template <class T>
struct PerceptualTerms {
    Tensor<T> l1_term;
    Tensor<T> mse_term;
    Tensor<T> l_sp;
};

// l_sp = l1(phi(a), phi(b)) + mean((phi(a) - phi(b))^2). `phi` is any
// callable mapping an image batch to a feature tensor; gradients reach
// whichever argument requires them.
template <class T, class Extractor>
PerceptualTerms<T> perceptual_loss(const Tensor<T>& reference, const Tensor<T>& reconstruction, const Extractor& phi) {
    const Tensor<T> fa = phi(reference);
    const Tensor<T> fb = phi(reconstruction);
    if (fa.shape() != fb.shape()) {
        throw ShapeError("feature maps differ in shape: " + to_string(fa.shape()) + " vs " + to_string(fb.shape()));
    }
    const Tensor<T> diff = sub(fa, fb);
    Tensor<T> l1 = reduce_mean(abs(diff));
    Tensor<T> mse = reduce_mean(square(diff));
    Tensor<T> total = add(l1, mse);
    return {std::move(l1), std::move(mse), std::move(total)};
}

// Minimizing this maximizes mean(D(real)) - mean(D(fake)).
template <class T>
Tensor<T> wasserstein_critic_loss(const Tensor<T>& real_scores, const Tensor<T>& fake_scores) {
    if (real_scores.numel() == 0 || fake_scores.numel() == 0) {
        throw ValueError("wasserstein critic loss needs non-empty score batches");
    }
    return sub(reduce_mean(reshape(fake_scores, {fake_scores.numel()})),
               reduce_mean(reshape(real_scores, {real_scores.numel()})));
}

// l_w = -mean(D(G(z)))
template <class T>
Tensor<T> wasserstein_generator_loss(const Tensor<T>& fake_scores) {
    if (fake_scores.numel() == 0) {
        throw ValueError("wasserstein generator loss needs a non-empty score batch");
    }
    return neg(reduce_mean(reshape(fake_scores, {fake_scores.numel()})));
}

struct LossWeights {
    double wasserstein = 1.0;
    double perceptual = 1.0;
};

// l_wp = lambda_w * l_w + lambda_sp * l_sp
template <class T>
Tensor<T> combined_loss(const Tensor<T>& l_w, const Tensor<T>& l_sp, const LossWeights& weights = {}) {
    if (l_w.numel() != 1 || l_sp.numel() != 1) {
        throw ShapeError("combined loss takes scalar terms");
    }
    if (!std::isfinite(static_cast<double>(l_w.item()))) {
        throw NumericError("non-finite Wasserstein term l_w = " + std::to_string(static_cast<double>(l_w.item())));
    }
    if (!std::isfinite(static_cast<double>(l_sp.item()))) {
        throw NumericError("non-finite perceptual term l_sp = " + std::to_string(static_cast<double>(l_sp.item())));
    }
    if (!std::isfinite(weights.wasserstein) || !std::isfinite(weights.perceptual)) {
        throw NumericError("non-finite loss weights");
    }
    return add(scale(l_w, static_cast<T>(weights.wasserstein)), scale(l_sp, static_cast<T>(weights.perceptual)));
}

struct LossReport {
    long long step = 0;
    double l1_term = 0.0;
    double perceptual_mse_term = 0.0;
    double l_sp = 0.0;
    double l_w_generator = 0.0;
    double l_w_critic = 0.0;
    double l_wp = 0.0;
};

inline nlohmann::ordered_json to_json(const LossReport& r) {
    return {{"step", r.step},
            {"l1_term", r.l1_term},
            {"perceptual_mse_term", r.perceptual_mse_term},
            {"l_sp", r.l_sp},
            {"l_w_generator", r.l_w_generator},
            {"l_w_critic", r.l_w_critic},
            {"l_wp", r.l_wp}};
}

inline LossReport loss_report_from_json(const nlohmann::json& j) {
    LossReport r;
    r.step = j.at("step").get<long long>();
    r.l1_term = j.at("l1_term").get<double>();
    r.perceptual_mse_term = j.at("perceptual_mse_term").get<double>();
    r.l_sp = j.at("l_sp").get<double>();
    r.l_w_generator = j.at("l_w_generator").get<double>();
    r.l_w_critic = j.at("l_w_critic").get<double>();
    r.l_wp = j.at("l_wp").get<double>();
    return r;
}

}  // namespace swgan
