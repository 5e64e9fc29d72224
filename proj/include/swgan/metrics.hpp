// SPDX-License-Identifier: Apache-2.0
//
// Image quality metrics on 8-bit intensities: MSE, MAE, PSNR and SSIM.
#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swgan/image.hpp"
#include "swgan/masking.hpp"

namespace swgan {

inline constexpr double kDefaultPsnrCap = 99.0;

namespace detail {

inline void check_same_shape(const Image8& a, const Image8& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": images differ in shape (" + std::to_string(a.width) + "x" +
                         std::to_string(a.height) + "x" + std::to_string(a.channels) + " vs " +
                         std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
                         std::to_string(b.channels) + ")");
    }
}

inline void check_region(const Image8& a, const Mask* region) {
    if (region && (region->width != a.width || region->height != a.height)) {
        throw ShapeError("region mask size does not match the images");
    }
}

// Sums f(diff) over pixels (all channels) selected by region (missing = 0).
template <class F>
double mean_over_region(const Image8& a, const Image8& b, const Mask* region, F f) {
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t y = 0; y < a.height; ++y) {
        for (std::size_t x = 0; x < a.width; ++x) {
            if (region && region->at(y, x) != 0) {
                continue;
            }
            for (std::size_t c = 0; c < a.channels; ++c) {
                acc += f(static_cast<double>(a.at(y, x, c)) - static_cast<double>(b.at(y, x, c)));
                ++count;
            }
        }
    }
    if (count == 0) {
        throw ValueError("metric region is empty");
    }
    return acc / static_cast<double>(count);
}

}  // namespace detail

// Mean squared difference. With `region`, only missing (0) pixels count.
inline double mse(const Image8& a, const Image8& b, const Mask* region = nullptr) {
    detail::check_same_shape(a, b, "mse");
    detail::check_region(a, region);
    return detail::mean_over_region(a, b, region, [](double d) { return d * d; });
}

inline double mae(const Image8& a, const Image8& b, const Mask* region = nullptr) {
    detail::check_same_shape(a, b, "mae");
    detail::check_region(a, region);
    return detail::mean_over_region(a, b, region, [](double d) { return std::abs(d); });
}

inline double psnr_from_mse(double mse_value, double cap = kDefaultPsnrCap) {
    if (mse_value <= 0.0) {
        return cap;
    }
    return std::min(cap, 10.0 * std::log10(255.0 * 255.0 / mse_value));
}

inline double psnr(const Image8& a, const Image8& b, const Mask* region = nullptr, double cap = kDefaultPsnrCap) {
    return psnr_from_mse(mse(a, b, region), cap);
}

struct SsimParams {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 255.0;
};

inline std::vector<double> gaussian_window(std::size_t size, double sigma) {
    std::vector<double> w(size);
    const double centre = static_cast<double>(size - 1) / 2.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const double d = static_cast<double>(i) - centre;
        w[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        sum += w[i];
    }
    for (auto& v : w) {
        v /= sum;
    }
    return w;
}

// Mean local SSIM over all fully-inside window positions, per channel, then
// averaged over channels. Local statistics use separable Gaussian weighting.
// With `region`, only windows centred on missing pixels contribute.
inline double ssim(const Image8& a, const Image8& b, const Mask* region = nullptr, const SsimParams& p = {}) {
    detail::check_same_shape(a, b, "ssim");
    detail::check_region(a, region);
    if (a.width < p.window || a.height < p.window) {
        throw ShapeError("ssim needs images of at least " + std::to_string(p.window) + "x" +
                         std::to_string(p.window) + ", got " + std::to_string(a.width) + "x" +
                         std::to_string(a.height));
    }
    const auto g = gaussian_window(p.window, p.sigma);
    const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
    const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
    const std::size_t w = a.width, h = a.height, ow = w - p.window + 1, oh = h - p.window + 1;
    const std::size_t half = p.window / 2;

    // Five moment planes: x, y, x^2, y^2, xy.
    std::array<std::vector<double>, 5> src, tmp, out;
    for (auto& v : src) v.resize(w * h);
    for (auto& v : tmp) v.assign(h * ow, 0.0);
    for (auto& v : out) v.assign(oh * ow, 0.0);

    double total = 0.0;
    std::size_t windows = 0;
    for (std::size_t c = 0; c < a.channels; ++c) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const double xa = a.at(y, x, c), yb = b.at(y, x, c);
                const std::size_t i = y * w + x;
                src[0][i] = xa;
                src[1][i] = yb;
                src[2][i] = xa * xa;
                src[3][i] = yb * yb;
                src[4][i] = xa * yb;
            }
        }
        for (std::size_t m = 0; m < 5; ++m) {
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < ow; ++x) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < p.window; ++k) {
                        acc += g[k] * src[m][y * w + x + k];
                    }
                    tmp[m][y * ow + x] = acc;
                }
            }
            for (std::size_t y = 0; y < oh; ++y) {
                for (std::size_t x = 0; x < ow; ++x) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < p.window; ++k) {
                        acc += g[k] * tmp[m][(y + k) * ow + x];
                    }
                    out[m][y * ow + x] = acc;
                }
            }
        }
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                if (region && region->at(y + half, x + half) != 0) {
                    continue;
                }
                const std::size_t i = y * ow + x;
                const double mx = out[0][i], my = out[1][i];
                const double vx = out[2][i] - mx * mx;
                const double vy = out[3][i] - my * my;
                const double cxy = out[4][i] - mx * my;
                total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++windows;
            }
        }
    }
    if (windows == 0) {
        throw ValueError("ssim region contains no window centres");
    }
    return total / static_cast<double>(windows);
}

struct ImageMetrics {
    std::string name;
    double mse = 0.0;
    double mae = 0.0;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

struct MetricsReport {
    std::vector<ImageMetrics> per_image;
    ImageMetrics aggregate{"mean"};
};

inline ImageMetrics evaluate_pair(const Image8& ground_truth, const Image8& reconstruction, std::string name = {},
                                  const Mask* region = nullptr, double psnr_cap = kDefaultPsnrCap) {
    ImageMetrics m;
    m.name = std::move(name);
    m.mse = mse(ground_truth, reconstruction, region);
    m.mae = mae(ground_truth, reconstruction, region);
    m.psnr_db = psnr_from_mse(m.mse, psnr_cap);
    m.ssim = ssim(ground_truth, reconstruction, region);
    return m;
}

// Aggregates are arithmetic means in index order.
inline MetricsReport make_report(std::vector<ImageMetrics> per_image) {
    MetricsReport r;
    r.per_image = std::move(per_image);
    if (r.per_image.empty()) {
        throw ValueError("metrics report needs at least one image");
    }
    for (const auto& m : r.per_image) {
        r.aggregate.mse += m.mse;
        r.aggregate.mae += m.mae;
        r.aggregate.psnr_db += m.psnr_db;
        r.aggregate.ssim += m.ssim;
    }
    const double n = static_cast<double>(r.per_image.size());
    r.aggregate.mse /= n;
    r.aggregate.mae /= n;
    r.aggregate.psnr_db /= n;
    r.aggregate.ssim /= n;
    return r;
}

inline nlohmann::ordered_json to_json(const ImageMetrics& m) {
    return {{"name", m.name}, {"mse", m.mse}, {"mae", m.mae}, {"psnr_db", m.psnr_db}, {"ssim", m.ssim}};
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
    nlohmann::ordered_json per = nlohmann::ordered_json::array();
    for (const auto& m : r.per_image) {
        per.push_back(to_json(m));
    }
    nlohmann::ordered_json agg = to_json(r.aggregate);
    agg.erase("name");
    return {{"per_image", per}, {"aggregate", agg}};
}

// Aligned table with the MSE / MAE / PSNR / SSIM columns.
inline std::string to_table(const MetricsReport& r) {
    std::size_t name_w = 5;
    for (const auto& m : r.per_image) {
        name_w = std::max(name_w, m.name.size());
    }
    std::string out;
    char line[512];
    std::snprintf(line, sizeof line, "%-*s %12s %12s %10s %8s\n", static_cast<int>(name_w), "Image", "MSE", "MAE",
                  "PSNR", "SSIM");
    out += line;
    auto row = [&](const ImageMetrics& m) {
        std::snprintf(line, sizeof line, "%-*s %12.4f %12.4f %10.4f %8.4f\n", static_cast<int>(name_w), m.name.c_str(),
                      m.mse, m.mae, m.psnr_db, m.ssim);
        out += line;
    };
    for (const auto& m : r.per_image) {
        row(m);
    }
    out += std::string(name_w + 46, '-') + "\n";
    row(r.aggregate);
    return out;
}

}  // namespace swgan
