// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations and helpers for the test suites.
// Nothing here calls into the library's kernels.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "swgan/image.hpp"
#include "swgan/masking.hpp"

namespace oracle {

// Direct-summation convolution over [N,C,H,W] / [O,C,k,k] flat buffers.
struct ConvCase {
    std::size_t n, c, h, w, o, k, stride, pad, dil;
};

inline std::size_t out_size(std::size_t in, std::size_t k, std::size_t s, std::size_t p, std::size_t d) {
    // Count the window positions by walking them.
    const long long ext = static_cast<long long>((k - 1) * d + 1);
    std::size_t count = 0;
    for (long long start = -static_cast<long long>(p); start + ext <= static_cast<long long>(in + p);
         start += static_cast<long long>(s)) {
        ++count;
    }
    return count;
}

inline std::vector<double> conv(const ConvCase& cc, const std::vector<double>& x, const std::vector<double>& wt,
                                const std::vector<double>& b) {
    const std::size_t oh = out_size(cc.h, cc.k, cc.stride, cc.pad, cc.dil);
    const std::size_t ow = out_size(cc.w, cc.k, cc.stride, cc.pad, cc.dil);
    std::vector<double> out(cc.n * cc.o * oh * ow);
    for (std::size_t n = 0; n < cc.n; ++n)
        for (std::size_t o = 0; o < cc.o; ++o)
            for (std::size_t m = 0; m < oh; ++m)
                for (std::size_t q = 0; q < ow; ++q) {
                    double acc = b[o];
                    for (std::size_t c = 0; c < cc.c; ++c)
                        for (std::size_t i = 0; i < cc.k; ++i)
                            for (std::size_t j = 0; j < cc.k; ++j) {
                                const long long r = static_cast<long long>(m * cc.stride + cc.dil * i) -
                                                    static_cast<long long>(cc.pad);
                                const long long s = static_cast<long long>(q * cc.stride + cc.dil * j) -
                                                    static_cast<long long>(cc.pad);
                                if (r < 0 || s < 0 || r >= static_cast<long long>(cc.h) ||
                                    s >= static_cast<long long>(cc.w))
                                    continue;
                                acc += x[((n * cc.c + c) * cc.h + r) * cc.w + s] *
                                       wt[((o * cc.c + c) * cc.k + i) * cc.k + j];
                            }
                    out[((n * cc.o + o) * oh + m) * ow + q] = acc;
                }
    return out;
}

// 2x2 block max with first-in-scan-order argmax.
inline std::vector<double> pool(const std::vector<double>& x, std::size_t planes, std::size_t h, std::size_t w,
                                std::vector<std::size_t>* argmax = nullptr) {
    std::vector<double> out;
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t i = 0; i < h; i += 2)
            for (std::size_t j = 0; j < w; j += 2) {
                std::size_t best = (p * h + i) * w + j;
                for (std::size_t di = 0; di < 2; ++di)
                    for (std::size_t dj = 0; dj < 2; ++dj) {
                        const std::size_t idx = (p * h + i + di) * w + j + dj;
                        if (x[idx] > x[best]) best = idx;
                    }
                out.push_back(x[best]);
                if (argmax) argmax->push_back(best);
            }
    return out;
}

// Sliding-window SSIM with an explicit 2-D Gaussian, no separability.
inline double ssim(const swgan::Image8& a, const swgan::Image8& b, const swgan::Mask* region = nullptr) {
    double g1[11];
    double sum = 0;
    for (int i = 0; i < 11; ++i) {
        g1[i] = std::exp(-((i - 5.0) * (i - 5.0)) / (2 * 1.5 * 1.5));
        sum += g1[i];
    }
    double win[11][11];
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) win[i][j] = g1[i] * g1[j] / (sum * sum);
    const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
    double total = 0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < a.channels; ++c)
        for (std::size_t y = 0; y + 11 <= a.height; ++y)
            for (std::size_t x = 0; x + 11 <= a.width; ++x) {
                if (region && region->at(y + 5, x + 5) != 0) continue;
                double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        const double va = a.at(y + i, x + j, c), vb = b.at(y + i, x + j, c);
                        mx += win[i][j] * va;
                        my += win[i][j] * vb;
                        sxx += win[i][j] * va * va;
                        syy += win[i][j] * vb * vb;
                        sxy += win[i][j] * va * vb;
                    }
                const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
                total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
    return total / static_cast<double>(count);
}

inline double mse(const swgan::Image8& a, const swgan::Image8& b) {
    double acc = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = double(a.pixels[i]) - double(b.pixels[i]);
        acc += d * d;
    }
    return acc / double(a.pixels.size());
}

inline double mae(const swgan::Image8& a, const swgan::Image8& b) {
    double acc = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) acc += std::abs(double(a.pixels[i]) - double(b.pixels[i]));
    return acc / double(a.pixels.size());
}

inline swgan::Image8 random_image(std::mt19937_64& gen, std::size_t w, std::size_t h, std::size_t c = 3) {
    swgan::Image8 img(w, h, c);
    std::uniform_int_distribution<int> d(0, 255);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(d(gen));
    return img;
}

inline std::vector<double> random_vector(std::mt19937_64& gen, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = d(gen);
    return v;
}

template <class T>
std::vector<T> values(const swgan::Tensor<T>& t) {
    return {t.data().begin(), t.data().end()};
}

inline std::vector<unsigned char> file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(SWGAN_FIXTURE_DIR) / name; }

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("swgan_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

// Smooth synthetic colour images: sinusoids at per-image frequencies.
inline swgan::Image8 synthetic_face(std::size_t index, std::size_t size) {
    swgan::Image8 img(size, size, 3);
    const double f = 0.15 + 0.05 * static_cast<double>(index % 5);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = 127.5 + 100.0 * std::sin(f * double(x) + 0.7 * double(c) + 0.13 * double(index)) *
                                             std::cos(0.11 * double(y) * (1.0 + 0.1 * double(index)));
                img.at(y, x, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
            }
    return img;
}

}  // namespace oracle
