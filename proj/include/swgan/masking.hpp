// SPDX-License-Identifier: Apache-2.0
//
// Binary masks (1 = known pixel, 0 = missing), stroke-mask synthesis,
// mask loading, masked-input composition and reconstruction compositing.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "swgan/image.hpp"
#include "swgan/ops.hpp"
#include "swgan/rng.hpp"

namespace swgan {

struct Mask {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> values;  // 0 or 1, row-major

    Mask() = default;
    Mask(std::size_t w, std::size_t h, std::uint8_t fill = 1) : width(w), height(h), values(w * h, fill) {}

    std::uint8_t& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
    std::uint8_t at(std::size_t y, std::size_t x) const { return values[y * width + x]; }

    // Fraction of missing pixels.
    double coverage() const {
        if (values.empty()) {
            return 0.0;
        }
        const auto missing = std::count(values.begin(), values.end(), std::uint8_t{0});
        return static_cast<double>(missing) / static_cast<double>(values.size());
    }

    friend bool operator==(const Mask&, const Mask&) = default;
};

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct IntRange {
    long long lo = 0;
    long long hi = 0;
};

struct StrokeMaskSpec {
    IntRange num_strokes{1, 4};
    IntRange vertices_per_stroke{2, 6};
    Range thickness{3.0, 8.0};  // pixels
    std::uint64_t seed = 0;
    std::optional<Range> target_coverage;
    int max_attempts = 64;

    // Coverage window every generated mask must satisfy.
    Range coverage_window() const { return target_coverage.value_or(Range{0.01, 0.6}); }

    std::vector<std::string> validate() const {
        std::vector<std::string> problems;
        if (num_strokes.lo < 0 || num_strokes.hi < num_strokes.lo) {
            problems.push_back("mask.num_strokes must be a range with 0 <= lo <= hi");
        }
        if (vertices_per_stroke.lo < 2 || vertices_per_stroke.hi < vertices_per_stroke.lo) {
            problems.push_back("mask.vertices_per_stroke must be a range with 2 <= lo <= hi");
        }
        if (!(thickness.lo > 0.0) || thickness.hi < thickness.lo) {
            problems.push_back("mask.thickness must be a range with 0 < lo <= hi");
        }
        if (target_coverage &&
            !(target_coverage->lo >= 0.0 && target_coverage->hi <= 1.0 && target_coverage->lo <= target_coverage->hi)) {
            problems.push_back("mask.target_coverage must satisfy 0 <= lo <= hi <= 1");
        }
        if (max_attempts < 1) {
            problems.push_back("mask.max_attempts must be positive");
        }
        return problems;
    }
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

// Marks as missing every pixel whose centre lies within thickness/2 of the
// polyline (round caps and joins).
inline void rasterize_stroke(Mask& mask, const std::vector<Point>& polyline, double thickness) {
    const double r = thickness / 2.0;
    const double r2 = r * r;
    auto mark_segment = [&](Point a, Point b) {
        const long long x0 = std::max<long long>(0, static_cast<long long>(std::floor(std::min(a.x, b.x) - r)));
        const long long x1 = std::min<long long>(static_cast<long long>(mask.width) - 1,
                                                 static_cast<long long>(std::ceil(std::max(a.x, b.x) + r)));
        const long long y0 = std::max<long long>(0, static_cast<long long>(std::floor(std::min(a.y, b.y) - r)));
        const long long y1 = std::min<long long>(static_cast<long long>(mask.height) - 1,
                                                 static_cast<long long>(std::ceil(std::max(a.y, b.y) + r)));
        const double dx = b.x - a.x, dy = b.y - a.y;
        const double len2 = dx * dx + dy * dy;
        for (long long y = y0; y <= y1; ++y) {
            for (long long x = x0; x <= x1; ++x) {
                const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
                double t = len2 > 0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
                t = std::clamp(t, 0.0, 1.0);
                const double ex = a.x + t * dx - px, ey = a.y + t * dy - py;
                if (ex * ex + ey * ey <= r2) {
                    mask.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = 0;
                }
            }
        }
    };
    if (polyline.size() == 1) {
        mark_segment(polyline[0], polyline[0]);
    }
    for (std::size_t i = 1; i < polyline.size(); ++i) {
        mark_segment(polyline[i - 1], polyline[i]);
    }
}

namespace detail {

inline Mask draw_random_strokes(const StrokeMaskSpec& spec, std::size_t size, std::uint64_t seed) {
    Mask mask(size, size, 1);
    Rng rng(seed);
    const auto strokes = rng.uniform_int(spec.num_strokes.lo, spec.num_strokes.hi);
    const double s = static_cast<double>(size);
    for (long long k = 0; k < strokes; ++k) {
        const auto vertices = rng.uniform_int(spec.vertices_per_stroke.lo, spec.vertices_per_stroke.hi);
        const double thickness = rng.uniform(spec.thickness.lo, spec.thickness.hi);
        std::vector<Point> line;
        Point p{rng.uniform(0.0, s), rng.uniform(0.0, s)};
        double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        line.push_back(p);
        for (long long v = 1; v < vertices; ++v) {
            angle += rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2);
            const double length = rng.uniform(0.1 * s, 0.35 * s);
            p.x = std::clamp(p.x + length * std::cos(angle), 0.0, s);
            p.y = std::clamp(p.y + length * std::sin(angle), 0.0, s);
            line.push_back(p);
        }
        rasterize_stroke(mask, line, thickness);
    }
    return mask;
}

}  // namespace detail

// Random free-form strokes; deterministic in spec.seed. Retries with derived
// seeds until the coverage window is met.
inline Mask synthesize_stroke_mask(const StrokeMaskSpec& spec, std::size_t size) {
    if (size < 16) {
        throw ValueError("mask size must be at least 16, got " + std::to_string(size));
    }
    if (auto problems = spec.validate(); !problems.empty()) {
        throw ConfigError(problems);
    }
    if (spec.num_strokes.hi == 0 && !spec.target_coverage) {
        return Mask(size, size, 1);
    }
    const Range window = spec.coverage_window();
    for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
        Mask m = detail::draw_random_strokes(spec, size, mix_seed({spec.seed, static_cast<std::uint64_t>(attempt)}));
        const double c = m.coverage();
        const bool ok = spec.target_coverage ? (c >= window.lo && c <= window.hi) : (c > window.lo && c < window.hi);
        if (ok) {
            return m;
        }
    }
    throw ValueError("could not reach mask coverage in [" + std::to_string(window.lo) + ", " +
                     std::to_string(window.hi) + "] after " + std::to_string(spec.max_attempts) + " attempts");
}

// Luma threshold at 127.5: brighter pixels are known (1). `invert` flips it.
inline Mask mask_from_image(const Image8& img, bool invert = false) {
    Mask m(img.width, img.height, 1);
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            double luma;
            if (img.channels >= 3) {
                luma = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
            } else {
                luma = img.at(y, x, 0);
            }
            const bool known = luma >= 127.5;
            m.at(y, x) = static_cast<std::uint8_t>(known != invert ? 1 : 0);
        }
    }
    return m;
}

inline Mask load_mask_file(const std::filesystem::path& path, bool invert = false) {
    return mask_from_image(read_png(path).image, invert);
}

// Known pixels white, missing pixels black.
inline Image8 mask_to_image(const Mask& m) {
    Image8 img(m.width, m.height, 1);
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        img.pixels[i] = m.values[i] ? 255 : 0;
    }
    return img;
}

// Nearest-neighbour resize; the result is still exactly binary.
inline Mask resize_mask(const Mask& m, std::size_t width, std::size_t height) {
    if (m.width == width && m.height == height) {
        return m;
    }
    Mask out(width, height, 1);
    for (std::size_t y = 0; y < height; ++y) {
        const std::size_t sy = std::min(m.height - 1, (2 * y + 1) * m.height / (2 * height));
        for (std::size_t x = 0; x < width; ++x) {
            const std::size_t sx = std::min(m.width - 1, (2 * x + 1) * m.width / (2 * width));
            out.at(y, x) = m.at(sy, sx);
        }
    }
    return out;
}

// Masks -> [N, 1, H, W] tensor of exact 0/1 values.
template <class T>
Tensor<T> masks_to_tensor(const std::vector<Mask>& masks) {
    if (masks.empty()) {
        throw ValueError("empty mask batch");
    }
    const std::size_t w = masks.front().width, h = masks.front().height;
    std::vector<T> data;
    data.reserve(masks.size() * w * h);
    for (const auto& m : masks) {
        if (m.width != w || m.height != h) {
            throw ShapeError("masks in a batch must share one size");
        }
        for (auto v : m.values) {
            data.push_back(v ? T(1) : T(0));
        }
    }
    return Tensor<T>({masks.size(), 1, h, w}, std::move(data));
}

template <class T>
bool is_binary_mask(const Tensor<T>& m) {
    return std::all_of(m.data().begin(), m.data().end(), [](T v) { return v == T(0) || v == T(1); });
}

namespace detail {

template <class T>
void check_mask_for(const Tensor<T>& image, const Tensor<T>& mask, const char* what) {
    if (image.rank() != 4 || mask.rank() != 4 || image.dim(0) != mask.dim(0) || image.dim(2) != mask.dim(2) ||
        image.dim(3) != mask.dim(3) || (mask.dim(1) != 1 && mask.dim(1) != image.dim(1))) {
        throw ShapeError(std::string(what) + ": mask " + to_string(mask.shape()) + " does not match image " +
                         to_string(image.shape()));
    }
}

}  // namespace detail

// M_I = I * M (missing pixels become 0, mid-gray in [-1, 1]).
template <class T>
Tensor<T> apply_mask(const Tensor<T>& image, const Tensor<T>& mask) {
    detail::check_mask_for(image, mask, "apply_mask");
    return mul(image, mask);
}

// I_R = I * M + (1 - M) * G
template <class T>
Tensor<T> composite_reconstruction(const Tensor<T>& image, const Tensor<T>& mask, const Tensor<T>& prediction) {
    detail::check_mask_for(image, mask, "composite_reconstruction");
    if (prediction.shape() != image.shape()) {
        throw ShapeError("composite_reconstruction: prediction " + to_string(prediction.shape()) +
                         " does not match image " + to_string(image.shape()));
    }
    const Tensor<T> holes = sub(Tensor<T>::scalar(T(1)), mask);
    return add(mul(image, mask), mul(holes, prediction));
}

struct DatasetSplit {
    std::vector<std::filesystem::path> train_paths;
    std::vector<std::filesystem::path> test_paths;
};

// Deterministic shuffle then cut at round(ratio * n).
inline DatasetSplit split_dataset(std::vector<std::filesystem::path> paths, double train_ratio, std::uint64_t seed) {
    if (!(train_ratio >= 0.0 && train_ratio <= 1.0)) {
        throw ValueError("split ratio must be in [0,1]");
    }
    std::sort(paths.begin(), paths.end());
    Rng rng(mix_seed({seed, 0x53504cULL}));
    rng.shuffle(paths);
    const auto n_train = static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(paths.size())));
    DatasetSplit split;
    split.train_paths.assign(paths.begin(), paths.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.test_paths.assign(paths.begin() + static_cast<std::ptrdiff_t>(n_train), paths.end());
    return split;
}

}  // namespace swgan
