// SPDX-License-Identifier: Apache-2.0
//
// 8-bit images, PNG I/O and conversion to/from normalized NCHW tensors.
#pragma once

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "swgan/tensor.hpp"

namespace swgan {

// Interleaved HWC pixels.
struct Image8 {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0;
    std::vector<std::uint8_t> pixels;

    Image8() = default;
    Image8(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

    std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
    std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
        return pixels[(y * width + x) * channels + c];
    }
    bool same_shape(const Image8& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
    friend bool operator==(const Image8&, const Image8&) = default;
};

struct PngReadResult {
    Image8 image;
    bool was_grayscale = false;
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) {
            std::fclose(f);
        }
    }
};

}  // namespace detail

// Decodes any 8-bit PNG to gray (1), RGB (3) or, with alpha stripped, the
// same. Palette images expand to RGB.
inline PngReadResult read_png(const std::filesystem::path& path) {
    std::unique_ptr<std::FILE, detail::FileCloser> file(std::fopen(path.c_str(), "rb"));
    if (!file) {
        throw IoError("cannot open image " + path.string());
    }
    png_byte sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw IoError("not a PNG file: " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng initialisation failed");
    }
    PngReadResult result;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("corrupt PNG: " + path.string());
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int bit_depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (bit_depth != 8 && !(color == PNG_COLOR_TYPE_PALETTE || (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("only 8-bit PNGs are supported: " + path.string());
    }
    if (color == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) {
        png_set_tRNS_to_alpha(png);
    }
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) {
        png_set_strip_alpha(png);
    }
    png_read_update_info(png, info);

    auto& img = result.image;
    img.width = png_get_image_width(png, info);
    img.height = png_get_image_height(png, info);
    img.channels = png_get_channels(png, info);
    result.was_grayscale = (color & PNG_COLOR_MASK_COLOR) == 0;
    img.pixels.resize(img.width * img.height * img.channels);
    rows.resize(img.height);
    for (std::size_t y = 0; y < img.height; ++y) {
        rows[y] = img.pixels.data() + y * img.width * img.channels;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return result;
}

// Deterministic encoder: fixed compression level and filters, no timestamps.
inline void write_png(const std::filesystem::path& path, const Image8& img) {
    if (img.channels != 1 && img.channels != 3) {
        throw ValueError("write_png supports 1 or 3 channels");
    }
    std::unique_ptr<std::FILE, detail::FileCloser> file(std::fopen(path.c_str(), "wb"));
    if (!file) {
        throw IoError("cannot write image " + path.string());
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialisation failed");
    }
    std::vector<png_bytep> rows(img.height);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed writing PNG " + path.string());
    }
    png_init_io(png, file.get());
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < img.height; ++y) {
        rows[y] = const_cast<png_bytep>(img.pixels.data() + y * img.width * img.channels);
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// v / 127.5 - 1
template <class T>
constexpr T normalize_pixel(std::uint8_t v) {
    return static_cast<T>(v) / static_cast<T>(127.5) - static_cast<T>(1);
}

// Inverse of normalize_pixel, clamped to [0, 255] and rounded.
template <class T>
std::uint8_t denormalize_pixel(T x) {
    const double v = (static_cast<double>(x) + 1.0) * 127.5;
    if (!(v > 0.0)) {
        return 0;
    }
    if (v >= 255.0) {
        return 255;
    }
    return static_cast<std::uint8_t>(std::lround(v));
}

// Bilinear with half-pixel centres. Same-size requests copy exactly.
inline Image8 resize_bilinear(const Image8& src, std::size_t width, std::size_t height) {
    if (width == 0 || height == 0) {
        throw ValueError("resize target must be non-empty");
    }
    if (src.width == width && src.height == height) {
        return src;
    }
    Image8 dst(width, height, src.channels);
    const double sx = static_cast<double>(src.width) / static_cast<double>(width);
    const double sy = static_cast<double>(src.height) / static_cast<double>(height);
    for (std::size_t y = 0; y < height; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, src.width - 1);
            const double wx = fx - static_cast<double>(x0);
            for (std::size_t c = 0; c < src.channels; ++c) {
                const double top = src.at(y0, x0, c) * (1 - wx) + src.at(y0, x1, c) * wx;
                const double bot = src.at(y1, x0, c) * (1 - wx) + src.at(y1, x1, c) * wx;
                dst.at(y, x, c) = static_cast<std::uint8_t>(std::lround(std::clamp(top * (1 - wy) + bot * wy, 0.0, 255.0)));
            }
        }
    }
    return dst;
}

// HWC uint8 -> [1, C, H, W] in [-1, 1].
template <class T>
Tensor<T> image_to_tensor(const Image8& img) {
    std::vector<T> data(img.pixels.size());
    const std::size_t plane = img.width * img.height;
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            for (std::size_t c = 0; c < img.channels; ++c) {
                data[c * plane + y * img.width + x] = normalize_pixel<T>(img.at(y, x, c));
            }
        }
    }
    return Tensor<T>({1, img.channels, img.height, img.width}, std::move(data));
}

// Element `index` of an [N, C, H, W] batch back to 8-bit HWC.
template <class T>
Image8 tensor_to_image(const Tensor<T>& t, std::size_t index = 0) {
    if (t.rank() != 4 || index >= t.dim(0)) {
        throw ShapeError("tensor_to_image needs [N,C,H,W] with index < N, got " + to_string(t.shape()));
    }
    const std::size_t c_n = t.dim(1), h = t.dim(2), w = t.dim(3), plane = h * w;
    Image8 img(w, h, c_n);
    const auto d = t.data();
    const std::size_t base = index * c_n * plane;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t c = 0; c < c_n; ++c) {
                img.at(y, x, c) = denormalize_pixel(d[base + c * plane + y * w + x]);
            }
        }
    }
    return img;
}

// Reads an 8-bit RGB PNG, resizes (bilinear) to size x size and returns a
// [1, 3, size, size] tensor in [-1, 1].
template <class T>
Tensor<T> load_and_normalize(const std::filesystem::path& path, std::size_t size) {
    auto [img, gray] = read_png(path);
    if (gray || img.channels != 3) {
        throw IoError("expected an RGB image, got " + std::to_string(img.channels) + "-channel " + path.string());
    }
    return image_to_tensor<T>(resize_bilinear(img, size, size));
}

// Stacks [1, C, H, W] tensors along the batch axis.
template <class T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& items) {
    if (items.empty()) {
        throw ValueError("cannot stack an empty batch");
    }
    const Shape& s = items.front().shape();
    std::vector<T> data;
    data.reserve(items.size() * items.front().numel());
    for (const auto& t : items) {
        if (t.rank() != 4 || t.dim(0) != 1 || t.shape() != s) {
            throw ShapeError("stack_batch needs equal [1,C,H,W] items, got " + to_string(t.shape()));
        }
        data.insert(data.end(), t.data().begin(), t.data().end());
    }
    return Tensor<T>({items.size(), s[1], s[2], s[3]}, std::move(data));
}

}  // namespace swgan
