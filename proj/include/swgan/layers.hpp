// SPDX-License-Identifier: Apache-2.0
//
// Network building blocks on NCHW tensors: dilated convolution, 2x2 max
// pooling, nearest-neighbour x2 upsampling, inverted dropout, and the
// parameter registry optimizers iterate over.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "swgan/ops.hpp"
#include "swgan/rng.hpp"
#include "swgan/tensor.hpp"

namespace swgan {

// Receptive extent of a k-tap kernel with taps spaced `dilation` apart.
inline std::size_t effective_kernel_extent(long long kernel_size, long long dilation) {
    if (kernel_size < 1 || dilation < 1) {
        throw ValueError("kernel size and dilation must be positive, got k=" + std::to_string(kernel_size) +
                         " d=" + std::to_string(dilation));
    }
    return static_cast<std::size_t>(kernel_size + (kernel_size - 1) * (dilation - 1));
}

struct ConvGeometry {
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t dilation = 1;
};

// floor((in + 2p - extent) / s) + 1; throws when no output position fits.
inline std::size_t conv_output_size(std::size_t in, std::size_t kernel_size, const ConvGeometry& g) {
    if (g.stride < 1) {
        throw ValueError("stride must be positive");
    }
    const std::size_t extent = effective_kernel_extent(static_cast<long long>(kernel_size),
                                                       static_cast<long long>(g.dilation));
    if (in + 2 * g.padding < extent) {
        throw ShapeError("degenerate convolution: input " + std::to_string(in) + " with padding " +
                         std::to_string(g.padding) + " is smaller than kernel extent " + std::to_string(extent));
    }
    return (in + 2 * g.padding - extent) / g.stride + 1;
}

namespace detail {

struct ConvDims {
    std::size_t channels, height, width, kernel, out_h, out_w;
    ConvGeometry geom;

    std::size_t rows() const { return channels * kernel * kernel; }
    std::size_t cols() const { return out_h * out_w; }
};

// Valid output range [lo, hi) along one axis for kernel tap `tap`.
inline std::pair<long long, long long> valid_range(const ConvDims& d, std::size_t tap, std::size_t in,
                                                   std::size_t out) {
    const long long s = static_cast<long long>(d.geom.stride);
    const long long off = static_cast<long long>(d.geom.dilation * tap) - static_cast<long long>(d.geom.padding);
    // need 0 <= o*s + off < in
    long long lo = off >= 0 ? 0 : (-off + s - 1) / s;
    long long hi = static_cast<long long>(in) - off <= 0 ? 0 : (static_cast<long long>(in) - off - 1) / s + 1;
    lo = std::min<long long>(lo, static_cast<long long>(out));
    hi = std::clamp<long long>(hi, lo, static_cast<long long>(out));
    return {lo, hi};
}

// Dot product with eight independent partial sums (fixed order, so the
// result is deterministic while still vectorising).
template <class T>
T dot(const T* a, const T* b, std::size_t n) {
    T acc[8] = {};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (std::size_t l = 0; l < 8; ++l) {
            acc[l] += a[i + l] * b[i + l];
        }
    }
    T tail = T(0);
    for (; i < n; ++i) {
        tail += a[i] * b[i];
    }
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

// c[m, :] += sum_r a[m, r] * b[r, :]   a: [M,R], b: [R,Q], c: [M,Q]
template <class T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m_count, std::size_t r_count, std::size_t q_count) {
    std::size_t m = 0;
    for (; m + 4 <= m_count; m += 4) {
        T* c0 = c + m * q_count;
        T* c1 = c0 + q_count;
        T* c2 = c1 + q_count;
        T* c3 = c2 + q_count;
        for (std::size_t r = 0; r < r_count; ++r) {
            const T a0 = a[m * r_count + r], a1 = a[(m + 1) * r_count + r];
            const T a2 = a[(m + 2) * r_count + r], a3 = a[(m + 3) * r_count + r];
            const T* src = b + r * q_count;
            for (std::size_t q = 0; q < q_count; ++q) {
                const T v = src[q];
                c0[q] += a0 * v;
                c1[q] += a1 * v;
                c2[q] += a2 * v;
                c3[q] += a3 * v;
            }
        }
    }
    for (; m < m_count; ++m) {
        T* c0 = c + m * q_count;
        for (std::size_t r = 0; r < r_count; ++r) {
            const T a0 = a[m * r_count + r];
            const T* src = b + r * q_count;
            for (std::size_t q = 0; q < q_count; ++q) {
                c0[q] += a0 * src[q];
            }
        }
    }
}

// c[r, :] += sum_m a[m, r] * b[m, :]   a: [M,R], b: [M,Q], c: [R,Q]
template <class T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::size_t m_count, std::size_t r_count, std::size_t q_count) {
    std::size_t m = 0;
    for (; m + 4 <= m_count; m += 4) {
        const T* b0 = b + m * q_count;
        const T* b1 = b0 + q_count;
        const T* b2 = b1 + q_count;
        const T* b3 = b2 + q_count;
        for (std::size_t r = 0; r < r_count; ++r) {
            const T a0 = a[m * r_count + r], a1 = a[(m + 1) * r_count + r];
            const T a2 = a[(m + 2) * r_count + r], a3 = a[(m + 3) * r_count + r];
            T* dst = c + r * q_count;
            for (std::size_t q = 0; q < q_count; ++q) {
                dst[q] += a0 * b0[q] + a1 * b1[q] + a2 * b2[q] + a3 * b3[q];
            }
        }
    }
    for (; m < m_count; ++m) {
        const T* b0 = b + m * q_count;
        for (std::size_t r = 0; r < r_count; ++r) {
            const T a0 = a[m * r_count + r];
            T* dst = c + r * q_count;
            for (std::size_t q = 0; q < q_count; ++q) {
                dst[q] += a0 * b0[q];
            }
        }
    }
}

template <class T>
void im2col(const T* x, const ConvDims& d, T* col) {
    const std::size_t k = d.kernel, s = d.geom.stride;
    const long long pad = static_cast<long long>(d.geom.padding);
    for (std::size_t c = 0; c < d.channels; ++c) {
        for (std::size_t ki = 0; ki < k; ++ki) {
            const auto [oh_lo, oh_hi] = valid_range(d, ki, d.height, d.out_h);
            for (std::size_t kj = 0; kj < k; ++kj) {
                const auto [ow_lo, ow_hi] = valid_range(d, kj, d.width, d.out_w);
                T* dst = col + ((c * k + ki) * k + kj) * d.cols();
                std::fill(dst, dst + d.cols(), T(0));
                for (long long oh = oh_lo; oh < oh_hi; ++oh) {
                    const long long ih = oh * static_cast<long long>(s) - pad + static_cast<long long>(d.geom.dilation * ki);
                    const T* src = x + (c * d.height + static_cast<std::size_t>(ih)) * d.width;
                    T* row = dst + static_cast<std::size_t>(oh) * d.out_w;
                    for (long long ow = ow_lo; ow < ow_hi; ++ow) {
                        const long long iw = ow * static_cast<long long>(s) - pad + static_cast<long long>(d.geom.dilation * kj);
                        row[ow] = src[iw];
                    }
                }
            }
        }
    }
}

template <class T>
void col2im_add(const T* col, const ConvDims& d, T* dx) {
    const std::size_t k = d.kernel, s = d.geom.stride;
    const long long pad = static_cast<long long>(d.geom.padding);
    for (std::size_t c = 0; c < d.channels; ++c) {
        for (std::size_t ki = 0; ki < k; ++ki) {
            const auto [oh_lo, oh_hi] = valid_range(d, ki, d.height, d.out_h);
            for (std::size_t kj = 0; kj < k; ++kj) {
                const auto [ow_lo, ow_hi] = valid_range(d, kj, d.width, d.out_w);
                const T* src = col + ((c * k + ki) * k + kj) * d.cols();
                for (long long oh = oh_lo; oh < oh_hi; ++oh) {
                    const long long ih = oh * static_cast<long long>(s) - pad + static_cast<long long>(d.geom.dilation * ki);
                    T* dst = dx + (c * d.height + static_cast<std::size_t>(ih)) * d.width;
                    const T* row = src + static_cast<std::size_t>(oh) * d.out_w;
                    for (long long ow = ow_lo; ow < ow_hi; ++ow) {
                        const long long iw = ow * static_cast<long long>(s) - pad + static_cast<long long>(d.geom.dilation * kj);
                        dst[iw] += row[ow];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// 2-D convolution with dilated taps and zero padding.
//   input  [N, C_in, H, W]
//   weight [C_out, C_in, k, k]
//   bias   [C_out]
// out[n,o,m,q] = bias[o] + sum_{c,i,j} in[n,c, m*s - p + d*i, q*s - p + d*j] * w[o,c,i,j]
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, const ConvGeometry& geom) {
    if (input.rank() != 4) {
        throw ShapeError("conv2d input must be [N,C,H,W], got " + to_string(input.shape()));
    }
    if (weight.rank() != 4 || weight.dim(2) != weight.dim(3)) {
        throw ShapeError("conv2d weight must be [C_out,C_in,k,k], got " + to_string(weight.shape()));
    }
    if (input.dim(1) != weight.dim(1)) {
        throw ShapeError("conv2d channel mismatch: input " + to_string(input.shape()) + " vs weight " +
                         to_string(weight.shape()));
    }
    if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) {
        throw ShapeError("conv2d bias must be [" + std::to_string(weight.dim(0)) + "], got " + to_string(bias.shape()));
    }
    const std::size_t batch = input.dim(0), c_out = weight.dim(0), k = weight.dim(2);
    detail::ConvDims d{input.dim(1), input.dim(2), input.dim(3), k, 0, 0, geom};
    d.out_h = conv_output_size(d.height, k, geom);
    d.out_w = conv_output_size(d.width, k, geom);
    const std::size_t rows = d.rows(), cols = d.cols();
    const std::size_t in_plane = d.channels * d.height * d.width;

    std::vector<T> out(batch * c_out * cols);
    std::vector<T> col(rows * cols);
    const auto x = input.data();
    const auto w = weight.data();
    const auto b = bias.data();
    for (std::size_t n = 0; n < batch; ++n) {
        detail::im2col(x.data() + n * in_plane, d, col.data());
        T* dst = out.data() + n * c_out * cols;
        for (std::size_t o = 0; o < c_out; ++o) {
            std::fill(dst + o * cols, dst + (o + 1) * cols, b[o]);
        }
        detail::gemm_acc(w.data(), col.data(), dst, c_out, rows, cols);
    }

    return Tensor<T>::make_result(
        {batch, c_out, d.out_h, d.out_w}, std::move(out), "conv2d", {input, weight, bias},
        [xi = input.impl(), wi = weight.impl(), bi = bias.impl(), d, batch, c_out](const detail::TensorImpl<T>& o) {
            const std::size_t rows = d.rows(), cols = d.cols();
            const std::size_t in_plane = d.channels * d.height * d.width;
            std::vector<T> col(rows * cols);
            std::vector<T> dcol;
            if (bi->requires_grad) {
                auto& gb = bi->ensure_grad();
                for (std::size_t n = 0; n < batch; ++n) {
                    for (std::size_t oc = 0; oc < c_out; ++oc) {
                        const T* g = o.grad.data() + (n * c_out + oc) * cols;
                        T acc = T(0);
                        for (std::size_t q = 0; q < cols; ++q) {
                            acc += g[q];
                        }
                        gb[oc] += acc;
                    }
                }
            }
            for (std::size_t n = 0; n < batch; ++n) {
                const T* g_n = o.grad.data() + n * c_out * cols;
                if (wi->requires_grad) {
                    auto& gw = wi->ensure_grad();
                    detail::im2col(xi->data.data() + n * in_plane, d, col.data());
                    for (std::size_t oc = 0; oc < c_out; ++oc) {
                        const T* g = g_n + oc * cols;
                        T* gwrow = gw.data() + oc * rows;
                        for (std::size_t r = 0; r < rows; ++r) {
                            gwrow[r] += detail::dot(g, col.data() + r * cols, cols);
                        }
                    }
                }
                if (xi->requires_grad) {
                    dcol.assign(rows * cols, T(0));
                    detail::gemm_tn_acc(wi->data.data(), g_n, dcol.data(), c_out, rows, cols);
                    detail::col2im_add(dcol.data(), d, xi->ensure_grad().data() + n * in_plane);
                }
            }
        });
}

// Non-overlapping 2x2 max. Ties go to the first element in row-major order,
// which is also where the gradient is routed.
template <class T>
Tensor<T> max_pool2d(const Tensor<T>& input) {
    if (input.rank() != 4) {
        throw ShapeError("max_pool2d input must be [N,C,H,W], got " + to_string(input.shape()));
    }
    const std::size_t planes = input.dim(0) * input.dim(1), h = input.dim(2), w = input.dim(3);
    if (h % 2 != 0 || w % 2 != 0) {
        throw ShapeError("max_pool2d needs even spatial dims, got " + to_string(input.shape()));
    }
    const std::size_t oh = h / 2, ow = w / 2;
    const auto x = input.data();
    std::vector<T> out(planes * oh * ow);
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
                const std::size_t base = (p * h + 2 * i) * w + 2 * j;
                const std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
                std::size_t best = cand[0];
                for (int c = 1; c < 4; ++c) {
                    if (x[cand[c]] > x[best]) {
                        best = cand[c];
                    }
                }
                const std::size_t o = (p * oh + i) * ow + j;
                out[o] = x[best];
                (*argmax)[o] = best;
            }
        }
    }
    return Tensor<T>::make_result({input.dim(0), input.dim(1), oh, ow}, std::move(out), "max_pool2d", {input},
                                  [xi = input.impl(), argmax](const detail::TensorImpl<T>& o) {
                                      auto& g = xi->ensure_grad();
                                      for (std::size_t i = 0; i < o.grad.size(); ++i) {
                                          g[(*argmax)[i]] += o.grad[i];
                                      }
                                  });
}

// Nearest-neighbour x2: every pixel becomes a 2x2 block.
template <class T>
Tensor<T> upsample_nn2(const Tensor<T>& input) {
    if (input.rank() != 4) {
        throw ShapeError("upsample input must be [N,C,H,W], got " + to_string(input.shape()));
    }
    const std::size_t planes = input.dim(0) * input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::size_t oh = 2 * h, ow = 2 * w;
    const auto x = input.data();
    std::vector<T> out(planes * oh * ow);
    for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t i = 0; i < oh; ++i) {
            const T* src = x.data() + (p * h + i / 2) * w;
            T* dst = out.data() + (p * oh + i) * ow;
            for (std::size_t j = 0; j < ow; ++j) {
                dst[j] = src[j / 2];
            }
        }
    }
    return Tensor<T>::make_result({input.dim(0), input.dim(1), oh, ow}, std::move(out), "upsample_nn2", {input},
                                  [xi = input.impl(), planes, h, w](const detail::TensorImpl<T>& o) {
                                      auto& g = xi->ensure_grad();
                                      const std::size_t oh = 2 * h, ow = 2 * w;
                                      for (std::size_t p = 0; p < planes; ++p) {
                                          for (std::size_t i = 0; i < oh; ++i) {
                                              const T* src = o.grad.data() + (p * oh + i) * ow;
                                              T* dst = g.data() + (p * h + i / 2) * w;
                                              for (std::size_t j = 0; j < ow; ++j) {
                                                  dst[j / 2] += src[j];
                                              }
                                          }
                                      }
                                  });
}

enum class Mode { train, eval };

// Inverted dropout. The keep decision for element i is a pure function of
// (seed, i), so identical seeds give identical masks.
template <class T>
Tensor<T> dropout(const Tensor<T>& input, double rate, Mode mode, std::uint64_t seed) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ValueError("dropout rate must be in [0,1), got " + std::to_string(rate));
    }
    if (mode == Mode::eval || rate == 0.0) {
        return input;
    }
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    const auto x = input.data();
    auto factor = std::make_shared<std::vector<T>>(x.size());
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        (*factor)[i] = hash_uniform(seed, i) < rate ? T(0) : keep_scale;
        out[i] = x[i] * (*factor)[i];
    }
    return Tensor<T>::make_result(input.shape(), std::move(out), "dropout", {input},
                                  [xi = input.impl(), factor](const detail::TensorImpl<T>& o) {
                                      auto& g = xi->ensure_grad();
                                      for (std::size_t i = 0; i < g.size(); ++i) {
                                          g[i] += o.grad[i] * (*factor)[i];
                                      }
                                  });
}

// Ordered, duplicate-free mapping from a layer path to its trainable tensor.
template <class T>
class ParamSet {
public:
    using Entry = std::pair<std::string, Tensor<T>>;

    void add(std::string path, Tensor<T> tensor) {
        for (const auto& [p, t] : entries_) {
            if (p == path) {
                throw ValueError("parameter path registered twice: " + path);
            }
            if (t.same_storage(tensor)) {
                throw ValueError("tensor registered under two paths: " + p + " and " + path);
            }
        }
        entries_.emplace_back(std::move(path), std::move(tensor));
    }

    void extend(const ParamSet& other) {
        for (const auto& [p, t] : other) {
            add(p, t);
        }
    }

    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }
    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const Entry& operator[](std::size_t i) const { return entries_.at(i); }
    Entry& operator[](std::size_t i) { return entries_.at(i); }

    const Tensor<T>* find(const std::string& path) const {
        for (const auto& [p, t] : entries_) {
            if (p == path) {
                return &t;
            }
        }
        return nullptr;
    }

    std::size_t total_elements() const {
        std::size_t n = 0;
        for (const auto& [p, t] : entries_) {
            n += t.numel();
        }
        return n;
    }

    void clear_grads() {
        for (auto& [p, t] : entries_) {
            t.clear_grad();
        }
    }

private:
    std::vector<Entry> entries_;
};

// Square-kernel convolution with its own weight and bias leaves.
template <class T>
struct Conv2dLayer {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel_size = 1;
    ConvGeometry geom;
    Tensor<T> weight;
    Tensor<T> bias;

    Conv2dLayer() = default;

    // He-uniform initialisation scaled for a leaky ReLU of the given slope.
    Conv2dLayer(std::size_t in, std::size_t out, std::size_t k, ConvGeometry g, Rng& rng, double slope = 0.0)
        : in_channels(in), out_channels(out), kernel_size(k), geom(g) {
        if (in == 0 || out == 0 || k == 0) {
            throw ValueError("convolution channels and kernel size must be positive");
        }
        const double fan_in = static_cast<double>(in * k * k);
        const double bound = std::sqrt(6.0 / ((1.0 + slope * slope) * fan_in));
        std::vector<T> w(out * in * k * k);
        for (auto& v : w) {
            v = static_cast<T>(rng.uniform(-bound, bound));
        }
        weight = Tensor<T>({out, in, k, k}, std::move(w), true);
        bias = Tensor<T>({out}, T(0), true);
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, geom); }

    void register_params(ParamSet<T>& params, const std::string& prefix) const {
        params.add(prefix + "/weight", weight);
        params.add(prefix + "/bias", bias);
    }
};

// Padding that preserves spatial size at stride 1 (extent is odd).
inline std::size_t same_padding(std::size_t kernel_size, std::size_t dilation) {
    return effective_kernel_extent(static_cast<long long>(kernel_size), static_cast<long long>(dilation)) / 2;
}

}  // namespace swgan
