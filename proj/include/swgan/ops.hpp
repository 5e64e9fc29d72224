// SPDX-License-Identifier: Apache-2.0
//
// Differentiable element-wise, reduction and matrix ops.
#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "swgan/tensor.hpp"

namespace swgan {

// Numpy-style broadcast (right-aligned, size-1 axes stretch).
inline Shape broadcast_shapes(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw ShapeError("shapes " + to_string(a) + " and " + to_string(b) + " are not broadcast-compatible");
        }
        out[i] = da == 1 ? db : da;
    }
    return out;
}

// For every element of `dst` (row-major), the flat offset of the element of
// `src` it reads when `src` is broadcast to `dst`.
inline std::vector<std::size_t> broadcast_offsets(const Shape& src, const Shape& dst) {
    const std::size_t rank = dst.size();
    const std::size_t lead = rank - src.size();
    std::vector<std::size_t> stride(rank, 0);
    std::size_t s = 1;
    for (std::size_t i = src.size(); i-- > 0;) {
        stride[lead + i] = src[i] == 1 ? 0 : s;
        s *= src[i];
    }
    std::vector<std::size_t> offsets(shape_numel(dst));
    std::vector<std::size_t> idx(rank, 0);
    std::size_t off = 0;
    for (std::size_t n = 0; n < offsets.size(); ++n) {
        offsets[n] = off;
        for (std::size_t ax = rank; ax-- > 0;) {
            if (++idx[ax] < dst[ax]) {
                off += stride[ax];
                break;
            }
            off -= stride[ax] * (dst[ax] - 1);
            idx[ax] = 0;
        }
    }
    return offsets;
}

namespace detail {

// f(x, y) with partials dfdx(x, y), dfdy(x, y).
template <class T, class F, class Dx, class Dy>
Tensor<T> binary_op(const char* name, const Tensor<T>& a, const Tensor<T>& b, F f, Dx dfdx, Dy dfdy) {
    const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
    const std::size_t n = shape_numel(out_shape);
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<T> out(n);

    if (a.shape() == out_shape && b.shape() == out_shape) {
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = f(ad[i], bd[i]);
        }
        return Tensor<T>::make_result(out_shape, std::move(out), name, {a, b},
                                      [ai = a.impl(), bi = b.impl(), dfdx, dfdy](const TensorImpl<T>& o) {
                                          const std::size_t n = o.data.size();
                                          if (ai->requires_grad) {
                                              auto& g = ai->ensure_grad();
                                              for (std::size_t i = 0; i < n; ++i) {
                                                  g[i] += o.grad[i] * dfdx(ai->data[i], bi->data[i]);
                                              }
                                          }
                                          if (bi->requires_grad) {
                                              auto& g = bi->ensure_grad();
                                              for (std::size_t i = 0; i < n; ++i) {
                                                  g[i] += o.grad[i] * dfdy(ai->data[i], bi->data[i]);
                                              }
                                          }
                                      });
    }

    auto oa = std::make_shared<std::vector<std::size_t>>(broadcast_offsets(a.shape(), out_shape));
    auto ob = std::make_shared<std::vector<std::size_t>>(broadcast_offsets(b.shape(), out_shape));
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = f(ad[(*oa)[i]], bd[(*ob)[i]]);
    }
    return Tensor<T>::make_result(out_shape, std::move(out), name, {a, b},
                                  [ai = a.impl(), bi = b.impl(), oa, ob, dfdx, dfdy](const TensorImpl<T>& o) {
                                      const std::size_t n = o.data.size();
                                      if (ai->requires_grad) {
                                          auto& g = ai->ensure_grad();
                                          for (std::size_t i = 0; i < n; ++i) {
                                              const T x = ai->data[(*oa)[i]];
                                              const T y = bi->data[(*ob)[i]];
                                              g[(*oa)[i]] += o.grad[i] * dfdx(x, y);
                                          }
                                      }
                                      if (bi->requires_grad) {
                                          auto& g = bi->ensure_grad();
                                          for (std::size_t i = 0; i < n; ++i) {
                                              const T x = ai->data[(*oa)[i]];
                                              const T y = bi->data[(*ob)[i]];
                                              g[(*ob)[i]] += o.grad[i] * dfdy(x, y);
                                          }
                                      }
                                  });
}

// y = f(x) with derivative dfdx(x, y).
template <class T, class F, class D>
Tensor<T> unary_op(const char* name, const Tensor<T>& a, F f, D dfdx) {
    const auto ad = a.data();
    std::vector<T> out(ad.size());
    for (std::size_t i = 0; i < ad.size(); ++i) {
        out[i] = f(ad[i]);
    }
    return Tensor<T>::make_result(a.shape(), std::move(out), name, {a},
                                  [ai = a.impl(), dfdx](const TensorImpl<T>& o) {
                                      auto& g = ai->ensure_grad();
                                      for (std::size_t i = 0; i < g.size(); ++i) {
                                          g[i] += o.grad[i] * dfdx(ai->data[i], o.data[i]);
                                      }
                                  });
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op<T>(
        "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op<T>(
        "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op<T>(
        "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    return detail::unary_op<T>(
        "scale", a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <class T>
Tensor<T> neg(const Tensor<T>& a) {
    return detail::unary_op<T>("neg", a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

// Derivative at exactly 0 takes the negative-side slope.
template <class T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
    return detail::unary_op<T>(
        "leaky_relu", a, [slope](T x) { return x > T(0) ? x : slope * x; },
        [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
    return leaky_relu(a, T(0));
}

template <class T>
Tensor<T> tanh(const Tensor<T>& a) {
    return detail::unary_op<T>(
        "tanh", a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

// abs'(0) is 0.
template <class T>
Tensor<T> abs(const Tensor<T>& a) {
    return detail::unary_op<T>(
        "abs", a, [](T x) { return std::abs(x); },
        [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <class T>
Tensor<T> square(const Tensor<T>& a) {
    return detail::unary_op<T>("square", a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("cannot reshape " + to_string(a.shape()) + " into " + to_string(shape));
    }
    std::vector<T> out(a.data().begin(), a.data().end());
    return Tensor<T>::make_result(std::move(shape), std::move(out), "reshape", {a},
                                  [ai = a.impl()](const detail::TensorImpl<T>& o) {
                                      auto& g = ai->ensure_grad();
                                      for (std::size_t i = 0; i < g.size(); ++i) {
                                          g[i] += o.grad[i];
                                      }
                                  });
}

namespace detail {

inline Shape reduced_shape(const Shape& shape, const std::optional<std::vector<std::size_t>>& axes) {
    Shape out = shape;
    if (!axes) {
        std::fill(out.begin(), out.end(), 1);
        return out;
    }
    std::vector<bool> seen(shape.size(), false);
    for (auto ax : *axes) {
        if (ax >= shape.size()) {
            throw ValueError("reduction axis " + std::to_string(ax) + " is invalid for shape " + to_string(shape));
        }
        if (seen[ax]) {
            throw ValueError("reduction axis " + std::to_string(ax) + " given twice");
        }
        seen[ax] = true;
        out[ax] = 1;
    }
    return out;
}

template <class T>
Tensor<T> reduce(const char* name, const Tensor<T>& a, const std::optional<std::vector<std::size_t>>& axes,
                 bool mean) {
    const Shape out_shape = reduced_shape(a.shape(), axes);
    const std::size_t out_n = shape_numel(out_shape);
    const std::size_t count = out_n == 0 ? 0 : a.numel() / out_n;
    if (mean && count == 0) {
        throw ValueError("mean over an empty extent");
    }
    auto map = std::make_shared<std::vector<std::size_t>>(broadcast_offsets(out_shape, a.shape()));
    std::vector<T> out(out_n, T(0));
    const auto ad = a.data();
    for (std::size_t i = 0; i < ad.size(); ++i) {
        out[(*map)[i]] += ad[i];
    }
    const T factor = mean ? T(1) / static_cast<T>(count) : T(1);
    if (mean) {
        for (auto& v : out) {
            v /= static_cast<T>(count);
        }
    }
    return Tensor<T>::make_result(out_shape, std::move(out), name, {a},
                                  [ai = a.impl(), map, factor](const TensorImpl<T>& o) {
                                      auto& g = ai->ensure_grad();
                                      for (std::size_t i = 0; i < g.size(); ++i) {
                                          g[i] += o.grad[(*map)[i]] * factor;
                                      }
                                  });
}

}  // namespace detail

// Reduced axes are kept with extent 1; no axes means all of them.
template <class T>
Tensor<T> reduce_sum(const Tensor<T>& a, std::optional<std::vector<std::size_t>> axes = std::nullopt) {
    return detail::reduce<T>("reduce_sum", a, axes, false);
}

template <class T>
Tensor<T> reduce_mean(const Tensor<T>& a, std::optional<std::vector<std::size_t>> axes = std::nullopt) {
    return detail::reduce<T>("reduce_mean", a, axes, true);
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul needs [n,k]x[k,m], got " + to_string(a.shape()) + " x " + to_string(b.shape()));
    }
    const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<T> out(n * m, T(0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const T av = ad[i * k + p];
            for (std::size_t j = 0; j < m; ++j) {
                out[i * m + j] += av * bd[p * m + j];
            }
        }
    }
    return Tensor<T>::make_result({n, m}, std::move(out), "matmul", {a, b},
                                  [ai = a.impl(), bi = b.impl(), n, k, m](const detail::TensorImpl<T>& o) {
                                      if (ai->requires_grad) {
                                          auto& g = ai->ensure_grad();
                                          for (std::size_t i = 0; i < n; ++i) {
                                              for (std::size_t p = 0; p < k; ++p) {
                                                  T acc = T(0);
                                                  for (std::size_t j = 0; j < m; ++j) {
                                                      acc += o.grad[i * m + j] * bi->data[p * m + j];
                                                  }
                                                  g[i * k + p] += acc;
                                              }
                                          }
                                      }
                                      if (bi->requires_grad) {
                                          auto& g = bi->ensure_grad();
                                          for (std::size_t i = 0; i < n; ++i) {
                                              for (std::size_t p = 0; p < k; ++p) {
                                                  const T av = ai->data[i * k + p];
                                                  for (std::size_t j = 0; j < m; ++j) {
                                                      g[p * m + j] += av * o.grad[i * m + j];
                                                  }
                                              }
                                          }
                                      }
                                  });
}

template <class T>
bool all_finite(const Tensor<T>& t) {
    for (T v : t.data()) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

}  // namespace swgan
