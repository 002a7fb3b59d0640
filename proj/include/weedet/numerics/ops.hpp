// Copyright 2026 The Weedet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <type_traits>
#include <vector>

#include "weedet/numerics/autograd.hpp"
#include "weedet/numerics/tensor.hpp"

namespace weedet::nn {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// C[M,N] (+)= op(A) * op(B). A is stored [M,K] (or [K,M] when ta), B is
// stored [K,N] (or [N,K] when tb).
template <typename T>
void gemm(bool ta, bool tb, int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
  Eigen::Map<const RowMat<T>> a(A, ta ? K : M, ta ? M : K);
  Eigen::Map<const RowMat<T>> b(B, tb ? N : K, tb ? K : N);
  Eigen::Map<RowMat<T>> c(C, M, N);
  if (!accumulate) c.setZero();
  if (!ta && !tb)
    c.noalias() += a * b;
  else if (ta && !tb)
    c.noalias() += a.transpose() * b;
  else if (!ta && tb)
    c.noalias() += a * b.transpose();
  else
    c.noalias() += a.transpose() * b.transpose();
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

template <typename T>
void require_same(const Var<T>& a, const Var<T>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
T stable_softplus(T x) {
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

// Elementwise unary op; df(x, y) is the derivative given input and output.
template <typename T, typename F, typename DF>
Var<T> unary(const Var<T>& x, F f, DF df) {
  Tensor<T> out(x.shape());
  const T* xv = x.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = f(xv[i]);
  auto px = x.node();
  Tensor<T> keep = out;
  return make_op<T>(std::move(out), {x}, [px, keep = std::move(keep), df](const Tensor<T>& g) {
    auto& gx = px->grad_buffer();
    const T* xv = px->value.data();
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * df(xv[i], keep[i]);
  });
}

}  // namespace detail

template <typename T>
Var<T> constant(Tensor<T> value) {
  return Var<T>(std::move(value), false);
}

template <typename T>
Var<T> detach(const Var<T>& x) {
  return Var<T>(x.value(), false);
}

// a + b. b may equal a's shape or a trailing suffix of it (broadcast over
// the leading dimensions).
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  bool suffix = sb.size() <= sa.size() && std::equal(sb.rbegin(), sb.rend(), sa.rbegin());
  detail::require(suffix, "add: shape " + shape_str(sb) + " does not broadcast to " + shape_str(sa));
  const std::size_t nb = b.numel();
  Tensor<T> out = a.value();
  const T* bv = b.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[nb ? i % nb : 0];
  auto pa = a.node(), pb = b.node();
  return make_op<T>(std::move(out), {a, b}, [pa, pb, nb](const Tensor<T>& g) {
    if (pa->requires_grad) {
      auto& ga = pa->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (pb->requires_grad) {
      auto& gb = pb->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i % nb] += g[i];
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require_same(a, b, "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  auto pa = a.node(), pb = b.node();
  return make_op<T>(std::move(out), {a, b}, [pa, pb](const Tensor<T>& g) {
    if (pa->requires_grad) {
      auto& ga = pa->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (pb->requires_grad) {
      auto& gb = pb->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same(a, b, "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  auto pa = a.node(), pb = b.node();
  return make_op<T>(std::move(out), {a, b}, [pa, pb](const Tensor<T>& g) {
    if (pa->requires_grad) {
      auto& ga = pa->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      auto& gb = pb->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * pa->value[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= s;
  auto pa = a.node();
  return make_op<T>(std::move(out), {a}, [pa, s](const Tensor<T>& g) {
    auto& ga = pa->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * s;
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T s = T(0);
  for (T v : a.value().values()) s += v;
  auto pa = a.node();
  return make_op<T>(Tensor<T>::scalar(s), {a}, [pa](const Tensor<T>& g) {
    auto& ga = pa->grad_buffer();
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  detail::require(a.numel() > 0, "mean of empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

// Mean of squared elementwise differences.
template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  detail::require_same(a, b, "mse");
  detail::require(a.numel() > 0, "mse of empty tensors");
  const std::size_t n = a.numel();
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    T d = a.value()[i] - b.value()[i];
    s += d * d;
  }
  auto pa = a.node(), pb = b.node();
  return make_op<T>(Tensor<T>::scalar(s / static_cast<T>(n)), {a, b}, [pa, pb, n](const Tensor<T>& g) {
    T k = T(2) * g[0] / static_cast<T>(n);
    if (pa->requires_grad) {
      auto& ga = pa->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) ga[i] += k * (pa->value[i] - pb->value[i]);
    }
    if (pb->requires_grad) {
      auto& gb = pb->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) gb[i] -= k * (pa->value[i] - pb->value[i]);
    }
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return detail::unary(x, [](T v) { return detail::stable_sigmoid(v); },
                       [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> silu(const Var<T>& x) {
  return detail::unary(
      x, [](T v) { return v * detail::stable_sigmoid(v); },
      [](T v, T) {
        T s = detail::stable_sigmoid(v);
        return s * (T(1) + v * (T(1) - s));
      });
}

// Exact (erf) GELU.
template <typename T>
Var<T> gelu(const Var<T>& x) {
  return detail::unary(
      x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>)); },
      [](T v, T) {
        T cdf = T(0.5) * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>));
        T pdf = std::exp(T(-0.5) * v * v) / std::sqrt(T(2) * std::numbers::pi_v<T>);
        return cdf + v * pdf;
      });
}

template <typename T>
Var<T> softplus(const Var<T>& x) {
  return detail::unary(x, [](T v) { return detail::stable_softplus(v); },
                       [](T v, T) { return detail::stable_sigmoid(v); });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  auto px = x.node();
  return make_op<T>(std::move(out), {x}, [px](const Tensor<T>& g) {
    auto& gx = px->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
  });
}

namespace detail {

inline std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
    st[static_cast<std::size_t>(i)] = st[static_cast<std::size_t>(i) + 1] * static_cast<std::size_t>(s[static_cast<std::size_t>(i) + 1]);
  return st;
}

// For every output position of permute(x, perm), the flat source index.
inline std::vector<std::size_t> permute_index(const Shape& in, const std::vector<int>& perm) {
  const std::size_t r = in.size();
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) out[i] = in[static_cast<std::size_t>(perm[i])];
  auto in_st = strides_of(in);
  std::vector<std::size_t> src_st(r);
  for (std::size_t i = 0; i < r; ++i) src_st[i] = in_st[static_cast<std::size_t>(perm[i])];
  std::vector<std::size_t> idx(shape_numel(out));
  std::vector<int> counter(r, 0);
  std::size_t src = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    idx[k] = src;
    for (int d = static_cast<int>(r) - 1; d >= 0; --d) {
      auto du = static_cast<std::size_t>(d);
      if (++counter[du] < out[du]) {
        src += src_st[du];
        break;
      }
      src -= src_st[du] * static_cast<std::size_t>(out[du] - 1);
      counter[du] = 0;
    }
  }
  return idx;
}

}  // namespace detail

template <typename T>
Var<T> permute(const Var<T>& x, const std::vector<int>& perm) {
  const Shape& in = x.shape();
  detail::require(perm.size() == in.size(), "permute: rank mismatch");
  std::vector<char> seen(perm.size(), 0);
  for (int p : perm) {
    detail::require(p >= 0 && p < static_cast<int>(perm.size()) && !seen[static_cast<std::size_t>(p)],
                    "permute: invalid permutation");
    seen[static_cast<std::size_t>(p)] = 1;
  }
  Shape out_shape(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out_shape[i] = in[static_cast<std::size_t>(perm[i])];
  auto idx = std::make_shared<std::vector<std::size_t>>(detail::permute_index(in, perm));
  Tensor<T> out(out_shape);
  const T* xv = x.value().data();
  for (std::size_t k = 0; k < idx->size(); ++k) out[k] = xv[(*idx)[k]];
  auto px = x.node();
  return make_op<T>(std::move(out), {x}, [px, idx](const Tensor<T>& g) {
    auto& gx = px->grad_buffer();
    for (std::size_t k = 0; k < idx->size(); ++k) gx[(*idx)[k]] += g[k];
  });
}

// x[..., start:start+len, ...] along `axis`.
template <typename T>
Var<T> slice(const Var<T>& x, int axis, int start, int len) {
  const Shape& s = x.shape();
  if (axis < 0) axis += x.rank();
  detail::require(axis >= 0 && axis < x.rank(), "slice: bad axis");
  const int ext = s[static_cast<std::size_t>(axis)];
  detail::require(start >= 0 && len >= 0 && start + len <= ext, "slice: range out of bounds");
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
  Shape os = s;
  os[static_cast<std::size_t>(axis)] = len;
  Tensor<T> out(os);
  const T* xv = x.value().data();
  const std::size_t chunk = static_cast<std::size_t>(len) * inner;
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(xv + (o * static_cast<std::size_t>(ext) + static_cast<std::size_t>(start)) * inner, chunk,
                out.data() + o * chunk);
  auto px = x.node();
  return make_op<T>(std::move(out), {x}, [px, outer, inner, ext, start, chunk](const Tensor<T>& g) {
    auto& gx = px->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      T* dst = gx.data() + (o * static_cast<std::size_t>(ext) + static_cast<std::size_t>(start)) * inner;
      const T* src = g.data() + o * chunk;
      for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, int axis) {
  detail::require(!xs.empty(), "concat of nothing");
  Shape s = xs[0].shape();
  if (axis < 0) axis += static_cast<int>(s.size());
  detail::require(axis >= 0 && axis < static_cast<int>(s.size()), "concat: bad axis");
  int total = 0;
  for (const auto& x : xs) {
    Shape a = x.shape(), b = s;
    detail::require(a.size() == b.size(), "concat: rank mismatch");
    a[static_cast<std::size_t>(axis)] = b[static_cast<std::size_t>(axis)] = 0;
    detail::require(a == b, "concat: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(s));
    total += x.shape()[static_cast<std::size_t>(axis)];
  }
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) inner *= static_cast<std::size_t>(s[i]);
  Shape os = s;
  os[static_cast<std::size_t>(axis)] = total;
  Tensor<T> out(os);
  std::vector<std::size_t> widths;
  const std::size_t row = static_cast<std::size_t>(total) * inner;
  std::size_t offset = 0;
  for (const auto& x : xs) {
    std::size_t w = static_cast<std::size_t>(x.shape()[static_cast<std::size_t>(axis)]) * inner;
    widths.push_back(w);
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(x.value().data() + o * w, w, out.data() + o * row + offset);
    offset += w;
  }
  std::vector<std::shared_ptr<Node<T>>> nodes;
  for (const auto& x : xs) nodes.push_back(x.node());
  return make_op<T>(std::move(out), xs, [nodes, widths, outer, row](const Tensor<T>& g) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (nodes[k]->requires_grad) {
        auto& gx = nodes[k]->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < widths[k]; ++i) gx[o * widths[k] + i] += g[o * row + offset + i];
      }
      offset += widths[k];
    }
  });
}

// y = x W^T + b over the last dimension. W is [out, in]; b may be empty.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const std::type_identity_t<Var<T>>* b = nullptr) {
  detail::require(w.rank() == 2, "linear: weight must be 2-D");
  const int in = w.dim(1), outf = w.dim(0);
  detail::require(x.rank() >= 1 && x.dim(-1) == in,
                  "linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  if (b) detail::require(b->rank() == 1 && b->dim(0) == outf, "linear: bias shape");
  const int rows = static_cast<int>(x.numel() / static_cast<std::size_t>(in));
  Shape os = x.shape();
  os.back() = outf;
  Tensor<T> out(os);
  detail::gemm<T>(false, true, rows, outf, in, x.value().data(), w.value().data(), out.data(), false);
  if (b) {
    const T* bv = b->value().data();
    for (int r = 0; r < rows; ++r)
      for (int o = 0; o < outf; ++o) out[static_cast<std::size_t>(r) * outf + o] += bv[o];
  }
  auto px = x.node(), pw = w.node();
  std::shared_ptr<Node<T>> pb = b ? b->node() : nullptr;
  std::vector<Var<T>> inputs{x, w};
  if (b) inputs.push_back(*b);
  return make_op<T>(std::move(out), inputs, [px, pw, pb, rows, in, outf](const Tensor<T>& g) {
    if (px->requires_grad)
      detail::gemm<T>(false, false, rows, in, outf, g.data(), pw->value.data(), px->grad_buffer().data(), true);
    if (pw->requires_grad)
      detail::gemm<T>(true, false, outf, in, rows, g.data(), px->value.data(), pw->grad_buffer().data(), true);
    if (pb && pb->requires_grad) {
      auto& gb = pb->grad_buffer();
      for (int r = 0; r < rows; ++r)
        for (int o = 0; o < outf; ++o) gb[static_cast<std::size_t>(o)] += g[static_cast<std::size_t>(r) * outf + o];
    }
  });
}

// Batched matmul over the leading dimension: out[b] = op(a[b]) * op(c[b]).
template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& c, bool trans_a = false, bool trans_c = false) {
  detail::require(a.rank() == 3 && c.rank() == 3 && a.dim(0) == c.dim(0), "bmm: expects [B,*,*] operands");
  const int B = a.dim(0);
  const int M = trans_a ? a.dim(2) : a.dim(1);
  const int K = trans_a ? a.dim(1) : a.dim(2);
  const int K2 = trans_c ? c.dim(2) : c.dim(1);
  const int N = trans_c ? c.dim(1) : c.dim(2);
  detail::require(K == K2, "bmm: inner dimension mismatch " + shape_str(a.shape()) + " x " + shape_str(c.shape()));
  Tensor<T> out(Shape{B, M, N});
  const std::size_t sa = static_cast<std::size_t>(M) * K, sc = static_cast<std::size_t>(K) * N,
                    so = static_cast<std::size_t>(M) * N;
  for (int b = 0; b < B; ++b)
    detail::gemm<T>(trans_a, trans_c, M, N, K, a.value().data() + b * sa, c.value().data() + b * sc,
                    out.data() + b * so, false);
  auto pa = a.node(), pc = c.node();
  return make_op<T>(std::move(out), {a, c}, [=](const Tensor<T>& g) {
    for (int b = 0; b < B; ++b) {
      const T* gb = g.data() + b * so;
      const T* av = pa->value.data() + b * sa;
      const T* cv = pc->value.data() + b * sc;
      if (pa->requires_grad) {
        T* ga = pa->grad_buffer().data() + b * sa;
        if (!trans_a)  // dA[M,K] = G op(C)^T
          detail::gemm<T>(false, !trans_c, M, K, N, gb, cv, ga, true);
        else  // dA[K,M] = op(C) G^T
          detail::gemm<T>(trans_c, true, K, M, N, cv, gb, ga, true);
      }
      if (pc->requires_grad) {
        T* gc = pc->grad_buffer().data() + b * sc;
        if (!trans_c)  // dC[K,N] = op(A)^T G
          detail::gemm<T>(!trans_a, false, K, N, M, av, gb, gc, true);
        else  // dC[N,K] = G^T op(A)
          detail::gemm<T>(true, trans_a, N, K, M, gb, av, gc, true);
      }
    }
  });
}

struct Conv2dParams {
  int stride = 1;
  int padding = 0;
};

namespace detail {

template <typename T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho, int Wo, T* cols) {
  const std::size_t plane = static_cast<std::size_t>(Ho) * Wo;
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < kh; ++i)
      for (int j = 0; j < kw; ++j) {
        T* dst = cols + (static_cast<std::size_t>(c) * kh * kw + static_cast<std::size_t>(i) * kw + j) * plane;
        for (int oy = 0; oy < Ho; ++oy) {
          int y = oy * stride - pad + i;
          T* row = dst + static_cast<std::size_t>(oy) * Wo;
          if (y < 0 || y >= H) {
            std::fill_n(row, Wo, T(0));
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(c) * H + y) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            int xx = ox * stride - pad + j;
            row[ox] = (xx >= 0 && xx < W) ? src[xx] : T(0);
          }
        }
      }
}

template <typename T>
void col2im(const T* cols, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho, int Wo, T* x) {
  const std::size_t plane = static_cast<std::size_t>(Ho) * Wo;
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < kh; ++i)
      for (int j = 0; j < kw; ++j) {
        const T* src = cols + (static_cast<std::size_t>(c) * kh * kw + static_cast<std::size_t>(i) * kw + j) * plane;
        for (int oy = 0; oy < Ho; ++oy) {
          int y = oy * stride - pad + i;
          if (y < 0 || y >= H) continue;
          T* dst = x + (static_cast<std::size_t>(c) * H + y) * W;
          const T* row = src + static_cast<std::size_t>(oy) * Wo;
          for (int ox = 0; ox < Wo; ++ox) {
            int xx = ox * stride - pad + j;
            if (xx >= 0 && xx < W) dst[xx] += row[ox];
          }
        }
      }
}

}  // namespace detail

// Cross-correlation of x[N,C,H,W] with weight[O,C,kh,kw]; bias[O] optional.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const std::type_identity_t<Var<T>>* bias = nullptr, Conv2dParams p = {}) {
  detail::require(x.rank() == 4 && weight.rank() == 4, "conv2d: expects 4-D input and weight");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int O = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  detail::require(weight.dim(1) == C, "conv2d: channel mismatch " + shape_str(x.shape()) + " vs " +
                                          shape_str(weight.shape()));
  detail::require(p.stride >= 1 && p.padding >= 0, "conv2d: bad stride/padding");
  const int Ho = (H + 2 * p.padding - kh) / p.stride + 1;
  const int Wo = (W + 2 * p.padding - kw) / p.stride + 1;
  detail::require(H + 2 * p.padding >= kh && W + 2 * p.padding >= kw && Ho >= 1 && Wo >= 1,
                  "conv2d: kernel larger than padded input");
  if (bias) detail::require(bias->rank() == 1 && bias->dim(0) == O, "conv2d: bias shape");
  const int K = C * kh * kw;
  const std::size_t plane = static_cast<std::size_t>(Ho) * Wo;
  const std::size_t in_sz = static_cast<std::size_t>(C) * H * W;
  const bool direct = kh == 1 && kw == 1 && p.stride == 1 && p.padding == 0;
  auto cols = std::make_shared<std::vector<T>>();
  if (!direct) cols->resize(static_cast<std::size_t>(N) * K * plane);
  Tensor<T> out(Shape{N, O, Ho, Wo});
  for (int n = 0; n < N; ++n) {
    const T* xn = x.value().data() + n * in_sz;
    const T* cn = xn;
    if (!direct) {
      T* dst = cols->data() + static_cast<std::size_t>(n) * K * plane;
      detail::im2col(xn, C, H, W, kh, kw, p.stride, p.padding, Ho, Wo, dst);
      cn = dst;
    }
    T* on = out.data() + static_cast<std::size_t>(n) * O * plane;
    detail::gemm<T>(false, false, O, static_cast<int>(plane), K, weight.value().data(), cn, on, false);
    if (bias)
      for (int o = 0; o < O; ++o) {
        T bv = bias->value()[static_cast<std::size_t>(o)];
        T* row = on + static_cast<std::size_t>(o) * plane;
        for (std::size_t i = 0; i < plane; ++i) row[i] += bv;
      }
  }
  if (!grad_enabled()) cols.reset();
  auto px = x.node(), pw = weight.node();
  std::shared_ptr<Node<T>> pb = bias ? bias->node() : nullptr;
  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return make_op<T>(std::move(out), inputs, [=](const Tensor<T>& g) {
    std::vector<T> dcols;
    if (px->requires_grad && !direct) dcols.resize(static_cast<std::size_t>(K) * plane);
    for (int n = 0; n < N; ++n) {
      const T* gn = g.data() + static_cast<std::size_t>(n) * O * plane;
      const T* cn = direct ? px->value.data() + n * in_sz : cols->data() + static_cast<std::size_t>(n) * K * plane;
      if (pw->requires_grad)
        detail::gemm<T>(false, true, O, K, static_cast<int>(plane), gn, cn, pw->grad_buffer().data(), true);
      if (px->requires_grad) {
        T* gx = px->grad_buffer().data() + n * in_sz;
        if (direct) {
          detail::gemm<T>(true, false, K, static_cast<int>(plane), O, pw->value.data(), gn, gx, true);
        } else {
          detail::gemm<T>(true, false, K, static_cast<int>(plane), O, pw->value.data(), gn, dcols.data(), false);
          detail::col2im(dcols.data(), C, H, W, kh, kw, p.stride, p.padding, Ho, Wo, gx);
        }
      }
      if (pb && pb->requires_grad) {
        auto& gb = pb->grad_buffer();
        for (int o = 0; o < O; ++o) {
          const T* row = gn + static_cast<std::size_t>(o) * plane;
          T s = T(0);
          for (std::size_t i = 0; i < plane; ++i) s += row[i];
          gb[static_cast<std::size_t>(o)] += s;
        }
      }
    }
  });
}

template <typename T>
Var<T> max_pool2d(const Var<T>& x, int kernel, int stride) {
  detail::require(x.rank() == 4, "max_pool2d: expects [N,C,H,W]");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  detail::require(kernel >= 1 && stride >= 1 && H >= kernel && W >= kernel, "max_pool2d: bad window");
  const int Ho = (H - kernel) / stride + 1, Wo = (W - kernel) / stride + 1;
  Tensor<T> out(Shape{N, C, Ho, Wo});
  auto arg = std::make_shared<std::vector<std::size_t>>(out.numel());
  const T* xv = x.value().data();
  std::size_t k = 0;
  for (int nc = 0; nc < N * C; ++nc)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox, ++k) {
        std::size_t best = 0;
        T bv = -std::numeric_limits<T>::infinity();
        for (int i = 0; i < kernel; ++i)
          for (int j = 0; j < kernel; ++j) {
            std::size_t idx = (static_cast<std::size_t>(nc) * H + oy * stride + i) * W + ox * stride + j;
            if (xv[idx] > bv) {
              bv = xv[idx];
              best = idx;
            }
          }
        out[k] = bv;
        (*arg)[k] = best;
      }
  auto px = x.node();
  return make_op<T>(std::move(out), {x}, [px, arg](const Tensor<T>& g) {
    auto& gx = px->grad_buffer();
    for (std::size_t k = 0; k < g.numel(); ++k) gx[(*arg)[k]] += g[k];
  });
}

template <typename T>
Var<T> avg_pool2d(const Var<T>& x, int kernel, int stride) {
  detail::require(x.rank() == 4, "avg_pool2d: expects [N,C,H,W]");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  detail::require(kernel >= 1 && stride >= 1 && H >= kernel && W >= kernel, "avg_pool2d: bad window");
  const int Ho = (H - kernel) / stride + 1, Wo = (W - kernel) / stride + 1;
  const T inv = T(1) / static_cast<T>(kernel * kernel);
  Tensor<T> out(Shape{N, C, Ho, Wo});
  const T* xv = x.value().data();
  std::size_t k = 0;
  for (int nc = 0; nc < N * C; ++nc)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox, ++k) {
        T s = T(0);
        for (int i = 0; i < kernel; ++i)
          for (int j = 0; j < kernel; ++j)
            s += xv[(static_cast<std::size_t>(nc) * H + oy * stride + i) * W + ox * stride + j];
        out[k] = s * inv;
      }
  auto px = x.node();
  return make_op<T>(std::move(out), {x}, [=](const Tensor<T>& g) {
    auto& gx = px->grad_buffer();
    std::size_t k = 0;
    for (int nc = 0; nc < N * C; ++nc)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox, ++k)
          for (int i = 0; i < kernel; ++i)
            for (int j = 0; j < kernel; ++j)
              gx[(static_cast<std::size_t>(nc) * H + oy * stride + i) * W + ox * stride + j] += g[k] * inv;
  });
}

template <typename T>
Var<T> upsample_nearest(const Var<T>& x, int factor) {
  detail::require(x.rank() == 4 && factor >= 1, "upsample_nearest: expects [N,C,H,W] and factor >= 1");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = H * factor, Wo = W * factor;
  Tensor<T> out(Shape{N, C, Ho, Wo});
  const T* xv = x.value().data();
  for (int nc = 0; nc < N * C; ++nc)
    for (int y = 0; y < Ho; ++y)
      for (int xx = 0; xx < Wo; ++xx)
        out[(static_cast<std::size_t>(nc) * Ho + y) * Wo + xx] =
            xv[(static_cast<std::size_t>(nc) * H + y / factor) * W + xx / factor];
  auto px = x.node();
  return make_op<T>(std::move(out), {x}, [=](const Tensor<T>& g) {
    auto& gx = px->grad_buffer();
    for (int nc = 0; nc < N * C; ++nc)
      for (int y = 0; y < Ho; ++y)
        for (int xx = 0; xx < Wo; ++xx)
          gx[(static_cast<std::size_t>(nc) * H + y / factor) * W + xx / factor] +=
              g[(static_cast<std::size_t>(nc) * Ho + y) * Wo + xx];
  });
}

// Normalizes over the last dimension, then applies gamma * xhat + beta.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
  const int D = x.dim(-1);
  detail::require(gamma.rank() == 1 && gamma.dim(0) == D && beta.rank() == 1 && beta.dim(0) == D,
                  "layer_norm: affine parameter shape");
  const std::size_t rows = x.numel() / static_cast<std::size_t>(D);
  Tensor<T> out(x.shape());
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  const T* xv = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv + r * D;
    T mu = T(0);
    for (int i = 0; i < D; ++i) mu += row[i];
    mu /= static_cast<T>(D);
    T var = T(0);
    for (int i = 0; i < D; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<T>(D);
    T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (int i = 0; i < D; ++i) {
      T h = (row[i] - mu) * rs;
      (*xhat)[r * D + i] = h;
      out[r * D + i] = h * gamma.value()[static_cast<std::size_t>(i)] + beta.value()[static_cast<std::size_t>(i)];
    }
  }
  auto px = x.node(), pg = gamma.node(), pb = beta.node();
  return make_op<T>(std::move(out), {x, gamma, beta}, [=](const Tensor<T>& g) {
    std::vector<T> dh(static_cast<std::size_t>(D));
    for (std::size_t r = 0; r < rows; ++r) {
      const T* gr = g.data() + r * D;
      const T* hr = xhat->data() + r * D;
      if (pg->requires_grad) {
        auto& gg = pg->grad_buffer();
        for (int i = 0; i < D; ++i) gg[static_cast<std::size_t>(i)] += gr[i] * hr[i];
      }
      if (pb->requires_grad) {
        auto& gb = pb->grad_buffer();
        for (int i = 0; i < D; ++i) gb[static_cast<std::size_t>(i)] += gr[i];
      }
      if (px->requires_grad) {
        T m1 = T(0), m2 = T(0);
        for (int i = 0; i < D; ++i) {
          dh[static_cast<std::size_t>(i)] = gr[i] * pg->value[static_cast<std::size_t>(i)];
          m1 += dh[static_cast<std::size_t>(i)];
          m2 += dh[static_cast<std::size_t>(i)] * hr[i];
        }
        m1 /= static_cast<T>(D);
        m2 /= static_cast<T>(D);
        T* gx = px->grad_buffer().data() + r * D;
        for (int i = 0; i < D; ++i) gx[i] += (*rstd)[r] * (dh[static_cast<std::size_t>(i)] - m1 - hr[i] * m2);
      }
    }
  });
}

// Softmax over the last dimension, with max subtraction.
template <typename T>
Var<T> softmax(const Var<T>& x) {
  const int D = x.dim(-1);
  const std::size_t rows = x.numel() / static_cast<std::size_t>(D);
  Tensor<T> out(x.shape());
  const T* xv = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv + r * D;
    T mx = *std::max_element(row, row + D);
    T s = T(0);
    for (int i = 0; i < D; ++i) s += (out[r * D + i] = std::exp(row[i] - mx));
    for (int i = 0; i < D; ++i) out[r * D + i] /= s;
  }
  auto px = x.node();
  Tensor<T> y = out;
  return make_op<T>(std::move(out), {x}, [px, y = std::move(y), D, rows](const Tensor<T>& g) {
    auto& gx = px->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = T(0);
      for (int i = 0; i < D; ++i) dot += g[r * D + i] * y[r * D + i];
      for (int i = 0; i < D; ++i) gx[r * D + i] += y[r * D + i] * (g[r * D + i] - dot);
    }
  });
}

template <typename T>
Var<T> log_softmax(const Var<T>& x) {
  const int D = x.dim(-1);
  const std::size_t rows = x.numel() / static_cast<std::size_t>(D);
  Tensor<T> out(x.shape());
  const T* xv = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv + r * D;
    T mx = *std::max_element(row, row + D);
    T s = T(0);
    for (int i = 0; i < D; ++i) s += std::exp(row[i] - mx);
    T lse = mx + std::log(s);
    for (int i = 0; i < D; ++i) out[r * D + i] = row[i] - lse;
  }
  auto px = x.node();
  Tensor<T> y = out;
  return make_op<T>(std::move(out), {x}, [px, y = std::move(y), D, rows](const Tensor<T>& g) {
    auto& gx = px->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      T gs = T(0);
      for (int i = 0; i < D; ++i) gs += g[r * D + i];
      for (int i = 0; i < D; ++i) gx[r * D + i] += g[r * D + i] - std::exp(y[r * D + i]) * gs;
    }
  });
}

// Sum over elements of weight * BCE(sigmoid(logit), target).
template <typename T>
Var<T> bce_with_logits_sum(const Var<T>& logits, const Tensor<T>& targets, const Tensor<T>* weights = nullptr) {
  detail::require(targets.shape() == logits.shape(), "bce_with_logits: target shape mismatch");
  if (weights) detail::require(weights->shape() == logits.shape(), "bce_with_logits: weight shape mismatch");
  T s = T(0);
  const T* xv = logits.value().data();
  for (std::size_t i = 0; i < targets.numel(); ++i) {
    T x = xv[i];
    T l = std::max(x, T(0)) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
    s += weights ? (*weights)[i] * l : l;
  }
  auto px = logits.node();
  auto t = std::make_shared<Tensor<T>>(targets);
  std::shared_ptr<Tensor<T>> w = weights ? std::make_shared<Tensor<T>>(*weights) : nullptr;
  return make_op<T>(Tensor<T>::scalar(s), {logits}, [px, t, w](const Tensor<T>& g) {
    auto& gx = px->grad_buffer();
    for (std::size_t i = 0; i < t->numel(); ++i) {
      T d = detail::stable_sigmoid(px->value[i]) - (*t)[i];
      gx[i] += g[0] * (w ? (*w)[i] * d : d);
    }
  });
}

// Rows of x[M, C] at the given indices -> [P, C].
template <typename T>
Var<T> gather_rows(const Var<T>& x, const std::vector<int>& rows) {
  detail::require(x.rank() == 2, "gather_rows: expects 2-D input");
  const int M = x.dim(0), C = x.dim(1);
  Tensor<T> out(Shape{static_cast<int>(rows.size()), C});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    detail::require(rows[r] >= 0 && rows[r] < M, "gather_rows: index out of range");
    std::copy_n(x.value().data() + static_cast<std::size_t>(rows[r]) * C, C, out.data() + r * C);
  }
  auto px = x.node();
  return make_op<T>(std::move(out), {x}, [px, rows, C](const Tensor<T>& g) {
    auto& gx = px->grad_buffer();
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (int c = 0; c < C; ++c) gx[static_cast<std::size_t>(rows[r]) * C + c] += g[r * C + c];
  });
}

}  // namespace weedet::nn
