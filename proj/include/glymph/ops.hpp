#pragma once

#include <Eigen/Core>

#if defined(__AVX__) && defined(__FMA__)
#include <immintrin.h>
#define GLYMPH_X86_FMA 1
#if defined(__AVX512F__)
#define GLYMPH_X86_AVX512 1
#endif
#endif

#include <algorithm>
#include <cmath>
#include <vector>

#include "glymph/tensor.hpp"

namespace glymph {

enum class Mode { Train, Eval };

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>; // column-major

template <typename S>
using MapMat = Eigen::Map<MatX<S>>;
template <typename S>
using MapConstMat = Eigen::Map<const MatX<S>>;

// A batch slice of a B x C x H x W tensor, viewed as an (H*W) x C matrix.
// Row-major channel planes are contiguous, which is exactly column-major
// (H*W, C) storage, so the view is free.
template <typename S>
MapConstMat<S> batch_matrix(const Tensor<S>& t, int b) {
  const Eigen::Index plane = static_cast<Eigen::Index>(t.extent(2)) * t.extent(3);
  const Eigen::Index c = t.extent(1);
  return MapConstMat<S>(t.data() + b * plane * c, plane, c);
}

template <typename S>
MapMat<S> batch_matrix_mut(Tensor<S>& t, int b) {
  const Eigen::Index plane = static_cast<Eigen::Index>(t.extent(2)) * t.extent(3);
  const Eigen::Index c = t.extent(1);
  return MapMat<S>(t.data() + b * plane * c, plane, c);
}

namespace detail {

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) fail(kind, msg);
}

template <typename S>
void require_4d(const Tensor<S>& t, const char* name) {
  require(t.rank() == 4, ErrorKind::Shape, std::string(name) + " must be rank 4, got " + t.shape_string());
}

// Gathers the 3x3 same-padding neighborhoods of one batch item into an
// (H*W) x (C*9) column-major matrix. Column (c*9 + ki*3 + kj) holds the
// input plane shifted by (ki-1, kj-1) with zero fill at the borders.
template <typename S>
void im2col3x3(const Tensor<S>& x, int b, MatX<S>& col) {
  const int c_in = x.extent(1), h = x.extent(2), w = x.extent(3);
  const Eigen::Index plane = static_cast<Eigen::Index>(h) * w;
  col.resize(plane, static_cast<Eigen::Index>(c_in) * 9);
#pragma omp parallel for schedule(static)
  for (int k = 0; k < c_in * 9; ++k) {
    const int c = k / 9, ki = (k % 9) / 3, kj = k % 3;
    const S* src_plane = x.data() + ((static_cast<Eigen::Index>(b) * c_in + c) * plane);
    S* dst = col.data() + static_cast<Eigen::Index>(k) * plane;
    const int di = ki - 1, dj = kj - 1;
    const int j0 = std::max(0, -dj), j1 = w - 1 - std::max(0, dj); // inclusive run
    for (int i = 0; i < h; ++i) {
      const int r = i + di;
      S* drow = dst + static_cast<Eigen::Index>(i) * w;
      if (r < 0 || r >= h || j1 < j0) {
        std::fill(drow, drow + w, S(0));
        continue;
      }
      if (j0 > 0) drow[0] = S(0);
      if (j1 < w - 1) drow[w - 1] = S(0);
      const S* src = src_plane + static_cast<Eigen::Index>(r) * w + dj;
      std::copy(src + j0, src + j1 + 1, drow + j0);
    }
  }
}

} // namespace detail

// ---------------------------------------------------------------------------
// conv3x3: same-padding 3x3 cross-correlation, stride 1.
//
// The accumulation order is pinned per output element: start from the bias,
// then fold in contributions in ascending (c_in, ki, kj) order with fused
// multiply-adds, skipping out-of-bounds taps. A brute-force nested-loop
// reference that follows the same order reproduces the output bit for bit,
// whether a pixel takes the vectorized interior path or the scalar border
// path below.
// ---------------------------------------------------------------------------

namespace detail {

// One output column for a block of TC channels; the literal nested-loop
// order per channel, with independent accumulator chains across channels.
template <typename S, int TC>
void conv3x3_column_block(const S* xbase, const S* wdata, const Tensor<S>& bias, S* outbase,
                          Eigen::Index plane, int c_in, int h, int wd, int i, int j, int ct) {
  S acc[TC];
  for (int t = 0; t < TC; ++t) acc[t] = bias[ct + t];
  const Eigen::Index wstride = static_cast<Eigen::Index>(c_in) * 9;
  const S* wc = wdata + static_cast<Eigen::Index>(ct) * wstride;
  for (int ci = 0; ci < c_in; ++ci) {
    const S* xp = xbase + static_cast<Eigen::Index>(ci) * plane;
    for (int ki = 0; ki < 3; ++ki) {
      const int r = i + ki - 1;
      if (r < 0 || r >= h) continue;
      for (int kj = 0; kj < 3; ++kj) {
        const int s = j + kj - 1;
        if (s < 0 || s >= wd) continue;
        const S xv = xp[static_cast<Eigen::Index>(r) * wd + s];
        for (int t = 0; t < TC; ++t)
          acc[t] = std::fma(xv, wc[t * wstride + ci * 9 + ki * 3 + kj], acc[t]);
      }
    }
  }
  for (int t = 0; t < TC; ++t)
    outbase[static_cast<Eigen::Index>(ct + t) * plane + static_cast<Eigen::Index>(i) * wd + j] =
        acc[t];
}

// One output column, all channels.
template <typename S>
void conv3x3_scalar_column(const S* xbase, const S* wdata, const Tensor<S>& bias, S* outbase,
                           Eigen::Index plane, int c_in, int c_out, int h, int wd, int i, int j) {
  constexpr int TC = 8;
  int ct = 0;
  for (; ct + TC <= c_out; ct += TC)
    conv3x3_column_block<S, TC>(xbase, wdata, bias, outbase, plane, c_in, h, wd, i, j, ct);
  for (; ct < c_out; ++ct)
    conv3x3_column_block<S, 1>(xbase, wdata, bias, outbase, plane, c_in, h, wd, i, j, ct);
}

#ifdef GLYMPH_X86_FMA
// Packed fused multiply-adds; elementwise identical to std::fma.
template <typename S>
struct Simd256;
template <>
struct Simd256<float> {
  using V = __m256;
  static constexpr int width = 8;
  static V load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, V v) { _mm256_storeu_ps(p, v); }
  static V broadcast(float v) { return _mm256_set1_ps(v); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_ps(a, b, c); }
};
template <>
struct Simd256<double> {
  using V = __m256d;
  static constexpr int width = 4;
  static V load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, V v) { _mm256_storeu_pd(p, v); }
  static V broadcast(double v) { return _mm256_set1_pd(v); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_pd(a, b, c); }
};
#endif

#ifdef GLYMPH_X86_AVX512
template <typename S>
struct Simd512;
template <>
struct Simd512<float> {
  using V = __m512;
  static constexpr int width = 16;
  static V load(const float* p) { return _mm512_loadu_ps(p); }
  static void store(float* p, V v) { _mm512_storeu_ps(p, v); }
  static V broadcast(float v) { return _mm512_set1_ps(v); }
  static V fma(V a, V b, V c) { return _mm512_fmadd_ps(a, b, c); }
};
template <>
struct Simd512<double> {
  using V = __m512d;
  static constexpr int width = 8;
  static V load(const double* p) { return _mm512_loadu_pd(p); }
  static void store(double* p, V v) { _mm512_storeu_pd(p, v); }
  static V broadcast(double v) { return _mm512_set1_pd(v); }
  static V fma(V a, V b, V c) { return _mm512_fmadd_pd(a, b, c); }
};
#endif

#ifdef GLYMPH_X86_FMA
// Interior tile: NR * VT::width consecutive columns (all kj taps in bounds)
// for a block of TC output channels, accumulated in registers across the
// whole reduction. Per-element operation order is identical to the scalar
// path.
template <typename S, typename VT, int TC, int NR>
void conv3x3_tile(const S* xbase, const S* wdata, const Tensor<S>& bias, S* outbase,
                  Eigen::Index plane, int c_in, int h, int wd, int i, int j0, int ct) {
  using V = typename VT::V;
  const Eigen::Index wstride = static_cast<Eigen::Index>(c_in) * 9;
  V acc[TC][NR];
  for (int t = 0; t < TC; ++t)
    for (int u = 0; u < NR; ++u) acc[t][u] = VT::broadcast(bias[ct + t]);
  for (int ci = 0; ci < c_in; ++ci) {
    const S* xp = xbase + static_cast<Eigen::Index>(ci) * plane;
    const S* wk = wdata + static_cast<Eigen::Index>(ct) * wstride + ci * 9;
    for (int ki = 0; ki < 3; ++ki) {
      const int r = i + ki - 1;
      if (r < 0 || r >= h) continue;
      const S* row = xp + static_cast<Eigen::Index>(r) * wd + j0;
      for (int kj = 0; kj < 3; ++kj) {
        const S* src = row + kj - 1;
        V s[NR];
        for (int u = 0; u < NR; ++u) s[u] = VT::load(src + u * VT::width);
        for (int t = 0; t < TC; ++t) {
          const V wv = VT::broadcast(wk[t * wstride + ki * 3 + kj]);
          for (int u = 0; u < NR; ++u) acc[t][u] = VT::fma(s[u], wv, acc[t][u]);
        }
      }
    }
  }
  for (int t = 0; t < TC; ++t) {
    S* orow = outbase + static_cast<Eigen::Index>(ct + t) * plane +
              static_cast<Eigen::Index>(i) * wd + j0;
    for (int u = 0; u < NR; ++u) VT::store(orow + u * VT::width, acc[t][u]);
  }
}
#else
// Portable fallback tile; the compiler is free to vectorize, the per-element
// fma order is fixed either way.
template <typename S, int TC, int TJ>
void conv3x3_tile_scalar(const S* xbase, const S* wdata, const Tensor<S>& bias, S* outbase,
                         Eigen::Index plane, int c_in, int h, int wd, int i, int j0, int ct) {
  S acc[TC][TJ];
  for (int t = 0; t < TC; ++t)
    for (int u = 0; u < TJ; ++u) acc[t][u] = bias[ct + t];
  const Eigen::Index wstride = static_cast<Eigen::Index>(c_in) * 9;
  for (int ci = 0; ci < c_in; ++ci) {
    const S* xp = xbase + static_cast<Eigen::Index>(ci) * plane;
    const S* wk = wdata + static_cast<Eigen::Index>(ct) * wstride + ci * 9;
    for (int ki = 0; ki < 3; ++ki) {
      const int r = i + ki - 1;
      if (r < 0 || r >= h) continue;
      const S* row = xp + static_cast<Eigen::Index>(r) * wd + j0;
      for (int kj = 0; kj < 3; ++kj) {
        const S* src = row + kj - 1;
        for (int t = 0; t < TC; ++t) {
          const S wv = wk[t * wstride + ki * 3 + kj];
          for (int u = 0; u < TJ; ++u) acc[t][u] = std::fma(src[u], wv, acc[t][u]);
        }
      }
    }
  }
  for (int t = 0; t < TC; ++t) {
    S* orow = outbase + static_cast<Eigen::Index>(ct + t) * plane +
              static_cast<Eigen::Index>(i) * wd + j0;
    for (int u = 0; u < TJ; ++u) orow[u] = acc[t][u];
  }
}
#endif

// Runs interior tiles of TJ columns over [1, wd-2] (tiles overlap near the
// right edge; recomputed columns are bit-identical), then dispatches the
// remaining channels one at a time.
template <typename S, int TJ, typename TileFull, typename TileOne>
void conv3x3_row_tiles(TileFull&& tile_full, TileOne&& tile_one, int c_out, int wd, int tc) {
  for (int j0 = 1; j0 < wd - 1;) {
    j0 = std::min(j0, wd - 1 - TJ);
    int ct = 0;
    for (; ct + tc <= c_out; ct += tc) tile_full(j0, ct);
    for (; ct < c_out; ++ct) tile_one(j0, ct);
    if (j0 == wd - 1 - TJ) break;
    j0 += TJ;
  }
}

} // namespace detail

template <typename S>
Tensor<S> conv3x3(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias) {
  detail::require_4d(x, "conv3x3 input");
  detail::require_4d(w, "conv3x3 weights");
  detail::require(w.extent(2) == 3 && w.extent(3) == 3, ErrorKind::Shape,
                  "conv3x3 weights must be C_out x C_in x 3 x 3, got " + w.shape_string());
  detail::require(bias.rank() == 1 && bias.extent(0) == w.extent(0), ErrorKind::Shape,
                  "conv3x3 bias extent must match C_out");
  detail::require(x.extent(1) == w.extent(1), ErrorKind::Shape,
                  "conv3x3 channel mismatch: input " + x.shape_string() + " vs weights " +
                      w.shape_string());

  const int n_batch = x.extent(0), c_in = x.extent(1), h = x.extent(2), wd = x.extent(3);
  const int c_out = w.extent(0);
  const Eigen::Index plane = static_cast<Eigen::Index>(h) * wd;

  Tensor<S> out = Tensor<S>::uninit({n_batch, c_out, h, wd});

#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < n_batch; ++b) {
    for (int i = 0; i < h; ++i) {
      const S* xbase = x.data() + static_cast<Eigen::Index>(b) * c_in * plane;
      S* outbase = out.data() + static_cast<Eigen::Index>(b) * c_out * plane;
      const S* wd_ = w.data();
      auto scalar_cols = [&](int lo, int hi_inclusive) {
        for (int j = lo; j <= hi_inclusive; ++j)
          detail::conv3x3_scalar_column(xbase, wd_, bias, outbase, plane, c_in, c_out, h, wd, i,
                                        j);
      };
#ifdef GLYMPH_X86_AVX512
      using V5 = detail::Simd512<S>;
      if (wd >= 2 * V5::width + 2) {
        scalar_cols(0, 0);
        scalar_cols(wd - 1, wd - 1);
        detail::conv3x3_row_tiles<S, 2 * V5::width>(
            [&](int j0, int ct) {
              detail::conv3x3_tile<S, V5, 4, 2>(xbase, wd_, bias, outbase, plane, c_in, h, wd, i,
                                                j0, ct);
            },
            [&](int j0, int ct) {
              detail::conv3x3_tile<S, V5, 1, 2>(xbase, wd_, bias, outbase, plane, c_in, h, wd, i,
                                                j0, ct);
            },
            c_out, wd, 4);
        continue;
      }
      if (wd >= V5::width + 2) {
        scalar_cols(0, 0);
        scalar_cols(wd - 1, wd - 1);
        detail::conv3x3_row_tiles<S, V5::width>(
            [&](int j0, int ct) {
              detail::conv3x3_tile<S, V5, 8, 1>(xbase, wd_, bias, outbase, plane, c_in, h, wd, i,
                                                j0, ct);
            },
            [&](int j0, int ct) {
              detail::conv3x3_tile<S, V5, 1, 1>(xbase, wd_, bias, outbase, plane, c_in, h, wd, i,
                                                j0, ct);
            },
            c_out, wd, 8);
        continue;
      }
#endif
#ifdef GLYMPH_X86_FMA
      using V2 = detail::Simd256<S>;
      if (wd >= 2 * V2::width + 2) {
        scalar_cols(0, 0);
        scalar_cols(wd - 1, wd - 1);
        detail::conv3x3_row_tiles<S, 2 * V2::width>(
            [&](int j0, int ct) {
              detail::conv3x3_tile<S, V2, 4, 2>(xbase, wd_, bias, outbase, plane, c_in, h, wd, i,
                                                j0, ct);
            },
            [&](int j0, int ct) {
              detail::conv3x3_tile<S, V2, 1, 2>(xbase, wd_, bias, outbase, plane, c_in, h, wd, i,
                                                j0, ct);
            },
            c_out, wd, 4);
        continue;
      }
      if (wd >= V2::width + 2) {
        scalar_cols(0, 0);
        scalar_cols(wd - 1, wd - 1);
        detail::conv3x3_row_tiles<S, V2::width>(
            [&](int j0, int ct) {
              detail::conv3x3_tile<S, V2, 8, 1>(xbase, wd_, bias, outbase, plane, c_in, h, wd, i,
                                                j0, ct);
            },
            [&](int j0, int ct) {
              detail::conv3x3_tile<S, V2, 1, 1>(xbase, wd_, bias, outbase, plane, c_in, h, wd, i,
                                                j0, ct);
            },
            c_out, wd, 8);
        continue;
      }
#else
      constexpr int TJ = 64 / static_cast<int>(sizeof(S));
      if (wd >= TJ + 2) {
        scalar_cols(0, 0);
        scalar_cols(wd - 1, wd - 1);
        detail::conv3x3_row_tiles<S, TJ>(
            [&](int j0, int ct) {
              detail::conv3x3_tile_scalar<S, 4, TJ>(xbase, wd_, bias, outbase, plane, c_in, h, wd,
                                                    i, j0, ct);
            },
            [&](int j0, int ct) {
              detail::conv3x3_tile_scalar<S, 1, TJ>(xbase, wd_, bias, outbase, plane, c_in, h, wd,
                                                    i, j0, ct);
            },
            c_out, wd, 4);
        continue;
      }
#endif
      scalar_cols(0, wd - 1);
    }
  }
  return out;
}

/// Accumulates conv3x3 gradients into x.grad, w.grad and bias.grad.
/// Set want_input_grad = false for the first layer of a network.
///
/// The input gradient is the full correlation of the upstream gradient with
/// the 180-degree-rotated kernel, computed through the tiled forward kernel;
/// the weight gradient goes through an im2col + GEMM per batch item.
template <typename S>
void conv3x3_backward(const Tensor<S>& gout, Tensor<S>& x, Tensor<S>& w, Tensor<S>& bias,
                      bool want_input_grad = true) {
  const int n_batch = x.extent(0), c_in = x.extent(1), h = x.extent(2), wd = x.extent(3);
  const int c_out = w.extent(0);
  const Eigen::Index plane = static_cast<Eigen::Index>(h) * wd;
  const Eigen::Index k = static_cast<Eigen::Index>(c_in) * 9;

  detail::require(gout.rank() == 4 && gout.extent(0) == n_batch && gout.extent(1) == c_out &&
                      gout.extent(2) == h && gout.extent(3) == wd,
                  ErrorKind::Shape, "conv3x3_backward upstream gradient shape mismatch");

  // Weight tensor (C_out x C_in x 3 x 3, row-major) doubles as a column-major
  // (C_in*9) x C_out matrix; its gradient uses the same view.
  MapMat<S> gw(w.ensure_grad().data(), k, c_out);
  auto& gb = bias.ensure_grad();

  MatX<S> colx;
  for (int b = 0; b < n_batch; ++b) {
    MapConstMat<S> go(gout.data() + (static_cast<Eigen::Index>(b) * c_out) * plane, plane, c_out);
    detail::im2col3x3(x, b, colx);
    gw.noalias() += colx.transpose() * go;
    for (int c = 0; c < c_out; ++c) gb[c] += go.col(c).sum();
  }

  if (want_input_grad) {
    Tensor<S> wflip({c_in, c_out, 3, 3});
    for (int co = 0; co < c_out; ++co)
      for (int ci = 0; ci < c_in; ++ci)
        for (int ki = 0; ki < 3; ++ki)
          for (int kj = 0; kj < 3; ++kj)
            wflip.at(ci, co, ki, kj) = w.at(co, ci, 2 - ki, 2 - kj);
    Tensor<S> zero_bias({c_in});
    Tensor<S> gx = conv3x3(gout, wflip, zero_bias);
    x.ensure_grad() += gx.values();
  }
}

// ---------------------------------------------------------------------------
// conv1x1: pointwise convolution (the network head).
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> conv1x1(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias) {
  detail::require_4d(x, "conv1x1 input");
  detail::require(w.rank() == 4 && w.extent(2) == 1 && w.extent(3) == 1, ErrorKind::Shape,
                  "conv1x1 weights must be C_out x C_in x 1 x 1");
  detail::require(x.extent(1) == w.extent(1), ErrorKind::Shape, "conv1x1 channel mismatch");
  detail::require(bias.rank() == 1 && bias.extent(0) == w.extent(0), ErrorKind::Shape,
                  "conv1x1 bias extent must match C_out");

  const int n_batch = x.extent(0), c_out = w.extent(0), c_in = x.extent(1);
  Tensor<S> out = Tensor<S>::uninit({n_batch, c_out, x.extent(2), x.extent(3)});
  MapConstMat<S> wm(w.data(), c_in, c_out);
  for (int b = 0; b < n_batch; ++b) {
    auto xm = batch_matrix(x, b);
    auto om = batch_matrix_mut(out, b);
    om.noalias() = xm * wm;
    for (int c = 0; c < c_out; ++c) om.col(c).array() += bias[c];
  }
  return out;
}

template <typename S>
void conv1x1_backward(const Tensor<S>& gout, Tensor<S>& x, Tensor<S>& w, Tensor<S>& bias,
                      bool want_input_grad = true) {
  const int n_batch = x.extent(0), c_in = x.extent(1), c_out = w.extent(0);
  MapConstMat<S> wm(w.data(), c_in, c_out);
  MapMat<S> gw(w.ensure_grad().data(), c_in, c_out);
  auto& gb = bias.ensure_grad();
  if (want_input_grad) x.ensure_grad();
  for (int b = 0; b < n_batch; ++b) {
    auto xm = batch_matrix(x, b);
    auto gm = batch_matrix(gout, b);
    gw.noalias() += xm.transpose() * gm;
    for (int c = 0; c < c_out; ++c) gb[c] += gm.col(c).sum();
    if (want_input_grad) {
      const Eigen::Index plane = static_cast<Eigen::Index>(x.extent(2)) * x.extent(3);
      MapMat<S> gx(x.grad().data() + (static_cast<Eigen::Index>(b) * c_in) * plane, plane, c_in);
      gx.noalias() += gm * wm.transpose();
    }
  }
}

// ---------------------------------------------------------------------------
// upconv2x2: 2x2 transposed convolution with stride 2 (spatial doubling).
// Weights are C_in x C_out x 2 x 2.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> upconv2x2(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias) {
  detail::require_4d(x, "upconv2x2 input");
  detail::require(w.rank() == 4 && w.extent(2) == 2 && w.extent(3) == 2, ErrorKind::Shape,
                  "upconv2x2 weights must be C_in x C_out x 2 x 2");
  detail::require(x.extent(1) == w.extent(0), ErrorKind::Shape,
                  "upconv2x2 channel mismatch: input " + x.shape_string() + " vs weights " +
                      w.shape_string());
  detail::require(bias.rank() == 1 && bias.extent(0) == w.extent(1), ErrorKind::Shape,
                  "upconv2x2 bias extent must match C_out");

  const int n_batch = x.extent(0), c_in = x.extent(1), h = x.extent(2), wd = x.extent(3);
  const int c_out = w.extent(1);
  const Eigen::Index plane = static_cast<Eigen::Index>(h) * wd;
  const Eigen::Index oplane = plane * 4;

  Tensor<S> out = Tensor<S>::uninit({n_batch, c_out, 2 * h, 2 * wd});
  MatX<S> wsub(c_in, c_out), t(plane, c_out);
  for (int di = 0; di < 2; ++di) {
    for (int dj = 0; dj < 2; ++dj) {
      for (int ci = 0; ci < c_in; ++ci)
        for (int co = 0; co < c_out; ++co) wsub(ci, co) = w.at(ci, co, di, dj);
      for (int b = 0; b < n_batch; ++b) {
        t.noalias() = batch_matrix(x, b) * wsub;
#pragma omp parallel for schedule(static)
        for (int c = 0; c < c_out; ++c) {
          S* oplane_ptr = out.data() + (static_cast<Eigen::Index>(b) * c_out + c) * oplane;
          const S* tc = t.data() + static_cast<Eigen::Index>(c) * plane;
          for (int i = 0; i < h; ++i) {
            S* orow = oplane_ptr + (static_cast<Eigen::Index>(2 * i + di)) * (2 * wd) + dj;
            const S* trow = tc + static_cast<Eigen::Index>(i) * wd;
            for (int j = 0; j < wd; ++j) orow[2 * j] = trow[j] + bias[c];
          }
        }
      }
    }
  }
  return out;
}

template <typename S>
void upconv2x2_backward(const Tensor<S>& gout, Tensor<S>& x, Tensor<S>& w, Tensor<S>& bias,
                        bool want_input_grad = true) {
  const int n_batch = x.extent(0), c_in = x.extent(1), h = x.extent(2), wd = x.extent(3);
  const int c_out = w.extent(1);
  const Eigen::Index plane = static_cast<Eigen::Index>(h) * wd;
  const Eigen::Index oplane = plane * 4;
  detail::require(gout.rank() == 4 && gout.extent(2) == 2 * h && gout.extent(3) == 2 * wd &&
                      gout.extent(1) == c_out && gout.extent(0) == n_batch,
                  ErrorKind::Shape, "upconv2x2_backward upstream gradient shape mismatch");

  auto& gb = bias.ensure_grad();
  if (want_input_grad) x.ensure_grad();

  MatX<S> wsub(c_in, c_out), gt(plane, c_out), gwsub(c_in, c_out);
  for (int di = 0; di < 2; ++di) {
    for (int dj = 0; dj < 2; ++dj) {
      for (int ci = 0; ci < c_in; ++ci)
        for (int co = 0; co < c_out; ++co) wsub(ci, co) = w.at(ci, co, di, dj);
      gwsub.setZero();
      for (int b = 0; b < n_batch; ++b) {
        // gather the strided quadrant of the upstream gradient
#pragma omp parallel for schedule(static)
        for (int c = 0; c < c_out; ++c) {
          const S* gplane = gout.data() + (static_cast<Eigen::Index>(b) * c_out + c) * oplane;
          S* gtc = gt.data() + static_cast<Eigen::Index>(c) * plane;
          for (int i = 0; i < h; ++i) {
            const S* grow = gplane + (static_cast<Eigen::Index>(2 * i + di)) * (2 * wd) + dj;
            S* trow = gtc + static_cast<Eigen::Index>(i) * wd;
            for (int j = 0; j < wd; ++j) trow[j] = grow[2 * j];
          }
        }
        gwsub.noalias() += batch_matrix(x, b).transpose() * gt;
        if (want_input_grad) {
          MapMat<S> gx(x.grad().data() + (static_cast<Eigen::Index>(b) * c_in) * plane, plane,
                       c_in);
          gx.noalias() += gt * wsub.transpose();
        }
        for (int c = 0; c < c_out; ++c) gb[c] += gt.col(c).sum();
      }
      auto& gw = w.ensure_grad();
      for (int ci = 0; ci < c_in; ++ci)
        for (int co = 0; co < c_out; ++co)
          gw[((static_cast<Eigen::Index>(ci) * c_out + co) * 2 + di) * 2 + dj] += gwsub(ci, co);
    }
  }
}

// ---------------------------------------------------------------------------
// maxpool2x2: per-window maximum; ties resolve to the first position in
// row-major window order so the backward route is deterministic.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> maxpool2x2(const Tensor<S>& x) {
  detail::require_4d(x, "maxpool2x2 input");
  const int n_batch = x.extent(0), c = x.extent(1), h = x.extent(2), wd = x.extent(3);
  detail::require(h % 2 == 0 && wd % 2 == 0, ErrorKind::Shape,
                  "maxpool2x2 requires even spatial extents, got " + x.shape_string());
  Tensor<S> out = Tensor<S>::uninit({n_batch, c, h / 2, wd / 2});
  const Eigen::Index plane = static_cast<Eigen::Index>(h) * wd;
  const Eigen::Index oplane = plane / 4;
#pragma omp parallel for schedule(static)
  for (Eigen::Index pc = 0; pc < static_cast<Eigen::Index>(n_batch) * c; ++pc) {
    const S* src = x.data() + pc * plane;
    S* dst = out.data() + pc * oplane;
    for (int i = 0; i < h / 2; ++i) {
      const S* r0 = src + static_cast<Eigen::Index>(2 * i) * wd;
      const S* r1 = r0 + wd;
      for (int j = 0; j < wd / 2; ++j) {
        S m = r0[2 * j];
        if (r0[2 * j + 1] > m) m = r0[2 * j + 1];
        if (r1[2 * j] > m) m = r1[2 * j];
        if (r1[2 * j + 1] > m) m = r1[2 * j + 1];
        dst[static_cast<Eigen::Index>(i) * (wd / 2) + j] = m;
      }
    }
  }
  return out;
}

/// Routes each upstream gradient entry to the argmax of its window
/// (recomputed from x; first row-major position wins ties).
template <typename S>
void maxpool2x2_backward(const Tensor<S>& gout, Tensor<S>& x) {
  const int n_batch = x.extent(0), c = x.extent(1), h = x.extent(2), wd = x.extent(3);
  detail::require(gout.rank() == 4 && gout.extent(2) == h / 2 && gout.extent(3) == wd / 2 &&
                      gout.extent(0) == n_batch && gout.extent(1) == c,
                  ErrorKind::Shape, "maxpool2x2_backward upstream gradient shape mismatch");
  auto& gx = x.ensure_grad();
  const Eigen::Index plane = static_cast<Eigen::Index>(h) * wd;
  const Eigen::Index oplane = plane / 4;
#pragma omp parallel for schedule(static)
  for (Eigen::Index pc = 0; pc < static_cast<Eigen::Index>(n_batch) * c; ++pc) {
    const S* src = x.data() + pc * plane;
    S* g = gx.data() + pc * plane;
    const S* go = gout.data() + pc * oplane;
    for (int i = 0; i < h / 2; ++i) {
      for (int j = 0; j < wd / 2; ++j) {
        const Eigen::Index base = static_cast<Eigen::Index>(2 * i) * wd + 2 * j;
        const Eigen::Index cand[4] = {base, base + 1, base + wd, base + wd + 1};
        Eigen::Index best = cand[0];
        for (int t = 1; t < 4; ++t)
          if (src[cand[t]] > src[best]) best = cand[t];
        g[best] += go[static_cast<Eigen::Index>(i) * (wd / 2) + j];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// relu
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  Tensor<S> out = Tensor<S>::uninit(x.shape());
  out.values() = x.values().max(S(0));
  return out;
}

/// Gradient passes where the input was strictly positive.
template <typename S>
void relu_backward(const Tensor<S>& gout, Tensor<S>& x) {
  detail::require(gout.same_shape(x), ErrorKind::Shape, "relu_backward shape mismatch");
  auto& gx = x.ensure_grad();
  gx += (x.values() > S(0)).template cast<S>() * gout.values();
}

// ---------------------------------------------------------------------------
// concat_channels: a's channels first, then b's.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_4d(a, "concat_channels input a");
  detail::require_4d(b, "concat_channels input b");
  detail::require(a.extent(0) == b.extent(0) && a.extent(2) == b.extent(2) &&
                      a.extent(3) == b.extent(3),
                  ErrorKind::Shape,
                  "concat_channels batch/spatial mismatch: " + a.shape_string() + " vs " +
                      b.shape_string());
  const int n_batch = a.extent(0), ca = a.extent(1), cb = b.extent(1);
  const Eigen::Index plane = static_cast<Eigen::Index>(a.extent(2)) * a.extent(3);
  Tensor<S> out = Tensor<S>::uninit({n_batch, ca + cb, a.extent(2), a.extent(3)});
  for (int i = 0; i < n_batch; ++i) {
    std::copy_n(a.data() + static_cast<Eigen::Index>(i) * ca * plane, ca * plane,
                out.data() + static_cast<Eigen::Index>(i) * (ca + cb) * plane);
    std::copy_n(b.data() + static_cast<Eigen::Index>(i) * cb * plane, cb * plane,
                out.data() + static_cast<Eigen::Index>(i) * (ca + cb) * plane + ca * plane);
  }
  return out;
}

template <typename S>
void concat_channels_backward(const Tensor<S>& gout, Tensor<S>& a, Tensor<S>& b) {
  const int n_batch = a.extent(0), ca = a.extent(1), cb = b.extent(1);
  detail::require(gout.extent(1) == ca + cb, ErrorKind::Shape,
                  "concat_channels_backward channel mismatch");
  const Eigen::Index plane = static_cast<Eigen::Index>(a.extent(2)) * a.extent(3);
  auto& ga = a.ensure_grad();
  auto& gb = b.ensure_grad();
  for (int i = 0; i < n_batch; ++i) {
    const S* g = gout.data() + static_cast<Eigen::Index>(i) * (ca + cb) * plane;
    for (Eigen::Index t = 0; t < ca * plane; ++t)
      ga[static_cast<Eigen::Index>(i) * ca * plane + t] += g[t];
    for (Eigen::Index t = 0; t < cb * plane; ++t)
      gb[static_cast<Eigen::Index>(i) * cb * plane + t] += g[ca * plane + t];
  }
}

// ---------------------------------------------------------------------------
// batchnorm2d
//
// Train mode normalizes with biased batch statistics over (batch, height,
// width) per channel and updates the running statistics with an exponential
// moving average (unbiased variance, matching the common framework
// convention). Eval mode normalizes with the running statistics.
// ---------------------------------------------------------------------------

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

template <typename S>
Tensor<S> batchnorm2d(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                      Tensor<S>& run_mean, Tensor<S>& run_var, Mode mode,
                      double eps = kBatchNormEps, double momentum = kBatchNormMomentum) {
  detail::require_4d(x, "batchnorm2d input");
  const int n_batch = x.extent(0), c = x.extent(1), h = x.extent(2), wd = x.extent(3);
  detail::require(gamma.size() == c && beta.size() == c && run_mean.size() == c &&
                      run_var.size() == c,
                  ErrorKind::Shape, "batchnorm2d parameter extents must match channel count");
  const Eigen::Index plane = static_cast<Eigen::Index>(h) * wd;
  const Eigen::Index n = static_cast<Eigen::Index>(n_batch) * plane;
  if (mode == Mode::Train)
    detail::require(n >= 2, ErrorKind::Shape, "batchnorm2d train mode needs at least 2 values per channel");

  Tensor<S> out = Tensor<S>::uninit(x.shape());
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    S mean, inv_std;
    if (mode == Mode::Train) {
      S sum = 0;
      for (int b = 0; b < n_batch; ++b) {
        MapConstMat<S> m(x.data() + (static_cast<Eigen::Index>(b) * c + ch) * plane, plane, 1);
        sum += m.sum();
      }
      mean = sum / static_cast<S>(n);
      S ss = 0;
      for (int b = 0; b < n_batch; ++b) {
        MapConstMat<S> m(x.data() + (static_cast<Eigen::Index>(b) * c + ch) * plane, plane, 1);
        ss += (m.array() - mean).square().sum();
      }
      const S var = ss / static_cast<S>(n);
      const S var_unbiased = n > 1 ? ss / static_cast<S>(n - 1) : var;
      run_mean[ch] = static_cast<S>((1.0 - momentum) * run_mean[ch] + momentum * mean);
      run_var[ch] = static_cast<S>((1.0 - momentum) * run_var[ch] + momentum * var_unbiased);
      inv_std = S(1) / std::sqrt(var + static_cast<S>(eps));
    } else {
      mean = run_mean[ch];
      inv_std = S(1) / std::sqrt(run_var[ch] + static_cast<S>(eps));
    }
    const S g = gamma[ch], bt = beta[ch];
    for (int b = 0; b < n_batch; ++b) {
      const Eigen::Index off = (static_cast<Eigen::Index>(b) * c + ch) * plane;
      Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> dst(out.data() + off, plane);
      Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> src(x.data() + off, plane);
      dst = (src - mean) * (inv_std * g) + bt;
    }
  }
  return out;
}

/// Batch-norm gradients. Train mode differentiates through the batch
/// statistics; eval mode treats the running statistics as constants.
template <typename S>
void batchnorm2d_backward(const Tensor<S>& gout, Tensor<S>& x, Tensor<S>& gamma, Tensor<S>& beta,
                          const Tensor<S>& run_mean, const Tensor<S>& run_var, Mode mode,
                          double eps = kBatchNormEps) {
  const int n_batch = x.extent(0), c = x.extent(1), h = x.extent(2), wd = x.extent(3);
  detail::require(gout.same_shape(x), ErrorKind::Shape, "batchnorm2d_backward shape mismatch");
  const Eigen::Index plane = static_cast<Eigen::Index>(h) * wd;
  const Eigen::Index n = static_cast<Eigen::Index>(n_batch) * plane;

  auto& gx = x.ensure_grad();
  auto& gg = gamma.ensure_grad();
  auto& gb = beta.ensure_grad();

  using ArrMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
  using CArrMap = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    S mean, var;
    if (mode == Mode::Train) {
      S sum = 0;
      for (int b = 0; b < n_batch; ++b)
        sum += CArrMap(x.data() + (static_cast<Eigen::Index>(b) * c + ch) * plane, plane).sum();
      mean = sum / static_cast<S>(n);
      S ss = 0;
      for (int b = 0; b < n_batch; ++b)
        ss += (CArrMap(x.data() + (static_cast<Eigen::Index>(b) * c + ch) * plane, plane) - mean)
                  .square()
                  .sum();
      var = ss / static_cast<S>(n);
    } else {
      mean = run_mean[ch];
      var = run_var[ch];
    }
    const S inv_std = S(1) / std::sqrt(var + static_cast<S>(eps));
    const S g = gamma[ch];

    // channel-level reductions of the upstream gradient
    S sum_g = 0, sum_g_xhat = 0;
    for (int b = 0; b < n_batch; ++b) {
      const Eigen::Index off = (static_cast<Eigen::Index>(b) * c + ch) * plane;
      CArrMap go(gout.data() + off, plane);
      CArrMap src(x.data() + off, plane);
      sum_g += go.sum();
      sum_g_xhat += (go * (src - mean)).sum() * inv_std;
    }
    gg[ch] += sum_g_xhat;
    gb[ch] += sum_g;

    if (mode == Mode::Train) {
      const S inv_n = S(1) / static_cast<S>(n);
      for (int b = 0; b < n_batch; ++b) {
        const Eigen::Index off = (static_cast<Eigen::Index>(b) * c + ch) * plane;
        CArrMap go(gout.data() + off, plane);
        CArrMap src(x.data() + off, plane);
        ArrMap gxp(gx.data() + off, plane);
        gxp += g * inv_std *
               (go - inv_n * sum_g - (inv_n * sum_g_xhat * inv_std) * (src - mean));
      }
    } else {
      for (int b = 0; b < n_batch; ++b) {
        const Eigen::Index off = (static_cast<Eigen::Index>(b) * c + ch) * plane;
        ArrMap gxp(gx.data() + off, plane);
        gxp += CArrMap(gout.data() + off, plane) * (g * inv_std);
      }
    }
  }
}

} // namespace glymph
