// styler/kernels.cpp

// Copyright 2026 The styler Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "styler/kernels.hpp"

#include <cmath>
#include <cstring>
#include <vector>

namespace styler {
namespace kernels {

namespace {

// One output row of a gemm. Loop nests are specialized per transpose flag so
// the compiler sees the contiguous stride-1 direction; every c[i,j] still
// accumulates its products in ascending p order, which keeps the parallel
// and serial entry points bit-identical.
inline void gemm_row(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
                     const float* a, const float* b, float beta, float* c,
                     int64_t i) {
  float* crow = c + i * n;
  if (beta == 0.0f) {
    for (int64_t j = 0; j < n; ++j) crow[j] = 0.0f;
  }
  if (!trans_b) {
    // B rows are contiguous in j: accumulate row-wise over p.
    for (int64_t p = 0; p < k; ++p) {
      const float av = trans_a ? a[p * m + i] : a[i * k + p];
      if (av == 0.0f) continue;
      const float* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  } else {
    // B is stored [n, k]: dot two contiguous runs per output. Four partial
    // sums keep the FPU pipeline busy; the partials are combined in a fixed
    // order, so results stay reproducible.
    for (int64_t j = 0; j < n; ++j) {
      const float* brow = b + j * k;
      float acc = 0.0f;
      if (!trans_a) {
        const float* arow = a + i * k;
        float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
        int64_t p = 0;
        for (; p + 4 <= k; p += 4) {
          s0 += arow[p] * brow[p];
          s1 += arow[p + 1] * brow[p + 1];
          s2 += arow[p + 2] * brow[p + 2];
          s3 += arow[p + 3] * brow[p + 3];
        }
        acc = (s0 + s1) + (s2 + s3);
        for (; p < k; ++p) acc += arow[p] * brow[p];
      } else {
        for (int64_t p = 0; p < k; ++p) acc += a[p * m + i] * brow[p];
      }
      crow[j] += acc;
    }
  }
}

inline void softmax_row(const float* x, int64_t cols, float* y) {
  float m = x[0];
  for (int64_t j = 1; j < cols; ++j) m = x[j] > m ? x[j] : m;
  double sum = 0.0;
  for (int64_t j = 0; j < cols; ++j) {
    const float e = std::exp(x[j] - m);
    y[j] = e;
    sum += static_cast<double>(e);
  }
  const float inv = static_cast<float>(1.0 / sum);
  for (int64_t j = 0; j < cols; ++j) y[j] *= inv;
}

inline void span_mean_row(const float* x, int64_t frames, int64_t cols,
                          int64_t phones, int64_t i, float* y) {
  const int64_t lo = i * frames / phones;
  const int64_t hi = (i + 1) * frames / phones;
  float* out = y + i * cols;
  if (hi <= lo) {
    const float* src = x + lo * cols;
    for (int64_t c = 0; c < cols; ++c) out[c] = src[c];
    return;
  }
  const double inv = 1.0 / static_cast<double>(hi - lo);
  for (int64_t c = 0; c < cols; ++c) {
    double s = 0.0;
    for (int64_t t = lo; t < hi; ++t) s += static_cast<double>(x[t * cols + c]);
    out[c] = static_cast<float>(s * inv);
  }
}

// Unfolded convolution patches: row t holds the K taps of every input
// channel, [frames x (in_ch * kernel)], zero outside the signal. Matches the
// [out_ch][in_ch][kernel] weight layout flattened per output channel. The
// rows are independent copies, so the parallel fill is exact.
std::vector<float> im2col(const float* x, int64_t frames, int64_t in_ch,
                          int64_t kernel, bool parallel) {
  const int64_t pad = kernel / 2;
  std::vector<float> col(static_cast<size_t>(frames * in_ch * kernel), 0.0f);
#pragma omp parallel for schedule(static) if (parallel)
  for (int64_t t = 0; t < frames; ++t) {
    float* row = col.data() + t * in_ch * kernel;
    for (int64_t ci = 0; ci < in_ch; ++ci) {
      for (int64_t kk = 0; kk < kernel; ++kk) {
        const int64_t s = t + kk - pad;
        if (s < 0 || s >= frames) continue;
        row[ci * kernel + kk] = x[s * in_ch + ci];
      }
    }
  }
  return col;
}

// Scatter-add of patch gradients back onto the signal (inverse of im2col).
void col2im_add(const float* col, int64_t frames, int64_t in_ch, int64_t kernel,
                float* gx) {
  const int64_t pad = kernel / 2;
  for (int64_t t = 0; t < frames; ++t) {
    const float* row = col + t * in_ch * kernel;
    for (int64_t ci = 0; ci < in_ch; ++ci) {
      for (int64_t kk = 0; kk < kernel; ++kk) {
        const int64_t s = t + kk - pad;
        if (s < 0 || s >= frames) continue;
        gx[s * in_ch + ci] += row[ci * kernel + kk];
      }
    }
  }
}

using GemmFn = void (*)(bool, bool, int64_t, int64_t, int64_t, const float*,
                        const float*, float, float*);

void conv1d_forward_impl(GemmFn gemm_fn, bool parallel, const float* x,
                         int64_t frames, int64_t in_ch, const float* w,
                         const float* bias, int64_t out_ch, int64_t kernel,
                         float* y) {
  const std::vector<float> col = im2col(x, frames, in_ch, kernel, parallel);
  gemm_fn(false, true, frames, out_ch, in_ch * kernel, col.data(), w, 0.0f, y);
  if (bias) {
    for (int64_t t = 0; t < frames; ++t)
      for (int64_t co = 0; co < out_ch; ++co) y[t * out_ch + co] += bias[co];
  }
}

void conv1d_backward_input_impl(GemmFn gemm_fn, const float* gy, int64_t frames,
                                int64_t out_ch, const float* w, int64_t in_ch,
                                int64_t kernel, float* gx) {
  std::vector<float> gcol(static_cast<size_t>(frames * in_ch * kernel));
  gemm_fn(false, false, frames, in_ch * kernel, out_ch, gy, w, 0.0f, gcol.data());
  col2im_add(gcol.data(), frames, in_ch, kernel, gx);
}

void conv1d_backward_weight_impl(GemmFn gemm_fn, bool parallel, const float* x,
                                 const float* gy, int64_t frames, int64_t in_ch,
                                 int64_t out_ch, int64_t kernel, float* gw,
                                 float* gb) {
  if (gw) {
    const std::vector<float> col = im2col(x, frames, in_ch, kernel, parallel);
    gemm_fn(true, false, out_ch, in_ch * kernel, frames, gy, col.data(), 1.0f, gw);
  }
  if (gb) {
    for (int64_t co = 0; co < out_ch; ++co) {
      float acc = 0.0f;
      for (int64_t t = 0; t < frames; ++t) acc += gy[t * out_ch + co];
      gb[co] += acc;
    }
  }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          const float* a, const float* b, float beta, float* c) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) gemm_row(trans_a, trans_b, m, n, k, a, b, beta, c, i);
}

void conv1d_forward(const float* x, int64_t frames, int64_t in_ch, const float* w,
                    const float* bias, int64_t out_ch, int64_t kernel, float* y) {
  conv1d_forward_impl(&gemm, true, x, frames, in_ch, w, bias, out_ch, kernel, y);
}

void conv1d_backward_input(const float* gy, int64_t frames, int64_t out_ch,
                           const float* w, int64_t in_ch, int64_t kernel,
                           float* gx) {
  conv1d_backward_input_impl(&gemm, gy, frames, out_ch, w, in_ch, kernel, gx);
}

void conv1d_backward_weight(const float* x, const float* gy, int64_t frames,
                            int64_t in_ch, int64_t out_ch, int64_t kernel,
                            float* gw, float* gb) {
  conv1d_backward_weight_impl(&gemm, true, x, gy, frames, in_ch, out_ch, kernel, gw,
                              gb);
}

void softmax_rows(const float* x, int64_t rows, int64_t cols, float* y) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) softmax_row(x + r * cols, cols, y + r * cols);
}

void span_mean(const float* x, int64_t frames, int64_t cols, int64_t phones,
               float* y) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < phones; ++i) span_mean_row(x, frames, cols, phones, i, y);
}

namespace serial {

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          const float* a, const float* b, float beta, float* c) {
  for (int64_t i = 0; i < m; ++i) gemm_row(trans_a, trans_b, m, n, k, a, b, beta, c, i);
}

void conv1d_forward(const float* x, int64_t frames, int64_t in_ch, const float* w,
                    const float* bias, int64_t out_ch, int64_t kernel, float* y) {
  conv1d_forward_impl(&gemm, false, x, frames, in_ch, w, bias, out_ch, kernel, y);
}

void conv1d_backward_input(const float* gy, int64_t frames, int64_t out_ch,
                           const float* w, int64_t in_ch, int64_t kernel,
                           float* gx) {
  conv1d_backward_input_impl(&gemm, gy, frames, out_ch, w, in_ch, kernel, gx);
}

void conv1d_backward_weight(const float* x, const float* gy, int64_t frames,
                            int64_t in_ch, int64_t out_ch, int64_t kernel,
                            float* gw, float* gb) {
  conv1d_backward_weight_impl(&gemm, false, x, gy, frames, in_ch, out_ch, kernel, gw,
                              gb);
}

void softmax_rows(const float* x, int64_t rows, int64_t cols, float* y) {
  for (int64_t r = 0; r < rows; ++r) softmax_row(x + r * cols, cols, y + r * cols);
}

void span_mean(const float* x, int64_t frames, int64_t cols, int64_t phones,
               float* y) {
  for (int64_t i = 0; i < phones; ++i) span_mean_row(x, frames, cols, phones, i, y);
}

}  // namespace serial
}  // namespace kernels
}  // namespace styler
