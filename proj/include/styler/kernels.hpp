// styler/kernels.hpp

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

#ifndef STYLER_KERNELS_HPP_
#define STYLER_KERNELS_HPP_

#include <cstdint>

namespace styler {
namespace kernels {

// Hot inner loops, parallelized with OpenMP over disjoint output rows.
// Every kernel has a plain serial twin under kernels::serial with the same
// per-element accumulation order, so the two produce bit-identical results;
// the unit tests assert that equality and tools/styler-bench compares their
// throughput. Fixing the reduction order per output element also makes
// results independent of the OpenMP thread count.

// c[m,n] = op(a) @ op(b) + beta * c, row-major contiguous.
// op(a) is [m,k] (stored transposed when trans_a), op(b) is [k,n].
// beta is 0 (c treated as uninitialized) or 1 (accumulate).
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          const float* a, const float* b, float beta, float* c);

// Same-padded 1-D convolution over x [frames, in_ch] with w
// [out_ch, in_ch, kernel] and optional bias, via an im2col buffer and gemm.
// y is [frames, out_ch].
void conv1d_forward(const float* x, int64_t frames, int64_t in_ch,
                    const float* w, const float* bias, int64_t out_ch,
                    int64_t kernel, float* y);

// Accumulates (+=) into gx[frames, in_ch].
void conv1d_backward_input(const float* gy, int64_t frames, int64_t out_ch,
                           const float* w, int64_t in_ch, int64_t kernel,
                           float* gx);

// Accumulates (+=) into gw[out_ch, in_ch, kernel] and gb[out_ch]; either
// destination may be null.
void conv1d_backward_weight(const float* x, const float* gy, int64_t frames,
                            int64_t in_ch, int64_t out_ch, int64_t kernel,
                            float* gw, float* gb);

// Row-wise softmax of x[rows, cols] into y (may alias x).
void softmax_rows(const float* x, int64_t rows, int64_t cols, float* y);

// Frame-to-phone linear compression/expansion: phone i receives the mean of
// source rows [floor(i*frames/phones), floor((i+1)*frames/phones)); an empty
// range copies row floor(i*frames/phones). Accumulation is in double, so a
// constant block maps to exactly the constant.
void span_mean(const float* x, int64_t frames, int64_t cols, int64_t phones,
               float* y);

namespace serial {

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          const float* a, const float* b, float beta, float* c);
void conv1d_forward(const float* x, int64_t frames, int64_t in_ch,
                    const float* w, const float* bias, int64_t out_ch,
                    int64_t kernel, float* y);
void conv1d_backward_input(const float* gy, int64_t frames, int64_t out_ch,
                           const float* w, int64_t in_ch, int64_t kernel,
                           float* gx);
void conv1d_backward_weight(const float* x, const float* gy, int64_t frames,
                            int64_t in_ch, int64_t out_ch, int64_t kernel,
                            float* gw, float* gb);
void softmax_rows(const float* x, int64_t rows, int64_t cols, float* y);
void span_mean(const float* x, int64_t frames, int64_t cols, int64_t phones,
               float* y);

}  // namespace serial
}  // namespace kernels
}  // namespace styler

#endif  // STYLER_KERNELS_HPP_
