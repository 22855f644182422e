// styler/autodiff.hpp

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

#ifndef STYLER_AUTODIFF_HPP_
#define STYLER_AUTODIFF_HPP_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "styler/rng.hpp"
#include "styler/tensor.hpp"

namespace styler {
namespace ad {

// Reverse-mode automatic differentiation on a dynamically built DAG.
// Values are computed eagerly; backward() walks the tape in reverse
// topological order and accumulates into each node's grad. Parameter nodes
// outlive the tape, so their grads accumulate across the items of a batch
// until the optimizer consumes them.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on demand, same shape as value
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;
  std::string name;  // parameters only

  Tensor& ensure_grad();
  void zero_grad();
};

Var constant(Tensor value);
Var parameter(Tensor value, std::string name);

// Seeds the (scalar) root with grad 1 and propagates.
void backward(const Var& root);

// --- arithmetic ---------------------------------------------------------
Var add(const Var& a, const Var& b);                  // equal shapes
Var add_rowvec(const Var& x, const Var& v);           // [N x C] + [1 x C]
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);                  // elementwise
Var scale(const Var& a, float s);
Var matmul(const Var& a, const Var& b, bool trans_a = false, bool trans_b = false);

// --- nonlinearities -------------------------------------------------------
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var tanh_op(const Var& x);
Var softmax_rows(const Var& x);
Var dropout(const Var& x, float p, Rng* rng, bool training);

// --- normalization ---------------------------------------------------------
Var layer_norm(const Var& x, const Var& gain, const Var& bias, float eps = 1e-5f);
// Stats per channel group over all rows, torch-compatible for [T x C] maps.
Var group_norm(const Var& x, const Var& gain, const Var& bias, int64_t groups,
               float eps = 1e-5f);

// --- convolution / embedding -------------------------------------------------
// x [T x Cin], w [Cout x Cin x K], bias [Cout] (may be null), same padding.
Var conv1d(const Var& x, const Var& w, const Var& bias);
Var embedding(const Var& table, const std::vector<int64_t>& ids);

// --- shape ops ---------------------------------------------------------------
Var slice_rows(const Var& x, int64_t begin, int64_t end);
Var slice_cols(const Var& x, int64_t begin, int64_t end);
Var concat_rows(const std::vector<Var>& xs);
Var concat_cols(const std::vector<Var>& xs);
Var reverse_rows(const Var& x);

// --- aligner ops ---------------------------------------------------------------
// Frame-to-phone compression (mel calibrator) as a differentiable op.
Var span_mean(const Var& x, int64_t n_phones);
// Phone-to-frame expansion by integer durations (length regulator).
Var repeat_rows(const Var& x, const std::vector<int64_t>& durations);

// --- reductions -----------------------------------------------------------------
Var mean_rows(const Var& x);  // [N x C] -> [1 x C]
Var mean_all(const Var& x);   // -> [1]

// --- losses ------------------------------------------------------------------------
Var mse_loss(const Var& pred, const Tensor& target);
Var mae_loss(const Var& pred, const Tensor& target);
// Two-class cross entropy from logits [1 x 2] (or [2]).
Var cross_entropy2(const Var& logits, int label);

// --- gradient routing ----------------------------------------------------------------
// Value passthrough that blocks the tape (residual-decoding gradient stop).
Var stop_gradient(const Var& x);
// Identity forward; backward multiplies the incoming grad by -lambda.
Var grad_reverse(const Var& x, float lambda);

}  // namespace ad
}  // namespace styler

#endif  // STYLER_AUTODIFF_HPP_
