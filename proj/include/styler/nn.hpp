// styler/nn.hpp

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

#ifndef STYLER_NN_HPP_
#define STYLER_NN_HPP_

#include <map>
#include <set>
#include <string>
#include <vector>

#include "styler/autodiff.hpp"
#include "styler/rng.hpp"

namespace styler {
namespace nn {

// Forward-pass context: training toggles dropout, which draws from the
// supplied stream.
struct Ctx {
  bool training = false;
  Rng* rng = nullptr;
};

// Named parameter registry. Parameters are trainable; buffers are saved with
// checkpoints but never optimized (imported speaker tables). Registration
// order is stable and defines the optimizer state layout.
class ParamStore {
 public:
  ad::Var parameter(const std::string& name, Tensor init);
  ad::Var buffer(const std::string& name, Tensor init);

  const std::vector<std::string>& order() const { return order_; }
  bool contains(const std::string& name) const { return vars_.count(name) > 0; }
  bool is_parameter(const std::string& name) const { return trainable_.count(name) > 0; }
  const ad::Var& get(const std::string& name) const;

  std::vector<ad::Var> parameters() const;  // trainable, registration order
  void zero_grads();

 private:
  ad::Var insert(const std::string& name, Tensor init, bool trainable);
  std::vector<std::string> order_;
  std::map<std::string, ad::Var> vars_;
  std::set<std::string> trainable_;
};

Tensor init_uniform(Rng& rng, std::vector<int64_t> shape, float bound);
Tensor init_normal(Rng& rng, std::vector<int64_t> shape, float stddev);

// y = x @ w + b with w [in x out].
struct Linear {
  Linear() = default;
  Linear(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out, Rng& rng);
  ad::Var forward(const ad::Var& x) const;
  ad::Var w, b;
};

struct EmbeddingTable {
  EmbeddingTable() = default;
  EmbeddingTable(ParamStore& ps, const std::string& name, int64_t vocab,
                 int64_t dim, Rng& rng);
  ad::Var forward(const std::vector<int64_t>& ids) const;
  ad::Var table;
};

struct Conv1dLayer {
  Conv1dLayer() = default;
  Conv1dLayer(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out,
              int64_t kernel, Rng& rng);
  ad::Var forward(const ad::Var& x) const;
  ad::Var w, b;
};

struct LayerNormLayer {
  LayerNormLayer() = default;
  LayerNormLayer(ParamStore& ps, const std::string& prefix, int64_t dim);
  ad::Var forward(const ad::Var& x) const;
  ad::Var gain, bias;
};

struct GroupNormLayer {
  GroupNormLayer() = default;
  // groups must divide dim (checked at construction).
  GroupNormLayer(ParamStore& ps, const std::string& prefix, int64_t dim, int64_t groups);
  ad::Var forward(const ad::Var& x) const;
  ad::Var gain, bias;
  int64_t groups = 1;
};

// Stacked bidirectional LSTM; output is the last layer's forward/backward
// hidden sequences concatenated channel-wise, [N x 2*hidden].
struct BiLstm {
  BiLstm() = default;
  BiLstm(ParamStore& ps, const std::string& prefix, int64_t input, int64_t hidden,
         int64_t layers, Rng& rng);
  ad::Var forward(const ad::Var& x) const;
  int64_t hidden = 0;
  int64_t layers = 0;
  std::vector<ad::Var> wx, wh, b;  // index = layer * 2 + direction
};

struct MultiHeadAttention {
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& ps, const std::string& prefix, int64_t dim,
                     int64_t heads, float dropout_p, Rng& rng);
  ad::Var forward(Ctx& ctx, const ad::Var& x) const;
  Linear wq, wk, wv, wo;
  int64_t heads = 1;
  float dropout_p = 0.0f;
};

// Self-attention plus 1-D convolutional feed-forward, post-norm residuals.
struct FftBlock {
  FftBlock() = default;
  FftBlock(ParamStore& ps, const std::string& prefix, int64_t dim, int64_t heads,
           int64_t conv_filter, int64_t kernel1, int64_t kernel2, float dropout_p,
           Rng& rng);
  ad::Var forward(Ctx& ctx, const ad::Var& x) const;
  MultiHeadAttention attn;
  LayerNormLayer ln1, ln2;
  Conv1dLayer conv1, conv2;
  float dropout_p = 0.0f;
};

// Interleaved sin/cos position table, [length x dim].
Tensor sinusoid_table(int64_t length, int64_t dim);

// lr(step) = dim_scale^-0.5 * min(step^-0.5, step * warmup^-1.5); the peak
// sits exactly at step == warmup.
struct NoamSchedule {
  double dim_scale = 256.0;
  int64_t warmup = 4000;
  double lr(int64_t step) const;
};

// Adam with bias correction and global-norm gradient clipping. Grad buffers
// are consumed and cleared by step().
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<ad::Var> params, double beta1 = 0.9, double beta2 = 0.98,
       double eps = 1e-9);
  void step(double lr, double clip_norm);
  int64_t steps_taken() const { return t_; }

  // Checkpoint plumbing: state tensors are addressed by parameter index.
  size_t size() const { return params_.size(); }
  const Tensor& moment1(size_t i) const { return m_[i]; }
  const Tensor& moment2(size_t i) const { return v_[i]; }
  void restore(size_t i, Tensor m, Tensor v);
  void set_steps_taken(int64_t t) { t_ = t; }

 private:
  std::vector<ad::Var> params_;
  std::vector<Tensor> m_, v_;
  double beta1_ = 0.9, beta2_ = 0.98, eps_ = 1e-9;
  int64_t t_ = 0;
};

}  // namespace nn
}  // namespace styler

#endif  // STYLER_NN_HPP_
