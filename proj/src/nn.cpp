// styler/nn.cpp

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

#include "styler/nn.hpp"

#include <algorithm>
#include <cmath>

#include "styler/errors.hpp"

namespace styler {
namespace nn {

ad::Var ParamStore::insert(const std::string& name, Tensor init, bool trainable) {
  if (vars_.count(name)) throw ConfigError("param store: duplicate name " + name);
  ad::Var v = trainable ? ad::parameter(std::move(init), name)
                        : ad::constant(std::move(init));
  if (!trainable) v->name = name;
  order_.push_back(name);
  vars_[name] = v;
  if (trainable) trainable_.insert(name);
  return v;
}

ad::Var ParamStore::parameter(const std::string& name, Tensor init) {
  return insert(name, std::move(init), true);
}

ad::Var ParamStore::buffer(const std::string& name, Tensor init) {
  return insert(name, std::move(init), false);
}

const ad::Var& ParamStore::get(const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ConfigError("param store: unknown name " + name);
  return it->second;
}

std::vector<ad::Var> ParamStore::parameters() const {
  std::vector<ad::Var> out;
  for (const std::string& name : order_)
    if (trainable_.count(name)) out.push_back(vars_.at(name));
  return out;
}

void ParamStore::zero_grads() {
  for (auto& [name, v] : vars_) v->zero_grad();
}

Tensor init_uniform(Rng& rng, std::vector<int64_t> shape, float bound) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

Tensor init_normal(Rng& rng, std::vector<int64_t> shape, float stddev) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * stddev;
  return t;
}

Linear::Linear(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out,
               Rng& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(in));
  w = ps.parameter(prefix + ".weight", init_uniform(rng, {in, out}, bound));
  b = ps.parameter(prefix + ".bias", init_uniform(rng, {1, out}, bound));
}

ad::Var Linear::forward(const ad::Var& x) const {
  return ad::add_rowvec(ad::matmul(x, w), b);
}

EmbeddingTable::EmbeddingTable(ParamStore& ps, const std::string& name,
                               int64_t vocab, int64_t dim, Rng& rng) {
  table = ps.parameter(name, init_normal(rng, {vocab, dim},
                                         1.0f / std::sqrt(static_cast<float>(dim))));
}

ad::Var EmbeddingTable::forward(const std::vector<int64_t>& ids) const {
  return ad::embedding(table, ids);
}

Conv1dLayer::Conv1dLayer(ParamStore& ps, const std::string& prefix, int64_t in,
                         int64_t out, int64_t kernel, Rng& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(in * kernel));
  w = ps.parameter(prefix + ".weight", init_uniform(rng, {out, in, kernel}, bound));
  b = ps.parameter(prefix + ".bias", init_uniform(rng, {1, out}, bound));
}

ad::Var Conv1dLayer::forward(const ad::Var& x) const {
  return ad::conv1d(x, w, b);
}

LayerNormLayer::LayerNormLayer(ParamStore& ps, const std::string& prefix, int64_t dim) {
  gain = ps.parameter(prefix + ".gain", Tensor::full({1, dim}, 1.0f));
  bias = ps.parameter(prefix + ".bias", Tensor::zeros({1, dim}));
}

ad::Var LayerNormLayer::forward(const ad::Var& x) const {
  return ad::layer_norm(x, gain, bias);
}

GroupNormLayer::GroupNormLayer(ParamStore& ps, const std::string& prefix,
                               int64_t dim, int64_t groups_in)
    : groups(groups_in) {
  if (groups < 1 || dim % groups != 0)
    throw ConfigError("group norm: groups (" + std::to_string(groups) +
                      ") must divide channel dim (" + std::to_string(dim) + ")");
  gain = ps.parameter(prefix + ".gain", Tensor::full({1, dim}, 1.0f));
  bias = ps.parameter(prefix + ".bias", Tensor::zeros({1, dim}));
}

ad::Var GroupNormLayer::forward(const ad::Var& x) const {
  return ad::group_norm(x, gain, bias, groups);
}

BiLstm::BiLstm(ParamStore& ps, const std::string& prefix, int64_t input,
               int64_t hidden_in, int64_t layers_in, Rng& rng)
    : hidden(hidden_in), layers(layers_in) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(hidden));
  for (int64_t l = 0; l < layers; ++l) {
    const int64_t in_dim = l == 0 ? input : 2 * hidden;
    for (int dir = 0; dir < 2; ++dir) {
      const std::string p = prefix + ".l" + std::to_string(l) +
                            (dir == 0 ? ".fwd" : ".bwd");
      wx.push_back(ps.parameter(p + ".wx", init_uniform(rng, {in_dim, 4 * hidden}, bound)));
      wh.push_back(ps.parameter(p + ".wh", init_uniform(rng, {hidden, 4 * hidden}, bound)));
      b.push_back(ps.parameter(p + ".bias", init_uniform(rng, {1, 4 * hidden}, bound)));
    }
  }
}

namespace {

ad::Var lstm_direction(const ad::Var& x, const ad::Var& wx, const ad::Var& wh,
                       const ad::Var& b, int64_t hidden, bool reverse) {
  const ad::Var input = reverse ? ad::reverse_rows(x) : x;
  const int64_t steps = input->value.rows();
  const ad::Var xw = ad::add_rowvec(ad::matmul(input, wx), b);  // [N x 4H]
  ad::Var h = ad::constant(Tensor::zeros({1, hidden}));
  ad::Var c = ad::constant(Tensor::zeros({1, hidden}));
  std::vector<ad::Var> outs;
  outs.reserve(static_cast<size_t>(steps));
  for (int64_t t = 0; t < steps; ++t) {
    const ad::Var z = ad::add(ad::slice_rows(xw, t, t + 1), ad::matmul(h, wh));
    const ad::Var gi = ad::sigmoid(ad::slice_cols(z, 0, hidden));
    const ad::Var gf = ad::sigmoid(ad::slice_cols(z, hidden, 2 * hidden));
    const ad::Var gg = ad::tanh_op(ad::slice_cols(z, 2 * hidden, 3 * hidden));
    const ad::Var go = ad::sigmoid(ad::slice_cols(z, 3 * hidden, 4 * hidden));
    c = ad::add(ad::mul(gf, c), ad::mul(gi, gg));
    h = ad::mul(go, ad::tanh_op(c));
    outs.push_back(h);
  }
  const ad::Var seq = ad::concat_rows(outs);
  return reverse ? ad::reverse_rows(seq) : seq;
}

}  // namespace

ad::Var BiLstm::forward(const ad::Var& x) const {
  ad::Var cur = x;
  for (int64_t l = 0; l < layers; ++l) {
    const size_t f = static_cast<size_t>(l * 2);
    const ad::Var fwd = lstm_direction(cur, wx[f], wh[f], b[f], hidden, false);
    const ad::Var bwd = lstm_direction(cur, wx[f + 1], wh[f + 1], b[f + 1], hidden, true);
    cur = ad::concat_cols({fwd, bwd});
  }
  return cur;
}

MultiHeadAttention::MultiHeadAttention(ParamStore& ps, const std::string& prefix,
                                       int64_t dim, int64_t heads_in,
                                       float dropout_in, Rng& rng)
    : heads(heads_in), dropout_p(dropout_in) {
  if (heads < 1 || dim % heads != 0)
    throw ConfigError("attention: head count must divide model dim");
  wq = Linear(ps, prefix + ".wq", dim, dim, rng);
  wk = Linear(ps, prefix + ".wk", dim, dim, rng);
  wv = Linear(ps, prefix + ".wv", dim, dim, rng);
  wo = Linear(ps, prefix + ".wo", dim, dim, rng);
}

ad::Var MultiHeadAttention::forward(Ctx& ctx, const ad::Var& x) const {
  const int64_t dim = x->value.cols();
  const int64_t dk = dim / heads;
  const float inv_sqrt_dk = 1.0f / std::sqrt(static_cast<float>(dk));
  const ad::Var q = wq.forward(x);
  const ad::Var k = wk.forward(x);
  const ad::Var v = wv.forward(x);
  std::vector<ad::Var> head_out;
  head_out.reserve(static_cast<size_t>(heads));
  for (int64_t h = 0; h < heads; ++h) {
    const int64_t c0 = h * dk;
    const ad::Var qh = ad::slice_cols(q, c0, c0 + dk);
    const ad::Var kh = ad::slice_cols(k, c0, c0 + dk);
    const ad::Var vh = ad::slice_cols(v, c0, c0 + dk);
    ad::Var probs = ad::softmax_rows(ad::scale(ad::matmul(qh, kh, false, true), inv_sqrt_dk));
    probs = ad::dropout(probs, dropout_p, ctx.rng, ctx.training);
    head_out.push_back(ad::matmul(probs, vh));
  }
  return wo.forward(ad::concat_cols(head_out));
}

FftBlock::FftBlock(ParamStore& ps, const std::string& prefix, int64_t dim,
                   int64_t heads, int64_t conv_filter, int64_t kernel1,
                   int64_t kernel2, float dropout_in, Rng& rng)
    : dropout_p(dropout_in) {
  attn = MultiHeadAttention(ps, prefix + ".attn", dim, heads, dropout_in, rng);
  ln1 = LayerNormLayer(ps, prefix + ".ln1", dim);
  ln2 = LayerNormLayer(ps, prefix + ".ln2", dim);
  conv1 = Conv1dLayer(ps, prefix + ".conv1", dim, conv_filter, kernel1, rng);
  conv2 = Conv1dLayer(ps, prefix + ".conv2", conv_filter, dim, kernel2, rng);
}

ad::Var FftBlock::forward(Ctx& ctx, const ad::Var& x) const {
  ad::Var a = attn.forward(ctx, x);
  a = ad::dropout(a, dropout_p, ctx.rng, ctx.training);
  const ad::Var y = ln1.forward(ad::add(x, a));
  ad::Var f = conv2.forward(ad::relu(conv1.forward(y)));
  f = ad::dropout(f, dropout_p, ctx.rng, ctx.training);
  return ln2.forward(ad::add(y, f));
}

Tensor sinusoid_table(int64_t length, int64_t dim) {
  Tensor t({length, dim});
  for (int64_t pos = 0; pos < length; ++pos) {
    for (int64_t i = 0; i < dim; ++i) {
      const double angle =
          pos / std::pow(10000.0, 2.0 * static_cast<double>(i / 2) / static_cast<double>(dim));
      t(pos, i) = static_cast<float>((i % 2 == 0) ? std::sin(angle) : std::cos(angle));
    }
  }
  return t;
}

double NoamSchedule::lr(int64_t step) const {
  if (step < 1) step = 1;
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return std::pow(dim_scale, -0.5) * std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

Adam::Adam(std::vector<ad::Var> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const ad::Var& p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step(double lr, double clip_norm) {
  double sq = 0.0;
  for (const ad::Var& p : params_) {
    p->ensure_grad();
    for (int64_t i = 0; i < p->grad.numel(); ++i)
      sq += static_cast<double>(p->grad[i]) * p->grad[i];
  }
  const double norm = std::sqrt(sq);
  const float clip_scale =
      (clip_norm > 0.0 && norm > clip_norm) ? static_cast<float>(clip_norm / norm) : 1.0f;

  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const float b1 = static_cast<float>(beta1_);
  const float b2 = static_cast<float>(beta2_);
  const float lr_f = static_cast<float>(lr);
  const float inv_bc1 = static_cast<float>(1.0 / bc1);
  const float inv_bc2 = static_cast<float>(1.0 / bc2);
  const float eps_f = static_cast<float>(eps_);

  for (size_t pi = 0; pi < params_.size(); ++pi) {
    ad::Node& p = *params_[pi];
    Tensor& m = m_[pi];
    Tensor& v = v_[pi];
    for (int64_t i = 0; i < p.value.numel(); ++i) {
      const float g = p.grad[i] * clip_scale;
      m[i] = b1 * m[i] + (1.0f - b1) * g;
      v[i] = b2 * v[i] + (1.0f - b2) * g * g;
      const float mhat = m[i] * inv_bc1;
      const float vhat = v[i] * inv_bc2;
      p.value[i] -= lr_f * mhat / (std::sqrt(vhat) + eps_f);
    }
    p.zero_grad();
  }
}

void Adam::restore(size_t i, Tensor m, Tensor v) {
  if (i >= params_.size()) throw CheckpointError("optimizer state index out of range");
  if (!m.same_shape(params_[i]->value) || !v.same_shape(params_[i]->value))
    throw CheckpointError("optimizer state shape mismatch for " + params_[i]->name);
  m_[i] = std::move(m);
  v_[i] = std::move(v);
}

}  // namespace nn
}  // namespace styler
