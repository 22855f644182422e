// styler/autodiff.cpp

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

#include "styler/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "styler/errors.hpp"
#include "styler/kernels.hpp"

namespace styler {
namespace ad {

Tensor& Node::ensure_grad() {
  if (grad.numel() != value.numel()) grad = Tensor(value.shape());
  return grad;
}

void Node::zero_grad() {
  if (grad.numel()) grad.fill(0.0f);
}

namespace {

Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const Var& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backward_fn = std::move(backward_fn);
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw InvalidInput(std::string(op) + ": shape mismatch " +
                       a->value.shape_string() + " vs " + b->value.shape_string());
}

void accumulate(Node& p, const float* g, int64_t n) {
  float* dst = p.ensure_grad().data();
  for (int64_t i = 0; i < n; ++i) dst[i] += g[i];
}

}  // namespace

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return n;
}

Var parameter(Tensor value, std::string name) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->name = std::move(name);
  return n;
}

void backward(const Var& root) {
  if (root->value.numel() != 1)
    throw InvalidInput("backward: root must be a scalar");
  if (!root->requires_grad) return;

  // Iterative post-order over the requires-grad subgraph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    bool descended = false;
    while (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
        descended = true;
        break;
      }
    }
    if (descended) continue;
    order.push_back(node);
    stack.pop_back();
  }

  root->ensure_grad();
  root->grad[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(*n);
    }
  }
}

// --- arithmetic ---------------------------------------------------------

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out(a->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] + b->value[i];
  return make_node(std::move(out), {a, b}, [n](Node& self) {
    if (self.parents[0]->requires_grad) accumulate(*self.parents[0], self.grad.data(), n);
    if (self.parents[1]->requires_grad) accumulate(*self.parents[1], self.grad.data(), n);
  });
}

Var add_rowvec(const Var& x, const Var& v) {
  const int64_t rows = x->value.rows();
  const int64_t cols = x->value.cols();
  if (v->value.numel() != cols)
    throw InvalidInput("add_rowvec: vector width does not match columns");
  Tensor out(x->value.shape());
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c)
      out[r * cols + c] = x->value[r * cols + c] + v->value[c];
  return make_node(std::move(out), {x, v}, [rows, cols](Node& self) {
    if (self.parents[0]->requires_grad)
      accumulate(*self.parents[0], self.grad.data(), rows * cols);
    if (self.parents[1]->requires_grad) {
      float* gv = self.parents[1]->ensure_grad().data();
      for (int64_t c = 0; c < cols; ++c) {
        float acc = 0.0f;
        for (int64_t r = 0; r < rows; ++r) acc += self.grad[r * cols + c];
        gv[c] += acc;
      }
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] - b->value[i];
  return make_node(std::move(out), {a, b}, [n](Node& self) {
    if (self.parents[0]->requires_grad) accumulate(*self.parents[0], self.grad.data(), n);
    if (self.parents[1]->requires_grad) {
      float* gb = self.parents[1]->ensure_grad().data();
      for (int64_t i = 0; i < n; ++i) gb[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] * b->value[i];
  return make_node(std::move(out), {a, b}, [n](Node& self) {
    if (self.parents[0]->requires_grad) {
      float* ga = self.parents[0]->ensure_grad().data();
      const float* bv = self.parents[1]->value.data();
      for (int64_t i = 0; i < n; ++i) ga[i] += self.grad[i] * bv[i];
    }
    if (self.parents[1]->requires_grad) {
      float* gb = self.parents[1]->ensure_grad().data();
      const float* av = self.parents[0]->value.data();
      for (int64_t i = 0; i < n; ++i) gb[i] += self.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, float s) {
  Tensor out(a->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] * s;
  return make_node(std::move(out), {a}, [n, s](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    float* ga = self.parents[0]->ensure_grad().data();
    for (int64_t i = 0; i < n; ++i) ga[i] += self.grad[i] * s;
  });
}

Var matmul(const Var& a, const Var& b, bool trans_a, bool trans_b) {
  const int64_t m = trans_a ? a->value.cols() : a->value.rows();
  const int64_t ka = trans_a ? a->value.rows() : a->value.cols();
  const int64_t n = trans_b ? b->value.rows() : b->value.cols();
  const int64_t kb = trans_b ? b->value.cols() : b->value.rows();
  if (ka != kb)
    throw InvalidInput("matmul: inner dimensions do not match: " +
                       a->value.shape_string() + " vs " + b->value.shape_string());
  Tensor out({m, n});
  kernels::gemm(trans_a, trans_b, m, n, ka, a->value.data(), b->value.data(),
                0.0f, out.data());
  const int64_t k = ka;
  return make_node(std::move(out), {a, b}, [m, n, k, trans_a, trans_b](Node& self) {
    const float* gy = self.grad.data();
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      float* ga = pa.ensure_grad().data();
      if (!trans_a)
        kernels::gemm(false, !trans_b, m, k, n, gy, pb.value.data(), 1.0f, ga);
      else
        kernels::gemm(trans_b, true, k, m, n, pb.value.data(), gy, 1.0f, ga);
    }
    if (pb.requires_grad) {
      float* gb = pb.ensure_grad().data();
      if (!trans_b)
        kernels::gemm(!trans_a, false, k, n, m, pa.value.data(), gy, 1.0f, gb);
      else
        kernels::gemm(true, trans_a, n, k, m, gy, pa.value.data(), 1.0f, gb);
    }
  });
}

// --- nonlinearities -------------------------------------------------------

Var relu(const Var& x) {
  Tensor out(x->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = x->value[i] > 0.0f ? x->value[i] : 0.0f;
  return make_node(std::move(out), {x}, [n](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    float* gx = self.parents[0]->ensure_grad().data();
    const float* xv = self.parents[0]->value.data();
    for (int64_t i = 0; i < n; ++i)
      if (xv[i] > 0.0f) gx[i] += self.grad[i];
  });
}

Var sigmoid(const Var& x) {
  Tensor out(x->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i)
    out[i] = 1.0f / (1.0f + std::exp(-x->value[i]));
  return make_node(std::move(out), {x}, [n](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    float* gx = self.parents[0]->ensure_grad().data();
    const float* y = self.value.data();
    for (int64_t i = 0; i < n; ++i) gx[i] += self.grad[i] * y[i] * (1.0f - y[i]);
  });
}

Var tanh_op(const Var& x) {
  Tensor out(x->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = std::tanh(x->value[i]);
  return make_node(std::move(out), {x}, [n](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    float* gx = self.parents[0]->ensure_grad().data();
    const float* y = self.value.data();
    for (int64_t i = 0; i < n; ++i) gx[i] += self.grad[i] * (1.0f - y[i] * y[i]);
  });
}

Var softmax_rows(const Var& x) {
  const int64_t rows = x->value.rows();
  const int64_t cols = x->value.cols();
  Tensor out(x->value.shape());
  kernels::softmax_rows(x->value.data(), rows, cols, out.data());
  return make_node(std::move(out), {x}, [rows, cols](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    float* gx = self.parents[0]->ensure_grad().data();
    const float* y = self.value.data();
    const float* g = self.grad.data();
    for (int64_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (int64_t c = 0; c < cols; ++c)
        dot += static_cast<double>(g[r * cols + c]) * y[r * cols + c];
      const float d = static_cast<float>(dot);
      for (int64_t c = 0; c < cols; ++c)
        gx[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - d);
    }
  });
}

Var dropout(const Var& x, float p, Rng* rng, bool training) {
  if (!training || p <= 0.0f) return x;
  if (p >= 1.0f) throw InvalidInput("dropout: rate must be < 1");
  if (!rng) throw InvalidInput("dropout: rng required in training mode");
  const int64_t n = x->value.numel();
  auto mask = std::make_shared<std::vector<float>>(static_cast<size_t>(n));
  const float keep_scale = 1.0f / (1.0f - p);
  Tensor out(x->value.shape());
  for (int64_t i = 0; i < n; ++i) {
    const float m = rng->uniform() < p ? 0.0f : keep_scale;
    (*mask)[static_cast<size_t>(i)] = m;
    out[i] = x->value[i] * m;
  }
  return make_node(std::move(out), {x}, [n, mask](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    float* gx = self.parents[0]->ensure_grad().data();
    for (int64_t i = 0; i < n; ++i) gx[i] += self.grad[i] * (*mask)[static_cast<size_t>(i)];
  });
}

// --- normalization ---------------------------------------------------------

namespace {

// Shared body for layer/group norm backward over one block of `idx` elements.
struct NormSaved {
  std::vector<float> xhat;
  std::vector<float> inv_std;  // one per block
};

}  // namespace

Var layer_norm(const Var& x, const Var& gain, const Var& bias, float eps) {
  const int64_t rows = x->value.rows();
  const int64_t cols = x->value.cols();
  if (gain->value.numel() != cols || bias->value.numel() != cols)
    throw InvalidInput("layer_norm: affine width does not match columns");
  auto saved = std::make_shared<NormSaved>();
  saved->xhat.resize(static_cast<size_t>(rows * cols));
  saved->inv_std.resize(static_cast<size_t>(rows));
  Tensor out(x->value.shape());
  for (int64_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (int64_t c = 0; c < cols; ++c) mean += x->value[r * cols + c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (int64_t c = 0; c < cols; ++c) {
      const double d = x->value[r * cols + c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const float inv_std = static_cast<float>(1.0 / std::sqrt(var + eps));
    saved->inv_std[static_cast<size_t>(r)] = inv_std;
    for (int64_t c = 0; c < cols; ++c) {
      const float xh = static_cast<float>((x->value[r * cols + c] - mean)) * inv_std;
      saved->xhat[static_cast<size_t>(r * cols + c)] = xh;
      out[r * cols + c] = xh * gain->value[c] + bias->value[c];
    }
  }
  return make_node(std::move(out), {x, gain, bias}, [rows, cols, saved](Node& self) {
    Node& px = *self.parents[0];
    Node& pg = *self.parents[1];
    Node& pb = *self.parents[2];
    const float* g = self.grad.data();
    if (pg.requires_grad) {
      float* gg = pg.ensure_grad().data();
      for (int64_t c = 0; c < cols; ++c) {
        float acc = 0.0f;
        for (int64_t r = 0; r < rows; ++r)
          acc += g[r * cols + c] * saved->xhat[static_cast<size_t>(r * cols + c)];
        gg[c] += acc;
      }
    }
    if (pb.requires_grad) {
      float* gb = pb.ensure_grad().data();
      for (int64_t c = 0; c < cols; ++c) {
        float acc = 0.0f;
        for (int64_t r = 0; r < rows; ++r) acc += g[r * cols + c];
        gb[c] += acc;
      }
    }
    if (px.requires_grad) {
      float* gx = px.ensure_grad().data();
      const float* gainv = pg.value.data();
      for (int64_t r = 0; r < rows; ++r) {
        double m1 = 0.0, m2 = 0.0;
        for (int64_t c = 0; c < cols; ++c) {
          const float gh = g[r * cols + c] * gainv[c];
          const float xh = saved->xhat[static_cast<size_t>(r * cols + c)];
          m1 += gh;
          m2 += static_cast<double>(gh) * xh;
        }
        m1 /= static_cast<double>(cols);
        m2 /= static_cast<double>(cols);
        const float inv_std = saved->inv_std[static_cast<size_t>(r)];
        for (int64_t c = 0; c < cols; ++c) {
          const float gh = g[r * cols + c] * gainv[c];
          const float xh = saved->xhat[static_cast<size_t>(r * cols + c)];
          gx[r * cols + c] += inv_std * (gh - static_cast<float>(m1) -
                                         xh * static_cast<float>(m2));
        }
      }
    }
  });
}

Var group_norm(const Var& x, const Var& gain, const Var& bias, int64_t groups,
               float eps) {
  const int64_t rows = x->value.rows();
  const int64_t cols = x->value.cols();
  if (groups < 1 || cols % groups != 0)
    throw ConfigError("group_norm: groups must divide the channel count");
  if (gain->value.numel() != cols || bias->value.numel() != cols)
    throw InvalidInput("group_norm: affine width does not match channels");
  const int64_t gw = cols / groups;  // channels per group
  auto saved = std::make_shared<NormSaved>();
  saved->xhat.resize(static_cast<size_t>(rows * cols));
  saved->inv_std.resize(static_cast<size_t>(groups));
  Tensor out(x->value.shape());
  for (int64_t grp = 0; grp < groups; ++grp) {
    const int64_t c0 = grp * gw;
    double mean = 0.0;
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = c0; c < c0 + gw; ++c) mean += x->value[r * cols + c];
    const double count = static_cast<double>(rows * gw);
    mean /= count;
    double var = 0.0;
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = c0; c < c0 + gw; ++c) {
        const double d = x->value[r * cols + c] - mean;
        var += d * d;
      }
    var /= count;
    const float inv_std = static_cast<float>(1.0 / std::sqrt(var + eps));
    saved->inv_std[static_cast<size_t>(grp)] = inv_std;
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = c0; c < c0 + gw; ++c) {
        const float xh = static_cast<float>(x->value[r * cols + c] - mean) * inv_std;
        saved->xhat[static_cast<size_t>(r * cols + c)] = xh;
        out[r * cols + c] = xh * gain->value[c] + bias->value[c];
      }
  }
  return make_node(std::move(out), {x, gain, bias},
                   [rows, cols, groups, gw, saved](Node& self) {
    Node& px = *self.parents[0];
    Node& pg = *self.parents[1];
    Node& pb = *self.parents[2];
    const float* g = self.grad.data();
    if (pg.requires_grad) {
      float* gg = pg.ensure_grad().data();
      for (int64_t c = 0; c < cols; ++c) {
        float acc = 0.0f;
        for (int64_t r = 0; r < rows; ++r)
          acc += g[r * cols + c] * saved->xhat[static_cast<size_t>(r * cols + c)];
        gg[c] += acc;
      }
    }
    if (pb.requires_grad) {
      float* gb = pb.ensure_grad().data();
      for (int64_t c = 0; c < cols; ++c) {
        float acc = 0.0f;
        for (int64_t r = 0; r < rows; ++r) acc += g[r * cols + c];
        gb[c] += acc;
      }
    }
    if (px.requires_grad) {
      float* gx = px.ensure_grad().data();
      const float* gainv = pg.value.data();
      const double count = static_cast<double>(rows * gw);
      for (int64_t grp = 0; grp < groups; ++grp) {
        const int64_t c0 = grp * gw;
        double m1 = 0.0, m2 = 0.0;
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t c = c0; c < c0 + gw; ++c) {
            const float gh = g[r * cols + c] * gainv[c];
            m1 += gh;
            m2 += static_cast<double>(gh) * saved->xhat[static_cast<size_t>(r * cols + c)];
          }
        m1 /= count;
        m2 /= count;
        const float inv_std = saved->inv_std[static_cast<size_t>(grp)];
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t c = c0; c < c0 + gw; ++c) {
            const float gh = g[r * cols + c] * gainv[c];
            const float xh = saved->xhat[static_cast<size_t>(r * cols + c)];
            gx[r * cols + c] += inv_std * (gh - static_cast<float>(m1) -
                                           xh * static_cast<float>(m2));
          }
      }
    }
  });
}

// --- convolution / embedding -------------------------------------------------

Var conv1d(const Var& x, const Var& w, const Var& bias) {
  if (w->value.rank() != 3) throw InvalidInput("conv1d: weight must be rank 3");
  const int64_t frames = x->value.rows();
  const int64_t in_ch = x->value.cols();
  const int64_t out_ch = w->value.dim(0);
  const int64_t kernel = w->value.dim(2);
  if (w->value.dim(1) != in_ch)
    throw InvalidInput("conv1d: input channels do not match weight");
  if (bias && bias->value.numel() != out_ch)
    throw InvalidInput("conv1d: bias width does not match output channels");
  Tensor out({frames, out_ch});
  kernels::conv1d_forward(x->value.data(), frames, in_ch, w->value.data(),
                          bias ? bias->value.data() : nullptr, out_ch, kernel,
                          out.data());
  std::vector<Var> parents = {x, w};
  if (bias) parents.push_back(bias);
  return make_node(std::move(out), std::move(parents),
                   [frames, in_ch, out_ch, kernel](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Node* pb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
    const float* gy = self.grad.data();
    if (px.requires_grad) {
      kernels::conv1d_backward_input(gy, frames, out_ch, pw.value.data(), in_ch,
                                     kernel, px.ensure_grad().data());
    }
    const bool need_w = pw.requires_grad;
    const bool need_b = pb && pb->requires_grad;
    if (need_w || need_b) {
      kernels::conv1d_backward_weight(
          px.value.data(), gy, frames, in_ch, out_ch, kernel,
          need_w ? pw.ensure_grad().data() : nullptr,
          need_b ? pb->ensure_grad().data() : nullptr);
    }
  });
}

Var embedding(const Var& table, const std::vector<int64_t>& ids) {
  const int64_t vocab = table->value.rows();
  const int64_t dim = table->value.cols();
  for (int64_t id : ids)
    if (id < 0 || id >= vocab)
      throw InvalidInput("embedding: id " + std::to_string(id) + " out of range");
  const int64_t n = static_cast<int64_t>(ids.size());
  Tensor out({n, dim});
  for (int64_t i = 0; i < n; ++i)
    std::memcpy(out.data() + i * dim,
                table->value.data() + ids[static_cast<size_t>(i)] * dim,
                static_cast<size_t>(dim) * sizeof(float));
  auto ids_copy = std::make_shared<std::vector<int64_t>>(ids);
  return make_node(std::move(out), {table}, [n, dim, ids_copy](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    float* gt = self.parents[0]->ensure_grad().data();
    for (int64_t i = 0; i < n; ++i) {
      const int64_t row = (*ids_copy)[static_cast<size_t>(i)];
      for (int64_t c = 0; c < dim; ++c)
        gt[row * dim + c] += self.grad[i * dim + c];
    }
  });
}

// --- shape ops ---------------------------------------------------------------

Var slice_rows(const Var& x, int64_t begin, int64_t end) {
  const int64_t rows = x->value.rows();
  const int64_t cols = x->value.cols();
  if (begin < 0 || end > rows || begin >= end)
    throw InvalidInput("slice_rows: bad range");
  Tensor out({end - begin, cols});
  std::memcpy(out.data(), x->value.data() + begin * cols,
              static_cast<size_t>((end - begin) * cols) * sizeof(float));
  return make_node(std::move(out), {x}, [begin, cols](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    float* gx = self.parents[0]->ensure_grad().data();
    const int64_t n = self.grad.numel();
    for (int64_t i = 0; i < n; ++i) gx[begin * cols + i] += self.grad[i];
  });
}

Var slice_cols(const Var& x, int64_t begin, int64_t end) {
  const int64_t rows = x->value.rows();
  const int64_t cols = x->value.cols();
  if (begin < 0 || end > cols || begin >= end)
    throw InvalidInput("slice_cols: bad range");
  const int64_t width = end - begin;
  Tensor out({rows, width});
  for (int64_t r = 0; r < rows; ++r)
    std::memcpy(out.data() + r * width, x->value.data() + r * cols + begin,
                static_cast<size_t>(width) * sizeof(float));
  return make_node(std::move(out), {x}, [rows, cols, begin, width](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    float* gx = self.parents[0]->ensure_grad().data();
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < width; ++c)
        gx[r * cols + begin + c] += self.grad[r * width + c];
  });
}

Var concat_rows(const std::vector<Var>& xs) {
  if (xs.empty()) throw InvalidInput("concat_rows: empty input");
  const int64_t cols = xs[0]->value.cols();
  int64_t rows = 0;
  for (const Var& x : xs) {
    if (x->value.cols() != cols) throw InvalidInput("concat_rows: column mismatch");
    rows += x->value.rows();
  }
  Tensor out({rows, cols});
  int64_t r = 0;
  for (const Var& x : xs) {
    std::memcpy(out.data() + r * cols, x->value.data(),
                static_cast<size_t>(x->value.numel()) * sizeof(float));
    r += x->value.rows();
  }
  return make_node(std::move(out), xs, [cols](Node& self) {
    int64_t r = 0;
    for (const Var& p : self.parents) {
      const int64_t n = p->value.numel();
      if (p->requires_grad) accumulate(*p, self.grad.data() + r * cols, n);
      r += p->value.rows();
    }
  });
}

Var concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw InvalidInput("concat_cols: empty input");
  const int64_t rows = xs[0]->value.rows();
  int64_t cols = 0;
  for (const Var& x : xs) {
    if (x->value.rows() != rows) throw InvalidInput("concat_cols: row mismatch");
    cols += x->value.cols();
  }
  Tensor out({rows, cols});
  int64_t offset = 0;
  for (const Var& x : xs) {
    const int64_t w = x->value.cols();
    for (int64_t r = 0; r < rows; ++r)
      std::memcpy(out.data() + r * cols + offset, x->value.data() + r * w,
                  static_cast<size_t>(w) * sizeof(float));
    offset += w;
  }
  return make_node(std::move(out), xs, [rows, cols](Node& self) {
    int64_t offset = 0;
    for (const Var& p : self.parents) {
      const int64_t w = p->value.cols();
      if (p->requires_grad) {
        float* gp = p->ensure_grad().data();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t c = 0; c < w; ++c)
            gp[r * w + c] += self.grad[r * cols + offset + c];
      }
      offset += w;
    }
  });
}

Var reverse_rows(const Var& x) {
  const int64_t rows = x->value.rows();
  const int64_t cols = x->value.cols();
  Tensor out(x->value.shape());
  for (int64_t r = 0; r < rows; ++r)
    std::memcpy(out.data() + r * cols, x->value.data() + (rows - 1 - r) * cols,
                static_cast<size_t>(cols) * sizeof(float));
  return make_node(std::move(out), {x}, [rows, cols](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    float* gx = self.parents[0]->ensure_grad().data();
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c)
        gx[(rows - 1 - r) * cols + c] += self.grad[r * cols + c];
  });
}

// --- aligner ops ---------------------------------------------------------------

Var span_mean(const Var& x, int64_t n_phones) {
  const int64_t frames = x->value.rows();
  const int64_t cols = x->value.cols();
  if (frames < 1 || n_phones < 1)
    throw InvalidInput("span_mean: lengths must be >= 1");
  Tensor out({n_phones, cols});
  kernels::span_mean(x->value.data(), frames, cols, n_phones, out.data());
  return make_node(std::move(out), {x}, [frames, cols, n_phones](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    float* gx = self.parents[0]->ensure_grad().data();
    for (int64_t i = 0; i < n_phones; ++i) {
      const int64_t lo = i * frames / n_phones;
      const int64_t hi = (i + 1) * frames / n_phones;
      if (hi <= lo) {
        for (int64_t c = 0; c < cols; ++c) gx[lo * cols + c] += self.grad[i * cols + c];
      } else {
        const float inv = 1.0f / static_cast<float>(hi - lo);
        for (int64_t t = lo; t < hi; ++t)
          for (int64_t c = 0; c < cols; ++c)
            gx[t * cols + c] += self.grad[i * cols + c] * inv;
      }
    }
  });
}

Var repeat_rows(const Var& x, const std::vector<int64_t>& durations) {
  const int64_t rows = x->value.rows();
  const int64_t cols = x->value.cols();
  if (static_cast<int64_t>(durations.size()) != rows)
    throw InvalidInput("repeat_rows: duration count does not match rows");
  int64_t total = 0;
  for (int64_t d : durations) {
    if (d < 0) throw InvalidInput("repeat_rows: negative duration");
    total += d;
  }
  if (total < 1) throw InvalidInput("repeat_rows: all durations are zero");
  Tensor out({total, cols});
  int64_t r = 0;
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t d = 0; d < durations[static_cast<size_t>(i)]; ++d, ++r)
      std::memcpy(out.data() + r * cols, x->value.data() + i * cols,
                  static_cast<size_t>(cols) * sizeof(float));
  auto dur = std::make_shared<std::vector<int64_t>>(durations);
  return make_node(std::move(out), {x}, [rows, cols, dur](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    float* gx = self.parents[0]->ensure_grad().data();
    int64_t r = 0;
    for (int64_t i = 0; i < rows; ++i) {
      for (int64_t d = 0; d < (*dur)[static_cast<size_t>(i)]; ++d, ++r)
        for (int64_t c = 0; c < cols; ++c)
          gx[i * cols + c] += self.grad[r * cols + c];
    }
  });
}

// --- reductions -----------------------------------------------------------------

Var mean_rows(const Var& x) {
  const int64_t rows = x->value.rows();
  const int64_t cols = x->value.cols();
  Tensor out({1, cols});
  for (int64_t c = 0; c < cols; ++c) {
    double acc = 0.0;
    for (int64_t r = 0; r < rows; ++r) acc += x->value[r * cols + c];
    out[c] = static_cast<float>(acc / static_cast<double>(rows));
  }
  return make_node(std::move(out), {x}, [rows, cols](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    float* gx = self.parents[0]->ensure_grad().data();
    const float inv = 1.0f / static_cast<float>(rows);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) gx[r * cols + c] += self.grad[c] * inv;
  });
}

Var mean_all(const Var& x) {
  const int64_t n = x->value.numel();
  if (n < 1) throw InvalidInput("mean_all: empty tensor");
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += x->value[i];
  Tensor out({1});
  out[0] = static_cast<float>(acc / static_cast<double>(n));
  return make_node(std::move(out), {x}, [n](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    float* gx = self.parents[0]->ensure_grad().data();
    const float g = self.grad[0] / static_cast<float>(n);
    for (int64_t i = 0; i < n; ++i) gx[i] += g;
  });
}

// --- losses ------------------------------------------------------------------------

Var mse_loss(const Var& pred, const Tensor& target) {
  if (!pred->value.same_shape(target))
    throw InvalidInput("mse_loss: prediction/target shape mismatch " +
                       pred->value.shape_string() + " vs " +
                       const_cast<Tensor&>(target).shape_string());
  const int64_t n = pred->value.numel();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred->value[i]) - target[i];
    acc += d * d;
  }
  Tensor out({1});
  out[0] = static_cast<float>(acc / static_cast<double>(n));
  auto tgt = std::make_shared<Tensor>(target);
  return make_node(std::move(out), {pred}, [n, tgt](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    float* gp = self.parents[0]->ensure_grad().data();
    const float* pv = self.parents[0]->value.data();
    const float coeff = self.grad[0] * 2.0f / static_cast<float>(n);
    for (int64_t i = 0; i < n; ++i) gp[i] += coeff * (pv[i] - (*tgt)[i]);
  });
}

Var mae_loss(const Var& pred, const Tensor& target) {
  if (!pred->value.same_shape(target))
    throw InvalidInput("mae_loss: prediction/target shape mismatch");
  const int64_t n = pred->value.numel();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i)
    acc += std::abs(static_cast<double>(pred->value[i]) - target[i]);
  Tensor out({1});
  out[0] = static_cast<float>(acc / static_cast<double>(n));
  auto tgt = std::make_shared<Tensor>(target);
  return make_node(std::move(out), {pred}, [n, tgt](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    float* gp = self.parents[0]->ensure_grad().data();
    const float* pv = self.parents[0]->value.data();
    const float coeff = self.grad[0] / static_cast<float>(n);
    for (int64_t i = 0; i < n; ++i) {
      const float d = pv[i] - (*tgt)[i];
      gp[i] += coeff * (d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f));
    }
  });
}

Var cross_entropy2(const Var& logits, int label) {
  if (logits->value.numel() != 2)
    throw InvalidInput("cross_entropy2: logits must have 2 entries");
  if (label != 0 && label != 1) throw InvalidInput("cross_entropy2: label must be 0 or 1");
  const double l0 = logits->value[0];
  const double l1 = logits->value[1];
  const double m = std::max(l0, l1);
  const double lse = m + std::log(std::exp(l0 - m) + std::exp(l1 - m));
  Tensor out({1});
  out[0] = static_cast<float>(lse - (label == 0 ? l0 : l1));
  return make_node(std::move(out), {logits}, [label](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    float* gl = self.parents[0]->ensure_grad().data();
    const double l0 = self.parents[0]->value[0];
    const double l1 = self.parents[0]->value[1];
    const double m = std::max(l0, l1);
    const double e0 = std::exp(l0 - m);
    const double e1 = std::exp(l1 - m);
    const double z = e0 + e1;
    const float g = self.grad[0];
    gl[0] += g * static_cast<float>(e0 / z - (label == 0 ? 1.0 : 0.0));
    gl[1] += g * static_cast<float>(e1 / z - (label == 1 ? 1.0 : 0.0));
  });
}

// --- gradient routing ----------------------------------------------------------------

Var stop_gradient(const Var& x) {
  return constant(x->value);
}

Var grad_reverse(const Var& x, float lambda) {
  Tensor out = x->value;
  return make_node(std::move(out), {x}, [lambda](Node& self) {
    if (!self.parents[0]->requires_grad) return;
    float* gx = self.parents[0]->ensure_grad().data();
    const int64_t n = self.grad.numel();
    for (int64_t i = 0; i < n; ++i) gx[i] += -lambda * self.grad[i];
  });
}

}  // namespace ad
}  // namespace styler
