// tests/test_objectives.cpp

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

#include <cmath>

#include "doctest.h"
#include "json.hpp"
#include "styler/errors.hpp"
#include "styler/objectives.hpp"
#include "styler/rng.hpp"

using namespace styler;
namespace obj = styler::objectives;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int64_t> shape, float scale = 1.0f) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-scale, scale);
  return t;
}

// Independent double-precision oracle: plain elementwise loops.
double mse_oracle(const std::vector<double>& p, const std::vector<double>& t) {
  double acc = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    acc += d * d;
  }
  return acc / static_cast<double>(p.size());
}

}  // namespace

TEST_CASE("mel_loss: zero at equality, one at unit offset, matches the oracle") {
  Rng rng(1);
  const Tensor target = random_tensor(rng, {7, 9});
  CHECK(obj::mel_loss(ad::constant(target), target)->value[0] == 0.0f);

  Tensor shifted = target;
  for (int64_t i = 0; i < shifted.numel(); ++i) shifted[i] += 1.0f;
  CHECK(obj::mel_loss(ad::constant(shifted), target)->value[0] ==
        doctest::Approx(1.0).epsilon(1e-6));

  for (int rep = 0; rep < 10; ++rep) {
    const Tensor a = random_tensor(rng, {6, 11}, 3.0f);
    const Tensor b = random_tensor(rng, {6, 11}, 3.0f);
    std::vector<double> pa(a.data(), a.data() + a.numel());
    std::vector<double> pb(b.data(), b.data() + b.numel());
    CHECK(obj::mel_loss(ad::constant(a), b)->value[0] ==
          doctest::Approx(mse_oracle(pa, pb)).epsilon(1e-7));
  }

  CHECK_THROWS_AS(obj::mel_loss(ad::constant(Tensor({3, 4})), Tensor({4, 3})),
                  InvalidInput);
}

TEST_CASE("mel_loss: analytic gradient matches double-precision central differences") {
  Rng rng(2);
  Tensor pred_t = random_tensor(rng, {5, 8}, 2.0f);
  const Tensor target = random_tensor(rng, {5, 8}, 2.0f);

  ad::Var pred = ad::parameter(pred_t, "pred");
  ad::backward(obj::mel_loss(pred, target));

  const double step = 1e-3;
  for (int probe = 0; probe < 10; ++probe) {
    const int64_t i = rng.uniform_int(0, pred_t.numel() - 1);
    std::vector<double> p(pred_t.data(), pred_t.data() + pred_t.numel());
    std::vector<double> t(target.data(), target.data() + target.numel());
    p[static_cast<size_t>(i)] += step;
    const double up = mse_oracle(p, t);
    p[static_cast<size_t>(i)] -= 2.0 * step;
    const double down = mse_oracle(p, t);
    const double fd = (up - down) / (2.0 * step);
    const double an = pred->grad[i];
    CHECK(std::abs(fd - an) <= 1e-4 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("variance_loss: examples and scale homogeneity") {
  const Tensor t = Tensor::from({2}, {2.0f, 2.0f});
  CHECK(obj::variance_loss(ad::constant(t), t)->value[0] == 0.0f);
  CHECK(obj::variance_loss(ad::constant(Tensor::from({2}, {1.0f, 3.0f})), t)->value[0] ==
        doctest::Approx(1.0));
  // Accepts a column prediction against a flat target of equal length.
  CHECK(obj::variance_loss(ad::constant(Tensor::from({2, 1}, {1.0f, 3.0f})), t)->value[0] ==
        doctest::Approx(1.0));
  CHECK_THROWS_AS(obj::variance_loss(ad::constant(t), Tensor({3})), InvalidInput);

  Rng rng(3);
  const Tensor p = random_tensor(rng, {9}, 2.0f);
  const Tensor q = random_tensor(rng, {9}, 2.0f);
  const double base = obj::variance_loss(ad::constant(p), q)->value[0];
  for (float c : {-3.0f, 0.5f, 7.0f}) {
    Tensor cp = p, cq = q;
    for (int64_t i = 0; i < 9; ++i) {
      cp[i] *= c;
      cq[i] *= c;
    }
    CHECK(obj::variance_loss(ad::constant(cp), cq)->value[0] ==
          doctest::Approx(std::abs(c) * base).epsilon(1e-5));
  }
}

TEST_CASE("total_loss: sums per the decomposition, reduces without noise modeling") {
  const auto b = obj::total_loss(1.2, 0.0, 0.0, 0.0, 0.3, 0.05, true);
  CHECK(b.loss_clean == doctest::Approx(1.2));
  CHECK(b.loss_total == doctest::Approx(1.55));

  const auto clean_only = obj::total_loss(0.8, 0.1, 0.2, 0.3, 9.0, 9.0, false);
  CHECK(clean_only.l_mel_noisy == 0.0);
  CHECK(clean_only.l_aug == 0.0);
  CHECK(clean_only.loss_total == doctest::Approx(clean_only.loss_clean));

  const auto zeros = obj::total_loss(0, 0, 0, 0, 0, 0, true);
  CHECK(zeros.loss_total == 0.0);

  CHECK_THROWS_AS(obj::total_loss(std::nan(""), 0, 0, 0, 0, 0, true), TrainingDiverged);
  CHECK_THROWS_AS(obj::total_loss(0, 0, 0, 0, 0, std::numeric_limits<double>::infinity(),
                                  true),
                  TrainingDiverged);
}

TEST_CASE("total_loss: decomposition identity holds for random parts") {
  Rng rng(4);
  for (int rep = 0; rep < 200; ++rep) {
    const double parts[6] = {rng.uniform_double(), rng.uniform_double(),
                             rng.uniform_double(), rng.uniform_double(),
                             rng.uniform_double(), rng.uniform_double()};
    const auto b = obj::total_loss(parts[0], parts[1], parts[2], parts[3], parts[4],
                                   parts[5], true);
    CHECK(std::abs(b.loss_clean - (b.l_mel_clean + b.l_duration + b.l_pitch +
                                   b.l_energy)) <= 1e-6);
    CHECK(std::abs(b.loss_total - (b.loss_clean + b.l_mel_noisy + b.l_aug)) <= 1e-6);
  }
}

TEST_CASE("loss log line carries every field") {
  obj::LossBreakdown b = obj::total_loss(1, 2, 3, 4, 5, 6, true);
  const auto j = nlohmann::json::parse(obj::to_json_line(b, 42, 1e-3));
  CHECK(j.at("step") == 42);
  CHECK(j.at("l_mel_clean") == 1.0);
  CHECK(j.at("l_aug") == 6.0);
  CHECK(j.at("loss_clean") == 10.0);
  CHECK(j.at("loss_total") == 21.0);
  CHECK(j.at("lr") == 1e-3);
}
