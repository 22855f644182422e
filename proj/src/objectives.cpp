// styler/objectives.cpp

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

#include "styler/objectives.hpp"

#include <cmath>

#include "json.hpp"
#include "styler/errors.hpp"

namespace styler {
namespace objectives {

ad::Var mel_loss(const ad::Var& pred, const Tensor& target) {
  if (!pred->value.same_shape(target))
    throw InvalidInput("mel_loss: prediction and target shapes differ");
  return ad::mse_loss(pred, target);
}

ad::Var variance_loss(const ad::Var& pred, const Tensor& target) {
  if (pred->value.numel() != target.numel())
    throw InvalidInput("variance_loss: length mismatch");
  Tensor t = target;
  if (!pred->value.same_shape(t)) t = Tensor::from(pred->value.shape(), t.vec());
  return ad::mae_loss(pred, t);
}

LossBreakdown total_loss(double l_mel_clean, double l_duration, double l_pitch,
                         double l_energy, double l_mel_noisy, double l_aug,
                         bool noise_modeling) {
  LossBreakdown b;
  b.l_mel_clean = l_mel_clean;
  b.l_duration = l_duration;
  b.l_pitch = l_pitch;
  b.l_energy = l_energy;
  b.l_mel_noisy = noise_modeling ? l_mel_noisy : 0.0;
  b.l_aug = noise_modeling ? l_aug : 0.0;
  b.loss_clean = b.l_mel_clean + b.l_duration + b.l_pitch + b.l_energy;
  b.loss_total = b.loss_clean + b.l_mel_noisy + b.l_aug;
  for (double v : {b.l_mel_clean, b.l_duration, b.l_pitch, b.l_energy, b.l_mel_noisy,
                   b.l_aug, b.loss_total}) {
    if (!std::isfinite(v)) throw TrainingDiverged("non-finite loss component");
  }
  return b;
}

std::string to_json_line(const LossBreakdown& b, int64_t step, double lr) {
  nlohmann::json j;
  j["step"] = step;
  j["l_mel_clean"] = b.l_mel_clean;
  j["l_duration"] = b.l_duration;
  j["l_pitch"] = b.l_pitch;
  j["l_energy"] = b.l_energy;
  j["l_mel_noisy"] = b.l_mel_noisy;
  j["l_aug"] = b.l_aug;
  j["loss_clean"] = b.loss_clean;
  j["loss_total"] = b.loss_total;
  j["lr"] = lr;
  return j.dump();
}

}  // namespace objectives
}  // namespace styler
