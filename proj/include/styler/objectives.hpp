// styler/objectives.hpp

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

#ifndef STYLER_OBJECTIVES_HPP_
#define STYLER_OBJECTIVES_HPP_

#include <string>

#include "styler/autodiff.hpp"

namespace styler {
namespace objectives {

// Unweighted loss composition:
//   loss_clean = l_mel_clean + l_duration + l_pitch + l_energy
//   loss_total = loss_clean + l_mel_noisy + l_aug
// With noise modeling disabled the noisy and adversarial parts are
// identically zero and loss_total == loss_clean.
struct LossBreakdown {
  double l_mel_clean = 0.0;
  double l_duration = 0.0;
  double l_pitch = 0.0;
  double l_energy = 0.0;
  double l_mel_noisy = 0.0;
  double l_aug = 0.0;
  double loss_clean = 0.0;
  double loss_total = 0.0;
};

// Mean squared error over all mel cells; shapes must match exactly.
ad::Var mel_loss(const ad::Var& pred, const Tensor& target);

// Mean absolute error over per-phone values (duration loss is computed in
// the log domain by the caller: raw log output vs log(target + 1)).
ad::Var variance_loss(const ad::Var& pred, const Tensor& target);

// Assembles the breakdown sums and validates finiteness; any non-finite
// part raises TrainingDiverged.
LossBreakdown total_loss(double l_mel_clean, double l_duration, double l_pitch,
                         double l_energy, double l_mel_noisy, double l_aug,
                         bool noise_modeling);

std::string to_json_line(const LossBreakdown& b, int64_t step, double lr);

}  // namespace objectives
}  // namespace styler

#endif  // STYLER_OBJECTIVES_HPP_
