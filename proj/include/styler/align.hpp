// styler/align.hpp

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

#ifndef STYLER_ALIGN_HPP_
#define STYLER_ALIGN_HPP_

#include <cstdint>
#include <vector>

#include "styler/tensor.hpp"

namespace styler {
namespace align {

// Attention-free audio/text aligning. The calibrator maps frame sequences to
// the phone count by averaging frame spans (or repeating a frame when a span
// is empty); it sees only the two lengths, never the text content. The
// length regulator is its training-time inverse direction: expand phones to
// frames by duration counts.

struct FrameSpan {
  int64_t begin = 0;  // with begin == end the span is empty: copy row `begin`
  int64_t end = 0;
};

struct FrameToPhoneMap {
  int64_t source_frames = 0;
  int64_t target_phones = 0;
  std::vector<FrameSpan> spans;
};

// Deterministic floor-boundary map: phone i covers source rows
// [floor(i*T/N), floor((i+1)*T/N)).
FrameToPhoneMap build_map(int64_t source_frames, int64_t target_phones);

// frames [T x C] -> [N x C]; apply(build_map(T, N), frames) is identical.
Tensor calibrate(const Tensor& frames, int64_t n_phones);
Tensor apply(const FrameToPhoneMap& map, const Tensor& frames);

// phones [N x C] -> [sum(durations) x C]; phone i repeated durations[i]
// times, zero-duration phones are skipped. All-zero durations are an error.
Tensor length_regulate(const Tensor& phones,
                       const std::vector<int64_t>& durations);

}  // namespace align
}  // namespace styler

#endif  // STYLER_ALIGN_HPP_
