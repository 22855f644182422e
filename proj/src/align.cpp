// styler/align.cpp

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

#include "styler/align.hpp"

#include <cstring>

#include "styler/errors.hpp"
#include "styler/kernels.hpp"

namespace styler {
namespace align {

FrameToPhoneMap build_map(int64_t source_frames, int64_t target_phones) {
  if (source_frames < 1) throw InvalidInput("build_map: source frame count must be >= 1");
  if (target_phones < 1) throw InvalidInput("build_map: target phone count must be >= 1");
  FrameToPhoneMap map;
  map.source_frames = source_frames;
  map.target_phones = target_phones;
  map.spans.resize(static_cast<size_t>(target_phones));
  for (int64_t i = 0; i < target_phones; ++i) {
    map.spans[static_cast<size_t>(i)] = {i * source_frames / target_phones,
                                         (i + 1) * source_frames / target_phones};
  }
  return map;
}

Tensor calibrate(const Tensor& frames, int64_t n_phones) {
  if (frames.rank() != 2) throw InvalidInput("calibrate: frames must be rank 2");
  const int64_t t = frames.rows();
  const int64_t c = frames.cols();
  if (t < 1 || c < 1) throw InvalidInput("calibrate: empty frame matrix");
  if (n_phones < 1) throw InvalidInput("calibrate: phone count must be >= 1");
  Tensor out({n_phones, c});
  kernels::span_mean(frames.data(), t, c, n_phones, out.data());
  return out;
}

Tensor apply(const FrameToPhoneMap& map, const Tensor& frames) {
  if (frames.rank() != 2 || frames.rows() != map.source_frames)
    throw InvalidInput("apply: frame matrix does not match map source length");
  const int64_t c = frames.cols();
  Tensor out({map.target_phones, c});
  for (int64_t i = 0; i < map.target_phones; ++i) {
    const FrameSpan& span = map.spans[static_cast<size_t>(i)];
    if (span.end <= span.begin) {
      std::memcpy(out.data() + i * c, frames.data() + span.begin * c,
                  static_cast<size_t>(c) * sizeof(float));
      continue;
    }
    const double inv = 1.0 / static_cast<double>(span.end - span.begin);
    for (int64_t col = 0; col < c; ++col) {
      double s = 0.0;
      for (int64_t r = span.begin; r < span.end; ++r)
        s += static_cast<double>(frames(r, col));
      out(i, col) = static_cast<float>(s * inv);
    }
  }
  return out;
}

Tensor length_regulate(const Tensor& phones,
                       const std::vector<int64_t>& durations) {
  if (phones.rank() != 2) throw InvalidInput("length_regulate: phones must be rank 2");
  if (static_cast<int64_t>(durations.size()) != phones.rows())
    throw InvalidInput("length_regulate: duration count does not match phone count");
  int64_t total = 0;
  for (int64_t d : durations) {
    if (d < 0) throw InvalidInput("length_regulate: negative duration");
    total += d;
  }
  if (total < 1) throw InvalidInput("length_regulate: all durations are zero");
  const int64_t c = phones.cols();
  Tensor out({total, c});
  int64_t row = 0;
  for (size_t i = 0; i < durations.size(); ++i) {
    for (int64_t r = 0; r < durations[i]; ++r, ++row) {
      std::memcpy(out.data() + row * c,
                  phones.data() + static_cast<int64_t>(i) * c,
                  static_cast<size_t>(c) * sizeof(float));
    }
  }
  return out;
}

}  // namespace align
}  // namespace styler
