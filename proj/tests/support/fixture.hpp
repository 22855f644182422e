// tests/support/fixture.hpp

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

#ifndef STYLER_TESTS_SUPPORT_FIXTURE_HPP_
#define STYLER_TESTS_SUPPORT_FIXTURE_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "styler/dsp.hpp"
#include "styler/pipeline.hpp"

namespace testsupport {

// Fresh directory under the system temp root; removed first if present.
std::filesystem::path unique_temp_dir(const std::string& tag);

struct ToyCorpus {
  std::filesystem::path root;
  std::filesystem::path corpus_dir;
  std::filesystem::path noise_dir;
  std::filesystem::path out_dir;  // convenience target for preprocess output
  std::vector<std::string> utt_ids;
  std::vector<std::string> speakers;
};

// Synthetic multi-speaker corpus: harmonic voiced tones with vibrato and an
// amplitude envelope, phone annotations whose durations sum exactly to the
// mel frame count, a splits.json (all speakers in train) and two noise
// recordings.
ToyCorpus make_toy_corpus(const std::filesystem::path& root, int n_utts,
                          int n_speakers, uint64_t seed,
                          double min_seconds = 0.7, double max_seconds = 1.1);

// Voiced test tone (harmonics + vibrato), for feature tests.
styler::dsp::Waveform make_voiced_tone(double seconds, double base_f0,
                                       uint64_t seed, int sample_rate = 22050);

// Runs preprocess over a toy corpus with augmentation on; returns the
// manifest path.
std::filesystem::path preprocess_toy(const ToyCorpus& corpus, uint64_t seed);

}  // namespace testsupport

#endif  // STYLER_TESTS_SUPPORT_FIXTURE_HPP_
