// tests/support/fixture.cpp

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

#include "support/fixture.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "styler/rng.hpp"

namespace testsupport {

namespace fs = std::filesystem;
using styler::Rng;
using styler::dsp::Waveform;

fs::path unique_temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("styler_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Waveform make_voiced_tone(double seconds, double base_f0, uint64_t seed,
                          int sample_rate) {
  Rng rng(seed);
  const double vib_rate = 1.1 + rng.uniform_double() * 0.8;
  const double vib_depth = 0.06 + rng.uniform_double() * 0.06;
  const double env_rate = 0.4 + rng.uniform_double() * 0.5;
  const double phase0 = rng.uniform_double() * 6.283185307179586;

  Waveform wav;
  wav.sample_rate = sample_rate;
  const int64_t n = static_cast<int64_t>(std::llround(seconds * sample_rate));
  wav.samples.resize(static_cast<size_t>(n));
  double phase = phase0;
  for (int64_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double f0 = base_f0 * (1.0 + vib_depth * std::sin(2.0 * M_PI * vib_rate * t));
    phase += 2.0 * M_PI * f0 / sample_rate;
    double s = 0.0;
    for (int h = 1; h <= 5; ++h) s += (0.5 / h) * std::sin(h * phase);
    const double env = 0.22 * (0.65 + 0.35 * std::sin(2.0 * M_PI * env_rate * t));
    const double fade = std::min({1.0, t / 0.02, (seconds - t) / 0.02});
    wav.samples[static_cast<size_t>(i)] =
        static_cast<float>(s * env * std::max(fade, 0.0));
  }
  return wav;
}

ToyCorpus make_toy_corpus(const fs::path& root, int n_utts, int n_speakers,
                          uint64_t seed, double min_seconds, double max_seconds) {
  ToyCorpus corpus;
  corpus.root = root;
  corpus.corpus_dir = root / "corpus";
  corpus.noise_dir = root / "noise";
  corpus.out_dir = root / "prep";
  fs::create_directories(corpus.corpus_dir);
  fs::create_directories(corpus.noise_dir);

  static const std::vector<std::string> pool = {"AA", "AE", "AH", "B",  "D",  "EH",
                                                "IY", "K",  "L",  "M",  "N",  "OW",
                                                "P",  "R",  "S",  "T"};
  for (int s = 0; s < n_speakers; ++s)
    corpus.speakers.push_back("spk" + std::to_string(s));

  const int hop = 256;
  for (int i = 0; i < n_utts; ++i) {
    Rng rng = Rng::stream(seed, {0x757474ULL, static_cast<uint64_t>(i)});
    const int spk = i % n_speakers;
    const double base_f0 = 130.0 + 75.0 * spk + rng.uniform_double() * 12.0;
    const double seconds =
        min_seconds + (max_seconds - min_seconds) * rng.uniform_double();
    const Waveform wav =
        make_voiced_tone(seconds, base_f0, seed * 1000 + static_cast<uint64_t>(i));
    const int64_t frames = static_cast<int64_t>(wav.samples.size()) / hop + 1;

    const int64_t n_phones = rng.uniform_int(5, 9);
    std::vector<int64_t> durations(static_cast<size_t>(n_phones), 1);
    int64_t rest = frames - n_phones;
    for (int64_t k = 0; k < n_phones - 1 && rest > 0; ++k) {
      const int64_t take = rng.uniform_int(0, 2 * rest / (n_phones - k));
      durations[static_cast<size_t>(k)] += std::min(take, rest);
      rest -= std::min(take, rest);
    }
    durations.back() += rest;

    std::vector<std::string> phones;
    for (int64_t k = 0; k < n_phones; ++k)
      phones.push_back(pool[static_cast<size_t>(
          rng.uniform_int(0, static_cast<int64_t>(pool.size()) - 1))]);

    const std::string utt = "utt" + std::to_string(i);
    corpus.utt_ids.push_back(utt);
    styler::dsp::write_wav(corpus.corpus_dir / (utt + ".wav"), wav);
    nlohmann::json anno;
    anno["speaker"] = corpus.speakers[static_cast<size_t>(spk)];
    anno["text"] = "toy utterance " + std::to_string(i);
    anno["phones"] = phones;
    anno["durations"] = durations;
    std::ofstream os(corpus.corpus_dir / (utt + ".json"));
    os << anno.dump(2) << "\n";
  }

  nlohmann::json splits;
  splits["train"] = corpus.speakers;
  splits["val"] = nlohmann::json::array();
  splits["test"] = nlohmann::json::array();
  {
    std::ofstream os(corpus.corpus_dir / "splits.json");
    os << splits.dump(2) << "\n";
  }

  for (int k = 0; k < 2; ++k) {
    Rng rng = Rng::stream(seed, {0x6e6f697365ULL, static_cast<uint64_t>(k)});
    Waveform noise;
    noise.sample_rate = 22050;
    noise.samples.resize(static_cast<size_t>((2.3 + 0.9 * k) * 22050));
    for (auto& v : noise.samples)
      v = std::clamp(rng.normal() * 0.12f, -0.9f, 0.9f);
    styler::dsp::write_wav(corpus.noise_dir / ("noise" + std::to_string(k) + ".wav"),
                           noise);
  }
  return corpus;
}

fs::path preprocess_toy(const ToyCorpus& corpus, uint64_t seed) {
  styler::pipeline::PreprocessOptions opts;
  opts.corpus_dir = corpus.corpus_dir;
  opts.noise_dir = corpus.noise_dir;
  opts.out_dir = corpus.out_dir;
  opts.augment = true;
  opts.force = true;
  opts.seed = seed;
  const auto summary = styler::pipeline::preprocess(opts);
  return summary.manifest_path;
}

}  // namespace testsupport
