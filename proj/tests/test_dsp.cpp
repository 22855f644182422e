// tests/test_dsp.cpp

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
#include <cstring>

#include "doctest.h"
#include "styler/dsp.hpp"
#include "styler/errors.hpp"
#include "styler/rng.hpp"
#include "support/fixture.hpp"

using namespace styler;
namespace d = styler::dsp;

namespace {

d::Waveform sine(double seconds, double hz, double amp = 0.4, int sr = 22050) {
  d::Waveform w;
  w.sample_rate = sr;
  const int64_t n = static_cast<int64_t>(seconds * sr);
  w.samples.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    w.samples[static_cast<size_t>(i)] =
        static_cast<float>(amp * std::sin(2.0 * M_PI * hz * i / sr));
  return w;
}

d::Waveform silence(double seconds, int sr = 22050) {
  d::Waveform w;
  w.sample_rate = sr;
  w.samples.assign(static_cast<size_t>(seconds * sr), 0.0f);
  return w;
}

double mean_power(const std::vector<float>& v) {
  double p = 0.0;
  for (float s : v) p += static_cast<double>(s) * s;
  return p / static_cast<double>(v.size());
}

double pearson(const Tensor& a, const Tensor& b) {
  const int64_t n = a.numel();
  double ma = 0.0, mb = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double num = 0.0, da = 0.0, db = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(da * db);
}

}  // namespace

TEST_CASE("extract_mel: framing arithmetic and channel count") {
  const d::FeatureConfig cfg;
  const auto mel = d::extract_mel(sine(1.0, 220.0), cfg);
  CHECK(mel.frames.rows() == 87);  // floor(22050/256) + 1
  CHECK(mel.frames.cols() == 80);
  CHECK(mel.frames.all_finite());
}

TEST_CASE("extract_mel: silence hits the log floor everywhere") {
  const d::FeatureConfig cfg;
  const auto mel = d::extract_mel(silence(0.5), cfg);
  const float floor_db = std::log(cfg.log_floor);
  for (int64_t i = 0; i < mel.frames.numel(); ++i)
    CHECK(mel.frames[i] == doctest::Approx(floor_db).epsilon(1e-6));
}

TEST_CASE("extract_mel: deterministic and rejects empty input") {
  const d::FeatureConfig cfg;
  const auto wav = testsupport::make_voiced_tone(0.6, 180.0, 3);
  const auto a = d::extract_mel(wav, cfg);
  const auto b = d::extract_mel(wav, cfg);
  CHECK(std::memcmp(a.frames.data(), b.frames.data(),
                    sizeof(float) * static_cast<size_t>(a.frames.numel())) == 0);
  CHECK_THROWS_AS(d::extract_mel(d::Waveform{}, cfg), InvalidInput);
}

TEST_CASE("extract_pitch: recovers a pure tone within 3 Hz") {
  const d::FeatureConfig cfg;
  const auto contour = d::extract_pitch(sine(0.5, 220.0), cfg);
  const auto mel = d::extract_mel(sine(0.5, 220.0), cfg);
  REQUIRE(static_cast<int64_t>(contour.f0.size()) == mel.frames.rows());
  // Interior frames only; edges see reflections.
  int voiced = 0;
  for (size_t t = 4; t + 4 < contour.f0.size(); ++t) {
    REQUIRE(contour.voiced[t] == 1);
    CHECK(contour.f0[t] == doctest::Approx(220.0).epsilon(3.0 / 220.0));
    ++voiced;
  }
  CHECK(voiced > 10);
}

TEST_CASE("extract_pitch: silence is fully unvoiced, not an error") {
  const d::FeatureConfig cfg;
  const auto contour = d::extract_pitch(silence(0.4), cfg);
  CHECK(contour.fully_unvoiced());
  for (float v : contour.f0) CHECK(v == 0.0f);
}

TEST_CASE("extract_pitch: length always matches the mel frame count") {
  const d::FeatureConfig cfg;
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    const auto wav = testsupport::make_voiced_tone(0.3 + 0.17 * seed, 150.0, seed);
    const auto mel = d::extract_mel(wav, cfg);
    const auto contour = d::extract_pitch(wav, cfg);
    CHECK(static_cast<int64_t>(contour.f0.size()) == mel.frames.rows());
    for (size_t i = 0; i < contour.f0.size(); ++i)
      CHECK((contour.f0[i] > 0.0f) == (contour.voiced[i] != 0));
  }
}

TEST_CASE("normalize_pitch: affine map and clamp boundary") {
  d::PitchContour c;
  c.f0 = {200.0f, 240.0f, 280.0f, 120.0f};
  c.voiced = {1, 1, 1, 1};
  d::SpeakerPitchStats stats{"s", 200.0f, 40.0f};
  const auto out = d::normalize_pitch(c, stats);
  CHECK(out[0] == doctest::Approx(0.5));   // mean maps to 0.5
  CHECK(out[1] == doctest::Approx(0.75));  // (240-200)/40*0.25+0.5
  CHECK(out[2] == doctest::Approx(1.0));   // mean + 2 std clamps at 1
  CHECK(out[3] == doctest::Approx(0.0));   // mean - 2 std clamps at 0

  stats.std_f0 = 0.0f;
  CHECK_THROWS_AS(d::normalize_pitch(c, stats), InvalidInput);
}

TEST_CASE("normalize_pitch: unvoiced gaps interpolate, edges hold") {
  d::PitchContour c;
  c.f0 = {0.0f, 100.0f, 0.0f, 0.0f, 160.0f, 0.0f};
  c.voiced = {0, 1, 0, 0, 1, 0};
  const auto interp = d::interpolate_unvoiced(c);
  CHECK(interp[0] == doctest::Approx(100.0));
  CHECK(interp[2] == doctest::Approx(120.0));
  CHECK(interp[3] == doctest::Approx(140.0));
  CHECK(interp[5] == doctest::Approx(160.0));
}

TEST_CASE("normalize_pitch: pooled voiced frames hit the target statistics") {
  const d::FeatureConfig cfg;
  std::vector<d::PitchContour> contours;
  for (uint64_t s = 0; s < 4; ++s)
    contours.push_back(
        d::extract_pitch(testsupport::make_voiced_tone(0.8, 170.0, 40 + s), cfg));
  std::vector<const d::PitchContour*> ptrs;
  for (auto& c : contours) ptrs.push_back(&c);
  const auto stats = d::fit_pitch_stats("spk", ptrs);
  CHECK(stats.std_f0 > 0.0f);

  double sum = 0.0, sq = 0.0;
  int64_t n = 0;
  for (const auto& c : contours) {
    const auto norm = d::normalize_pitch(c, stats, /*clamp=*/false);
    for (size_t i = 0; i < norm.size(); ++i) {
      if (!c.voiced[i]) continue;
      sum += norm[i];
      sq += static_cast<double>(norm[i]) * norm[i];
      ++n;
    }
  }
  const double mean = sum / n;
  const double stddev = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(mean - 0.5) < 0.02);
  CHECK(std::abs(stddev - 0.25) < 0.02);
}

TEST_CASE("scale_energy: endpoints, midpoint and degenerate stats") {
  const auto out = d::scale_energy({0.0f, 5.0f, 10.0f, 12.0f}, 0.0f, 10.0f);
  CHECK(out[0] == 0.0f);
  CHECK(out[1] == doctest::Approx(0.5));
  CHECK(out[2] == 1.0f);
  CHECK(out[3] == 1.0f);  // clamp above corpus max
  CHECK_THROWS_AS(d::scale_energy({1.0f}, 3.0f, 3.0f), ConfigError);
}

TEST_CASE("quantize: bin edges and monotonicity") {
  const auto q = d::quantize({0.0f, 0.5f, 1.0f});
  CHECK(q.bins[0] == 0);
  CHECK(q.bins[1] == 128);
  CHECK(q.bins[2] == 255);
  CHECK(q.n_bins == 256);
  CHECK_THROWS_AS(d::quantize({1.5f}), InvalidInput);
  CHECK_THROWS_AS(d::quantize({-0.1f}), InvalidInput);

  Rng rng(11);
  float prev_v = 0.0f;
  int prev_bin = 0;
  for (int i = 0; i < 200; ++i) {
    const float v = std::min(1.0f, prev_v + rng.uniform() * 0.01f);
    const int bin = d::quantize({v}).bins[0];
    CHECK(bin >= prev_bin);
    prev_v = v;
    prev_bin = bin;
  }
}

TEST_CASE("mix_at_snr: gain law at 20 dB and 0 dB") {
  // Alternating-sign signals give exactly equal mean square power.
  d::Waveform clean, noise;
  clean.samples.assign(8000, 0.3f);
  noise.samples.assign(8000, 0.3f);
  for (size_t i = 1; i < 8000; i += 2) {
    clean.samples[i] = -0.3f;
    noise.samples[i] = -0.3f;
  }

  const auto mix20 = d::mix_at_snr(clean, noise, 20.0f);
  std::vector<float> scaled(mix20.samples.size());
  for (size_t i = 0; i < scaled.size(); ++i)
    scaled[i] = mix20.samples[i] - clean.samples[i];
  const double g20 = std::sqrt(mean_power(scaled) / mean_power(noise.samples));
  CHECK(g20 == doctest::Approx(0.1).epsilon(1e-4));

  const auto mix0 = d::mix_at_snr(clean, noise, 0.0f);
  for (size_t i = 0; i < scaled.size(); ++i)
    scaled[i] = mix0.samples[i] - clean.samples[i];
  // Equal powers at 0 dB: unit gain (the peak normalization rescales both
  // components equally, so measure the ratio instead of the raw gain).
  const double snr0 =
      10.0 * std::log10(mean_power(clean.samples) / mean_power(scaled));
  CHECK(std::abs(snr0) < 0.01);
}

TEST_CASE("mix_at_snr: achieves the requested SNR within 0.1 dB") {
  Rng rng(13);
  for (int rep = 0; rep < 40; ++rep) {
    const auto clean = testsupport::make_voiced_tone(0.4, 160.0 + rep, 100 + rep);
    d::Waveform noise;
    noise.sample_rate = clean.sample_rate;
    noise.samples.resize(clean.samples.size() / 2 + 100);
    for (auto& v : noise.samples) v = rng.normal() * 0.1f;
    const float snr = rng.uniform(5.0f, 25.0f);
    const auto mixed = d::mix_at_snr(clean, noise, snr);
    REQUIRE(mixed.samples.size() == clean.samples.size());
    std::vector<float> scaled(mixed.samples.size());
    for (size_t i = 0; i < scaled.size(); ++i)
      scaled[i] = mixed.samples[i] - clean.samples[i];
    const double measured =
        10.0 * std::log10(mean_power(clean.samples) / mean_power(scaled));
    CHECK(std::abs(measured - snr) < 0.1);
  }
}

TEST_CASE("mix_at_snr: silent inputs are rejected") {
  const auto tone = sine(0.2, 200.0);
  CHECK_THROWS_AS(d::mix_at_snr(silence(0.2), tone, 10.0f), InvalidInput);
  CHECK_THROWS_AS(d::mix_at_snr(tone, silence(0.2), 10.0f), InvalidInput);
}

TEST_CASE("mel_to_waveform: floor mel is near-silent, length is (T-1)*hop") {
  const d::FeatureConfig cfg;
  d::MelSpectrogram mel;
  mel.hop_length = cfg.hop_length;
  mel.frames = Tensor::full({20, 80}, std::log(cfg.log_floor));
  const auto wav = d::mel_to_waveform(mel, 4, cfg);
  CHECK(static_cast<int64_t>(wav.samples.size()) == 19 * 256);
  CHECK(std::sqrt(mean_power(wav.samples)) < 1e-3);
}

TEST_CASE("mel_to_waveform: round trip preserves the spectral envelope") {
  const d::FeatureConfig cfg;
  const auto wav = testsupport::make_voiced_tone(0.7, 150.0, 77);
  const auto mel = d::extract_mel(wav, cfg);
  const auto rebuilt = d::mel_to_waveform(mel, 60, cfg);
  const auto mel2 = d::extract_mel(rebuilt, cfg);
  const int64_t t = std::min(mel.frames.rows(), mel2.frames.rows());
  Tensor a({t, 80}), b({t, 80});
  std::memcpy(a.data(), mel.frames.data(), sizeof(float) * static_cast<size_t>(t * 80));
  std::memcpy(b.data(), mel2.frames.data(), sizeof(float) * static_cast<size_t>(t * 80));
  CHECK(pearson(a, b) > 0.85);
}

TEST_CASE("wav io: 16-bit round trip and resampling") {
  const auto dir = testsupport::unique_temp_dir("wav");
  const auto wav = testsupport::make_voiced_tone(0.3, 200.0, 5);
  d::write_wav(dir / "t.wav", wav);
  const auto loaded = d::read_wav(dir / "t.wav");
  REQUIRE(loaded.samples.size() == wav.samples.size());
  CHECK(loaded.sample_rate == wav.sample_rate);
  for (size_t i = 0; i < wav.samples.size(); i += 97)
    CHECK(loaded.samples[i] == doctest::Approx(wav.samples[i]).epsilon(1e-3));

  const auto down = d::resample(loaded, 11025);
  CHECK(down.sample_rate == 11025);
  CHECK(static_cast<double>(down.samples.size()) ==
        doctest::Approx(loaded.samples.size() / 2.0).epsilon(0.01));
}
