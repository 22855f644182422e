// styler/dsp.hpp

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

#ifndef STYLER_DSP_HPP_
#define STYLER_DSP_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "styler/tensor.hpp"

namespace styler {
namespace dsp {

struct Waveform {
  std::vector<float> samples;  // amplitudes in [-1, 1]
  int sample_rate = 22050;
};

struct MelSpectrogram {
  Tensor frames;  // [T x n_mels], natural-log compressed
  int hop_length = 256;
};

struct PitchContour {
  std::vector<float> f0;        // Hz, 0 where unvoiced
  std::vector<uint8_t> voiced;  // f0[i] > 0 iff voiced[i]
  bool fully_unvoiced() const;
};

struct SpeakerPitchStats {
  std::string speaker_id;
  float mean_f0 = 0.0f;
  float std_f0 = 0.0f;
};

struct QuantizedSequence {
  std::vector<int> bins;
  int n_bins = 256;
};

struct FeatureConfig {
  int sample_rate = 22050;
  int filter_length = 1024;  // FFT size, power of two
  int win_length = 1024;
  int hop_length = 256;
  int n_mels = 80;
  float mel_fmin = 0.0f;
  float mel_fmax = 8000.0f;
  float log_floor = 1e-5f;   // clamp before natural log
  float pitch_fmin = 50.0f;  // F0 search band
  float pitch_fmax = 600.0f;
  float voicing_threshold = 0.30f;

  void validate() const;
  // Frames under center padding: floor(samples / hop) + 1.
  int64_t frame_count(int64_t n_samples) const;
};

// --- STFT-derived features -------------------------------------------------

// Log mel spectrogram, [T x n_mels]. Framing is center-padded (reflection),
// the window is a periodic Hann, the filterbank is area-normalized triangles
// on the auditory mel scale. Deterministic: identical input bytes give
// identical output bytes.
MelSpectrogram extract_mel(const Waveform& wav, const FeatureConfig& cfg);

// Frame-wise L2 norm of the STFT magnitude; length equals the mel T.
std::vector<float> extract_energy(const Waveform& wav, const FeatureConfig& cfg);

// One STFT pass for both (preprocessing convenience).
void extract_mel_and_energy(const Waveform& wav, const FeatureConfig& cfg,
                            MelSpectrogram* mel, std::vector<float>* energy);

// --- Pitch -------------------------------------------------------------------

// Normalized-autocorrelation F0 with parabolic lag refinement. Output length
// equals the mel frame count of the same utterance. A fully unvoiced input
// yields an all-zero contour (not an error).
PitchContour extract_pitch(const Waveform& wav, const FeatureConfig& cfg);

// Mean/std over the voiced frames of the given contours (clean training
// utterances of one speaker). Throws ConfigError when the pooled voiced
// frames cannot produce a positive std.
SpeakerPitchStats fit_pitch_stats(const std::string& speaker_id,
                                  const std::vector<const PitchContour*>& contours);

// Contour with unvoiced gaps filled by linear interpolation between the
// neighboring voiced values; edge gaps hold the nearest voiced value.
std::vector<float> interpolate_unvoiced(const PitchContour& contour);

// Interpolated contour mapped through (x - mean)/std * 0.25 + 0.5. The
// result is clamped to [0, 1] unless `clamp` is false (used when checking
// the normalization statistics themselves).
std::vector<float> normalize_pitch(const PitchContour& contour,
                                   const SpeakerPitchStats& stats,
                                   bool clamp = true);

// --- Energy scaling and quantization ----------------------------------------

// clamp((x - corpus_min) / (corpus_max - corpus_min), 0, 1).
std::vector<float> scale_energy(const std::vector<float>& energy,
                                float corpus_min, float corpus_max);

// Uniform 256-bin quantization of values in [0, 1]; half-open bins with an
// inclusive top edge: bin = min(floor(v * 256), 255).
QuantizedSequence quantize(const std::vector<float>& values);

// --- Noise mixing -------------------------------------------------------------

// clean + g * noise with g = sqrt(P_clean / (P_noise * 10^(snr_db/10))),
// powers measured as mean squared amplitude; noise is looped or trimmed to
// the clean length first. The mix is peak-normalized only if it would leave
// [-1, 1]. A silent clean or noise segment is an InvalidInput.
Waveform mix_at_snr(const Waveform& clean, const Waveform& noise, float snr_db);

// --- Mel inversion -------------------------------------------------------------

// Iterative phase-estimation inversion through the pseudo-inverse mel basis.
// Vocoder stand-in only; deterministic (phase starts at zero). Output length
// is (T - 1) * hop samples.
Waveform mel_to_waveform(const MelSpectrogram& mel, int iterations,
                         const FeatureConfig& cfg);

// --- Audio I/O -------------------------------------------------------------------

// Mono float samples from a RIFF/WAVE file (PCM16/PCM24/PCM32/float32;
// multi-channel is averaged down).
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& wav);

// Linear-interpolation resampler.
Waveform resample(const Waveform& wav, int target_rate);

}  // namespace dsp
}  // namespace styler

#endif  // STYLER_DSP_HPP_
