// styler/dsp.cpp

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

#include "styler/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numeric>

#include "styler/errors.hpp"

namespace styler {
namespace dsp {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

// Iterative radix-2 FFT, in place. inverse=true applies conjugation and the
// 1/n scale.
void fft(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv;
  }
}

// Reflection without edge duplication, defined for any integer index.
int64_t reflect_index(int64_t i, int64_t n) {
  if (n == 1) return 0;
  const int64_t period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

std::vector<float> center_pad(const std::vector<float>& x, int64_t pad) {
  const int64_t n = static_cast<int64_t>(x.size());
  std::vector<float> out(static_cast<size_t>(n + 2 * pad));
  for (int64_t i = 0; i < n + 2 * pad; ++i)
    out[static_cast<size_t>(i)] = x[static_cast<size_t>(reflect_index(i - pad, n))];
  return out;
}

std::vector<double> periodic_hann(int n) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    w[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
  return w;
}

double hz_to_mel(double hz) {
  const double f_sp = 200.0 / 3.0;
  const double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (hz < min_log_hz) return hz / f_sp;
  return min_log_mel + std::log(hz / min_log_hz) / logstep;
}

double mel_to_hz(double mel) {
  const double f_sp = 200.0 / 3.0;
  const double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (mel < min_log_mel) return mel * f_sp;
  return min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

// Area-normalized triangular filterbank, [n_mels x (n_fft/2 + 1)].
std::vector<double> mel_filterbank(const FeatureConfig& cfg) {
  const int n_bins = cfg.filter_length / 2 + 1;
  std::vector<double> centers(static_cast<size_t>(cfg.n_mels) + 2);
  const double mel_lo = hz_to_mel(cfg.mel_fmin);
  const double mel_hi = hz_to_mel(cfg.mel_fmax);
  for (size_t m = 0; m < centers.size(); ++m)
    centers[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(m) /
                                        static_cast<double>(cfg.n_mels + 1));
  std::vector<double> fb(static_cast<size_t>(cfg.n_mels) * n_bins, 0.0);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = centers[static_cast<size_t>(m)];
    const double mid = centers[static_cast<size_t>(m) + 1];
    const double right = centers[static_cast<size_t>(m) + 2];
    const double norm = 2.0 / (right - left);
    for (int k = 0; k < n_bins; ++k) {
      const double freq = static_cast<double>(k) * cfg.sample_rate / cfg.filter_length;
      const double up = (freq - left) / (mid - left);
      const double down = (right - freq) / (right - mid);
      const double weight = std::max(0.0, std::min(up, down));
      fb[static_cast<size_t>(m) * n_bins + k] = weight * norm;
    }
  }
  return fb;
}

// Magnitude STFT over an already padded buffer; frames * hop + n_fft must
// fit. Rows are frames, columns the n_fft/2+1 bins.
std::vector<double> stft_magnitude(const std::vector<float>& padded,
                                   int64_t frames, const FeatureConfig& cfg) {
  const int n_fft = cfg.filter_length;
  const int n_bins = n_fft / 2 + 1;
  const std::vector<double> window = periodic_hann(cfg.win_length);
  const int win_offset = (n_fft - cfg.win_length) / 2;
  std::vector<double> mag(static_cast<size_t>(frames) * n_bins);
#pragma omp parallel for schedule(static)
  for (int64_t t = 0; t < frames; ++t) {
    std::vector<std::complex<double>> buf(static_cast<size_t>(n_fft), {0.0, 0.0});
    const float* src = padded.data() + t * cfg.hop_length;
    for (int i = 0; i < cfg.win_length; ++i)
      buf[static_cast<size_t>(win_offset + i)] = src[win_offset + i] * window[static_cast<size_t>(i)];
    fft(buf, false);
    for (int k = 0; k < n_bins; ++k)
      mag[static_cast<size_t>(t) * n_bins + k] = std::abs(buf[static_cast<size_t>(k)]);
  }
  return mag;
}

void check_waveform(const Waveform& wav, const char* op) {
  if (wav.samples.empty()) throw InvalidInput(std::string(op) + ": empty waveform");
  if (wav.sample_rate <= 0) throw InvalidInput(std::string(op) + ": sample rate must be positive");
}

}  // namespace

void FeatureConfig::validate() const {
  if (sample_rate <= 0) throw ConfigError("feature config: sample rate must be positive");
  if (!is_power_of_two(filter_length))
    throw ConfigError("feature config: filter length must be a power of two");
  if (win_length <= 0 || win_length > filter_length)
    throw ConfigError("feature config: window must be in (0, filter_length]");
  if (hop_length <= 0) throw ConfigError("feature config: hop must be positive");
  if (n_mels <= 0) throw ConfigError("feature config: mel channel count must be positive");
  if (mel_fmax <= mel_fmin || mel_fmax > sample_rate / 2.0f)
    throw ConfigError("feature config: mel band edges invalid");
}

int64_t FeatureConfig::frame_count(int64_t n_samples) const {
  return n_samples / hop_length + 1;
}

bool PitchContour::fully_unvoiced() const {
  for (uint8_t v : voiced)
    if (v) return false;
  return true;
}

void extract_mel_and_energy(const Waveform& wav, const FeatureConfig& cfg,
                            MelSpectrogram* mel, std::vector<float>* energy) {
  check_waveform(wav, "extract_mel");
  cfg.validate();
  const int64_t frames = cfg.frame_count(static_cast<int64_t>(wav.samples.size()));
  const std::vector<float> padded = center_pad(wav.samples, cfg.filter_length / 2);
  const std::vector<double> mag = stft_magnitude(padded, frames, cfg);
  const int n_bins = cfg.filter_length / 2 + 1;

  if (mel) {
    const std::vector<double> fb = mel_filterbank(cfg);
    mel->hop_length = cfg.hop_length;
    mel->frames = Tensor({frames, cfg.n_mels});
#pragma omp parallel for schedule(static)
    for (int64_t t = 0; t < frames; ++t) {
      const double* m_row = mag.data() + t * n_bins;
      for (int m = 0; m < cfg.n_mels; ++m) {
        double acc = 0.0;
        const double* f_row = fb.data() + static_cast<size_t>(m) * n_bins;
        for (int k = 0; k < n_bins; ++k) acc += f_row[k] * m_row[k];
        mel->frames(t, m) =
            static_cast<float>(std::log(std::max(acc, static_cast<double>(cfg.log_floor))));
      }
    }
  }
  if (energy) {
    energy->assign(static_cast<size_t>(frames), 0.0f);
#pragma omp parallel for schedule(static)
    for (int64_t t = 0; t < frames; ++t) {
      const double* m_row = mag.data() + t * n_bins;
      double acc = 0.0;
      for (int k = 0; k < n_bins; ++k) acc += m_row[k] * m_row[k];
      (*energy)[static_cast<size_t>(t)] = static_cast<float>(std::sqrt(acc));
    }
  }
}

MelSpectrogram extract_mel(const Waveform& wav, const FeatureConfig& cfg) {
  MelSpectrogram mel;
  extract_mel_and_energy(wav, cfg, &mel, nullptr);
  return mel;
}

std::vector<float> extract_energy(const Waveform& wav, const FeatureConfig& cfg) {
  std::vector<float> energy;
  extract_mel_and_energy(wav, cfg, nullptr, &energy);
  return energy;
}

PitchContour extract_pitch(const Waveform& wav, const FeatureConfig& cfg) {
  check_waveform(wav, "extract_pitch");
  cfg.validate();
  const int64_t frames = cfg.frame_count(static_cast<int64_t>(wav.samples.size()));
  const int w = cfg.win_length;
  const std::vector<float> padded = center_pad(wav.samples, w / 2);

  const double sr = cfg.sample_rate;
  int64_t lag_min = static_cast<int64_t>(std::floor(sr / cfg.pitch_fmax));
  int64_t lag_max = static_cast<int64_t>(std::ceil(sr / cfg.pitch_fmin));
  lag_min = std::max<int64_t>(lag_min, 2);
  lag_max = std::min<int64_t>(lag_max, w - 32);
  if (lag_max <= lag_min) throw ConfigError("extract_pitch: search band empty for window");

  PitchContour out;
  out.f0.assign(static_cast<size_t>(frames), 0.0f);
  out.voiced.assign(static_cast<size_t>(frames), 0);

#pragma omp parallel for schedule(static)
  for (int64_t t = 0; t < frames; ++t) {
    std::vector<double> x(static_cast<size_t>(w));
    const float* src = padded.data() + t * cfg.hop_length;
    double mean = 0.0;
    for (int i = 0; i < w; ++i) mean += src[i];
    mean /= w;
    double power = 0.0;
    for (int i = 0; i < w; ++i) {
      x[static_cast<size_t>(i)] = src[i] - mean;
      power += x[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];
    }
    if (std::sqrt(power / w) < 1e-4) continue;  // silence gate

    std::vector<double> prefix(static_cast<size_t>(w) + 1, 0.0);
    for (int i = 0; i < w; ++i)
      prefix[static_cast<size_t>(i) + 1] = prefix[static_cast<size_t>(i)] +
                                           x[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];

    const int64_t n_lags = lag_max - lag_min + 1;
    std::vector<double> corr(static_cast<size_t>(n_lags), 0.0);
    double best = 0.0;
    for (int64_t lag = lag_min; lag <= lag_max; ++lag) {
      const int64_t n = w - lag;
      double num = 0.0;
      for (int64_t i = 0; i < n; ++i)
        num += x[static_cast<size_t>(i)] * x[static_cast<size_t>(i + lag)];
      const double e0 = prefix[static_cast<size_t>(n)];
      const double e1 = prefix[static_cast<size_t>(w)] - prefix[static_cast<size_t>(lag)];
      const double den = std::sqrt(e0 * e1);
      const double r = den > 0.0 ? num / den : 0.0;
      corr[static_cast<size_t>(lag - lag_min)] = r;
      best = std::max(best, r);
    }
    if (best < cfg.voicing_threshold) continue;

    // Smallest lag that is a local maximum close to the global one; guards
    // against octave-down errors on strongly periodic frames.
    int64_t pick = -1;
    for (int64_t i = 0; i < n_lags; ++i) {
      const double r = corr[static_cast<size_t>(i)];
      if (r < 0.9 * best) continue;
      const double left = i > 0 ? corr[static_cast<size_t>(i) - 1] : -1.0;
      const double right = i + 1 < n_lags ? corr[static_cast<size_t>(i) + 1] : -1.0;
      if (r >= left && r >= right) {
        pick = i;
        break;
      }
    }
    if (pick < 0) continue;

    double lag = static_cast<double>(lag_min + pick);
    if (pick > 0 && pick + 1 < n_lags) {
      const double l = corr[static_cast<size_t>(pick) - 1];
      const double c = corr[static_cast<size_t>(pick)];
      const double r = corr[static_cast<size_t>(pick) + 1];
      const double denom = l - 2.0 * c + r;
      if (std::abs(denom) > 1e-12) {
        double delta = 0.5 * (l - r) / denom;
        delta = std::clamp(delta, -1.0, 1.0);
        lag += delta;
      }
    }
    const double f0 = sr / lag;
    if (f0 >= cfg.pitch_fmin && f0 <= cfg.pitch_fmax) {
      out.f0[static_cast<size_t>(t)] = static_cast<float>(f0);
      out.voiced[static_cast<size_t>(t)] = 1;
    }
  }
  return out;
}

SpeakerPitchStats fit_pitch_stats(const std::string& speaker_id,
                                  const std::vector<const PitchContour*>& contours) {
  double sum = 0.0;
  int64_t n = 0;
  for (const PitchContour* c : contours) {
    for (size_t i = 0; i < c->f0.size(); ++i) {
      if (!c->voiced[i]) continue;
      sum += c->f0[i];
      ++n;
    }
  }
  if (n < 2) throw ConfigError("pitch stats: speaker " + speaker_id +
                               " has fewer than 2 voiced frames");
  const double mean = sum / static_cast<double>(n);
  double var = 0.0;
  for (const PitchContour* c : contours) {
    for (size_t i = 0; i < c->f0.size(); ++i) {
      if (!c->voiced[i]) continue;
      const double d = c->f0[i] - mean;
      var += d * d;
    }
  }
  var /= static_cast<double>(n);
  const double stddev = std::sqrt(var);
  if (stddev <= 1e-6) throw ConfigError("pitch stats: speaker " + speaker_id +
                                        " has degenerate f0 spread");
  SpeakerPitchStats stats;
  stats.speaker_id = speaker_id;
  stats.mean_f0 = static_cast<float>(mean);
  stats.std_f0 = static_cast<float>(stddev);
  return stats;
}

std::vector<float> interpolate_unvoiced(const PitchContour& contour) {
  const int64_t n = static_cast<int64_t>(contour.f0.size());
  std::vector<float> out(contour.f0);
  if (contour.fully_unvoiced()) return out;  // nothing to anchor on

  int64_t first = -1, last = -1;
  for (int64_t i = 0; i < n; ++i) {
    if (contour.voiced[static_cast<size_t>(i)]) {
      if (first < 0) first = i;
      last = i;
    }
  }
  for (int64_t i = 0; i < first; ++i) out[static_cast<size_t>(i)] = out[static_cast<size_t>(first)];
  for (int64_t i = last + 1; i < n; ++i) out[static_cast<size_t>(i)] = out[static_cast<size_t>(last)];
  int64_t prev = first;
  for (int64_t i = first + 1; i <= last; ++i) {
    if (!contour.voiced[static_cast<size_t>(i)]) continue;
    for (int64_t j = prev + 1; j < i; ++j) {
      const double a = static_cast<double>(j - prev) / static_cast<double>(i - prev);
      out[static_cast<size_t>(j)] = static_cast<float>((1.0 - a) * out[static_cast<size_t>(prev)] +
                                                       a * out[static_cast<size_t>(i)]);
    }
    prev = i;
  }
  return out;
}

std::vector<float> normalize_pitch(const PitchContour& contour,
                                   const SpeakerPitchStats& stats, bool clamp) {
  if (!(stats.std_f0 > 0.0f))
    throw InvalidInput("normalize_pitch: std must be positive");
  std::vector<float> out = interpolate_unvoiced(contour);
  for (float& v : out) {
    float z = (v - stats.mean_f0) / stats.std_f0 * 0.25f + 0.5f;
    if (clamp) z = std::clamp(z, 0.0f, 1.0f);
    v = z;
  }
  return out;
}

std::vector<float> scale_energy(const std::vector<float>& energy,
                                float corpus_min, float corpus_max) {
  if (!(corpus_max > corpus_min))
    throw ConfigError("scale_energy: corpus max must exceed corpus min");
  const float inv = 1.0f / (corpus_max - corpus_min);
  std::vector<float> out(energy.size());
  for (size_t i = 0; i < energy.size(); ++i)
    out[i] = std::clamp((energy[i] - corpus_min) * inv, 0.0f, 1.0f);
  return out;
}

QuantizedSequence quantize(const std::vector<float>& values) {
  QuantizedSequence q;
  q.bins.resize(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    const float v = values[i];
    if (!(v >= 0.0f && v <= 1.0f))
      throw InvalidInput("quantize: value outside [0, 1]");
    q.bins[i] = std::min(static_cast<int>(v * 256.0f), 255);
  }
  return q;
}

Waveform mix_at_snr(const Waveform& clean, const Waveform& noise, float snr_db) {
  check_waveform(clean, "mix_at_snr");
  check_waveform(noise, "mix_at_snr");
  if (clean.sample_rate != noise.sample_rate)
    throw InvalidInput("mix_at_snr: sample rates differ");

  const size_t n = clean.samples.size();
  std::vector<float> tiled(n);
  for (size_t i = 0; i < n; ++i) tiled[i] = noise.samples[i % noise.samples.size()];

  double p_clean = 0.0, p_noise = 0.0;
  for (size_t i = 0; i < n; ++i) {
    p_clean += static_cast<double>(clean.samples[i]) * clean.samples[i];
    p_noise += static_cast<double>(tiled[i]) * tiled[i];
  }
  p_clean /= static_cast<double>(n);
  p_noise /= static_cast<double>(n);
  if (p_clean <= 0.0) throw InvalidInput("mix_at_snr: clean signal is silent");
  if (p_noise <= 0.0) throw InvalidInput("mix_at_snr: noise segment is silent");

  const double gain = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
  Waveform out;
  out.sample_rate = clean.sample_rate;
  out.samples.resize(n);
  float peak = 0.0f;
  for (size_t i = 0; i < n; ++i) {
    out.samples[i] = clean.samples[i] + static_cast<float>(gain) * tiled[i];
    peak = std::max(peak, std::abs(out.samples[i]));
  }
  if (peak > 1.0f) {
    const float scale = 1.0f / peak;
    for (float& s : out.samples) s *= scale;
  }
  return out;
}

Waveform mel_to_waveform(const MelSpectrogram& mel, int iterations,
                         const FeatureConfig& cfg) {
  cfg.validate();
  if (iterations < 1) throw InvalidInput("mel_to_waveform: iterations must be >= 1");
  if (mel.frames.rank() != 2 || mel.frames.cols() != cfg.n_mels)
    throw InvalidInput("mel_to_waveform: mel shape does not match config");
  const int64_t frames = mel.frames.rows();
  if (frames < 1) throw InvalidInput("mel_to_waveform: empty mel");
  const int n_fft = cfg.filter_length;
  const int n_bins = n_fft / 2 + 1;

  // Pseudo-inverse of the filterbank via fb^T (fb fb^T)^{-1}.
  const std::vector<double> fb = mel_filterbank(cfg);
  const int m = cfg.n_mels;
  std::vector<double> gram(static_cast<size_t>(m) * m, 0.0);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) {
      double s = 0.0;
      for (int k = 0; k < n_bins; ++k)
        s += fb[static_cast<size_t>(a) * n_bins + k] * fb[static_cast<size_t>(b) * n_bins + k];
      gram[static_cast<size_t>(a) * m + b] = s;
    }
  // Gauss-Jordan inverse with partial pivoting.
  std::vector<double> inv(static_cast<size_t>(m) * m, 0.0);
  for (int i = 0; i < m; ++i) inv[static_cast<size_t>(i) * m + i] = 1.0;
  for (int col = 0; col < m; ++col) {
    int pivot = col;
    for (int r = col + 1; r < m; ++r)
      if (std::abs(gram[static_cast<size_t>(r) * m + col]) >
          std::abs(gram[static_cast<size_t>(pivot) * m + col]))
        pivot = r;
    if (std::abs(gram[static_cast<size_t>(pivot) * m + col]) < 1e-12)
      throw ConfigError("mel_to_waveform: filterbank gram is singular");
    if (pivot != col)
      for (int k = 0; k < m; ++k) {
        std::swap(gram[static_cast<size_t>(pivot) * m + k], gram[static_cast<size_t>(col) * m + k]);
        std::swap(inv[static_cast<size_t>(pivot) * m + k], inv[static_cast<size_t>(col) * m + k]);
      }
    const double d = gram[static_cast<size_t>(col) * m + col];
    for (int k = 0; k < m; ++k) {
      gram[static_cast<size_t>(col) * m + k] /= d;
      inv[static_cast<size_t>(col) * m + k] /= d;
    }
    for (int r = 0; r < m; ++r) {
      if (r == col) continue;
      const double f = gram[static_cast<size_t>(r) * m + col];
      if (f == 0.0) continue;
      for (int k = 0; k < m; ++k) {
        gram[static_cast<size_t>(r) * m + k] -= f * gram[static_cast<size_t>(col) * m + k];
        inv[static_cast<size_t>(r) * m + k] -= f * inv[static_cast<size_t>(col) * m + k];
      }
    }
  }

  // Target magnitudes: pinv rows on the de-compressed mel.
  std::vector<double> mag(static_cast<size_t>(frames) * n_bins, 0.0);
#pragma omp parallel for schedule(static)
  for (int64_t t = 0; t < frames; ++t) {
    std::vector<double> melrow(static_cast<size_t>(m));
    for (int a = 0; a < m; ++a) melrow[static_cast<size_t>(a)] = std::exp(mel.frames(t, a));
    std::vector<double> coef(static_cast<size_t>(m), 0.0);
    for (int a = 0; a < m; ++a) {
      double s = 0.0;
      for (int b = 0; b < m; ++b) s += inv[static_cast<size_t>(a) * m + b] * melrow[static_cast<size_t>(b)];
      coef[static_cast<size_t>(a)] = s;
    }
    for (int k = 0; k < n_bins; ++k) {
      double s = 0.0;
      for (int a = 0; a < m; ++a) s += fb[static_cast<size_t>(a) * n_bins + k] * coef[static_cast<size_t>(a)];
      mag[static_cast<size_t>(t) * n_bins + k] = std::max(0.0, s);
    }
  }

  const std::vector<double> window = periodic_hann(cfg.win_length);
  const int win_offset = (n_fft - cfg.win_length) / 2;
  const int64_t padded_len = (frames - 1) * cfg.hop_length + n_fft;

  std::vector<double> phase(static_cast<size_t>(frames) * n_bins, 0.0);
  std::vector<double> signal(static_cast<size_t>(padded_len), 0.0);
  std::vector<double> frame_time(static_cast<size_t>(frames) * n_fft, 0.0);

  auto istft_pass = [&]() {
#pragma omp parallel for schedule(static)
    for (int64_t t = 0; t < frames; ++t) {
      std::vector<std::complex<double>> buf(static_cast<size_t>(n_fft), {0.0, 0.0});
      for (int k = 0; k < n_bins; ++k) {
        const double mg = mag[static_cast<size_t>(t) * n_bins + k];
        const double ph = phase[static_cast<size_t>(t) * n_bins + k];
        buf[static_cast<size_t>(k)] = std::polar(mg, ph);
      }
      for (int k = 1; k < n_fft - n_bins + 1; ++k)
        buf[static_cast<size_t>(n_fft - k)] = std::conj(buf[static_cast<size_t>(k)]);
      fft(buf, true);
      for (int i = 0; i < n_fft; ++i)
        frame_time[static_cast<size_t>(t) * n_fft + i] = buf[static_cast<size_t>(i)].real();
    }
    std::fill(signal.begin(), signal.end(), 0.0);
    std::vector<double> wsum(static_cast<size_t>(padded_len), 0.0);
    for (int64_t t = 0; t < frames; ++t) {
      const int64_t base = t * cfg.hop_length;
      for (int i = 0; i < cfg.win_length; ++i) {
        const double w = window[static_cast<size_t>(i)];
        signal[static_cast<size_t>(base + win_offset + i)] +=
            frame_time[static_cast<size_t>(t) * n_fft + win_offset + i] * w;
        wsum[static_cast<size_t>(base + win_offset + i)] += w * w;
      }
    }
    for (int64_t i = 0; i < padded_len; ++i)
      if (wsum[static_cast<size_t>(i)] > 1e-9) signal[static_cast<size_t>(i)] /= wsum[static_cast<size_t>(i)];
  };

  auto stft_phase_pass = [&]() {
#pragma omp parallel for schedule(static)
    for (int64_t t = 0; t < frames; ++t) {
      std::vector<std::complex<double>> buf(static_cast<size_t>(n_fft), {0.0, 0.0});
      const double* src = signal.data() + t * cfg.hop_length;
      for (int i = 0; i < cfg.win_length; ++i)
        buf[static_cast<size_t>(win_offset + i)] = src[win_offset + i] * window[static_cast<size_t>(i)];
      fft(buf, false);
      for (int k = 0; k < n_bins; ++k)
        phase[static_cast<size_t>(t) * n_bins + k] = std::arg(buf[static_cast<size_t>(k)]);
    }
  };

  istft_pass();
  for (int it = 1; it < iterations; ++it) {
    stft_phase_pass();
    istft_pass();
  }

  const int64_t out_len = (frames - 1) * cfg.hop_length;
  Waveform out;
  out.sample_rate = cfg.sample_rate;
  out.samples.resize(static_cast<size_t>(std::max<int64_t>(out_len, 1)));
  const int64_t pad = n_fft / 2;
  for (int64_t i = 0; i < out_len; ++i) {
    const double v = signal[static_cast<size_t>(pad + i)];
    out.samples[static_cast<size_t>(i)] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  if (out_len == 0) out.samples[0] = 0.0f;
  return out;
}

// --- WAV I/O ------------------------------------------------------------

namespace {

uint32_t rd_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t rd_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("read_wav: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw DataError("read_wav: not a RIFF/WAVE file: " + path.string());

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  size_t data_off = 0, data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const uint32_t chunk_len = rd_u32(bytes.data() + pos + 4);
    const unsigned char* tag = bytes.data() + pos;
    if (std::memcmp(tag, "fmt ", 4) == 0 && pos + 8 + 16 <= bytes.size()) {
      const unsigned char* f = bytes.data() + pos + 8;
      format = rd_u16(f);
      channels = rd_u16(f + 2);
      rate = rd_u32(f + 4);
      bits = rd_u16(f + 14);
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data_off = pos + 8;
      data_len = std::min<size_t>(chunk_len, bytes.size() - data_off);
    }
    pos += 8 + chunk_len + (chunk_len & 1);
  }
  if (!rate || !channels || !data_len)
    throw DataError("read_wav: missing fmt or data chunk: " + path.string());

  const bool is_float = format == 3;
  if (!is_float && format != 1)
    throw DataError("read_wav: unsupported format tag " + std::to_string(format));
  const size_t bytes_per = bits / 8;
  if (bytes_per == 0 || (is_float && bits != 32) ||
      (!is_float && bits != 16 && bits != 24 && bits != 32))
    throw DataError("read_wav: unsupported bit depth " + std::to_string(bits));

  const size_t n_frames = data_len / (bytes_per * channels);
  Waveform wav;
  wav.sample_rate = static_cast<int>(rate);
  wav.samples.resize(n_frames);
  const unsigned char* d = bytes.data() + data_off;
  for (size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (uint16_t c = 0; c < channels; ++c) {
      const unsigned char* s = d + (i * channels + c) * bytes_per;
      double v = 0.0;
      if (is_float) {
        float f;
        std::memcpy(&f, s, 4);
        v = f;
      } else if (bits == 16) {
        v = static_cast<int16_t>(s[0] | (s[1] << 8)) / 32768.0;
      } else if (bits == 24) {
        int32_t raw = s[0] | (s[1] << 8) | (s[2] << 16);
        if (raw & 0x800000) raw |= static_cast<int32_t>(0xff000000);
        v = raw / 8388608.0;
      } else {
        const int32_t raw = static_cast<int32_t>(rd_u32(s));
        v = raw / 2147483648.0;
      }
      acc += v;
    }
    wav.samples[i] = static_cast<float>(acc / channels);
  }
  return wav;
}

void write_wav(const std::filesystem::path& path, const Waveform& wav) {
  check_waveform(wav, "write_wav");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("write_wav: cannot open " + path.string());
  const uint32_t data_len = static_cast<uint32_t>(wav.samples.size() * 2);
  auto w_u32 = [&](uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
  };
  auto w_u16 = [&](uint16_t v) {
    const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    os.write(b, 2);
  };
  os.write("RIFF", 4);
  w_u32(36 + data_len);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  w_u32(16);
  w_u16(1);  // PCM
  w_u16(1);  // mono
  w_u32(static_cast<uint32_t>(wav.sample_rate));
  w_u32(static_cast<uint32_t>(wav.sample_rate) * 2);
  w_u16(2);
  w_u16(16);
  os.write("data", 4);
  w_u32(data_len);
  for (float s : wav.samples) {
    const float c = std::clamp(s, -1.0f, 1.0f);
    const int16_t v = static_cast<int16_t>(std::lrint(c * 32767.0f));
    w_u16(static_cast<uint16_t>(v));
  }
  if (!os) throw DataError("write_wav: write failed " + path.string());
}

Waveform resample(const Waveform& wav, int target_rate) {
  check_waveform(wav, "resample");
  if (target_rate <= 0) throw InvalidInput("resample: target rate must be positive");
  if (wav.sample_rate == target_rate) return wav;
  const double ratio = static_cast<double>(wav.sample_rate) / target_rate;
  const int64_t out_len = std::max<int64_t>(
      1, std::llround(static_cast<double>(wav.samples.size()) * target_rate / wav.sample_rate));
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(static_cast<size_t>(out_len));
  const int64_t in_len = static_cast<int64_t>(wav.samples.size());
  for (int64_t i = 0; i < out_len; ++i) {
    const double pos = i * ratio;
    int64_t k = static_cast<int64_t>(pos);
    if (k >= in_len - 1) k = in_len - 2;
    if (k < 0) k = 0;
    const double frac = pos - k;
    const double a = wav.samples[static_cast<size_t>(k)];
    const double b = wav.samples[static_cast<size_t>(std::min(k + 1, in_len - 1))];
    out.samples[static_cast<size_t>(i)] = static_cast<float>((1.0 - frac) * a + frac * b);
  }
  return out;
}

}  // namespace dsp
}  // namespace styler
