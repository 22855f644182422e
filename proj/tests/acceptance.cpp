// tests/acceptance.cpp

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

// End-to-end acceptance suite. Each criterion prints one pass/fail line;
// the process exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <vector>

#include "json.hpp"
#include "styler/align.hpp"
#include "styler/cli.hpp"
#include "styler/dsp.hpp"
#include "styler/model.hpp"
#include "styler/objectives.hpp"
#include "styler/pipeline.hpp"
#include "styler/styf.hpp"
#include "support/fixture.hpp"

using namespace styler;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Harness {
 public:
  void run(int number, const std::string& title, const std::function<void()>& body) {
    current_failures_.clear();
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const std::exception& e) {
      current_failures_.push_back(std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = current_failures_.empty();
    std::ostringstream line;
    line << (ok ? "[PASS] " : "[FAIL] ") << "criterion " << number << ": " << title
         << "  (" << std::fixed << std::setprecision(1) << secs << "s)";
    std::cout << line.str() << "\n";
    for (const auto& f : current_failures_) std::cout << "       - " << f << "\n";
    std::cout.flush();
    if (!ok) ++failed_;
  }

  void check(bool cond, const std::string& what) {
    if (!cond) current_failures_.push_back(what);
  }

  int finish() {
    std::cout << (failed_ == 0 ? "all criteria passed"
                               : std::to_string(failed_) + " criteria failed")
              << "\n";
    return failed_ == 0 ? 0 : 1;
  }

 private:
  std::vector<std::string> current_failures_;
  int failed_ = 0;
};

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

model::ModelConfig scaled_config(const pipeline::ManifestHeader& header, int64_t hidden) {
  model::ModelConfig cfg = model::ModelConfig::desk_scale(hidden);
  cfg.symbols = header.symbols;
  cfg.speakers = header.speakers;
  cfg.n_mels = header.n_mels;
  return cfg;
}

Tensor random_mel(Rng& rng, int64_t frames, int64_t n_mels) {
  Tensor m({frames, n_mels});
  for (int64_t i = 0; i < m.numel(); ++i) m[i] = rng.uniform(-8.0f, 1.0f);
  return m;
}

model::EncoderFeatures random_features(Rng& rng, int64_t frames, int64_t n_mels) {
  model::EncoderFeatures f;
  f.mel = random_mel(rng, frames, n_mels);
  f.pitch_bins.resize(static_cast<size_t>(frames));
  f.energy_bins.resize(static_cast<size_t>(frames));
  for (auto& v : f.pitch_bins) v = static_cast<int>(rng.uniform_int(0, 255));
  for (auto& v : f.energy_bins) v = static_cast<int>(rng.uniform_int(0, 255));
  return f;
}

std::vector<float> param_grads(const nn::ParamStore& store, const std::string& prefix) {
  std::vector<float> out;
  for (const std::string& name : store.order()) {
    if (name.rfind(prefix, 0) != 0 || !store.is_parameter(name)) continue;
    const ad::Var& v = store.get(name);
    const_cast<ad::Node&>(*v).ensure_grad();
    out.insert(out.end(), v->grad.data(), v->grad.data() + v->grad.numel());
  }
  return out;
}

double abs_sum(const std::vector<float>& v) {
  double s = 0.0;
  for (float x : v) s += std::abs(x);
  return s;
}

// The full per-item training graph; lets single loss terms be
// back-propagated in isolation.
struct ItemGraph {
  ad::Var mel_clean, duration, pitch, energy, mel_noisy, aug;
};

ItemGraph build_item_graph(model::StylerModel& m, nn::Ctx& ctx,
                           const std::vector<int64_t>& phones,
                           const model::EncoderFeatures& feats,
                           const std::vector<int64_t>& durations,
                           const Tensor& target_mel, int label) {
  using model::Factor;
  const int64_t n = static_cast<int64_t>(phones.size());
  const ad::Var z_t = m.encode_text(ctx, phones);
  const auto dur = m.encode_audio_factor(ctx, Factor::Duration, feats.mel, n);
  const auto pit = m.encode_audio_factor(ctx, Factor::Pitch, feats.pitch_bins, n);
  const auto ene = m.encode_audio_factor(ctx, Factor::Energy, feats.energy_bins, n);
  const auto noi = m.encode_audio_factor(ctx, Factor::Noise, feats.mel, n);
  model::SpeakerRef spk;
  spk.id = m.config().speakers.front();
  const ad::Var z_s = m.get_speaker_encoding(spk);

  std::vector<float> pitch_target(static_cast<size_t>(n), 0.5f);
  std::vector<float> energy_target(static_cast<size_t>(n), 0.4f);
  std::vector<float> log_dur(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    log_dur[static_cast<size_t>(i)] =
        std::log(static_cast<float>(durations[static_cast<size_t>(i)]) + 1.0f);

  ItemGraph g;
  g.duration = objectives::variance_loss(m.predict_duration(ctx, dur.up, z_t),
                                         Tensor::from({n, 1}, log_dur));
  g.pitch = objectives::variance_loss(m.predict_pitch(ctx, pit.down, z_t, z_s),
                                      Tensor::from({n, 1}, pitch_target));
  g.energy = objectives::variance_loss(m.predict_energy(ctx, ene.up, z_t),
                                       Tensor::from({n, 1}, energy_target));
  const ad::Var summed = m.assemble_decoder_input(
      z_t, m.embed_variance(pitch_target, model::StylerModel::VarianceKind::Pitch),
      m.embed_variance(energy_target, model::StylerModel::VarianceKind::Energy), z_s);
  g.mel_clean = objectives::mel_loss(m.decode_clean(ctx, summed, durations), target_mel);
  std::vector<ad::Var> logits;
  for (model::Factor f : m.dat_factors()) {
    const ad::Var tap = f == model::Factor::Duration ? dur.up
                        : f == model::Factor::Pitch  ? pit.up
                                                     : ene.up;
    logits.push_back(m.classify_augmentation_grl(ctx, f, tap, 1.0f));
  }
  g.aug = model::adversarial_loss(logits, label);
  g.mel_noisy =
      objectives::mel_loss(m.decode_noisy(ctx, summed, durations, noi.up), feats.mel);
  return g;
}

}  // namespace

int main() {
  Harness h;
  const fs::path root = testsupport::unique_temp_dir("acceptance");

  // Shared toy corpus: 4 utterances over 2 speakers, preprocessed with
  // augmentation.
  const auto corpus = testsupport::make_toy_corpus(root / "toy", 4, 2, 401);
  const fs::path manifest_path = testsupport::preprocess_toy(corpus, 401);

  // ---------------------------------------------------------------- 1
  h.run(1, "mel calibrator contract (1000 random shapes)", [&] {
    Rng rng(1001);
    const auto t0 = std::chrono::steady_clock::now();
    for (int rep = 0; rep < 1000; ++rep) {
      const int64_t t = rng.uniform_int(1, 2000);
      const int64_t n = rng.uniform_int(1, 400);
      Tensor x({t, 8});
      const float c0 = rng.uniform(-5.0f, 5.0f);
      for (int64_t r = 0; r < t; ++r) {
        x(r, 0) = c0;
        for (int64_t c = 1; c < 8; ++c) x(r, c) = rng.uniform(-5.0f, 5.0f);
      }
      const Tensor y = align::calibrate(x, n);
      if (y.rows() != n) {
        h.check(false, "output length mismatch at T=" + fmt(double(t)));
        return;
      }
      for (int64_t r = 0; r < n; ++r) {
        if (y(r, 0) != c0) {
          h.check(false, "constant channel not preserved exactly");
          return;
        }
      }
      if (rep % 20 == 0) {
        const Tensor id = align::calibrate(x, t);
        if (std::memcmp(id.data(), x.data(),
                        sizeof(float) * static_cast<size_t>(x.numel())) != 0) {
          h.check(false, "T=N identity not bit-exact");
          return;
        }
      }
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    h.check(secs < 10.0, "runtime " + fmt(secs) + "s exceeds 10s");
  });

  // ---------------------------------------------------------------- 2
  h.run(2, "snr fidelity within 0.1 dB over [5, 25]", [&] {
    Rng rng(1002);
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (int rep = 0; rep < 200; ++rep) {
      const auto clean =
          testsupport::make_voiced_tone(0.3 + 0.2 * rng.uniform_double(),
                                        120.0 + 140.0 * rng.uniform_double(), 5000 + rep);
      dsp::Waveform noise;
      noise.sample_rate = clean.sample_rate;
      noise.samples.resize(clean.samples.size() * 2 / 3 + 64);
      for (auto& v : noise.samples) v = rng.normal() * 0.08f;
      const float snr = rng.uniform(5.0f, 25.0f);
      const auto mixed = dsp::mix_at_snr(clean, noise, snr);
      double p_clean = 0.0, p_noise = 0.0;
      for (size_t i = 0; i < mixed.samples.size(); ++i) {
        const double d = mixed.samples[i] - clean.samples[i];
        p_clean += static_cast<double>(clean.samples[i]) * clean.samples[i];
        p_noise += d * d;
      }
      const double measured = 10.0 * std::log10(p_clean / p_noise);
      worst = std::max(worst, std::abs(measured - snr));
    }
    h.check(worst < 0.1, "worst deviation " + fmt(worst) + " dB");
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    h.check(secs < 30.0, "runtime " + fmt(secs) + "s exceeds 30s");
  });

  // ---------------------------------------------------------------- 3
  h.run(3, "pitch normalization hits mean 0.5, std 0.25 per speaker", [&] {
    const pipeline::Manifest m = pipeline::Manifest::load(manifest_path);
    for (const auto& spk : m.header.speakers) {
      dsp::SpeakerPitchStats stats;
      stats.speaker_id = spk;
      stats.mean_f0 = static_cast<float>(m.header.pitch_stats.at(spk).mean_f0);
      stats.std_f0 = static_cast<float>(m.header.pitch_stats.at(spk).std_f0);
      double sum = 0.0, sq = 0.0;
      int64_t count = 0;
      for (const auto& e : m.entries) {
        if (e.speaker_id != spk) continue;
        const auto ts = styf::read_file(m.base_dir / e.clean_features);
        const Tensor& f0 = styf::find(ts, "f0");
        const Tensor& voiced = styf::find(ts, "voiced");
        dsp::PitchContour contour;
        contour.f0.assign(f0.data(), f0.data() + f0.numel());
        contour.voiced.resize(static_cast<size_t>(voiced.numel()));
        for (int64_t i = 0; i < voiced.numel(); ++i)
          contour.voiced[static_cast<size_t>(i)] = voiced[i] > 0.5f;
        const auto norm = dsp::normalize_pitch(contour, stats, /*clamp=*/false);
        for (size_t i = 0; i < norm.size(); ++i) {
          if (!contour.voiced[i]) continue;
          sum += norm[i];
          sq += static_cast<double>(norm[i]) * norm[i];
          ++count;
        }
      }
      h.check(count > 50, "speaker " + spk + " has too few voiced frames");
      const double mean = sum / count;
      const double stddev = std::sqrt(std::max(0.0, sq / count - mean * mean));
      h.check(std::abs(mean - 0.5) < 0.02, "speaker " + spk + " mean " + fmt(mean));
      h.check(std::abs(stddev - 0.25) < 0.02, "speaker " + spk + " std " + fmt(stddev));
    }
  });

  // ---------------------------------------------------------------- 4
  h.run(4, "grl sign law at lambda 0.5 and 1.0 (rtol 1e-5)", [&] {
    using model::Factor;
    for (const float lambda : {0.5f, 1.0f}) {
      model::ModelConfig cfg = model::ModelConfig::desk_scale(32);
      cfg.symbols = {"A", "B"};
      cfg.speakers = {"s0"};
      cfg.dropout = 0.0f;
      cfg.predictor_dropout = 0.0f;
      model::StylerModel m(cfg, 404);
      Rng rng(405);
      nn::Ctx ctx;
      const auto feats = random_features(rng, 40, cfg.n_mels);
      const std::vector<std::pair<Factor, std::string>> cases = {
          {Factor::Duration, "enc.duration."},
          {Factor::Pitch, "enc.pitch."},
          {Factor::Energy, "enc.energy."}};
      for (const auto& [factor, prefix] : cases) {
        auto encode = [&]() {
          if (factor == Factor::Duration)
            return m.encode_audio_factor(ctx, factor, feats.mel, 5);
          if (factor == Factor::Pitch)
            return m.encode_audio_factor(ctx, factor, feats.pitch_bins, 5);
          return m.encode_audio_factor(ctx, factor, feats.energy_bins, 5);
        };
        m.store().zero_grads();
        ad::backward(model::adversarial_loss(
            {m.classify_augmentation(ctx, factor, encode().up)}, 1));
        const auto control = param_grads(m.store(), prefix);
        m.store().zero_grads();
        ad::backward(model::adversarial_loss(
            {m.classify_augmentation_grl(ctx, factor, encode().up, lambda)}, 1));
        const auto reversed = param_grads(m.store(), prefix);
        h.check(abs_sum(control) > 0.0, prefix + "control gradient vanished");
        double max_rel = 0.0;
        for (size_t i = 0; i < control.size(); ++i) {
          const double want = -static_cast<double>(lambda) * control[i];
          if (std::abs(want) < 1e-12) continue;
          max_rel = std::max(max_rel, std::abs(reversed[i] - want) / std::abs(want));
        }
        h.check(max_rel <= 1e-5,
                prefix + " lambda " + fmt(lambda) + " max rel err " + fmt(max_rel));
      }
    }
  });

  // ---------------------------------------------------------------- 5
  h.run(5, "residual decoding gradient isolation on 5 seeds", [&] {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
      model::ModelConfig cfg = model::ModelConfig::desk_scale(32);
      cfg.symbols = {"A", "B", "C"};
      cfg.speakers = {"s0"};
      cfg.dropout = 0.0f;
      cfg.predictor_dropout = 0.0f;
      model::StylerModel m(cfg, 500 + seed);
      Rng rng(600 + seed);
      nn::Ctx ctx;
      const auto feats = random_features(rng, 30, cfg.n_mels);
      const std::vector<int64_t> phones = {0, 1, 2, 1};
      const std::vector<int64_t> durations = {7, 8, 7, 8};
      const Tensor target = random_mel(rng, 30, cfg.n_mels);

      m.store().zero_grads();
      const ItemGraph g = build_item_graph(m, ctx, phones, feats, durations, target, 1);
      ad::backward(g.mel_noisy);  // the noisy reconstruction term alone

      for (const char* prefix : {"text.", "enc.duration.", "enc.pitch.", "enc.energy."}) {
        const double s = abs_sum(param_grads(m.store(), prefix));
        h.check(s == 0.0, std::string(prefix) + " gradient not exactly zero (seed " +
                              fmt(double(seed)) + ", sum " + fmt(s) + ")");
      }
      h.check(abs_sum(param_grads(m.store(), "enc.noise.")) > 0.0,
              "noise encoder gradient vanished (seed " + fmt(double(seed)) + ")");
      h.check(abs_sum(param_grads(m.store(), "dec.")) > 0.0,
              "decoder gradient vanished (seed " + fmt(double(seed)) + ")");
    }
  });

  // ---------------------------------------------------------------- 6
  h.run(6, "loss decomposition identity over a 200-step run", [&] {
    const fs::path run200 = root / "run200";
    const fs::path cfg_path = root / "model16.json";
    {
      std::ofstream os(cfg_path);
      os << model::ModelConfig::desk_scale(16).to_json();
    }
    const int code = cli::run_cli({"train", "--manifest", manifest_path.string(),
                                   "--steps", "200", "--batch-size", "2", "--run-dir",
                                   run200.string(), "--model-config", cfg_path.string(),
                                   "--ckpt-every", "0", "--warmup-steps", "100",
                                   "--seed", "7"});
    h.check(code == 0, "train exit code " + fmt(code));
    std::ifstream is(run200 / "loss_log.jsonl");
    h.check(is.good(), "loss log missing");
    std::string line;
    int64_t steps = 0;
    double worst = 0.0;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      ++steps;
      const json j = json::parse(line);
      const double clean_sum =
          j.at("l_mel_clean").get<double>() + j.at("l_duration").get<double>() +
          j.at("l_pitch").get<double>() + j.at("l_energy").get<double>();
      const double total_sum = clean_sum + j.at("l_mel_noisy").get<double>() +
                               j.at("l_aug").get<double>();
      worst = std::max(worst, std::abs(j.at("loss_clean").get<double>() - clean_sum));
      worst = std::max(worst, std::abs(j.at("loss_total").get<double>() - total_sum));
    }
    h.check(steps == 200, "expected 200 logged steps, found " + fmt(double(steps)));
    h.check(worst <= 1e-6, "decomposition residual " + fmt(worst));

    // Noise modeling disabled: the noisy and adversarial parts are zero.
    const fs::path run_off = root / "run_nonoise";
    const int code2 = cli::run_cli(
        {"train", "--manifest", manifest_path.string(), "--steps", "40", "--batch-size",
         "2", "--run-dir", run_off.string(), "--model-config", cfg_path.string(),
         "--no-noise-modeling", "--warmup-steps", "100", "--seed", "7"});
    h.check(code2 == 0, "no-noise train exit code " + fmt(code2));
    std::ifstream is2(run_off / "loss_log.jsonl");
    int64_t steps2 = 0;
    bool all_zero = true;
    while (std::getline(is2, line)) {
      if (line.empty()) continue;
      ++steps2;
      const json j = json::parse(line);
      all_zero &= j.at("l_mel_noisy").get<double>() == 0.0;
      all_zero &= j.at("l_aug").get<double>() == 0.0;
    }
    h.check(steps2 == 40, "expected 40 logged steps");
    h.check(all_zero, "noisy/adversarial parts not identically zero");
  });

  // ---------------------------------------------------------------- 7
  h.run(7, "shape ledger at full architecture dimensions", [&] {
    model::ModelConfig cfg;  // full-width defaults
    cfg.symbols = {"AA", "B", "K", "S", "T", "IY", "N", "OW"};
    cfg.speakers = {"s0", "s1"};
    h.check(cfg.hidden_dim == 256 && cfg.conv_dim_pitch == 320 &&
                cfg.conv_dim_duration == 256 && cfg.blstm_size_default == 64 &&
                cfg.blstm_size_duration == 80 && cfg.text_bottleneck_dim == 4 &&
                cfg.decoder_fft_blocks == 4 && cfg.text_fft_blocks == 2 &&
                cfg.text_heads == 4 && cfg.decoder_heads == 4 &&
                cfg.groupnorm_groups == 16 && cfg.n_bins == 256,
            "defaults drifted from the reference architecture");
    model::StylerModel m(cfg, 700);
    h.check(m.store().get("enc.duration.conv0.weight")->value.shape() ==
                std::vector<int64_t>{256, 80, 5},
            "duration conv width");
    h.check(m.store().get("enc.noise.conv2.weight")->value.shape() ==
                std::vector<int64_t>{256, 256, 5},
            "noise conv width");
    h.check(m.store().get("enc.pitch.conv1.weight")->value.shape() ==
                std::vector<int64_t>{320, 320, 5},
            "pitch conv width");
    h.check(m.store().get("enc.energy.conv0.weight")->value.shape() ==
                std::vector<int64_t>{320, 320, 5},
            "energy conv width");
    h.check(m.store().get("dec.out.weight")->value.shape() ==
                std::vector<int64_t>{256, 80},
            "decoder output projection");

    Rng rng(701);
    nn::Ctx ctx;
    for (const int64_t n : {int64_t(1), int64_t(7), int64_t(64)}) {
      std::vector<int64_t> phones(static_cast<size_t>(n));
      for (auto& p : phones) p = rng.uniform_int(0, cfg.vocab_size() - 1);
      const auto feats = random_features(rng, 100, cfg.n_mels);
      model::SpeakerRef spk;
      spk.id = "s1";
      const auto enc = m.encode(ctx, phones, feats, spk);
      h.check(enc.text->value.shape() == std::vector<int64_t>{n, 256}, "text shape");
      h.check(enc.text_down->value.shape() == std::vector<int64_t>{n, 4},
              "downsampled text shape");
      h.check(enc.duration->value.shape() == std::vector<int64_t>{n, 256},
              "duration encoding shape");
      h.check(enc.pitch_down->value.shape() == std::vector<int64_t>{n, 128},
              "pitch bottleneck shape (64 per direction)");
      h.check(enc.pitch->value.shape() == std::vector<int64_t>{n, 256},
              "pitch encoding shape");
      h.check(enc.energy->value.shape() == std::vector<int64_t>{n, 256},
              "energy encoding shape");
      h.check(enc.noise->value.shape() == std::vector<int64_t>{n, 256},
              "noise encoding shape");
      h.check(enc.speaker->value.numel() == 256, "speaker encoding length");
      const auto dur = m.encode_audio_factor(ctx, model::Factor::Duration, feats.mel, n);
      h.check(dur.down->value.shape() == std::vector<int64_t>{n, 160},
              "duration bottleneck (80 per direction)");
      h.check(m.predict_duration(ctx, enc.duration, enc.text)->value.shape() ==
                  std::vector<int64_t>{n, 1},
              "duration predictor output");
      h.check(m.predict_pitch(ctx, enc.pitch_down, enc.text, enc.speaker)
                      ->value.shape() == std::vector<int64_t>{n, 1},
              "pitch predictor output");
      h.check(m.predict_energy(ctx, enc.energy, enc.text)->value.shape() ==
                  std::vector<int64_t>{n, 1},
              "energy predictor output");
      const std::vector<int64_t> durations(static_cast<size_t>(n), 3);
      const ad::Var summed = m.assemble_decoder_input(
          enc.text,
          m.embed_variance(std::vector<float>(static_cast<size_t>(n), 0.5f),
                           model::StylerModel::VarianceKind::Pitch),
          m.embed_variance(std::vector<float>(static_cast<size_t>(n), 0.5f),
                           model::StylerModel::VarianceKind::Energy),
          enc.speaker);
      const ad::Var mel = m.decode_clean(ctx, summed, durations);
      h.check(mel->value.shape() == std::vector<int64_t>{3 * n, 80},
              "decoded mel shape");
    }
  });

  // ---------------------------------------------------------------- 8
  h.run(8, "overfit sanity: 2000 steps on a 2-utterance corpus", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    const auto small =
        testsupport::make_toy_corpus(root / "overfit", 2, 1, 801, 0.42, 0.55);
    const fs::path small_manifest = testsupport::preprocess_toy(small, 801);
    pipeline::Dataset data(small_manifest);
    model::ModelConfig mcfg = scaled_config(data.manifest().header, 64);
    // An overfit probe: regularization off so the memorization is clean.
    mcfg.dropout = 0.0f;
    mcfg.predictor_dropout = 0.0f;
    pipeline::TrainConfig tcfg;
    tcfg.batch_size = 2;
    tcfg.seed = 802;
    tcfg.warmup_steps = 400;
    model::StylerModel m(mcfg, 803);
    pipeline::Trainer trainer(m, tcfg, data);

    double step10_clean = 0.0;
    std::vector<double> tail;
    for (int64_t s = 1; s <= 2000; ++s) {
      const auto b = trainer.step();
      if (s == 10) step10_clean = b.loss_clean;
      if (s > 1980) tail.push_back(b.loss_clean);
    }
    double tail_mean = 0.0;
    for (double v : tail) tail_mean += v;
    tail_mean /= static_cast<double>(tail.size());
    h.check(step10_clean > 0.0, "step-10 loss not captured");
    h.check(tail_mean <= 0.2 * step10_clean,
            "loss_clean fell from " + fmt(step10_clean) + " only to " + fmt(tail_mean));

    // Synthesis against the training target: predicted pitch/energy,
    // ground-truth durations so the frame grids align.
    const auto& utt = data.utterances()[0];
    nn::Ctx ctx;  // eval mode
    const ad::Var z_t = m.encode_text(ctx, utt.entry->phone_ids);
    const int64_t n = static_cast<int64_t>(utt.entry->phone_ids.size());
    const auto pit = m.encode_audio_factor(ctx, model::Factor::Pitch,
                                           utt.clean_features.pitch_bins, n);
    const auto ene = m.encode_audio_factor(ctx, model::Factor::Energy,
                                           utt.clean_features.energy_bins, n);
    model::SpeakerRef spk;
    spk.id = utt.entry->speaker_id;
    const ad::Var z_s = m.get_speaker_encoding(spk);
    const ad::Var pitch_pred = m.predict_pitch(ctx, pit.down, z_t, z_s);
    const ad::Var energy_pred = m.predict_energy(ctx, ene.up, z_t);
    std::vector<float> pitch_vals(static_cast<size_t>(n));
    std::vector<float> energy_vals(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      pitch_vals[static_cast<size_t>(i)] = std::clamp(pitch_pred->value[i], 0.0f, 1.0f);
      energy_vals[static_cast<size_t>(i)] = std::clamp(energy_pred->value[i], 0.0f, 1.0f);
    }
    const ad::Var summed = m.assemble_decoder_input(
        z_t, m.embed_variance(pitch_vals, model::StylerModel::VarianceKind::Pitch),
        m.embed_variance(energy_vals, model::StylerModel::VarianceKind::Energy), z_s);
    const ad::Var mel = m.decode_clean(ctx, summed, utt.entry->durations);
    double mse = 0.0;
    for (int64_t i = 0; i < mel->value.numel(); ++i) {
      const double d = mel->value[i] - utt.clean_mel[i];
      mse += d * d;
    }
    mse /= static_cast<double>(mel->value.numel());
    h.check(mse < 0.1, "synthesized mel MSE " + fmt(mse));

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    h.check(secs < 900.0, "runtime " + fmt(secs) + "s exceeds 15 minutes");
  });

  // ---------------------------------------------------------------- 9
  h.run(9, "controllability: masked factors ignore the reference audio", [&] {
    using model::Factor;
    model::ModelConfig cfg = model::ModelConfig::desk_scale(32);
    cfg.symbols = {"A", "B", "C", "D"};
    cfg.speakers = {"s0"};
    cfg.dropout = 0.0f;
    cfg.predictor_dropout = 0.0f;
    model::StylerModel m(cfg, 900);
    Rng rng(901);
    nn::Ctx ctx;
    const std::vector<int64_t> phones = {0, 1, 2, 3, 2};
    const auto ref_a = random_features(rng, 38, cfg.n_mels);
    const auto ref_b = random_features(rng, 57, cfg.n_mels);
    model::SpeakerRef spk;
    spk.id = "s0";
    const auto enc_a = m.encode(ctx, phones, ref_a, spk);
    const auto enc_b = m.encode(ctx, phones, ref_b, spk);
    auto equal = [](const ad::Var& x, const ad::Var& y) {
      return x->value.same_shape(y->value) &&
             std::memcmp(x->value.data(), y->value.data(),
                         sizeof(float) * static_cast<size_t>(x->value.numel())) == 0;
    };

    h.check(!equal(m.predict_pitch(ctx, enc_a.pitch_down, enc_a.text, enc_a.speaker),
                   m.predict_pitch(ctx, enc_b.pitch_down, enc_b.text, enc_b.speaker)),
            "pitch prediction insensitive to the reference");
    h.check(!equal(m.predict_duration(ctx, enc_a.duration, enc_a.text),
                   m.predict_duration(ctx, enc_b.duration, enc_b.text)),
            "duration prediction insensitive to the reference");
    h.check(!equal(m.predict_energy(ctx, enc_a.energy, enc_a.text),
                   m.predict_energy(ctx, enc_b.energy, enc_b.text)),
            "energy prediction insensitive to the reference");

    const auto pa = model::StylerModel::mask_encoding(enc_a, Factor::Pitch);
    const auto pb = model::StylerModel::mask_encoding(enc_b, Factor::Pitch);
    h.check(equal(m.predict_pitch(ctx, pa.pitch_down, pa.text, pa.speaker),
                  m.predict_pitch(ctx, pb.pitch_down, pb.text, pb.speaker)),
            "masked pitch predictions differ across references");
    const auto da = model::StylerModel::mask_encoding(enc_a, Factor::Duration);
    const auto db = model::StylerModel::mask_encoding(enc_b, Factor::Duration);
    h.check(equal(m.predict_duration(ctx, da.duration, da.text),
                  m.predict_duration(ctx, db.duration, db.text)),
            "masked duration predictions differ across references");
    const auto ea = model::StylerModel::mask_encoding(enc_a, Factor::Energy);
    const auto eb = model::StylerModel::mask_encoding(enc_b, Factor::Energy);
    h.check(equal(m.predict_energy(ctx, ea.energy, ea.text),
                  m.predict_energy(ctx, eb.energy, eb.text)),
            "masked energy predictions differ across references");
  });

  // ---------------------------------------------------------------- 10
  h.run(10, "non-autoregression: one decoder call per utterance", [&] {
    model::ModelConfig cfg = model::ModelConfig::desk_scale(32);
    cfg.symbols = {"A", "B", "C"};
    cfg.speakers = {"s0"};
    model::StylerModel m(cfg, 1000);
    Rng rng(1001);
    model::StylerModel::SynthesisInputs in;
    in.speaker.id = "s0";
    const auto ref = random_features(rng, 45, cfg.n_mels);
    for (model::Factor f : model::audio_factors()) in.refs[f] = ref;

    in.phones = {0, 1};
    const int64_t c0 = m.decoder_invocations();
    const auto short_out = m.synthesize(in);
    h.check(m.decoder_invocations() == c0 + 1, "short utterance: more than one call");

    in.phones = {0, 1, 2, 1, 0, 2, 1, 2, 0, 1, 2, 0};
    const int64_t c1 = m.decoder_invocations();
    const auto long_out = m.synthesize(in);
    h.check(m.decoder_invocations() == c1 + 1, "long utterance: more than one call");
    h.check(long_out.mel.rows() > short_out.mel.rows(),
            "output length did not scale with the text");
  });

  // ---------------------------------------------------------------- 11
  h.run(11, "determinism, checkpoint round trip, resume equivalence", [&] {
    pipeline::Dataset data(manifest_path);
    const auto mcfg = scaled_config(data.manifest().header, 16);
    pipeline::TrainConfig tcfg;
    tcfg.batch_size = 2;
    tcfg.seed = 1100;
    tcfg.warmup_steps = 50;

    model::StylerModel ma(mcfg, 1101);
    pipeline::Trainer ta(ma, tcfg, data);
    model::StylerModel mb(mcfg, 1101);
    pipeline::Trainer tb(mb, tcfg, data);
    objectives::LossBreakdown la, lb;
    for (int s = 0; s < 10; ++s) {
      la = ta.step();
      lb = tb.step();
    }
    h.check(std::abs(la.loss_total - lb.loss_total) <= 1e-6,
            "step-10 losses differ: " + fmt(la.loss_total) + " vs " +
                fmt(lb.loss_total));

    const auto stats = pipeline::NormStats::from_header(data.manifest().header);
    const fs::path ck1 = root / "ck1.styc";
    const fs::path ck2 = root / "ck2.styc";
    pipeline::save_checkpoint(ck1, ma, ta.optimizer(), ta.steps_done(), stats);
    model::StylerModel mc(mcfg, 1);
    pipeline::Trainer tc(mc, tcfg, data);
    const auto info = pipeline::load_checkpoint(ck1, mc, &tc.optimizer());
    tc.set_steps_done(info.step);
    pipeline::save_checkpoint(ck2, mc, tc.optimizer(), tc.steps_done(), stats);
    std::ifstream f1(ck1, std::ios::binary), f2(ck2, std::ios::binary);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    h.check(!s1.str().empty() && s1.str() == s2.str(),
            "checkpoint round trip not byte-identical");

    std::vector<double> resumed;
    for (int s = 10; s < 14; ++s) resumed.push_back(tc.step().loss_total);
    std::vector<double> full;
    for (int s = 10; s < 14; ++s) full.push_back(tb.step().loss_total);
    for (size_t i = 0; i < full.size(); ++i)
      h.check(std::abs(resumed[i] - full[i]) <= 1e-5,
              "resumed step " + fmt(double(11 + i)) + " diverged: " + fmt(resumed[i]) +
                  " vs " + fmt(full[i]));
  });

  return h.finish();
}
