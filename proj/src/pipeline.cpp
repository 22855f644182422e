// styler/pipeline.cpp

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

#include "styler/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "styler/errors.hpp"
#include "styler/styf.hpp"

namespace styler {
namespace pipeline {

using nlohmann::json;

// --- manifest -------------------------------------------------------------

dsp::FeatureConfig ManifestHeader::feature_config() const {
  dsp::FeatureConfig fc;
  fc.sample_rate = sample_rate;
  fc.filter_length = filter_length;
  fc.win_length = win_length;
  fc.hop_length = hop_length;
  fc.n_mels = n_mels;
  return fc;
}

std::vector<std::string> ManifestHeader::split_speakers(const std::string& split) const {
  std::set<std::string> listed;
  for (const auto& [name, spk] : splits)
    for (const auto& s : spk) listed.insert(s);
  std::vector<std::string> out;
  auto it = splits.find(split);
  if (it != splits.end()) out = it->second;
  if (split == "train") {
    // Speakers not assigned to any split train by default.
    for (const auto& s : speakers)
      if (!listed.count(s)) out.push_back(s);
  }
  return out;
}

namespace {

json header_to_json(const ManifestHeader& h) {
  json j;
  j["type"] = "styler-manifest";
  j["version"] = 1;
  j["sample_rate"] = h.sample_rate;
  j["filter_length"] = h.filter_length;
  j["win_length"] = h.win_length;
  j["hop_length"] = h.hop_length;
  j["n_mels"] = h.n_mels;
  j["symbols"] = h.symbols;
  j["speakers"] = h.speakers;
  j["energy_min"] = h.energy_min;
  j["energy_max"] = h.energy_max;
  json stats = json::object();
  for (const auto& [id, s] : h.pitch_stats)
    stats[id] = {{"mean_f0", s.mean_f0}, {"std_f0", s.std_f0}};
  j["pitch_stats"] = stats;
  j["splits"] = h.splits;
  return j;
}

ManifestHeader header_from_json(const json& j) {
  ManifestHeader h;
  if (j.value("type", "") != "styler-manifest")
    throw DataError("manifest: first line is not a styler-manifest header");
  h.sample_rate = j.value("sample_rate", h.sample_rate);
  h.filter_length = j.value("filter_length", h.filter_length);
  h.win_length = j.value("win_length", h.win_length);
  h.hop_length = j.value("hop_length", h.hop_length);
  h.n_mels = j.value("n_mels", h.n_mels);
  h.symbols = j.value("symbols", h.symbols);
  h.speakers = j.value("speakers", h.speakers);
  h.energy_min = j.value("energy_min", h.energy_min);
  h.energy_max = j.value("energy_max", h.energy_max);
  if (j.contains("pitch_stats"))
    for (auto it = j["pitch_stats"].begin(); it != j["pitch_stats"].end(); ++it)
      h.pitch_stats[it.key()] = {it.value().value("mean_f0", 0.0),
                                 it.value().value("std_f0", 0.0)};
  if (j.contains("splits"))
    h.splits = j["splits"].get<std::map<std::string, std::vector<std::string>>>();
  return h;
}

json entry_to_json(const ManifestEntry& e) {
  json j;
  j["utt_id"] = e.utt_id;
  j["speaker"] = e.speaker_id;
  j["text"] = e.text;
  j["audio"] = e.audio_path;
  j["phones"] = e.phones;
  j["phone_ids"] = e.phone_ids;
  j["durations"] = e.durations;
  j["n_frames"] = e.n_frames;
  j["clean_features"] = e.clean_features;
  j["aug_features"] = e.aug_features;
  j["aug_snr_db"] = e.aug_snr_db;
  return j;
}

ManifestEntry entry_from_json(const json& j) {
  ManifestEntry e;
  e.utt_id = j.at("utt_id").get<std::string>();
  e.speaker_id = j.at("speaker").get<std::string>();
  e.text = j.value("text", "");
  e.audio_path = j.value("audio", "");
  e.phones = j.at("phones").get<std::vector<std::string>>();
  e.phone_ids = j.at("phone_ids").get<std::vector<int64_t>>();
  e.durations = j.at("durations").get<std::vector<int64_t>>();
  e.n_frames = j.at("n_frames").get<int64_t>();
  e.clean_features = j.at("clean_features").get<std::string>();
  e.aug_features = j.value("aug_features", "");
  e.aug_snr_db = j.value("aug_snr_db", 0.0);
  return e;
}

}  // namespace

Manifest Manifest::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("manifest: cannot open " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  bool first = true;
  int64_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("manifest: bad json on line " + std::to_string(line_no) + ": " +
                      e.what());
    }
    try {
      if (first) {
        m.header = header_from_json(j);
        first = false;
      } else {
        m.entries.push_back(entry_from_json(j));
      }
    } catch (const json::exception& e) {
      throw DataError("manifest: bad record on line " + std::to_string(line_no) + ": " +
                      e.what());
    }
  }
  if (first) throw DataError("manifest: empty file " + path.string());
  return m;
}

void Manifest::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw DataError("manifest: cannot open for writing " + path.string());
  os << header_to_json(header).dump() << "\n";
  for (const auto& e : entries) os << entry_to_json(e).dump() << "\n";
  if (!os) throw DataError("manifest: write failed " + path.string());
}

// --- preprocessing -----------------------------------------------------------

namespace {

struct UttWork {
  bool ok = false;
  std::string reject_reason;
  std::string utt_id, speaker, text, wav_path;
  std::vector<std::string> phones;
  std::vector<int64_t> durations;
  dsp::MelSpectrogram clean_mel, aug_mel;
  dsp::PitchContour clean_pitch, aug_pitch;
  std::vector<float> clean_energy, aug_energy;
  bool has_aug = false;
  double aug_snr_db = 0.0;
};

Tensor vec_tensor(const std::vector<float>& v) {
  return Tensor::from({static_cast<int64_t>(v.size())}, v);
}

void write_bundle(const std::filesystem::path& path, const dsp::MelSpectrogram& mel,
                  const dsp::PitchContour& pitch, const std::vector<float>& energy) {
  std::vector<float> voiced(pitch.voiced.size());
  for (size_t i = 0; i < voiced.size(); ++i) voiced[i] = pitch.voiced[i] ? 1.0f : 0.0f;
  styf::write_file(path, {{"mel", mel.frames},
                          {"f0", vec_tensor(pitch.f0)},
                          {"voiced", vec_tensor(voiced)},
                          {"energy", vec_tensor(energy)}});
}

void process_utterance(const std::filesystem::path& anno_path,
                       const PreprocessOptions& opts,
                       const std::vector<dsp::Waveform>& noise_bank, int64_t idx,
                       UttWork& w) {
  namespace fs = std::filesystem;
  w.utt_id = anno_path.stem().string();
  try {
    std::ifstream is(anno_path);
    json j;
    is >> j;
    w.speaker = j.at("speaker").get<std::string>();
    w.text = j.value("text", "");
    w.phones = j.at("phones").get<std::vector<std::string>>();
    w.durations = j.at("durations").get<std::vector<int64_t>>();
    const fs::path wav_path = opts.corpus_dir / (w.utt_id + ".wav");
    w.wav_path = wav_path.string();
    if (w.phones.empty() || w.phones.size() != w.durations.size()) {
      w.reject_reason = "phone/duration count mismatch";
      return;
    }
    dsp::Waveform wav = dsp::resample(dsp::read_wav(wav_path), opts.features.sample_rate);
    dsp::extract_mel_and_energy(wav, opts.features, &w.clean_mel, &w.clean_energy);
    w.clean_pitch = dsp::extract_pitch(wav, opts.features);
    int64_t dur_sum = 0;
    for (int64_t d : w.durations) {
      if (d < 0) {
        w.reject_reason = "negative duration";
        return;
      }
      dur_sum += d;
    }
    if (dur_sum != w.clean_mel.frames.rows()) {
      w.reject_reason = "duration sum " + std::to_string(dur_sum) +
                        " does not match frame count " +
                        std::to_string(w.clean_mel.frames.rows());
      return;
    }
    if (opts.augment) {
      Rng rng = Rng::stream(opts.seed, {0x617567ULL, static_cast<uint64_t>(idx)});
      const auto& noise = noise_bank[static_cast<size_t>(
          rng.uniform_int(0, static_cast<int64_t>(noise_bank.size()) - 1))];
      dsp::Waveform segment;
      segment.sample_rate = noise.sample_rate;
      // A silent noise window is re-drawn at a different offset.
      for (int attempt = 0; attempt < 8; ++attempt) {
        const int64_t off =
            rng.uniform_int(0, static_cast<int64_t>(noise.samples.size()) - 1);
        segment.samples.resize(wav.samples.size());
        double power = 0.0;
        for (size_t k = 0; k < wav.samples.size(); ++k) {
          segment.samples[k] =
              noise.samples[(static_cast<size_t>(off) + k) % noise.samples.size()];
          power += static_cast<double>(segment.samples[k]) * segment.samples[k];
        }
        if (power > 0.0) break;
        segment.samples.clear();
      }
      if (segment.samples.empty()) {
        w.reject_reason = "noise bank segment is silent";
        return;
      }
      w.aug_snr_db = rng.uniform(opts.snr_min, opts.snr_max);
      const dsp::Waveform mixed =
          dsp::mix_at_snr(wav, segment, static_cast<float>(w.aug_snr_db));
      dsp::extract_mel_and_energy(mixed, opts.features, &w.aug_mel, &w.aug_energy);
      w.aug_pitch = dsp::extract_pitch(mixed, opts.features);
      w.has_aug = true;
    }
    w.ok = true;
  } catch (const std::exception& e) {
    w.ok = false;
    w.reject_reason = e.what();
  }
}

}  // namespace

PreprocessSummary preprocess(const PreprocessOptions& opts) {
  namespace fs = std::filesystem;
  opts.features.validate();
  if (!fs::is_directory(opts.corpus_dir))
    throw DataError("preprocess: corpus directory not found: " + opts.corpus_dir.string());

  // Annotation files drive the utterance list.
  std::vector<fs::path> annos;
  for (const auto& ent : fs::directory_iterator(opts.corpus_dir)) {
    if (!ent.is_regular_file()) continue;
    const fs::path p = ent.path();
    if (p.extension() == ".json" && p.stem() != "splits") annos.push_back(p);
  }
  std::sort(annos.begin(), annos.end());
  if (annos.empty())
    throw DataError("preprocess: no utterance annotations (*.json) in corpus");

  std::map<std::string, std::vector<std::string>> splits;
  const fs::path splits_path = opts.corpus_dir / "splits.json";
  if (fs::exists(splits_path)) {
    std::ifstream is(splits_path);
    json j;
    try {
      is >> j;
      splits = j.get<std::map<std::string, std::vector<std::string>>>();
    } catch (const json::exception& e) {
      throw DataError(std::string("preprocess: bad splits.json: ") + e.what());
    }
  }

  std::vector<dsp::Waveform> noise_bank;
  if (opts.augment) {
    if (!fs::is_directory(opts.noise_dir))
      throw ConfigError("preprocess: --augment requires a noise directory, got: " +
                        opts.noise_dir.string());
    std::vector<fs::path> noise_files;
    for (const auto& ent : fs::directory_iterator(opts.noise_dir))
      if (ent.is_regular_file() && ent.path().extension() == ".wav")
        noise_files.push_back(ent.path());
    std::sort(noise_files.begin(), noise_files.end());
    if (noise_files.empty())
      throw ConfigError("preprocess: noise directory holds no .wav files");
    for (const auto& p : noise_files)
      noise_bank.push_back(dsp::resample(dsp::read_wav(p), opts.features.sample_rate));
  }

  fs::create_directories(opts.out_dir / "features");
  const fs::path manifest_path = opts.out_dir / "manifest.jsonl";
  if (fs::exists(manifest_path) && !opts.force)
    throw ConfigError("preprocess: output manifest exists, pass --force to overwrite: " +
                      manifest_path.string());

  const int64_t n = static_cast<int64_t>(annos.size());
  std::vector<UttWork> work(static_cast<size_t>(n));

#pragma omp parallel for schedule(dynamic)
  for (int64_t i = 0; i < n; ++i)
    process_utterance(annos[static_cast<size_t>(i)], opts, noise_bank, i,
                      work[static_cast<size_t>(i)]);

  PreprocessSummary summary;
  Manifest manifest;
  manifest.header.sample_rate = opts.features.sample_rate;
  manifest.header.filter_length = opts.features.filter_length;
  manifest.header.win_length = opts.features.win_length;
  manifest.header.hop_length = opts.features.hop_length;
  manifest.header.n_mels = opts.features.n_mels;
  manifest.header.splits = splits;

  std::set<std::string> symbol_set, speaker_set;
  for (const UttWork& w : work) {
    if (!w.ok) {
      summary.rejects.emplace_back(w.utt_id, w.reject_reason);
      continue;
    }
    for (const auto& p : w.phones) symbol_set.insert(p);
    speaker_set.insert(w.speaker);
  }
  manifest.header.symbols.assign(symbol_set.begin(), symbol_set.end());
  manifest.header.speakers.assign(speaker_set.begin(), speaker_set.end());
  summary.n_rejected = static_cast<int64_t>(summary.rejects.size());

  std::map<std::string, int64_t> symbol_id;
  for (size_t i = 0; i < manifest.header.symbols.size(); ++i)
    symbol_id[manifest.header.symbols[i]] = static_cast<int64_t>(i);

  // Corpus statistics over the clean train split.
  const std::vector<std::string> train_speakers =
      [&] {
        ManifestHeader tmp;
        tmp.speakers = manifest.header.speakers;
        tmp.splits = splits;
        return tmp.split_speakers("train");
      }();
  const std::set<std::string> train_set(train_speakers.begin(), train_speakers.end());

  for (const std::string& spk : manifest.header.speakers) {
    if (!train_set.count(spk)) continue;
    std::vector<const dsp::PitchContour*> contours;
    for (const UttWork& w : work)
      if (w.ok && w.speaker == spk) contours.push_back(&w.clean_pitch);
    try {
      const auto stats = dsp::fit_pitch_stats(spk, contours);
      manifest.header.pitch_stats[spk] = {stats.mean_f0, stats.std_f0};
    } catch (const ConfigError&) {
      manifest.header.pitch_stats[spk] = {200.0, 50.0};
      summary.warnings.push_back("speaker " + spk +
                                 " has too few voiced frames; default pitch stats used");
    }
  }

  double e_min = 0.0, e_max = 0.0;
  bool first_energy = true;
  for (const UttWork& w : work) {
    if (!w.ok || !train_set.count(w.speaker)) continue;
    for (float v : w.clean_energy) {
      if (first_energy) {
        e_min = e_max = v;
        first_energy = false;
      } else {
        e_min = std::min(e_min, static_cast<double>(v));
        e_max = std::max(e_max, static_cast<double>(v));
      }
    }
  }
  if (first_energy) throw DataError("preprocess: no accepted train utterances");
  if (e_max - e_min < 1e-6) {
    e_max = e_min + 1.0;
    summary.warnings.push_back("degenerate energy range widened");
  }
  manifest.header.energy_min = e_min;
  manifest.header.energy_max = e_max;

  for (const UttWork& w : work) {
    if (!w.ok) continue;
    ManifestEntry e;
    e.utt_id = w.utt_id;
    e.speaker_id = w.speaker;
    e.text = w.text;
    e.audio_path = w.wav_path;
    e.phones = w.phones;
    for (const auto& p : w.phones) e.phone_ids.push_back(symbol_id.at(p));
    e.durations = w.durations;
    e.n_frames = w.clean_mel.frames.rows();
    e.clean_features = "features/" + w.utt_id + ".clean.styf";
    write_bundle(opts.out_dir / e.clean_features, w.clean_mel, w.clean_pitch,
                 w.clean_energy);
    ++summary.n_bundles;
    if (w.has_aug) {
      e.aug_features = "features/" + w.utt_id + ".aug.styf";
      e.aug_snr_db = w.aug_snr_db;
      write_bundle(opts.out_dir / e.aug_features, w.aug_mel, w.aug_pitch, w.aug_energy);
      ++summary.n_bundles;
    }
    manifest.entries.push_back(std::move(e));
    ++summary.n_entries;
  }

  manifest.save(manifest_path);
  summary.manifest_path = manifest_path;
  return summary;
}

// --- dataset ------------------------------------------------------------------

VarianceTargets compute_variance_targets(const ManifestEntry& entry,
                                         const std::vector<float>& pitch_norm,
                                         const std::vector<float>& energy_scaled,
                                         const std::vector<float>* pitch_hz_scaled) {
  const int64_t t = entry.n_frames;
  if (static_cast<int64_t>(pitch_norm.size()) != t ||
      static_cast<int64_t>(energy_scaled.size()) != t)
    throw DataError("variance targets: feature length does not match n_frames for " +
                    entry.utt_id);
  if (pitch_hz_scaled && static_cast<int64_t>(pitch_hz_scaled->size()) != t)
    throw DataError("variance targets: raw pitch length mismatch for " + entry.utt_id);
  int64_t sum = 0;
  for (int64_t d : entry.durations) sum += d;
  if (sum != t)
    throw DataError("variance targets: duration sum does not match frames for " +
                    entry.utt_id);
  VarianceTargets v;
  v.duration = entry.durations;
  int64_t cursor = 0;
  for (int64_t d : entry.durations) {
    v.log_duration.push_back(static_cast<float>(std::log(static_cast<double>(d) + 1.0)));
    if (d == 0) {
      v.pitch.push_back(0.0f);
      v.energy.push_back(0.0f);
      v.pitch_hz.push_back(0.0f);
      continue;
    }
    double ps = 0.0, es = 0.0, hz = 0.0;
    for (int64_t k = cursor; k < cursor + d; ++k) {
      ps += pitch_norm[static_cast<size_t>(k)];
      es += energy_scaled[static_cast<size_t>(k)];
      if (pitch_hz_scaled) hz += (*pitch_hz_scaled)[static_cast<size_t>(k)];
    }
    v.pitch.push_back(static_cast<float>(ps / d));
    v.energy.push_back(static_cast<float>(es / d));
    v.pitch_hz.push_back(pitch_hz_scaled ? static_cast<float>(hz / d) : 0.0f);
    cursor += d;
  }
  return v;
}

namespace {

dsp::PitchContour contour_from_bundle(const std::vector<styf::NamedTensor>& ts) {
  const Tensor& f0 = styf::find(ts, "f0");
  const Tensor& voiced = styf::find(ts, "voiced");
  dsp::PitchContour c;
  c.f0.assign(f0.data(), f0.data() + f0.numel());
  c.voiced.resize(static_cast<size_t>(voiced.numel()));
  for (int64_t i = 0; i < voiced.numel(); ++i) c.voiced[static_cast<size_t>(i)] = voiced[i] > 0.5f;
  return c;
}

dsp::SpeakerPitchStats stats_for(const ManifestHeader& h, const std::string& speaker,
                                 const dsp::PitchContour& contour) {
  dsp::SpeakerPitchStats s;
  auto it = h.pitch_stats.find(speaker);
  if (it != h.pitch_stats.end()) {
    s.speaker_id = speaker;
    s.mean_f0 = static_cast<float>(it->second.mean_f0);
    s.std_f0 = static_cast<float>(it->second.std_f0);
    return s;
  }
  // Unseen speaker: normalize against the utterance's own voiced frames.
  try {
    return dsp::fit_pitch_stats(speaker, {&contour});
  } catch (const ConfigError&) {
    s.speaker_id = speaker;
    s.mean_f0 = 200.0f;
    s.std_f0 = 50.0f;
    return s;
  }
}

model::EncoderFeatures features_from_bundle(const ManifestHeader& h,
                                            const std::string& speaker,
                                            const std::vector<styf::NamedTensor>& ts,
                                            std::vector<float>* pitch_norm_out,
                                            std::vector<float>* energy_scaled_out,
                                            dsp::PitchContour* contour_out = nullptr) {
  model::EncoderFeatures f;
  f.mel = styf::find(ts, "mel");
  const dsp::PitchContour contour = contour_from_bundle(ts);
  if (contour_out) *contour_out = contour;
  const Tensor& energy = styf::find(ts, "energy");
  std::vector<float> energy_vec(energy.data(), energy.data() + energy.numel());
  const auto stats = stats_for(h, speaker, contour);
  const std::vector<float> pitch_norm = dsp::normalize_pitch(contour, stats);
  const std::vector<float> energy_scaled = dsp::scale_energy(
      energy_vec, static_cast<float>(h.energy_min), static_cast<float>(h.energy_max));
  f.pitch_bins = dsp::quantize(pitch_norm).bins;
  f.energy_bins = dsp::quantize(energy_scaled).bins;
  if (pitch_norm_out) *pitch_norm_out = pitch_norm;
  if (energy_scaled_out) *energy_scaled_out = energy_scaled;
  return f;
}

}  // namespace

Dataset::Dataset(const std::filesystem::path& manifest_path)
    : manifest_(Manifest::load(manifest_path)) {
  utterances_.reserve(manifest_.entries.size());
  for (const ManifestEntry& e : manifest_.entries) {
    Utterance u;
    u.entry = &e;
    const auto clean = styf::read_file(manifest_.base_dir / e.clean_features);
    dsp::PitchContour contour;
    u.clean_features = features_from_bundle(manifest_.header, e.speaker_id, clean,
                                            &u.clean_pitch_norm, &u.clean_energy_scaled,
                                            &contour);
    u.clean_mel = u.clean_features.mel;
    if (u.clean_mel.rows() != e.n_frames)
      throw DataError("dataset: bundle frames do not match manifest for " + e.utt_id);
    if (!e.aug_features.empty()) {
      const auto aug = styf::read_file(manifest_.base_dir / e.aug_features);
      u.aug_features =
          features_from_bundle(manifest_.header, e.speaker_id, aug, nullptr, nullptr);
      u.has_aug = true;
    }
    // Raw-Hz alternative target: interpolated contour mapped onto [0, 1]
    // over the F0 search band.
    const dsp::FeatureConfig fc;  // band defaults
    std::vector<float> hz_scaled = dsp::interpolate_unvoiced(contour);
    for (float& v : hz_scaled)
      v = std::clamp((v - fc.pitch_fmin) / (fc.pitch_fmax - fc.pitch_fmin), 0.0f, 1.0f);
    u.targets = compute_variance_targets(e, u.clean_pitch_norm, u.clean_energy_scaled,
                                         &hz_scaled);
    utterances_.push_back(std::move(u));
  }
}

std::vector<int64_t> Dataset::split_indices(const std::string& split) const {
  const auto speakers = manifest_.header.split_speakers(split);
  const std::set<std::string> wanted(speakers.begin(), speakers.end());
  std::vector<int64_t> out;
  for (size_t i = 0; i < utterances_.size(); ++i)
    if (wanted.count(utterances_[i].entry->speaker_id))
      out.push_back(static_cast<int64_t>(i));
  return out;
}

// --- batching -------------------------------------------------------------------

int64_t Batch::item_phone_count(int64_t i) const {
  int64_t n = 0;
  for (int64_t j = 0; j < max_phones; ++j)
    if (phone_mask[static_cast<size_t>(i * max_phones + j)]) ++n;
  return n;
}

int64_t Batch::item_frame_count(int64_t i) const {
  int64_t n = 0;
  for (int64_t j = 0; j < max_frames; ++j)
    if (frame_mask[static_cast<size_t>(i * max_frames + j)]) ++n;
  return n;
}

std::vector<int64_t> Batch::item_phone_ids(int64_t i) const {
  const int64_t n = item_phone_count(i);
  return std::vector<int64_t>(phones.begin() + i * max_phones,
                              phones.begin() + i * max_phones + n);
}

std::vector<int64_t> Batch::item_durations(int64_t i) const {
  const int64_t n = item_phone_count(i);
  return std::vector<int64_t>(durations.begin() + i * max_phones,
                              durations.begin() + i * max_phones + n);
}

Tensor Batch::item_enc_mel(int64_t i) const {
  const int64_t t = item_frame_count(i);
  Tensor m({t, n_mels});
  std::copy(enc_mel.begin() + i * max_frames * n_mels,
            enc_mel.begin() + (i * max_frames + t) * n_mels, m.data());
  return m;
}

Tensor Batch::item_target_mel(int64_t i) const {
  const int64_t t = item_frame_count(i);
  Tensor m({t, n_mels});
  std::copy(target_mel.begin() + i * max_frames * n_mels,
            target_mel.begin() + (i * max_frames + t) * n_mels, m.data());
  return m;
}

std::vector<int> Batch::item_pitch_bins(int64_t i) const {
  const int64_t t = item_frame_count(i);
  return std::vector<int>(enc_pitch_bins.begin() + i * max_frames,
                          enc_pitch_bins.begin() + i * max_frames + t);
}

std::vector<int> Batch::item_energy_bins(int64_t i) const {
  const int64_t t = item_frame_count(i);
  return std::vector<int>(enc_energy_bins.begin() + i * max_frames,
                          enc_energy_bins.begin() + i * max_frames + t);
}

std::vector<float> Batch::item_log_dur_target(int64_t i) const {
  const int64_t n = item_phone_count(i);
  return std::vector<float>(log_dur_target.begin() + i * max_phones,
                            log_dur_target.begin() + i * max_phones + n);
}

std::vector<float> Batch::item_pitch_target(int64_t i) const {
  const int64_t n = item_phone_count(i);
  return std::vector<float>(pitch_target.begin() + i * max_phones,
                            pitch_target.begin() + i * max_phones + n);
}

std::vector<float> Batch::item_pitch_hz_target(int64_t i) const {
  const int64_t n = item_phone_count(i);
  return std::vector<float>(pitch_hz_target.begin() + i * max_phones,
                            pitch_hz_target.begin() + i * max_phones + n);
}

std::vector<float> Batch::item_energy_target(int64_t i) const {
  const int64_t n = item_phone_count(i);
  return std::vector<float>(energy_target.begin() + i * max_phones,
                            energy_target.begin() + i * max_phones + n);
}

Batch make_batch(const Dataset& data, const std::vector<int64_t>& indices,
                 uint64_t seed, int64_t step, float augment_probability) {
  if (indices.empty()) throw InvalidInput("make_batch: empty index list");
  Batch b;
  b.size = static_cast<int64_t>(indices.size());
  b.n_mels = data.manifest().header.n_mels;
  b.utt_index = indices;
  for (int64_t idx : indices) {
    const Utterance& u = data.utterances().at(static_cast<size_t>(idx));
    b.max_phones = std::max(b.max_phones,
                            static_cast<int64_t>(u.entry->phone_ids.size()));
    b.max_frames = std::max(b.max_frames, u.entry->n_frames);
  }
  const int64_t bn = b.size * b.max_phones;
  const int64_t bt = b.size * b.max_frames;
  b.labels.assign(static_cast<size_t>(b.size), 0);
  b.speaker_ids.resize(static_cast<size_t>(b.size));
  b.phones.assign(static_cast<size_t>(bn), 0);
  b.phone_mask.assign(static_cast<size_t>(bn), 0);
  b.durations.assign(static_cast<size_t>(bn), 0);
  b.log_dur_target.assign(static_cast<size_t>(bn), 0.0f);
  b.pitch_target.assign(static_cast<size_t>(bn), 0.0f);
  b.pitch_hz_target.assign(static_cast<size_t>(bn), 0.0f);
  b.energy_target.assign(static_cast<size_t>(bn), 0.0f);
  b.enc_mel.assign(static_cast<size_t>(bt * b.n_mels), 0.0f);
  b.target_mel.assign(static_cast<size_t>(bt * b.n_mels), 0.0f);
  b.enc_pitch_bins.assign(static_cast<size_t>(bt), 0);
  b.enc_energy_bins.assign(static_cast<size_t>(bt), 0);
  b.frame_mask.assign(static_cast<size_t>(bt), 0);

  for (int64_t i = 0; i < b.size; ++i) {
    const Utterance& u = data.utterances().at(static_cast<size_t>(indices[i]));
    Rng rng = Rng::stream(seed, {0x6c6162656cULL, static_cast<uint64_t>(step),
                                 static_cast<uint64_t>(i)});
    const bool augmented = u.has_aug && rng.uniform() < augment_probability;
    b.labels[static_cast<size_t>(i)] = augmented ? 1 : 0;
    b.speaker_ids[static_cast<size_t>(i)] = u.entry->speaker_id;
    const model::EncoderFeatures& enc = augmented ? u.aug_features : u.clean_features;

    const int64_t n = static_cast<int64_t>(u.entry->phone_ids.size());
    for (int64_t j = 0; j < n; ++j) {
      b.phones[static_cast<size_t>(i * b.max_phones + j)] = u.entry->phone_ids[static_cast<size_t>(j)];
      b.phone_mask[static_cast<size_t>(i * b.max_phones + j)] = 1;
      b.durations[static_cast<size_t>(i * b.max_phones + j)] = u.targets.duration[static_cast<size_t>(j)];
      b.log_dur_target[static_cast<size_t>(i * b.max_phones + j)] = u.targets.log_duration[static_cast<size_t>(j)];
      b.pitch_target[static_cast<size_t>(i * b.max_phones + j)] = u.targets.pitch[static_cast<size_t>(j)];
      b.pitch_hz_target[static_cast<size_t>(i * b.max_phones + j)] = u.targets.pitch_hz[static_cast<size_t>(j)];
      b.energy_target[static_cast<size_t>(i * b.max_phones + j)] = u.targets.energy[static_cast<size_t>(j)];
    }
    const int64_t t = u.entry->n_frames;
    for (int64_t k = 0; k < t; ++k) {
      b.frame_mask[static_cast<size_t>(i * b.max_frames + k)] = 1;
      b.enc_pitch_bins[static_cast<size_t>(i * b.max_frames + k)] = enc.pitch_bins[static_cast<size_t>(k)];
      b.enc_energy_bins[static_cast<size_t>(i * b.max_frames + k)] = enc.energy_bins[static_cast<size_t>(k)];
      for (int64_t c = 0; c < b.n_mels; ++c) {
        b.enc_mel[static_cast<size_t>((i * b.max_frames + k) * b.n_mels + c)] = enc.mel(k, c);
        b.target_mel[static_cast<size_t>((i * b.max_frames + k) * b.n_mels + c)] = u.clean_mel(k, c);
      }
    }
  }
  return b;
}

// --- training --------------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (warmup_steps < 1) throw ConfigError("train config: warmup_steps must be >= 1");
  if (augment_probability < 0.0f || augment_probability > 1.0f)
    throw ConfigError("train config: augment_probability must be in [0, 1]");
  if (grl_warmup_steps < 0) throw ConfigError("train config: grl_warmup_steps must be >= 0");
  if (lr_dim_scale <= 0.0) throw ConfigError("train config: lr_dim_scale must be positive");
}

NormStats NormStats::from_header(const ManifestHeader& h) {
  NormStats s;
  s.sample_rate = h.sample_rate;
  s.filter_length = h.filter_length;
  s.win_length = h.win_length;
  s.hop_length = h.hop_length;
  s.energy_min = h.energy_min;
  s.energy_max = h.energy_max;
  s.pitch_stats = h.pitch_stats;
  return s;
}

dsp::FeatureConfig NormStats::feature_config(int n_mels) const {
  dsp::FeatureConfig fc;
  fc.sample_rate = sample_rate;
  fc.filter_length = filter_length;
  fc.win_length = win_length;
  fc.hop_length = hop_length;
  fc.n_mels = n_mels;
  return fc;
}

Trainer::Trainer(model::StylerModel& model, TrainConfig cfg, const Dataset& data)
    : model_(model), cfg_(cfg), data_(data) {
  cfg_.validate();
  adam_ = nn::Adam(model_.store().parameters(), cfg_.beta1, cfg_.beta2, cfg_.adam_eps);
  schedule_.dim_scale = cfg_.lr_dim_scale;
  schedule_.warmup = cfg_.warmup_steps;
  train_indices_ = data_.split_indices("train");
  if (train_indices_.empty()) throw ConfigError("trainer: no train-split utterances");
}

double Trainer::learning_rate(int64_t step) const { return schedule_.lr(step); }

float Trainer::effective_grl_lambda(int64_t step) const {
  if (cfg_.grl_warmup_steps <= 0) return cfg_.grl_lambda;
  const double ramp = std::min(1.0, static_cast<double>(step) /
                                        static_cast<double>(cfg_.grl_warmup_steps));
  return static_cast<float>(cfg_.grl_lambda * ramp);
}

void Trainer::set_steps_done(int64_t s) {
  if (s < 0) throw InvalidInput("set_steps_done: negative step");
  step_ = s;
  adam_.set_steps_taken(s);
}

Batch Trainer::next_batch() const {
  const int64_t n = static_cast<int64_t>(train_indices_.size());
  std::vector<int64_t> chosen(static_cast<size_t>(cfg_.batch_size));
  int64_t cached_epoch = -1;
  std::vector<int64_t> perm;
  for (int64_t j = 0; j < cfg_.batch_size; ++j) {
    const int64_t global = step_ * cfg_.batch_size + j;
    const int64_t epoch = global / n;
    if (epoch != cached_epoch) {
      perm = train_indices_;
      Rng rng = Rng::stream(cfg_.seed, {0x65706f6368ULL, static_cast<uint64_t>(epoch)});
      for (int64_t k = static_cast<int64_t>(perm.size()) - 1; k > 0; --k)
        std::swap(perm[static_cast<size_t>(k)],
                  perm[static_cast<size_t>(rng.uniform_int(0, k))]);
      cached_epoch = epoch;
    }
    chosen[static_cast<size_t>(j)] = perm[static_cast<size_t>(global % n)];
  }
  return make_batch(data_, chosen, cfg_.seed, step_ + 1, cfg_.augment_probability);
}

Trainer::ItemGraph Trainer::forward_item(nn::Ctx& ctx, const Batch& batch, int64_t i,
                                         int64_t step) {
  const int64_t n = batch.item_phone_count(i);
  const std::vector<int64_t> phones = batch.item_phone_ids(i);
  const std::vector<int64_t> durations = batch.item_durations(i);
  const Tensor enc_mel = batch.item_enc_mel(i);
  const Tensor target_mel = batch.item_target_mel(i);
  // The pitch loss and teacher-forced embedding share one value domain.
  const std::vector<float> pitch_target =
      model_.config().pitch_target_domain == "raw_hz" ? batch.item_pitch_hz_target(i)
                                                      : batch.item_pitch_target(i);
  const std::vector<float> energy_target = batch.item_energy_target(i);
  const std::vector<float> log_dur_target = batch.item_log_dur_target(i);

  const ad::Var z_t = model_.encode_text(ctx, phones);
  const auto dur = model_.encode_audio_factor(ctx, model::Factor::Duration, enc_mel, n);
  const auto pit = model_.encode_audio_factor(ctx, model::Factor::Pitch,
                                              batch.item_pitch_bins(i), n);
  const auto ene = model_.encode_audio_factor(ctx, model::Factor::Energy,
                                              batch.item_energy_bins(i), n);
  model::SpeakerRef spk;
  spk.id = batch.speaker_ids[static_cast<size_t>(i)];
  const ad::Var z_s = model_.get_speaker_encoding(spk);

  ItemGraph g;
  g.duration = objectives::variance_loss(
      model_.predict_duration(ctx, dur.up, z_t),
      Tensor::from({n, 1}, log_dur_target));
  g.pitch = objectives::variance_loss(model_.predict_pitch(ctx, pit.down, z_t, z_s),
                                      Tensor::from({n, 1}, pitch_target));
  g.energy = objectives::variance_loss(model_.predict_energy(ctx, ene.up, z_t),
                                       Tensor::from({n, 1}, energy_target));

  // Teacher forcing: ground-truth clean values drive the decoder embeddings.
  const ad::Var summed = model_.assemble_decoder_input(
      z_t, model_.embed_variance(pitch_target, model::StylerModel::VarianceKind::Pitch),
      model_.embed_variance(energy_target, model::StylerModel::VarianceKind::Energy),
      z_s);
  g.mel_clean =
      objectives::mel_loss(model_.decode_clean(ctx, summed, durations), target_mel);

  ad::Var total = ad::add(ad::add(ad::add(g.mel_clean, g.duration), g.pitch), g.energy);
  if (cfg_.noise_modeling) {
    const auto noi = model_.encode_audio_factor(ctx, model::Factor::Noise, enc_mel, n);
    const float lambda = effective_grl_lambda(step);
    std::vector<ad::Var> logits;
    const std::map<model::Factor, ad::Var> taps = {
        {model::Factor::Duration, dur.up},
        {model::Factor::Pitch, pit.up},
        {model::Factor::Energy, ene.up}};
    for (model::Factor f : model_.dat_factors())
      logits.push_back(model_.classify_augmentation_grl(ctx, f, taps.at(f), lambda));
    g.aug = model::adversarial_loss(logits, batch.labels[static_cast<size_t>(i)]);
    // Noisy decoding reconstructs the encoder-side mel (the augmented one
    // when the item is augmented, otherwise the clean one).
    g.mel_noisy = objectives::mel_loss(
        model_.decode_noisy(ctx, summed, durations, noi.up), enc_mel);
    total = ad::add(total, ad::add(g.mel_noisy, g.aug));
  }
  g.total = total;
  return g;
}

objectives::LossBreakdown Trainer::train_step(const Batch& batch) {
  item_losses_.clear();
  const int64_t step = step_ + 1;
  double mel_clean = 0.0, duration = 0.0, pitch = 0.0, energy = 0.0, mel_noisy = 0.0,
         aug = 0.0;
  for (int64_t i = 0; i < batch.size; ++i) {
    Rng rng = Rng::stream(cfg_.seed, {0x7374657070ULL, static_cast<uint64_t>(step),
                                      static_cast<uint64_t>(i)});
    nn::Ctx ctx{true, &rng};
    ItemGraph g = forward_item(ctx, batch, i, step);
    ad::backward(ad::scale(g.total, 1.0f / static_cast<float>(batch.size)));
    const double i_mel = g.mel_clean->value[0];
    const double i_dur = g.duration->value[0];
    const double i_pit = g.pitch->value[0];
    const double i_ene = g.energy->value[0];
    const double i_noisy = g.mel_noisy ? g.mel_noisy->value[0] : 0.0;
    const double i_aug = g.aug ? g.aug->value[0] : 0.0;
    item_losses_.push_back(objectives::total_loss(i_mel, i_dur, i_pit, i_ene, i_noisy,
                                                  i_aug, cfg_.noise_modeling));
    mel_clean += i_mel;
    duration += i_dur;
    pitch += i_pit;
    energy += i_ene;
    mel_noisy += i_noisy;
    aug += i_aug;
  }
  const double inv = 1.0 / static_cast<double>(batch.size);
  const auto breakdown =
      objectives::total_loss(mel_clean * inv, duration * inv, pitch * inv, energy * inv,
                             mel_noisy * inv, aug * inv, cfg_.noise_modeling);
  adam_.step(learning_rate(step), cfg_.grad_clip);
  step_ = step;
  return breakdown;
}

objectives::LossBreakdown Trainer::step() { return train_step(next_batch()); }

// --- checkpoints ---------------------------------------------------------------------

namespace {

json stats_to_json(const NormStats& s) {
  json j;
  j["sample_rate"] = s.sample_rate;
  j["filter_length"] = s.filter_length;
  j["win_length"] = s.win_length;
  j["hop_length"] = s.hop_length;
  j["energy_min"] = s.energy_min;
  j["energy_max"] = s.energy_max;
  json ps = json::object();
  for (const auto& [id, st] : s.pitch_stats)
    ps[id] = {{"mean_f0", st.mean_f0}, {"std_f0", st.std_f0}};
  j["pitch_stats"] = ps;
  return j;
}

NormStats stats_from_json(const json& j) {
  NormStats s;
  s.sample_rate = j.value("sample_rate", s.sample_rate);
  s.filter_length = j.value("filter_length", s.filter_length);
  s.win_length = j.value("win_length", s.win_length);
  s.hop_length = j.value("hop_length", s.hop_length);
  s.energy_min = j.value("energy_min", s.energy_min);
  s.energy_max = j.value("energy_max", s.energy_max);
  if (j.contains("pitch_stats"))
    for (auto it = j["pitch_stats"].begin(); it != j["pitch_stats"].end(); ++it)
      s.pitch_stats[it.key()] = {it.value().value("mean_f0", 0.0),
                                 it.value().value("std_f0", 0.0)};
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const model::StylerModel& m,
                     const nn::Adam& adam, int64_t step, const NormStats& stats) {
  json header;
  header["format"] = "styler-checkpoint";
  header["version"] = 1;
  header["config"] = json::parse(m.config().to_json());
  header["stats"] = stats_to_json(stats);
  header["step"] = step;

  std::vector<styf::NamedTensor> tensors;
  const nn::ParamStore& store = m.store();
  for (const std::string& name : store.order())
    tensors.push_back({name, store.get(name)->value});
  const auto params = store.parameters();
  if (adam.size() != params.size())
    throw CheckpointError("optimizer does not cover the model parameters");
  for (size_t i = 0; i < params.size(); ++i) {
    tensors.push_back({"opt.m." + params[i]->name, adam.moment1(i)});
    tensors.push_back({"opt.v." + params[i]->name, adam.moment2(i)});
  }
  styf::write_checkpoint(path, header.dump(), tensors);
}

namespace {

CheckpointInfo info_from_header(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad header json: ") + e.what());
  }
  if (j.value("format", "") != "styler-checkpoint")
    throw CheckpointError("checkpoint: unexpected header format");
  CheckpointInfo info;
  info.config = model::ModelConfig::from_json(j.at("config").dump());
  info.stats = stats_from_json(j.value("stats", json::object()));
  info.step = j.value("step", 0);
  return info;
}

}  // namespace

CheckpointInfo peek_checkpoint(const std::filesystem::path& path) {
  const auto [header, tensors] = styf::read_checkpoint(path);
  (void)tensors;
  return info_from_header(header);
}

CheckpointInfo load_checkpoint(const std::filesystem::path& path,
                               model::StylerModel& m, nn::Adam* adam) {
  auto [header, tensors] = styf::read_checkpoint(path);
  const CheckpointInfo info = info_from_header(header);

  std::map<std::string, Tensor*> archive;
  for (auto& nt : tensors) archive[nt.name] = &nt.tensor;

  nn::ParamStore& store = m.store();
  size_t expected = store.order().size();
  for (const std::string& name : store.order()) {
    auto it = archive.find(name);
    if (it == archive.end())
      throw CheckpointError("checkpoint missing tensor: " + name);
    const ad::Var& var = store.get(name);
    if (!it->second->same_shape(var->value))
      throw CheckpointError("checkpoint shape mismatch for tensor: " + name +
                            " (expected " + var->value.shape_string() + ", found " +
                            it->second->shape_string() + ")");
    var->value = *it->second;
  }
  if (adam) {
    const auto params = store.parameters();
    for (size_t i = 0; i < params.size(); ++i) {
      const std::string mname = "opt.m." + params[i]->name;
      const std::string vname = "opt.v." + params[i]->name;
      auto mit = archive.find(mname);
      auto vit = archive.find(vname);
      if (mit == archive.end() || vit == archive.end())
        throw CheckpointError("checkpoint missing optimizer state for: " +
                              params[i]->name);
      adam->restore(i, *mit->second, *vit->second);
    }
    adam->set_steps_taken(info.step);
    expected += 2 * params.size();
  } else {
    for (const auto& nt : tensors)
      if (nt.name.rfind("opt.", 0) == 0) ++expected;
  }
  if (archive.size() != expected)
    throw CheckpointError("checkpoint holds unexpected tensors (found " +
                          std::to_string(archive.size()) + ", expected " +
                          std::to_string(expected) + ")");
  return info;
}

// --- synthesis glue -------------------------------------------------------------------

Synthesizer::Synthesizer(const std::filesystem::path& checkpoint_path) {
  const CheckpointInfo info = peek_checkpoint(checkpoint_path);
  model_ = std::make_unique<model::StylerModel>(info.config, 0);
  load_checkpoint(checkpoint_path, *model_, nullptr);
  stats_ = info.stats;
}

std::vector<int64_t> Synthesizer::phones_to_ids(
    const std::vector<std::string>& symbols) const {
  const auto& table = model_->config().symbols;
  std::map<std::string, int64_t> index;
  for (size_t i = 0; i < table.size(); ++i) index[table[i]] = static_cast<int64_t>(i);
  std::vector<int64_t> ids;
  ids.reserve(symbols.size());
  for (const auto& s : symbols) {
    auto it = index.find(s);
    if (it == index.end()) throw InvalidInput("unknown phoneme symbol: " + s);
    ids.push_back(it->second);
  }
  if (ids.empty()) throw InvalidInput("empty phoneme sequence");
  return ids;
}

model::EncoderFeatures Synthesizer::features_from_audio(
    const std::filesystem::path& wav_path, const std::string& speaker_hint) {
  const std::string key = wav_path.string() + "|" + speaker_hint;
  auto cached = feature_cache_.find(key);
  if (cached != feature_cache_.end()) return cached->second;

  const dsp::FeatureConfig fc =
      stats_.feature_config(static_cast<int>(model_->config().n_mels));
  dsp::Waveform wav = dsp::resample(dsp::read_wav(wav_path), fc.sample_rate);
  model::EncoderFeatures f;
  std::vector<float> energy;
  dsp::MelSpectrogram mel;
  dsp::extract_mel_and_energy(wav, fc, &mel, &energy);
  f.mel = mel.frames;
  const dsp::PitchContour contour = dsp::extract_pitch(wav, fc);

  dsp::SpeakerPitchStats sps;
  auto it = stats_.pitch_stats.find(speaker_hint);
  if (!speaker_hint.empty() && it != stats_.pitch_stats.end()) {
    sps.speaker_id = speaker_hint;
    sps.mean_f0 = static_cast<float>(it->second.mean_f0);
    sps.std_f0 = static_cast<float>(it->second.std_f0);
  } else {
    try {
      sps = dsp::fit_pitch_stats("reference", {&contour});
    } catch (const ConfigError&) {
      sps = {"reference", 200.0f, 50.0f};
    }
  }
  f.pitch_bins = dsp::quantize(dsp::normalize_pitch(contour, sps)).bins;
  f.energy_bins = dsp::quantize(dsp::scale_energy(energy,
                                                  static_cast<float>(stats_.energy_min),
                                                  static_cast<float>(stats_.energy_max)))
                      .bins;
  feature_cache_[key] = f;
  return f;
}

model::StylerModel::SynthesisOutput Synthesizer::synthesize(const Request& req) {
  model::StylerModel::SynthesisInputs in;
  in.phones = phones_to_ids(req.phone_symbols);
  in.masks = req.masks;
  in.render_noise = req.render_noise;
  for (model::Factor f : model::audio_factors()) {
    if (in.masks.count(f)) continue;
    if (f == model::Factor::Noise && !req.render_noise) continue;
    auto it = req.refs.find(f);
    if (it == req.refs.end())
      throw InvalidInput(std::string("unmasked factor '") + model::factor_name(f) +
                         "' requires a reference audio");
    in.refs[f] = features_from_audio(it->second, req.speaker_id);
  }
  if (!req.speaker_vector_file.empty()) {
    const auto tensors = styf::read_file(req.speaker_vector_file);
    in.speaker.vector = styf::find(tensors, "embedding");
  } else if (!req.speaker_id.empty()) {
    in.speaker.id = req.speaker_id;
  }
  return model_->synthesize(in);
}

}  // namespace pipeline
}  // namespace styler
