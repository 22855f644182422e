// styler/pipeline.hpp

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

#ifndef STYLER_PIPELINE_HPP_
#define STYLER_PIPELINE_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "styler/dsp.hpp"
#include "styler/model.hpp"
#include "styler/objectives.hpp"

namespace styler {
namespace pipeline {

// --- manifest -------------------------------------------------------------

struct ManifestEntry {
  std::string utt_id;
  std::string speaker_id;
  std::string text;
  std::string audio_path;
  std::vector<std::string> phones;
  std::vector<int64_t> phone_ids;
  std::vector<int64_t> durations;  // frames per phone, sums to n_frames
  int64_t n_frames = 0;
  std::string clean_features;  // bundle path relative to the manifest dir
  std::string aug_features;    // empty when not augmented
  double aug_snr_db = 0.0;

  bool operator==(const ManifestEntry&) const = default;
};

struct SpeakerStats {
  double mean_f0 = 0.0;
  double std_f0 = 0.0;
};

// First JSONL line; corpus-level statistics are fit on the clean train split
// and persisted here.
struct ManifestHeader {
  int sample_rate = 22050;
  int filter_length = 1024;
  int win_length = 1024;
  int hop_length = 256;
  int n_mels = 80;
  std::vector<std::string> symbols;
  std::vector<std::string> speakers;
  double energy_min = 0.0;
  double energy_max = 1.0;
  std::map<std::string, SpeakerStats> pitch_stats;
  std::map<std::string, std::vector<std::string>> splits;  // split -> speaker ids

  dsp::FeatureConfig feature_config() const;
  std::vector<std::string> split_speakers(const std::string& split) const;
};

struct Manifest {
  ManifestHeader header;
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;  // set on load; bundle paths resolve here

  static Manifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

// --- preprocessing -----------------------------------------------------------

struct PreprocessOptions {
  std::filesystem::path corpus_dir;
  std::filesystem::path noise_dir;
  std::filesystem::path out_dir;
  bool augment = true;
  bool force = false;
  uint64_t seed = 0;
  float snr_min = 5.0f;
  float snr_max = 25.0f;
  dsp::FeatureConfig features;
};

struct PreprocessSummary {
  int64_t n_entries = 0;
  int64_t n_rejected = 0;
  int64_t n_bundles = 0;
  std::vector<std::pair<std::string, std::string>> rejects;  // utt id, reason
  std::vector<std::string> warnings;
  std::filesystem::path manifest_path;
};

// Extracts clean features for every annotated utterance, mixes one augmented
// variant per utterance at a uniform SNR draw, fits corpus statistics on the
// clean train split and writes bundles plus the JSONL manifest.
PreprocessSummary preprocess(const PreprocessOptions& opts);

// --- dataset ------------------------------------------------------------------

struct VarianceTargets {
  std::vector<int64_t> duration;
  std::vector<float> log_duration;  // log(d + 1)
  std::vector<float> pitch;         // phone means of normalized clean pitch
  std::vector<float> energy;        // phone means of scaled clean energy
  // Alternative pitch domain (pitch_target_domain == "raw_hz"): phone means
  // of the raw contour mapped onto [0, 1] over the F0 search band.
  std::vector<float> pitch_hz;
};

// Phone-averaged clean targets over the ground-truth duration spans.
VarianceTargets compute_variance_targets(const ManifestEntry& entry,
                                         const std::vector<float>& pitch_norm,
                                         const std::vector<float>& energy_scaled,
                                         const std::vector<float>* pitch_hz_scaled = nullptr);

struct Utterance {
  const ManifestEntry* entry = nullptr;
  Tensor clean_mel;  // [T x n_mels], also the clean decoding target
  std::vector<float> clean_pitch_norm;
  std::vector<float> clean_energy_scaled;
  model::EncoderFeatures clean_features;
  model::EncoderFeatures aug_features;
  bool has_aug = false;
  VarianceTargets targets;
};

class Dataset {
 public:
  explicit Dataset(const std::filesystem::path& manifest_path);
  const Manifest& manifest() const { return manifest_; }
  const std::vector<Utterance>& utterances() const { return utterances_; }
  // Entry indices whose speaker belongs to the split ("train" by default
  // covers speakers not listed anywhere).
  std::vector<int64_t> split_indices(const std::string& split) const;

 private:
  Manifest manifest_;
  std::vector<Utterance> utterances_;
};

// --- batching -------------------------------------------------------------------

// Rectangular padded batch with validity masks. The encoder-side features of
// each item are the clean or the augmented variant, chosen by a seeded coin
// flip (the augmentation label); target-side features are always clean.
struct Batch {
  int64_t size = 0;
  int64_t max_phones = 0;
  int64_t max_frames = 0;
  int64_t n_mels = 80;
  std::vector<int64_t> utt_index;
  std::vector<int> labels;  // 0 original, 1 augmented
  std::vector<std::string> speaker_ids;

  std::vector<int64_t> phones;      // [B x maxN]
  std::vector<uint8_t> phone_mask;  // [B x maxN]
  std::vector<float> enc_mel;       // [B x maxT x n_mels]
  std::vector<int> enc_pitch_bins;  // [B x maxT]
  std::vector<int> enc_energy_bins; // [B x maxT]
  std::vector<uint8_t> frame_mask;  // [B x maxT]
  std::vector<float> target_mel;    // [B x maxT x n_mels], clean
  std::vector<int64_t> durations;   // [B x maxN]
  std::vector<float> log_dur_target;  // [B x maxN]
  std::vector<float> pitch_target;    // [B x maxN]
  std::vector<float> pitch_hz_target; // [B x maxN] (raw_hz domain)
  std::vector<float> energy_target;   // [B x maxN]

  int64_t item_phone_count(int64_t i) const;
  int64_t item_frame_count(int64_t i) const;
  std::vector<int64_t> item_phone_ids(int64_t i) const;
  std::vector<int64_t> item_durations(int64_t i) const;
  Tensor item_enc_mel(int64_t i) const;
  Tensor item_target_mel(int64_t i) const;
  std::vector<int> item_pitch_bins(int64_t i) const;
  std::vector<int> item_energy_bins(int64_t i) const;
  std::vector<float> item_log_dur_target(int64_t i) const;
  std::vector<float> item_pitch_target(int64_t i) const;
  std::vector<float> item_pitch_hz_target(int64_t i) const;
  std::vector<float> item_energy_target(int64_t i) const;
};

Batch make_batch(const Dataset& data, const std::vector<int64_t>& indices,
                 uint64_t seed, int64_t step, float augment_probability);

// --- training --------------------------------------------------------------------

struct TrainConfig {
  int64_t batch_size = 16;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-9;
  double lr_dim_scale = 256.0;  // warm-up operates on this dimension scale
  int64_t warmup_steps = 4000;
  double grad_clip = 1.0;
  uint64_t seed = 0;
  float augment_probability = 0.5f;
  bool noise_modeling = true;
  float grl_lambda = 1.0f;
  int64_t grl_warmup_steps = 0;  // 0 disables the lambda ramp

  void validate() const;
};

struct NormStats {
  int sample_rate = 22050;
  int filter_length = 1024;
  int win_length = 1024;
  int hop_length = 256;
  double energy_min = 0.0;
  double energy_max = 1.0;
  std::map<std::string, SpeakerStats> pitch_stats;

  static NormStats from_header(const ManifestHeader& h);
  dsp::FeatureConfig feature_config(int n_mels) const;
};

class Trainer {
 public:
  Trainer(model::StylerModel& model, TrainConfig cfg, const Dataset& data);

  // One optimizer step over a prepared batch; returns the batch-mean
  // breakdown (also appended per item to last_item_losses()).
  objectives::LossBreakdown train_step(const Batch& batch);
  // Pulls the deterministic next batch for the current step and trains on it.
  objectives::LossBreakdown step();

  Batch next_batch() const;
  double learning_rate(int64_t step) const;
  float effective_grl_lambda(int64_t step) const;

  int64_t steps_done() const { return step_; }
  void set_steps_done(int64_t s);
  nn::Adam& optimizer() { return adam_; }
  const TrainConfig& config() const { return cfg_; }
  const std::vector<objectives::LossBreakdown>& last_item_losses() const {
    return item_losses_;
  }

 private:
  struct ItemGraph {
    ad::Var mel_clean, duration, pitch, energy, mel_noisy, aug;  // scalars
    ad::Var total;
  };
  ItemGraph forward_item(nn::Ctx& ctx, const Batch& batch, int64_t i, int64_t step);

  model::StylerModel& model_;
  TrainConfig cfg_;
  const Dataset& data_;
  nn::Adam adam_;
  nn::NoamSchedule schedule_;
  int64_t step_ = 0;
  std::vector<int64_t> train_indices_;
  std::vector<objectives::LossBreakdown> item_losses_;
};

// --- checkpoints ---------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const model::StylerModel& m,
                     const nn::Adam& adam, int64_t step, const NormStats& stats);

struct CheckpointInfo {
  model::ModelConfig config;
  NormStats stats;
  int64_t step = 0;
};

// Header only (to construct a matching model before restoring).
CheckpointInfo peek_checkpoint(const std::filesystem::path& path);

// Restores parameters, buffers and (when adam is non-null) optimizer moments
// into an already constructed model. Every expected tensor must be present
// with the right shape; the first mismatch is named in the error.
CheckpointInfo load_checkpoint(const std::filesystem::path& path,
                               model::StylerModel& m, nn::Adam* adam);

// --- synthesis glue -------------------------------------------------------------------

class Synthesizer {
 public:
  explicit Synthesizer(const std::filesystem::path& checkpoint_path);

  model::StylerModel& model() { return *model_; }
  const NormStats& stats() const { return stats_; }
  const model::ModelConfig& config() const { return model_->config(); }

  std::vector<int64_t> phones_to_ids(const std::vector<std::string>& symbols) const;

  // Extracts encoder features from a reference recording. Pitch is
  // normalized with the training stats when the speaker is known, otherwise
  // with the utterance's own voiced statistics.
  model::EncoderFeatures features_from_audio(const std::filesystem::path& wav_path,
                                             const std::string& speaker_hint = "");

  struct Request {
    std::vector<std::string> phone_symbols;
    std::map<model::Factor, std::filesystem::path> refs;
    std::string speaker_id;
    std::filesystem::path speaker_vector_file;  // STYF with tensor "embedding"
    std::set<model::Factor> masks;
    bool render_noise = false;
  };
  model::StylerModel::SynthesisOutput synthesize(const Request& req);

 private:
  std::unique_ptr<model::StylerModel> model_;
  NormStats stats_;
  std::map<std::string, model::EncoderFeatures> feature_cache_;
};

}  // namespace pipeline
}  // namespace styler

#endif  // STYLER_PIPELINE_HPP_
