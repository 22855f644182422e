// styler/model.hpp

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

#ifndef STYLER_MODEL_HPP_
#define STYLER_MODEL_HPP_

#include <atomic>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "styler/nn.hpp"

namespace styler {
namespace model {

// The six style factors. Text is a factor like the audio-derived ones.
enum class Factor { Text, Duration, Pitch, Speaker, Energy, Noise };

const char* factor_name(Factor f);
Factor factor_from_name(const std::string& name);  // InvalidInput on unknown
const std::vector<Factor>& all_factors();
const std::vector<Factor>& audio_factors();  // duration, pitch, energy, noise

struct ModelConfig {
  // Symbol and speaker inventories; sizes derive the embedding tables.
  std::vector<std::string> symbols;
  std::vector<std::string> speakers;

  int64_t hidden_dim = 256;
  int64_t text_fft_blocks = 2;
  int64_t text_heads = 4;
  int64_t decoder_fft_blocks = 4;
  int64_t decoder_heads = 4;
  int64_t fft_conv_filter = 1024;
  int64_t fft_conv_kernel1 = 9;
  int64_t fft_conv_kernel2 = 1;

  int64_t conv_dim_duration = 256;
  int64_t conv_dim_noise = 256;
  int64_t conv_dim_pitch = 320;
  int64_t conv_dim_energy = 320;
  int64_t conv_kernel = 5;
  int64_t conv_layers = 3;
  int64_t groupnorm_groups = 16;

  int64_t blstm_layers = 2;
  int64_t blstm_size_default = 64;   // per direction
  int64_t blstm_size_duration = 80;  // per direction

  int64_t text_bottleneck_dim = 4;
  int64_t n_bins = 256;
  int64_t n_mels = 80;

  int64_t speaker_dim = 256;
  std::string speaker_provider = "lookup";  // "lookup" | "import"

  float dropout = 0.1f;
  float predictor_dropout = 0.5f;
  int64_t predictor_kernel = 3;

  std::string pitch_target_domain = "normalized";  // "normalized" | "raw_hz"
  int64_t max_duration_frames = 300;  // per-phone cap at inference

  int64_t vocab_size() const { return static_cast<int64_t>(symbols.size()); }
  int64_t n_speakers() const { return static_cast<int64_t>(speakers.size()); }
  int64_t blstm_size(Factor f) const;
  int64_t conv_dim(Factor f) const;
  int64_t bottleneck_width(Factor f) const { return 2 * blstm_size(f); }

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);

  // Reduced-width variant for fast runs; hidden must be a multiple of 16.
  static ModelConfig desk_scale(int64_t hidden);
};

// The per-utterance latent sequences. `speaker` is length-independent
// ([1 x hidden]); `pitch_down` is the channel bottleneck the pitch predictor
// consumes alongside the speaker injection.
struct StyleEncodings {
  ad::Var text;        // [N x hidden]
  ad::Var text_down;   // [N x text_bottleneck_dim]
  ad::Var duration;    // [N x hidden]
  ad::Var pitch_down;  // [N x 2*blstm_size]
  ad::Var pitch;       // [N x hidden]
  ad::Var energy;      // [N x hidden]
  ad::Var noise;       // [N x hidden]
  ad::Var speaker;     // [1 x hidden]
};

// Encoder-side acoustic features of one utterance.
struct EncoderFeatures {
  Tensor mel;                    // [T x n_mels]
  std::vector<int> pitch_bins;   // [T], quantized speaker-normalized contour
  std::vector<int> energy_bins;  // [T], quantized scaled energy
};

struct SpeakerRef {
  std::optional<std::string> id;
  std::optional<Tensor> vector;  // external embedding, [speaker_dim]
};

class StylerModel {
 public:
  StylerModel(ModelConfig cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& store() { return store_; }
  const nn::ParamStore& store() const { return store_; }

  // --- encoders -----------------------------------------------------------
  ad::Var encode_text(nn::Ctx& ctx, const std::vector<int64_t>& phones);

  struct FactorEncoding {
    ad::Var down;  // [N x 2*blstm_size]
    ad::Var up;    // [N x hidden]
  };
  // Mel input drives the duration and noise encoders; quantized pitch/energy
  // enter through a bin embedding. The encoders see only audio features and
  // the phone count, never phone identities.
  FactorEncoding encode_audio_factor(nn::Ctx& ctx, Factor f, const Tensor& mel,
                                     int64_t n_phones);
  FactorEncoding encode_audio_factor(nn::Ctx& ctx, Factor f,
                                     const std::vector<int>& bins,
                                     int64_t n_phones);

  // Resolves a speaker id (lookup/import table) or an external vector, then
  // projects to hidden width. Same id always yields the same vector within a
  // checkpoint.
  ad::Var get_speaker_encoding(const SpeakerRef& ref);
  void import_speaker_table(const Tensor& table);  // [n_speakers x speaker_dim]

  StyleEncodings encode(nn::Ctx& ctx, const std::vector<int64_t>& phones,
                        const EncoderFeatures& features, const SpeakerRef& speaker);

  // Returns a copy with the named encoding replaced by zeros of the same
  // shape (pitch masks both the bottleneck and the up-projected encoding).
  static StyleEncodings mask_encoding(const StyleEncodings& enc, Factor f);

  // --- predictors -----------------------------------------------------------
  // Rank-limited text path: hidden -> text_bottleneck_dim -> hidden, one pair
  // per predictor. `down_out` receives the bottleneck intermediate.
  ad::Var project_text(Factor which, const ad::Var& z_t, ad::Var* down_out = nullptr);
  ad::Var predict_duration(nn::Ctx& ctx, const ad::Var& z_d, const ad::Var& z_t);
  // Speaker encoding is injected into both the bottleneck and the
  // re-up-projected pitch encoding (shared up-projection weights).
  ad::Var predict_pitch(nn::Ctx& ctx, const ad::Var& z_p_down, const ad::Var& z_t,
                        const ad::Var& z_s);
  ad::Var predict_energy(nn::Ctx& ctx, const ad::Var& z_e, const ad::Var& z_t);

  enum class VarianceKind { Pitch, Energy };
  // Bin-quantized embedding of predictor outputs (inference) or clean
  // targets (teacher forcing); values are clamped to [0, 1] first.
  ad::Var embed_variance(const std::vector<float>& values, VarianceKind kind);

  // --- adversarial heads ------------------------------------------------------
  // The noise encoder never carries an augmentation head.
  const std::vector<Factor>& dat_factors() const;
  ad::Var classify_augmentation(nn::Ctx& ctx, Factor f, const ad::Var& z);
  ad::Var classify_augmentation_grl(nn::Ctx& ctx, Factor f, const ad::Var& z,
                                    float lambda);

  // --- decoder ---------------------------------------------------------------
  ad::Var assemble_decoder_input(const ad::Var& z_t, const ad::Var& pitch_emb,
                                 const ad::Var& energy_emb, const ad::Var& z_s);
  ad::Var decode_clean(nn::Ctx& ctx, const ad::Var& summed,
                       const std::vector<int64_t>& durations);
  // Residual decoding: every non-noise encoding entering this pass is
  // gradient-detached; decoder weights are shared with the clean pass.
  ad::Var decode_noisy(nn::Ctx& ctx, const ad::Var& summed,
                       const std::vector<int64_t>& durations, const ad::Var& z_n);
  int64_t decoder_invocations() const { return decoder_calls_.load(); }

  // --- inference ---------------------------------------------------------------
  struct SynthesisInputs {
    std::vector<int64_t> phones;
    std::map<Factor, EncoderFeatures> refs;  // per unmasked audio factor
    SpeakerRef speaker;
    std::set<Factor> masks;
    bool render_noise = false;
  };
  struct SynthesisOutput {
    Tensor mel;        // noisy-rendered when requested, else the clean mel
    Tensor clean_mel;  // always the clean decoding
    std::vector<int64_t> durations;
    std::vector<float> pitch;         // per phone, [0, 1]
    std::vector<float> energy;        // per phone, [0, 1]
    std::vector<float> frame_pitch;   // duration-expanded (plots)
    std::vector<float> frame_energy;  // duration-expanded (plots)
  };
  SynthesisOutput synthesize(const SynthesisInputs& inputs);

  // round(exp(x)) clamped to [0, max_frames].
  static int64_t duration_frames_from_log(float log_value, int64_t max_frames);

 private:
  struct AudioEncoder {
    bool quantized_input = false;
    nn::EmbeddingTable bins;
    std::vector<nn::Conv1dLayer> convs;
    std::vector<nn::GroupNormLayer> norms;
    nn::BiLstm lstm;
    nn::Linear up;
  };
  struct Predictor {
    nn::Linear text_down, text_up;
    std::vector<nn::Conv1dLayer> convs;
    std::vector<nn::LayerNormLayer> lns;
    nn::Linear out;
  };
  struct DatHead {
    nn::Linear fc1;
    nn::LayerNormLayer ln;
    nn::Linear fc2;
  };

  AudioEncoder& audio_encoder(Factor f);
  Predictor& predictor(Factor f);
  DatHead& dat_head(Factor f);
  FactorEncoding run_audio_encoder(nn::Ctx& ctx, AudioEncoder& enc,
                                   const ad::Var& frames, int64_t n_phones);
  ad::Var up_project(AudioEncoder& enc, const ad::Var& down) const;
  ad::Var predictor_trunk(nn::Ctx& ctx, Predictor& p, const ad::Var& input);
  ad::Var decode_core(nn::Ctx& ctx, const ad::Var& frames);
  ad::Var zeros(int64_t rows, int64_t cols) const;

  ModelConfig cfg_;
  nn::ParamStore store_;

  nn::EmbeddingTable text_emb_;
  std::vector<nn::FftBlock> text_blocks_;
  AudioEncoder enc_duration_, enc_pitch_, enc_energy_, enc_noise_;

  ad::Var speaker_table_;
  nn::Linear speaker_proj_;
  std::map<std::string, int64_t> speaker_index_;

  Predictor pred_duration_, pred_pitch_, pred_energy_;
  nn::Linear pitch_spk_down_, pitch_spk_up_;
  nn::EmbeddingTable varemb_pitch_, varemb_energy_;

  DatHead dat_duration_, dat_pitch_, dat_energy_;

  std::vector<nn::FftBlock> decoder_blocks_;
  nn::Linear dec_out_;
  std::atomic<int64_t> decoder_calls_ = 0;
};

// Sum of two-class cross-entropies over the per-factor augmentation logits.
ad::Var adversarial_loss(const std::vector<ad::Var>& logits_per_factor, int label);

}  // namespace model
}  // namespace styler

#endif  // STYLER_MODEL_HPP_
